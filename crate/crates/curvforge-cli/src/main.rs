use clap::{Args, Parser, Subcommand};
use curvforge::surgery_pipeline::Stage;
use curvforge_cli::{plot, run, Command, Options, Overrides, RunConfig, Status};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "curvforge", version, about = "Almost Kähler metrics of negative scalar curvature, numerically")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Profile invariants, sign pattern, PDE residual and oracle agreement of the island.
    IslandVerify(Common),
    /// Coefficient identities, Euclidean table, coefficient bounds and the modified island.
    DeformVerify {
        #[command(flatten)]
        common: Common,
        /// Run only the random-coefficient identity checks.
        #[arg(long)]
        identities: bool,
    },
    /// Net, surgery, iteration and final verdict on the torus.
    PipelineRun {
        #[command(flatten)]
        common: Common,
        /// Last stage to run: net, surgery, iterate or verdict.
        #[arg(long, default_value = "verdict")]
        stage: Stage,
    },
    /// Covering net and its checks only.
    NetBuild(Common),
    /// Closed island curvature against the jet and stencil oracles.
    OracleCompare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file merged over the bundled defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid resolution of the command's main sweep.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "curvforge-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("CURVFORGE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second initialisation cannot happen here; ignore the result
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut opts = Options::default();
    let (cmd, common) = match cli.cmd {
        Cmd::IslandVerify(c) => (Command::IslandVerify, c),
        Cmd::DeformVerify { common, identities } => {
            opts.identities = identities;
            (Command::DeformVerify, common)
        }
        Cmd::PipelineRun { common, stage } => {
            opts.stage = stage;
            (Command::PipelineRun, common)
        }
        Cmd::NetBuild(c) => (Command::NetBuild, c),
        Cmd::OracleCompare(c) => (Command::OracleCompare, c),
    };
    opts.grid = common.grid;
    let mut cfg = match RunConfig::load(common.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(Status::Config.code() as u8);
        }
    };
    cfg.apply(&Overrides { seed: common.seed });
    if opts.grid == Some(0) {
        eprintln!("config error: --grid must be positive");
        return ExitCode::from(Status::Config.code() as u8);
    }
    let out = run(cmd, &cfg, &opts);
    for (name, c) in &out.manifest.checks {
        println!("{:<24} {}", name, if c.passed { "pass" } else { "FAIL" });
    }
    if let Some(e) = &out.manifest.error {
        println!("error: {e}");
    }
    match plot::write_all(&common.out, &out.files()) {
        Ok(paths) => println!("wrote {} files to {}", paths.len(), common.out.display()),
        Err(e) => {
            eprintln!("output error: {e}");
            return ExitCode::from(Status::Fail.code() as u8);
        }
    }
    println!("{}: exit {}", cmd.name(), out.status.code());
    ExitCode::from(out.status.code() as u8)
}
