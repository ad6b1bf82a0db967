//! Plot data: CSV tables with a header row and gnuplot scripts that read
//! them.

use std::path::{Path, PathBuf};

/// A named output file held in memory until written.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// CSV text from a header and rows of preformatted fields.
pub fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn csv_artifact(name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Artifact {
    Artifact { name: name.into(), bytes: csv_text(header, rows) }
}

/// `(x, value)` samples of a curve.
pub fn curve(name: &str, xs: impl IntoIterator<Item = f64>, f: impl Fn(f64) -> f64) -> Artifact {
    csv_artifact(name, &["x", "value"], xs.into_iter().map(|x| vec![num(x), num(f(x))]))
}

/// `(x, y, value)` on an `n × n` grid of `[x0, x1] × [y0, y1]`.
pub fn slice(name: &str, n: usize, xr: (f64, f64), yr: (f64, f64), f: impl Fn(f64, f64) -> f64) -> Artifact {
    let at = |r: (f64, f64), k: usize| r.0 + (r.1 - r.0) * k as f64 / (n.max(2) - 1) as f64;
    let rows = (0..n).flat_map(|i| {
        let f = &f;
        (0..n).map(move |j| {
            let (x, y) = (at(xr, i), at(yr, j));
            vec![num(x), num(y), num(f(x, y))]
        })
    });
    csv_artifact(name, &["x", "y", "value"], rows)
}

/// gnuplot script plotting each curve CSV as lines and each slice CSV as a
/// heat map.
pub fn gnuplot_script(name: &str, curves: &[(&str, &str)], slices: &[(&str, &str)]) -> Artifact {
    let mut s = String::from("set datafile separator ','\nset key off\n");
    for (file, title) in curves {
        let stem = file.trim_end_matches(".csv");
        s += &format!(
            "set terminal pngcairo size 800,500\nset output '{stem}.png'\nset title '{title}'\n\
             plot '{file}' using 1:2 skip 1 with lines\n"
        );
    }
    for (file, title) in slices {
        let stem = file.trim_end_matches(".csv");
        s += &format!(
            "set terminal pngcairo size 700,600\nset output '{stem}.png'\nset title '{title}'\nset view map\n\
             splot '{file}' using 1:2:3 skip 1 with points pointtype 5 pointsize 0.6 palette\nunset view\n"
        );
    }
    Artifact { name: name.into(), bytes: s.into_bytes() }
}

/// Writes artifacts into `dir`, creating it; errors carry the path.
pub fn write_all(dir: &Path, arts: &[Artifact]) -> Result<Vec<PathBuf>, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    arts.iter()
        .map(|a| {
            let p = dir.join(&a.name);
            std::fs::write(&p, &a.bytes).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_slice_has_zero_values() {
        let a = slice("s.csv", 5, (0.0, 1.0), (0.0, 1.0), |_, _| 0.0);
        let text = String::from_utf8(a.bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,value"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 25);
        assert!(rows.iter().all(|l| l.ends_with(",0.0")));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1e-300, -2.5e17, 1.0 / 3.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn write_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, b"x").unwrap();
        let e = write_all(&file.join("sub"), &[Artifact { name: "a".into(), bytes: vec![] }]).unwrap_err();
        assert!(e.contains("sub"), "{e}");
    }
}
