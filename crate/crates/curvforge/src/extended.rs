//! Sums of terms `m·e^{−λ}` whose magnitudes lie far outside the `f64`
//! exponent range.

use serde::Serialize;

/// A real number `sign·e^{ln_abs}`; zero has `sign = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ext {
    pub sign: i8,
    pub ln_abs: f64,
}

impl Ext {
    pub const ZERO: Ext = Ext { sign: 0, ln_abs: f64::NEG_INFINITY };

    pub fn from_f64(v: f64) -> Self {
        Self::scaled(v, 0.0)
    }

    /// `m·e^{−lambda}`.
    pub fn scaled(m: f64, lambda: f64) -> Self {
        if m == 0.0 {
            Self::ZERO
        } else {
            Ext { sign: if m > 0.0 { 1 } else { -1 }, ln_abs: m.abs().ln() - lambda }
        }
    }

    pub fn log10_abs(&self) -> f64 {
        self.ln_abs / std::f64::consts::LN_10
    }

    /// Nearest `f64` (may round to zero).
    pub fn to_f64(&self) -> f64 {
        self.sign as f64 * self.ln_abs.exp()
    }

    /// Total order on the reals.
    pub fn cmp_value(&self, o: &Ext) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        match self.sign.cmp(&o.sign) {
            Equal => match self.sign {
                0 => Equal,
                1 => self.ln_abs.total_cmp(&o.ln_abs),
                _ => o.ln_abs.total_cmp(&self.ln_abs),
            },
            c => c,
        }
    }

    pub fn max(self, o: Ext) -> Ext {
        if self.cmp_value(&o) == std::cmp::Ordering::Less {
            o
        } else {
            self
        }
    }
}

/// Accumulates terms `m·e^{−λ}` and sums them relative to the largest.
#[derive(Clone, Debug, Default)]
pub struct ExpSum {
    terms: Vec<(f64, f64)>,
}

/// A sum with the size of its cancellation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SumResult {
    pub value: Ext,
    /// `|Σ| / Σ|terms|`; small values mean the sign is roundoff-sensitive.
    pub cancellation: f64,
}

impl ExpSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, m: f64, lambda: f64) {
        if m != 0.0 {
            self.terms.push((m, lambda));
        }
    }

    pub fn push_ext(&mut self, e: Ext) {
        if e.sign != 0 {
            self.terms.push((e.sign as f64, -e.ln_abs));
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total(&self) -> SumResult {
        // normalise by the largest term
        let top = self.terms.iter().map(|&(m, l)| m.abs().ln() - l).fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return SumResult { value: Ext::ZERO, cancellation: 1.0 };
        }
        let (mut s, mut a) = (0.0, 0.0);
        for &(m, l) in &self.terms {
            let v = m.signum() * (m.abs().ln() - l - top).exp();
            s += v;
            a += v.abs();
        }
        SumResult { value: Ext::scaled(s, -top), cancellation: s.abs() / a }
    }
}
