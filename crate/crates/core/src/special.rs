//! Small numerical helpers shared across modules.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

const TABLE_LEN: usize = 16_384;

fn table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // statrs is exact-table below 171 and Lanczos above; both are ~1 ulp.
        (0..TABLE_LEN)
            .map(|k| statrs::function::factorial::ln_factorial(k as u64))
            .collect()
    })
}

/// `ln(x!)`, table lookup for small arguments.
#[inline]
pub fn ln_factorial(x: u64) -> f64 {
    if (x as usize) < TABLE_LEN {
        table()[x as usize]
    } else {
        ln_gamma(x as f64 + 1.0)
    }
}

/// `ln(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Streaming log-sum-exp accumulator with a running maximum.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSum {
    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.scaled += (log_term - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Binomial coefficient `C(d, 2)`.
#[inline]
pub fn pairs(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

/// Mean and sample standard deviation (n - 1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}
