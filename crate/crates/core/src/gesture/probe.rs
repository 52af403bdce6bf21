//! Linear read-out probes over gesture features.
//!
//! These decode what a linear model can recover from synthesized gestures;
//! they are used to check that direction information is present and that
//! the two gesture kinds are linearly separable.

use super::{GestureSequence, GESTURE_FEATURES, GESTURE_STEPS, HOLD_PHASE};
use crate::error::{Error, Result};

/// Mean of each feature over the hold phase.
pub fn hold_features(seq: &GestureSequence) -> Vec<f64> {
    let (s, e) = HOLD_PHASE;
    phase_mean(seq, s, e)
}

/// Per-feature means over the rise, hold and fall phases (3 x 95 values).
pub fn phase_features(seq: &GestureSequence) -> Vec<f64> {
    let (s, e) = HOLD_PHASE;
    let mut out = phase_mean(seq, 0, s);
    out.extend(phase_mean(seq, s, e));
    out.extend(phase_mean(seq, e, GESTURE_STEPS));
    out
}

fn phase_mean(seq: &GestureSequence, start: usize, end: usize) -> Vec<f64> {
    let n = (end - start) as f64;
    (0..GESTURE_FEATURES)
        .map(|j| (start..end).map(|t| seq.get(t, j)).sum::<f64>() / n)
        .collect()
}

/// Multi-output ridge regression with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct Ridge {
    /// `[outputs][inputs + 1]`, last column is the intercept.
    coef: Vec<Vec<f64>>,
}

impl Ridge {
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], lambda: f64) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::EmptyInput);
        }
        let d = x[0].len() + 1;
        let k = y[0].len();
        let mut gram = vec![0.0; d * d];
        let mut rhs = vec![0.0; d * k];
        let mut row = vec![0.0; d];
        for (xi, yi) in x.iter().zip(y) {
            if xi.len() + 1 != d || yi.len() != k {
                return Err(Error::ShapeMismatch("ragged probe inputs".into()));
            }
            row[..d - 1].copy_from_slice(xi);
            row[d - 1] = 1.0;
            for a in 0..d {
                for b in 0..=a {
                    gram[a * d + b] += row[a] * row[b];
                }
                for o in 0..k {
                    rhs[a * k + o] += row[a] * yi[o];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[b * d + a] = gram[a * d + b];
            }
            if a < d - 1 {
                gram[a * d + a] += lambda;
            } else {
                gram[a * d + a] += 1e-10;
            }
        }
        let chol = cholesky(&gram, d)?;
        let coef = (0..k)
            .map(|o| {
                let b: Vec<f64> = (0..d).map(|a| rhs[a * k + o]).collect();
                cholesky_solve(&chol, d, &b)
            })
            .collect();
        Ok(Self { coef })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.coef
            .iter()
            .map(|c| {
                let (w, b) = c.split_at(c.len() - 1);
                w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b[0]
            })
            .collect()
    }
}

fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let v = a[i * n + i] - s;
                if v <= 0.0 {
                    return Err(Error::ShapeMismatch("normal matrix not positive definite".into()));
                }
                l[i * n + i] = v.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    x
}

/// Decodes a pointing bearing from hold-phase features via a ridge fit to
/// `(cos β, sin β)`.
#[derive(Debug, Clone)]
pub struct BearingProbe {
    ridge: Ridge,
}

impl BearingProbe {
    pub fn fit(samples: &[(GestureSequence, f64)], lambda: f64) -> Result<Self> {
        let x: Vec<Vec<f64>> = samples.iter().map(|(g, _)| hold_features(g)).collect();
        let y: Vec<Vec<f64>> = samples.iter().map(|(_, b)| vec![b.cos(), b.sin()]).collect();
        Ok(Self {
            ridge: Ridge::fit(&x, &y, lambda)?,
        })
    }

    /// Decoded bearing in radians, `(-π, π]`.
    pub fn decode(&self, seq: &GestureSequence) -> f64 {
        let p = self.ridge.predict(&hold_features(seq));
        p[1].atan2(p[0])
    }
}

/// Absolute angular difference wrapped to `[0, π]`.
pub fn angle_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}
