use rand::Rng;

use super::{gemm, Tensor};
use crate::error::{Error, Result};

fn check_linear(w: &Tensor, b: &Tensor, inputs: usize) -> Result<(usize, usize)> {
    if w.shape().len() != 2 || b.shape() != [w.shape()[0]] || w.shape()[1] != inputs {
        return Err(Error::ShapeMismatch(format!(
            "linear W {:?}, b {:?}, input width {inputs}",
            w.shape(),
            b.shape()
        )));
    }
    Ok((w.shape()[0], w.shape()[1]))
}

/// `y = W x + b` for `W: [o x i]`.
pub fn linear_forward(w: &Tensor, b: &Tensor, x: &[f64]) -> Result<Vec<f64>> {
    linear_batch_forward(w, b, x, 1)
}

/// Accumulates `dW += dy xᵀ`, `db += dy` and returns `dx = Wᵀ dy`.
pub fn linear_backward(
    w: &Tensor,
    x: &[f64],
    dy: &[f64],
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Result<Vec<f64>> {
    Ok(linear_batch_backward(w, x, dy, 1, dw, db, true)?.unwrap_or_default())
}

/// Row-wise linear map over `n` inputs stored row-major in `x`:
/// `Y = X Wᵀ + b`, shape `[n x o]`.
pub fn linear_batch_forward(w: &Tensor, b: &Tensor, x: &[f64], n: usize) -> Result<Vec<f64>> {
    let i = if n == 0 { w.cols() } else { x.len() / n };
    let (o, i) = check_linear(w, b, i)?;
    if x.len() != n * i {
        return Err(Error::ShapeMismatch(format!("input has {} values, expected {}", x.len(), n * i)));
    }
    let mut y = Vec::with_capacity(n * o);
    for _ in 0..n {
        y.extend_from_slice(b.data());
    }
    gemm(n, i, o, 1.0, x, false, w.data(), true, 1.0, &mut y);
    Ok(y)
}

/// Backward of [`linear_batch_forward`]. Returns `dX` when `need_dx`.
pub fn linear_batch_backward(
    w: &Tensor,
    x: &[f64],
    dy: &[f64],
    n: usize,
    dw: &mut Tensor,
    db: &mut Tensor,
    need_dx: bool,
) -> Result<Option<Vec<f64>>> {
    let (o, i) = (w.rows(), w.cols());
    if x.len() != n * i || dy.len() != n * o || dw.shape() != w.shape() || db.len() != o {
        return Err(Error::ShapeMismatch("linear backward operands".into()));
    }
    gemm(o, n, i, 1.0, dy, true, x, false, 1.0, dw.data_mut());
    let dbd = db.data_mut();
    for row in dy.chunks_exact(o) {
        for (g, d) in dbd.iter_mut().zip(row) {
            *g += d;
        }
    }
    Ok(need_dx.then(|| {
        let mut dx = vec![0.0; n * i];
        gemm(n, o, i, 1.0, dy, false, w.data(), false, 0.0, &mut dx);
        dx
    }))
}

pub fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `dy` by the forward output `y` (`y > 0`).
pub fn relu_backward(y: &[f64], dy: &mut [f64]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}

pub fn embedding_lookup(table: &Tensor, id: usize) -> Result<Vec<f64>> {
    if id >= table.rows() {
        return Err(Error::IndexOutOfRange {
            index: id,
            limit: table.rows(),
        });
    }
    Ok(table.row(id).to_vec())
}

pub fn embedding_backward(grad: &mut Tensor, id: usize, dy: &[f64]) -> Result<()> {
    if id >= grad.rows() {
        return Err(Error::IndexOutOfRange {
            index: id,
            limit: grad.rows(),
        });
    }
    if dy.len() != grad.cols() {
        return Err(Error::ShapeMismatch("embedding gradient width".into()));
    }
    for (g, d) in grad.row_mut(id).iter_mut().zip(dy) {
        *g += d;
    }
    Ok(())
}

/// Softmax distribution over a small set of logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    log_probs: Vec<f64>,
    probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::EmptyInput);
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss("non-finite logits".into()));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|l| l - lse).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Ok(Self { log_probs, probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_prob(&self, a: usize) -> f64 {
        self.log_probs[a]
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, l)| p * l)
            .sum::<f64>()
    }

    /// Inverse-CDF sample from one uniform draw.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.probs.len() - 1)
    }

    /// `d log p(a) / d logits`.
    pub fn grad_log_prob(&self, a: usize) -> Vec<f64> {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| if i == a { 1.0 - p } else { -p })
            .collect()
    }

    /// `d H / d logits`.
    pub fn grad_entropy(&self) -> Vec<f64> {
        let h = self.entropy();
        self.probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, l)| -p * (l + h))
            .collect()
    }
}

/// Samples an action; returns `(index, log_prob, entropy)`.
pub fn categorical(logits: &[f64], rng: &mut impl Rng) -> Result<(usize, f64, f64)> {
    let d = Categorical::from_logits(logits)?;
    let a = d.sample(rng);
    Ok((a, d.log_prob(a), d.entropy()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_linear() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let b = Tensor::zeros(&[3]);
        assert_eq!(linear_forward(&w, &b, &[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn linear_shape_mismatch() {
        let w = Tensor::zeros(&[3, 4]);
        let b = Tensor::zeros(&[3]);
        assert!(matches!(
            linear_forward(&w, &b, &[0.0; 5]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn embedding_rows_and_range() {
        let t = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(embedding_lookup(&t, 0).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(
            embedding_lookup(&t, 3),
            Err(Error::IndexOutOfRange { index: 3, limit: 3 })
        ));
        let mut g = Tensor::zeros(&[3, 2]);
        embedding_backward(&mut g, 1, &[1.0, 1.0]).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_and_peaked_categoricals() {
        let d = Categorical::from_logits(&[0.0; 4]).unwrap();
        assert!(d.probs().iter().all(|p| (p - 0.25).abs() < 1e-15));
        assert!((d.entropy() - 4f64.ln()).abs() < 1e-14);
        let d = Categorical::from_logits(&[10.0, 0.0, 0.0, 0.0]).unwrap();
        let want = 1.0 / (1.0 + 3.0 * (-10f64).exp());
        assert!((d.probs()[0] - want).abs() < 1e-15);
        assert!(d.probs()[0] > 0.9998);
        let big = Categorical::from_logits(&[1000.0, -1000.0, 0.0, 999.0]).unwrap();
        assert!(big.probs().iter().all(|p| p.is_finite()));
        assert!(Categorical::from_logits(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[categorical(&[0.0; 4], &mut rng).unwrap().0] += 1;
        }
        for c in counts {
            assert!((c as f64 / 100_000.0 - 0.25).abs() < 0.01);
        }
    }
}
