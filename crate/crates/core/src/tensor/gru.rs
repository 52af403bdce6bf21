use rand::Rng;

use super::{gemm, Tensor};
use crate::error::{Error, Result};

/// GRU weights with gates stacked in `r, z, n` order:
/// `w: [3d x i]`, `u: [3d x d]`, `b: [3d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

/// Gradient buffers share the parameter layout.
pub type GruGrads = GruParams;

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Tensor::zeros(&[3 * hidden, input]),
            u: Tensor::zeros(&[3 * hidden, hidden]),
            b: Tensor::zeros(&[3 * hidden]),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero bias.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: Tensor::uniform(&[3 * hidden, input], 1.0 / (input as f64).sqrt(), rng),
            u: Tensor::uniform(&[3 * hidden, hidden], 1.0 / (hidden as f64).sqrt(), rng),
            b: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn input(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    fn check(&self, x: usize, h: usize) -> Result<()> {
        let d = self.hidden();
        if self.w.rows() != 3 * d || self.u.rows() != 3 * d || self.b.len() != 3 * d {
            return Err(Error::ShapeMismatch("inconsistent GRU parameters".into()));
        }
        if x != self.input() || h != d {
            return Err(Error::ShapeMismatch(format!(
                "GRU expects x[{}], h[{d}], got x[{x}], h[{h}]",
                self.input()
            )));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Applies the gate nonlinearities given `gx = W x + b` and `gh = U h`.
/// Writes `h'` and the gate activations.
#[allow(clippy::too_many_arguments)]
fn gates(
    gx: &[f64],
    gh: &[f64],
    h: &[f64],
    out: &mut [f64],
    r: &mut [f64],
    z: &mut [f64],
    n: &mut [f64],
) {
    let d = h.len();
    for j in 0..d {
        r[j] = sigmoid(gx[j] + gh[j]);
        z[j] = sigmoid(gx[d + j] + gh[d + j]);
        n[j] = (gx[2 * d + j] + r[j] * gh[2 * d + j]).tanh();
        out[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
    }
}

/// Backward through [`gates`]. Writes `dgx`, `dgh` and the direct `dh`
/// contribution `dh' ∘ z`.
#[allow(clippy::too_many_arguments)]
fn gates_backward(
    dout: &[f64],
    h: &[f64],
    r: &[f64],
    z: &[f64],
    n: &[f64],
    ghn: &[f64],
    dgx: &mut [f64],
    dgh: &mut [f64],
    dh: &mut [f64],
) {
    let d = h.len();
    for j in 0..d {
        let dn = dout[j] * (1.0 - z[j]);
        let dz = dout[j] * (h[j] - n[j]);
        dh[j] = dout[j] * z[j];
        let dan = dn * (1.0 - n[j] * n[j]);
        let dr = dan * ghn[j];
        let dar = dr * r[j] * (1.0 - r[j]);
        let daz = dz * z[j] * (1.0 - z[j]);
        dgx[j] = dar;
        dgx[d + j] = daz;
        dgx[2 * d + j] = dan;
        dgh[j] = dar;
        dgh[d + j] = daz;
        dgh[2 * d + j] = dan * r[j];
    }
}

/// Values saved by [`gru_cell_forward`].
#[derive(Debug, Clone)]
pub struct GruCache {
    x: Vec<f64>,
    h: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    ghn: Vec<f64>,
}

pub fn gru_cell_forward(p: &GruParams, x: &[f64], h: &[f64]) -> Result<(Vec<f64>, GruCache)> {
    p.check(x.len(), h.len())?;
    let d = h.len();
    let mut gx = p.b.data().to_vec();
    gemm(1, x.len(), 3 * d, 1.0, x, false, p.w.data(), true, 1.0, &mut gx);
    let mut gh = vec![0.0; 3 * d];
    gemm(1, d, 3 * d, 1.0, h, false, p.u.data(), true, 0.0, &mut gh);
    let (mut out, mut r, mut z, mut n) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    gates(&gx, &gh, h, &mut out, &mut r, &mut z, &mut n);
    let cache = GruCache {
        x: x.to_vec(),
        h: h.to_vec(),
        r,
        z,
        n,
        ghn: gh[2 * d..].to_vec(),
    };
    Ok((out, cache))
}

/// One recurrent update `h' = (1 - z) ∘ n + z ∘ h`.
pub fn gru_cell(p: &GruParams, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    Ok(gru_cell_forward(p, x, h)?.0)
}

/// Accumulates parameter gradients and returns `(dx, dh)`.
pub fn gru_cell_backward(
    p: &GruParams,
    cache: &GruCache,
    dout: &[f64],
    grads: &mut GruGrads,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = p.hidden();
    let i = p.input();
    if dout.len() != d {
        return Err(Error::ShapeMismatch("GRU upstream gradient".into()));
    }
    let (mut dgx, mut dgh, mut dh) = (vec![0.0; 3 * d], vec![0.0; 3 * d], vec![0.0; d]);
    gates_backward(
        dout, &cache.h, &cache.r, &cache.z, &cache.n, &cache.ghn, &mut dgx, &mut dgh, &mut dh,
    );
    gemm(3 * d, 1, i, 1.0, &dgx, false, &cache.x, false, 1.0, grads.w.data_mut());
    gemm(3 * d, 1, d, 1.0, &dgh, false, &cache.h, false, 1.0, grads.u.data_mut());
    grads
        .b
        .data_mut()
        .iter_mut()
        .zip(&dgx)
        .for_each(|(g, v)| *g += v);
    let mut dx = vec![0.0; i];
    gemm(1, 3 * d, i, 1.0, &dgx, false, p.w.data(), false, 0.0, &mut dx);
    gemm(1, 3 * d, d, 1.0, &dgh, false, p.u.data(), false, 1.0, &mut dh);
    Ok((dx, dh))
}

/// Inference-only update of `n` independent states: `x: [n x i]`,
/// `h: [n x d]`, returns `h': [n x d]`.
pub fn gru_batch_step(p: &GruParams, x: &[f64], h: &[f64], n: usize) -> Result<Vec<f64>> {
    let (i, d) = (p.input(), p.hidden());
    p.check(i, d)?;
    if x.len() != n * i || h.len() != n * d {
        return Err(Error::ShapeMismatch("GRU batch step".into()));
    }
    let mut gx = Vec::with_capacity(n * 3 * d);
    for _ in 0..n {
        gx.extend_from_slice(p.b.data());
    }
    gemm(n, i, 3 * d, 1.0, x, false, p.w.data(), true, 1.0, &mut gx);
    let mut gh = vec![0.0; n * 3 * d];
    gemm(n, d, 3 * d, 1.0, h, false, p.u.data(), true, 0.0, &mut gh);
    let mut out = vec![0.0; n * d];
    let (mut r, mut z, mut nn) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for t in 0..n {
        let g = t * 3 * d..(t + 1) * 3 * d;
        gates(
            &gx[g.clone()],
            &gh[g],
            &h[t * d..(t + 1) * d],
            &mut out[t * d..(t + 1) * d],
            &mut r,
            &mut z,
            &mut nn,
        );
    }
    Ok(out)
}

/// Saved activations of a whole unrolled sequence, each `[T x d]`.
#[derive(Debug, Clone)]
pub struct GruSequence {
    steps: usize,
    hidden: usize,
    /// Output hidden state per step.
    pub outputs: Vec<f64>,
    prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    ghn: Vec<f64>,
    resets: Vec<bool>,
}

impl GruSequence {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn output(&self, t: usize) -> &[f64] {
        &self.outputs[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn last(&self) -> &[f64] {
        self.output(self.steps - 1)
    }
}

/// Unrolls the cell over `x: [T x i]` from `h0`. When `resets[t]` is set
/// the state entering step `t` is zeroed.
pub fn gru_sequence_forward(
    p: &GruParams,
    x: &[f64],
    h0: &[f64],
    resets: &[bool],
) -> Result<GruSequence> {
    let steps = resets.len();
    let (i, d) = (p.input(), p.hidden());
    p.check(if steps == 0 { i } else { x.len() / steps }, h0.len())?;
    if x.len() != steps * i {
        return Err(Error::ShapeMismatch("GRU sequence input".into()));
    }
    let mut gx = Vec::with_capacity(steps * 3 * d);
    for _ in 0..steps {
        gx.extend_from_slice(p.b.data());
    }
    gemm(steps, i, 3 * d, 1.0, x, false, p.w.data(), true, 1.0, &mut gx);
    let mut seq = GruSequence {
        steps,
        hidden: d,
        outputs: vec![0.0; steps * d],
        prev: vec![0.0; steps * d],
        r: vec![0.0; steps * d],
        z: vec![0.0; steps * d],
        n: vec![0.0; steps * d],
        ghn: vec![0.0; steps * d],
        resets: resets.to_vec(),
    };
    let mut h = h0.to_vec();
    let mut gh = vec![0.0; 3 * d];
    for t in 0..steps {
        if resets[t] {
            h.iter_mut().for_each(|v| *v = 0.0);
        }
        gemm(1, d, 3 * d, 1.0, &h, false, p.u.data(), true, 0.0, &mut gh);
        let s = t * d..(t + 1) * d;
        seq.prev[s.clone()].copy_from_slice(&h);
        gates(
            &gx[t * 3 * d..(t + 1) * 3 * d],
            &gh,
            &h,
            &mut seq.outputs[s.clone()],
            &mut seq.r[s.clone()],
            &mut seq.z[s.clone()],
            &mut seq.n[s.clone()],
        );
        seq.ghn[s.clone()].copy_from_slice(&gh[2 * d..]);
        h.copy_from_slice(&seq.outputs[s]);
    }
    Ok(seq)
}

/// Backward through a sequence given `dout: [T x d]` on the outputs.
/// Accumulates parameter gradients and returns `(dx: [T x i], dh0)`.
pub fn gru_sequence_backward(
    p: &GruParams,
    seq: &GruSequence,
    x: &[f64],
    dout: &[f64],
    grads: &mut GruGrads,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (steps, i, d) = (seq.steps, p.input(), p.hidden());
    if dout.len() != steps * d || x.len() != steps * i {
        return Err(Error::ShapeMismatch("GRU sequence gradient".into()));
    }
    let mut dgx = vec![0.0; steps * 3 * d];
    let mut dgh = vec![0.0; steps * 3 * d];
    let mut carry = vec![0.0; d];
    let mut dh = vec![0.0; d];
    let mut total = vec![0.0; d];
    for t in (0..steps).rev() {
        let s = t * d..(t + 1) * d;
        for j in 0..d {
            total[j] = dout[t * d + j] + carry[j];
        }
        let g = t * 3 * d..(t + 1) * 3 * d;
        gates_backward(
            &total,
            &seq.prev[s.clone()],
            &seq.r[s.clone()],
            &seq.z[s.clone()],
            &seq.n[s.clone()],
            &seq.ghn[s],
            &mut dgx[g.clone()],
            &mut dgh[g.clone()],
            &mut dh,
        );
        if seq.resets[t] {
            carry.iter_mut().for_each(|v| *v = 0.0);
        } else {
            carry.copy_from_slice(&dh);
            gemm(1, 3 * d, d, 1.0, &dgh[g], false, p.u.data(), false, 1.0, &mut carry);
        }
    }
    gemm(3 * d, steps, i, 1.0, &dgx, true, x, false, 1.0, grads.w.data_mut());
    gemm(3 * d, steps, d, 1.0, &dgh, true, &seq.prev, false, 1.0, grads.u.data_mut());
    let db = grads.b.data_mut();
    for row in dgx.chunks_exact(3 * d) {
        db.iter_mut().zip(row).for_each(|(g, v)| *g += v);
    }
    let mut dx = vec![0.0; steps * i];
    gemm(steps, 3 * d, i, 1.0, &dgx, false, p.w.data(), false, 0.0, &mut dx);
    Ok((dx, carry))
}
