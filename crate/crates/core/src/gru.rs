//! Gated recurrent unit over the columns of a `N × T` input.
//!
//! ```text
//! R_t = σ(W_R·[H_{t−1}, z_t] + b_R)
//! U_t = σ(W_U·[H_{t−1}, z_t] + b_U)
//! H̃_t = tanh(W_H·[R_t ⊙ H_{t−1}, z_t] + h_H)
//! H_t = U_t ⊙ H_{t−1} + (1 − U_t) ⊙ H̃_t
//! ```
//!
//! `U_t` gates the *old* state. Weight matrices are `g × (g + N)` with the
//! first `g` columns acting on the hidden state. `H_0 = 0`.

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, sigmoid, tanh_act, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_r: DenseMatrix,
    pub w_u: DenseMatrix,
    pub w_h: DenseMatrix,
    pub b_r: DenseMatrix,
    pub b_u: DenseMatrix,
    pub b_h: DenseMatrix,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = DenseMatrix::zeros(hidden, hidden + input);
        let b = DenseMatrix::zeros(hidden, 1);
        GruParams {
            w_r: w.clone(),
            w_u: w.clone(),
            w_h: w,
            b_r: b.clone(),
            b_u: b.clone(),
            b_h: b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_r.rows()
    }

    pub fn input(&self) -> usize {
        self.w_r.cols() - self.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.hidden();
        let shape = self.w_r.shape();
        for w in [&self.w_u, &self.w_h] {
            if w.shape() != shape {
                return Err(Error::ShapeMismatch {
                    op: "gru weights",
                    left: shape,
                    right: w.shape(),
                });
            }
        }
        for b in [&self.b_r, &self.b_u, &self.b_h] {
            if b.shape() != (g, 1) {
                return Err(Error::ShapeMismatch {
                    op: "gru biases",
                    left: (g, 1),
                    right: b.shape(),
                });
            }
        }
        if shape.1 <= g {
            return Err(Error::Invalid("gru weights have no input columns".into()));
        }
        Ok(())
    }
}

/// Everything one step needs for its reverse pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub h: Vec<f64>,
}

/// Per-step states of one sequence, `t = 1..T`.
#[derive(Debug, Clone)]
pub struct HiddenTrace {
    pub steps: Vec<StepCache>,
}

impl HiddenTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_hidden(&self) -> &[f64] {
        &self.steps.last().expect("non-empty trace").h
    }
}

/// `out = W·[a, b] + bias` without materializing the concatenation.
#[inline]
fn affine(w: &DenseMatrix, bias: &DenseMatrix, a: &[f64], b: &[f64], out: &mut [f64]) {
    let split = a.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = w.row(i);
        let (wa, wb) = row.split_at(split);
        *o = bias.get(i, 0) + dot(wa, a) + dot(wb, b);
    }
}

pub fn gru_cell_forward(z: &[f64], h_prev: &[f64], p: &GruParams) -> Result<(Vec<f64>, StepCache)> {
    let g = p.hidden();
    if z.len() != p.input() || h_prev.len() != g {
        return Err(Error::ShapeMismatch {
            op: "gru_cell_forward",
            left: (h_prev.len(), z.len()),
            right: (g, p.input()),
        });
    }
    let mut r = vec![0.0; g];
    let mut u = vec![0.0; g];
    affine(&p.w_r, &p.b_r, h_prev, z, &mut r);
    affine(&p.w_u, &p.b_u, h_prev, z, &mut u);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));
    u.iter_mut().for_each(|v| *v = sigmoid(*v));
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut h_tilde = vec![0.0; g];
    affine(&p.w_h, &p.b_h, &rh, z, &mut h_tilde);
    h_tilde.iter_mut().for_each(|v| *v = tanh_act(*v));
    let h: Vec<f64> = (0..g)
        .map(|i| u[i] * h_prev[i] + (1.0 - u[i]) * h_tilde[i])
        .collect();
    let cache = StepCache {
        h_prev: h_prev.to_vec(),
        z: z.to_vec(),
        r,
        u,
        h_tilde,
        h: h.clone(),
    };
    Ok((h, cache))
}

/// Runs the cell over every column of `z` from `H_0 = 0`; returns `H_T`.
pub fn gru_sequence_forward(z: &DenseMatrix, p: &GruParams) -> Result<(Vec<f64>, HiddenTrace)> {
    if z.cols() == 0 {
        return Err(Error::Invalid("gru over an empty sequence".into()));
    }
    if z.rows() != p.input() {
        return Err(Error::ShapeMismatch {
            op: "gru_sequence_forward",
            left: z.shape(),
            right: (p.input(), z.cols()),
        });
    }
    let mut h = vec![0.0; p.hidden()];
    let mut steps = Vec::with_capacity(z.cols());
    for t in 0..z.cols() {
        let (next, cache) = gru_cell_forward(&z.col_to_vec(t), &h, p)?;
        h = next;
        steps.push(cache);
    }
    Ok((h, HiddenTrace { steps }))
}

/// Backpropagation through time from `∂L/∂H_T`.
///
/// Returns `∂L/∂Z` (`N × T`) and parameter gradients shaped like `p`.
pub fn gru_backward(grad_ht: &[f64], trace: &HiddenTrace, p: &GruParams) -> Result<(DenseMatrix, GruParams)> {
    let mut grads = GruParams::zeros(p.input(), p.hidden());
    let mut grad_z = DenseMatrix::zeros(p.input(), trace.len());
    gru_backward_into(grad_ht, trace, p, &mut grads, Some(&mut grad_z))?;
    Ok((grad_z, grads))
}

/// Accumulating form of [`gru_backward`].
pub fn gru_backward_into(
    grad_ht: &[f64],
    trace: &HiddenTrace,
    p: &GruParams,
    grads: &mut GruParams,
    mut grad_z: Option<&mut DenseMatrix>,
) -> Result<()> {
    let g = p.hidden();
    let n = p.input();
    let bad_trace = trace
        .steps
        .first()
        .map_or(true, |s| s.h.len() != g || s.z.len() != n);
    if grad_ht.len() != g || bad_trace {
        return Err(Error::ShapeMismatch {
            op: "gru_backward",
            left: (grad_ht.len(), trace.len()),
            right: (g, n),
        });
    }
    if let Some(gz) = grad_z.as_deref() {
        if gz.shape() != (n, trace.len()) {
            return Err(Error::ShapeMismatch {
                op: "gru_backward grad_z",
                left: gz.shape(),
                right: (n, trace.len()),
            });
        }
    }

    let mut dh = grad_ht.to_vec();
    let steps = trace.len();
    let mut dh_prev = vec![0.0; g];
    let mut d_rh = vec![0.0; g];
    let mut dz = vec![0.0; n];
    // pre-activation gradients and R ⊙ H_prev per step; weight gradients are
    // accumulated row by row after the sweep, which keeps each row in cache
    let mut d_pre_h = vec![0.0; steps * g];
    let mut d_pre_r = vec![0.0; steps * g];
    let mut d_pre_u = vec![0.0; steps * g];
    let mut rh = vec![0.0; steps * g];

    for (t, s) in trace.steps.iter().enumerate().rev() {
        let span = t * g..(t + 1) * g;
        let (dph, dpr, dpu, rh_t) = (
            &mut d_pre_h[span.clone()],
            &mut d_pre_r[span.clone()],
            &mut d_pre_u[span.clone()],
            &mut rh[span],
        );
        // H_t = U ⊙ H_prev + (1 − U) ⊙ H̃
        for i in 0..g {
            let d_htilde = dh[i] * (1.0 - s.u[i]);
            let d_u = dh[i] * (s.h_prev[i] - s.h_tilde[i]);
            dh_prev[i] = dh[i] * s.u[i];
            dph[i] = d_htilde * (1.0 - s.h_tilde[i] * s.h_tilde[i]);
            dpu[i] = d_u * s.u[i] * (1.0 - s.u[i]);
            rh_t[i] = s.r[i] * s.h_prev[i];
        }
        dz.iter_mut().for_each(|v| *v = 0.0);
        d_rh.iter_mut().for_each(|v| *v = 0.0);

        // candidate: W_H · [R ⊙ H_prev, z]
        for (i, &d) in dph.iter().enumerate() {
            if d != 0.0 {
                let (w_h, w_z) = p.w_h.row(i).split_at(g);
                axpy(d, w_h, &mut d_rh);
                axpy(d, w_z, &mut dz);
            }
        }
        for i in 0..g {
            dh_prev[i] += d_rh[i] * s.r[i];
            let d_r = d_rh[i] * s.h_prev[i];
            dpr[i] = d_r * s.r[i] * (1.0 - s.r[i]);
        }

        // gates: W_R, W_U · [H_prev, z]
        for (w_mat, d_pre) in [(&p.w_r, &*dpr), (&p.w_u, &*dpu)] {
            for (i, &d) in d_pre.iter().enumerate() {
                if d != 0.0 {
                    let (w_h, w_z) = w_mat.row(i).split_at(g);
                    axpy(d, w_h, &mut dh_prev);
                    axpy(d, w_z, &mut dz);
                }
            }
        }

        if let Some(gz) = grad_z.as_deref_mut() {
            for j in 0..n {
                let v = gz.get(j, t) + dz[j];
                gz.set(j, t, v);
            }
        }
        std::mem::swap(&mut dh, &mut dh_prev);
    }

    // (gradient, bias gradient, pre-activation grads, acts on R ⊙ H_prev)
    let targets = [
        (&mut grads.w_h, &mut grads.b_h, &d_pre_h, true),
        (&mut grads.w_r, &mut grads.b_r, &d_pre_r, false),
        (&mut grads.w_u, &mut grads.b_u, &d_pre_u, false),
    ];
    for (gw, gb, d_pre, on_rh) in targets {
        for i in 0..g {
            let (gw_h, gw_z) = gw.row_mut(i).split_at_mut(g);
            let mut bias = 0.0;
            for (t, s) in trace.steps.iter().enumerate() {
                let d = d_pre[t * g + i];
                if d != 0.0 {
                    let state = if on_rh { &rh[t * g..(t + 1) * g] } else { &s.h_prev[..] };
                    axpy(d, state, gw_h);
                    axpy(d, &s.z, gw_z);
                    bias += d;
                }
            }
            let b = gb.get(i, 0);
            gb.set(i, 0, b + bias);
        }
    }
    Ok(())
}
