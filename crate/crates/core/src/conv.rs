//! Depthwise 1-D convolution over the time axis: one kernel and one bias per
//! feature, stride 1, zero columns padded on both ends so the output keeps
//! the input's length, followed by ReLU.

use crate::error::{Error, Result};
use crate::numerics::{relu, relu_grad, DenseMatrix};

pub const DEFAULT_KERNEL_SIZE: usize = 3;

/// Per-feature kernels (`N × k`, row `n` is `W⁽ⁿ⁾`) and biases (`N × 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernels: DenseMatrix,
    pub biases: DenseMatrix,
}

impl ConvParams {
    pub fn zeros(n_features: usize, kernel_size: usize) -> Self {
        ConvParams {
            kernels: DenseMatrix::zeros(n_features, kernel_size),
            biases: DenseMatrix::zeros(n_features, 1),
        }
    }

    pub fn new(kernels: DenseMatrix, biases: DenseMatrix) -> Result<Self> {
        if biases.shape() != (kernels.rows(), 1) {
            return Err(Error::ShapeMismatch {
                op: "conv params",
                left: kernels.shape(),
                right: biases.shape(),
            });
        }
        validate_kernel_size(kernels.cols())?;
        Ok(ConvParams { kernels, biases })
    }

    pub fn n_features(&self) -> usize {
        self.kernels.rows()
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.cols()
    }

    /// Zero-padding width on each side.
    pub fn pad(&self) -> usize {
        (self.kernel_size() - 1) / 2
    }
}

pub fn validate_kernel_size(k: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::Invalid(format!("kernel size must be odd and positive, got {k}")));
    }
    Ok(())
}

/// Input with `pad` zero columns on each side of the time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedJourney {
    padded: DenseMatrix,
    pad: usize,
}

impl PaddedJourney {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.padded
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Original length `T`.
    pub fn len(&self) -> usize {
        self.padded.cols() - 2 * self.pad
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops the boundary columns.
    pub fn strip(&self) -> DenseMatrix {
        self.padded.col_range(self.pad, self.pad + self.len())
    }
}

/// Zero-vector padding for a kernel of size 3 (one column each side).
pub fn pad_journey(x: &DenseMatrix) -> Result<PaddedJourney> {
    pad_journey_width(x, 1)
}

pub fn pad_journey_width(x: &DenseMatrix, pad: usize) -> Result<PaddedJourney> {
    if x.cols() == 0 {
        return Err(Error::Invalid("cannot pad an empty journey".into()));
    }
    let mut padded = DenseMatrix::zeros(x.rows(), x.cols() + 2 * pad);
    for r in 0..x.rows() {
        padded.row_mut(r)[pad..pad + x.cols()].copy_from_slice(x.row(r));
    }
    Ok(PaddedJourney { padded, pad })
}

/// Saved forward state: the padded input and pre-activations.
#[derive(Debug, Clone)]
pub struct ConvCache {
    input: PaddedJourney,
    pre: DenseMatrix,
}

impl ConvCache {
    pub fn pre_activation(&self) -> &DenseMatrix {
        &self.pre
    }
}

/// `z[n, t] = ReLU(Σₖ X′[n, t + k] · W[n, k] + b[n])`, `t = 0..T`.
pub fn conv_forward(xp: &PaddedJourney, p: &ConvParams) -> Result<(DenseMatrix, ConvCache)> {
    let (n, width) = xp.padded.shape();
    let k = p.kernel_size();
    if n != p.n_features() || xp.pad != p.pad() {
        return Err(Error::ShapeMismatch {
            op: "conv_forward",
            left: (n, xp.pad),
            right: (p.n_features(), p.pad()),
        });
    }
    let t_len = width - 2 * xp.pad;
    let mut pre = DenseMatrix::zeros(n, t_len);
    let mut out = DenseMatrix::zeros(n, t_len);
    for f in 0..n {
        let w = p.kernels.row(f);
        let b = p.biases.get(f, 0);
        let x = xp.padded.row(f);
        let pre_row = pre.row_mut(f);
        for (t, slot) in pre_row.iter_mut().enumerate() {
            *slot = x[t..t + k].iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
        }
        for (o, &v) in out.row_mut(f).iter_mut().zip(pre.row(f)) {
            *o = relu(v);
        }
    }
    Ok((
        out,
        ConvCache {
            input: xp.clone(),
            pre,
        },
    ))
}

/// Gradients of a convolution layer.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    /// Gradient w.r.t. the unpadded input, `N × T`.
    pub input: DenseMatrix,
    pub kernels: DenseMatrix,
    pub biases: DenseMatrix,
}

/// Reverse pass of [`conv_forward`] with `relu'(0) = 0`.
pub fn conv_backward(grad_z: &DenseMatrix, cache: &ConvCache, p: &ConvParams) -> Result<ConvGrads> {
    let mut grads = ConvGrads {
        input: DenseMatrix::zeros(cache.pre.rows(), cache.pre.cols()),
        kernels: p.kernels.zeros_like(),
        biases: p.biases.zeros_like(),
    };
    conv_backward_into(grad_z, cache, p, &mut grads.kernels, &mut grads.biases, Some(&mut grads.input))?;
    Ok(grads)
}

/// Accumulating form of [`conv_backward`]; adds into the given buffers.
pub fn conv_backward_into(
    grad_z: &DenseMatrix,
    cache: &ConvCache,
    p: &ConvParams,
    grad_kernels: &mut DenseMatrix,
    grad_biases: &mut DenseMatrix,
    grad_input: Option<&mut DenseMatrix>,
) -> Result<()> {
    if grad_z.shape() != cache.pre.shape() || p.n_features() != cache.pre.rows() {
        return Err(Error::ShapeMismatch {
            op: "conv_backward",
            left: grad_z.shape(),
            right: cache.pre.shape(),
        });
    }
    let (n, t_len) = grad_z.shape();
    let k = p.kernel_size();
    let pad = cache.input.pad;
    let mut grad_input = grad_input;
    for f in 0..n {
        let x = cache.input.padded.row(f);
        let w = p.kernels.row(f);
        let gk = grad_kernels.row_mut(f);
        let mut gb = 0.0;
        for t in 0..t_len {
            let d = grad_z.get(f, t) * relu_grad(cache.pre.get(f, t));
            if d == 0.0 {
                continue;
            }
            gb += d;
            for j in 0..k {
                gk[j] += d * x[t + j];
            }
            if let Some(gi) = grad_input.as_deref_mut() {
                for j in 0..k {
                    // padded column t + j maps to input column t + j − pad
                    let col = t + j;
                    if col >= pad && col < pad + t_len {
                        let v = gi.get(f, col - pad) + d * w[j];
                        gi.set(f, col - pad, v);
                    }
                }
            }
        }
        let cur = grad_biases.get(f, 0);
        grad_biases.set(f, 0, cur + gb);
    }
    Ok(())
}
