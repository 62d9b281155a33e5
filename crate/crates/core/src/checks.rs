//! End-to-end finite-difference check of the model gradients.

use serde::Serialize;

use crate::error::Result;
use crate::model::{self, ClassWeights, ModelParams, Variant};
use crate::numerics::gradcheck::{finite_diff_grad, max_relative_error};
use crate::numerics::{DenseMatrix, Rng};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: &'static str,
    pub len: usize,
    pub max_rel_err: f64,
}

impl TensorCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSetup {
    pub variant: Variant,
    pub n: usize,
    pub t: usize,
    pub hidden: usize,
    pub kernel_size: usize,
    pub seed: u64,
    pub eps: f64,
}

impl Default for CheckSetup {
    fn default() -> Self {
        CheckSetup {
            variant: Variant::Full,
            n: 5,
            t: 7,
            hidden: 8,
            kernel_size: 3,
            seed: 1,
            eps: DEFAULT_EPS,
        }
    }
}

/// A random model with non-zero biases and one fully observed random
/// journey, so no ReLU sits exactly on its kink.
pub fn random_instance(s: &CheckSetup) -> Result<(ModelParams, DenseMatrix)> {
    let mut p = ModelParams::init(s.n, s.hidden, s.kernel_size, s.seed, s.variant)?;
    let mut rng = Rng::derive(s.seed, 0xC4EC);
    for (name, t) in p.tensors_mut() {
        if name.contains(".b") || name.ends_with("h_h") {
            for v in t.as_mut_slice() {
                *v = rng.uniform(-0.5, 0.5);
            }
        }
    }
    let x = DenseMatrix::from_fn(s.n, s.t, |_, _| rng.uniform(-1.0, 1.0));
    Ok((p, x))
}

/// Max relative error between analytic and central-difference gradients,
/// per parameter tensor.
pub fn model_gradient_check(s: &CheckSetup) -> Result<Vec<TensorCheck>> {
    let (p, x) = random_instance(s)?;
    let label = 1;
    let weights = ClassWeights(0.7, 1.3);
    let (_, cache) = model::model_forward(&x, &p)?;
    let analytic = model::model_backward(&p, &cache, label, weights)?;
    let mut out = Vec::new();
    for (k, (name, grad)) in analytic.tensors().into_iter().enumerate() {
        let theta = p.tensors()[k].1.as_slice().to_vec();
        let mut probe = p.clone();
        let numeric = finite_diff_grad(
            |point| {
                probe.tensors_mut()[k].1.as_mut_slice().copy_from_slice(point);
                model::predict(&x, &probe).map_or(f64::NAN, |pred| model::patient_loss(&pred, label, weights))
            },
            &theta,
            s.eps,
        )?;
        out.push(TensorCheck {
            name,
            len: theta.len(),
            max_rel_err: max_relative_error(grad.as_slice(), &numeric),
        });
    }
    Ok(out)
}
