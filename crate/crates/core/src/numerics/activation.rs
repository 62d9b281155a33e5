/// `max(x, 0)`.
#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Subgradient of [`relu`]; zero at the origin.
#[inline]
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Logistic function, evaluated on the side that cannot overflow `exp`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh_act(x: f64) -> f64 {
    x.tanh()
}
