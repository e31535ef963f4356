//! Smooth acyclicity measure `h(B) = tr[(I + α B⊙B)^p] - p` and its
//! gradient, per time slice and summed over time stamps.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::CoefficientSet;

/// `(I + α B⊙B)` and its `(p-1)`-th power.
fn powers(b: &DMatrix<f64>, alpha: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = b.nrows();
    let mut e = b.component_mul(b) * alpha;
    for i in 0..p {
        e[(i, i)] += 1.0;
    }
    let mut pow = DMatrix::identity(p, p);
    for _ in 1..p {
        pow = &pow * &e;
    }
    (e, pow)
}

/// `tr[(I + α B⊙B)^p] - p`. Zero exactly when the support of `B` is acyclic
/// (all off-diagonal powers along acyclic paths vanish from the trace).
pub fn h_value(b: &DMatrix<f64>, alpha: f64) -> f64 {
    let p = b.nrows();
    let (e, pow) = powers(b, alpha);
    // tr(E * P) without forming the product
    let tr: f64 = (0..p)
        .map(|i| (0..p).map(|j| e[(i, j)] * pow[(j, i)]).sum::<f64>())
        .sum();
    tr - p as f64
}

/// `h(B)` together with `∂h/∂B = p · [(I + α B⊙B)^{p-1}]^T ⊙ 2αB`.
pub fn h_value_and_grad(b: &DMatrix<f64>, alpha: f64) -> (f64, DMatrix<f64>) {
    let p = b.nrows();
    let (e, pow) = powers(b, alpha);
    let tr: f64 = (0..p)
        .map(|i| (0..p).map(|j| e[(i, j)] * pow[(j, i)]).sum::<f64>())
        .sum();
    let grad = pow.transpose().component_mul(b) * (2.0 * alpha * p as f64);
    (tr - p as f64, grad)
}

/// `h1 = Σ_t |h(B_t)|` over the given time stamps.
pub fn h1(coef: &CoefficientSet, times: &[f64], alpha: f64) -> Result<f64> {
    let mut total = 0.0;
    for &t in times {
        total += h_value(&coef.b_at(t)?, alpha).abs();
    }
    Ok(total)
}

/// Gradient of `h1` with respect to `gamma` (same shape as `gamma`).
///
/// The absolute value contributes `sign(h)`, with 0 at exactly zero.
pub fn h1_gradient(coef: &CoefficientSet, times: &[f64], alpha: f64) -> Result<DMatrix<f64>> {
    let p = coef.p();
    let mut grad = DMatrix::zeros(coef.gamma.nrows(), p);
    for &t in times {
        let f = coef.basis.eval(t)?;
        let b = crate::model::expand_coefficients(&coef.gamma, &f);
        let (h, g) = h_value_and_grad(&b, alpha);
        let s = sign(h);
        if s == 0.0 {
            continue;
        }
        for (k, &fk) in f.iter().enumerate() {
            if fk != 0.0 {
                let mut blk = grad.rows_mut(k * p, p);
                blk += &g * (s * fk);
            }
        }
    }
    Ok(grad)
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
