use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub passed: bool,
}

/// Relative error with a magnitude floor so near-zero gradients compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Checks every coordinate of `x`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    grad_check_coords(f, x, &coords, h, tol)
}

/// Checks the listed coordinates of `x` only; `f` must build a scalar.
pub fn grad_check_coords<F>(
    f: F,
    x: &Tensor,
    coords: &[usize],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |t: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(t.clone());
        let y = f(&mut tape, v)?;
        Ok(tape.value(y).item())
    };

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let y = f(&mut tape, xv)?;
    tape.backward(y)?;
    let full = tape
        .grad(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape().to_vec()));

    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    let (mut worst, mut worst_index) = (0.0f64, 0usize);
    for &c in coords {
        if c >= x.numel() {
            return Err(Error::InvalidArgument(format!("coordinate {c} out of range")));
        }
        let mut plus = x.clone();
        plus.data_mut()[c] += h;
        let mut minus = x.clone();
        minus.data_mut()[c] -= h;
        let num = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        let ana = full.data()[c];
        let err = relative_error(ana, num);
        if err > worst || !err.is_finite() {
            worst = err;
            worst_index = c;
        }
        analytic.push(ana);
        numeric.push(num);
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        worst_index,
        analytic,
        numeric,
        passed: worst < tol,
    })
}
