use crate::{Error, Result};

/// Largest relative disagreement between an analytic gradient and central
/// differences.
///
/// `f` maps a flat parameter vector to `(loss, gradient)`. The relative error
/// at a coordinate is `|analytic − numeric| / max(|analytic|, |numeric|, 1e-12)`.
/// `coords` restricts the check to a subset of coordinates; `None` checks all.
pub fn grad_check<F>(mut f: F, params: &[f64], eps: f64, coords: Option<&[usize]>) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!(
            "grad_check perturbation {eps} outside [1e-7, 1e-3]"
        )));
    }
    let (loss, analytic) = f(params)?;
    let (again, _) = f(params)?;
    if loss.to_bits() != again.to_bits() {
        return Err(Error::Numerical(format!(
            "forward is not deterministic: {loss} then {again}"
        )));
    }
    if analytic.len() != params.len() {
        return Err(Error::Internal(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + eps;
        let (up, _) = f(&probe)?;
        probe[i] = orig - eps;
        let (down, _) = f(&probe)?;
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
