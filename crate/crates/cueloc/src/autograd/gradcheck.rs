use std::fmt;

use super::tensor::Tensor;
use crate::rng::Prng;
use crate::{Real, Result};

/// Worst observed error for one parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_err: Real,
    pub max_abs_err: Real,
}

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub total_coords: usize,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> Real {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, Real::max)
    }

    pub fn passes(&self, tolerance: Real) -> bool {
        self.max_rel_err() < tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "  {:<24} coords={:<4} max_rel_err={:.3e} max_abs_err={:.3e}",
                p.name, p.coords_checked, p.max_rel_err, p.max_abs_err
            )?;
        }
        write!(f, "  total coords checked: {}", self.total_coords)
    }
}

/// Relative-error denominator floor. Losses here are O(1) and central
/// differences resolve them to ~1e-9 absolute, so flooring the denominator
/// at 1e-2 keeps finite-difference noise orders of magnitude below any real
/// sign, scale, or indexing bug while never dividing by a vanishing
/// gradient.
const REL_FLOOR: Real = 1e-2;

/// Compare analytic gradients with central finite differences.
///
/// `eval(params, want_grads)` must run the full forward pass and return the
/// scalar loss, plus one flat gradient per parameter (in `params` order)
/// when `want_grads` is set. `coords_per_param` coordinates are sampled
/// without replacement from each tensor (all of them when the tensor is
/// smaller than that).
pub fn grad_check<F>(
    names: &[&str],
    params: &[Tensor],
    step: Real,
    coords_per_param: usize,
    rng: &mut Prng,
    mut eval: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor], bool) -> Result<(Real, Option<Vec<Vec<Real>>>)>,
{
    assert_eq!(names.len(), params.len(), "one name per parameter");
    let (_, grads) = eval(params, true)?;
    let grads = grads.expect("eval must return gradients when asked");
    assert_eq!(grads.len(), params.len(), "one gradient per parameter");

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport { params: Vec::new(), total_coords: 0 };
    for (pi, name) in names.iter().enumerate() {
        let numel = params[pi].numel();
        assert_eq!(grads[pi].len(), numel, "gradient length for {name}");
        let amount = coords_per_param.min(numel);
        let coords = rand::seq::index::sample(rng, numel, amount);
        let mut check = ParamCheck {
            name: (*name).to_string(),
            coords_checked: amount,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for ci in coords.iter() {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + step;
            let (plus, _) = eval(&work, false)?;
            work[pi].data_mut()[ci] = orig - step;
            let (minus, _) = eval(&work, false)?;
            work[pi].data_mut()[ci] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let analytic = grads[pi][ci];
            let abs = (analytic - fd).abs();
            let rel = abs / analytic.abs().max(fd.abs()).max(REL_FLOOR);
            check.max_abs_err = check.max_abs_err.max(abs);
            check.max_rel_err = check.max_rel_err.max(rel);
        }
        report.total_coords += amount;
        report.params.push(check);
    }
    Ok(report)
}
