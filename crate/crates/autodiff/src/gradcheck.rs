use rand::seq::SliceRandom;
use rand::Rng;

use crate::params::{GradMap, ParamStore};
use crate::Result;

/// Central-difference step used by the checker.
pub const FD_STEP: f64 = 1e-5;

/// Both |analytic| and |numeric| below this are treated as zero agreement;
/// relative error on two vanishing numbers is noise.
const ZERO_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates where the two central-difference estimates (step and
    /// half step) disagreed: the function is locally non-smooth there (e.g.
    /// an FD interval straddling a rectifier kink), so finite differences
    /// are no oracle for those coordinates.
    pub skipped_nonsmooth: usize,
    pub max_rel_err: f64,
    /// (param name, flat index) of the worst component.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// The half-step estimate must agree with the full-step one to this
/// relative factor; smooth functions agree to O(step^2), kinks disagree
/// at O(1).
const FD_CONSISTENCY: f64 = 1e-3;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ZERO_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compare analytic gradients against central finite differences of `f`.
///
/// `f` must be a deterministic scalar function of the store (fix any RNG
/// draws outside). With `sample` set, only that many randomly chosen
/// components are perturbed; full sweeps over large models are prohibitively
/// many forward passes.
pub fn grad_check<F, R>(
    mut f: F,
    params: &mut ParamStore,
    analytic: &GradMap,
    step: f64,
    sample: Option<(usize, &mut R)>,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
    R: Rng,
{
    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, g) in analytic {
        for i in 0..g.numel() {
            coords.push((name.clone(), i));
        }
    }
    if let Some((n, rng)) = sample {
        coords.shuffle(rng);
        coords.truncate(n);
    }

    let mut report = GradCheckReport {
        checked: 0,
        skipped_nonsmooth: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for (name, i) in coords {
        let original = params.get(&name)?.data()[i];
        let mut central = |h: f64| -> Result<f64> {
            params.get_mut(&name)?.data_mut()[i] = original + h;
            let plus = f(params)?;
            params.get_mut(&name)?.data_mut()[i] = original - h;
            let minus = f(params)?;
            params.get_mut(&name)?.data_mut()[i] = original;
            Ok((plus - minus) / (2.0 * h))
        };
        let numeric = central(step)?;
        let half = central(step / 2.0)?;
        if rel_err(numeric, half) > FD_CONSISTENCY {
            report.skipped_nonsmooth += 1;
            continue;
        }

        let a = analytic[&name].data()[i];
        let err = rel_err(a, numeric);
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = Some((name.clone(), i));
        }
    }
    Ok(report)
}
