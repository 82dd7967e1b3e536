//! Central-difference verification of the analytic gradients.

use crate::error::Result;
use crate::model::{ModelWeights, TENSOR_NAMES};
use crate::tensor::Image;
use crate::train::tape::{
    backward, forward_with_frozen, forward_with_tape, ClampAdjoint, TapeConfig,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub unroll: usize,
    pub step: f64,
    /// Denominator floor for the relative error, so near-zero gradients
    /// are compared absolutely.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            unroll: 2,
            step: 1e-5,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: &'static str,
    pub compared: usize,
    pub excluded: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
    pub compared: usize,
    /// Parameters whose ±step evaluations straddle a ReLU, clamp or |·| kink.
    pub excluded: usize,
}

impl GradCheckReport {
    pub fn excluded_fraction(&self) -> f64 {
        self.excluded as f64 / (self.compared + self.excluded).max(1) as f64
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares every analytic gradient entry with a central difference.
///
/// The correlation planes are frozen at their unperturbed values during the
/// perturbed evaluations, matching the stop-gradient used by the backward
/// pass. A parameter is excluded when the branch pattern (ReLU signs, clamp
/// activity, L1 signs) differs between the −step, base and +step evaluations.
pub fn grad_check(
    weights: &ModelWeights,
    sample: (&Image, &Image),
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let tape_cfg = TapeConfig {
        unroll: cfg.unroll,
        clamp_adjoint: ClampAdjoint::Hard,
    };
    let batch = vec![(sample.0.clone(), sample.1.clone())];
    let (_, mut tape) = forward_with_tape(&batch, weights, &tape_cfg)?;
    let frozen = tape.corr_fields();
    let base_sig = tape.branch_signature();
    let analytic = backward(&mut tape)?;

    let eval = |w: &ModelWeights| -> Result<(f64, u64)> {
        let (loss, t) = forward_with_frozen(&batch, w, &tape_cfg, Some(&frozen))?;
        Ok((loss, t.branch_signature()))
    };

    let mut probe = weights.clone();
    let mut report = GradCheckReport {
        tensors: Vec::new(),
        max_rel_err: 0.0,
        compared: 0,
        excluded: 0,
    };
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        let grad = analytic.tensors()[ti].data().to_vec();
        let mut check = TensorCheck {
            name,
            compared: 0,
            excluded: 0,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for (i, &g) in grad.iter().enumerate() {
            let orig = probe.tensors()[ti].data()[i];
            probe.tensors_mut()[ti].data_mut()[i] = orig + cfg.step;
            let (plus, sig_p) = eval(&probe)?;
            probe.tensors_mut()[ti].data_mut()[i] = orig - cfg.step;
            let (minus, sig_m) = eval(&probe)?;
            probe.tensors_mut()[ti].data_mut()[i] = orig;
            if sig_p != base_sig || sig_m != base_sig {
                check.excluded += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            check.compared += 1;
            check.max_abs_err = check.max_abs_err.max((g - numeric).abs());
            check.max_rel_err = check
                .max_rel_err
                .max(relative_error(g, numeric, cfg.abs_floor));
        }
        report.compared += check.compared;
        report.excluded += check.excluded;
        report.max_rel_err = report.max_rel_err.max(check.max_rel_err);
        report.tensors.push(check);
    }
    Ok(report)
}
