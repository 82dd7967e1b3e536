//! The outer loop: repeated block applications with alternating dilation and
//! optional confidence-based early stopping.

use std::fmt;
use std::str::FromStr;

use crate::error::{IdfError, Result};
use crate::model::{did_forward, ModelWeights};
use crate::ops::KernelField;
use crate::tensor::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    /// Always run `max_iterations` steps.
    Fixed,
    /// Stop when the mean change of the kernel centre weights drops below κ.
    KernelDic,
    /// Stop when the mean absolute change of the estimate drops below κ.
    ImageDic,
}

impl fmt::Display for StopMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopMode::Fixed => "fixed",
            StopMode::KernelDic => "kernel-dic",
            StopMode::ImageDic => "image-dic",
        })
    }
}

impl FromStr for StopMode {
    type Err = IdfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "fixed" => Ok(StopMode::Fixed),
            "kernel-dic" => Ok(StopMode::KernelDic),
            "image-dic" => Ok(StopMode::ImageDic),
            other => Err(IdfError::Config(format!("unknown stop mode `{other}`"))),
        }
    }
}

/// How the per-position centre differences are reduced to one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConfidenceForm {
    /// `|Σ_j Δ_j| / M`; positive and negative changes cancel.
    #[default]
    AbsOfSum,
    /// `Σ_j |Δ_j| / M`.
    SumOfAbs,
}

impl fmt::Display for ConfidenceForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfidenceForm::AbsOfSum => "abs-of-sum",
            ConfidenceForm::SumOfAbs => "sum-of-abs",
        })
    }
}

impl FromStr for ConfidenceForm {
    type Err = IdfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "abs-of-sum" => Ok(ConfidenceForm::AbsOfSum),
            "sum-of-abs" => Ok(ConfidenceForm::SumOfAbs),
            other => Err(IdfError::Config(format!(
                "unknown confidence form `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceLevel {
    FinalOnly,
    Kernels,
    Full,
}

impl fmt::Display for TraceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceLevel::FinalOnly => "final-only",
            TraceLevel::Kernels => "kernels",
            TraceLevel::Full => "full",
        })
    }
}

impl FromStr for TraceLevel {
    type Err = IdfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "final-only" => Ok(TraceLevel::FinalOnly),
            "kernels" => Ok(TraceLevel::Kernels),
            "full" => Ok(TraceLevel::Full),
            other => Err(IdfError::Config(format!("unknown trace level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub max_iterations: usize,
    pub stop_mode: StopMode,
    pub kappa: f64,
    pub confidence: ConfidenceForm,
    pub trace_level: TraceLevel,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_iterations: 10,
            stop_mode: StopMode::KernelDic,
            kappa: 0.015,
            confidence: ConfidenceForm::AbsOfSum,
            trace_level: TraceLevel::FinalOnly,
        }
    }
}

impl EngineConfig {
    pub fn fixed(max_iterations: usize) -> Self {
        EngineConfig {
            max_iterations,
            stop_mode: StopMode::Fixed,
            ..EngineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(IdfError::InvalidArgument(
                "max_iterations must be ≥ 1".into(),
            ));
        }
        if self.kappa.is_nan() || self.kappa < 0.0 {
            return Err(IdfError::InvalidArgument(format!(
                "kappa must be ≥ 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Odd iterations look wide (dilation 2), even iterations look close (dilation 1).
pub fn dilation_for(t: usize) -> usize {
    if t % 2 == 1 {
        2
    } else {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxReached,
    ConfidenceConverged,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxReached => "max_reached",
            StopReason::ConfidenceConverged => "confidence_converged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IterationRecord {
    pub t: usize,
    pub dilation: usize,
    pub confidence: Option<f64>,
    pub degenerate_kernels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResult {
    pub estimate: Image,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    /// One score per iteration from t = 2 on.
    pub confidence_history: Vec<f64>,
    pub degenerate_kernel_count: usize,
    pub iterations: Vec<IterationRecord>,
    /// Estimate after each iteration (trace level `full`).
    pub estimates: Vec<Image>,
    /// Centre-tap plane of each iteration's kernels (trace level `kernels` or `full`).
    pub kernel_centers: Vec<Vec<f64>>,
}

/// Spatially averaged change of the kernel centre weights between two iterations.
pub fn confidence_score(k_t: &KernelField, k_prev: &KernelField) -> Result<f64> {
    confidence_score_with(k_t, k_prev, ConfidenceForm::AbsOfSum)
}

pub fn confidence_score_with(
    k_t: &KernelField,
    k_prev: &KernelField,
    form: ConfidenceForm,
) -> Result<f64> {
    if k_t.dims() != k_prev.dims() || k_t.kernel_size() != k_prev.kernel_size() {
        return Err(IdfError::Shape(format!(
            "kernel fields differ: K={} over {:?} vs K={} over {:?}",
            k_t.kernel_size(),
            k_t.dims(),
            k_prev.kernel_size(),
            k_prev.dims()
        )));
    }
    let diffs = k_t
        .center_plane()
        .iter()
        .zip(k_prev.center_plane())
        .map(|(a, b)| a - b);
    let m = k_t.positions() as f64;
    Ok(match form {
        ConfidenceForm::AbsOfSum => diffs.sum::<f64>().abs() / m,
        ConfidenceForm::SumOfAbs => diffs.map(f64::abs).sum::<f64>() / m,
    })
}

fn mean_abs_change(a: &Image, b: &Image) -> f64 {
    let n = a.data().len() as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n
}

pub fn denoise(img: &Image, w: &ModelWeights, cfg: &EngineConfig) -> Result<DenoiseResult> {
    cfg.validate()?;
    let mut prev2: Option<Image> = None;
    let mut prev = img.clone();
    let mut prev_kernels: Option<KernelField> = None;
    let mut result = DenoiseResult {
        estimate: img.clone(),
        iterations_used: 0,
        stop_reason: StopReason::MaxReached,
        confidence_history: Vec::new(),
        degenerate_kernel_count: 0,
        iterations: Vec::new(),
        estimates: Vec::new(),
        kernel_centers: Vec::new(),
    };

    for t in 1..=cfg.max_iterations {
        let dilation = dilation_for(t);
        let (next, kernels) = did_forward(&prev, prev2.as_ref(), w, dilation)?;
        let score = match (&prev_kernels, cfg.stop_mode) {
            (None, _) => None,
            (Some(_), StopMode::ImageDic) => Some(mean_abs_change(&next, &prev)),
            (Some(pk), _) => Some(confidence_score_with(&kernels, pk, cfg.confidence)?),
        };
        result.iterations_used = t;
        result.degenerate_kernel_count += kernels.degenerate_count();
        result.iterations.push(IterationRecord {
            t,
            dilation,
            confidence: score,
            degenerate_kernels: kernels.degenerate_count(),
        });
        if let Some(s) = score {
            result.confidence_history.push(s);
        }
        if cfg.trace_level >= TraceLevel::Kernels {
            result.kernel_centers.push(kernels.center_plane().to_vec());
        }
        if cfg.trace_level == TraceLevel::Full {
            result.estimates.push(next.clone());
        }

        prev2 = Some(std::mem::replace(&mut prev, next));
        prev_kernels = Some(kernels);

        let converged = cfg.stop_mode != StopMode::Fixed && score.is_some_and(|s| s < cfg.kappa);
        if converged {
            result.stop_reason = StopReason::ConfidenceConverged;
            break;
        }
    }
    result.estimate = prev;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationSummary {
    pub count: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    pub converged: usize,
    pub max_reached: usize,
}

pub fn iteration_stats(results: &[DenoiseResult]) -> Result<IterationSummary> {
    if results.is_empty() {
        return Err(IdfError::InvalidArgument(
            "iteration_stats needs at least one result".into(),
        ));
    }
    let iters = results.iter().map(|r| r.iterations_used);
    let converged = results
        .iter()
        .filter(|r| r.stop_reason == StopReason::ConfidenceConverged)
        .count();
    Ok(IterationSummary {
        count: results.len(),
        mean: iters.clone().sum::<usize>() as f64 / results.len() as f64,
        min: iters.clone().min().unwrap_or(0),
        max: iters.max().unwrap_or(0),
        converged,
        max_reached: results.len() - converged,
    })
}
