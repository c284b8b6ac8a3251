//! Joint affine calibration of raw CM and ASV scores.
//!
//! Raw countermeasure and speaker-verification scores are mapped by two
//! affine transforms, composed into the SASV LLR, and the four transform
//! parameters are learned together by logistic regression so that the
//! *composed* LLR — not each input score separately — is well calibrated at
//! the operating point given by the effective priors.
//!
//! The loss over classes `D in {bona-target, bona-nontarget, spoof-target}`
//! is
//!
//! ```text
//! sum_D  P'(D)/N_D  sum_i  softplus( -S_D * (llr_sasv_i + tau) )
//! ```
//!
//! with `S_D = +1` for the accept class and `-1` for the reject classes, and
//! `tau = log( P'(BT) / (P'(BN) + P'(ST)) )` the prior log odds under the
//! effective priors. The spoofed-impostor class is assumed absent
//! (`p_sn = 0`), matching the two-term LLR composition.
//!
//! The fit is a deterministic BFGS run with a strong-Wolfe line search,
//! started at the identity transform so the uncalibrated system is the
//! baseline the optimizer must beat. Scales are not sign-constrained: an
//! anti-correlated input score is legitimately repaired by a negative scale.

use thiserror::Error;

use crate::decision::{
    effective_priors, sasv_llr, ConditionalRejectPriors, CostModel, DecisionError, LlrPair,
    PriorModel, TrialClass,
};
use crate::math::{sigmoid, softplus};
use crate::optim::{self, MinimizeSettings, OptimError};
use crate::score_io::JoinedTrialSet;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration class {0} has no trials")]
    EmptyClass(&'static str),
    #[error("calibration parameters must be finite")]
    NonFiniteParams,
    #[error("spoofed-impostor trials carry prior mass; the two-term composition does not cover them")]
    UnsupportedSpoofNontarget,
    #[error("calibrated score overflowed for raw pair (cm={cm}, asv={asv})")]
    NonFiniteCalibratedScore { cm: f64, asv: f64 },
    #[error("objective became non-finite at parameters {params:?}")]
    NonFiniteObjective { params: CalibrationParams },
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

/// The four affine calibration parameters.
///
/// The calibrated scores are `asv_scale * asv + asv_offset` and
/// `cm_scale * cm + cm_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    pub asv_offset: f64,
    pub asv_scale: f64,
    pub cm_offset: f64,
    pub cm_scale: f64,
}

impl CalibrationParams {
    pub fn new(
        asv_offset: f64,
        asv_scale: f64,
        cm_offset: f64,
        cm_scale: f64,
    ) -> Result<CalibrationParams, CalibrationError> {
        if ![asv_offset, asv_scale, cm_offset, cm_scale]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(CalibrationError::NonFiniteParams);
        }
        Ok(CalibrationParams {
            asv_offset,
            asv_scale,
            cm_offset,
            cm_scale,
        })
    }

    /// The identity transform: offsets zero, scales one.
    pub fn identity() -> CalibrationParams {
        CalibrationParams {
            asv_offset: 0.0,
            asv_scale: 1.0,
            cm_offset: 0.0,
            cm_scale: 1.0,
        }
    }

    /// Parameter vector in gradient order `(a0, a1, c0, c1)`.
    pub fn to_array(self) -> [f64; 4] {
        [self.asv_offset, self.asv_scale, self.cm_offset, self.cm_scale]
    }

    pub fn from_array(x: [f64; 4]) -> CalibrationParams {
        CalibrationParams {
            asv_offset: x[0],
            asv_scale: x[1],
            cm_offset: x[2],
            cm_scale: x[3],
        }
    }
}

/// Raw score pairs grouped by the three calibration classes.
///
/// Every class must be populated and every score finite.
#[derive(Debug, Clone)]
pub struct CalibrationDataset {
    bona_target: Vec<LlrPair>,
    bona_nontarget: Vec<LlrPair>,
    spoof_target: Vec<LlrPair>,
}

impl CalibrationDataset {
    pub fn new(
        bona_target: Vec<LlrPair>,
        bona_nontarget: Vec<LlrPair>,
        spoof_target: Vec<LlrPair>,
    ) -> Result<CalibrationDataset, CalibrationError> {
        if bona_target.is_empty() {
            return Err(CalibrationError::EmptyClass("bona-target"));
        }
        if bona_nontarget.is_empty() {
            return Err(CalibrationError::EmptyClass("bona-nontarget"));
        }
        if spoof_target.is_empty() {
            return Err(CalibrationError::EmptyClass("spoof-target"));
        }
        Ok(CalibrationDataset {
            bona_target,
            bona_nontarget,
            spoof_target,
        })
    }

    /// Partition joined trials into the three calibration classes.
    ///
    /// Spoofed-impostor trials take no part in the fit; the count of skipped
    /// trials is returned alongside the dataset.
    pub fn from_trials(
        trials: &JoinedTrialSet,
    ) -> Result<(CalibrationDataset, usize), CalibrationError> {
        let mut bt = Vec::new();
        let mut bn = Vec::new();
        let mut st = Vec::new();
        let mut skipped = 0;
        for record in &trials.records {
            let pair = LlrPair::new(record.cm_score, record.asv_score)?;
            match record.class {
                TrialClass::BonaTarget => bt.push(pair),
                TrialClass::BonaNontarget => bn.push(pair),
                TrialClass::SpoofTarget => st.push(pair),
                TrialClass::SpoofNontarget => skipped += 1,
            }
        }
        Ok((CalibrationDataset::new(bt, bn, st)?, skipped))
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (
            self.bona_target.len(),
            self.bona_nontarget.len(),
            self.spoof_target.len(),
        )
    }

    pub fn class_pairs(&self, class: TrialClass) -> &[LlrPair] {
        match class {
            TrialClass::BonaTarget => &self.bona_target,
            TrialClass::BonaNontarget => &self.bona_nontarget,
            TrialClass::SpoofTarget => &self.spoof_target,
            TrialClass::SpoofNontarget => &[],
        }
    }
}

/// Stopping parameters for [`fit_calibration`].
#[derive(Debug, Clone, Copy)]
pub struct FitSettings {
    /// Converged when the gradient infinity-norm falls below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            gradient_tolerance: 1e-8,
            max_iterations: 1000,
        }
    }
}

/// Outcome of a calibration fit.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub params: CalibrationParams,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Accepted optimizer steps.
    pub iterations: usize,
    pub converged: bool,
    /// Gradient infinity-norm at the returned parameters.
    pub gradient_norm: f64,
    /// Objective value at the start and after every accepted step;
    /// non-increasing by construction of the line search.
    pub objective_trace: Vec<f64>,
}

/// SASV LLR composed from affine-calibrated raw scores.
///
/// Requires the spoofed-impostor conditional prior to be zero; at the
/// identity parameters this equals [`sasv_llr`] on the raw pair exactly.
pub fn corrected_sasv_llr(
    raw: &LlrPair,
    params: &CalibrationParams,
    cond: &ConditionalRejectPriors,
) -> Result<f64, CalibrationError> {
    if cond.spoof_nontarget > 0.0 {
        return Err(CalibrationError::UnsupportedSpoofNontarget);
    }
    let calibrated = LlrPair::new(
        params.cm_scale * raw.cm + params.cm_offset,
        params.asv_scale * raw.asv + params.asv_offset,
    )
    .map_err(|_| CalibrationError::NonFiniteCalibratedScore {
        cm: raw.cm,
        asv: raw.asv,
    })?;
    Ok(sasv_llr(&calibrated, cond))
}

/// Per-fit constants derived from the costs and priors.
struct ObjectiveContext {
    /// Per-class weights `P'(D) / N_D` in (BT, BN, ST) order.
    weights: [f64; 3],
    ln_q_bn: f64,
    ln_q_st: f64,
    tau: f64,
}

impl ObjectiveContext {
    fn build(
        data: &CalibrationDataset,
        costs: &CostModel,
        priors: &PriorModel,
    ) -> Result<ObjectiveContext, CalibrationError> {
        if priors.spoof_nontarget != 0.0 {
            return Err(CalibrationError::UnsupportedSpoofNontarget);
        }
        let effective = effective_priors(costs, priors)?;
        let cond = effective.conditional_reject_priors()?;
        let (n_bt, n_bn, n_st) = data.counts();
        let reject = effective.bona_nontarget + effective.spoof_target;
        Ok(ObjectiveContext {
            weights: [
                effective.bona_target / n_bt as f64,
                effective.bona_nontarget / n_bn as f64,
                effective.spoof_target / n_st as f64,
            ],
            ln_q_bn: if cond.bona_nontarget > 0.0 {
                cond.bona_nontarget.ln()
            } else {
                f64::NEG_INFINITY
            },
            ln_q_st: if cond.spoof_target > 0.0 {
                cond.spoof_target.ln()
            } else {
                f64::NEG_INFINITY
            },
            tau: (effective.bona_target / reject).ln(),
        })
    }
}

/// Objective and analytic gradient in one pass over the trials.
///
/// Gradient order is `(d/d a0, d/d a1, d/d c0, d/d c1)`. Classes are visited
/// in a fixed order and sums accumulate sequentially, keeping the evaluation
/// bit-deterministic.
fn objective_and_gradient(
    data: &CalibrationDataset,
    params: &CalibrationParams,
    ctx: &ObjectiveContext,
) -> (f64, [f64; 4]) {
    let classes: [(&[LlrPair], f64, f64); 3] = [
        (&data.bona_target, 1.0, ctx.weights[0]),
        (&data.bona_nontarget, -1.0, ctx.weights[1]),
        (&data.spoof_target, -1.0, ctx.weights[2]),
    ];
    let mut objective = 0.0;
    let mut gradient = [0.0; 4];
    for (pairs, sign, weight) in classes {
        if weight == 0.0 {
            continue;
        }
        for pair in pairs {
            let asv_cal = params.asv_scale * pair.asv + params.asv_offset;
            let cm_cal = params.cm_scale * pair.cm + params.cm_offset;
            let term_asv = ctx.ln_q_bn - asv_cal;
            let term_cm = ctx.ln_q_st - cm_cal;
            let max = term_asv.max(term_cm);
            let exp_asv = (term_asv - max).exp();
            let exp_cm = (term_cm - max).exp();
            let total = exp_asv + exp_cm;
            let llr = -(max + total.ln());
            let margin = sign * (llr + ctx.tau);
            objective += weight * softplus(-margin);

            let coeff = weight * sigmoid(-margin) * (-sign);
            let share_asv = exp_asv / total;
            let share_cm = exp_cm / total;
            gradient[0] += coeff * share_asv;
            gradient[1] += coeff * share_asv * pair.asv;
            gradient[2] += coeff * share_cm;
            gradient[3] += coeff * share_cm * pair.cm;
        }
    }
    (objective, gradient)
}

/// Effective-prior-weighted logistic loss of the composed SASV LLR.
pub fn weighted_logistic_objective(
    data: &CalibrationDataset,
    params: &CalibrationParams,
    costs: &CostModel,
    priors: &PriorModel,
) -> Result<f64, CalibrationError> {
    let ctx = ObjectiveContext::build(data, costs, priors)?;
    Ok(objective_and_gradient(data, params, &ctx).0)
}

/// Analytic gradient of [`weighted_logistic_objective`] in
/// `(a0, a1, c0, c1)` order.
pub fn gradient(
    data: &CalibrationDataset,
    params: &CalibrationParams,
    costs: &CostModel,
    priors: &PriorModel,
) -> Result<[f64; 4], CalibrationError> {
    let ctx = ObjectiveContext::build(data, costs, priors)?;
    Ok(objective_and_gradient(data, params, &ctx).1)
}

/// Fit the calibration parameters by minimizing the weighted logistic loss.
///
/// Starts at the identity transform; the final objective never exceeds the
/// initial one. When the iteration budget runs out the best parameters so
/// far are returned with `converged = false`.
pub fn fit_calibration(
    data: &CalibrationDataset,
    costs: &CostModel,
    priors: &PriorModel,
    settings: &FitSettings,
) -> Result<CalibrationResult, CalibrationError> {
    let ctx = ObjectiveContext::build(data, costs, priors)?;
    let eval = |x: &[f64; 4]| {
        let params = CalibrationParams::from_array(*x);
        objective_and_gradient(data, &params, &ctx)
    };
    let minimize_settings = MinimizeSettings {
        gradient_tolerance: settings.gradient_tolerance,
        max_iterations: settings.max_iterations,
    };
    let minimum = optim::minimize(eval, CalibrationParams::identity().to_array(), &minimize_settings)
        .map_err(|OptimError::NonFiniteStart { x }| CalibrationError::NonFiniteObjective {
            params: CalibrationParams::from_array([x[0], x[1], x[2], x[3]]),
        })?;
    debug_assert!(minimum.value <= minimum.initial_value + 1e-12);
    Ok(CalibrationResult {
        params: CalibrationParams::from_array(minimum.x),
        initial_objective: minimum.initial_value,
        final_objective: minimum.value,
        iterations: minimum.iterations,
        converged: minimum.converged,
        gradient_norm: minimum.gradient_norm,
        objective_trace: minimum.trace,
    })
}
