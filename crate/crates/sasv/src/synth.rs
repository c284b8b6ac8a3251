//! Synthetic SASV trials with known ground-truth LLRs, plus deliberately
//! naive reference implementations of the swept metrics and the raw Bayes
//! decision rule for cross-checking the fast paths.
//!
//! Scores are drawn from equal-variance two-Gaussian latent models, the one
//! setting where the true LLR is an affine function of the latent draw. The
//! emitted ground-truth score *is* the exact LLR by construction: for class
//! means at plus/minus half the separation and unit variance, the LLR of a
//! latent `s` is `separation * s`. Raw scores are the ground truth passed
//! through a configurable affine corruption, so a calibration fit has an
//! exact known inverse to recover.
//!
//! Generation is deterministic and platform-independent: a ChaCha12 stream
//! cipher RNG seeded from the configured seed, with one independent stream
//! per trial class.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::calibration::{CalibrationDataset, CalibrationError};
use crate::decision::{CostModel, LlrPair, PriorModel, TrialClass};
use crate::metrics::{ADcfConfig, ClassSet, MetricsError, ScoredTrials};
use crate::score_io::{JoinedTrialSet, TrialRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
}

/// An affine score map `x -> scale * x + offset` with nonzero scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    pub fn new(scale: f64, offset: f64) -> Result<AffineMap, SynthError> {
        if !scale.is_finite() || !offset.is_finite() || scale == 0.0 {
            return Err(SynthError::InvalidConfig(format!(
                "affine map needs a finite nonzero scale and finite offset, got ({scale}, {offset})"
            )));
        }
        Ok(AffineMap { scale, offset })
    }

    pub fn identity() -> AffineMap {
        AffineMap {
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.offset == 0.0
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }

    /// The map that undoes this one.
    pub fn inverse(&self) -> AffineMap {
        AffineMap {
            scale: 1.0 / self.scale,
            offset: -self.offset / self.scale,
        }
    }
}

/// Configuration of one synthetic trial set.
///
/// Separations are the gap between the two latent class means in standard
/// deviations; corruptions are applied to the true LLRs to form raw scores.
#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_bona_target: usize,
    pub n_bona_nontarget: usize,
    pub n_spoof_target: usize,
    pub cm_separation: f64,
    pub asv_separation: f64,
    pub cm_corruption: AffineMap,
    pub asv_corruption: AffineMap,
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n_bona_target == 0 || self.n_bona_nontarget == 0 || self.n_spoof_target == 0 {
            return Err(SynthError::InvalidConfig(
                "every class needs at least one trial".into(),
            ));
        }
        for (name, sep) in [
            ("cm_separation", self.cm_separation),
            ("asv_separation", self.asv_separation),
        ] {
            if !sep.is_finite() || sep <= 0.0 {
                return Err(SynthError::InvalidConfig(format!(
                    "{name} must be a positive finite value, got {sep}"
                )));
            }
        }
        Ok(())
    }
}

/// One generated trial: raw scores plus the hidden ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrial {
    pub trial_id: String,
    pub class: TrialClass,
    pub true_cm_llr: f64,
    pub true_asv_llr: f64,
    pub raw_cm: f64,
    pub raw_asv: f64,
}

/// A generated trial set together with its generating configuration.
#[derive(Debug, Clone)]
pub struct SynthTrialSet {
    pub trials: Vec<SynthTrial>,
    pub config: SynthConfig,
}

impl SynthTrialSet {
    /// The raw scores as a joined trial set, ordered by trial id.
    pub fn to_joined(&self) -> JoinedTrialSet {
        let mut records: Vec<TrialRecord> = self
            .trials
            .iter()
            .map(|t| TrialRecord {
                trial_id: t.trial_id.clone(),
                class: t.class,
                cm_score: t.raw_cm,
                asv_score: t.raw_asv,
            })
            .collect();
        records.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
        JoinedTrialSet { records }
    }

    /// The raw score pairs grouped into the calibration classes.
    pub fn calibration_dataset(&self) -> Result<CalibrationDataset, CalibrationError> {
        let mut bt = Vec::new();
        let mut bn = Vec::new();
        let mut st = Vec::new();
        for t in &self.trials {
            let pair = LlrPair::new(t.raw_cm, t.raw_asv)?;
            match t.class {
                TrialClass::BonaTarget => bt.push(pair),
                TrialClass::BonaNontarget => bn.push(pair),
                TrialClass::SpoofTarget => st.push(pair),
                TrialClass::SpoofNontarget => {}
            }
        }
        CalibrationDataset::new(bt, bn, st)
    }

    /// Labeled trials scored by an arbitrary per-trial function.
    pub fn scored_with<F>(&self, mut score: F) -> Result<ScoredTrials, MetricsError>
    where
        F: FnMut(&SynthTrial) -> f64,
    {
        ScoredTrials::new(self.trials.iter().map(|t| (score(t), t.class)))
    }
}

/// Generate a synthetic trial set. Deterministic given the configuration.
pub fn generate(config: &SynthConfig) -> Result<SynthTrialSet, SynthError> {
    config.validate()?;
    let classes = [
        (TrialClass::BonaTarget, "bt", config.n_bona_target),
        (TrialClass::BonaNontarget, "bn", config.n_bona_nontarget),
        (TrialClass::SpoofTarget, "st", config.n_spoof_target),
    ];
    let mut trials = Vec::with_capacity(classes.iter().map(|&(_, _, n)| n).sum());
    for (stream, (class, prefix, count)) in classes.into_iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(stream as u64 + 1);
        let cm_mean = if class.is_bona() { 0.5 } else { -0.5 } * config.cm_separation;
        let asv_mean = if class.is_target() { 0.5 } else { -0.5 } * config.asv_separation;
        for i in 0..count {
            let cm_noise: f64 = StandardNormal.sample(&mut rng);
            let asv_noise: f64 = StandardNormal.sample(&mut rng);
            let cm_latent = cm_mean + cm_noise;
            let asv_latent = asv_mean + asv_noise;
            let true_cm_llr = config.cm_separation * cm_latent;
            let true_asv_llr = config.asv_separation * asv_latent;
            trials.push(SynthTrial {
                trial_id: format!("{prefix}_{:07}", i + 1),
                class,
                true_cm_llr,
                true_asv_llr,
                raw_cm: config.cm_corruption.apply(true_cm_llr),
                raw_asv: config.asv_corruption.apply(true_asv_llr),
            });
        }
    }
    Ok(SynthTrialSet {
        trials,
        config: *config,
    })
}

/// Canonical threshold set, re-derived here so the oracles share no code
/// with the fast sweeps: sentinel below, midpoints of consecutive distinct
/// sorted scores, sentinel above.
fn naive_candidates(scores: &mut Vec<f64>) -> Vec<f64> {
    scores.sort_unstable_by(|a, b| a.total_cmp(b));
    scores.dedup();
    let mut candidates = Vec::with_capacity(scores.len() + 1);
    candidates.push(f64::NEG_INFINITY);
    for pair in scores.windows(2) {
        candidates.push((pair[0] + pair[1]) / 2.0);
    }
    candidates.push(f64::INFINITY);
    candidates
}

/// Exhaustive-enumeration a-DCF minimum; O(candidates x trials).
///
/// Counts errors by a fresh pass over every trial at every candidate
/// threshold. Must agree exactly with [`crate::metrics::min_a_dcf`].
pub fn oracle_min_a_dcf(
    trials: &ScoredTrials,
    cfg: &ADcfConfig,
) -> Result<(f64, f64), MetricsError> {
    let w_miss = cfg.costs.miss * cfg.priors.bona_target;
    let w_fa_imp = cfg.costs.fa_impostor * cfg.priors.bona_nontarget;
    let w_fa_spoof =
        cfg.costs.fa_spoof * (cfg.priors.spoof_target + cfg.priors.spoof_nontarget);
    let bt_total = trials.count(TrialClass::BonaTarget);
    let bn_total = trials.count(TrialClass::BonaNontarget);
    let spoof_total = trials.group_count(ClassSet::SPOOF);
    if w_miss > 0.0 && bt_total == 0 {
        return Err(MetricsError::EmptyClass("bona-target"));
    }
    if w_fa_imp > 0.0 && bn_total == 0 {
        return Err(MetricsError::EmptyClass("bona-nontarget"));
    }
    if w_fa_spoof > 0.0 && spoof_total == 0 {
        return Err(MetricsError::EmptyClass("spoof"));
    }

    let mut scores: Vec<f64> = trials.iter().map(|(s, _)| s).collect();
    let candidates = naive_candidates(&mut scores);
    let mut best_cost = f64::INFINITY;
    let mut best_threshold = f64::NEG_INFINITY;
    for threshold in candidates {
        let mut bt_rejected = 0usize;
        let mut bn_accepted = 0usize;
        let mut spoof_accepted = 0usize;
        for (score, class) in trials.iter() {
            let accepted = score > threshold;
            match class {
                TrialClass::BonaTarget => {
                    if !accepted {
                        bt_rejected += 1;
                    }
                }
                TrialClass::BonaNontarget => {
                    if accepted {
                        bn_accepted += 1;
                    }
                }
                TrialClass::SpoofTarget | TrialClass::SpoofNontarget => {
                    if accepted {
                        spoof_accepted += 1;
                    }
                }
            }
        }
        let mut cost = 0.0;
        if w_miss > 0.0 {
            cost += w_miss * (bt_rejected as f64 / bt_total as f64);
        }
        if w_fa_imp > 0.0 {
            cost += w_fa_imp * (bn_accepted as f64 / bn_total as f64);
        }
        if w_fa_spoof > 0.0 {
            cost += w_fa_spoof * (spoof_accepted as f64 / spoof_total as f64);
        }
        if cost < best_cost {
            best_cost = cost;
            best_threshold = threshold;
        }
    }
    if cfg.normalize {
        let default = w_miss.min(w_fa_imp + w_fa_spoof);
        if default <= 0.0 {
            return Err(MetricsError::ZeroDefaultCost);
        }
        best_cost /= default;
    }
    Ok((best_cost, best_threshold))
}

/// Exhaustive-enumeration EER with the standard crossing interpolation.
pub fn oracle_eer(
    trials: &ScoredTrials,
    positive: ClassSet,
    negative: ClassSet,
) -> Result<f64, MetricsError> {
    if positive.intersects(negative) {
        return Err(MetricsError::OverlappingClassSets);
    }
    let pos = trials.scores_in(positive);
    let neg = trials.scores_in(negative);
    if pos.is_empty() {
        return Err(MetricsError::EmptyClass("positive"));
    }
    if neg.is_empty() {
        return Err(MetricsError::EmptyClass("negative"));
    }
    let mut scores: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    let candidates = naive_candidates(&mut scores);
    let mut previous: Option<(f64, f64)> = None;
    for threshold in candidates {
        let miss =
            pos.iter().filter(|&&s| s <= threshold).count() as f64 / pos.len() as f64;
        let fa = neg.iter().filter(|&&s| s > threshold).count() as f64 / neg.len() as f64;
        if miss >= fa {
            return Ok(match previous {
                None => miss,
                Some((prev_miss, prev_fa)) => {
                    if miss == fa {
                        miss
                    } else {
                        let denom = (miss - prev_miss) + (prev_fa - fa);
                        let t = (prev_fa - prev_miss) / denom;
                        prev_miss + t * (miss - prev_miss)
                    }
                }
            });
        }
        previous = Some((miss, fa));
    }
    Ok(1.0)
}

/// Exhaustive-enumeration minimum of the normalized bona/spoof DCF.
pub fn oracle_min_dcf(trials: &ScoredTrials, cfg: &ADcfConfig) -> Result<f64, MetricsError> {
    let bona_prior = cfg.priors.bona_target + cfg.priors.bona_nontarget;
    let spoof_prior = cfg.priors.spoof_target + cfg.priors.spoof_nontarget;
    let w_miss = cfg.costs.miss * bona_prior;
    let w_fa = cfg.costs.fa_spoof * spoof_prior;
    let pos = trials.scores_in(ClassSet::BONA);
    let neg = trials.scores_in(ClassSet::SPOOF);
    if w_miss > 0.0 && pos.is_empty() {
        return Err(MetricsError::EmptyClass("bona"));
    }
    if w_fa > 0.0 && neg.is_empty() {
        return Err(MetricsError::EmptyClass("spoof"));
    }
    let default = w_miss.min(w_fa);
    if default <= 0.0 {
        return Err(MetricsError::ZeroDefaultCost);
    }
    let mut scores: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    let candidates = naive_candidates(&mut scores);
    let mut best = f64::INFINITY;
    for threshold in candidates {
        let miss =
            pos.iter().filter(|&&s| s <= threshold).count() as f64 / pos.len() as f64;
        let fa = neg.iter().filter(|&&s| s > threshold).count() as f64 / neg.len() as f64;
        let cost = w_miss * miss + w_fa * fa;
        if cost < best {
            best = cost;
        }
    }
    Ok(best / default)
}

/// Direct cost-weighted Bayes decision from the four class likelihoods
/// `[bona-target, bona-nontarget, spoof-target, spoof-nontarget]`:
/// accept when the expected cost of rejecting exceeds that of accepting.
pub fn oracle_bayes_decision(
    likelihoods: [f64; 4],
    costs: &CostModel,
    priors: &PriorModel,
) -> bool {
    let accept_side = costs.miss * likelihoods[0] * priors.bona_target;
    let reject_side = costs.fa_impostor * likelihoods[1] * priors.bona_nontarget
        + costs.fa_spoof * likelihoods[2] * priors.spoof_target
        + costs.fa_spoof_impostor * likelihoods[3] * priors.spoof_nontarget;
    accept_side > reject_side
}

/// [`oracle_bayes_decision`] over a batch of likelihood tuples.
pub fn oracle_bayes_decisions(
    likelihoods: &[[f64; 4]],
    costs: &CostModel,
    priors: &PriorModel,
) -> Vec<bool> {
    likelihoods
        .iter()
        .map(|&l| oracle_bayes_decision(l, costs, priors))
        .collect()
}
