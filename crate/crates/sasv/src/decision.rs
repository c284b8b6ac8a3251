//! Class algebra, effective priors, and SASV LLR composition.
//!
//! A spoofing-robust speaker-verification (SASV) trial belongs to one of four
//! joint classes: the speech is bona fide (`B`) or spoofed (`S`), and it is
//! from the target speaker (`T`) or not (`N`). The accept hypothesis is
//! exactly bona-fide target speech; the other three classes form the reject
//! hypothesis.
//!
//! With distinct costs per error type, the optimal accept rule compares
//! cost-weighted class likelihoods. Dividing through by the total
//! cost-weighted prior mass turns the four costs into *effective priors*
//! under which all costs are one and the decision is unchanged. The SASV LLR
//! for a trial is then composed from the countermeasure LLR
//! `llr_cm = log P(X|B,T)/P(X|S,T)` and the speaker-verification LLR
//! `llr_asv = log P(X|B,T)/P(X|B,N)` as
//!
//! ```text
//! llr_sasv = -log( q_bn * e^(-llr_asv) + q_st * e^(-llr_cm) + q_sn * e^(-llr_cm - llr_asv) )
//! ```
//!
//! where `q_*` are the reject-class priors conditioned on the reject
//! hypothesis. The spoof-nontarget term uses the product approximation
//! `P(X|B,T)/P(X|S,N) ~ e^(llr_cm + llr_asv)`, the only composition available
//! from two speaker-independent scores; scenarios without spoofed impostors
//! set `q_sn = 0` and the term vanishes.
//!
//! All log-likelihood ratios are in natural-log units. Every value here is
//! immutable after construction and every operation is a pure function.

use thiserror::Error;

use crate::math::log_sum_exp;

/// Tolerance on probability vectors summing to one.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

/// Errors from constructing or combining decision-model values.
#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("invalid costs: {0}")]
    InvalidCosts(String),
    #[error("invalid priors: {0}")]
    InvalidPriors(String),
    #[error("non-finite LLR pair (cm={cm}, asv={asv})")]
    NonFiniteLlr { cm: f64, asv: f64 },
    #[error("all cost-weighted prior mass is zero")]
    ZeroNormalizer,
    #[error("reject-side prior mass is zero")]
    DegenerateRejectMass,
}

/// The four joint trial classes.
///
/// `BonaTarget` is the accept hypothesis; the other three partition the
/// reject hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialClass {
    /// Bona-fide speech from the target speaker.
    BonaTarget,
    /// Bona-fide speech from a different speaker (impostor).
    BonaNontarget,
    /// Spoofed speech imitating the target speaker.
    SpoofTarget,
    /// Spoofed speech not imitating the target speaker.
    SpoofNontarget,
}

impl TrialClass {
    /// All classes in canonical order.
    pub const ALL: [TrialClass; 4] = [
        TrialClass::BonaTarget,
        TrialClass::BonaNontarget,
        TrialClass::SpoofTarget,
        TrialClass::SpoofNontarget,
    ];

    /// Stable token used in trial-key files.
    pub fn token(self) -> &'static str {
        match self {
            TrialClass::BonaTarget => "target_bona",
            TrialClass::BonaNontarget => "nontarget_bona",
            TrialClass::SpoofTarget => "spoof_target",
            TrialClass::SpoofNontarget => "spoof_nontarget",
        }
    }

    /// Parse a trial-key token.
    pub fn from_token(token: &str) -> Option<TrialClass> {
        match token {
            "target_bona" => Some(TrialClass::BonaTarget),
            "nontarget_bona" => Some(TrialClass::BonaNontarget),
            "spoof_target" => Some(TrialClass::SpoofTarget),
            "spoof_nontarget" => Some(TrialClass::SpoofNontarget),
            _ => None,
        }
    }

    /// Index into `[bt, bn, st, sn]`-ordered arrays.
    pub fn index(self) -> usize {
        match self {
            TrialClass::BonaTarget => 0,
            TrialClass::BonaNontarget => 1,
            TrialClass::SpoofTarget => 2,
            TrialClass::SpoofNontarget => 3,
        }
    }

    pub fn is_bona(self) -> bool {
        matches!(self, TrialClass::BonaTarget | TrialClass::BonaNontarget)
    }

    pub fn is_target(self) -> bool {
        matches!(self, TrialClass::BonaTarget | TrialClass::SpoofTarget)
    }
}

/// Decision costs for the four error types.
///
/// `miss` is the cost of rejecting a bona-fide target trial; the three
/// false-accept costs cover impostors, spoofed target speech, and spoofed
/// impostor speech.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub miss: f64,
    pub fa_impostor: f64,
    pub fa_spoof: f64,
    pub fa_spoof_impostor: f64,
}

impl CostModel {
    pub fn new(
        miss: f64,
        fa_impostor: f64,
        fa_spoof: f64,
        fa_spoof_impostor: f64,
    ) -> Result<CostModel, DecisionError> {
        let values = [miss, fa_impostor, fa_spoof, fa_spoof_impostor];
        for v in values {
            if !v.is_finite() || v < 0.0 {
                return Err(DecisionError::InvalidCosts(format!(
                    "costs must be finite and nonnegative, got {values:?}"
                )));
            }
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(DecisionError::InvalidCosts(
                "at least one cost must be positive".into(),
            ));
        }
        Ok(CostModel {
            miss,
            fa_impostor,
            fa_spoof,
            fa_spoof_impostor,
        })
    }

    /// All costs equal to one.
    pub fn unit() -> CostModel {
        CostModel {
            miss: 1.0,
            fa_impostor: 1.0,
            fa_spoof: 1.0,
            fa_spoof_impostor: 1.0,
        }
    }

    /// The ASVspoof 5 operating point: miss cost 1, every false accept cost 10.
    pub fn asvspoof5() -> CostModel {
        CostModel {
            miss: 1.0,
            fa_impostor: 10.0,
            fa_spoof: 10.0,
            fa_spoof_impostor: 10.0,
        }
    }
}

/// Joint prior probabilities of the four trial classes.
///
/// The accept class must have positive mass; the four entries sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorModel {
    pub bona_target: f64,
    pub bona_nontarget: f64,
    pub spoof_target: f64,
    pub spoof_nontarget: f64,
}

impl PriorModel {
    pub fn new(
        bona_target: f64,
        bona_nontarget: f64,
        spoof_target: f64,
        spoof_nontarget: f64,
    ) -> Result<PriorModel, DecisionError> {
        let values = [bona_target, bona_nontarget, spoof_target, spoof_nontarget];
        for v in values {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(DecisionError::InvalidPriors(format!(
                    "priors must lie in [0, 1], got {values:?}"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(DecisionError::InvalidPriors(format!(
                "priors must sum to 1, got {sum}"
            )));
        }
        if bona_target <= 0.0 {
            return Err(DecisionError::InvalidPriors(
                "the accept class must have positive prior mass".into(),
            ));
        }
        Ok(PriorModel {
            bona_target,
            bona_nontarget,
            spoof_target,
            spoof_nontarget,
        })
    }

    pub fn get(&self, class: TrialClass) -> f64 {
        match class {
            TrialClass::BonaTarget => self.bona_target,
            TrialClass::BonaNontarget => self.bona_nontarget,
            TrialClass::SpoofTarget => self.spoof_target,
            TrialClass::SpoofNontarget => self.spoof_nontarget,
        }
    }

    /// Reject-class priors conditioned on the reject hypothesis.
    pub fn conditional_reject_priors(&self) -> Result<ConditionalRejectPriors, DecisionError> {
        conditional_reject(self.bona_nontarget, self.spoof_target, self.spoof_nontarget)
    }
}

/// Priors rescaled by their costs and renormalized.
///
/// Under effective priors every cost equals one and the optimal decision is
/// unchanged. Constructed only by [`effective_priors`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivePriors {
    pub bona_target: f64,
    pub bona_nontarget: f64,
    pub spoof_target: f64,
    pub spoof_nontarget: f64,
}

impl EffectivePriors {
    pub fn get(&self, class: TrialClass) -> f64 {
        match class {
            TrialClass::BonaTarget => self.bona_target,
            TrialClass::BonaNontarget => self.bona_nontarget,
            TrialClass::SpoofTarget => self.spoof_target,
            TrialClass::SpoofNontarget => self.spoof_nontarget,
        }
    }

    /// Total effective mass on the reject hypothesis.
    pub fn reject_mass(&self) -> f64 {
        self.bona_nontarget + self.spoof_target + self.spoof_nontarget
    }

    /// Reject-class effective priors conditioned on the reject hypothesis.
    pub fn conditional_reject_priors(&self) -> Result<ConditionalRejectPriors, DecisionError> {
        conditional_reject(self.bona_nontarget, self.spoof_target, self.spoof_nontarget)
    }
}

/// Reject-class priors conditioned on the reject hypothesis; sums to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalRejectPriors {
    pub bona_nontarget: f64,
    pub spoof_target: f64,
    pub spoof_nontarget: f64,
}

impl ConditionalRejectPriors {
    pub fn new(
        bona_nontarget: f64,
        spoof_target: f64,
        spoof_nontarget: f64,
    ) -> Result<ConditionalRejectPriors, DecisionError> {
        let values = [bona_nontarget, spoof_target, spoof_nontarget];
        for v in values {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(DecisionError::InvalidPriors(format!(
                    "conditional priors must lie in [0, 1], got {values:?}"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(DecisionError::InvalidPriors(format!(
                "conditional priors must sum to 1, got {sum}"
            )));
        }
        Ok(ConditionalRejectPriors {
            bona_nontarget,
            spoof_target,
            spoof_nontarget,
        })
    }
}

fn conditional_reject(
    bona_nontarget: f64,
    spoof_target: f64,
    spoof_nontarget: f64,
) -> Result<ConditionalRejectPriors, DecisionError> {
    let mass = bona_nontarget + spoof_target + spoof_nontarget;
    if mass <= 0.0 {
        return Err(DecisionError::DegenerateRejectMass);
    }
    Ok(ConditionalRejectPriors {
        bona_nontarget: bona_nontarget / mass,
        spoof_target: spoof_target / mass,
        spoof_nontarget: spoof_nontarget / mass,
    })
}

/// A countermeasure score and a speaker-verification score for one trial,
/// both in natural-log LLR units. Non-finite values are rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrPair {
    pub cm: f64,
    pub asv: f64,
}

impl LlrPair {
    pub fn new(cm: f64, asv: f64) -> Result<LlrPair, DecisionError> {
        if !cm.is_finite() || !asv.is_finite() {
            return Err(DecisionError::NonFiniteLlr { cm, asv });
        }
        Ok(LlrPair { cm, asv })
    }
}

/// Convert costs and priors into the equivalent effective priors.
///
/// Each class mass is its prior times its cost, normalized by
/// `Z = p_bt*c_miss + p_bn*c_fa_imp + p_st*c_fa_spoof + p_sn*c_fa_spoof_imp`.
/// Fails with [`DecisionError::ZeroNormalizer`] when every supported class
/// has zero cost.
pub fn effective_priors(
    costs: &CostModel,
    priors: &PriorModel,
) -> Result<EffectivePriors, DecisionError> {
    let weighted = [
        priors.bona_target * costs.miss,
        priors.bona_nontarget * costs.fa_impostor,
        priors.spoof_target * costs.fa_spoof,
        priors.spoof_nontarget * costs.fa_spoof_impostor,
    ];
    let normalizer: f64 = weighted.iter().sum();
    if normalizer <= 0.0 {
        return Err(DecisionError::ZeroNormalizer);
    }
    Ok(EffectivePriors {
        bona_target: weighted[0] / normalizer,
        bona_nontarget: weighted[1] / normalizer,
        spoof_target: weighted[2] / normalizer,
        spoof_nontarget: weighted[3] / normalizer,
    })
}

/// Compose the SASV LLR from a CM/ASV score pair and conditional reject priors.
///
/// Computes `-log(q_bn*e^(-asv) + q_st*e^(-cm) + q_sn*e^(-cm-asv))` with a
/// max-subtracted log-sum-exp. Strictly increasing in `cm` while the spoof
/// classes have mass and in `asv` while the impostor or spoofed-impostor
/// class has mass.
pub fn sasv_llr(llrs: &LlrPair, cond: &ConditionalRejectPriors) -> f64 {
    let mut terms = [f64::NEG_INFINITY; 3];
    if cond.bona_nontarget > 0.0 {
        terms[0] = cond.bona_nontarget.ln() - llrs.asv;
    }
    if cond.spoof_target > 0.0 {
        terms[1] = cond.spoof_target.ln() - llrs.cm;
    }
    if cond.spoof_nontarget > 0.0 {
        terms[2] = cond.spoof_nontarget.ln() - llrs.cm - llrs.asv;
    }
    -log_sum_exp(&terms)
}

/// The accept threshold on the SASV LLR implied by effective priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BayesThreshold {
    /// Accept when the LLR exceeds this value.
    Finite(f64),
    /// Accepting is free of risk: no reject class carries effective mass.
    AlwaysAccept,
    /// Rejecting is free of risk: the accept class carries no effective mass.
    AlwaysReject,
}

impl BayesThreshold {
    /// The threshold as a score value, with the forced decisions mapped to
    /// the infinite sentinels.
    pub fn as_score(&self) -> f64 {
        match self {
            BayesThreshold::Finite(t) => *t,
            BayesThreshold::AlwaysAccept => f64::NEG_INFINITY,
            BayesThreshold::AlwaysReject => f64::INFINITY,
        }
    }
}

/// Bayes threshold `log(reject effective mass / accept effective mass)`.
///
/// Degenerate operating points yield forced decisions rather than errors so
/// that metric sweeps over pathological configurations do not abort.
pub fn bayes_threshold(effective: &EffectivePriors) -> BayesThreshold {
    let reject = effective.reject_mass();
    if effective.bona_target <= 0.0 {
        BayesThreshold::AlwaysReject
    } else if reject <= 0.0 {
        BayesThreshold::AlwaysAccept
    } else {
        BayesThreshold::Finite((reject / effective.bona_target).ln())
    }
}

/// Bayes-optimal accept decision for a composed SASV LLR.
///
/// Equivalent to the direct cost-weighted comparison of class likelihoods;
/// with unit costs and equal accept/reject prior mass the threshold is zero.
pub fn bayes_accept(
    sasv_llr: f64,
    costs: &CostModel,
    priors: &PriorModel,
) -> Result<bool, DecisionError> {
    let effective = effective_priors(costs, priors)?;
    Ok(match bayes_threshold(&effective) {
        BayesThreshold::Finite(threshold) => sasv_llr > threshold,
        BayesThreshold::AlwaysAccept => true,
        BayesThreshold::AlwaysReject => false,
    })
}
