//! Detection-performance metrics over labeled score sets.
//!
//! Covers the SASV cost family (a-DCF over the four joint classes), the
//! binary bona-fide/spoof detection costs (minDCF, actDCF), the equal error
//! rate, and the calibration-sensitive Cllr.
//!
//! Threshold semantics are fixed throughout: a trial is accepted when its
//! score is strictly above the threshold, so a score equal to the threshold
//! is rejected. Swept metrics minimize over the canonical threshold set —
//! the midpoints between consecutive distinct sorted scores plus the two
//! infinite sentinels — which covers every achievable operating point.
//! Scores are natural-log LLRs where a calibrated interpretation is needed
//! (actDCF, Cllr); Cllr alone is reported in bits.

use thiserror::Error;

use crate::decision::{
    bayes_threshold, effective_priors, CostModel, DecisionError, PriorModel, TrialClass,
};
use crate::math::softplus;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no trials in required class group '{0}'")]
    EmptyClass(&'static str),
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("positive and negative class sets overlap")]
    OverlappingClassSets,
    #[error("best default-decision cost is zero; normalized cost undefined")]
    ZeroDefaultCost,
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

/// A set of trial classes, used to pick the positive/negative split for
/// rate-based metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassSet(u8);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);
    /// The accept class alone.
    pub const ACCEPT: ClassSet = ClassSet(1);
    /// The three reject classes.
    pub const REJECT: ClassSet = ClassSet(0b1110);
    /// Bona-fide speech (target or not).
    pub const BONA: ClassSet = ClassSet(0b0011);
    /// Spoofed speech (target or not).
    pub const SPOOF: ClassSet = ClassSet(0b1100);

    pub fn single(class: TrialClass) -> ClassSet {
        ClassSet(1 << class.index())
    }

    pub fn of(classes: &[TrialClass]) -> ClassSet {
        classes
            .iter()
            .fold(ClassSet::EMPTY, |set, &c| set.union(ClassSet::single(c)))
    }

    pub fn union(self, other: ClassSet) -> ClassSet {
        ClassSet(self.0 | other.0)
    }

    pub fn contains(self, class: TrialClass) -> bool {
        self.0 & (1 << class.index()) != 0
    }

    pub fn intersects(self, other: ClassSet) -> bool {
        self.0 & other.0 != 0
    }
}

/// Labeled scores for one evaluation run.
#[derive(Debug, Clone)]
pub struct ScoredTrials {
    scores: Vec<f64>,
    classes: Vec<TrialClass>,
    counts: [usize; 4],
}

impl ScoredTrials {
    pub fn new(
        items: impl IntoIterator<Item = (f64, TrialClass)>,
    ) -> Result<ScoredTrials, MetricsError> {
        let mut scores = Vec::new();
        let mut classes = Vec::new();
        let mut counts = [0usize; 4];
        for (index, (score, class)) in items.into_iter().enumerate() {
            if !score.is_finite() {
                return Err(MetricsError::NonFiniteScore(index));
            }
            scores.push(score);
            classes.push(class);
            counts[class.index()] += 1;
        }
        Ok(ScoredTrials {
            scores,
            classes,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn count(&self, class: TrialClass) -> usize {
        self.counts[class.index()]
    }

    pub fn group_count(&self, set: ClassSet) -> usize {
        TrialClass::ALL
            .iter()
            .filter(|&&c| set.contains(c))
            .map(|&c| self.count(c))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, TrialClass)> + '_ {
        self.scores
            .iter()
            .copied()
            .zip(self.classes.iter().copied())
    }

    /// Scores of the trials whose class lies in `set`, in trial order.
    pub fn scores_in(&self, set: ClassSet) -> Vec<f64> {
        self.iter()
            .filter(|&(_, c)| set.contains(c))
            .map(|(s, _)| s)
            .collect()
    }
}

/// Operating point of the a-DCF: decision costs and class priors.
///
/// The cost is reported unnormalized unless `normalize` is set, in which
/// case it is divided by the cost of the better constant decision.
#[derive(Debug, Clone, Copy)]
pub struct ADcfConfig {
    pub costs: CostModel,
    pub priors: PriorModel,
    pub normalize: bool,
}

impl ADcfConfig {
    pub fn new(costs: CostModel, priors: PriorModel) -> ADcfConfig {
        ADcfConfig {
            costs,
            priors,
            normalize: false,
        }
    }

    pub fn normalized(mut self) -> ADcfConfig {
        self.normalize = true;
        self
    }
}

/// Error rates of the three-way decision at a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    /// Bona-target trials rejected.
    pub miss: f64,
    /// Bona-nontarget trials accepted.
    pub false_accept_impostor: f64,
    /// Spoofed trials (target or not) accepted.
    pub false_accept_spoof: f64,
}

/// Full metric set for one score file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub eer: f64,
    pub min_dcf: f64,
    pub act_dcf: f64,
    /// Cllr in bits.
    pub cllr_bits: f64,
    pub min_a_dcf: f64,
    pub min_a_dcf_threshold: f64,
}

/// Which positive/negative split the rate metrics use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Accept class against the three reject classes.
    Sasv,
    /// Bona fide against spoof, for countermeasure scores.
    BinaryCm,
}

/// Miss and false-accept fractions at one threshold. Scores equal to the
/// threshold count as rejected.
pub fn error_rates_at(trials: &ScoredTrials, threshold: f64) -> Result<ErrorRates, MetricsError> {
    let bt_total = trials.count(TrialClass::BonaTarget);
    let bn_total = trials.count(TrialClass::BonaNontarget);
    let spoof_total = trials.group_count(ClassSet::SPOOF);
    if bt_total == 0 {
        return Err(MetricsError::EmptyClass("bona-target"));
    }
    if bn_total == 0 {
        return Err(MetricsError::EmptyClass("bona-nontarget"));
    }
    if spoof_total == 0 {
        return Err(MetricsError::EmptyClass("spoof"));
    }
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
    Ok(ErrorRates {
        miss: bt_rejected as f64 / bt_total as f64,
        false_accept_impostor: bn_accepted as f64 / bn_total as f64,
        false_accept_spoof: spoof_accepted as f64 / spoof_total as f64,
    })
}

/// Canonical threshold set over ascending-sorted scores: one sentinel below
/// every score, the midpoints between consecutive distinct values, and one
/// sentinel above.
fn candidate_thresholds(sorted_scores: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut candidates = vec![f64::NEG_INFINITY];
    let mut previous: Option<f64> = None;
    for score in sorted_scores {
        if let Some(prev) = previous {
            if score > prev {
                candidates.push((prev + score) / 2.0);
            }
        }
        previous = Some(score);
    }
    candidates.push(f64::INFINITY);
    candidates
}

struct ADcfWeights {
    miss: f64,
    fa_impostor: f64,
    fa_spoof: f64,
}

impl ADcfWeights {
    fn build(cfg: &ADcfConfig, trials: &ScoredTrials) -> Result<ADcfWeights, MetricsError> {
        let weights = ADcfWeights {
            miss: cfg.costs.miss * cfg.priors.bona_target,
            fa_impostor: cfg.costs.fa_impostor * cfg.priors.bona_nontarget,
            fa_spoof: cfg.costs.fa_spoof
                * (cfg.priors.spoof_target + cfg.priors.spoof_nontarget),
        };
        // A class group is required exactly when it carries cost weight.
        if weights.miss > 0.0 && trials.count(TrialClass::BonaTarget) == 0 {
            return Err(MetricsError::EmptyClass("bona-target"));
        }
        if weights.fa_impostor > 0.0 && trials.count(TrialClass::BonaNontarget) == 0 {
            return Err(MetricsError::EmptyClass("bona-nontarget"));
        }
        if weights.fa_spoof > 0.0 && trials.group_count(ClassSet::SPOOF) == 0 {
            return Err(MetricsError::EmptyClass("spoof"));
        }
        Ok(weights)
    }

    /// Cost of the better constant decision (reject-all vs accept-all).
    fn default_cost(&self) -> f64 {
        self.miss.min(self.fa_impostor + self.fa_spoof)
    }

    /// Weighted cost from rejected counts, accumulated in fixed term order.
    fn cost(
        &self,
        bt_rejected: usize,
        bt_total: usize,
        bn_rejected: usize,
        bn_total: usize,
        spoof_rejected: usize,
        spoof_total: usize,
    ) -> f64 {
        let mut cost = 0.0;
        if self.miss > 0.0 {
            cost += self.miss * (bt_rejected as f64 / bt_total as f64);
        }
        if self.fa_impostor > 0.0 {
            cost += self.fa_impostor * ((bn_total - bn_rejected) as f64 / bn_total as f64);
        }
        if self.fa_spoof > 0.0 {
            cost += self.fa_spoof * ((spoof_total - spoof_rejected) as f64 / spoof_total as f64);
        }
        cost
    }
}

/// Minimum a-DCF over the canonical threshold set, with its threshold.
///
/// Ties on the minimum resolve to the lowest threshold. Equals exhaustive
/// enumeration over the same candidate set exactly.
pub fn min_a_dcf(trials: &ScoredTrials, cfg: &ADcfConfig) -> Result<(f64, f64), MetricsError> {
    let weights = ADcfWeights::build(cfg, trials)?;
    let bt_total = trials.count(TrialClass::BonaTarget);
    let bn_total = trials.count(TrialClass::BonaNontarget);
    let spoof_total = trials.group_count(ClassSet::SPOOF);

    let mut entries: Vec<(f64, TrialClass)> = trials.iter().collect();
    entries.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let candidates = candidate_thresholds(entries.iter().map(|&(s, _)| s));

    let mut best_cost = f64::INFINITY;
    let mut best_threshold = f64::NEG_INFINITY;
    let mut index = 0usize;
    let mut bt_rejected = 0usize;
    let mut bn_rejected = 0usize;
    let mut spoof_rejected = 0usize;
    for threshold in candidates {
        while index < entries.len() && entries[index].0 <= threshold {
            match entries[index].1 {
                TrialClass::BonaTarget => bt_rejected += 1,
                TrialClass::BonaNontarget => bn_rejected += 1,
                TrialClass::SpoofTarget | TrialClass::SpoofNontarget => spoof_rejected += 1,
            }
            index += 1;
        }
        let cost = weights.cost(
            bt_rejected,
            bt_total,
            bn_rejected,
            bn_total,
            spoof_rejected,
            spoof_total,
        );
        if cost < best_cost {
            best_cost = cost;
            best_threshold = threshold;
        }
    }
    if cfg.normalize {
        let default = weights.default_cost();
        if default <= 0.0 {
            return Err(MetricsError::ZeroDefaultCost);
        }
        best_cost /= default;
    }
    Ok((best_cost, best_threshold))
}

/// One operating point of a binary miss/false-accept sweep.
struct BinaryPoint {
    miss: f64,
    false_accept: f64,
}

/// Sweep the canonical thresholds over a binary split. Rates at consecutive
/// points step by whole trials; miss is non-decreasing and the false-accept
/// rate non-increasing in the threshold.
fn binary_sweep(positives: &[f64], negatives: &[f64]) -> Vec<BinaryPoint> {
    let mut entries: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    entries.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let candidates = candidate_thresholds(entries.iter().map(|&(s, _)| s));
    let pos_total = positives.len() as f64;
    let neg_total = negatives.len() as f64;

    let mut points = Vec::with_capacity(candidates.len());
    let mut index = 0usize;
    let mut pos_rejected = 0usize;
    let mut neg_rejected = 0usize;
    for threshold in candidates {
        while index < entries.len() && entries[index].0 <= threshold {
            if entries[index].1 {
                pos_rejected += 1;
            } else {
                neg_rejected += 1;
            }
            index += 1;
        }
        points.push(BinaryPoint {
            miss: pos_rejected as f64 / pos_total,
            false_accept: (negatives.len() - neg_rejected) as f64 / neg_total,
        });
    }
    points
}

fn split_scores(
    trials: &ScoredTrials,
    positive: ClassSet,
    negative: ClassSet,
) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
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
    Ok((pos, neg))
}

/// Equal error rate of the positive-vs-negative split.
///
/// The miss and false-accept step curves are swept over the canonical
/// thresholds and their crossing is resolved by linear interpolation between
/// the adjacent sweep points, so the result is invariant under strictly
/// increasing score transforms.
pub fn eer(
    trials: &ScoredTrials,
    positive: ClassSet,
    negative: ClassSet,
) -> Result<f64, MetricsError> {
    let (pos, neg) = split_scores(trials, positive, negative)?;
    let points = binary_sweep(&pos, &neg);
    Ok(eer_from_curve(points.iter().map(|p| (p.miss, p.false_accept))))
}

/// Crossing of a non-decreasing miss curve and a non-increasing
/// false-accept curve given as paired sweep values.
fn eer_from_curve(curve: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut previous: Option<(f64, f64)> = None;
    for (miss, fa) in curve {
        if miss >= fa {
            return match previous {
                // First point has miss 0 and false-accept 1, so a crossing
                // at the start can only be an exact tie.
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
            };
        }
        previous = Some((miss, fa));
    }
    // Unreachable for nonempty splits: the final point has miss 1, fa 0.
    1.0
}

/// Threshold choice for [`dcf`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DcfThreshold {
    At(f64),
    /// The Bayes threshold implied by the binary collapse of the costs and
    /// priors, applied to scores interpreted as LLRs.
    Bayes,
}

struct BinaryWeights {
    miss: f64,
    false_accept: f64,
}

impl BinaryWeights {
    /// Bona-fide vs spoof collapse: miss cost against the spoof
    /// false-accept cost, priors pooled within each side.
    fn build(cfg: &ADcfConfig, trials: &ScoredTrials) -> Result<BinaryWeights, MetricsError> {
        let bona_prior = cfg.priors.bona_target + cfg.priors.bona_nontarget;
        let spoof_prior = cfg.priors.spoof_target + cfg.priors.spoof_nontarget;
        let weights = BinaryWeights {
            miss: cfg.costs.miss * bona_prior,
            false_accept: cfg.costs.fa_spoof * spoof_prior,
        };
        if weights.miss > 0.0 && trials.group_count(ClassSet::BONA) == 0 {
            return Err(MetricsError::EmptyClass("bona"));
        }
        if weights.false_accept > 0.0 && trials.group_count(ClassSet::SPOOF) == 0 {
            return Err(MetricsError::EmptyClass("spoof"));
        }
        Ok(weights)
    }

    fn default_cost(&self) -> Result<f64, MetricsError> {
        let default = self.miss.min(self.false_accept);
        if default <= 0.0 {
            return Err(MetricsError::ZeroDefaultCost);
        }
        Ok(default)
    }

    fn bayes_threshold(&self, cfg: &ADcfConfig) -> Result<f64, MetricsError> {
        let bona_prior = cfg.priors.bona_target + cfg.priors.bona_nontarget;
        let spoof_prior = cfg.priors.spoof_target + cfg.priors.spoof_nontarget;
        let total = bona_prior + spoof_prior;
        let collapsed = PriorModel::new(bona_prior / total, 0.0, spoof_prior / total, 0.0)?;
        let effective = effective_priors(&cfg.costs, &collapsed)?;
        Ok(bayes_threshold(&effective).as_score())
    }
}

/// Normalized detection cost of the bona-fide/spoof collapse at a threshold.
pub fn dcf(
    trials: &ScoredTrials,
    cfg: &ADcfConfig,
    threshold: DcfThreshold,
) -> Result<f64, MetricsError> {
    let weights = BinaryWeights::build(cfg, trials)?;
    let default = weights.default_cost()?;
    let tau = match threshold {
        DcfThreshold::At(t) => t,
        DcfThreshold::Bayes => weights.bayes_threshold(cfg)?,
    };
    let pos = trials.scores_in(ClassSet::BONA);
    let neg = trials.scores_in(ClassSet::SPOOF);
    let miss = pos.iter().filter(|&&s| s <= tau).count() as f64 / pos.len() as f64;
    let fa = neg.iter().filter(|&&s| s > tau).count() as f64 / neg.len() as f64;
    Ok((weights.miss * miss + weights.false_accept * fa) / default)
}

/// Minimum of the normalized detection cost over the canonical thresholds.
/// Never exceeds [`act_dcf`] on the same trials.
pub fn min_dcf(trials: &ScoredTrials, cfg: &ADcfConfig) -> Result<f64, MetricsError> {
    let weights = BinaryWeights::build(cfg, trials)?;
    let default = weights.default_cost()?;
    let pos = trials.scores_in(ClassSet::BONA);
    let neg = trials.scores_in(ClassSet::SPOOF);
    let mut best = f64::INFINITY;
    for point in binary_sweep(&pos, &neg) {
        let cost = weights.miss * point.miss + weights.false_accept * point.false_accept;
        if cost < best {
            best = cost;
        }
    }
    Ok(best / default)
}

/// Detection cost at the Bayes threshold of the binary collapse.
pub fn act_dcf(trials: &ScoredTrials, cfg: &ADcfConfig) -> Result<f64, MetricsError> {
    dcf(trials, cfg, DcfThreshold::Bayes)
}

/// Cost of the log-likelihood ratio in bits.
///
/// Scores must be natural-log LLRs of the positive against the negative
/// split; uninformative zero LLRs cost exactly one bit.
pub fn cllr(
    trials: &ScoredTrials,
    positive: ClassSet,
    negative: ClassSet,
) -> Result<f64, MetricsError> {
    let (pos, neg) = split_scores(trials, positive, negative)?;
    let pos_mean = pos.iter().map(|&s| softplus(-s)).sum::<f64>() / pos.len() as f64;
    let neg_mean = neg.iter().map(|&s| softplus(s)).sum::<f64>() / neg.len() as f64;
    Ok(0.5 * (pos_mean + neg_mean) / std::f64::consts::LN_2)
}

/// Compute the full metric set for one score file.
///
/// The rate metrics (EER, Cllr) use the accept-vs-reject split in SASV mode
/// and the bona-fide-vs-spoof split in binary CM mode; minDCF/actDCF always
/// use the binary collapse and the a-DCF always uses all four classes.
pub fn metrics_report(
    trials: &ScoredTrials,
    cfg: &ADcfConfig,
    mode: EvalMode,
) -> Result<MetricsReport, MetricsError> {
    let (positive, negative) = match mode {
        EvalMode::Sasv => (ClassSet::ACCEPT, ClassSet::REJECT),
        EvalMode::BinaryCm => (ClassSet::BONA, ClassSet::SPOOF),
    };
    let (min_a, threshold) = min_a_dcf(trials, cfg)?;
    Ok(MetricsReport {
        eer: eer(trials, positive, negative)?,
        min_dcf: min_dcf(trials, cfg)?,
        act_dcf: act_dcf(trials, cfg)?,
        cllr_bits: cllr(trials, positive, negative)?,
        min_a_dcf: min_a,
        min_a_dcf_threshold: threshold,
    })
}
