//! Auxiliary score-level procedures: group-likelihood aggregation over
//! labeled training classes, min-max score fusion, and cosine scoring of
//! embeddings with enrollment averaging and mean normalization.

use thiserror::Error;

use crate::score_io::ScoreFile;

/// Clamp applied to aggregated LLRs so downstream exponentials stay finite.
pub const AGGREGATE_LLR_BOUND: f64 = 700.0;

#[derive(Debug, Error)]
pub enum AuxScoringError {
    #[error("likelihood vector has {got} entries, scheme expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid likelihoods: {0}")]
    InvalidLikelihoods(String),
    #[error("invalid class priors: {0}")]
    InvalidPriors(String),
    #[error("invalid label scheme: {0}")]
    InvalidScheme(String),
    #[error("fusion needs at least two systems, got {0}")]
    TooFewSystems(usize),
    #[error("system {index} has constant scores; min-max normalization undefined")]
    ConstantScores { index: usize },
    #[error("trial id sets differ between systems (near '{example}')")]
    TrialMismatch { example: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    EmbeddingDimensionMismatch { expected: usize, got: usize },
    #[error("embeddings must be finite")]
    NonFiniteEmbedding,
    #[error("no enrollment embeddings given")]
    EmptyEnrollment,
    #[error("zero-norm embedding after mean subtraction")]
    ZeroNormAfterNormalization,
}

/// Whether a training class counts as bona fide or spoofed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreGroup {
    Bona,
    Spoof,
}

/// The five label schemes combining speaker identity with spoof labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSchemeKind {
    /// Speaker id crossed with bona/spoof.
    SpeakerBinarySpoof,
    /// Speaker id crossed with bona plus each spoof method.
    SpeakerMultiSpoof,
    /// Speaker id for bona fide, one pooled spoof class.
    SpeakerOneSpoof,
    /// Bona fide plus each spoof method, no speaker identity.
    MultiSpoof,
    /// Plain bona/spoof.
    BinarySpoof,
}

impl LabelSchemeKind {
    pub const ALL: [LabelSchemeKind; 5] = [
        LabelSchemeKind::SpeakerBinarySpoof,
        LabelSchemeKind::SpeakerMultiSpoof,
        LabelSchemeKind::SpeakerOneSpoof,
        LabelSchemeKind::MultiSpoof,
        LabelSchemeKind::BinarySpoof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LabelSchemeKind::SpeakerBinarySpoof => "spk-binspf",
            LabelSchemeKind::SpeakerMultiSpoof => "spk-mulspf",
            LabelSchemeKind::SpeakerOneSpoof => "spk-onespf",
            LabelSchemeKind::MultiSpoof => "mulspf",
            LabelSchemeKind::BinarySpoof => "binspf",
        }
    }

    pub fn from_name(name: &str) -> Option<LabelSchemeKind> {
        LabelSchemeKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// A concrete class layout for one scheme, speaker count, and spoof-method
/// count.
///
/// Class indices are laid out with the bona-fide block first:
/// - `spk-binspf`: `[speaker bona x S][speaker spoof x S]`
/// - `spk-mulspf`: `[speaker bona x S][speaker x method spoof, speaker-major]`
/// - `spk-onespf`: `[speaker bona x S][pooled spoof]`
/// - `mulspf`: `[bona][method spoof x A]`
/// - `binspf`: `[bona][spoof]`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelScheme {
    kind: LabelSchemeKind,
    speakers: usize,
    spoof_types: usize,
}

impl LabelScheme {
    pub fn new(
        kind: LabelSchemeKind,
        speakers: usize,
        spoof_types: usize,
    ) -> Result<LabelScheme, AuxScoringError> {
        if speakers == 0 || spoof_types == 0 {
            return Err(AuxScoringError::InvalidScheme(
                "speaker and spoof-method counts must be positive".into(),
            ));
        }
        Ok(LabelScheme {
            kind,
            speakers,
            spoof_types,
        })
    }

    pub fn kind(&self) -> LabelSchemeKind {
        self.kind
    }

    /// Total number of training classes K.
    pub fn class_count(&self) -> usize {
        match self.kind {
            LabelSchemeKind::SpeakerBinarySpoof => 2 * self.speakers,
            LabelSchemeKind::SpeakerMultiSpoof => self.speakers * (1 + self.spoof_types),
            LabelSchemeKind::SpeakerOneSpoof => self.speakers + 1,
            LabelSchemeKind::MultiSpoof => 1 + self.spoof_types,
            LabelSchemeKind::BinarySpoof => 2,
        }
    }

    /// Number of classes in the bona-fide block.
    pub fn bona_count(&self) -> usize {
        match self.kind {
            LabelSchemeKind::SpeakerBinarySpoof
            | LabelSchemeKind::SpeakerMultiSpoof
            | LabelSchemeKind::SpeakerOneSpoof => self.speakers,
            LabelSchemeKind::MultiSpoof | LabelSchemeKind::BinarySpoof => 1,
        }
    }

    /// Group of a class index, or `None` when out of range.
    pub fn group_of(&self, class: usize) -> Option<ScoreGroup> {
        if class >= self.class_count() {
            return None;
        }
        Some(if class < self.bona_count() {
            ScoreGroup::Bona
        } else {
            ScoreGroup::Spoof
        })
    }
}

/// Bona-vs-spoof LLR from per-class likelihoods.
///
/// Sums `prior * likelihood` within each group and returns the log ratio of
/// the bona sum to the spoof sum. Group terms are summed in ascending value
/// order, so the result is invariant to permuting classes within a group.
/// When a group sum underflows to zero the result clamps to +/-700; callers
/// feeding softmax posteriors must divide by the class priors first.
pub fn aggregate_group_llr(
    likelihoods: &[f64],
    scheme: &LabelScheme,
    class_priors: Option<&[f64]>,
) -> Result<f64, AuxScoringError> {
    let expected = scheme.class_count();
    if likelihoods.len() != expected {
        return Err(AuxScoringError::DimensionMismatch {
            expected,
            got: likelihoods.len(),
        });
    }
    if likelihoods.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(AuxScoringError::InvalidLikelihoods(
            "likelihoods must be finite and nonnegative".into(),
        ));
    }
    if likelihoods.iter().all(|&v| v == 0.0) {
        return Err(AuxScoringError::InvalidLikelihoods(
            "at least one likelihood must be positive".into(),
        ));
    }
    if let Some(priors) = class_priors {
        if priors.len() != expected {
            return Err(AuxScoringError::DimensionMismatch {
                expected,
                got: priors.len(),
            });
        }
        if priors.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(AuxScoringError::InvalidPriors(
                "class priors must be finite and nonnegative".into(),
            ));
        }
        let (bona_mass, spoof_mass) = group_sums(priors, scheme, None);
        if bona_mass <= 0.0 || spoof_mass <= 0.0 {
            return Err(AuxScoringError::InvalidPriors(
                "each group needs positive prior mass".into(),
            ));
        }
    }

    let (bona, spoof) = group_sums(likelihoods, scheme, class_priors);
    if !bona.is_finite() || !spoof.is_finite() {
        return Err(AuxScoringError::InvalidLikelihoods(
            "weighted likelihood sum overflowed".into(),
        ));
    }
    Ok(match (bona > 0.0, spoof > 0.0) {
        (false, false) => 0.0,
        (false, true) => -AGGREGATE_LLR_BOUND,
        (true, false) => AGGREGATE_LLR_BOUND,
        (true, true) => (bona / spoof)
            .ln()
            .clamp(-AGGREGATE_LLR_BOUND, AGGREGATE_LLR_BOUND),
    })
}

/// Weighted per-group sums, each accumulated in ascending term order.
fn group_sums(values: &[f64], scheme: &LabelScheme, weights: Option<&[f64]>) -> (f64, f64) {
    let split = scheme.bona_count();
    let term = |i: usize| weights.map_or(values[i], |w| w[i] * values[i]);
    let mut bona: Vec<f64> = (0..split).map(term).collect();
    let mut spoof: Vec<f64> = (split..values.len()).map(term).collect();
    bona.sort_unstable_by(|a, b| a.total_cmp(b));
    spoof.sort_unstable_by(|a, b| a.total_cmp(b));
    (bona.iter().sum(), spoof.iter().sum())
}

/// Equal-weight average of per-system min-max normalized scores.
///
/// Every system must cover the same trial ids and have a nonconstant score
/// range; each is rescaled to `[0, 1]` by its own minimum and maximum before
/// averaging, which absorbs any positive-scale affine difference between
/// systems.
pub fn minmax_fuse(systems: &[ScoreFile]) -> Result<ScoreFile, AuxScoringError> {
    if systems.len() < 2 {
        return Err(AuxScoringError::TooFewSystems(systems.len()));
    }
    let reference = &systems[0];
    for other in &systems[1..] {
        if other.len() != reference.len() {
            let example = symmetric_difference_example(reference, other);
            return Err(AuxScoringError::TrialMismatch { example });
        }
        for (id, _) in other.iter() {
            if reference.get(id).is_none() {
                return Err(AuxScoringError::TrialMismatch { example: id.to_string() });
            }
        }
    }

    let mut ranges = Vec::with_capacity(systems.len());
    for (index, system) in systems.iter().enumerate() {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (_, score) in system.iter() {
            min = min.min(score);
            max = max.max(score);
        }
        if max <= min {
            return Err(AuxScoringError::ConstantScores { index });
        }
        ranges.push((min, max));
    }

    let count = systems.len() as f64;
    let mut fused = ScoreFile::new();
    for (id, _) in reference.iter() {
        let mut sum = 0.0;
        for (system, &(min, max)) in systems.iter().zip(&ranges) {
            let score = system.get(id).expect("id sets verified equal");
            sum += (score - min) / (max - min);
        }
        let inserted = fused.insert(id.to_string(), sum / count);
        debug_assert!(inserted);
    }
    Ok(fused)
}

fn symmetric_difference_example(a: &ScoreFile, b: &ScoreFile) -> String {
    for (id, _) in a.iter() {
        if b.get(id).is_none() {
            return id.to_string();
        }
    }
    for (id, _) in b.iter() {
        if a.get(id).is_none() {
            return id.to_string();
        }
    }
    String::new()
}

/// Cosine similarity between the averaged enrollment embeddings and a test
/// embedding, optionally after subtracting a population mean from every
/// vector. The result lies in `[-1, 1]`.
pub fn cosine_score(
    enrollment: &[Vec<f64>],
    test: &[f64],
    mean: Option<&[f64]>,
) -> Result<f64, AuxScoringError> {
    if enrollment.is_empty() {
        return Err(AuxScoringError::EmptyEnrollment);
    }
    let dim = test.len();
    for vector in enrollment.iter().map(Vec::as_slice).chain(mean) {
        if vector.len() != dim {
            return Err(AuxScoringError::EmbeddingDimensionMismatch {
                expected: dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(AuxScoringError::NonFiniteEmbedding);
        }
    }

    let centered = |vector: &[f64], i: usize| vector[i] - mean.map_or(0.0, |m| m[i]);
    let mut averaged = vec![0.0; dim];
    for vector in enrollment {
        for (i, slot) in averaged.iter_mut().enumerate() {
            *slot += centered(vector, i);
        }
    }
    for value in averaged.iter_mut() {
        *value /= enrollment.len() as f64;
    }

    let mut dot = 0.0;
    let mut norm_enroll = 0.0;
    let mut norm_test = 0.0;
    for (i, &e) in averaged.iter().enumerate() {
        let t = centered(test, i);
        dot += e * t;
        norm_enroll += e * e;
        norm_test += t * t;
    }
    if norm_enroll == 0.0 || norm_test == 0.0 {
        return Err(AuxScoringError::ZeroNormAfterNormalization);
    }
    Ok((dot / (norm_enroll.sqrt() * norm_test.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn score_file(pairs: &[(&str, f64)]) -> ScoreFile {
        let mut file = ScoreFile::new();
        for (id, score) in pairs {
            assert!(file.insert(id.to_string(), *score));
        }
        file
    }

    #[test]
    fn class_counts_match_the_reference_configuration() {
        // 400 speakers, 8 spoof methods.
        let counts: Vec<usize> = LabelSchemeKind::ALL
            .iter()
            .map(|&k| LabelScheme::new(k, 400, 8).unwrap().class_count())
            .collect();
        assert_eq!(counts, vec![800, 3600, 401, 9, 2]);
    }

    #[test]
    fn scheme_names_round_trip() {
        for kind in LabelSchemeKind::ALL {
            assert_eq!(LabelSchemeKind::from_name(kind.name()), Some(kind));
        }
        assert_eq!(LabelSchemeKind::from_name("nope"), None);
    }

    #[test]
    fn group_layout_puts_bona_first() {
        let scheme = LabelScheme::new(LabelSchemeKind::SpeakerOneSpoof, 3, 8).unwrap();
        assert_eq!(scheme.group_of(0), Some(ScoreGroup::Bona));
        assert_eq!(scheme.group_of(2), Some(ScoreGroup::Bona));
        assert_eq!(scheme.group_of(3), Some(ScoreGroup::Spoof));
        assert_eq!(scheme.group_of(4), None);
    }

    #[test]
    fn binary_aggregation_is_the_plain_ratio() {
        let scheme = LabelScheme::new(LabelSchemeKind::BinarySpoof, 400, 8).unwrap();
        let llr = aggregate_group_llr(&[0.8, 0.2], &scheme, None).unwrap();
        assert_abs_diff_eq!(llr, 4.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(llr, 1.38629, epsilon = 1e-5);
    }

    #[test]
    fn equal_group_mass_gives_zero() {
        let scheme = LabelScheme::new(LabelSchemeKind::MultiSpoof, 400, 8).unwrap();
        let mut lik = vec![0.0625; 9];
        lik[0] = 0.5;
        assert_abs_diff_eq!(
            aggregate_group_llr(&lik, &scheme, None).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn speaker_pooling_sums_the_bona_block() {
        let scheme = LabelScheme::new(LabelSchemeKind::SpeakerOneSpoof, 400, 8).unwrap();
        let mut lik = vec![0.002; 401];
        lik[400] = 0.2;
        let llr = aggregate_group_llr(&lik, &scheme, None).unwrap();
        assert_abs_diff_eq!(llr, 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn zero_group_sums_clamp() {
        let scheme = LabelScheme::new(LabelSchemeKind::BinarySpoof, 1, 1).unwrap();
        assert_eq!(aggregate_group_llr(&[1.0, 0.0], &scheme, None).unwrap(), 700.0);
        assert_eq!(aggregate_group_llr(&[0.0, 1.0], &scheme, None).unwrap(), -700.0);
    }

    #[test]
    fn dimension_and_prior_validation() {
        let scheme = LabelScheme::new(LabelSchemeKind::MultiSpoof, 400, 8).unwrap();
        assert!(matches!(
            aggregate_group_llr(&[1.0; 4], &scheme, None),
            Err(AuxScoringError::DimensionMismatch { expected: 9, got: 4 })
        ));
        // Priors with zero spoof-group mass are rejected.
        let mut priors = vec![0.0; 9];
        priors[0] = 1.0;
        assert!(matches!(
            aggregate_group_llr(&[0.1; 9], &scheme, Some(&priors)),
            Err(AuxScoringError::InvalidPriors(_))
        ));
    }

    #[test]
    fn self_fusion_is_normalization() {
        let a = score_file(&[("a", 0.0), ("b", 5.0), ("c", 10.0)]);
        let fused = minmax_fuse(&[a.clone(), a]).unwrap();
        assert_eq!(fused.get("a"), Some(0.0));
        assert_eq!(fused.get("b"), Some(0.5));
        assert_eq!(fused.get("c"), Some(1.0));
    }

    #[test]
    fn symmetric_systems_cancel() {
        let a = score_file(&[("a", 0.0), ("b", 10.0)]);
        let b = score_file(&[("a", 10.0), ("b", 0.0)]);
        let fused = minmax_fuse(&[a, b]).unwrap();
        assert_eq!(fused.get("a"), Some(0.5));
        assert_eq!(fused.get("b"), Some(0.5));
    }

    #[test]
    fn three_system_fusion_hand_values() {
        let a = score_file(&[("a", 0.0), ("b", 5.0), ("c", 10.0)]);
        let b = score_file(&[("a", 10.0), ("b", 0.0), ("c", 5.0)]);
        let c = score_file(&[("a", 2.0), ("b", 4.0), ("c", 6.0)]);
        let fused = minmax_fuse(&[a, b, c]).unwrap();
        // Normalized columns: a -> (0, 1, 0), b -> (0.5, 0, 0.5), c -> (1, 0.5, 1).
        assert_abs_diff_eq!(fused.get("a").unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fused.get("b").unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fused.get("c").unwrap(), 5.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn fusion_error_cases() {
        let a = score_file(&[("a", 0.0), ("b", 1.0)]);
        assert!(matches!(
            minmax_fuse(std::slice::from_ref(&a)),
            Err(AuxScoringError::TooFewSystems(1))
        ));
        let constant = score_file(&[("a", 3.0), ("b", 3.0)]);
        assert!(matches!(
            minmax_fuse(&[a.clone(), constant]),
            Err(AuxScoringError::ConstantScores { index: 1 })
        ));
        let other_ids = score_file(&[("a", 0.0), ("z", 1.0)]);
        assert!(matches!(
            minmax_fuse(&[a, other_ids]),
            Err(AuxScoringError::TrialMismatch { .. })
        ));
    }

    #[test]
    fn cosine_self_and_antipodal() {
        let v = vec![1.0, 2.0, -0.5];
        assert_abs_diff_eq!(
            cosine_score(std::slice::from_ref(&v), &v, None).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_abs_diff_eq!(
            cosine_score(std::slice::from_ref(&v), &neg, None).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn enrollment_averaging_hand_example() {
        let enroll = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let got = cosine_score(&enroll, &[1.0, 1.0], None).unwrap();
        assert_abs_diff_eq!(got, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_subtraction_applies_to_all_vectors() {
        let enroll = vec![vec![2.0, 1.0]];
        let test = vec![3.0, 1.0];
        let mean = vec![1.0, 1.0];
        // After centering: enrollment (1, 0), test (2, 0).
        assert_abs_diff_eq!(
            cosine_score(&enroll, &test, Some(&mean)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn cosine_error_cases() {
        assert!(matches!(
            cosine_score(&[], &[1.0], None),
            Err(AuxScoringError::EmptyEnrollment)
        ));
        assert!(matches!(
            cosine_score(&[vec![1.0, 2.0]], &[1.0], None),
            Err(AuxScoringError::EmbeddingDimensionMismatch { .. })
        ));
        let v = vec![1.0, 1.0];
        assert!(matches!(
            cosine_score(std::slice::from_ref(&v), &v, Some(&v)),
            Err(AuxScoringError::ZeroNormAfterNormalization)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn aggregation_invariant_to_in_group_permutation_and_pow2_rescale(
            mut lik in proptest::collection::vec(1e-6f64..10.0, 9),
            swap_a in 1usize..9,
            swap_b in 1usize..9,
            exponent in -8i32..=8,
        ) {
            let scheme = LabelScheme::new(LabelSchemeKind::MultiSpoof, 400, 8).unwrap();
            let base = aggregate_group_llr(&lik, &scheme, None).unwrap();
            // Permuting inside the spoof block changes nothing.
            lik.swap(swap_a, swap_b);
            let permuted = aggregate_group_llr(&lik, &scheme, None).unwrap();
            prop_assert_eq!(base.to_bits(), permuted.to_bits());
            // Power-of-two rescaling of the whole vector is bit-exact.
            let k = (2.0f64).powi(exponent);
            let scaled: Vec<f64> = lik.iter().map(|v| v * k).collect();
            let rescaled = aggregate_group_llr(&scaled, &scheme, None).unwrap();
            prop_assert_eq!(permuted.to_bits(), rescaled.to_bits());
        }

        #[test]
        fn aggregation_invariant_to_general_rescale(
            lik in proptest::collection::vec(1e-6f64..10.0, 9),
            k in 1e-3f64..1e3,
        ) {
            let scheme = LabelScheme::new(LabelSchemeKind::MultiSpoof, 400, 8).unwrap();
            let base = aggregate_group_llr(&lik, &scheme, None).unwrap();
            let scaled: Vec<f64> = lik.iter().map(|v| v * k).collect();
            let rescaled = aggregate_group_llr(&scaled, &scheme, None).unwrap();
            prop_assert!((base - rescaled).abs() < 1e-12);
        }

        #[test]
        fn fused_scores_stay_in_unit_interval_and_absorb_affine_maps(
            scores_a in proptest::collection::vec(-5.0f64..5.0, 4),
            scores_b in proptest::collection::vec(-5.0f64..5.0, 4),
            scale in 0.1f64..10.0,
            offset in -20.0f64..20.0,
        ) {
            prop_assume!(scores_a.iter().any(|&v| v != scores_a[0]));
            prop_assume!(scores_b.iter().any(|&v| v != scores_b[0]));
            let ids = ["p", "q", "r", "s"];
            let file = |values: &[f64]| {
                let mut f = ScoreFile::new();
                for (id, &v) in ids.iter().zip(values) {
                    f.insert(id.to_string(), v);
                }
                f
            };
            let fused = minmax_fuse(&[file(&scores_a), file(&scores_b)]).unwrap();
            for (_, v) in fused.iter() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            // A positive-scale affine map on one system changes nothing.
            let mapped: Vec<f64> = scores_a.iter().map(|v| scale * v + offset).collect();
            let fused_mapped = minmax_fuse(&[file(&mapped), file(&scores_b)]).unwrap();
            for (id, v) in fused.iter() {
                let w = fused_mapped.get(id).unwrap();
                prop_assert!((v - w).abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_bounded_and_scale_invariant(
            raw in proptest::collection::vec(-3.0f64..3.0, 6),
            scale in 0.1f64..50.0,
        ) {
            let enroll = vec![raw[0..3].to_vec()];
            let test = raw[3..6].to_vec();
            prop_assume!(raw[0..3].iter().any(|&v| v.abs() > 1e-9));
            prop_assume!(raw[3..6].iter().any(|&v| v.abs() > 1e-9));
            let base = cosine_score(&enroll, &test, None).unwrap();
            prop_assert!((-1.0..=1.0).contains(&base));
            let scaled: Vec<f64> = test.iter().map(|v| v * scale).collect();
            let rescored = cosine_score(&enroll, &scaled, None).unwrap();
            prop_assert!((base - rescored).abs() < 1e-9);
        }
    }
}
