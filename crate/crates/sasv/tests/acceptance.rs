//! Release acceptance suite: one test per criterion, each printing a PASS
//! line with the measured numbers (run with `-- --nocapture` to see them).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use sasv::calibration::{
    corrected_sasv_llr, fit_calibration, gradient, weighted_logistic_objective,
    CalibrationDataset, CalibrationParams, FitSettings,
};
use sasv::decision::{
    bayes_accept, effective_priors, sasv_llr, CostModel, LlrPair, PriorModel, TrialClass,
};
use sasv::metrics::{self, ADcfConfig, ClassSet, ScoredTrials};
use sasv::synth::{
    generate, oracle_bayes_decision, oracle_eer, oracle_min_a_dcf, oracle_min_dcf, AffineMap,
    SynthConfig,
};

fn asvspoof_costs() -> CostModel {
    CostModel::asvspoof5()
}

fn standard_priors() -> PriorModel {
    PriorModel::new(0.5, 0.25, 0.25, 0.0).unwrap()
}

/// Positive draws spanning several orders of magnitude.
fn log_uniform(rng: &mut ChaCha12Rng, lo_log: f64, hi_log: f64) -> f64 {
    (rng.gen_range(lo_log..hi_log)).exp()
}

fn random_priors(rng: &mut ChaCha12Rng, allow_spoof_nontarget: bool) -> PriorModel {
    loop {
        let mut mass = [0.0f64; 4];
        for m in mass.iter_mut() {
            *m = -rng.gen::<f64>().max(1e-12).ln();
        }
        if !allow_spoof_nontarget {
            mass[3] = 0.0;
        }
        let total: f64 = mass.iter().sum();
        if mass[0] / total < 1e-3 {
            continue;
        }
        if let Ok(p) = PriorModel::new(
            mass[0] / total,
            mass[1] / total,
            mass[2] / total,
            mass[3] / total,
        ) {
            return p;
        }
    }
}

#[test]
fn criterion_decision_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xDEC1);
    let tuples = 10_000;
    let mut api_checked = 0usize;
    for round in 0..tuples {
        let mut costs_raw = [
            log_uniform(&mut rng, -2.3, 2.3),
            log_uniform(&mut rng, -2.3, 2.3),
            log_uniform(&mut rng, -2.3, 2.3),
            log_uniform(&mut rng, -2.3, 2.3),
        ];
        // Occasionally zero one cost to exercise degenerate corners.
        if round % 20 == 0 {
            costs_raw[rng.gen_range(0..4)] = 0.0;
        }
        let costs = CostModel::new(costs_raw[0], costs_raw[1], costs_raw[2], costs_raw[3]).unwrap();
        let priors = random_priors(&mut rng, true);

        // Product-consistent likelihood tuple: the spoofed-impostor
        // likelihood factorizes over the two independent score models.
        let l_bt = log_uniform(&mut rng, -6.0, 6.0);
        let l_bn = log_uniform(&mut rng, -6.0, 6.0);
        let l_st = log_uniform(&mut rng, -6.0, 6.0);
        let l_sn = l_bn * l_st / l_bt;
        let likelihoods = [l_bt, l_bn, l_st, l_sn];

        // Route 1: raw cost-weighted comparison.
        let direct = oracle_bayes_decision(likelihoods, &costs, &priors);

        // Route 2: the same comparison under effective priors.
        let eff = effective_priors(&costs, &priors).unwrap();
        let via_effective = l_bt * eff.bona_target
            > l_bn * eff.bona_nontarget + l_st * eff.spoof_target + l_sn * eff.spoof_nontarget;
        assert_eq!(
            direct, via_effective,
            "effective-prior rule diverged at tuple {round}: {likelihoods:?}"
        );

        // Route 3: composed SASV LLR against the Bayes threshold.
        if let Ok(cond) = eff.conditional_reject_priors() {
            let pair = LlrPair::new((l_bt / l_st).ln(), (l_bt / l_bn).ln()).unwrap();
            let llr = sasv_llr(&pair, &cond);
            let via_api = bayes_accept(llr, &costs, &priors).unwrap();
            assert_eq!(
                direct, via_api,
                "LLR-threshold rule diverged at tuple {round}: {likelihoods:?}"
            );
            api_checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 1.0,
        "decision equivalence took {elapsed:?}, budget 1 s"
    );
    println!(
        "[PASS] decision equivalence: {tuples} random tuples agree across the direct, \
         effective-prior, and LLR-threshold rules ({api_checked} with the API route) in {elapsed:?}"
    );
}

fn corrupted_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        n_bona_target: 100_000,
        n_bona_nontarget: 100_000,
        n_spoof_target: 100_000,
        cm_separation: 3.0,
        asv_separation: 2.5,
        cm_corruption: AffineMap::new(2.0, 3.0).unwrap(),
        asv_corruption: AffineMap::new(0.5, -1.0).unwrap(),
    }
}

#[test]
fn criterion_calibration_recovery() {
    let start = Instant::now();
    let costs = asvspoof_costs();
    let priors = standard_priors();
    let settings = FitSettings::default();

    // Corrupted scores: the fit must invert both affine corruptions.
    let config = corrupted_config(0xCA11B);
    let set = generate(&config).unwrap();
    let data = set.calibration_dataset().unwrap();
    let result = fit_calibration(&data, &costs, &priors, &settings).unwrap();
    assert!(result.converged, "corrupted fit did not converge");
    let expected_cm = config.cm_corruption.inverse();
    let expected_asv = config.asv_corruption.inverse();
    let relative = |got: f64, want: f64| (got - want).abs() / want.abs();
    for (name, got, want) in [
        ("cm_scale", result.params.cm_scale, expected_cm.scale),
        ("cm_offset", result.params.cm_offset, expected_cm.offset),
        ("asv_scale", result.params.asv_scale, expected_asv.scale),
        ("asv_offset", result.params.asv_offset, expected_asv.offset),
    ] {
        assert!(
            relative(got, want) <= 0.10,
            "{name}: fitted {got}, expected {want} within 10% relative"
        );
    }

    // Identity corruption: the fit must stay at the identity transform.
    let identity_config = SynthConfig {
        cm_corruption: AffineMap::identity(),
        asv_corruption: AffineMap::identity(),
        ..corrupted_config(0x1DE47)
    };
    let identity_set = generate(&identity_config).unwrap();
    let identity_data = identity_set.calibration_dataset().unwrap();
    let identity_fit = fit_calibration(&identity_data, &costs, &priors, &settings).unwrap();
    for (name, got, want) in [
        ("asv_offset", identity_fit.params.asv_offset, 0.0),
        ("asv_scale", identity_fit.params.asv_scale, 1.0),
        ("cm_offset", identity_fit.params.cm_offset, 0.0),
        ("cm_scale", identity_fit.params.cm_scale, 1.0),
    ] {
        assert!(
            (got - want).abs() <= 0.05,
            "{name}: fitted {got}, expected {want} within 0.05"
        );
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "calibration recovery took {elapsed:?}, budget 30 s"
    );
    println!(
        "[PASS] calibration recovery: corrupted fit ({:.4}, {:.4}, {:.4}, {:.4}) vs expected \
         ({:.4}, {:.4}, {:.4}, {:.4}); identity fit within 0.05; {elapsed:?}",
        result.params.asv_offset,
        result.params.asv_scale,
        result.params.cm_offset,
        result.params.cm_scale,
        expected_asv.offset,
        expected_asv.scale,
        expected_cm.offset,
        expected_cm.scale,
    );
}

#[test]
fn criterion_calibration_improves_min_a_dcf() {
    let start = Instant::now();
    let costs = asvspoof_costs();
    let priors = standard_priors();

    // Fit on one synthetic draw, evaluate on an independent one.
    let dev = generate(&corrupted_config(0xDE7)).unwrap();
    let eval = generate(&corrupted_config(0xE7A1)).unwrap();
    let fit = fit_calibration(
        &dev.calibration_dataset().unwrap(),
        &costs,
        &priors,
        &FitSettings::default(),
    )
    .unwrap();

    let cond = effective_priors(&costs, &priors)
        .unwrap()
        .conditional_reject_priors()
        .unwrap();
    let uncalibrated = eval
        .scored_with(|t| sasv_llr(&LlrPair::new(t.raw_cm, t.raw_asv).unwrap(), &cond))
        .unwrap();
    let calibrated = eval
        .scored_with(|t| {
            corrected_sasv_llr(
                &LlrPair::new(t.raw_cm, t.raw_asv).unwrap(),
                &fit.params,
                &cond,
            )
            .unwrap()
        })
        .unwrap();

    let cfg = ADcfConfig::new(costs, priors);
    let (uncal, _) = metrics::min_a_dcf(&uncalibrated, &cfg).unwrap();
    let (cal, _) = metrics::min_a_dcf(&calibrated, &cfg).unwrap();
    assert!(
        cal <= uncal,
        "calibrated min a-DCF {cal} exceeds uncalibrated {uncal}"
    );
    let improvement = (uncal - cal) / uncal;
    assert!(
        improvement > 0.01,
        "relative improvement {improvement:.4} is not above 1% (cal {cal}, uncal {uncal})"
    );
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "min a-DCF comparison took {elapsed:?}, budget 30 s"
    );
    println!(
        "[PASS] calibration direction: min a-DCF {cal:.5} calibrated vs {uncal:.5} uncalibrated \
         ({:.1}% relative improvement) in {elapsed:?}",
        improvement * 100.0
    );
}

#[test]
fn criterion_gradient_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x96AD);
    let datasets = 100;
    let step = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..datasets {
        let per_class = rng.gen_range(5..=30);
        let mut class = |shift_cm: f64, shift_asv: f64| {
            (0..per_class)
                .map(|_| {
                    LlrPair::new(
                        shift_cm + rng.gen_range(-4.0..4.0),
                        shift_asv + rng.gen_range(-4.0..4.0),
                    )
                    .unwrap()
                })
                .collect::<Vec<_>>()
        };
        let data = CalibrationDataset::new(
            class(1.0, 1.0),
            class(1.0, -1.0),
            class(-1.0, 1.0),
        )
        .unwrap();
        let costs = CostModel::new(
            rng.gen_range(0.1..5.0),
            rng.gen_range(0.1..5.0),
            rng.gen_range(0.1..5.0),
            rng.gen_range(0.1..5.0),
        )
        .unwrap();
        let priors = random_priors(&mut rng, false);
        let params = CalibrationParams::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        )
        .unwrap();

        let analytic = gradient(&data, &params, &costs, &priors).unwrap();
        let mut x = params.to_array();
        for i in 0..4 {
            let saved = x[i];
            x[i] = saved + step;
            let up =
                weighted_logistic_objective(&data, &CalibrationParams::from_array(x), &costs, &priors)
                    .unwrap();
            x[i] = saved - step;
            let down =
                weighted_logistic_objective(&data, &CalibrationParams::from_array(x), &costs, &priors)
                    .unwrap();
            x[i] = saved;
            let numeric = (up - down) / (2.0 * step);
            let error = (analytic[i] - numeric).abs();
            worst = worst.max(error);
            assert!(
                error < 1e-6,
                "component {i}: analytic {} vs central difference {numeric} (|diff| = {error:.3e})",
                analytic[i]
            );
        }
    }
    println!(
        "[PASS] gradient correctness: analytic gradient within 1e-6 of central differences on \
         {datasets} random datasets (worst |diff| = {worst:.3e})"
    );
}

#[test]
fn criterion_metric_sweeps_match_oracles() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x0AC1E);
    let instances = 200;
    let mut total_trials = 0usize;
    for round in 0..instances {
        let mut items = Vec::new();
        for (class, shift) in [
            (TrialClass::BonaTarget, 1.0f64),
            (TrialClass::BonaNontarget, -0.5),
            (TrialClass::SpoofTarget, -1.0),
            (TrialClass::SpoofNontarget, -1.5),
        ] {
            let n = rng.gen_range(1..=250);
            for _ in 0..n {
                let score = if round % 2 == 0 {
                    shift + rng.gen_range(-2.0..2.0)
                } else {
                    // Coarse quantization forces score ties across classes.
                    ((shift + rng.gen_range(-2.0..2.0)) * 2.0).round() / 2.0
                };
                items.push((score, class));
            }
        }
        total_trials += items.len();
        let trials = ScoredTrials::new(items).unwrap();
        let costs = CostModel::new(
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
        )
        .unwrap();
        let priors = random_priors(&mut rng, true);
        let mut cfg = ADcfConfig::new(costs, priors);
        cfg.normalize = round % 3 == 0;

        let fast = metrics::min_a_dcf(&trials, &cfg).unwrap();
        let naive = oracle_min_a_dcf(&trials, &cfg).unwrap();
        assert_eq!(fast.0.to_bits(), naive.0.to_bits(), "a-DCF value, round {round}");
        assert_eq!(fast.1.to_bits(), naive.1.to_bits(), "a-DCF threshold, round {round}");

        let fast_eer = metrics::eer(&trials, ClassSet::ACCEPT, ClassSet::REJECT).unwrap();
        let naive_eer = oracle_eer(&trials, ClassSet::ACCEPT, ClassSet::REJECT).unwrap();
        assert_eq!(fast_eer.to_bits(), naive_eer.to_bits(), "EER, round {round}");

        let fast_dcf = metrics::min_dcf(&trials, &cfg).unwrap();
        let naive_dcf = oracle_min_dcf(&trials, &cfg).unwrap();
        assert_eq!(fast_dcf.to_bits(), naive_dcf.to_bits(), "minDCF, round {round}");
    }
    println!(
        "[PASS] metric oracles: min a-DCF, EER, and minDCF equal exhaustive enumeration exactly \
         on {instances} random instances ({total_trials} trials)"
    );
}

/// Expected Cllr in bits of exact LLR scores whose positive-class
/// distribution is N(d^2/2, d^2), via Simpson quadrature.
fn analytic_cllr_bits(separation: f64) -> f64 {
    let mean = separation * separation / 2.0;
    let sigma = separation;
    let (lo, hi) = (mean - 12.0 * sigma, mean + 12.0 * sigma);
    let n = 8000; // even
    let h = (hi - lo) / n as f64;
    let density = |x: f64| {
        let z = (x - mean) / sigma;
        (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let integrand = |x: f64| {
        let softplus = (-x).max(0.0) + (-(-x).abs()).exp().ln_1p();
        softplus / std::f64::consts::LN_2 * density(x)
    };
    let mut sum = integrand(lo) + integrand(hi);
    for i in 1..n {
        let weight = if i % 2 == 0 { 2.0 } else { 4.0 };
        sum += weight * integrand(lo + i as f64 * h);
    }
    sum * h / 3.0
}

#[test]
fn criterion_cllr_of_true_llrs_matches_quadrature() {
    let config = SynthConfig {
        seed: 0xC11A,
        n_bona_target: 100_000,
        n_bona_nontarget: 100_000,
        n_spoof_target: 100_000,
        cm_separation: 3.0,
        asv_separation: 2.0,
        cm_corruption: AffineMap::identity(),
        asv_corruption: AffineMap::identity(),
    };
    let set = generate(&config).unwrap();

    // CM stream: bona fide (both bona classes) against spoof.
    let cm_trials = set.scored_with(|t| t.true_cm_llr).unwrap();
    let empirical_cm = metrics::cllr(&cm_trials, ClassSet::BONA, ClassSet::SPOOF).unwrap();
    let analytic_cm = analytic_cllr_bits(config.cm_separation);
    let cm_deviation = (empirical_cm - analytic_cm).abs() / analytic_cm;
    assert!(
        cm_deviation <= 0.02,
        "CM Cllr {empirical_cm:.5} vs analytic {analytic_cm:.5} ({:.2}% off)",
        cm_deviation * 100.0
    );

    // ASV stream: target classes against the impostor class.
    let target = ClassSet::of(&[TrialClass::BonaTarget, TrialClass::SpoofTarget]);
    let nontarget = ClassSet::single(TrialClass::BonaNontarget);
    let asv_trials = set.scored_with(|t| t.true_asv_llr).unwrap();
    let empirical_asv = metrics::cllr(&asv_trials, target, nontarget).unwrap();
    let analytic_asv = analytic_cllr_bits(config.asv_separation);
    let asv_deviation = (empirical_asv - analytic_asv).abs() / analytic_asv;
    assert!(
        asv_deviation <= 0.02,
        "ASV Cllr {empirical_asv:.5} vs analytic {analytic_asv:.5} ({:.2}% off)",
        asv_deviation * 100.0
    );

    // Any non-identity affine corruption must worsen the CM Cllr.
    for corruption in [
        AffineMap::new(2.0, 3.0).unwrap(),
        AffineMap::new(0.5, -1.0).unwrap(),
        AffineMap::new(1.0, 1.0).unwrap(),
        AffineMap::new(3.0, 0.0).unwrap(),
        AffineMap::new(-1.0, 0.0).unwrap(),
    ] {
        let corrupted = set.scored_with(|t| corruption.apply(t.true_cm_llr)).unwrap();
        let cllr = metrics::cllr(&corrupted, ClassSet::BONA, ClassSet::SPOOF).unwrap();
        assert!(
            cllr > empirical_cm,
            "corruption ({}, {}) did not increase Cllr: {cllr:.5} vs {empirical_cm:.5}",
            corruption.scale,
            corruption.offset
        );
    }
    println!(
        "[PASS] Cllr calibration sanity: empirical {empirical_cm:.5} / {empirical_asv:.5} bits \
         vs quadrature {analytic_cm:.5} / {analytic_asv:.5} (both within 2%); every tested \
         corruption increased Cllr"
    );
}

#[test]
fn criterion_optimizer_trace_is_monotone_and_deterministic() {
    let costs = asvspoof_costs();
    let priors = standard_priors();
    let settings = FitSettings::default();
    let fixtures = [
        corrupted_config(0xF1),
        SynthConfig {
            n_bona_target: 500,
            n_bona_nontarget: 400,
            n_spoof_target: 300,
            ..corrupted_config(0xF2)
        },
        SynthConfig {
            cm_corruption: AffineMap::identity(),
            asv_corruption: AffineMap::identity(),
            n_bona_target: 2000,
            n_bona_nontarget: 2000,
            n_spoof_target: 2000,
            ..corrupted_config(0xF3)
        },
    ];
    let mut total_steps = 0usize;
    for (i, config) in fixtures.iter().enumerate() {
        let data = generate(config).unwrap().calibration_dataset().unwrap();
        let first = fit_calibration(&data, &costs, &priors, &settings).unwrap();
        for (step, pair) in first.objective_trace.windows(2).enumerate() {
            assert!(
                pair[1] <= pair[0],
                "fixture {i}: objective rose at step {step}: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(first.final_objective <= first.initial_objective);
        total_steps += first.iterations;

        let second = fit_calibration(&data, &costs, &priors, &settings).unwrap();
        assert_eq!(first.iterations, second.iterations);
        assert_eq!(
            first.final_objective.to_bits(),
            second.final_objective.to_bits()
        );
        let a = first.params.to_array();
        let b = second.params.to_array();
        for i in 0..4 {
            assert_eq!(a[i].to_bits(), b[i].to_bits());
        }
        assert_eq!(first.objective_trace.len(), second.objective_trace.len());
        for (x, y) in first.objective_trace.iter().zip(&second.objective_trace) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    println!(
        "[PASS] monotone improvement: objective traces non-increasing and refits bit-identical \
         across {} fixtures ({total_steps} total steps)",
        fixtures.len()
    );
}

#[test]
fn criterion_aux_scoring_hand_checks() {
    use sasv::aux_scoring::{
        aggregate_group_llr, cosine_score, minmax_fuse, LabelScheme, LabelSchemeKind,
    };
    use sasv::score_io::ScoreFile;

    // Label-scheme class counts for 400 speakers and 8 spoof methods.
    let counts: Vec<usize> = LabelSchemeKind::ALL
        .iter()
        .map(|&k| LabelScheme::new(k, 400, 8).unwrap().class_count())
        .collect();
    assert_eq!(counts, vec![800, 3600, 401, 9, 2]);

    // Two-class ratio.
    let binspf = LabelScheme::new(LabelSchemeKind::BinarySpoof, 400, 8).unwrap();
    let llr = aggregate_group_llr(&[0.8, 0.2], &binspf, None).unwrap();
    assert!((llr - 4.0f64.ln()).abs() < 1e-12);

    // Equal group mass.
    let mulspf = LabelScheme::new(LabelSchemeKind::MultiSpoof, 400, 8).unwrap();
    let mut lik = vec![0.0625; 9];
    lik[0] = 0.5;
    assert!(aggregate_group_llr(&lik, &mulspf, None).unwrap().abs() < 1e-12);

    // Speaker pooling: 400 bona classes of 0.002 against one spoof of 0.2.
    let onespf = LabelScheme::new(LabelSchemeKind::SpeakerOneSpoof, 400, 8).unwrap();
    let mut lik = vec![0.002; 401];
    lik[400] = 0.2;
    let pooled = aggregate_group_llr(&lik, &onespf, None).unwrap();
    assert!((pooled - 4.0f64.ln()).abs() < 1e-12);

    // Three-system fusion against hand-computed means.
    let file = |pairs: &[(&str, f64)]| {
        let mut f = ScoreFile::new();
        for (id, s) in pairs {
            f.insert(id.to_string(), *s);
        }
        f
    };
    let fused = minmax_fuse(&[
        file(&[("a", 0.0), ("b", 5.0), ("c", 10.0)]),
        file(&[("a", 10.0), ("b", 0.0), ("c", 5.0)]),
        file(&[("a", 2.0), ("b", 4.0), ("c", 6.0)]),
    ])
    .unwrap();
    assert!((fused.get("a").unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!((fused.get("b").unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!((fused.get("c").unwrap() - 5.0 / 6.0).abs() < 1e-15);

    // Averaged enrollment parallel to the test embedding.
    let enroll = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let cosine = cosine_score(&enroll, &[1.0, 1.0], None).unwrap();
    assert!((cosine - 1.0).abs() < 1e-12);

    println!(
        "[PASS] aux scoring: class counts (800, 3600, 401, 9, 2), aggregation ratios, \
         three-system fusion, and enrollment-averaged cosine all match hand values"
    );
}
