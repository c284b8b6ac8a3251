//! Command-line surface tying the toolkit together.
//!
//! Subcommands: `calibrate`, `compose`, `evaluate`, `simulate`, `fuse`,
//! `aggregate`. Data products go to files (evaluate additionally prints its
//! report); diagnostics go to standard error so pipelines stay clean.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
//! Failures print a single machine-parseable line to standard error:
//! `error: <class>: <detail>`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::aux_scoring::{self, AuxScoringError, LabelScheme, LabelSchemeKind};
use crate::calibration::{
    corrected_sasv_llr, fit_calibration, CalibrationDataset, CalibrationError, FitSettings,
};
use crate::decision::{effective_priors, sasv_llr, CostModel, LlrPair, PriorModel};
use crate::metrics::{metrics_report, ADcfConfig, EvalMode, MetricsError, ScoredTrials};
use crate::score_io::{
    self, format_metrics_report, format_metrics_table, join_score_pair, join_trials,
    parse_key_file, parse_likelihood_file, parse_priors_file, parse_score_file, JoinReport,
    ScoreFile, TrialKeyFile,
};
use crate::synth::{generate, AffineMap, SynthConfig};

/// Parse arguments, run the selected subcommand, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}: {}", err.class(), err.detail());
            err.exit_code()
        }
    }
}

enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Data(_) => "DataError",
            CliError::Numerical(_) => "NumericalError",
        }
    }

    fn detail(&self) -> &str {
        match self {
            CliError::Usage(d) | CliError::Data(d) | CliError::Numerical(d) => d,
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn calibration_error(e: CalibrationError) -> CliError {
    match e {
        CalibrationError::EmptyClass(_) | CalibrationError::NonFiniteParams => data(e),
        CalibrationError::UnsupportedSpoofNontarget => usage(e),
        _ => numerical(e),
    }
}

fn metrics_error(e: MetricsError) -> CliError {
    match e {
        MetricsError::EmptyClass(_)
        | MetricsError::NonFiniteScore(_)
        | MetricsError::OverlappingClassSets => data(e),
        MetricsError::ZeroDefaultCost | MetricsError::Decision(_) => numerical(e),
    }
}

fn aux_error(e: AuxScoringError) -> CliError {
    match e {
        AuxScoringError::TooFewSystems(_) => usage(e),
        _ => data(e),
    }
}

#[derive(Parser)]
#[command(
    name = "sasv",
    version,
    about = "Score-level toolkit for spoofing-robust speaker verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Jointly fit affine CM/ASV calibration by weighted logistic regression
    Calibrate(CalibrateArgs),
    /// Compose CM and ASV scores into SASV LLRs
    Compose(ComposeArgs),
    /// Compute detection metrics for a keyed score file
    Evaluate(EvaluateArgs),
    /// Generate synthetic trials with known ground-truth LLRs
    Simulate(SimulateArgs),
    /// Average systems after per-system min-max normalization
    Fuse(FuseArgs),
    /// Aggregate per-class likelihoods into bona/spoof LLRs
    Aggregate(AggregateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CostPreset {
    /// Miss cost 1, all false-accept costs 10.
    Asvspoof5,
}

#[derive(Args, Debug)]
struct CostArgs {
    /// Cost of rejecting a bona-fide target trial
    #[arg(long, value_name = "COST", allow_negative_numbers = true)]
    c_miss: Option<f64>,
    /// Cost of accepting a bona-fide impostor trial
    #[arg(long, value_name = "COST", allow_negative_numbers = true)]
    c_fa_imp: Option<f64>,
    /// Cost of accepting a spoofed target trial
    #[arg(long, value_name = "COST", allow_negative_numbers = true)]
    c_fa_spoof: Option<f64>,
    /// Cost of accepting a spoofed impostor trial
    #[arg(long, value_name = "COST", allow_negative_numbers = true)]
    c_fa_spoof_imp: Option<f64>,
    /// Named cost preset; explicit cost flags override its entries
    #[arg(long, value_enum)]
    preset: Option<CostPreset>,
}

impl CostArgs {
    fn resolve(&self) -> Result<CostModel, CliError> {
        let base = match self.preset {
            Some(CostPreset::Asvspoof5) => CostModel::asvspoof5(),
            None => CostModel::unit(),
        };
        CostModel::new(
            self.c_miss.unwrap_or(base.miss),
            self.c_fa_imp.unwrap_or(base.fa_impostor),
            self.c_fa_spoof.unwrap_or(base.fa_spoof),
            self.c_fa_spoof_imp.unwrap_or(base.fa_spoof_impostor),
        )
        .map_err(usage)
    }
}

#[derive(Args, Debug)]
struct PriorArgs {
    /// Prior of the bona-fide target class
    #[arg(long, value_name = "PROB", allow_negative_numbers = true)]
    p_bt: f64,
    /// Prior of the bona-fide impostor class
    #[arg(long, value_name = "PROB", allow_negative_numbers = true)]
    p_bn: f64,
    /// Prior of the spoofed target class
    #[arg(long, value_name = "PROB", allow_negative_numbers = true)]
    p_st: f64,
    /// Prior of the spoofed impostor class
    #[arg(long, value_name = "PROB", default_value_t = 0.0, allow_negative_numbers = true)]
    p_sn: f64,
}

impl PriorArgs {
    fn resolve(&self) -> Result<PriorModel, CliError> {
        PriorModel::new(self.p_bt, self.p_bn, self.p_st, self.p_sn).map_err(usage)
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Trial-key file (trial_id TAB class)
    #[arg(long)]
    key: PathBuf,
    /// Raw CM score file
    #[arg(long)]
    cm: PathBuf,
    /// Raw ASV score file
    #[arg(long)]
    asv: PathBuf,
    #[command(flatten)]
    costs: CostArgs,
    #[command(flatten)]
    priors: PriorArgs,
    /// Output parameter artifact (key=value lines)
    #[arg(long)]
    out: PathBuf,
    /// Gradient infinity-norm convergence tolerance
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Optimizer iteration budget
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
}

#[derive(Args)]
struct ComposeArgs {
    /// Raw CM score file
    #[arg(long)]
    cm: PathBuf,
    /// Raw ASV score file
    #[arg(long)]
    asv: PathBuf,
    /// Calibration parameter artifact; omit for the uncalibrated composition
    #[arg(long)]
    params: Option<PathBuf>,
    #[command(flatten)]
    costs: CostArgs,
    #[command(flatten)]
    priors: PriorArgs,
    /// Output SASV LLR score file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trial-key file (trial_id TAB class)
    #[arg(long)]
    key: PathBuf,
    /// Score file to evaluate
    #[arg(long)]
    scores: PathBuf,
    #[command(flatten)]
    costs: CostArgs,
    #[command(flatten)]
    priors: PriorArgs,
    /// Evaluate as a binary countermeasure: EER and Cllr use the bona/spoof split
    #[arg(long)]
    binary_cm: bool,
    /// Normalize the a-DCF by the better default-decision cost
    #[arg(long)]
    normalize_a_dcf: bool,
    /// Also write the machine-readable report to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Generator seed
    #[arg(long)]
    seed: u64,
    /// Bona-fide target trials
    #[arg(long)]
    n_bt: usize,
    /// Bona-fide impostor trials
    #[arg(long)]
    n_bn: usize,
    /// Spoofed target trials
    #[arg(long)]
    n_st: usize,
    /// Gap between the CM latent class means, in standard deviations
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    cm_separation: f64,
    /// Gap between the ASV latent class means, in standard deviations
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    asv_separation: f64,
    /// Affine corruption applied to the true CM LLRs: scale
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    cm_scale: f64,
    /// Affine corruption applied to the true CM LLRs: offset
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    cm_offset: f64,
    /// Affine corruption applied to the true ASV LLRs: scale
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    asv_scale: f64,
    /// Affine corruption applied to the true ASV LLRs: offset
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    asv_offset: f64,
    /// Output trial-key file
    #[arg(long)]
    out_key: PathBuf,
    /// Output raw CM score file
    #[arg(long)]
    out_cm: PathBuf,
    /// Output raw ASV score file
    #[arg(long)]
    out_asv: PathBuf,
    /// Output ground-truth sidecar file
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Input score files (two or more)
    #[arg(long, num_args = 2.., required = true)]
    inputs: Vec<PathBuf>,
    /// Output fused score file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    /// Likelihood table: trial_id plus one TAB-separated column per class
    #[arg(long)]
    likelihoods: PathBuf,
    /// Label scheme: spk-binspf, spk-mulspf, spk-onespf, mulspf, or binspf
    #[arg(long)]
    scheme: String,
    /// Number of speakers in the class layout
    #[arg(long)]
    speakers: usize,
    /// Number of spoof methods in the class layout
    #[arg(long)]
    spoof_types: usize,
    /// Optional per-class prior file (one value per line); uniform otherwise
    #[arg(long)]
    priors: Option<PathBuf>,
    /// Output score file of aggregated LLRs
    #[arg(long)]
    out: PathBuf,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate(args) => run_calibrate(args),
        Command::Compose(args) => run_compose(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Fuse(args) => run_fuse(args),
        Command::Aggregate(args) => run_aggregate(args),
    }
}

fn log_join(report: &JoinReport) {
    if report.missing_cm > 0 || report.missing_asv > 0 {
        eprintln!(
            "note: dropped trials without both scores (missing cm: {}, missing asv: {})",
            report.missing_cm, report.missing_asv
        );
    }
    if report.clamped_scores > 0 {
        eprintln!(
            "note: clamped {} scores to [-{b}, {b}]",
            report.clamped_scores,
            b = score_io::SCORE_CLAMP_BOUND
        );
    }
}

fn run_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let key = parse_key_file(&args.key).map_err(data)?;
    let cm = parse_score_file(&args.cm).map_err(data)?;
    let asv = parse_score_file(&args.asv).map_err(data)?;
    let (joined, report) = join_trials(&key, &cm, &asv).map_err(data)?;
    log_join(&report);
    let (dataset, skipped) = CalibrationDataset::from_trials(&joined).map_err(calibration_error)?;
    if skipped > 0 {
        eprintln!("note: {skipped} spoof_nontarget trials take no part in the fit");
    }
    let costs = args.costs.resolve()?;
    let priors = args.priors.resolve()?;
    let settings = FitSettings {
        gradient_tolerance: args.tolerance,
        max_iterations: args.max_iterations,
    };
    let result =
        fit_calibration(&dataset, &costs, &priors, &settings).map_err(calibration_error)?;
    score_io::write_calibration_artifact(&args.out, &result).map_err(data)?;
    eprintln!(
        "calibrate: objective {:.6} -> {:.6} in {} iterations (converged: {})",
        result.initial_objective, result.final_objective, result.iterations, result.converged
    );
    Ok(())
}

fn run_compose(args: ComposeArgs) -> Result<(), CliError> {
    let cm = parse_score_file(&args.cm).map_err(data)?;
    let asv = parse_score_file(&args.asv).map_err(data)?;
    let (rows, report) = join_score_pair(&cm, &asv).map_err(data)?;
    log_join(&report);
    let costs = args.costs.resolve()?;
    let priors = args.priors.resolve()?;
    let effective = effective_priors(&costs, &priors).map_err(numerical)?;
    let cond = effective.conditional_reject_priors().map_err(numerical)?;
    let params = args
        .params
        .as_deref()
        .map(score_io::read_calibration_params)
        .transpose()
        .map_err(data)?;

    let mut out = ScoreFile::new();
    for (trial_id, cm_score, asv_score) in rows {
        let raw = LlrPair::new(cm_score, asv_score).map_err(data)?;
        let llr = match &params {
            Some(p) => corrected_sasv_llr(&raw, p, &cond).map_err(calibration_error)?,
            None => sasv_llr(&raw, &cond),
        };
        out.insert(trial_id, llr);
    }
    score_io::write_score_file(&args.out, &out).map_err(data)?;
    eprintln!("compose: wrote {} SASV LLRs", out.len());
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let key = parse_key_file(&args.key).map_err(data)?;
    let scores = parse_score_file(&args.scores).map_err(data)?;
    let mut items = Vec::new();
    let mut missing = 0usize;
    for (trial_id, class) in key.iter() {
        match scores.get(trial_id) {
            Some(score) => items.push((score, class)),
            None => missing += 1,
        }
    }
    if missing > 0 {
        eprintln!("note: dropped {missing} keyed trials without scores");
    }
    let unkeyed = scores.len() - items.len();
    if unkeyed > 0 {
        eprintln!("note: ignored {unkeyed} scores without key entries");
    }
    if items.is_empty() {
        return Err(CliError::Data("join produced no trials".into()));
    }
    let trials = ScoredTrials::new(items).map_err(metrics_error)?;
    let cfg = ADcfConfig {
        costs: args.costs.resolve()?,
        priors: args.priors.resolve()?,
        normalize: args.normalize_a_dcf,
    };
    let mode = if args.binary_cm {
        EvalMode::BinaryCm
    } else {
        EvalMode::Sasv
    };
    let report = metrics_report(&trials, &cfg, mode).map_err(metrics_error)?;
    print!("{}", format_metrics_table(&report));
    println!();
    print!("{}", format_metrics_report(&report));
    if let Some(path) = &args.out {
        std::fs::write(path, format_metrics_report(&report))
            .map_err(|e| data(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        seed: args.seed,
        n_bona_target: args.n_bt,
        n_bona_nontarget: args.n_bn,
        n_spoof_target: args.n_st,
        cm_separation: args.cm_separation,
        asv_separation: args.asv_separation,
        cm_corruption: AffineMap::new(args.cm_scale, args.cm_offset).map_err(usage)?,
        asv_corruption: AffineMap::new(args.asv_scale, args.asv_offset).map_err(usage)?,
    };
    let set = generate(&config).map_err(usage)?;
    let mut key = TrialKeyFile::new();
    let mut cm = ScoreFile::new();
    let mut asv = ScoreFile::new();
    for t in &set.trials {
        key.insert(t.trial_id.clone(), t.class);
        cm.insert(t.trial_id.clone(), t.raw_cm);
        asv.insert(t.trial_id.clone(), t.raw_asv);
    }
    score_io::write_key_file(&args.out_key, &key).map_err(data)?;
    score_io::write_score_file(&args.out_cm, &cm).map_err(data)?;
    score_io::write_score_file(&args.out_asv, &asv).map_err(data)?;
    score_io::write_truth_file(&args.out_truth, &set).map_err(data)?;
    eprintln!("simulate: wrote {} trials", set.trials.len());
    Ok(())
}

fn run_fuse(args: FuseArgs) -> Result<(), CliError> {
    let systems: Vec<ScoreFile> = args
        .inputs
        .iter()
        .map(|p| parse_score_file(p))
        .collect::<Result<_, _>>()
        .map_err(data)?;
    let fused = aux_scoring::minmax_fuse(&systems).map_err(aux_error)?;
    score_io::write_score_file(&args.out, &fused).map_err(data)?;
    eprintln!("fuse: averaged {} systems over {} trials", systems.len(), fused.len());
    Ok(())
}

fn run_aggregate(args: AggregateArgs) -> Result<(), CliError> {
    let kind = LabelSchemeKind::from_name(&args.scheme).ok_or_else(|| {
        usage(format!(
            "unknown scheme '{}' (expected spk-binspf, spk-mulspf, spk-onespf, mulspf, or binspf)",
            args.scheme
        ))
    })?;
    let scheme = LabelScheme::new(kind, args.speakers, args.spoof_types).map_err(usage)?;
    let rows = parse_likelihood_file(&args.likelihoods).map_err(data)?;
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no likelihood rows",
            args.likelihoods.display()
        )));
    }
    let priors = args
        .priors
        .as_deref()
        .map(Path::to_path_buf)
        .map(|p| parse_priors_file(&p))
        .transpose()
        .map_err(data)?;
    let mut out = ScoreFile::new();
    for (trial_id, likelihoods) in rows {
        let llr = aux_scoring::aggregate_group_llr(&likelihoods, &scheme, priors.as_deref())
            .map_err(aux_error)?;
        out.insert(trial_id, llr);
    }
    score_io::write_score_file(&args.out, &out).map_err(data)?;
    eprintln!("aggregate: wrote {} LLRs ({} classes)", out.len(), scheme.class_count());
    Ok(())
}
