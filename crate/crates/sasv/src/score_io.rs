//! Score and trial-key file formats, trial joining, and artifact
//! serialization.
//!
//! All tabular files share one convention: UTF-8, LF line endings, fields
//! separated by a single TAB, lines starting with `#` ignored, trailing
//! blank lines ignored. Scores serialize with 17 significant digits so a
//! written file re-parses to bit-identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::calibration::{CalibrationParams, CalibrationResult};
use crate::decision::TrialClass;
use crate::metrics::MetricsReport;
use crate::synth::SynthTrialSet;

/// Scores read from files are clamped to this magnitude so downstream
/// exponentials stay finite in double precision.
pub const SCORE_CLAMP_BOUND: f64 = 700.0;

#[derive(Debug, Error)]
pub enum ScoreIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: line {line}: duplicate trial id '{id}'")]
    DuplicateTrialId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("{path}: missing required key '{key}'")]
    MissingKey { path: String, key: String },
    #[error("join produced no trials")]
    EmptyJoin,
}

/// Scores keyed by trial id, iterated in id order.
#[derive(Debug, Clone, Default)]
pub struct ScoreFile {
    scores: BTreeMap<String, f64>,
}

impl ScoreFile {
    pub fn new() -> ScoreFile {
        ScoreFile::default()
    }

    /// Insert a score; returns false when the id is already present.
    pub fn insert(&mut self, trial_id: String, score: f64) -> bool {
        use std::collections::btree_map::Entry;
        match self.scores.entry(trial_id) {
            Entry::Occupied(_) => false,
            Entry::Vacant(slot) => {
                slot.insert(score);
                true
            }
        }
    }

    pub fn get(&self, trial_id: &str) -> Option<f64> {
        self.scores.get(trial_id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.scores.iter().map(|(id, &s)| (id.as_str(), s))
    }
}

/// Ground-truth classes keyed by trial id, iterated in id order.
#[derive(Debug, Clone, Default)]
pub struct TrialKeyFile {
    classes: BTreeMap<String, TrialClass>,
}

impl TrialKeyFile {
    pub fn new() -> TrialKeyFile {
        TrialKeyFile::default()
    }

    pub fn insert(&mut self, trial_id: String, class: TrialClass) -> bool {
        use std::collections::btree_map::Entry;
        match self.classes.entry(trial_id) {
            Entry::Occupied(_) => false,
            Entry::Vacant(slot) => {
                slot.insert(class);
                true
            }
        }
    }

    pub fn get(&self, trial_id: &str) -> Option<TrialClass> {
        self.classes.get(trial_id).copied()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, TrialClass)> + '_ {
        self.classes.iter().map(|(id, &c)| (id.as_str(), c))
    }
}

/// One fully joined trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: String,
    pub class: TrialClass,
    pub cm_score: f64,
    pub asv_score: f64,
}

/// Inner-joined trials, ordered by trial id so downstream results do not
/// depend on input file order.
#[derive(Debug, Clone, Default)]
pub struct JoinedTrialSet {
    pub records: Vec<TrialRecord>,
}

/// Bookkeeping from a join: what was keyed, kept, dropped, and clamped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JoinReport {
    pub keyed: usize,
    pub joined: usize,
    pub missing_cm: usize,
    pub missing_asv: usize,
    pub clamped_scores: usize,
}

fn clamp_score(score: f64, clamped: &mut usize) -> f64 {
    if score.abs() > SCORE_CLAMP_BOUND {
        *clamped += 1;
        score.clamp(-SCORE_CLAMP_BOUND, SCORE_CLAMP_BOUND)
    } else {
        score
    }
}

/// Inner join of a trial key with CM and ASV score files on trial id.
///
/// Keyed trials missing either score are dropped and counted; surviving
/// scores are clamped to `[-700, 700]` with the clamp count reported.
pub fn join_trials(
    key: &TrialKeyFile,
    cm: &ScoreFile,
    asv: &ScoreFile,
) -> Result<(JoinedTrialSet, JoinReport), ScoreIoError> {
    let mut report = JoinReport {
        keyed: key.len(),
        ..JoinReport::default()
    };
    let mut records = Vec::new();
    for (trial_id, class) in key.iter() {
        let cm_score = cm.get(trial_id);
        let asv_score = asv.get(trial_id);
        if cm_score.is_none() {
            report.missing_cm += 1;
        }
        if asv_score.is_none() {
            report.missing_asv += 1;
        }
        if let (Some(cm_score), Some(asv_score)) = (cm_score, asv_score) {
            records.push(TrialRecord {
                trial_id: trial_id.to_string(),
                class,
                cm_score: clamp_score(cm_score, &mut report.clamped_scores),
                asv_score: clamp_score(asv_score, &mut report.clamped_scores),
            });
        }
    }
    if records.is_empty() {
        return Err(ScoreIoError::EmptyJoin);
    }
    report.joined = records.len();
    Ok((JoinedTrialSet { records }, report))
}

/// A keyless joined row: trial id plus its CM and ASV scores.
pub type ScorePairRow = (String, f64, f64);

/// Inner join of two score files on trial id, for keyless composition.
pub fn join_score_pair(
    cm: &ScoreFile,
    asv: &ScoreFile,
) -> Result<(Vec<ScorePairRow>, JoinReport), ScoreIoError> {
    let mut report = JoinReport::default();
    let mut rows = Vec::new();
    for (trial_id, cm_score) in cm.iter() {
        match asv.get(trial_id) {
            Some(asv_score) => rows.push((
                trial_id.to_string(),
                clamp_score(cm_score, &mut report.clamped_scores),
                clamp_score(asv_score, &mut report.clamped_scores),
            )),
            None => report.missing_asv += 1,
        }
    }
    for (trial_id, _) in asv.iter() {
        if cm.get(trial_id).is_none() {
            report.missing_cm += 1;
        }
    }
    if rows.is_empty() {
        return Err(ScoreIoError::EmptyJoin);
    }
    report.joined = rows.len();
    Ok((rows, report))
}

/// Meaningful lines of a tabular file: 1-based line number plus content,
/// with comments and trailing blank lines stripped. Interior blank lines
/// are an error.
fn data_lines<'a>(path: &str, text: &'a str) -> Result<Vec<(usize, &'a str)>, ScoreIoError> {
    let lines: Vec<&str> = text.split('\n').collect();
    let mut end = lines.len();
    while end > 0 && lines[end - 1].is_empty() {
        end -= 1;
    }
    let mut out = Vec::new();
    for (i, line) in lines[..end].iter().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            return Err(ScoreIoError::Parse {
                path: path.to_string(),
                line: i + 1,
                reason: "blank line".into(),
            });
        }
        out.push((i + 1, *line));
    }
    Ok(out)
}

fn split_two_fields<'a>(
    path: &str,
    line_no: usize,
    line: &'a str,
) -> Result<(&'a str, &'a str), ScoreIoError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 2 {
        return Err(ScoreIoError::Parse {
            path: path.to_string(),
            line: line_no,
            reason: format!("expected 2 TAB-separated fields, found {}", fields.len()),
        });
    }
    if fields[0].is_empty() {
        return Err(ScoreIoError::Parse {
            path: path.to_string(),
            line: line_no,
            reason: "empty trial id".into(),
        });
    }
    Ok((fields[0], fields[1]))
}

fn parse_finite(path: &str, line_no: usize, field: &str) -> Result<f64, ScoreIoError> {
    let value: f64 = field.parse().map_err(|_| ScoreIoError::Parse {
        path: path.to_string(),
        line: line_no,
        reason: format!("'{field}' is not a decimal number"),
    })?;
    if !value.is_finite() {
        return Err(ScoreIoError::Parse {
            path: path.to_string(),
            line: line_no,
            reason: format!("'{field}' is not finite"),
        });
    }
    Ok(value)
}

fn read_text(path: &Path) -> Result<(String, String), ScoreIoError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ScoreIoError::Io {
        path: shown.clone(),
        source,
    })?;
    Ok((shown, text))
}

/// Parse a two-column `trial_id TAB score` file.
pub fn parse_score_file(path: &Path) -> Result<ScoreFile, ScoreIoError> {
    let (shown, text) = read_text(path)?;
    parse_score_text(&shown, &text)
}

fn parse_score_text(shown: &str, text: &str) -> Result<ScoreFile, ScoreIoError> {
    let mut file = ScoreFile::new();
    for (line_no, line) in data_lines(shown, text)? {
        let (id, field) = split_two_fields(shown, line_no, line)?;
        let score = parse_finite(shown, line_no, field)?;
        if !file.insert(id.to_string(), score) {
            return Err(ScoreIoError::DuplicateTrialId {
                path: shown.to_string(),
                line: line_no,
                id: id.to_string(),
            });
        }
    }
    Ok(file)
}

/// Parse a two-column `trial_id TAB class` file.
pub fn parse_key_file(path: &Path) -> Result<TrialKeyFile, ScoreIoError> {
    let (shown, text) = read_text(path)?;
    let mut file = TrialKeyFile::new();
    for (line_no, line) in data_lines(&shown, &text)? {
        let (id, field) = split_two_fields(&shown, line_no, line)?;
        let class = TrialClass::from_token(field).ok_or_else(|| ScoreIoError::Parse {
            path: shown.clone(),
            line: line_no,
            reason: format!(
                "unknown class '{field}' (expected target_bona|nontarget_bona|spoof_target|spoof_nontarget)"
            ),
        })?;
        if !file.insert(id.to_string(), class) {
            return Err(ScoreIoError::DuplicateTrialId {
                path: shown,
                line: line_no,
                id: id.to_string(),
            });
        }
    }
    Ok(file)
}

/// Parse a `trial_id TAB v1 TAB v2 ...` likelihood table. Every row must
/// have the same number of value columns.
pub fn parse_likelihood_file(path: &Path) -> Result<Vec<(String, Vec<f64>)>, ScoreIoError> {
    let (shown, text) = read_text(path)?;
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut width: Option<usize> = None;
    for (line_no, line) in data_lines(&shown, &text)? {
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        if id.is_empty() {
            return Err(ScoreIoError::Parse {
                path: shown.clone(),
                line: line_no,
                reason: "empty trial id".into(),
            });
        }
        let values: Vec<f64> = fields
            .map(|f| parse_finite(&shown, line_no, f))
            .collect::<Result<_, _>>()?;
        if values.is_empty() {
            return Err(ScoreIoError::Parse {
                path: shown.clone(),
                line: line_no,
                reason: "expected at least one value column".into(),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(ScoreIoError::Parse {
                    path: shown.clone(),
                    line: line_no,
                    reason: format!("row has {} columns, file started with {w}", values.len()),
                });
            }
            Some(_) => {}
        }
        if seen.insert(id.to_string(), line_no).is_some() {
            return Err(ScoreIoError::DuplicateTrialId {
                path: shown,
                line: line_no,
                id: id.to_string(),
            });
        }
        rows.push((id.to_string(), values));
    }
    Ok(rows)
}

/// Parse a one-value-per-line priors file.
pub fn parse_priors_file(path: &Path) -> Result<Vec<f64>, ScoreIoError> {
    let (shown, text) = read_text(path)?;
    let mut values = Vec::new();
    for (line_no, line) in data_lines(&shown, &text)? {
        values.push(parse_finite(&shown, line_no, line)?);
    }
    Ok(values)
}

/// Serialize a score with 17 significant digits; round-trips through parse.
pub fn format_score(value: f64) -> String {
    format!("{value:.16e}")
}

fn write_text(path: &Path, text: &str) -> Result<(), ScoreIoError> {
    std::fs::write(path, text).map_err(|source| ScoreIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_score_file(path: &Path, file: &ScoreFile) -> Result<(), ScoreIoError> {
    let mut text = String::new();
    for (id, score) in file.iter() {
        let _ = writeln!(text, "{id}\t{}", format_score(score));
    }
    write_text(path, &text)
}

pub fn write_key_file(path: &Path, file: &TrialKeyFile) -> Result<(), ScoreIoError> {
    let mut text = String::new();
    for (id, class) in file.iter() {
        let _ = writeln!(text, "{id}\t{}", class.token());
    }
    write_text(path, &text)
}

/// Write fitted parameters plus fit diagnostics as `key=value` lines.
pub fn write_calibration_artifact(
    path: &Path,
    result: &CalibrationResult,
) -> Result<(), ScoreIoError> {
    let mut text = String::new();
    let p = result.params;
    let _ = writeln!(text, "asv_offset={}", format_score(p.asv_offset));
    let _ = writeln!(text, "asv_scale={}", format_score(p.asv_scale));
    let _ = writeln!(text, "cm_offset={}", format_score(p.cm_offset));
    let _ = writeln!(text, "cm_scale={}", format_score(p.cm_scale));
    let _ = writeln!(
        text,
        "initial_objective={}",
        format_score(result.initial_objective)
    );
    let _ = writeln!(
        text,
        "final_objective={}",
        format_score(result.final_objective)
    );
    let _ = writeln!(text, "iterations={}", result.iterations);
    let _ = writeln!(text, "converged={}", result.converged);
    let _ = writeln!(text, "gradient_norm={}", format_score(result.gradient_norm));
    write_text(path, &text)
}

/// Read the four calibration parameters back from a `key=value` artifact.
/// Diagnostic keys are ignored.
pub fn read_calibration_params(path: &Path) -> Result<CalibrationParams, ScoreIoError> {
    let (shown, text) = read_text(path)?;
    let mut values: BTreeMap<String, f64> = BTreeMap::new();
    for (line_no, line) in data_lines(&shown, &text)? {
        let Some((key, value)) = line.split_once('=') else {
            return Err(ScoreIoError::Parse {
                path: shown,
                line: line_no,
                reason: "expected key=value".into(),
            });
        };
        if let "asv_offset" | "asv_scale" | "cm_offset" | "cm_scale" = key {
            let parsed = parse_finite(&shown, line_no, value)?;
            if values.insert(key.to_string(), parsed).is_some() {
                return Err(ScoreIoError::Parse {
                    path: shown,
                    line: line_no,
                    reason: format!("duplicate key '{key}'"),
                });
            }
        }
    }
    let fetch = |key: &str| {
        values.get(key).copied().ok_or_else(|| ScoreIoError::MissingKey {
            path: shown.clone(),
            key: key.to_string(),
        })
    };
    let asv_offset = fetch("asv_offset")?;
    let asv_scale = fetch("asv_scale")?;
    let cm_offset = fetch("cm_offset")?;
    let cm_scale = fetch("cm_scale")?;
    CalibrationParams::new(asv_offset, asv_scale, cm_offset, cm_scale).map_err(|_| {
        ScoreIoError::Parse {
            path: shown,
            line: 0,
            reason: "calibration parameters must be finite".into(),
        }
    })
}

/// Machine-readable `key=value` form of a metrics report.
pub fn format_metrics_report(report: &MetricsReport) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "eer={}", format_score(report.eer));
    let _ = writeln!(text, "min_dcf={}", format_score(report.min_dcf));
    let _ = writeln!(text, "act_dcf={}", format_score(report.act_dcf));
    let _ = writeln!(text, "cllr_bits={}", format_score(report.cllr_bits));
    let _ = writeln!(text, "min_a_dcf={}", format_score(report.min_a_dcf));
    let _ = writeln!(
        text,
        "min_a_dcf_threshold={}",
        format_score(report.min_a_dcf_threshold)
    );
    text
}

/// Human-readable table form of a metrics report.
pub fn format_metrics_table(report: &MetricsReport) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "EER:                 {:.6}", report.eer);
    let _ = writeln!(text, "minDCF:              {:.6}", report.min_dcf);
    let _ = writeln!(text, "actDCF:              {:.6}", report.act_dcf);
    let _ = writeln!(text, "Cllr (bits):         {:.6}", report.cllr_bits);
    let _ = writeln!(text, "min a-DCF:           {:.6}", report.min_a_dcf);
    let _ = writeln!(
        text,
        "min a-DCF threshold: {:.6}",
        report.min_a_dcf_threshold
    );
    text
}

/// Write the generated trials plus their hidden ground truth:
/// `trial_id TAB class TAB true_cm_llr TAB true_asv_llr`, with the
/// generating configuration recorded in header comments.
pub fn write_truth_file(path: &Path, set: &SynthTrialSet) -> Result<(), ScoreIoError> {
    let c = &set.config;
    let mut text = String::new();
    let _ = writeln!(text, "# seed={}", c.seed);
    let _ = writeln!(
        text,
        "# n_bona_target={} n_bona_nontarget={} n_spoof_target={}",
        c.n_bona_target, c.n_bona_nontarget, c.n_spoof_target
    );
    let _ = writeln!(
        text,
        "# cm_separation={} asv_separation={}",
        c.cm_separation, c.asv_separation
    );
    let _ = writeln!(
        text,
        "# cm_corruption=({}, {}) asv_corruption=({}, {})",
        c.cm_corruption.scale, c.cm_corruption.offset, c.asv_corruption.scale, c.asv_corruption.offset
    );
    let mut rows: Vec<&crate::synth::SynthTrial> = set.trials.iter().collect();
    rows.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
    for t in rows {
        let _ = writeln!(
            text,
            "{}\t{}\t{}\t{}",
            t.trial_id,
            t.class.token(),
            format_score(t.true_cm_llr),
            format_score(t.true_asv_llr)
        );
    }
    write_text(path, &text)
}
