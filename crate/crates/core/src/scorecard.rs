//! Session scoring and training-program metrics.

use std::fmt;
use std::io::BufRead;
use std::sync::Arc;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::respond::NGramLM;
use crate::simcore::{SessionRecord, Speaker};
use crate::textenc::TextMatcher;
use crate::Scalar;

pub const FLUENCY_WEIGHT: f64 = 0.35;
pub const CONSISTENCY_WEIGHT: f64 = 0.35;
pub const COMPLIANCE_WEIGHT: f64 = 0.30;
pub const CONSISTENCY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("score undefined: {0}")]
    Undefined(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Mean and spread of per-token NLL over reference agent turns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluencyCalibration {
    pub mu: f64,
    pub sigma: f64,
}

impl FluencyCalibration {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, ScoreError> {
        if !mu.is_finite() || !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ScoreError::Config(format!("bad calibration mu={mu} sigma={sigma}")));
        }
        Ok(FluencyCalibration { mu, sigma })
    }

    /// Population mean and standard deviation of per-token NLL.
    pub fn fit<S: AsRef<str>>(lm: &NGramLM, texts: &[S]) -> Result<Self, ScoreError> {
        let nll: Vec<f64> = texts
            .iter()
            .map(|t| -lm.logprob(t.as_ref()).per_token)
            .collect();
        if nll.len() < 2 {
            return Err(ScoreError::Config("calibration needs at least 2 texts".into()));
        }
        let n = nll.len() as f64;
        let mu = nll.iter().sum::<f64>() / n;
        let var = nll.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
        FluencyCalibration::new(mu, var.sqrt())
    }
}

/// Per-turn fluency in `[0, 1]`.
pub trait FluencyBackend: Send + Sync {
    fn turn_fluency(&self, text: &str) -> f64;
}

/// `logistic((μ − nll) / σ)` under an agent-turn language model.
#[derive(Debug, Clone)]
pub struct NGramFluency {
    pub lm: Arc<NGramLM>,
    pub calibration: FluencyCalibration,
}

impl FluencyBackend for NGramFluency {
    fn turn_fluency(&self, text: &str) -> f64 {
        let nll = -self.lm.logprob(text).per_token;
        logistic((self.calibration.mu - nll) / self.calibration.sigma)
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn trainee_turns(record: &SessionRecord) -> Vec<(usize, &str, Option<usize>)> {
    record
        .transcript
        .iter()
        .enumerate()
        .filter(|(_, e)| e.speaker == Speaker::Trainee)
        .map(|(i, e)| (i, e.text.as_str(), e.expected_index))
        .collect()
}

/// Mean per-turn fluency and the per-turn values.
pub fn fluency_score(record: &SessionRecord, backend: &dyn FluencyBackend) -> Result<(f64, Vec<f64>), ScoreError> {
    let turns = trainee_turns(record);
    if turns.is_empty() {
        return Err(ScoreError::Undefined("session has no trainee turns".into()));
    }
    let per: Vec<f64> = turns
        .iter()
        .map(|(_, t, _)| backend.turn_fluency(t).clamp(0.0, 1.0))
        .collect();
    Ok((per.iter().sum::<f64>() / per.len() as f64, per))
}

/// Share of trainee turns similar enough to the script utterance they were
/// aligned with.
pub fn consistency_score(
    record: &SessionRecord,
    matcher: &dyn TextMatcher,
    threshold: f64,
) -> Result<(f64, Vec<bool>), ScoreError> {
    let turns = trainee_turns(record);
    if turns.is_empty() {
        return Err(ScoreError::Undefined("session has no trainee turns".into()));
    }
    let agent = record.script.agent_turns();
    let mut matched = Vec::with_capacity(turns.len());
    for (i, text, expected) in &turns {
        let k = expected.ok_or_else(|| ScoreError::Contract(format!("turn {i} lacks alignment")))?;
        let want = agent
            .get(k)
            .ok_or_else(|| ScoreError::Contract(format!("turn {i} aligned past script end")))?;
        matched.push(matcher.similarity(text, &want.text) >= threshold);
    }
    let hits = matched.iter().filter(|m| **m).count();
    Ok((hits as f64 / matched.len() as f64, matched))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    ForbiddenPattern,
    RequiredOpening,
    RequiredClosing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub rule_id: String,
    pub kind: RuleKind,
    pub pattern: String,
    pub message: String,
}

/// A compliance rule with its pattern compiled (case-insensitive).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RuleRecord", into = "RuleRecord")]
pub struct ComplianceRule {
    pub rule_id: String,
    pub kind: RuleKind,
    pub pattern: String,
    pub message: String,
    regex: Regex,
}

impl PartialEq for ComplianceRule {
    fn eq(&self, other: &Self) -> bool {
        RuleRecord::from(self.clone()) == RuleRecord::from(other.clone())
    }
}

impl TryFrom<RuleRecord> for ComplianceRule {
    type Error = ScoreError;

    fn try_from(r: RuleRecord) -> Result<Self, ScoreError> {
        if r.rule_id.trim().is_empty() {
            return Err(ScoreError::Config("empty rule_id".into()));
        }
        if r.message.trim().is_empty() {
            return Err(ScoreError::Config(format!("rule {}: empty message", r.rule_id)));
        }
        let regex = RegexBuilder::new(&r.pattern)
            .case_insensitive(true)
            .build()
            .map_err(|e| ScoreError::Config(format!("rule {}: {e}", r.rule_id)))?;
        Ok(ComplianceRule {
            rule_id: r.rule_id,
            kind: r.kind,
            pattern: r.pattern,
            message: r.message,
            regex,
        })
    }
}

impl From<ComplianceRule> for RuleRecord {
    fn from(r: ComplianceRule) -> Self {
        RuleRecord {
            rule_id: r.rule_id,
            kind: r.kind,
            pattern: r.pattern,
            message: r.message,
        }
    }
}

impl fmt::Display for ScoreErrorAt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreErrorAt {
    pub line: usize,
    pub error: ScoreError,
}

impl std::error::Error for ScoreErrorAt {}

impl ComplianceRule {
    pub fn new(
        rule_id: impl Into<String>,
        kind: RuleKind,
        pattern: impl Into<String>,
        message: impl Into<String>,
    ) -> Result<Self, ScoreError> {
        RuleRecord {
            rule_id: rule_id.into(),
            kind,
            pattern: pattern.into(),
            message: message.into(),
        }
        .try_into()
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.regex.is_match(text)
    }
}

/// Reads one JSON rule per line; blank lines are skipped. Fails on the first
/// bad line.
pub fn load_rules<R: BufRead>(reader: R) -> Result<Vec<ComplianceRule>, ScoreErrorAt> {
    let mut rules = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let at = |error| ScoreErrorAt { line: i + 1, error };
        let line = line.map_err(|e| at(ScoreError::Config(e.to_string())))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RuleRecord =
            serde_json::from_str(&line).map_err(|e| at(ScoreError::Config(e.to_string())))?;
        rules.push(ComplianceRule::try_from(rec).map_err(at)?);
    }
    Ok(rules)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: String,
    /// Transcript index of the offending trainee turn, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<usize>,
    pub message: String,
}

/// 1 when no rule is violated, else 0; violations sorted by rule then turn.
pub fn compliance_score(record: &SessionRecord, rules: &[ComplianceRule]) -> (u8, Vec<Violation>) {
    let turns = trainee_turns(record);
    let mut out = Vec::new();
    for r in rules {
        let violation = |turn_index| Violation {
            rule_id: r.rule_id.clone(),
            turn_index,
            message: r.message.clone(),
        };
        match r.kind {
            RuleKind::ForbiddenPattern => {
                for (i, text, _) in &turns {
                    if r.is_match(text) {
                        out.push(violation(Some(*i)));
                    }
                }
            }
            RuleKind::RequiredOpening | RuleKind::RequiredClosing => {
                let turn = if r.kind == RuleKind::RequiredOpening {
                    turns.first()
                } else {
                    turns.last()
                };
                match turn {
                    Some((i, text, _)) if !r.is_match(text) => out.push(violation(Some(*i))),
                    None => out.push(violation(None)),
                    _ => {}
                }
            }
        }
    }
    out.sort();
    out.dedup();
    (u8::from(out.is_empty()), out)
}

/// `0.35·f + 0.35·c + 0.30·p`.
pub fn final_score(fluency: f64, consistency: f64, compliance: u8) -> Result<f64, ScoreError> {
    if !(0.0..=1.0).contains(&fluency) || !(0.0..=1.0).contains(&consistency) || compliance > 1 {
        return Err(ScoreError::Contract(format!(
            "sub-scores out of range: {fluency}, {consistency}, {compliance}"
        )));
    }
    Ok(FLUENCY_WEIGHT * fluency + CONSISTENCY_WEIGHT * consistency + COMPLIANCE_WEIGHT * f64::from(compliance))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackThresholds {
    pub fluency: f64,
    pub consistency: f64,
}

impl Default for FeedbackThresholds {
    fn default() -> Self {
        FeedbackThresholds {
            fluency: 0.6,
            consistency: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnDetail {
    /// Transcript index.
    pub turn_index: usize,
    pub fluency_turn: f64,
    pub matched: bool,
    pub expected: String,
    pub violations: Vec<String>,
}

/// Score report; field names are part of the HTTP contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub session_id: String,
    pub fluency: f64,
    pub consistency: f64,
    pub compliance: u8,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub reasons: Vec<String>,
    pub per_turn: Vec<TurnDetail>,
    pub violations: Vec<Violation>,
}

/// Reasons in the order compliance, consistency, fluency.
pub fn build_feedback(score: &SessionScore, thresholds: &FeedbackThresholds) -> Vec<String> {
    let mut reasons = Vec::new();
    if score.compliance == 0 {
        for v in &score.violations {
            reasons.push(v.message.clone());
        }
    }
    if score.consistency < thresholds.consistency {
        let misses: Vec<String> = score
            .per_turn
            .iter()
            .filter(|t| !t.matched)
            .map(|t| format!("turn {} (expected: \"{}\")", t.turn_index, t.expected))
            .collect();
        reasons.push(format!(
            "Consistency {:.2}: replies did not follow the standard procedure at {}",
            score.consistency,
            misses.join("; ")
        ));
    }
    if score.fluency < thresholds.fluency {
        if let Some(worst) = score
            .per_turn
            .iter()
            .min_by(|a, b| a.fluency_turn.total_cmp(&b.fluency_turn).then(a.turn_index.cmp(&b.turn_index)))
        {
            reasons.push(format!(
                "Fluency {:.2}: least fluent reply is turn {} (score {:.2})",
                score.fluency, worst.turn_index, worst.fluency_turn
            ));
        }
    }
    reasons
}

/// Everything needed to score a session.
#[derive(Clone)]
pub struct Scorer {
    pub fluency: Arc<dyn FluencyBackend>,
    pub matcher: Arc<dyn TextMatcher>,
    pub rules: Vec<ComplianceRule>,
    pub threshold: f64,
    pub feedback: FeedbackThresholds,
}

impl Scorer {
    pub fn score(&self, record: &SessionRecord) -> Result<SessionScore, ScoreError> {
        score_session(record, self)
    }
}

pub fn score_session(record: &SessionRecord, scorer: &Scorer) -> Result<SessionScore, ScoreError> {
    let (fluency, per_fluency) = fluency_score(record, scorer.fluency.as_ref())?;
    let (consistency, matched) = consistency_score(record, scorer.matcher.as_ref(), scorer.threshold)?;
    let (compliance, violations) = compliance_score(record, &scorer.rules);
    let final_score = final_score(fluency, consistency, compliance)?;
    let agent = record.script.agent_turns();
    let per_turn = trainee_turns(record)
        .into_iter()
        .enumerate()
        .map(|(k, (i, _, expected))| TurnDetail {
            turn_index: i,
            fluency_turn: per_fluency[k],
            matched: matched[k],
            expected: expected
                .and_then(|e| agent.get(e))
                .map(|t| t.text.clone())
                .unwrap_or_default(),
            violations: violations
                .iter()
                .filter(|v| v.turn_index == Some(i))
                .map(|v| v.rule_id.clone())
                .collect(),
        })
        .collect();
    let mut score = SessionScore {
        session_id: record.session_id.clone(),
        fluency,
        consistency,
        compliance,
        final_score,
        reasons: Vec::new(),
        per_turn,
        violations,
    };
    score.reasons = build_feedback(&score, &scorer.feedback);
    Ok(score)
}

/// Sample Pearson correlation.
pub fn pearson<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T, ScoreError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(ScoreError::Contract("need two equal-length lists of length >= 2".into()));
    }
    let n = T::of(xs.len() as f64);
    let mx = xs.iter().fold(T::zero(), |a, &b| a + b) / n;
    let my = ys.iter().fold(T::zero(), |a, &b| a + b) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(ScoreError::Undefined("zero variance".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    /// Seconds.
    pub waiting_time_avg: f64,
    /// Minutes.
    pub avg_duration: f64,
    pub avg_rounds: f64,
    /// Percent.
    pub completion_rate: f64,
    pub sessions: usize,
}

pub fn aggregate_metrics(records: &[SessionRecord]) -> Result<TrainingMetrics, ScoreError> {
    if records.is_empty() {
        return Err(ScoreError::Undefined("no sessions".into()));
    }
    let n = records.len() as f64;
    let mut wait = 0.0;
    let mut duration = 0.0;
    let mut rounds = 0.0;
    let mut completed = 0usize;
    for r in records {
        wait += r.assigned_at_ms.saturating_sub(r.wait_started_at_ms) as f64 / 1000.0;
        let end = r
            .closed_at_ms
            .or_else(|| r.transcript.last().map(|e| e.at_ms))
            .unwrap_or(r.assigned_at_ms);
        duration += end.saturating_sub(r.assigned_at_ms) as f64 / 60_000.0;
        rounds += r.rounds() as f64;
        completed += usize::from(r.completed);
    }
    Ok(TrainingMetrics {
        waiting_time_avg: wait / n,
        avg_duration: duration / n,
        avg_rounds: rounds / n,
        completion_rate: 100.0 * completed as f64 / n,
        sessions: records.len(),
    })
}

pub const METRICS_COLUMNS: [&str; 5] = [
    "Training Mode",
    "Waiting Time (secs)",
    "Average Durations (mins)",
    "Average Rounds",
    "Completion Rate (%)",
];

/// Plain-text table, one row per training mode, one decimal per value.
pub fn render_metrics_table(rows: &[(&str, TrainingMetrics)]) -> String {
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|(mode, m)| {
            [
                mode.to_string(),
                format!("{:.1}", m.waiting_time_avg),
                format!("{:.1}", m.avg_duration),
                format!("{:.1}", m.avg_rounds),
                format!("{:.1}", m.completion_rate),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = METRICS_COLUMNS.iter().map(|c| c.chars().count()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut out = line(METRICS_COLUMNS.to_vec());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-"));
    for row in &body {
        out.push('\n');
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out.push('\n');
    out
}
