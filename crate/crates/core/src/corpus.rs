//! Dialogue logs and dialogue scripts: data model, ingestion, validation and
//! corpus statistics.
//!
//! Both raw logs and curated scripts share one line-delimited record format:
//!
//! ```text
//! {"id": "d1", "scene": "refund", "turns": [{"role": "customer", "text": "..."}, ...]}
//! ```
//!
//! `scene` is optional for logs and mandatory for scripts.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Customer,
    Agent,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Customer => f.write_str("customer"),
            Role::Agent => f.write_str("agent"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum CorpusError {
    #[error("dialogue {id}: needs at least 2 turns, got {got}")]
    TooFewTurns { id: String, got: usize },
    #[error("dialogue {id}: turn {index} has empty text")]
    EmptyTurn { id: String, index: usize },
    #[error("dialogue id must be non-empty")]
    EmptyId,
    #[error("script {id}: {violations:?}")]
    InvalidScript {
        id: String,
        violations: Vec<ScriptViolation>,
    },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn build_turns(id: &str, raw: Vec<(Role, String)>) -> Result<Vec<Turn>, CorpusError> {
    raw.into_iter()
        .enumerate()
        .map(|(index, (role, text))| {
            if text.trim().is_empty() {
                Err(CorpusError::EmptyTurn {
                    id: id.to_string(),
                    index,
                })
            } else {
                Ok(Turn { role, text, index })
            }
        })
        .collect()
}

/// A raw multi-turn conversation. Consecutive same-role turns are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    id: String,
    scene: Option<String>,
    turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new(
        id: impl Into<String>,
        scene: Option<String>,
        turns: Vec<(Role, String)>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        if id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        if turns.len() < 2 {
            return Err(CorpusError::TooFewTurns {
                id,
                got: turns.len(),
            });
        }
        let turns = build_turns(&id, turns)?;
        Ok(Dialogue { id, scene, turns })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scene(&self) -> Option<&str> {
        self.scene.as_deref()
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    /// Total characters over all turn texts.
    pub fn char_len(&self) -> usize {
        self.turns.iter().map(|t| t.text.chars().count()).sum()
    }

    pub fn texts_by(&self, role: Role) -> impl Iterator<Item = &str> {
        self.turns
            .iter()
            .filter(move |t| t.role == role)
            .map(|t| t.text.as_str())
    }

    pub fn to_record(&self) -> DialogueRecord {
        DialogueRecord {
            id: self.id.clone(),
            scene: self.scene.clone(),
            turns: self
                .turns
                .iter()
                .map(|t| TurnRecord {
                    role: t.role,
                    text: t.text.clone(),
                })
                .collect(),
        }
    }
}

/// Invariant violations reported by [`validate_script`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum ScriptViolation {
    TooFewTurns { got: usize },
    FirstTurnNotCustomer,
    NonAlternating { turn: usize },
    NoAgentTurn,
    EmptyText { turn: usize },
    BadIndex { turn: usize },
}

impl ScriptViolation {
    pub fn code(&self) -> &'static str {
        match self {
            ScriptViolation::TooFewTurns { .. } => "too-few-turns",
            ScriptViolation::FirstTurnNotCustomer => "first-turn-not-customer",
            ScriptViolation::NonAlternating { .. } => "non-alternating",
            ScriptViolation::NoAgentTurn => "no-agent-turn",
            ScriptViolation::EmptyText { .. } => "empty-text",
            ScriptViolation::BadIndex { .. } => "bad-index",
        }
    }
}

impl fmt::Display for ScriptViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptViolation::TooFewTurns { got } => write!(f, "{}: {got} turns", self.code()),
            ScriptViolation::NonAlternating { turn }
            | ScriptViolation::EmptyText { turn }
            | ScriptViolation::BadIndex { turn } => write!(f, "{} at turn {turn}", self.code()),
            _ => f.write_str(self.code()),
        }
    }
}

/// Curated customer/agent exchange for one scene: the simulator's ground truth.
///
/// Fields are public so that unvalidated scripts can be inspected with
/// [`validate_script`]; [`DialogueScript::new`] only yields valid ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueScript {
    pub id: String,
    pub scene: String,
    pub turns: Vec<Turn>,
}

impl DialogueScript {
    pub fn new(
        id: impl Into<String>,
        scene: impl Into<String>,
        turns: Vec<(Role, String)>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let turns = turns
            .into_iter()
            .enumerate()
            .map(|(index, (role, text))| Turn { role, text, index })
            .collect();
        let script = DialogueScript {
            id,
            scene: scene.into(),
            turns,
        };
        let violations = validate_script(&script);
        if violations.is_empty() {
            Ok(script)
        } else {
            Err(CorpusError::InvalidScript {
                id: script.id,
                violations,
            })
        }
    }

    /// Agent turns in script order; the simulator's cursor indexes this list.
    pub fn agent_turns(&self) -> Vec<&Turn> {
        self.turns.iter().filter(|t| t.role == Role::Agent).collect()
    }

    pub fn agent_turn_count(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::Agent).count()
    }

    pub fn to_record(&self) -> DialogueRecord {
        DialogueRecord {
            id: self.id.clone(),
            scene: Some(self.scene.clone()),
            turns: self
                .turns
                .iter()
                .map(|t| TurnRecord {
                    role: t.role,
                    text: t.text.clone(),
                })
                .collect(),
        }
    }
}

/// Returns one entry per violated script invariant; empty means valid.
pub fn validate_script(script: &DialogueScript) -> Vec<ScriptViolation> {
    let mut out = Vec::new();
    let turns = &script.turns;
    if turns.len() < 2 {
        out.push(ScriptViolation::TooFewTurns { got: turns.len() });
    }
    if let Some(first) = turns.first() {
        if first.role != Role::Customer {
            out.push(ScriptViolation::FirstTurnNotCustomer);
        }
    }
    for (i, pair) in turns.windows(2).enumerate() {
        if pair[0].role == pair[1].role {
            out.push(ScriptViolation::NonAlternating { turn: i + 1 });
        }
    }
    if !turns.iter().any(|t| t.role == Role::Agent) {
        out.push(ScriptViolation::NoAgentTurn);
    }
    for (i, t) in turns.iter().enumerate() {
        if t.text.trim().is_empty() {
            out.push(ScriptViolation::EmptyText { turn: i });
        }
        if t.index != i {
            out.push(ScriptViolation::BadIndex { turn: i });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub role: Role,
    pub text: String,
}

/// Wire form of one line in a log or script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    pub turns: Vec<TurnRecord>,
}

impl DialogueRecord {
    fn raw_turns(self) -> (String, Option<String>, Vec<(Role, String)>) {
        let turns = self.turns.into_iter().map(|t| (t.role, t.text)).collect();
        (self.id, self.scene, turns)
    }

    pub fn into_dialogue(self) -> Result<Dialogue, CorpusError> {
        let (id, scene, turns) = self.raw_turns();
        Dialogue::new(id, scene, turns)
    }

    pub fn into_script(self) -> Result<DialogueScript, String> {
        let (id, scene, turns) = self.raw_turns();
        let scene = scene.ok_or_else(|| format!("script {id}: missing scene"))?;
        DialogueScript::new(id, scene, turns).map_err(|e| e.to_string())
    }
}

/// A rejected input line. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct IngestReport<T> {
    pub items: Vec<T>,
    pub errors: Vec<LineError>,
}

fn ingest_lines<T, R: BufRead>(
    reader: R,
    convert: impl Fn(DialogueRecord) -> Result<T, String>,
    id_of: impl Fn(&T) -> &str,
) -> io::Result<IngestReport<T>> {
    let mut items = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<DialogueRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(&convert);
        match parsed {
            Ok(item) => {
                if seen.insert(id_of(&item).to_string()) {
                    items.push(item);
                } else {
                    errors.push(LineError {
                        line: n + 1,
                        message: format!("duplicate id {}", id_of(&item)),
                    });
                }
            }
            Err(message) => errors.push(LineError {
                line: n + 1,
                message,
            }),
        }
    }
    Ok(IngestReport { items, errors })
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Reads a dialogue log. Malformed lines are reported, never dropped silently.
pub fn ingest_log(path: &Path) -> Result<IngestReport<Dialogue>, IngestError> {
    let reader = open(path)?;
    read_dialogues(reader).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_dialogues<R: BufRead>(reader: R) -> io::Result<IngestReport<Dialogue>> {
    ingest_lines(
        reader,
        |r| r.into_dialogue().map_err(|e| e.to_string()),
        |d: &Dialogue| d.id(),
    )
}

/// Reads a script file; every line must carry a scene and satisfy the script
/// invariants.
pub fn ingest_scripts(path: &Path) -> Result<IngestReport<DialogueScript>, IngestError> {
    let reader = open(path)?;
    ingest_lines(reader, DialogueRecord::into_script, |s: &DialogueScript| {
        s.id.as_str()
    })
    .map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_records<W: Write>(
    mut w: W,
    records: impl IntoIterator<Item = DialogueRecord>,
) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_dialogues<W: Write>(w: W, dialogues: &[Dialogue]) -> io::Result<()> {
    write_records(w, dialogues.iter().map(Dialogue::to_record))
}

pub fn write_scripts<W: Write>(w: W, scripts: &[DialogueScript]) -> io::Result<()> {
    write_records(w, scripts.iter().map(DialogueScript::to_record))
}

/// Corpus statistics. Averages are exact rationals; convert at display time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub num_dialogs: u64,
    /// Mean turns per dialogue. A round is one turn.
    pub avg_rounds: Ratio<u64>,
    /// Mean characters per dialogue.
    pub avg_length: Ratio<u64>,
}

impl CorpusStats {
    pub fn avg_rounds_f64(&self) -> f64 {
        ratio_to_f64(self.avg_rounds)
    }

    pub fn avg_length_f64(&self) -> f64 {
        ratio_to_f64(self.avg_length)
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Num of dialogs             {}", self.num_dialogs)?;
        writeln!(f, "Average Rounds Per Dialog  {:.1}", self.avg_rounds_f64())?;
        write!(f, "Average Length Per Dialog  {:.0}", self.avg_length_f64())
    }
}

fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn corpus_stats(dialogues: &[Dialogue]) -> CorpusStats {
    let n = dialogues.len() as u64;
    if n == 0 {
        return CorpusStats {
            num_dialogs: 0,
            avg_rounds: Ratio::from_integer(0),
            avg_length: Ratio::from_integer(0),
        };
    }
    let turns: u64 = dialogues.iter().map(|d| d.turns().len() as u64).sum();
    let chars: u64 = dialogues.iter().map(|d| d.char_len() as u64).sum();
    CorpusStats {
        num_dialogs: n,
        avg_rounds: Ratio::new(turns, n),
        avg_length: Ratio::new(chars, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn turns(raw: &[(Role, &str)]) -> Vec<(Role, String)> {
        raw.iter().map(|(r, t)| (*r, t.to_string())).collect()
    }

    #[test]
    fn empty_input_yields_nothing() {
        let rep = read_dialogues(Cursor::new("")).unwrap();
        assert!(rep.items.is_empty());
        assert!(rep.errors.is_empty());
    }

    #[test]
    fn single_record_of_four_turns() {
        let line = r#"{"id":"a","turns":[{"role":"customer","text":"hi"},{"role":"agent","text":"hello"},{"role":"customer","text":"refund"},{"role":"agent","text":"sure"}]}"#;
        let rep = read_dialogues(Cursor::new(line)).unwrap();
        assert_eq!(rep.items.len(), 1);
        assert_eq!(rep.items[0].turns().len(), 4);
        assert_eq!(rep.items[0].turns()[3].index, 3);
    }

    #[test]
    fn malformed_line_is_reported_with_number() {
        let text = [
            r#"{"id":"a","turns":[{"role":"customer","text":"hi"},{"role":"agent","text":"hello"}]}"#,
            r#"{"id":"b","scene":"x","turns":[{"role":"customer","text":"q"},{"role":"customer","text":"q2"}]}"#,
            r#"{"id":"c","turns":[{"role":"robot","text":"hi"}]}"#,
        ]
        .join("\n");
        let rep = read_dialogues(Cursor::new(text)).unwrap();
        assert_eq!(rep.items.len(), 2);
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.errors[0].line, 3);
    }

    #[test]
    fn duplicate_ids_and_short_dialogues_rejected() {
        let text = [
            r#"{"id":"a","turns":[{"role":"customer","text":"hi"},{"role":"agent","text":"hello"}]}"#,
            r#"{"id":"a","turns":[{"role":"customer","text":"hi"},{"role":"agent","text":"hello"}]}"#,
            r#"{"id":"b","turns":[{"role":"customer","text":"hi"}]}"#,
            r#"{"id":"c","turns":[{"role":"customer","text":"  "},{"role":"agent","text":"x"}]}"#,
        ]
        .join("\n");
        let rep = read_dialogues(Cursor::new(text)).unwrap();
        assert_eq!(rep.items.len(), 1);
        let lines: Vec<_> = rep.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = ingest_log(Path::new("/definitely/not/here.jsonl")).unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
    }

    #[test]
    fn stats_examples() {
        let empty = corpus_stats(&[]);
        assert_eq!(empty.num_dialogs, 0);
        assert_eq!(empty.avg_rounds_f64(), 0.0);
        assert_eq!(empty.avg_length_f64(), 0.0);

        // 4 turns, 40 characters total.
        let d = Dialogue::new(
            "d",
            None,
            turns(&[
                (Role::Customer, "aaaaaaaaaa"),
                (Role::Agent, "bbbbbbbbbb"),
                (Role::Customer, "cccccccccc"),
                (Role::Agent, "dddddddddd"),
            ]),
        )
        .unwrap();
        let s = corpus_stats(&[d]);
        assert_eq!(s.num_dialogs, 1);
        assert_eq!(s.avg_rounds_f64(), 4.0);
        assert_eq!(s.avg_length_f64(), 40.0);
    }

    #[test]
    fn stats_count_characters_not_bytes() {
        let d = Dialogue::new(
            "d",
            None,
            turns(&[(Role::Customer, "退款"), (Role::Agent, "好的")]),
        )
        .unwrap();
        assert_eq!(corpus_stats(&[d]).avg_length, Ratio::from_integer(4));
    }

    #[test]
    fn valid_script_has_empty_report() {
        let s = DialogueScript::new(
            "s",
            "refund",
            turns(&[(Role::Customer, "hi"), (Role::Agent, "hello")]),
        )
        .unwrap();
        assert!(validate_script(&s).is_empty());
    }

    #[test]
    fn script_violations() {
        let mk = |raw: &[(Role, &str)]| DialogueScript {
            id: "s".into(),
            scene: "x".into(),
            turns: raw
                .iter()
                .enumerate()
                .map(|(index, (role, text))| Turn {
                    role: *role,
                    text: text.to_string(),
                    index,
                })
                .collect(),
        };
        let agent_first = mk(&[(Role::Agent, "a"), (Role::Customer, "b")]);
        let codes: Vec<_> = validate_script(&agent_first)
            .iter()
            .map(|v| v.code())
            .collect();
        assert!(codes.contains(&"first-turn-not-customer"));

        let doubled = mk(&[
            (Role::Customer, "a"),
            (Role::Customer, "b"),
            (Role::Agent, "c"),
        ]);
        assert_eq!(
            validate_script(&doubled),
            vec![ScriptViolation::NonAlternating { turn: 1 }]
        );

        let no_agent = mk(&[(Role::Customer, "a")]);
        let v = validate_script(&no_agent);
        assert!(v.contains(&ScriptViolation::TooFewTurns { got: 1 }));
        assert!(v.contains(&ScriptViolation::NoAgentTurn));
    }

    #[test]
    fn scripts_require_scene() {
        let rec: DialogueRecord = serde_json::from_str(
            r#"{"id":"s","turns":[{"role":"customer","text":"a"},{"role":"agent","text":"b"}]}"#,
        )
        .unwrap();
        assert!(rec.into_script().unwrap_err().contains("missing scene"));
    }
}
