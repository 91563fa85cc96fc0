//! Training-session state machine for the simulated customer.
//!
//! Every state change is expressed as a [`SessionEvent`] and applied through
//! [`SessionState::apply`]; live operations and log replay share that path,
//! so a replayed log reproduces the live state exactly. Time is always passed
//! in by the caller, in milliseconds.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DialogueRecord, DialogueScript, Role};
use crate::respond::{
    context_text, rank_candidates, retrieve_candidates, CandidateResponse, CandidateSource,
    GenerationRequest, RankQuery, RespondError, ResponseGenerator, ResponseRanker,
};
use crate::textenc::{TextEncoder, TextMatcher};
use crate::vindex::{SearchMode, VectorIndex};

pub const CLOSING_ACK: &str = "Thanks, that solves my problem. Goodbye!";
pub const GENERIC_NUDGE: &str =
    "Focus on the customer's last message and address their request directly.";
const CANDIDATES_PER_SOURCE: usize = 3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("illegal state: {0}")]
    IllegalState(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Respond(#[from] RespondError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimPolicy {
    pub advance_threshold: f64,
    pub context_window: usize,
    pub max_misses_before_hint: u32,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for SimPolicy {
    fn default() -> Self {
        SimPolicy {
            advance_threshold: 0.5,
            context_window: 4,
            max_misses_before_hint: 2,
            max_rounds: 60,
            seed: 0,
        }
    }
}

impl SimPolicy {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.advance_threshold) {
            return Err(SimError::Config("advance_threshold must be in [0, 1]".into()));
        }
        if self.context_window == 0 {
            return Err(SimError::Config("context_window must be >= 1".into()));
        }
        if self.max_rounds == 0 {
            return Err(SimError::Config("max_rounds must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Bot,
    Trainee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnTag {
    Scripted,
    Fallback,
    Hint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitAgent,
    Completed,
    Abandoned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotPath {
    ScriptAdvance,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    Completed,
    Abandoned,
    TraineeQuit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: Speaker,
    pub text: String,
    pub at_ms: u64,
    /// Bot turns only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<TurnTag>,
    /// Trainee turns only: index into the script's agent turns that the
    /// turn was matched against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotTurnResult {
    pub bot_utterance: String,
    pub path: BotPath,
    pub match_score: f64,
    pub candidates_considered: usize,
    pub completed: bool,
    pub phase: Phase,
    /// The configured generator failed and the built-in one was used.
    #[serde(default)]
    pub generator_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintResult {
    pub hint: String,
    pub revealed: bool,
    /// The full expected utterance; present only when `revealed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    SessionStart {
        session_id: String,
        scene_id: String,
        script_id: String,
        script: DialogueRecord,
        policy: SimPolicy,
        seed: u64,
        wait_started_at_ms: u64,
        assigned_at_ms: u64,
    },
    TraineeTurn {
        text: String,
        at_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
        expected_index: usize,
        match_score: f64,
    },
    BotTurn {
        text: String,
        at_ms: u64,
        path: BotPath,
        candidates_considered: usize,
        #[serde(default)]
        generator_fallback: bool,
    },
    Hint {
        text: String,
        revealed: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        full: Option<String>,
        at_ms: u64,
    },
    SessionClose {
        reason: CloseReason,
        at_ms: u64,
    },
}

/// Read-only models shared by all sessions.
#[derive(Clone)]
pub struct Engine {
    /// Scene id to its scripts.
    pub scenes: BTreeMap<String, Vec<DialogueScript>>,
    pub matcher: Arc<dyn TextMatcher>,
    pub encoder: Arc<TextEncoder>,
    pub index: Option<Arc<VectorIndex<f64>>>,
    pub search_mode: SearchMode,
    pub generator: Arc<dyn ResponseGenerator>,
    /// Used when `generator` fails; normally the n-gram generator.
    pub fallback_generator: Arc<dyn ResponseGenerator>,
    pub ranker: Arc<dyn ResponseRanker>,
}

impl Engine {
    /// Groups scripts by their scene.
    pub fn group_scripts(scripts: Vec<DialogueScript>) -> BTreeMap<String, Vec<DialogueScript>> {
        let mut scenes: BTreeMap<String, Vec<DialogueScript>> = BTreeMap::new();
        for s in scripts {
            scenes.entry(s.scene.clone()).or_default().push(s);
        }
        for v in scenes.values_mut() {
            v.sort_by(|a, b| a.id.cmp(&b.id));
        }
        scenes
    }
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn session_seed(policy_seed: u64, session_id: &str) -> u64 {
    policy_seed ^ fnv1a(session_id)
}

fn turn_seed(session_seed: u64, round: usize) -> u64 {
    session_seed
        .wrapping_add(round as u64)
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// First clause of `text`; the first half of its words if it has no clause
/// punctuation.
pub fn first_clause(text: &str) -> String {
    let text = text.trim();
    if let Some(pos) = text.find([',', '.', ';', '!', '?', '，', '。', '；', '！', '？']) {
        let head = text[..pos].trim();
        if !head.is_empty() {
            return head.to_string();
        }
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    let keep = words.len().div_ceil(2).max(1);
    words[..keep.min(words.len())].join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    session_id: String,
    scene_id: String,
    script: DialogueScript,
    policy: SimPolicy,
    seed: u64,
    cursor: usize,
    transcript: Vec<TranscriptEntry>,
    phase: Phase,
    miss_count: u32,
    fallback_turns: usize,
    wait_started_at_ms: u64,
    assigned_at_ms: u64,
    closed: Option<(CloseReason, u64)>,
    /// Idempotency token to the reply it produced.
    replies: BTreeMap<String, BotTurnResult>,
    #[serde(skip)]
    pending: Option<PendingTrainee>,
    #[serde(skip)]
    uncommitted: Vec<SessionEvent>,
}

#[derive(Debug, Clone, PartialEq)]
struct PendingTrainee {
    token: Option<String>,
    match_score: f64,
}

impl Serialize for DialogueScript {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DialogueScript {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        DialogueRecord::deserialize(d)?
            .into_script()
            .map_err(serde::de::Error::custom)
    }
}

/// Frozen view of a session, used for scoring and metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub scene_id: String,
    pub script: DialogueScript,
    pub policy: SimPolicy,
    pub seed: u64,
    pub cursor: usize,
    pub phase: Phase,
    pub completed: bool,
    pub transcript: Vec<TranscriptEntry>,
    pub fallback_turns: usize,
    pub wait_started_at_ms: u64,
    pub assigned_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub close_reason: Option<CloseReason>,
}

impl SessionRecord {
    pub fn rounds(&self) -> usize {
        self.transcript.len()
    }

    pub fn trainee_turns(&self) -> impl Iterator<Item = &TranscriptEntry> {
        self.transcript
            .iter()
            .filter(|e| e.speaker == Speaker::Trainee)
    }
}

/// Picks a script of `scene_id` and opens a session.
pub fn start_session(
    engine: &Engine,
    session_id: &str,
    scene_id: &str,
    policy: &SimPolicy,
    wait_started_at_ms: u64,
    assigned_at_ms: u64,
) -> Result<(SessionState, String), SimError> {
    policy.validate()?;
    if session_id.is_empty() {
        return Err(SimError::BadInput("empty session id".into()));
    }
    let scripts = engine
        .scenes
        .get(scene_id)
        .ok_or_else(|| SimError::NotFound(format!("scene {scene_id}")))?;
    if scripts.is_empty() {
        return Err(SimError::Config(format!("scene {scene_id} has no scripts")));
    }
    let seed = session_seed(policy.seed, session_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let script = &scripts[rng.random_range(0..scripts.len())];
    if script.turns.len() > policy.max_rounds {
        return Err(SimError::Config(format!(
            "script {} has {} turns, more than max_rounds {}",
            script.id,
            script.turns.len(),
            policy.max_rounds
        )));
    }
    let event = SessionEvent::SessionStart {
        session_id: session_id.to_string(),
        scene_id: scene_id.to_string(),
        script_id: script.id.clone(),
        script: script.to_record(),
        policy: *policy,
        seed,
        wait_started_at_ms,
        assigned_at_ms,
    };
    let mut state = SessionState::from_start(&event)?;
    state.uncommitted.push(event);
    let opening = state.transcript[0].text.clone();
    Ok((state, opening))
}

impl SessionState {
    fn from_start(event: &SessionEvent) -> Result<Self, SimError> {
        let SessionEvent::SessionStart {
            session_id,
            scene_id,
            script,
            policy,
            seed,
            wait_started_at_ms,
            assigned_at_ms,
            ..
        } = event
        else {
            return Err(SimError::IllegalState("log must begin with session_start".into()));
        };
        let script = script
            .clone()
            .into_script()
            .map_err(|e| SimError::Config(format!("invalid script in log: {e}")))?;
        let opening = TranscriptEntry {
            speaker: Speaker::Bot,
            text: script.turns[0].text.clone(),
            at_ms: *assigned_at_ms,
            tag: Some(TurnTag::Scripted),
            expected_index: None,
            match_score: None,
        };
        Ok(SessionState {
            session_id: session_id.clone(),
            scene_id: scene_id.clone(),
            script,
            policy: *policy,
            seed: *seed,
            cursor: 0,
            transcript: vec![opening],
            phase: Phase::AwaitAgent,
            miss_count: 0,
            fallback_turns: 0,
            wait_started_at_ms: *wait_started_at_ms,
            assigned_at_ms: *assigned_at_ms,
            closed: None,
            replies: BTreeMap::new(),
            pending: None,
            uncommitted: Vec::new(),
        })
    }

    /// Rebuilds a session from its event log.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Result<Self, SimError> {
        let mut it = events.into_iter();
        let first = it
            .next()
            .ok_or_else(|| SimError::IllegalState("empty event log".into()))?;
        let mut state = SessionState::from_start(first)?;
        for e in it {
            state.apply(e)?;
        }
        Ok(state)
    }

    /// Folds one event into the state.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), SimError> {
        match event {
            SessionEvent::SessionStart { .. } => {
                return Err(SimError::IllegalState("duplicate session_start".into()));
            }
            SessionEvent::TraineeTurn {
                text,
                at_ms,
                token,
                expected_index,
                match_score,
            } => {
                self.require_open()?;
                if self.pending.is_some() {
                    return Err(SimError::IllegalState("trainee turn without bot reply".into()));
                }
                if *expected_index != self.cursor {
                    return Err(SimError::IllegalState(format!(
                        "trainee turn aligned to {expected_index}, cursor is {}",
                        self.cursor
                    )));
                }
                self.transcript.push(TranscriptEntry {
                    speaker: Speaker::Trainee,
                    text: text.clone(),
                    at_ms: *at_ms,
                    tag: None,
                    expected_index: Some(*expected_index),
                    match_score: Some(*match_score),
                });
                self.pending = Some(PendingTrainee {
                    token: token.clone(),
                    match_score: *match_score,
                });
            }
            SessionEvent::BotTurn {
                text,
                at_ms,
                path,
                candidates_considered,
                generator_fallback,
            } => {
                let pending = self
                    .pending
                    .take()
                    .ok_or_else(|| SimError::IllegalState("bot turn without trainee turn".into()))?;
                let tag = match path {
                    BotPath::ScriptAdvance => {
                        self.cursor += 1;
                        self.miss_count = 0;
                        TurnTag::Scripted
                    }
                    BotPath::Fallback => {
                        self.miss_count += 1;
                        self.fallback_turns += 1;
                        TurnTag::Fallback
                    }
                };
                self.transcript.push(TranscriptEntry {
                    speaker: Speaker::Bot,
                    text: text.clone(),
                    at_ms: *at_ms,
                    tag: Some(tag),
                    expected_index: None,
                    match_score: None,
                });
                if self.cursor >= self.script.agent_turn_count() {
                    self.phase = Phase::Completed;
                } else if self.transcript.len() > self.policy.max_rounds {
                    self.phase = Phase::Abandoned;
                }
                if let Some(token) = pending.token {
                    self.replies.insert(
                        token,
                        BotTurnResult {
                            bot_utterance: text.clone(),
                            path: *path,
                            match_score: pending.match_score,
                            candidates_considered: *candidates_considered,
                            completed: self.phase == Phase::Completed,
                            phase: self.phase,
                            generator_fallback: *generator_fallback,
                        },
                    );
                }
            }
            SessionEvent::Hint { text, at_ms, .. } => {
                self.require_open()?;
                self.transcript.push(TranscriptEntry {
                    speaker: Speaker::Bot,
                    text: text.clone(),
                    at_ms: *at_ms,
                    tag: Some(TurnTag::Hint),
                    expected_index: None,
                    match_score: None,
                });
            }
            SessionEvent::SessionClose { reason, at_ms } => {
                if self.closed.is_some() {
                    return Err(SimError::IllegalState("session already closed".into()));
                }
                if self.phase == Phase::AwaitAgent {
                    self.phase = Phase::Abandoned;
                }
                self.closed = Some((*reason, *at_ms));
            }
        }
        Ok(())
    }

    fn require_open(&self) -> Result<(), SimError> {
        if self.closed.is_some() {
            return Err(SimError::IllegalState("session is closed".into()));
        }
        if self.phase != Phase::AwaitAgent {
            return Err(SimError::IllegalState(format!("session phase is {:?}", self.phase)));
        }
        Ok(())
    }

    fn record(&mut self, event: SessionEvent) -> Result<(), SimError> {
        self.apply(&event)?;
        self.uncommitted.push(event);
        Ok(())
    }

    /// Events produced since the last call, oldest first.
    pub fn take_events(&mut self) -> Vec<SessionEvent> {
        std::mem::take(&mut self.uncommitted)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn script(&self) -> &DialogueScript {
        &self.script
    }

    pub fn policy(&self) -> &SimPolicy {
        &self.policy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn miss_count(&self) -> u32 {
        self.miss_count
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn is_closed(&self) -> bool {
        self.closed.is_some()
    }

    /// The reply previously produced for an idempotency token.
    pub fn reply_for(&self, token: &str) -> Option<&BotTurnResult> {
        self.replies.get(token)
    }

    /// The agent utterance the trainee is expected to produce next.
    pub fn expected_utterance(&self) -> Option<&str> {
        self.script
            .turns
            .iter()
            .filter(|t| t.role == Role::Agent)
            .nth(self.cursor)
            .map(|t| t.text.as_str())
    }

    pub fn snapshot(&self) -> SessionRecord {
        SessionRecord {
            session_id: self.session_id.clone(),
            scene_id: self.scene_id.clone(),
            script: self.script.clone(),
            policy: self.policy,
            seed: self.seed,
            cursor: self.cursor,
            phase: self.phase,
            completed: self.phase == Phase::Completed,
            transcript: self.transcript.clone(),
            fallback_turns: self.fallback_turns,
            wait_started_at_ms: self.wait_started_at_ms,
            assigned_at_ms: self.assigned_at_ms,
            closed_at_ms: self.closed.map(|c| c.1),
            close_reason: self.closed.map(|c| c.0),
        }
    }

    /// Bot utterance after the agent turn at `agent_index` is matched.
    fn scripted_follow_up(&self, agent_index: usize) -> String {
        let pos = self
            .script
            .turns
            .iter()
            .filter(|t| t.role == Role::Agent)
            .nth(agent_index)
            .map(|t| t.index)
            .expect("agent index within script");
        match self.script.turns.get(pos + 1) {
            Some(t) if t.role == Role::Customer => t.text.clone(),
            _ => CLOSING_ACK.to_string(),
        }
    }

    fn last_bot_text(&self) -> &str {
        self.transcript
            .iter()
            .rev()
            .find(|e| e.speaker == Speaker::Bot && e.tag != Some(TurnTag::Hint))
            .map(|e| e.text.as_str())
            .unwrap_or("")
    }
}

/// Candidates from retrieval and generation, ranked; returns the ranked list
/// and whether the fallback generator had to be used.
fn fallback_candidates(
    engine: &Engine,
    state: &SessionState,
    seed: u64,
) -> Result<(Vec<CandidateResponse>, bool), SimError> {
    let window: Vec<&str> = {
        let texts: Vec<&str> = state
            .transcript
            .iter()
            .filter(|e| e.tag != Some(TurnTag::Hint))
            .map(|e| e.text.as_str())
            .collect();
        let start = texts.len().saturating_sub(state.policy.context_window);
        texts[start..].to_vec()
    };
    let context = context_text(&window, window.len());
    let mut pool = Vec::new();
    if let Some(index) = &engine.index {
        let q = engine.encoder.embed(&context);
        if !q.oov && q.vector.len() == index.dim() {
            for r in retrieve_candidates(index, &q.vector, CANDIDATES_PER_SOURCE, engine.search_mode)? {
                pool.push(r.candidate);
            }
        }
    }
    let request = GenerationRequest {
        context: window.iter().map(|s| s.to_string()).collect(),
        n: CANDIDATES_PER_SOURCE,
        scene: Some(state.scene_id.clone()),
        seed,
    };
    let valid = |v: &Vec<String>| v.len() == request.n && v.iter().all(|t| !t.trim().is_empty());
    let (generated, used_fallback) = match engine.generator.generate(&request) {
        Ok(v) if valid(&v) => (v, false),
        _ => {
            let v = engine
                .fallback_generator
                .generate(&request)
                .map_err(|e| SimError::Config(format!("fallback generator failed: {e}")))?;
            (v, true)
        }
    };
    pool.extend(
        generated
            .into_iter()
            .filter(|t| !t.trim().is_empty())
            .map(|t| CandidateResponse::new(t, CandidateSource::Generation)),
    );
    if pool.is_empty() {
        return Err(SimError::Config("no candidates produced".into()));
    }
    let query = RankQuery::new(context, state.last_bot_text());
    let ranked = rank_candidates(engine.ranker.as_ref(), &query, pool)?;
    Ok((ranked, used_fallback))
}

/// Handles one trainee utterance.
pub fn agent_reply(
    engine: &Engine,
    state: &mut SessionState,
    text: &str,
    token: Option<&str>,
    now_ms: u64,
) -> Result<BotTurnResult, SimError> {
    state.require_open()?;
    if text.trim().is_empty() {
        return Err(SimError::BadInput("empty message".into()));
    }
    let expected_index = state.cursor;
    let expected = state
        .expected_utterance()
        .expect("open session has an expected utterance")
        .to_string();
    let score = engine.matcher.similarity(text, &expected).clamp(0.0, 1.0);
    let advance = score >= state.policy.advance_threshold;

    let seed = turn_seed(state.seed, state.transcript.len());
    let (bot_text, path, considered, generator_fallback) = if advance {
        (state.scripted_follow_up(expected_index), BotPath::ScriptAdvance, 0, false)
    } else {
        // Rank with the trainee turn in context.
        let mut probe = state.clone();
        probe.transcript.push(TranscriptEntry {
            speaker: Speaker::Trainee,
            text: text.to_string(),
            at_ms: now_ms,
            tag: None,
            expected_index: Some(expected_index),
            match_score: Some(score),
        });
        let (ranked, fell_back) = fallback_candidates(engine, &probe, seed)?;
        let top = ranked[0].text.clone();
        (top, BotPath::Fallback, ranked.len(), fell_back)
    };

    state.record(SessionEvent::TraineeTurn {
        text: text.to_string(),
        at_ms: now_ms,
        token: token.map(str::to_string),
        expected_index,
        match_score: score,
    })?;
    state.record(SessionEvent::BotTurn {
        text: bot_text.clone(),
        at_ms: now_ms,
        path,
        candidates_considered: considered,
        generator_fallback,
    })?;
    Ok(BotTurnResult {
        bot_utterance: bot_text,
        path,
        match_score: score,
        candidates_considered: considered,
        completed: state.phase == Phase::Completed,
        phase: state.phase,
        generator_fallback,
    })
}

pub fn request_hint(state: &mut SessionState, now_ms: u64) -> Result<HintResult, SimError> {
    state.require_open()?;
    let result = if state.miss_count >= state.policy.max_misses_before_hint {
        let expected = state
            .expected_utterance()
            .expect("open session has an expected utterance")
            .to_string();
        HintResult {
            hint: first_clause(&expected),
            revealed: true,
            full: Some(expected),
        }
    } else {
        HintResult {
            hint: GENERIC_NUDGE.to_string(),
            revealed: false,
            full: None,
        }
    };
    state.record(SessionEvent::Hint {
        text: result.hint.clone(),
        revealed: result.revealed,
        full: result.full.clone(),
        at_ms: now_ms,
    })?;
    Ok(result)
}

pub fn close_session(
    state: &mut SessionState,
    reason: CloseReason,
    now_ms: u64,
) -> Result<SessionRecord, SimError> {
    state.record(SessionEvent::SessionClose { reason, at_ms: now_ms })?;
    Ok(state.snapshot())
}
