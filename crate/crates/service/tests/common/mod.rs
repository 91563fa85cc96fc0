#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use agentcoach_core::corpus::{DialogueScript, Role};
use agentcoach_core::intentcluster::ClusterParams;
use agentcoach_core::respond::RankerConfig;
use agentcoach_core::simcore::{BotPath, CloseReason, SessionEvent, SimPolicy};
use agentcoach_core::textenc::SgnsConfig;
use agentcoach_service::artifacts::{self, LM_ORDER};
use agentcoach_service::config::ServiceConfig;
use agentcoach_service::demo;
use serde_json::Value;

pub const DEMO_EPOCHS: usize = 15;
pub const DEMO_MIN_CLUSTER: usize = 10;

pub fn testdata(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata").join(name)
}

/// Runs the whole offline pipeline on the checked-in demo log.
pub fn build_demo(dir: &Path, seed: u64) -> ServiceConfig {
    let cfg = ServiceConfig {
        data_dir: dir.to_path_buf(),
        seed,
        ..ServiceConfig::default()
    };
    std::fs::create_dir_all(dir).unwrap();
    std::fs::copy(testdata("rules.jsonl"), cfg.resolve(&cfg.paths.rules)).unwrap();
    artifacts::ingest(&cfg, &testdata("demo_log.jsonl")).unwrap();
    let sgns = SgnsConfig {
        epochs: DEMO_EPOCHS,
        seed,
        ..SgnsConfig::default()
    };
    artifacts::train_embed(&cfg, &sgns, 1).unwrap();
    artifacts::cluster(&cfg, &ClusterParams::new(DEMO_MIN_CLUSTER), 3).unwrap();
    artifacts::build_context_index(&cfg, true).unwrap();
    artifacts::train_lms(&cfg, LM_ORDER).unwrap();
    artifacts::train_ranker(
        &cfg,
        RankerConfig {
            seed,
            ..RankerConfig::default()
        },
    )
    .unwrap();
    cfg
}

/// Demo artifacts shared by every test in one binary. Tests must give each
/// server its own log dir.
pub fn shared_demo() -> &'static ServiceConfig {
    static DEMO: OnceLock<(tempfile::TempDir, ServiceConfig)> = OnceLock::new();
    &DEMO
        .get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = build_demo(dir.path(), 42);
            (dir, cfg)
        })
        .1
}

pub fn with_log_dir(cfg: &ServiceConfig, log_dir: &Path) -> ServiceConfig {
    let mut c = cfg.clone();
    c.paths.log_dir = log_dir.to_path_buf();
    c
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn read(mut resp: ureq::http::Response<ureq::Body>) -> (u16, Value) {
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    let body = if text.is_empty() {
        Value::Null
    } else {
        serde_json::from_str(&text).unwrap_or(Value::String(text))
    };
    (status, body)
}

pub fn get(agent: &ureq::Agent, url: &str) -> (u16, Value) {
    read(agent.get(url).call().unwrap())
}

pub fn post(agent: &ureq::Agent, url: &str, body: &Value) -> (u16, Value) {
    read(agent.post(url).send_json(body).unwrap())
}

pub fn post_empty(agent: &ureq::Agent, url: &str) -> (u16, Value) {
    read(agent.post(url).send_empty().unwrap())
}

/// The agent utterance the script expects next, from a session record.
pub fn expected_from_record(record: &Value) -> Option<String> {
    let cursor = record["cursor"].as_u64()? as usize;
    record["script"]["turns"]
        .as_array()?
        .iter()
        .filter(|t| t["role"] == "agent")
        .nth(cursor)
        .and_then(|t| t["text"].as_str())
        .map(str::to_string)
}

/// Plays a whole session over HTTP with the echo strategy.
pub fn echo_session(agent: &ureq::Agent, base: &str, scene: &str) -> String {
    let (status, created) = post(agent, &format!("{base}/sessions"), &serde_json::json!({"scene_id": scene}));
    assert_eq!(status, 201, "{created}");
    let id = created["session_id"].as_str().unwrap().to_string();
    loop {
        let (_, record) = get(agent, &format!("{base}/sessions/{id}"));
        if record["phase"] != "await_agent" {
            break;
        }
        let text = expected_from_record(&record).unwrap();
        let (status, reply) = post(
            agent,
            &format!("{base}/sessions/{id}/messages"),
            &serde_json::json!({"text": text, "idempotency_token": format!("t{}", record["cursor"])}),
        );
        assert_eq!(status, 200, "{reply}");
        assert_eq!(reply["path"], "script_advance");
    }
    id
}

fn long_script(agent_turns: usize) -> DialogueScript {
    let mut turns = Vec::new();
    for i in 0..agent_turns {
        turns.push((Role::Customer, format!("customer line {i}")));
        turns.push((Role::Agent, format!("agent line {i}")));
    }
    DialogueScript::new("fixture", "fixture", turns).unwrap()
}

/// Event log for a hand-built session: `exchanges` advancing trainee turns,
/// `hints` hint requests, then an optional close. One event per second.
pub fn fixture_events(
    id: &str,
    script_turns: usize,
    exchanges: usize,
    hints: usize,
    wait_ms: u64,
    close: Option<CloseReason>,
) -> Vec<SessionEvent> {
    let script = long_script(script_turns);
    let assigned = 1_000_000;
    let mut t = assigned;
    let mut events = vec![SessionEvent::SessionStart {
        session_id: id.into(),
        scene_id: "fixture".into(),
        script_id: script.id.clone(),
        script: script.to_record(),
        policy: SimPolicy::default(),
        seed: 1,
        wait_started_at_ms: assigned - wait_ms,
        assigned_at_ms: assigned,
    }];
    for _ in 0..hints {
        t += 1000;
        events.push(SessionEvent::Hint {
            text: "nudge".into(),
            revealed: false,
            full: None,
            at_ms: t,
        });
    }
    for i in 0..exchanges {
        t += 1000;
        events.push(SessionEvent::TraineeTurn {
            text: format!("agent line {i}"),
            at_ms: t,
            token: None,
            expected_index: i,
            match_score: 1.0,
        });
        events.push(SessionEvent::BotTurn {
            text: format!("customer line {}", i + 1),
            at_ms: t,
            path: BotPath::ScriptAdvance,
            candidates_considered: 0,
            generator_fallback: false,
        });
    }
    if let Some(reason) = close {
        t += 1000;
        events.push(SessionEvent::SessionClose { reason, at_ms: t });
    }
    events
}

pub fn write_log(dir: &Path, events: &[SessionEvent]) {
    let SessionEvent::SessionStart { session_id, .. } = &events[0] else {
        panic!("log must start with session_start");
    };
    std::fs::create_dir_all(dir).unwrap();
    let mut text = String::new();
    for e in events {
        text.push_str(&serde_json::to_string(e).unwrap());
        text.push('\n');
    }
    std::fs::write(dir.join(format!("{session_id}.jsonl")), text).unwrap();
}

/// Two sessions of 20 and 22 transcript entries.
pub fn write_rounds_fixture(dir: &Path) {
    // 1 opening + 2·9 exchanges + 1 hint = 20; 1 + 2·10 + 1 = 22.
    write_log(dir, &fixture_events("rounds-a", 12, 9, 1, 4000, Some(CloseReason::TraineeQuit)));
    write_log(dir, &fixture_events("rounds-b", 12, 10, 1, 8000, Some(CloseReason::TraineeQuit)));
}

/// Four sessions, three of them completed.
pub fn write_completion_fixture(dir: &Path) {
    write_log(dir, &fixture_events("done-1", 2, 2, 0, 0, Some(CloseReason::Completed)));
    write_log(dir, &fixture_events("done-2", 3, 3, 0, 0, Some(CloseReason::Completed)));
    write_log(dir, &fixture_events("done-3", 2, 2, 0, 0, None));
    write_log(dir, &fixture_events("quit-4", 3, 1, 0, 0, Some(CloseReason::TraineeQuit)));
}

pub fn demo_rules() -> &'static str {
    demo::DEMO_RULES
}

/// Replayed record whose trainee turns are `texts`, each aligned in order.
pub fn record_from_texts(id: &str, texts: &[&str]) -> agentcoach_core::simcore::SessionRecord {
    let mut events = fixture_events(id, texts.len().max(1), texts.len(), 0, 0, Some(CloseReason::TraineeQuit));
    let mut k = 0;
    for e in &mut events {
        if let SessionEvent::TraineeTurn { text, .. } = e {
            *text = texts[k].to_string();
            k += 1;
        }
    }
    agentcoach_core::simcore::SessionState::replay(&events)
        .unwrap()
        .snapshot()
}
