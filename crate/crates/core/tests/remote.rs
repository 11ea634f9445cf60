mod common;

use scamwatch_core::assessor::{Assessor, RemoteAssessor};
use scamwatch_core::context::{build_augmented_window, AugmentedWindow, RemoteScreenAnalyzer, ScreenAnalyzer};
use scamwatch_core::domain::{AppCategory, AppEvent, Label, ObservationWindow};
use scamwatch_core::http::{EndpointConfig, RemoteError};
use scamwatch_core::memory::MemoryStore;
use scamwatch_core::skills::{RetrievalWeights, SkillLibrary};

fn endpoint(url: &str) -> EndpointConfig {
    EndpointConfig {
        url: url.to_string(),
        timeout_ms: 2000,
        retries: 2,
        retry_backoff_ms: 1,
        max_in_flight: 2,
    }
}

fn window() -> AugmentedWindow {
    let events: Vec<AppEvent> = (0..10)
        .map(|i| AppEvent::new(i, AppCategory::InstantMessaging, Some("WeChat"), "chat about weekend", &["Robin"]))
        .collect();
    let mut m = MemoryStore::new();
    for e in &events {
        m.update(e).unwrap();
    }
    build_augmented_window(ObservationWindow::from_events(&events, 0, 9), &m, &SkillLibrary::new(), 5, &RetrievalWeights::default())
}

#[test]
fn remote_assessor_parses_reply_and_sends_context() {
    let server = common::serve(vec![(200, r#"{"reason":"looks fine","fraud":false,"probability":0.07}"#.into())]);
    let a = RemoteAssessor::new(endpoint(&server.url)).assess(&window(), &SkillLibrary::new()).unwrap();
    assert_eq!((a.label, a.probability, a.window_end), (Label::Normal, 0.07, 9));
    assert_eq!(a.rationale, "looks fine");
    let sent = server.requests.lock().unwrap()[0].clone();
    let v: serde_json::Value = serde_json::from_str(&sent).unwrap();
    assert!(v["context"].as_str().unwrap().contains("[NOW order=9"));
}

#[test]
fn missing_probability_is_coerced_from_label() {
    let server = common::serve(vec![(200, r#"{"reason":"r","fraud":"Scam"}"#.into())]);
    let a = RemoteAssessor::new(endpoint(&server.url)).assess(&window(), &SkillLibrary::new()).unwrap();
    assert_eq!((a.label, a.probability), (Label::Scam, 0.9));
}

#[test]
fn server_errors_are_retried() {
    let server = common::serve(vec![
        (503, "{}".into()),
        (500, "{}".into()),
        (200, r#"{"reason":"r","fraud":true,"probability":0.8}"#.into()),
    ]);
    let a = RemoteAssessor::new(endpoint(&server.url)).assess(&window(), &SkillLibrary::new()).unwrap();
    assert_eq!(a.probability, 0.8);
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_report_unavailable() {
    let server = common::serve(vec![(502, "{}".into())]);
    let err = RemoteAssessor::new(endpoint(&server.url)).assess_rendered("ctx", 0).unwrap_err();
    assert!(err.to_string().starts_with("remote-unavailable"), "{err}");
    assert_eq!(server.requests.lock().unwrap().len(), 3);
    let err = RemoteAssessor::new(endpoint(&common::dead_url())).assess_rendered("ctx", 0).unwrap_err();
    assert!(err.to_string().starts_with("remote-unavailable"), "{err}");
}

#[test]
fn malformed_replies_are_bad_responses_without_retry() {
    for body in ["not json", r#"{"reason":"r"}"#, r#"{"fraud":"Maybe"}"#] {
        let server = common::serve(vec![(200, body.into())]);
        let err = RemoteAssessor::new(endpoint(&server.url)).assess_rendered("ctx", 0).unwrap_err();
        assert!(err.to_string().starts_with("remote-bad-response"), "{body}: {err}");
        assert_eq!(server.requests.lock().unwrap().len(), 1);
    }
    let server = common::serve(vec![(404, "{}".into())]);
    let err = scamwatch_core::http::JsonClient::new(endpoint(&server.url))
        .post(&serde_json::json!({}))
        .unwrap_err();
    assert!(matches!(err, RemoteError::BadResponse(_)));
}

#[test]
fn screen_analyzer_merges_entities_and_falls_back() {
    let event = AppEvent::new(3, AppCategory::Communication, Some("Phone"), "call from bank", &["Bank"]);
    let server = common::serve(vec![(200, r#"{"entities":["Officer Li"],"summary":"caller claims to be police"}"#.into())]);
    let parse = RemoteScreenAnalyzer::new(endpoint(&server.url)).analyze(&event);
    assert_eq!(parse.entities.into_iter().collect::<Vec<_>>(), vec!["Bank", "Officer Li"]);
    assert_eq!(parse.summary, "caller claims to be police");

    let mut cfg = endpoint(&common::dead_url());
    cfg.retries = 0;
    let parsed = RemoteScreenAnalyzer::new(cfg).parse_event(&event);
    assert_eq!(parsed, event);
}
