use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use ftrans_core::corpus::default_root;
use ftrans_core::llm::{
    load_transcript, record_transcript, ChatMessage, LlmClient, LlmError, ProviderConfig, ProviderKind,
};
use ftrans_core::prompt::{parse_response, render, Task};

fn slots(pairs: &[(&str, &str)]) -> std::collections::BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn messages(task: Task, pairs: &[(&str, &str)]) -> Vec<ChatMessage> {
    let (system, user) = render(task, &slots(pairs)).unwrap();
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

fn rule_based(inject_faults: bool) -> LlmClient {
    LlmClient::new(ProviderConfig {
        kind: ProviderKind::RuleBased,
        inject_faults,
        ..Default::default()
    })
    .unwrap()
}

fn daylength_source() -> String {
    std::fs::read_to_string(default_root().join("daylength/src.f90")).unwrap()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(default_root().join("daylength/golden").join(name)).unwrap()
}

#[test]
fn rule_based_daylength_translation_is_the_golden() {
    let client = rule_based(false);
    let ex = client
        .complete(&messages(Task::TranslateSource, &[("fortran_code", &daylength_source())]))
        .unwrap();
    let parsed = parse_response(Task::TranslateSource, &ex.response_text).unwrap();
    assert_eq!(parsed.source_code.unwrap(), golden("daylength.py").trim_end());
    assert_eq!(ex.provider_kind, ProviderKind::RuleBased);
}

#[test]
fn rule_based_fault_injection_drops_the_declination_guard() {
    let ex = rule_based(true)
        .complete(&messages(Task::TranslateSource, &[("fortran_code", &daylength_source())]))
        .unwrap();
    let source = parse_response(Task::TranslateSource, &ex.response_text).unwrap().source_code.unwrap();
    assert!(!source.contains("decl = np.where(abs(decl) >= pole, np.nan, decl)"));
    assert!(golden("daylength.py").contains("decl = np.where(abs(decl) >= pole, np.nan, decl)"));
}

#[test]
fn rule_based_repair_returns_golden_pair() {
    let msgs = messages(
        Task::Repair,
        &[
            ("python_function", "def daylength(lat, decl):\n    return 0"),
            ("python_unit_tests", "def test_x():\n    assert False"),
            ("python_test_results", "1 failed"),
        ],
    );
    let ex = rule_based(true).complete(&msgs).unwrap();
    let parsed = parse_response(Task::Repair, &ex.response_text).unwrap();
    assert_eq!(parsed.source_code.unwrap(), golden("daylength.py").trim_end());
    assert_eq!(parsed.unit_tests.unwrap(), golden("test_daylength.py").trim_end());
}

#[test]
fn rule_based_transpiles_units_without_goldens() {
    let code = "elemental real(r8) function twice(x)\n  real(r8), intent(in) :: x\n  twice = 2.0_r8 * x\nend function twice\n";
    let client = rule_based(false);
    let ex = client.complete(&messages(Task::TranslateSource, &[("fortran_code", code)])).unwrap();
    let src = parse_response(Task::TranslateSource, &ex.response_text).unwrap().source_code.unwrap();
    assert!(src.contains("def twice(x):\n    twice = 2.0 * x\n    return twice"));

    let ex = client.complete(&messages(Task::GenFortranTests, &[("fortran_code", code)])).unwrap();
    let pf = parse_response(Task::GenFortranTests, &ex.response_text).unwrap().unit_tests.unwrap();
    assert!(pf.contains("module test_twice"));
    let ex = client.complete(&messages(Task::TranslateTests, &[("unit_tests", &pf)])).unwrap();
    let py = parse_response(Task::TranslateTests, &ex.response_text).unwrap().unit_tests.unwrap();
    assert!(py.contains("def test_twice_evaluates():"));
}

#[test]
fn record_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let msgs = messages(Task::TranslateSource, &[("fortran_code", &daylength_source())]);
    let recorded = rule_based(false).complete(&msgs).unwrap();
    let path = record_transcript(&recorded, dir.path()).unwrap();
    assert_eq!(path.file_name().unwrap().to_str().unwrap(), format!("{}.json", recorded.request_digest));
    record_transcript(&recorded, dir.path()).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);

    let replay = LlmClient::new(ProviderConfig {
        kind: ProviderKind::Replay,
        transcript_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    })
    .unwrap();
    let replayed = replay.complete(&msgs).unwrap();
    assert_eq!(replayed.response_text, recorded.response_text);
    assert_eq!(replayed.request_digest, recorded.request_digest);
    assert!(replayed.latency_secs < 0.5);
    assert_eq!(load_transcript(dir.path(), &recorded.request_digest).unwrap().response_text, recorded.response_text);

    let other = messages(Task::TranslateSource, &[("fortran_code", "x")]);
    match replay.complete(&other) {
        Err(LlmError::ReplayMiss { digest }) => assert_eq!(digest.len(), 64),
        other => panic!("{other:?}"),
    }
    let other_ex = rule_based(false).complete(&other).unwrap();
    record_transcript(&other_ex, dir.path()).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn record_dir_captures_every_exchange() {
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::new(ProviderConfig {
        record_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    })
    .unwrap();
    let ex = client
        .complete(&messages(Task::TranslateSource, &[("fortran_code", &daylength_source())]))
        .unwrap();
    assert!(dir.path().join(format!("{}.json", ex.request_digest)).is_file());
}

/// Serve canned `(status, body)` responses, one per connection, recording
/// each request's headers and body.
fn mock_server(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            head.push_str(&String::from_utf8_lossy(&buf));
            log.lock().unwrap().push(head);
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn http_config(url: &str, key_env: &str) -> ProviderConfig {
    ProviderConfig {
        kind: ProviderKind::HttpChat,
        base_url: Some(url.to_string()),
        model_name: Some("test-model".into()),
        api_key_env: key_env.into(),
        backoff_ms: 1,
        timeout: 5.0,
        ..Default::default()
    }
}

#[test]
fn http_chat_sends_openai_shape_and_retries_server_errors() {
    std::env::set_var("FTRANS_TEST_KEY_OK", "sk-test");
    let ok = r#"{"choices":[{"message":{"role":"assistant","content":"```python\nA\n```"}}]}"#;
    let (url, seen) = mock_server(vec![(500, "boom".into()), (200, ok.into())]);
    let client = LlmClient::new(http_config(&url, "FTRANS_TEST_KEY_OK")).unwrap();
    let ex = client.complete(&messages(Task::TranslateSource, &[("fortran_code", "x")])).unwrap();
    assert_eq!(ex.response_text, "```python\nA\n```");
    assert_eq!(client.calls(), 1);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let req = &seen[1];
    assert!(req.starts_with("POST /chat/completions"));
    assert!(req.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&req[req.find("\r\n\r\n").unwrap() + 4..]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
}

#[test]
fn http_chat_client_errors_are_not_retried() {
    std::env::set_var("FTRANS_TEST_KEY_401", "sk-test");
    let (url, seen) = mock_server(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let client = LlmClient::new(http_config(&url, "FTRANS_TEST_KEY_401")).unwrap();
    match client.complete(&messages(Task::TranslateSource, &[("fortran_code", "x")])) {
        Err(LlmError::ProviderError { status: 401, body }) => assert!(body.contains("bad key")),
        other => panic!("{other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn http_chat_requires_api_key_env() {
    std::env::remove_var("FTRANS_TEST_KEY_UNSET");
    match LlmClient::new(http_config("http://127.0.0.1:9", "FTRANS_TEST_KEY_UNSET")) {
        Err(LlmError::AuthMissing { var }) => assert_eq!(var, "FTRANS_TEST_KEY_UNSET"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn http_chat_times_out() {
    std::env::set_var("FTRANS_TEST_KEY_SLOW", "sk-test");
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        let held: Vec<_> = listener.incoming().take(1).collect();
        thread::sleep(std::time::Duration::from_secs(3));
        drop(held);
    });
    let config = ProviderConfig {
        timeout: 0.3,
        max_attempts: 1,
        ..http_config(&url, "FTRANS_TEST_KEY_SLOW")
    };
    let client = LlmClient::new(config).unwrap();
    assert!(matches!(
        client.complete(&messages(Task::TranslateSource, &[("fortran_code", "x")])),
        Err(LlmError::TimeoutExceeded { .. })
    ));
}
