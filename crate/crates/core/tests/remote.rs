use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use questprobe::backend::{Backend, BackendError, Prompt, PromptKind, RemoteBackend};
use questprobe::{BackendKind, BackendParams};
use serde_json::Value;

const CREDENTIAL_ENV: &str = "QUESTPROBE_REMOTE_TEST_KEY";

struct Seen {
    auth: Option<String>,
    path: String,
    body: Value,
}

/// Serves the canned `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let (mut len, mut auth) = (0usize, None);
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (name, value) = h.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => len = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; len];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Seen { auth, path, body: serde_json::from_slice(&raw).unwrap() });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1/"), seen)
}

fn backend(endpoint: String, retries: u32) -> RemoteBackend {
    std::env::set_var(CREDENTIAL_ENV, "sk-test");
    let mut p = BackendParams::new(BackendKind::Remote);
    p.endpoint = Some(endpoint);
    p.credential_env = CREDENTIAL_ENV.into();
    p.max_retries = retries;
    p.timeout_ms = 5_000;
    RemoteBackend::new(p).unwrap()
}

fn prompt() -> Prompt {
    Prompt { kind: PromptKind::Decision, system: "role".into(), user: "state".into() }
}

fn reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn posts_chat_completion_and_returns_content() {
    let (url, seen) = serve(vec![(200, reply("Move(to=market)"))]);
    let mut b = backend(url, 0);
    assert_eq!(b.complete(&prompt()).unwrap(), "Move(to=market)");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sk-test"));
    let messages = seen[0].body["messages"].as_array().unwrap();
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[0]["content"], "role");
    assert_eq!(messages[1]["content"], "state");
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = serve(vec![(503, "{}".into()), (500, "{}".into()), (200, reply("Explore(direction=north)"))]);
    let mut b = backend(url, 2);
    assert_eq!(b.complete(&prompt()).unwrap(), "Explore(direction=north)");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let (url, seen) = serve(vec![(502, "{}".into()), (502, "{}".into())]);
    let mut b = backend(url, 1);
    assert!(matches!(b.complete(&prompt()), Err(BackendError::Transport(_))));
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(401, "{}".into()), (200, reply("unused"))]);
    let mut b = backend(url, 3);
    assert!(matches!(b.complete(&prompt()), Err(BackendError::Transport(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn reply_without_content_is_unparseable() {
    let (url, _) = serve(vec![(200, r#"{"choices": []}"#.into())]);
    let mut b = backend(url, 0);
    assert!(matches!(b.complete(&prompt()), Err(BackendError::Unparseable(_))));
}
