use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use affectfuse::features::AudioClip;
use affectfuse::transcribe::{BackendRegistry, TranscribeError, TranscriptionConfig};

/// Answers each request with the next scripted `(status, body)`; records the
/// request headers.
fn scripted_server(script: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/transcribe", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (stream, (status, body)) in listener.incoming().zip(script) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            assert_eq!(&payload[..4], b"RIFF");
            log.lock().unwrap().push(headers);
            let head = format!("HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len());
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(body.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn http_cfg(endpoint: String, retries: u32) -> TranscriptionConfig {
    TranscriptionConfig {
        backend: "http".into(),
        endpoint: Some(endpoint),
        max_retries: retries,
        backoff_ms: 5,
        max_backoff_ms: 20,
        timeout_ms: 5000,
        ..Default::default()
    }
}

#[test]
fn http_backend_retries_then_succeeds_with_token() {
    let (url, seen) = scripted_server(vec![(503, "busy"), (200, r#"{"text":"i want a refund","confidence":0.75}"#)]);
    std::env::set_var("TRANSCRIBE_TOKEN", "sekret");
    let t = BackendRegistry::default().select(&http_cfg(url, 2)).unwrap().unwrap();
    let r = t.transcribe(&AudioClip::silence(0.2, 16000), Some("c7")).unwrap();
    assert_eq!(r.text, "i want a refund");
    assert_eq!(r.confidence, Some(0.75));
    assert_eq!(r.backend_id, "http");
    assert!(r.latency_ms >= 0.0);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[1].to_ascii_lowercase().contains("authorization: bearer sekret"));
    assert!(seen[1].to_ascii_lowercase().contains("x-clip-id: c7"));
}

#[test]
fn http_status_mapping() {
    let (url, _) = scripted_server(vec![(413, ""), (400, "bad"), (503, ""), (200, "not json")]);
    let t = BackendRegistry::default().select(&http_cfg(url, 0)).unwrap().unwrap();
    let clip = AudioClip::silence(0.2, 16000);
    assert!(matches!(t.transcribe(&clip, None), Err(TranscribeError::AudioTooLong { .. })));
    assert!(matches!(t.transcribe(&clip, None), Err(TranscribeError::BackendRejected(_))));
    assert!(matches!(t.transcribe(&clip, None), Err(TranscribeError::BackendUnavailable(_))));
    assert!(matches!(t.transcribe(&clip, None), Err(TranscribeError::BackendUnavailable(_))));
}

#[test]
fn http_backend_needs_endpoint() {
    let cfg = TranscriptionConfig { backend: "http".into(), ..Default::default() };
    assert!(matches!(BackendRegistry::default().select(&cfg), Err(TranscribeError::InvalidConfig(_))));
}

#[test]
fn mock_backend_from_fixture_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcripts.tsv");
    std::fs::write(&path, "clip_id\ttranscript\nravdess/03-01-05\ti want a refund\n").unwrap();
    let cfg = TranscriptionConfig { fixture: Some(path), ..Default::default() };
    let t = BackendRegistry::default().select(&cfg).unwrap().unwrap();
    let clip = AudioClip::silence(0.1, 16000);
    let hit = t.transcribe(&clip, Some("ravdess/03-01-05")).unwrap();
    assert_eq!((hit.text.as_str(), hit.confidence), ("i want a refund", Some(1.0)));
    let miss = t.transcribe(&clip, Some("other")).unwrap();
    assert_eq!((miss.text.as_str(), miss.confidence), ("", Some(0.0)));
}
