//! Language-model clients: an OpenAI-style HTTP chat backend, an on-disk
//! response cache and an in-flight request limiter.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

/// Decoding is greedy (temperature 0) with a fixed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub seed: u64,
    pub max_tokens: u32,
}

impl LlmRequest {
    pub fn new(model: &str, messages: Vec<Message>, seed: u64) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: 0.0,
            seed,
            max_tokens: 512,
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn cache_key(&self) -> String {
        let body = serde_json::to_vec(self).expect("request serialises");
        hex::encode(Sha256::digest(&body))
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("backend refused: {0}")]
    Refused(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("missing credential: set {0}")]
    MissingToken(String),
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, req: &LlmRequest) -> Result<String, BackendError>;
}

/// Counting semaphore bounding concurrent requests.
pub struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Limiter);

impl Limiter {
    pub fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("limiter lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter lock") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    /// Endpoint root; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: f64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "gpt-4".into(),
            token_env: "CFDRIVE_LLM_TOKEN".into(),
            timeout_secs: 60.0,
            retries: 2,
            max_in_flight: 4,
        }
    }
}

pub struct HttpBackend {
    settings: HttpSettings,
    token: Option<String>,
    client: reqwest::blocking::Client,
    limiter: Limiter,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Result<Self, BackendError> {
        let token = std::env::var(&settings.token_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(settings.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            limiter: Limiter::new(settings.max_in_flight),
            settings,
            token,
            client,
        })
    }

    fn once(&self, req: &LlmRequest) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'));
        let mut rb = self.client.post(url).json(req);
        if let Some(t) = &self.token {
            rb = rb.bearer_auth(t);
        }
        let resp = rb.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED && self.token.is_none() {
            return Err(BackendError::MissingToken(self.settings.token_env.clone()));
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(BackendError::Refused(format!("{status}: {body}")));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| BackendError::Malformed(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices".into()))?;
        if text.trim().is_empty() {
            return Err(BackendError::Refused("empty answer".into()));
        }
        Ok(text)
    }
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> String {
        format!("http:{}", self.settings.model)
    }

    fn complete(&self, req: &LlmRequest) -> Result<String, BackendError> {
        let _permit = self.limiter.acquire();
        let mut last = BackendError::Transport("no attempt made".into());
        for attempt in 0..=self.settings.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 << attempt.min(5)));
            }
            match self.once(req) {
                Ok(t) => return Ok(t),
                Err(e @ BackendError::MissingToken(_)) => return Err(e),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "llm request failed");
                    last = e;
                }
            }
        }
        Err(last)
    }
}

/// Wraps a backend with a directory of `<sha256>.json` responses.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    write_lock: Mutex<()>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    backend: String,
    request: LlmRequest,
    response: String,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl<B: LlmBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            inner,
            dir,
            write_lock: Mutex::new(()),
        })
    }

    fn path(&self, req: &LlmRequest) -> PathBuf {
        self.dir.join(format!("{}.json", req.cache_key()))
    }

    fn store(&self, req: &LlmRequest, response: &str) -> std::io::Result<()> {
        let entry = CacheEntry {
            backend: self.inner.name(),
            request: req.clone(),
            response: response.to_string(),
        };
        let _guard = self.write_lock.lock().expect("cache lock");
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, serde_json::to_vec_pretty(&entry)?)?;
        std::fs::rename(tmp, self.path(req))
    }
}

impl<B: LlmBackend> LlmBackend for CachedBackend<B> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn complete(&self, req: &LlmRequest) -> Result<String, BackendError> {
        if let Ok(bytes) = std::fs::read(self.path(req)) {
            if let Ok(e) = serde_json::from_slice::<CacheEntry>(&bytes) {
                if e.request == *req {
                    return Ok(e.response);
                }
            }
        }
        let text = self.inner.complete(req)?;
        if let Err(e) = self.store(req, &text) {
            tracing::warn!(error = %e, "could not write llm cache entry");
        }
        Ok(text)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn complete(&self, req: &LlmRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    struct Counting(Arc<AtomicUsize>);

    impl LlmBackend for Counting {
        fn name(&self) -> String {
            "counting".into()
        }
        fn complete(&self, req: &LlmRequest) -> Result<String, BackendError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("echo {}", req.messages.len()))
        }
    }

    fn req() -> LlmRequest {
        LlmRequest::new("m", vec![Message::new("user", "hi")], 7)
    }

    #[test]
    fn cache_hits_skip_backend() {
        let dir = tempfile::tempdir().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let b = CachedBackend::new(Counting(calls.clone()), dir.path()).unwrap();
        assert_eq!(b.complete(&req()).unwrap(), "echo 1");
        assert_eq!(b.complete(&req()).unwrap(), "echo 1");
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        let mut other = req();
        other.seed = 8;
        b.complete(&other).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(req().cache_key(), req().cache_key());
        assert_ne!(req().cache_key(), other.cache_key());
    }

    /// Serves the given (status, body) pairs, one connection each.
    fn serve(replies: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
                let (mut sock, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(sock.try_clone().unwrap());
                let mut len = 0;
                let mut head = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.push(head + &String::from_utf8(buf).unwrap());
                write!(
                    sock,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (format!("http://{addr}/v1"), h)
    }

    #[test]
    fn http_retries_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"fine"}}]}"#.to_string();
        let (url, h) = serve(vec![(500, "{}".into()), (200, ok)]);
        let b = HttpBackend::new(HttpSettings {
            base_url: url,
            token_env: "CFDRIVE_TEST_TOKEN_UNSET".into(),
            retries: 1,
            timeout_secs: 5.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(b.complete(&req()).unwrap(), "fine");
        let seen = h.join().unwrap();
        assert_eq!(seen.len(), 2);
        assert!(seen[1].contains("POST /v1/chat/completions"));
        assert!(seen[1].contains("\"temperature\":0.0"));
    }

    #[test]
    fn http_gives_up() {
        let (url, h) = serve(vec![(503, "busy".into())]);
        let b = HttpBackend::new(HttpSettings {
            base_url: url,
            token_env: "CFDRIVE_TEST_TOKEN_UNSET".into(),
            retries: 0,
            timeout_secs: 5.0,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(b.complete(&req()), Err(BackendError::Refused(_))));
        h.join().unwrap();
    }
}
