//! Chat-completions and embeddings clients over a swappable HTTP transport.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::config::{ProviderConfig, SecretKey};
use super::ratelimit::TokenBucket;
use super::retry::{RetryPolicy, Sleeper, ThreadSleeper};
use super::{EmbeddingVector, Embedder, GatewayError, GenerationRequest, TextGenerator};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("{0}")]
    Connect(String),
}

/// One JSON POST. Implementations must not include the bearer token in errors.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&SecretKey>, body: &Value, timeout: Duration) -> Result<HttpReply, TransportError>;
}

#[derive(Debug, Clone)]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::Config(format!("building HTTP client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: Option<&SecretKey>, body: &Value, timeout: Duration) -> Result<HttpReply, TransportError> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key.expose());
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.without_url().to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.without_url().to_string())
            }
        })?;
        Ok(HttpReply { status, body })
    }
}

/// State shared by the generation and embedding clients.
struct Client {
    config: ProviderConfig,
    transport: Arc<dyn Transport>,
    sleeper: Arc<dyn Sleeper>,
    bucket: Option<Arc<TokenBucket>>,
}

impl Client {
    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn redact(&self, text: &str) -> String {
        let mut out: String = text.chars().take(300).collect();
        if let Some(key) = self.config.api_key.as_ref().filter(|k| !k.expose().is_empty()) {
            out = out.replace(key.expose(), "<redacted>");
        }
        out
    }

    /// POSTs `body` under the retry policy and returns the parsed JSON reply.
    fn call(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = self.url(path);
        let policy = RetryPolicy::new(self.config.max_retries);
        policy.run(self.sleeper.as_ref(), |attempt| {
            if let Some(bucket) = &self.bucket {
                bucket.acquire(self.sleeper.as_ref());
            }
            log::info!("POST {url} attempt {attempt}");
            let reply = self
                .transport
                .post_json(&url, self.config.api_key.as_ref(), body, self.config.timeout())
                .map_err(|e| match e {
                    TransportError::Timeout => GatewayError::Timeout { attempts: attempt },
                    TransportError::Connect(msg) => GatewayError::Transport(self.redact(&msg)),
                })?;
            match reply.status {
                200..=299 => serde_json::from_str(&reply.body)
                    .map_err(|e| GatewayError::MalformedProviderResponse(format!("body is not JSON: {e}"))),
                401 | 403 => Err(GatewayError::Auth { status: reply.status }),
                429 => Err(GatewayError::RateLimited { attempts: attempt }),
                408 | 504 => Err(GatewayError::Timeout { attempts: attempt }),
                500..=599 => Err(GatewayError::Unavailable { status: reply.status, attempts: attempt }),
                status => Err(GatewayError::Http { status, detail: self.redact(&reply.body) }),
            }
        })
    }
}

/// A text generator speaking the chat-completions JSON shape.
pub struct HttpProvider {
    client: Client,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        Ok(Self::with_transport(config, Arc::new(ReqwestTransport::new()?), Arc::new(ThreadSleeper)))
    }

    pub fn with_transport(config: ProviderConfig, transport: Arc<dyn Transport>, sleeper: Arc<dyn Sleeper>) -> Self {
        let bucket = config.requests_per_second.map(|r| Arc::new(TokenBucket::new(r)));
        HttpProvider { client: Client { config, transport, sleeper, bucket } }
    }

    /// Shares this provider's rate limit with another client of the same provider.
    pub fn rate_limiter(&self) -> Option<Arc<TokenBucket>> {
        self.client.bucket.clone()
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.client.config
    }
}

impl TextGenerator for HttpProvider {
    fn name(&self) -> &str {
        &self.client.config.model
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        if req.prompt.trim().is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &req.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": req.prompt}));
        let body = json!({
            "model": self.client.config.model,
            "messages": messages,
            "temperature": req.temperature.unwrap_or(self.client.config.temperature),
        });
        let reply = self.client.call("chat/completions", &body)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::MalformedProviderResponse("missing choices[0].message.content".into()))
    }
}

/// An embedder speaking the embeddings JSON shape.
pub struct HttpEmbedder {
    client: Client,
    model: String,
    id: String,
    dimension: usize,
}

impl HttpEmbedder {
    /// Connects and probes the model once to learn its output dimension.
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        Self::with_transport(config, Arc::new(ReqwestTransport::new()?), Arc::new(ThreadSleeper))
    }

    pub fn with_transport(config: ProviderConfig, transport: Arc<dyn Transport>, sleeper: Arc<dyn Sleeper>) -> Result<Self, GatewayError> {
        let model = config
            .embed_model
            .clone()
            .ok_or_else(|| GatewayError::Config("no embedding model configured".into()))?;
        let bucket = config.requests_per_second.map(|r| Arc::new(TokenBucket::new(r)));
        let mut me = HttpEmbedder { id: format!("http:{model}"), model, client: Client { config, transport, sleeper, bucket }, dimension: 0 };
        me.dimension = me.fetch(&["dimension probe".to_string()])?[0].len();
        Ok(me)
    }

    fn fetch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let body = json!({"model": self.model, "input": texts});
        let reply = self.client.call("embeddings", &body)?;
        let malformed = |m: &str| GatewayError::MalformedProviderResponse(m.to_string());
        let data = reply.get("data").and_then(Value::as_array).ok_or_else(|| malformed("missing data array"))?;
        if data.len() != texts.len() {
            return Err(malformed("embedding count differs from input count"));
        }
        let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
            let values = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("missing embedding"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| malformed("non-numeric embedding component")))
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(malformed("empty embedding"));
            }
            rows.push((index, values));
        }
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        let rows = self.fetch(texts)?;
        if rows.iter().any(|r| r.len() != self.dimension) {
            return Err(GatewayError::MalformedProviderResponse(format!("expected dimension {}", self.dimension)));
        }
        Ok(rows.into_iter().map(EmbeddingVector::normalized).collect())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::gateway::retry::tests::RecordingSleeper;
    use std::collections::VecDeque;
    use std::sync::{Mutex, OnceLock};

    /// Replays scripted replies and records every request.
    #[derive(Default)]
    pub struct ScriptedTransport {
        pub replies: Mutex<VecDeque<Result<HttpReply, TransportError>>>,
        pub requests: Mutex<Vec<(String, Value, bool)>>,
    }

    impl ScriptedTransport {
        pub fn new(replies: Vec<Result<HttpReply, TransportError>>) -> Arc<Self> {
            Arc::new(ScriptedTransport { replies: Mutex::new(replies.into()), requests: Mutex::default() })
        }
    }

    impl Transport for ScriptedTransport {
        fn post_json(&self, url: &str, bearer: Option<&SecretKey>, body: &Value, _: Duration) -> Result<HttpReply, TransportError> {
            self.requests.lock().unwrap().push((url.to_string(), body.clone(), bearer.is_some()));
            self.replies.lock().unwrap().pop_front().expect("script exhausted")
        }
    }

    fn ok(body: Value) -> Result<HttpReply, TransportError> {
        Ok(HttpReply { status: 200, body: body.to_string() })
    }

    fn status(code: u16, body: &str) -> Result<HttpReply, TransportError> {
        Ok(HttpReply { status: code, body: body.into() })
    }

    fn chat(text: &str) -> Result<HttpReply, TransportError> {
        ok(json!({"choices": [{"message": {"role": "assistant", "content": text}}]}))
    }

    const KEY: &str = "sk-unit-test-4f9a1c";

    fn config(retries: u32) -> ProviderConfig {
        ProviderConfig {
            base_url: "http://provider.test/v1/".into(),
            model: "test-model".into(),
            embed_model: Some("test-embed".into()),
            api_key: Some(SecretKey::new(KEY)),
            max_retries: retries,
            ..ProviderConfig::default()
        }
    }

    struct CaptureLogger(Mutex<Vec<String>>);

    impl log::Log for CaptureLogger {
        fn enabled(&self, _: &log::Metadata) -> bool {
            true
        }
        fn log(&self, record: &log::Record) {
            self.0.lock().unwrap().push(record.args().to_string());
        }
        fn flush(&self) {}
    }

    fn logger() -> &'static CaptureLogger {
        static LOGGER: OnceLock<&'static CaptureLogger> = OnceLock::new();
        LOGGER.get_or_init(|| {
            let l: &'static CaptureLogger = Box::leak(Box::new(CaptureLogger(Mutex::default())));
            if log::set_logger(l).is_ok() {
                log::set_max_level(log::LevelFilter::Trace);
            }
            l
        })
    }

    #[test]
    fn generates_from_chat_shape() {
        let t = ScriptedTransport::new(vec![chat("Abdominal Pain Flowchart")]);
        let p = HttpProvider::with_transport(config(3), t.clone(), Arc::new(RecordingSleeper::default()));
        let out = p.generate(&GenerationRequest::new("pick one").with_system("sys")).unwrap();
        assert_eq!(out, "Abdominal Pain Flowchart");
        let reqs = t.requests.lock().unwrap();
        assert_eq!(reqs[0].0, "http://provider.test/v1/chat/completions");
        assert_eq!(reqs[0].1["messages"][0]["role"], "system");
        assert_eq!(reqs[0].1["messages"][1]["content"], "pick one");
        assert_eq!(reqs[0].1["temperature"], 0.0);
        assert!(reqs[0].2);
    }

    #[test]
    fn unauthorized_is_not_retried() {
        let t = ScriptedTransport::new(vec![status(401, "bad key"), chat("never")]);
        let p = HttpProvider::with_transport(config(3), t.clone(), Arc::new(RecordingSleeper::default()));
        assert_eq!(p.generate(&GenerationRequest::new("x")), Err(GatewayError::Auth { status: 401 }));
        assert_eq!(t.requests.lock().unwrap().len(), 1);
    }

    #[test]
    fn two_timeouts_then_success() {
        logger();
        let t = ScriptedTransport::new(vec![Err(TransportError::Timeout), status(504, ""), chat("ok")]);
        let sleeper = Arc::new(RecordingSleeper::default());
        let p = HttpProvider::with_transport(config(3), t.clone(), sleeper.clone());
        assert_eq!(p.generate(&GenerationRequest::new("x")).unwrap(), "ok");
        assert_eq!(t.requests.lock().unwrap().len(), 3);
        assert_eq!(sleeper.0.lock().unwrap().len(), 2);
    }

    #[test]
    fn rate_limit_exhausts_retries() {
        let t = ScriptedTransport::new(vec![status(429, ""), status(429, ""), status(429, "")]);
        let p = HttpProvider::with_transport(config(2), t.clone(), Arc::new(RecordingSleeper::default()));
        assert_eq!(p.generate(&GenerationRequest::new("x")), Err(GatewayError::RateLimited { attempts: 3 }));
    }

    #[test]
    fn malformed_replies() {
        let t = ScriptedTransport::new(vec![ok(json!({"choices": []})), status(200, "<html>")]);
        let p = HttpProvider::with_transport(config(0), t, Arc::new(RecordingSleeper::default()));
        for _ in 0..2 {
            assert!(matches!(p.generate(&GenerationRequest::new("x")), Err(GatewayError::MalformedProviderResponse(_))));
        }
    }

    #[test]
    fn key_absent_from_errors_and_logs() {
        let capture = logger();
        let echo = format!("invalid request, header was Bearer {KEY}");
        let t = ScriptedTransport::new(vec![
            status(400, &echo),
            Err(TransportError::Connect(format!("refused ({KEY})"))),
            status(500, &echo),
            status(401, &echo),
        ]);
        let p = HttpProvider::with_transport(config(1), t, Arc::new(RecordingSleeper::default()));
        let mut rendered = Vec::new();
        for _ in 0..3 {
            let e = p.generate(&GenerationRequest::new("x")).unwrap_err();
            rendered.push(format!("{e} {e:?}"));
        }
        rendered.push(format!("{p:?}", p = p.config()));
        rendered.extend(capture.0.lock().unwrap().iter().cloned());
        assert!(rendered.len() > 4);
        for line in rendered {
            assert!(!line.contains(KEY), "key leaked: {line}");
        }
    }

    #[test]
    fn embeddings_normalized_and_ordered() {
        let t = ScriptedTransport::new(vec![
            ok(json!({"data": [{"index": 0, "embedding": [1.0, 0.0, 0.0]}]})),
            ok(json!({"data": [{"index": 1, "embedding": [0.0, 3.0, 4.0]}, {"index": 0, "embedding": [2.0, 0.0, 0.0]}]})),
            ok(json!({"data": [{"index": 0, "embedding": [1.0, 0.0]}]})),
        ]);
        let e = HttpEmbedder::with_transport(config(0), t.clone(), Arc::new(RecordingSleeper::default())).unwrap();
        assert_eq!(e.dimension(), 3);
        assert_eq!(e.id(), "http:test-embed");
        let out = e.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(out[0].values(), &[1.0, 0.0, 0.0]);
        assert_eq!(out[1].values(), &[0.0, 0.6, 0.8]);
        assert!(matches!(e.embed(&["c".into()]), Err(GatewayError::MalformedProviderResponse(_))));
        assert_eq!(t.requests.lock().unwrap()[1].0, "http://provider.test/v1/embeddings");
    }
}
