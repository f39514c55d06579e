use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use sha2::{Digest, Sha256};

use super::PerceptionError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VlmPart {
    Text(String),
    /// Encoded image (PNG).
    Image(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VlmRequest {
    pub parts: Vec<VlmPart>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VlmResponse {
    pub text: String,
}

impl VlmRequest {
    pub fn new(parts: Vec<VlmPart>) -> Result<Self, PerceptionError> {
        if parts.is_empty() {
            return Err(PerceptionError::EmptyRequest);
        }
        Ok(Self { parts })
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            VlmPart::Text(t) => Some(t.as_str()),
            VlmPart::Image(_) => None,
        })
    }

    pub fn images(&self) -> impl Iterator<Item = &[u8]> {
        self.parts.iter().filter_map(|p| match p {
            VlmPart::Image(b) => Some(b.as_slice()),
            VlmPart::Text(_) => None,
        })
    }

    /// Hex SHA-256 over the tagged, length-prefixed parts.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.parts {
            let (tag, bytes) = match p {
                VlmPart::Text(t) => (b'T', t.as_bytes()),
                VlmPart::Image(b) => (b'I', b.as_slice()),
            };
            h.update([tag]);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        hex::encode(h.finalize())
    }
}

pub trait Vlm: Send + Sync {
    fn chat(&self, request: &VlmRequest) -> Result<VlmResponse, PerceptionError>;
}

pub const REPLAY_FILE: &str = "responses.json";

/// Canned responses keyed by request hash; read-only after load.
#[derive(Debug, Clone, Default)]
pub struct ReplayVlm {
    responses: BTreeMap<String, String>,
}

impl ReplayVlm {
    pub fn new(responses: BTreeMap<String, String>) -> Self {
        Self { responses }
    }

    pub fn load(dir: &Path) -> Result<Self, PerceptionError> {
        let path = dir.join(REPLAY_FILE);
        let bytes = std::fs::read(&path).map_err(|e| PerceptionError::Io(format!("{}: {e}", path.display())))?;
        let responses =
            serde_json::from_slice(&bytes).map_err(|e| PerceptionError::Manifest(format!("{}: {e}", path.display())))?;
        Ok(Self { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Vlm for ReplayVlm {
    fn chat(&self, request: &VlmRequest) -> Result<VlmResponse, PerceptionError> {
        let key = request.hash();
        self.responses
            .get(&key)
            .map(|t| VlmResponse { text: t.clone() })
            .ok_or(PerceptionError::ReplayMiss(key))
    }
}

/// Forwards to an inner backend and writes every exchange to a replay store.
pub struct RecordingVlm {
    inner: Box<dyn Vlm>,
    dir: PathBuf,
    log: Mutex<BTreeMap<String, String>>,
}

impl RecordingVlm {
    pub fn new(inner: Box<dyn Vlm>, dir: &Path) -> Result<Self, PerceptionError> {
        std::fs::create_dir_all(dir).map_err(|e| PerceptionError::Io(format!("{}: {e}", dir.display())))?;
        let existing = match ReplayVlm::load(dir) {
            Ok(r) => r.responses,
            Err(_) => BTreeMap::new(),
        };
        Ok(Self {
            inner,
            dir: dir.to_path_buf(),
            log: Mutex::new(existing),
        })
    }
}

impl Vlm for RecordingVlm {
    fn chat(&self, request: &VlmRequest) -> Result<VlmResponse, PerceptionError> {
        let response = self.inner.chat(request)?;
        let mut log = self.log.lock().expect("recording lock");
        log.insert(request.hash(), response.text.clone());
        let mut bytes = serde_json::to_vec_pretty(&*log).expect("responses serialize");
        bytes.push(b'\n');
        let path = self.dir.join(REPLAY_FILE);
        std::fs::write(&path, bytes).map_err(|e| PerceptionError::Io(format!("{}: {e}", path.display())))?;
        Ok(response)
    }
}

/// OpenAI-style chat completions endpoint.
#[derive(Debug, Clone)]
pub struct HttpVlm {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub retries: u32,
    pub timeout: Duration,
}

impl HttpVlm {
    pub fn new(url: &str) -> Self {
        Self {
            url: url.to_string(),
            api_key: std::env::var("ATOMNAV_VLM_KEY").ok(),
            model: std::env::var("ATOMNAV_VLM_MODEL").unwrap_or_else(|_| "gpt-4o".to_string()),
            retries: 2,
            timeout: Duration::from_secs(60),
        }
    }

    fn body(&self, request: &VlmRequest) -> serde_json::Value {
        let content: Vec<serde_json::Value> = request
            .parts
            .iter()
            .map(|p| match p {
                VlmPart::Text(t) => serde_json::json!({"type": "text", "text": t}),
                VlmPart::Image(b) => serde_json::json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(b))}
                }),
            })
            .collect();
        serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        })
    }
}

impl Vlm for HttpVlm {
    fn chat(&self, request: &VlmRequest) -> Result<VlmResponse, PerceptionError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let body = self.body(request).to_string();
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(250 * (1 << attempt.min(4))));
            }
            let mut req = agent.post(&self.url).set("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            match req.send_string(&body) {
                Ok(resp) => {
                    let text = resp.into_string().map_err(|e| PerceptionError::Transport {
                        retries: attempt,
                        message: e.to_string(),
                    })?;
                    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| PerceptionError::Transport {
                        retries: attempt,
                        message: format!("response is not JSON: {e}"),
                    })?;
                    return v["choices"][0]["message"]["content"]
                        .as_str()
                        .map(|t| VlmResponse { text: t.to_string() })
                        .ok_or_else(|| PerceptionError::Transport {
                            retries: attempt,
                            message: "response has no choices[0].message.content".into(),
                        });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(PerceptionError::Transport {
            retries: self.retries,
            message: last,
        })
    }
}

/// Resolve an endpoint string: `replay:DIR`, `http:URL`/`https://…`, or
/// `oracle:SCENE.json`.
pub fn open_vlm(endpoint: &str) -> Result<Box<dyn Vlm>, PerceptionError> {
    if let Some(dir) = endpoint.strip_prefix("replay:") {
        return Ok(Box::new(ReplayVlm::load(Path::new(dir))?));
    }
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        return Ok(Box::new(HttpVlm::new(endpoint)));
    }
    if let Some(url) = endpoint.strip_prefix("http:") {
        return Ok(Box::new(HttpVlm::new(url)));
    }
    if let Some(scene) = endpoint.strip_prefix("oracle:") {
        let oracle = crate::sim::OracleVlm::from_scene_file(Path::new(scene))
            .map_err(|e| PerceptionError::Manifest(e.to_string()))?;
        return Ok(Box::new(oracle));
    }
    Err(PerceptionError::Endpoint(endpoint.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(text: &str) -> VlmRequest {
        VlmRequest::new(vec![VlmPart::Image(vec![1, 2, 3]), VlmPart::Text(text.into())]).unwrap()
    }

    #[test]
    fn replay_hit_and_miss() {
        let h = req("which?");
        let vlm = ReplayVlm::new(BTreeMap::from([(h.hash(), "[C]".to_string())]));
        assert_eq!(vlm.chat(&h).unwrap().text, "[C]");
        assert_eq!(vlm.chat(&h).unwrap(), vlm.chat(&h).unwrap());
        assert!(matches!(vlm.chat(&req("other")), Err(PerceptionError::ReplayMiss(_))));
    }

    #[test]
    fn hash_separates_part_boundaries() {
        let a = VlmRequest::new(vec![VlmPart::Text("ab".into()), VlmPart::Text("c".into())]).unwrap();
        let b = VlmRequest::new(vec![VlmPart::Text("a".into()), VlmPart::Text("bc".into())]).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert!(VlmRequest::new(vec![]).is_err());
    }

    #[test]
    fn recording_feeds_replay() {
        let dir = tempfile::tempdir().unwrap();
        let h = req("x");
        let inner = ReplayVlm::new(BTreeMap::from([(h.hash(), "[A]".to_string())]));
        let rec = RecordingVlm::new(Box::new(inner), dir.path()).unwrap();
        rec.chat(&h).unwrap();
        let replay = open_vlm(&format!("replay:{}", dir.path().display())).unwrap();
        assert_eq!(replay.chat(&h).unwrap().text, "[A]");
    }

    #[test]
    fn unreachable_http_is_transport_error() {
        let mut vlm = HttpVlm::new("http://127.0.0.1:9/v1/chat/completions");
        vlm.retries = 1;
        vlm.timeout = Duration::from_millis(200);
        match vlm.chat(&req("x")) {
            Err(PerceptionError::Transport { retries, .. }) => assert_eq!(retries, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
