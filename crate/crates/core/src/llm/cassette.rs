use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, LlmError, Provider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    Record,
    Replay,
}

/// Hex sha256 over the wire fields of a request.
pub fn request_digest(req: &ChatRequest) -> String {
    let canonical = serde_json::to_vec(req).expect("request serializes");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Recording {
    digest: String,
    model_name: String,
    response: String,
}

/// A directory of content-addressed recordings, one `<digest>.json` each.
#[derive(Debug, Clone)]
pub struct Cassette {
    dir: PathBuf,
}

impl Cassette {
    pub fn new(dir: impl AsRef<Path>) -> Cassette {
        Cassette { dir: dir.as_ref().to_path_buf() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn get(&self, req: &ChatRequest) -> Result<Option<String>, LlmError> {
        let digest = request_digest(req);
        match fs::read(self.path(&digest)) {
            Ok(b) => {
                let r: Recording = serde_json::from_slice(&b).map_err(|e| LlmError::Cassette(format!("{digest}: {e}")))?;
                Ok(Some(r.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LlmError::Cassette(e.to_string())),
        }
    }

    pub fn put(&self, req: &ChatRequest, response: &str) -> Result<(), LlmError> {
        let digest = request_digest(req);
        let rec = Recording { digest: digest.clone(), model_name: req.model_name.clone(), response: response.to_string() };
        fs::create_dir_all(&self.dir).map_err(|e| LlmError::Cassette(e.to_string()))?;
        let mut bytes = serde_json::to_vec_pretty(&rec).expect("recording serializes");
        bytes.push(b'\n');
        fs::write(self.path(&digest), bytes).map_err(|e| LlmError::Cassette(e.to_string()))
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|d| d.filter(|e| e.as_ref().is_ok_and(|e| e.path().extension().is_some_and(|x| x == "json"))).count())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Records responses of an inner provider, or replays them without one.
pub struct CassetteProvider {
    cassette: Cassette,
    inner: Option<Arc<dyn Provider>>,
}

impl CassetteProvider {
    pub fn record(cassette: Cassette, inner: Arc<dyn Provider>) -> CassetteProvider {
        CassetteProvider { cassette, inner: Some(inner) }
    }

    pub fn replay(cassette: Cassette) -> CassetteProvider {
        CassetteProvider { cassette, inner: None }
    }
}

impl Provider for CassetteProvider {
    fn name(&self) -> &str {
        match &self.inner {
            Some(p) => p.name(),
            None => "replay",
        }
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        match &self.inner {
            None => self.cassette.get(req)?.ok_or_else(|| {
                LlmError::Cassette(format!("no recording for request {} in {}", request_digest(req), self.cassette.dir.display()))
            }),
            Some(p) => {
                let text = p.complete(req)?;
                self.cassette.put(req, &text)?;
                Ok(text)
            }
        }
    }
}
