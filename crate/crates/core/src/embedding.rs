//! Sentence embeddings and cosine similarity.
//!
//! Embeddings are always external to the toolkit: either a precomputed JSON Lines
//! file (`{"id": ..., "vector": [...]}`) or an HTTP service that accepts
//! `{"texts": [...]}` and answers `{"vectors": [[...], ...]}` in input order.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jsonl;

/// Environment variable consulted for the embedding service URL.
pub const EMBED_URL_ENV: &str = "RB_EMBED_URL";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding with zero dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite embedding component".into()));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput("zero-norm embedding".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        EmbeddingVector::new(values).map_err(serde::de::Error::custom)
    }
}

/// Cosine similarity in `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let aa: f64 = a.values.iter().map(|v| v * v).sum();
    let bb: f64 = b.values.iter().map(|v| v * v).sum();
    // sqrt of the product keeps self-similarity at exactly 1.
    Ok((dot / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// A text to embed. File-backed providers resolve by `id`, remote ones by `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextItem {
    pub id: String,
    pub text: String,
}

impl TextItem {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// One vector per item, in input order, all of the same dimension.
    fn embed(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>>;

    /// Short human-readable description for reports.
    fn describe(&self) -> String;
}

#[derive(Deserialize)]
struct EmbeddingLine {
    id: String,
    vector: Vec<f64>,
}

/// Reads an embedding file. Duplicate ids and mixed dimensions are errors.
pub fn load_embedding_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, EmbeddingVector>> {
    let path = path.as_ref();
    let lines: Vec<EmbeddingLine> = jsonl::read(path)?;
    let mut map = BTreeMap::new();
    let mut dim = None;
    for (idx, line) in lines.into_iter().enumerate() {
        let vector = EmbeddingVector::new(line.vector).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        match dim {
            None => dim = Some(vector.dim()),
            Some(d) if d != vector.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: vector.dim(),
                })
            }
            _ => {}
        }
        if map.insert(line.id.clone(), vector).is_some() {
            return Err(Error::DuplicateId(line.id));
        }
    }
    Ok(map)
}

/// Serves vectors from a preloaded id → vector map.
#[derive(Debug, Clone, Default)]
pub struct FileProvider {
    source: String,
    vectors: BTreeMap<String, EmbeddingVector>,
}

impl FileProvider {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            source: path.as_ref().display().to_string(),
            vectors: load_embedding_file(path)?,
        })
    }

    pub fn from_map(vectors: BTreeMap<String, EmbeddingVector>) -> Self {
        Self {
            source: "in-memory".into(),
            vectors,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FileProvider {
    fn embed(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>> {
        items
            .iter()
            .map(|item| {
                self.vectors
                    .get(&item.id)
                    .cloned()
                    .ok_or_else(|| Error::MissingEmbedding(item.id.clone()))
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!("file:{}", self.source)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub url: String,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub max_retries: usize,
    pub backoff: Duration,
    pub timeout: Duration,
    /// Directory for the on-disk response cache; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            batch_size: 32,
            max_in_flight: 4,
            max_retries: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(60),
            cache_dir: None,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    vector: Vec<f64>,
}

/// Client for an HTTP embedding service with a content-addressed disk cache.
pub struct RemoteProvider {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    requests: AtomicUsize,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.batch_size == 0 || config.max_in_flight == 0 {
            return Err(Error::Config(
                "embedding batch size and in-flight limit must be positive".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Remote(e.to_string()))?;
        Ok(Self {
            config,
            client,
            requests: AtomicUsize::new(0),
        })
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_made(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn cache_path(&self, text: &str) -> Option<PathBuf> {
        let dir = self.config.cache_dir.as_ref()?;
        let mut hasher = Sha256::new();
        hasher.update(self.config.url.as_bytes());
        hasher.update([0u8]);
        hasher.update(text.as_bytes());
        Some(dir.join(format!("{}.json", hex::encode(hasher.finalize()))))
    }

    fn cache_get(&self, text: &str) -> Option<EmbeddingVector> {
        let path = self.cache_path(text)?;
        let bytes = std::fs::read(path).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        EmbeddingVector::new(entry.vector).ok()
    }

    fn cache_put(&self, text: &str, vector: &EmbeddingVector) -> Result<()> {
        if let Some(path) = self.cache_path(text) {
            let bytes = serde_json::to_vec(&CacheEntry {
                vector: vector.values.clone(),
            })?;
            jsonl::write_atomic(&path, &bytes)?;
        }
        Ok(())
    }

    fn post_batch(&self, batch_index: usize, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let mut attempt = 0;
        loop {
            self.requests.fetch_add(1, Ordering::SeqCst);
            let outcome = self
                .client
                .post(&self.config.url)
                .json(&EmbedRequest { texts })
                .send();
            let retryable = match outcome {
                Ok(resp) if resp.status().is_success() => {
                    let body = resp.bytes().map_err(|e| {
                        Error::Remote(format!("batch {batch_index}: reading body: {e}"))
                    })?;
                    return parse_response(batch_index, texts.len(), &body);
                }
                Ok(resp) if resp.status().is_server_error() => {
                    format!("status {}", resp.status())
                }
                Ok(resp) => {
                    return Err(Error::Remote(format!(
                        "batch {batch_index}: status {}",
                        resp.status()
                    )))
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.config.max_retries {
                return Err(Error::Remote(format!(
                    "batch {batch_index} failed after {} attempts: {retryable}",
                    attempt + 1
                )));
            }
            log::warn!("embedding batch {batch_index} failed ({retryable}), retrying");
            std::thread::sleep(self.config.backoff * 2u32.pow(attempt as u32));
            attempt += 1;
        }
    }
}

fn parse_response(
    batch_index: usize,
    expected: usize,
    body: &[u8],
) -> Result<Vec<EmbeddingVector>> {
    let parsed: EmbedResponse = serde_json::from_slice(body)
        .map_err(|e| Error::Remote(format!("batch {batch_index}: malformed response: {e}")))?;
    if parsed.vectors.len() != expected {
        return Err(Error::Remote(format!(
            "batch {batch_index}: expected {expected} vectors, got {}",
            parsed.vectors.len()
        )));
    }
    parsed
        .vectors
        .into_iter()
        .map(|v| {
            EmbeddingVector::new(v).map_err(|e| Error::Remote(format!("batch {batch_index}: {e}")))
        })
        .collect()
}

impl EmbeddingProvider for RemoteProvider {
    fn embed(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>> {
        let mut resolved: HashMap<&str, EmbeddingVector> = HashMap::new();
        let mut pending: Vec<&str> = Vec::new();
        for item in items {
            let text = item.text.as_str();
            if resolved.contains_key(text) || pending.contains(&text) {
                continue;
            }
            match self.cache_get(text) {
                Some(v) => {
                    resolved.insert(text, v);
                }
                None => pending.push(text),
            }
        }

        let batches: Vec<&[&str]> = pending.chunks(self.config.batch_size).collect();
        for (wave_index, wave) in batches.chunks(self.config.max_in_flight).enumerate() {
            let results: Vec<Result<Vec<EmbeddingVector>>> = std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .enumerate()
                    .map(|(k, batch)| {
                        let index = wave_index * self.config.max_in_flight + k;
                        scope.spawn(move || self.post_batch(index, batch))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect()
            });
            for (batch, result) in wave.iter().zip(results) {
                for (&text, vector) in batch.iter().zip(result?) {
                    self.cache_put(text, &vector)?;
                    resolved.insert(text, vector);
                }
            }
        }

        let out: Vec<EmbeddingVector> = items
            .iter()
            .map(|item| resolved[item.text.as_str()].clone())
            .collect();
        if let Some(first) = out.first() {
            if let Some(bad) = out.iter().find(|v| v.dim() != first.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    actual: bad.dim(),
                });
            }
        }
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.config.url)
    }
}

/// Embeds every item and returns the vectors keyed by id.
pub fn fetch_embeddings(
    provider: &dyn EmbeddingProvider,
    texts: &[TextItem],
) -> Result<BTreeMap<String, EmbeddingVector>> {
    if texts.is_empty() {
        return Ok(BTreeMap::new());
    }
    let vectors = provider.embed(texts)?;
    Ok(texts.iter().map(|t| t.id.clone()).zip(vectors).collect())
}

/// Clamps a raw cosine into `[0, 1]`; the flag reports whether clamping happened.
pub fn clamp_similarity(raw: f64) -> (f64, bool) {
    if raw < 0.0 {
        (0.0, true)
    } else {
        (raw.min(1.0), false)
    }
}

/// Cosine of the two texts' embeddings, clamped below at zero.
pub fn text_similarity(
    pred: &TextItem,
    gt: &TextItem,
    provider: &dyn EmbeddingProvider,
) -> Result<f64> {
    let vectors = provider.embed(&[pred.clone(), gt.clone()])?;
    Ok(clamp_similarity(cosine(&vectors[0], &vectors[1])?).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[0.3, -1.2, 2.0]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((cosine(&v(&[3.0, 4.0]), &v(&[4.0, 3.0])).unwrap() - 0.96).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 3
            })
        ));
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
    }

    fn write(dir: &tempfile::TempDir, body: &str) -> PathBuf {
        let path = dir.path().join("emb.jsonl");
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn load_file_examples() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            &dir,
            "{\"id\":\"a\",\"vector\":[1,0,0]}\n{\"id\":\"b\",\"vector\":[0,1,0]}\n",
        );
        assert_eq!(load_embedding_file(&ok).unwrap().len(), 2);

        let mixed = write(
            &dir,
            "{\"id\":\"a\",\"vector\":[1,0,0]}\n{\"id\":\"b\",\"vector\":[0,1,0,0]}\n",
        );
        assert!(matches!(
            load_embedding_file(&mixed),
            Err(Error::DimensionMismatch { .. })
        ));

        let empty = write(&dir, "");
        assert!(load_embedding_file(&empty).unwrap().is_empty());

        let dup = write(
            &dir,
            "{\"id\":\"a\",\"vector\":[1]}\n{\"id\":\"a\",\"vector\":[2]}\n",
        );
        assert!(matches!(load_embedding_file(&dup), Err(Error::DuplicateId(id)) if id == "a"));

        let bad = write(&dir, "{\"id\":\"a\",\"vector\":[1]}\nnot json\n");
        assert!(matches!(
            load_embedding_file(&bad),
            Err(Error::Parse { line: 2, .. })
        ));

        let zero = write(&dir, "{\"id\":\"a\",\"vector\":[0,0]}\n");
        assert!(matches!(
            load_embedding_file(&zero),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    fn stub(pairs: &[(&str, &[f64])]) -> FileProvider {
        FileProvider::from_map(
            pairs
                .iter()
                .map(|(id, vals)| (id.to_string(), v(vals)))
                .collect(),
        )
    }

    #[test]
    fn text_similarity_examples() {
        let p = stub(&[
            ("p", &[1.0, 0.0]),
            ("g", &[0.0, 1.0]),
            ("same", &[0.2, 0.7]),
        ]);
        let same = TextItem::new("same", "a dog");
        assert!((text_similarity(&same, &same, &p).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            text_similarity(&TextItem::new("p", "x"), &TextItem::new("g", "y"), &p).unwrap(),
            0.0
        );
        // Raw cosine of (1, 0) and (-0.2, sqrt(0.96)) is -0.2.
        let n = stub(&[("p", &[1.0, 0.0]), ("g", &[-0.2, 0.96f64.sqrt()])]);
        let pi = TextItem::new("p", "x");
        let gi = TextItem::new("g", "y");
        let raw = cosine(
            &n.embed(std::slice::from_ref(&pi)).unwrap()[0],
            &n.embed(std::slice::from_ref(&gi)).unwrap()[0],
        )
        .unwrap();
        assert!((raw + 0.2).abs() < 1e-12);
        assert_eq!(text_similarity(&pi, &gi, &n).unwrap(), 0.0);
    }

    #[test]
    fn missing_id_is_named() {
        let p = stub(&[("a", &[1.0])]);
        let err = p.embed(&[TextItem::new("zzz", "t")]).unwrap_err();
        assert!(matches!(err, Error::MissingEmbedding(id) if id == "zzz"));
    }

    #[test]
    fn fetch_empty_makes_no_calls() {
        let provider = RemoteProvider::new(RemoteConfig::new("http://127.0.0.1:9/unused")).unwrap();
        assert!(fetch_embeddings(&provider, &[]).unwrap().is_empty());
        assert_eq!(provider.requests_made(), 0);
    }

    #[test]
    fn clamp_rule() {
        assert_eq!(clamp_similarity(-0.2), (0.0, true));
        assert_eq!(clamp_similarity(0.4), (0.4, false));
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant(
            a in proptest::collection::vec(-10.0..10.0f64, 4),
            b in proptest::collection::vec(-10.0..10.0f64, 4),
            k in 0.01..100.0f64,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let va = v(&a);
            let vb = v(&b);
            let scaled = v(&a.iter().map(|x| x * k).collect::<Vec<_>>());
            let c1 = cosine(&va, &vb).unwrap();
            let c2 = cosine(&scaled, &vb).unwrap();
            prop_assert!((c1 - c2).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&clamp_similarity(c1).0));
        }

        #[test]
        fn self_cosine_is_exactly_one(a in proptest::collection::vec(-10.0..10.0f64, 1..16)) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3));
            let va = v(&a);
            prop_assert_eq!(cosine(&va, &va).unwrap(), 1.0);
        }
    }
}
