//! Text similarity, the instruction-to-API retriever and the per-API
//! documentation chunk index used to explain error codes.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc_model::{ApiDocument, ApiSpec};
use crate::gateways::http::{HttpError, RetryPolicy};
use crate::parallel::{self, Parallelism};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("the API document is empty")]
    EmptyDocument,
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// A text similarity model. Scores live in `[0, 1]`.
pub trait SimilarityModel: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;

    fn score(&self, a: &str, b: &str) -> Result<f64, RetrievalError> {
        let (x, y) = (self.embed(a)?, self.embed(b)?);
        cosine(&x, &y).map(|c| c.clamp(0.0, 1.0))
    }
}

impl<M: SimilarityModel + ?Sized> SimilarityModel for &M {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        (**self).embed(text)
    }
    fn score(&self, a: &str, b: &str) -> Result<f64, RetrievalError> {
        (**self).score(a, b)
    }
}

impl<M: SimilarityModel + ?Sized> SimilarityModel for Box<M> {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        (**self).embed(text)
    }
    fn score(&self, a: &str, b: &str) -> Result<f64, RetrievalError> {
        (**self).score(a, b)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch { left: a.len(), right: b.len() });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x3040..=0x30ff | 0x3400..=0x4dbf | 0x4e00..=0x9fff | 0xac00..=0xd7af | 0xf900..=0xfaff)
}

/// Lowercase word tokens. Splits on non-alphanumerics and on camelCase
/// boundaries; every CJK character is its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    let flush = |cur: &mut String, tokens: &mut Vec<String>| {
        if !cur.is_empty() {
            tokens.push(std::mem::take(cur));
        }
    };
    for c in text.chars() {
        if is_cjk(c) {
            flush(&mut cur, &mut tokens);
            tokens.push(c.to_string());
            prev = None;
            continue;
        }
        if !c.is_alphanumeric() {
            flush(&mut cur, &mut tokens);
            prev = None;
            continue;
        }
        if c.is_uppercase() && prev.is_some_and(|p| p.is_lowercase() || p.is_ascii_digit()) {
            flush(&mut cur, &mut tokens);
        }
        cur.extend(c.to_lowercase());
        prev = Some(c);
    }
    flush(&mut cur, &mut tokens);
    tokens
}

/// TF-IDF weighted bag-of-words cosine.
///
/// IDF is smoothed as `ln((1 + n) / (1 + df)) + 1`; terms never seen while
/// fitting get `df = 0`. `embed` produces a dense vector over the fitted
/// vocabulary, so unseen query terms only affect `score`.
#[derive(Debug, Clone, Default)]
pub struct TfIdfModel {
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
    n_docs: usize,
}

impl TfIdfModel {
    pub fn fit<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for text in corpus {
            let mut seen: Vec<String> = tokenize(text.as_ref());
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let n_docs = corpus.len();
        let mut vocab = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (term, count)) in df.into_iter().enumerate() {
            idf.push(smooth_idf(n_docs, count));
            vocab.insert(term, i);
        }
        TfIdfModel { vocab, idf, n_docs }
    }

    /// Fits IDF over every text unit of the document: API names,
    /// descriptions, parameter names and descriptions, exception sentences.
    pub fn fit_document(doc: &ApiDocument) -> Self {
        let mut corpus = Vec::new();
        for api in &doc.apis {
            corpus.push(api.name.clone());
            corpus.extend(api_sentences(api));
            for p in &api.params {
                corpus.push(p.name.clone());
            }
        }
        Self::fit(&corpus)
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        match self.vocab.get(term) {
            Some(&i) => self.idf[i],
            None => smooth_idf(self.n_docs, 0),
        }
    }

    /// L2-normalized sparse TF-IDF weights of `text`.
    pub fn weights(&self, text: &str) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_default() += 1.0;
        }
        for (term, w) in tf.iter_mut() {
            *w *= self.idf(term);
        }
        let norm = tf.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            tf.values_mut().for_each(|w| *w /= norm);
        }
        tf
    }
}

fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl SimilarityModel for TfIdfModel {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let mut v = vec![0.0; self.vocab.len()];
        for (term, w) in self.weights(text) {
            if let Some(&i) = self.vocab.get(&term) {
                v[i] = w;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }

    fn score(&self, a: &str, b: &str) -> Result<f64, RetrievalError> {
        let (wa, wb) = (self.weights(a), self.weights(b));
        let dot: f64 = wa.iter().filter_map(|(t, x)| wb.get(t).map(|y| x * y)).sum();
        Ok(dot.clamp(0.0, 1.0) + 0.0)
    }
}

/// Unfitted TF-IDF model: uniform IDF, i.e. plain term-frequency cosine.
/// Use [`TfIdfModel::fit_document`] to weight terms by a loaded document.
pub fn default_similarity() -> TfIdfModel {
    TfIdfModel::default()
}

/// Remote embedding model speaking the `{"input":[..],"model":..}` →
/// `{"data":[{"embedding":[..]}]}` wire shape. Embeddings are cached.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        HttpEmbedder {
            client: reqwest::blocking::Client::new(),
            url: url.into(),
            model: model.into(),
            api_key,
            retry: RetryPolicy::default(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn fetch(&self, text: &str) -> Result<Vec<f64>, HttpError> {
        let body = serde_json::json!({ "input": [text], "model": self.model });
        let reply = crate::gateways::http::post_json(&self.client, &self.url, self.api_key.as_deref(), &body, &self.retry)?;
        let parsed: serde_json::Value = serde_json::from_str(&reply)
            .map_err(|e| HttpError::Protocol(format!("embedding response is not JSON: {e}")))?;
        parsed["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| HttpError::Protocol("missing data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| HttpError::Protocol("non-numeric embedding".into())))
            .collect()
    }
}

impl SimilarityModel for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(text) {
            return Ok(v.clone());
        }
        let v = self.fetch(text).map_err(|e| RetrievalError::Embedding(e.to_string()))?;
        self.cache.lock().expect("cache lock").insert(text.to_string(), v.clone());
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevantEntry {
    pub api_name: String,
    pub score: f64,
}

/// Top-k APIs for an instruction, best first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelevantSet {
    pub entries: Vec<RelevantEntry>,
}

impl RelevantSet {
    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.api_name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.api_name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ranks every API by the similarity of its description to `instruction`
/// and keeps the best `k`. Ties keep document order.
pub fn retrieve_relevant_apis(
    instruction: &str,
    doc: &ApiDocument,
    model: &dyn SimilarityModel,
    k: usize,
) -> Result<RelevantSet, RetrievalError> {
    if doc.is_empty() {
        return Err(RetrievalError::EmptyDocument);
    }
    let mut scored = Vec::with_capacity(doc.len());
    for api in &doc.apis {
        scored.push(RelevantEntry { api_name: api.name.clone(), score: model.score(instruction, &api.description)? });
    }
    // Stable: equal scores stay in document order.
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    scored.truncate(k.max(1));
    Ok(RelevantSet { entries: scored })
}

/// Splits on `.`, `?` or `!` followed by whitespace, and on newlines.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' {
            push_sentence(&mut out, &mut cur);
            continue;
        }
        cur.push(c);
        if matches!(c, '.' | '?' | '!') && chars.peek().is_some_and(|n| n.is_whitespace()) {
            push_sentence(&mut out, &mut cur);
        }
    }
    push_sentence(&mut out, &mut cur);
    out
}

fn push_sentence(out: &mut Vec<String>, cur: &mut String) {
    let s = cur.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    cur.clear();
}

/// The documentation sentences of one API, in order: description,
/// parameter descriptions, then `Error <code>: <message>` lines.
pub fn api_sentences(api: &ApiSpec) -> Vec<String> {
    let mut out = split_sentences(&api.description);
    for p in &api.params {
        out.extend(split_sentences(&p.description));
    }
    for e in &api.exceptions {
        out.extend(split_sentences(&format!("Error {}: {}", e.code, e.message)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub sentences: Vec<String>,
    pub vector: Vec<f64>,
}

impl Chunk {
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

/// Documentation chunks grouped by API, immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChunkIndex {
    apis: Vec<(String, Vec<Chunk>)>,
}

impl ChunkIndex {
    pub fn chunks(&self, api_name: &str) -> &[Chunk] {
        self.apis
            .iter()
            .find(|(name, _)| name == api_name)
            .map(|(_, c)| c.as_slice())
            .unwrap_or(&[])
    }

    pub fn api_names(&self) -> impl Iterator<Item = &str> {
        self.apis.iter().map(|(n, _)| n.as_str())
    }

    pub fn total_chunks(&self) -> usize {
        self.apis.iter().map(|(_, c)| c.len()).sum()
    }
}

pub const DEFAULT_CHUNK_THRESHOLD: f64 = 0.3;

/// Greedy semantic chunking: each sentence joins the open chunk when its
/// score against the chunk text reaches `chunk_threshold`, otherwise it
/// opens a new chunk.
pub fn build_chunk_index(
    doc: &ApiDocument,
    model: &dyn SimilarityModel,
    chunk_threshold: f64,
) -> Result<ChunkIndex, RetrievalError> {
    build_chunk_index_with(doc, model, chunk_threshold, Parallelism::Sequential)
}

pub fn build_chunk_index_with(
    doc: &ApiDocument,
    model: &dyn SimilarityModel,
    chunk_threshold: f64,
    par: Parallelism,
) -> Result<ChunkIndex, RetrievalError> {
    let per_api = parallel::map(&doc.apis, par, |api| chunk_api(api, model, chunk_threshold));
    let mut apis = Vec::with_capacity(doc.len());
    for (api, chunks) in doc.apis.iter().zip(per_api) {
        apis.push((api.name.clone(), chunks?));
    }
    Ok(ChunkIndex { apis })
}

fn chunk_api(api: &ApiSpec, model: &dyn SimilarityModel, threshold: f64) -> Result<Vec<Chunk>, RetrievalError> {
    let mut groups: Vec<Vec<String>> = Vec::new();
    for sentence in api_sentences(api) {
        if let Some(open) = groups.last_mut() {
            if model.score(&sentence, &open.join(" "))? >= threshold {
                open.push(sentence);
                continue;
            }
        }
        groups.push(vec![sentence]);
    }
    groups
        .into_iter()
        .map(|sentences| {
            let vector = model.embed(&sentences.join(" "))?;
            Ok(Chunk { sentences, vector })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedMessage {
    pub text: String,
    pub source_api: String,
    pub similarity: f64,
}

/// Exhaustive nearest chunk of `api_name` to `query`; the earliest chunk
/// wins ties.
pub fn retrieve_error_message(
    api_name: &str,
    query: &str,
    index: &ChunkIndex,
    model: &dyn SimilarityModel,
) -> Result<Option<RetrievedMessage>, RetrievalError> {
    let chunks = index.chunks(api_name);
    if chunks.is_empty() {
        return Ok(None);
    }
    let q = model.embed(query)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, chunk) in chunks.iter().enumerate() {
        let sim = cosine(&q, &chunk.vector)?;
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    Ok(best.map(|(i, sim)| RetrievedMessage {
        text: chunks[i].text(),
        source_api: api_name.to_string(),
        similarity: sim.clamp(0.0, 1.0),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::{ExceptionSpec, ParamSpec, ValueType};

    fn api(name: &str, description: &str) -> ApiSpec {
        ApiSpec { name: name.into(), description: description.into(), params: vec![], exceptions: vec![] }
    }

    #[test]
    fn tokenizer_splits_case_and_punctuation() {
        assert_eq!(tokenize("userLogin"), ["user", "login"]);
        assert_eq!(tokenize("find_aspirin_number()"), ["find", "aspirin", "number"]);
        assert_eq!(tokenize("info_code:20000"), ["info", "code", "20000"]);
        assert_eq!(tokenize("HTTPServer v2Api"), ["httpserver", "v2", "api"]);
        assert_eq!(tokenize("查询天气"), ["查", "询", "天", "气"]);
    }

    #[test]
    fn identical_and_disjoint_scores() {
        let m = default_similarity();
        assert!((m.score("get weather", "get weather").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.score("abc", "xyz").unwrap(), 0.0);
        assert_eq!(m.score("", "xyz").unwrap(), 0.0);
    }

    #[test]
    fn score_is_symmetric_and_order_free() {
        let m = TfIdfModel::fit(&["get the weather", "send an email", "weather report today"]);
        let a = "weather report for today";
        let b = "today get weather";
        assert!((m.score(a, b).unwrap() - m.score(b, a).unwrap()).abs() < 1e-12);
        assert!((m.score(a, b).unwrap() - m.score("today for report weather", b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn embed_has_vocabulary_length() {
        let m = TfIdfModel::fit(&["alpha beta", "beta gamma"]);
        assert_eq!(m.vocabulary_len(), 3);
        assert_eq!(m.embed("anything at all").unwrap().len(), 3);
        assert_eq!(m.embed("alpha").unwrap().len(), 3);
    }

    #[test]
    fn retriever_picks_verbatim_description() {
        let doc = ApiDocument::new(vec![
            api("get_weather", "Get the weather forecast for a city."),
            api("send_email", "Send an email to a recipient."),
            api("book_flight", "Book a flight between two cities."),
        ])
        .unwrap();
        let m = TfIdfModel::fit_document(&doc);
        let r = retrieve_relevant_apis("Send an email to a recipient.", &doc, &m, 1).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].api_name, "send_email");
        assert!((r.entries[0].score - 1.0).abs() < 1e-12);

        let r = retrieve_relevant_apis("weather", &doc, &m, 5).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.entries.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn retriever_ties_follow_document_order() {
        let doc = ApiDocument::new(vec![api("b_api", "Same words."), api("a_api", "Same words.")]).unwrap();
        let r = retrieve_relevant_apis("same words", &doc, &default_similarity(), 1).unwrap();
        assert_eq!(r.entries[0].api_name, "b_api");
    }

    #[test]
    fn retriever_rejects_empty_document() {
        assert!(matches!(
            retrieve_relevant_apis("x", &ApiDocument::default(), &default_similarity(), 1),
            Err(RetrievalError::EmptyDocument)
        ));
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(
            split_sentences("Plan a route. Coordinates like 39.9,116.4 work!\nNext line? yes"),
            ["Plan a route.", "Coordinates like 39.9,116.4 work!", "Next line?", "yes"]
        );
    }

    #[test]
    fn chunking_singleton_and_disjoint() {
        let m = default_similarity();
        let doc = ApiDocument::new(vec![api("one", "Only sentence here.")]).unwrap();
        let idx = build_chunk_index(&doc, &m, 0.3).unwrap();
        assert_eq!(idx.chunks("one").len(), 1);

        let doc = ApiDocument::new(vec![api("two", "Alpha beta gamma. Delta epsilon zeta.")]).unwrap();
        let idx = build_chunk_index(&doc, &m, 0.3).unwrap();
        assert_eq!(idx.chunks("two").len(), 2);
    }

    #[test]
    fn error_code_sentence_is_retrievable() {
        let route = ApiSpec {
            name: "route_planning".into(),
            description: "Plan a driving route between two places.".into(),
            params: vec![ParamSpec {
                name: "origin".into(),
                value_type: ValueType::String,
                description: "Starting point.".into(),
                required: true,
            }],
            exceptions: vec![ExceptionSpec { code: "20000".into(), message: "Longitude precedes latitude.".into() }],
        };
        let doc = ApiDocument::new(vec![route]).unwrap();
        let m = TfIdfModel::fit_document(&doc);
        let idx = build_chunk_index(&doc, &m, DEFAULT_CHUNK_THRESHOLD).unwrap();
        assert!(idx.chunks("route_planning").iter().any(|c| c.text().contains("Longitude precedes latitude")));
        let hit = retrieve_error_message(
            "route_planning",
            "route_planning(origin=\"39.9,116.4\") info_code:20000",
            &idx,
            &m,
        )
        .unwrap()
        .unwrap();
        assert!(hit.text.contains("Longitude precedes latitude"), "{hit:?}");
        assert!(retrieve_error_message("nope", "x", &idx, &m).unwrap().is_none());
    }

    #[test]
    fn single_chunk_always_returned() {
        let doc = ApiDocument::new(vec![api("one", "Only sentence here.")]).unwrap();
        let m = default_similarity();
        let idx = build_chunk_index(&doc, &m, 0.3).unwrap();
        let hit = retrieve_error_message("one", "totally unrelated", &idx, &m).unwrap().unwrap();
        assert_eq!(hit.text, "Only sentence here.");
        assert_eq!(hit.similarity, 0.0);
    }
}
