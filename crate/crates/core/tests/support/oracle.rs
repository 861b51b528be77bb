//! Brute-force TF-IDF cosine written from the definition, for checking the
//! library's similarity scores and labelling semantic fixtures.

#![allow(dead_code)]

use std::collections::HashMap;

use autofeedback::doc_model::ApiDocument;

fn cjk(c: char) -> bool {
    let u = c as u32;
    (0x3040..=0x30ff).contains(&u)
        || (0x3400..=0x4dbf).contains(&u)
        || (0x4e00..=0x9fff).contains(&u)
        || (0xac00..=0xd7af).contains(&u)
        || (0xf900..=0xfaff).contains(&u)
}

/// Words: maximal alphanumeric runs, cut again before an upper-case letter
/// that follows a lower-case letter or digit. CJK characters stand alone.
pub fn words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut cuts = vec![false; chars.len() + 1];
    for i in 0..chars.len() {
        let c = chars[i];
        let boundary = !c.is_alphanumeric() || cjk(c);
        if boundary {
            cuts[i] = true;
            cuts[i + 1] = true;
        } else if i > 0 && c.is_uppercase() && (chars[i - 1].is_lowercase() || chars[i - 1].is_ascii_digit()) {
            cuts[i] = true;
        }
    }
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=chars.len() {
        if cuts[i] || i == chars.len() {
            let piece: String = chars[start..i].iter().collect();
            if piece.chars().all(|c| c.is_alphanumeric()) && !piece.is_empty() {
                out.push(piece.to_lowercase());
            }
            start = i;
        }
    }
    out
}

pub struct Oracle {
    n: usize,
    df: HashMap<String, usize>,
}

impl Oracle {
    /// Same text units the library fits on: every API name, every
    /// documentation sentence, every parameter name. The fixture document
    /// keeps one sentence per field, which this checks.
    pub fn for_document(doc: &ApiDocument) -> Oracle {
        let mut units: Vec<String> = Vec::new();
        for api in &doc.apis {
            units.push(api.name.clone());
            let mut sentences = vec![api.description.clone()];
            sentences.extend(api.params.iter().map(|p| p.description.clone()));
            sentences.extend(api.exceptions.iter().map(|e| format!("Error {}: {}", e.code, e.message)));
            for s in sentences {
                assert!(!s.trim_end_matches(['.', '?', '!']).contains(". "), "multi-sentence field: {s}");
                units.push(s);
            }
            units.extend(api.params.iter().map(|p| p.name.clone()));
        }
        Oracle::fit(&units)
    }

    pub fn fit(units: &[String]) -> Oracle {
        let mut df = HashMap::new();
        for u in units {
            let mut seen: Vec<String> = words(u);
            seen.sort();
            seen.dedup();
            for w in seen {
                *df.entry(w).or_insert(0) += 1;
            }
        }
        Oracle { n: units.len(), df }
    }

    fn idf(&self, w: &str) -> f64 {
        let df = self.df.get(w).copied().unwrap_or(0) as f64;
        ((1.0 + self.n as f64) / (1.0 + df)).ln() + 1.0
    }

    fn vector(&self, text: &str) -> HashMap<String, f64> {
        let mut v: HashMap<String, f64> = HashMap::new();
        for w in words(text) {
            *v.entry(w).or_insert(0.0) += 1.0;
        }
        for (w, x) in v.iter_mut() {
            *x *= self.idf(w);
        }
        v
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        let (va, vb) = (self.vector(a), self.vector(b));
        let mut dot = 0.0;
        for (w, x) in &va {
            if let Some(y) = vb.get(w) {
                dot += x * y;
            }
        }
        let na: f64 = va.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = vb.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    /// Whether an invented API name clears `threshold` against some API's
    /// name-plus-description profile.
    pub fn name_is_semantic(&self, doc: &ApiDocument, name: &str, threshold: f64) -> bool {
        doc.apis.iter().any(|a| self.cosine(name, &format!("{} {}", a.name, a.description)) > threshold)
    }

    /// Same for a parameter key against the parameters of `api`.
    pub fn param_is_semantic(&self, doc: &ApiDocument, api: &str, key: &str, threshold: f64) -> bool {
        doc.lookup(api)
            .expect("documented API")
            .params
            .iter()
            .any(|p| self.cosine(key, &format!("{} {}", p.name, p.description)) > threshold)
    }
}
