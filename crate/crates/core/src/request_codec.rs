//! Extraction, parsing and canonical serialization of `NAME(key=value, ...)`
//! requests emitted by a model.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::doc_model::ValueType;

pub const OPEN_MARKER: &str = "<<API>>";
pub const CLOSE_MARKER: &str = "<</API>>";

const MAX_DEPTH: usize = 64;

/// A literal argument value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    Float(f64),
    List(Vec<Value>),
    Tuple(Vec<Value>),
    /// Insertion-ordered; keys are unique.
    Dict(Vec<(String, Value)>),
    Bool(bool),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        infer_value_type(self)
    }

    /// Canonical literal text, as it appears inside a serialized request.
    pub fn to_literal(&self) -> String {
        let mut out = String::new();
        write_value(&mut out, self);
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match self {
            Value::Str(s) => J::String(s.clone()),
            Value::Int(i) => J::from(*i),
            Value::Float(f) => serde_json::Number::from_f64(*f).map(J::Number).unwrap_or(J::Null),
            Value::List(items) | Value::Tuple(items) => J::Array(items.iter().map(Value::to_json).collect()),
            Value::Dict(entries) => J::Object(entries.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
            Value::Bool(b) => J::Bool(*b),
        }
    }

    /// Plain text used for query strings: strings unquoted, everything else canonical.
    pub fn to_query_text(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            other => other.to_literal(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_literal())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiRequest {
    pub name: String,
    pub args: Vec<(String, Value)>,
}

impl ApiRequest {
    pub fn new(name: impl Into<String>) -> Self {
        ApiRequest { name: name.into(), args: Vec::new() }
    }

    pub fn arg(mut self, key: impl Into<String>, value: Value) -> Self {
        self.args.push((key.into(), value));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.args.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn to_canonical(&self) -> String {
        serialize_request(self)
    }
}

impl fmt::Display for ApiRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_request(self))
    }
}

impl Serialize for ApiRequest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&serialize_request(self))
    }
}

impl<'de> Deserialize<'de> for ApiRequest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        match parse_request(&text) {
            ParseOutcome::Parsed(r) => Ok(r),
            ParseOutcome::Unparseable { reason, .. } => Err(serde::de::Error::custom(format!(
                "unparseable request {text:?}: {reason:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnparseableReason {
    NoBlock,
    BadSyntax,
    DuplicateKey,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Parsed(ApiRequest),
    Unparseable { reason: UnparseableReason, raw: String },
}

impl ParseOutcome {
    pub fn request(&self) -> Option<&ApiRequest> {
        match self {
            ParseOutcome::Parsed(r) => Some(r),
            ParseOutcome::Unparseable { .. } => None,
        }
    }

    pub fn into_request(self) -> Option<ApiRequest> {
        match self {
            ParseOutcome::Parsed(r) => Some(r),
            ParseOutcome::Unparseable { .. } => None,
        }
    }
}

/// Type-compatibility switches applied when checking a value against a
/// documented parameter type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeRules {
    pub int_widens_to_float: bool,
    pub tuple_as_list: bool,
}

impl Default for TypeRules {
    fn default() -> Self {
        TypeRules { int_widens_to_float: true, tuple_as_list: false }
    }
}

impl TypeRules {
    pub fn compatible(&self, value: &Value, expected: ValueType) -> bool {
        let actual = infer_value_type(value);
        if actual == expected {
            return true;
        }
        match (actual, expected) {
            (ValueType::Int, ValueType::Float) => self.int_widens_to_float,
            (ValueType::List, ValueType::Tuple) | (ValueType::Tuple, ValueType::List) => self.tuple_as_list,
            _ => false,
        }
    }

    /// Type-aware equality: `Int 3` equals `Float 3.0` under widening, dict
    /// entry order is ignored.
    pub fn values_equal(&self, a: &Value, b: &Value) -> bool {
        match (a, b) {
            (Value::Int(x), Value::Float(y)) | (Value::Float(y), Value::Int(x)) => {
                self.int_widens_to_float && (*x as f64) == *y
            }
            (Value::List(x), Value::List(y)) | (Value::Tuple(x), Value::Tuple(y)) => self.seq_equal(x, y),
            (Value::List(x), Value::Tuple(y)) | (Value::Tuple(x), Value::List(y)) => {
                self.tuple_as_list && self.seq_equal(x, y)
            }
            (Value::Dict(x), Value::Dict(y)) => {
                x.len() == y.len()
                    && x.iter().all(|(k, v)| {
                        y.iter().any(|(k2, v2)| k == k2 && self.values_equal(v, v2))
                    })
            }
            _ => a == b,
        }
    }

    fn seq_equal(&self, x: &[Value], y: &[Value]) -> bool {
        x.len() == y.len() && x.iter().zip(y).all(|(a, b)| self.values_equal(a, b))
    }
}

pub fn infer_value_type(v: &Value) -> ValueType {
    match v {
        Value::Str(_) => ValueType::String,
        Value::Int(_) => ValueType::Int,
        Value::Float(_) => ValueType::Float,
        Value::List(_) => ValueType::List,
        Value::Tuple(_) => ValueType::Tuple,
        Value::Dict(_) => ValueType::Dict,
        Value::Bool(_) => ValueType::Bool,
    }
}

/// Returns the request text between the first `<<API>>` and the following
/// `<</API>>`. Without markers, falls back to the first `identifier(...)`
/// with balanced parentheses.
pub fn extract_request_block(llm_output: &str) -> Option<String> {
    if let Some(open) = llm_output.find(OPEN_MARKER) {
        let after = &llm_output[open + OPEN_MARKER.len()..];
        if let Some(close) = after.find(CLOSE_MARKER) {
            let inner = &after[..close];
            // "<<API>> <<API>> f() <</API>>": take the innermost opening.
            let inner = match inner.rfind(OPEN_MARKER) {
                Some(i) => &inner[i + OPEN_MARKER.len()..],
                None => inner,
            };
            return Some(inner.trim().to_string());
        }
        return scan_balanced_call(after);
    }
    scan_balanced_call(llm_output)
}

/// Number of complete `<<API>> ... <</API>>` blocks in the output.
pub fn count_request_blocks(llm_output: &str) -> usize {
    let mut count = 0;
    let mut rest = llm_output;
    while let Some(open) = rest.find(OPEN_MARKER) {
        let after = &rest[open + OPEN_MARKER.len()..];
        match after.find(CLOSE_MARKER) {
            Some(close) => {
                count += 1;
                rest = &after[close + CLOSE_MARKER.len()..];
            }
            None => break,
        }
    }
    count
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn is_name_char(c: char) -> bool {
    is_ident_char(c) || c == '.'
}

fn scan_balanced_call(text: &str) -> Option<String> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    for (idx, &(pos, c)) in bytes.iter().enumerate() {
        if c != '(' || idx == 0 {
            continue;
        }
        let mut start = idx;
        while start > 0 && is_name_char(bytes[start - 1].1) {
            start -= 1;
        }
        while start < idx && !is_ident_start(bytes[start].1) {
            start += 1;
        }
        if start == idx {
            continue;
        }
        if let Some(end) = matching_paren(text, pos) {
            let candidate = &text[bytes[start].0..end];
            if !candidate.contains(OPEN_MARKER) && !candidate.contains(CLOSE_MARKER) {
                return Some(candidate.to_string());
            }
        }
    }
    None
}

/// Byte offset just past the parenthesis matching the one at `open`,
/// skipping over quoted strings.
fn matching_paren(text: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in text[open..].char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Extracts and parses a request from raw model output. `Unparseable`
/// carries the full output.
pub fn parse_llm_output(llm_output: &str) -> ParseOutcome {
    let blocks = count_request_blocks(llm_output);
    if blocks > 1 {
        tracing::warn!(blocks, "model output holds several request blocks; using the first");
    }
    match extract_request_block(llm_output) {
        None => ParseOutcome::Unparseable { reason: UnparseableReason::NoBlock, raw: llm_output.to_string() },
        Some(block) => match parse_request(&block) {
            ParseOutcome::Unparseable { reason, .. } => {
                ParseOutcome::Unparseable { reason, raw: llm_output.to_string() }
            }
            parsed => parsed,
        },
    }
}

pub fn parse_request(block: &str) -> ParseOutcome {
    let mut p = Parser { src: block, pos: 0 };
    match p.request() {
        Ok(req) => ParseOutcome::Parsed(req),
        Err(reason) => ParseOutcome::Unparseable { reason, raw: block.to_string() },
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

type PResult<T> = Result<T, UnparseableReason>;

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> PResult<()> {
        self.skip_ws();
        if self.bump() == Some(want) {
            Ok(())
        } else {
            Err(UnparseableReason::BadSyntax)
        }
    }

    fn eat(&mut self, want: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, allow_dot: bool) -> PResult<String> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if is_ident_start(c) => {
                self.bump();
            }
            _ => return Err(UnparseableReason::BadSyntax),
        }
        while let Some(c) = self.peek() {
            if is_ident_char(c) || (allow_dot && c == '.') {
                self.bump();
            } else {
                break;
            }
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn request(&mut self) -> PResult<ApiRequest> {
        let name = self.ident(true)?;
        self.expect('(')?;
        let mut args: Vec<(String, Value)> = Vec::new();
        let mut duplicate = false;
        if !self.eat(')') {
            loop {
                let key = self.ident(false)?;
                self.expect('=')?;
                let value = self.value(0)?;
                if args.iter().any(|(k, _)| *k == key) {
                    duplicate = true;
                }
                args.push((key, value));
                self.skip_ws();
                match self.bump() {
                    Some(',') => continue,
                    Some(')') => break,
                    _ => return Err(UnparseableReason::BadSyntax),
                }
            }
        }
        self.skip_ws();
        if !self.rest().is_empty() {
            return Err(UnparseableReason::BadSyntax);
        }
        if duplicate {
            return Err(UnparseableReason::DuplicateKey);
        }
        Ok(ApiRequest { name, args })
    }

    fn value(&mut self, depth: usize) -> PResult<Value> {
        if depth > MAX_DEPTH {
            return Err(UnparseableReason::BadSyntax);
        }
        self.skip_ws();
        match self.peek().ok_or(UnparseableReason::BadSyntax)? {
            '"' | '\'' => self.string().map(Value::Str),
            '[' => {
                self.bump();
                self.sequence(']', depth).map(|(items, _)| Value::List(items))
            }
            '(' => {
                self.bump();
                self.sequence(')', depth).map(|(items, _)| Value::Tuple(items))
            }
            '{' => {
                self.bump();
                self.dict(depth)
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => self.number(),
            c if c.is_ascii_alphabetic() => {
                let word = self.ident(false)?;
                match word.to_ascii_lowercase().as_str() {
                    "true" => Ok(Value::Bool(true)),
                    "false" => Ok(Value::Bool(false)),
                    "nan" => Ok(Value::Float(f64::NAN)),
                    "inf" => Ok(Value::Float(f64::INFINITY)),
                    _ => Err(UnparseableReason::BadSyntax),
                }
            }
            _ => Err(UnparseableReason::BadSyntax),
        }
    }

    fn sequence(&mut self, close: char, depth: usize) -> PResult<(Vec<Value>, bool)> {
        let mut items = Vec::new();
        let mut trailing = false;
        loop {
            if self.eat(close) {
                return Ok((items, trailing));
            }
            items.push(self.value(depth + 1)?);
            self.skip_ws();
            match self.bump() {
                Some(',') => trailing = true,
                Some(c) if c == close => return Ok((items, false)),
                _ => return Err(UnparseableReason::BadSyntax),
            }
        }
    }

    fn dict(&mut self, depth: usize) -> PResult<Value> {
        let mut entries: Vec<(String, Value)> = Vec::new();
        loop {
            if self.eat('}') {
                return Ok(Value::Dict(entries));
            }
            self.skip_ws();
            if !matches!(self.peek(), Some('"' | '\'')) {
                return Err(UnparseableReason::BadSyntax);
            }
            let key = self.string()?;
            self.expect(':')?;
            let value = self.value(depth + 1)?;
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(UnparseableReason::BadSyntax);
            }
            entries.push((key, value));
            self.skip_ws();
            match self.bump() {
                Some(',') => {}
                Some('}') => return Ok(Value::Dict(entries)),
                _ => return Err(UnparseableReason::BadSyntax),
            }
        }
    }

    fn string(&mut self) -> PResult<String> {
        let quote = self.bump().ok_or(UnparseableReason::BadSyntax)?;
        let mut out = String::new();
        loop {
            let c = self.bump().ok_or(UnparseableReason::BadSyntax)?;
            if c == quote {
                return Ok(out);
            }
            if c != '\\' {
                out.push(c);
                continue;
            }
            match self.bump().ok_or(UnparseableReason::BadSyntax)? {
                'n' => out.push('\n'),
                't' => out.push('\t'),
                'r' => out.push('\r'),
                '0' => out.push('\0'),
                'u' => {
                    let hex = self.rest().get(..4).ok_or(UnparseableReason::BadSyntax)?;
                    let code = u32::from_str_radix(hex, 16).map_err(|_| UnparseableReason::BadSyntax)?;
                    out.push(char::from_u32(code).ok_or(UnparseableReason::BadSyntax)?);
                    self.pos += 4;
                }
                other => out.push(other),
            }
        }
    }

    fn number(&mut self) -> PResult<Value> {
        let start = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.bump();
        }
        if self.rest().len() >= 3 && self.rest()[..3].eq_ignore_ascii_case("inf") {
            self.pos += 3;
            let neg = self.src[start..].starts_with('-');
            return Ok(Value::Float(if neg { f64::NEG_INFINITY } else { f64::INFINITY }));
        }
        let mut is_float = false;
        let mut digits = 0;
        while let Some(c) = self.peek() {
            match c {
                '0'..='9' => {
                    digits += 1;
                    self.bump();
                }
                '.' if !is_float => {
                    is_float = true;
                    self.bump();
                }
                'e' | 'E' if digits > 0 => {
                    is_float = true;
                    self.bump();
                    if matches!(self.peek(), Some('-' | '+')) {
                        self.bump();
                    }
                    let exp_start = self.pos;
                    while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        self.bump();
                    }
                    if self.pos == exp_start {
                        return Err(UnparseableReason::BadSyntax);
                    }
                    break;
                }
                _ => break,
            }
        }
        if digits == 0 {
            return Err(UnparseableReason::BadSyntax);
        }
        let text = &self.src[start..self.pos];
        if is_float {
            text.parse::<f64>().map(Value::Float).map_err(|_| UnparseableReason::BadSyntax)
        } else {
            text.parse::<i64>().map(Value::Int).map_err(|_| UnparseableReason::BadSyntax)
        }
    }
}

/// `name(key1=v1, key2=v2)` with double-quoted strings and lowercase booleans.
pub fn serialize_request(req: &ApiRequest) -> String {
    let mut out = String::with_capacity(32);
    out.push_str(&req.name);
    out.push('(');
    for (i, (k, v)) in req.args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(k);
        out.push('=');
        write_value(&mut out, v);
    }
    out.push(')');
    out
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Str(s) => write_string(out, s),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Value::Float(f) => {
            if f.is_nan() {
                out.push_str("nan");
            } else if f.is_infinite() {
                out.push_str(if *f > 0.0 { "inf" } else { "-inf" });
            } else {
                // Debug keeps a fractional part or exponent, so the literal re-parses as a float.
                let _ = write!(out, "{f:?}");
            }
        }
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::List(items) => {
            out.push('[');
            write_items(out, items);
            out.push(']');
        }
        Value::Tuple(items) => {
            out.push('(');
            write_items(out, items);
            if items.len() == 1 {
                out.push(',');
            }
            out.push(')');
        }
        Value::Dict(entries) => {
            out.push('{');
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_string(out, k);
                out.push_str(": ");
                write_value(out, v);
            }
            out.push('}');
        }
    }
}

fn write_items(out: &mut String, items: &[Value]) {
    for (i, v) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_value(out, v);
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parsed(s: &str) -> ApiRequest {
        match parse_request(s) {
            ParseOutcome::Parsed(r) => r,
            other => panic!("{s:?} did not parse: {other:?}"),
        }
    }

    fn reason(s: &str) -> UnparseableReason {
        match parse_request(s) {
            ParseOutcome::Unparseable { reason, raw } => {
                assert_eq!(raw, s);
                reason
            }
            other => panic!("{s:?} parsed unexpectedly: {other:?}"),
        }
    }

    #[test]
    fn extract_with_markers() {
        assert_eq!(
            extract_request_block("Sure! <<API>> getUser(id=5) <</API>>").as_deref(),
            Some("getUser(id=5)")
        );
    }

    #[test]
    fn extract_absent() {
        assert_eq!(extract_request_block("I cannot call any API."), None);
    }

    #[test]
    fn extract_fallback_scan() {
        assert_eq!(extract_request_block("call getUser(id=5) now").as_deref(), Some("getUser(id=5)"));
        assert_eq!(
            extract_request_block("first (an aside) then f(a=\")\", b=[1, (2)])!").as_deref(),
            Some("f(a=\")\", b=[1, (2)])")
        );
    }

    #[test]
    fn extract_takes_first_block_and_innermost_open() {
        let out = "<<API>> a() <</API>> and <<API>> b() <</API>>";
        assert_eq!(extract_request_block(out).as_deref(), Some("a()"));
        assert_eq!(count_request_blocks(out), 2);
        assert_eq!(extract_request_block("<<API>> <<API>> c() <</API>>").as_deref(), Some("c()"));
    }

    #[test]
    fn extract_unclosed_marker_scans_remainder() {
        assert_eq!(extract_request_block("<<API>> getUser(id=5)").as_deref(), Some("getUser(id=5)"));
    }

    #[test]
    fn parse_documented_examples() {
        let r = parsed(r#"route_planning(origin="39.9,116.4", dest="31.2,121.5")"#);
        assert_eq!(r.name, "route_planning");
        assert_eq!(r.args.len(), 2);
        assert_eq!(r.get("dest"), Some(&Value::Str("31.2,121.5".into())));

        let r = parsed("list_medicines(name='aspirin')");
        assert_eq!(r, ApiRequest::new("list_medicines").arg("name", Value::Str("aspirin".into())));
    }

    #[test]
    fn parse_literals() {
        let r = parsed(
            "f(a=-3, b=2.5, c=1e3, d=TRUE, e=[1, 'x'], g=(1,), h={'k': {\"n\": False}}, i=(), j=[])",
        );
        assert_eq!(r.get("a"), Some(&Value::Int(-3)));
        assert_eq!(r.get("b"), Some(&Value::Float(2.5)));
        assert_eq!(r.get("c"), Some(&Value::Float(1000.0)));
        assert_eq!(r.get("d"), Some(&Value::Bool(true)));
        assert_eq!(r.get("e"), Some(&Value::List(vec![Value::Int(1), Value::Str("x".into())])));
        assert_eq!(r.get("g"), Some(&Value::Tuple(vec![Value::Int(1)])));
        assert_eq!(
            r.get("h"),
            Some(&Value::Dict(vec![("k".into(), Value::Dict(vec![("n".into(), Value::Bool(false))]))]))
        );
        assert_eq!(r.get("i"), Some(&Value::Tuple(vec![])));
    }

    #[test]
    fn parse_failures() {
        assert_eq!(reason("getUser(id=5, id=6)"), UnparseableReason::DuplicateKey);
        assert_eq!(reason("getUser(5)"), UnparseableReason::BadSyntax);
        assert_eq!(reason("getUser(id=5,)"), UnparseableReason::BadSyntax);
        assert_eq!(reason("getUser(id=5"), UnparseableReason::BadSyntax);
        assert_eq!(reason("getUser(id=5) extra"), UnparseableReason::BadSyntax);
        assert_eq!(reason("getUser(id=none)"), UnparseableReason::BadSyntax);
        assert_eq!(reason("getUser(id={1: 2})"), UnparseableReason::BadSyntax);
        assert_eq!(reason(""), UnparseableReason::BadSyntax);
        assert_eq!(reason("f(a=\"unterminated)"), UnparseableReason::BadSyntax);
        let deep = format!("f(a={}{})", "[".repeat(500), "]".repeat(500));
        assert_eq!(reason(&deep), UnparseableReason::BadSyntax);
    }

    #[test]
    fn llm_output_keeps_full_raw_text() {
        let out = "Here you go: <<API>> f(a=) <</API>>";
        match parse_llm_output(out) {
            ParseOutcome::Unparseable { reason, raw } => {
                assert_eq!(reason, UnparseableReason::BadSyntax);
                assert_eq!(raw, out);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_llm_output("nothing here"),
            ParseOutcome::Unparseable { reason: UnparseableReason::NoBlock, .. }
        ));
    }

    #[test]
    fn serialize_canonical() {
        assert_eq!(serialize_request(&ApiRequest::new("f").arg("a", Value::Int(1))), "f(a=1)");
        assert_eq!(serialize_request(&ApiRequest::new("f")), "f()");
        assert_eq!(serialize_request(&ApiRequest::new("g").arg("s", Value::Str("x".into()))), "g(s=\"x\")");
        let r = ApiRequest::new("h")
            .arg("q", Value::Str("say \"hi\"\n".into()))
            .arg("b", Value::Bool(false))
            .arg("t", Value::Tuple(vec![Value::Float(1.0)]));
        let text = serialize_request(&r);
        assert_eq!(text, r#"h(q="say \"hi\"\n", b=false, t=(1.0,))"#);
        assert_eq!(parsed(&text), r);
    }

    #[test]
    fn type_compatibility() {
        let rules = TypeRules::default();
        assert!(rules.compatible(&Value::Int(3), ValueType::Float));
        assert!(!rules.compatible(&Value::Str("three".into()), ValueType::Int));
        assert!(rules.compatible(&Value::List(vec![Value::Int(1)]), ValueType::List));
        assert!(!rules.compatible(&Value::Tuple(vec![]), ValueType::List));
        let strict = TypeRules { int_widens_to_float: false, tuple_as_list: true };
        assert!(!strict.compatible(&Value::Int(3), ValueType::Float));
        assert!(strict.compatible(&Value::Tuple(vec![]), ValueType::List));
    }

    #[test]
    fn type_aware_equality() {
        let rules = TypeRules::default();
        assert!(rules.values_equal(&Value::Int(3), &Value::Float(3.0)));
        let a = Value::Dict(vec![("x".into(), Value::Int(1)), ("y".into(), Value::Int(2))]);
        let b = Value::Dict(vec![("y".into(), Value::Int(2)), ("x".into(), Value::Int(1))]);
        assert!(rules.values_equal(&a, &b));
        assert!(!rules.values_equal(&Value::Str("3".into()), &Value::Int(3)));
    }
}
