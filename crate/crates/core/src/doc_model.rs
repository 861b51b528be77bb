//! API documentation model.
//!
//! An [`ApiDocument`] is loaded once from JSON and then shared read-only by
//! every detection and retrieval stage. Source order is preserved because it
//! is the tie-breaker wherever two APIs score equally.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The closed set of documented parameter types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    String,
    Int,
    Float,
    List,
    Tuple,
    Dict,
    Bool,
}

impl ValueType {
    pub const ALL: [ValueType; 7] = [
        ValueType::String,
        ValueType::Int,
        ValueType::Float,
        ValueType::List,
        ValueType::Tuple,
        ValueType::Dict,
        ValueType::Bool,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::String => "string",
            ValueType::Int => "int",
            ValueType::Float => "float",
            ValueType::List => "list",
            ValueType::Tuple => "tuple",
            ValueType::Dict => "dict",
            ValueType::Bool => "bool",
        }
    }

    pub fn parse(s: &str) -> Option<ValueType> {
        ValueType::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    pub description: String,
    pub required: bool,
}

/// A documented error code and the prose that explains it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExceptionSpec {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub name: String,
    pub description: String,
    #[serde(rename = "parameters")]
    pub params: Vec<ParamSpec>,
    pub exceptions: Vec<ExceptionSpec>,
}

impl ApiSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.param(name).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ApiDocument {
    pub apis: Vec<ApiSpec>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: unknown value type {found:?}")]
    UnknownType { path: String, found: String },
    #[error("{path}: duplicate API name {name:?}")]
    DuplicateApi { path: String, name: String },
    #[error("{path}: duplicate parameter name {name:?}")]
    DuplicateParam { path: String, name: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl ApiDocument {
    pub fn new(apis: Vec<ApiSpec>) -> Result<Self, SchemaError> {
        let doc = ApiDocument { apis };
        doc.validate()?;
        Ok(doc)
    }

    /// Parses documentation JSON text.
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| SchemaError::Invalid {
            path: "$".into(),
            message: format!("invalid JSON: {e}"),
        })?;
        let apis = field(&raw, "$", "apis")?
            .as_array()
            .ok_or_else(|| invalid("$.apis", "expected an array"))?;
        let mut out = Vec::with_capacity(apis.len());
        for (i, api) in apis.iter().enumerate() {
            out.push(api_from_json(api, &format!("$.apis[{i}]"))?);
        }
        ApiDocument::new(out)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|e| SchemaError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn lookup(&self, name: &str) -> Option<&ApiSpec> {
        self.apis.iter().find(|a| a.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.apis.iter().position(|a| a.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.apis.is_empty()
    }

    pub fn len(&self) -> usize {
        self.apis.len()
    }

    fn validate(&self) -> Result<(), SchemaError> {
        let mut names = HashSet::new();
        for (i, api) in self.apis.iter().enumerate() {
            let path = format!("$.apis[{i}]");
            if api.name.is_empty() {
                return Err(invalid(&format!("{path}.name"), "API name is empty"));
            }
            if !names.insert(api.name.as_str()) {
                return Err(SchemaError::DuplicateApi { path, name: api.name.clone() });
            }
            let mut params = HashSet::new();
            for (j, p) in api.params.iter().enumerate() {
                let ppath = format!("{path}.parameters[{j}]");
                if p.name.is_empty() {
                    return Err(invalid(&format!("{ppath}.name"), "parameter name is empty"));
                }
                if !params.insert(p.name.as_str()) {
                    return Err(SchemaError::DuplicateParam { path: ppath, name: p.name.clone() });
                }
            }
        }
        Ok(())
    }
}

/// Exact, case-sensitive lookup.
pub fn lookup_api<'a>(doc: &'a ApiDocument, name: &str) -> Option<&'a ApiSpec> {
    doc.lookup(name)
}

/// Lowercases `name` and drops every character outside `[a-zA-Z]`.
pub fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(char::is_ascii_alphabetic)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

fn invalid(path: &str, message: &str) -> SchemaError {
    SchemaError::Invalid { path: path.to_string(), message: message.to_string() }
}

fn field<'a>(
    v: &'a serde_json::Value,
    path: &str,
    key: &str,
) -> Result<&'a serde_json::Value, SchemaError> {
    v.get(key)
        .ok_or_else(|| invalid(&format!("{path}.{key}"), "missing field"))
}

fn str_field(v: &serde_json::Value, path: &str, key: &str) -> Result<String, SchemaError> {
    field(v, path, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| invalid(&format!("{path}.{key}"), "expected a string"))
}

fn api_from_json(v: &serde_json::Value, path: &str) -> Result<ApiSpec, SchemaError> {
    let name = str_field(v, path, "name")?;
    let description = str_field(v, path, "description")?;
    let params_raw = field(v, path, "parameters")?
        .as_array()
        .ok_or_else(|| invalid(&format!("{path}.parameters"), "expected an array"))?;
    let mut params = Vec::with_capacity(params_raw.len());
    for (j, p) in params_raw.iter().enumerate() {
        let ppath = format!("{path}.parameters[{j}]");
        let type_name = str_field(p, &ppath, "type")?;
        let value_type = ValueType::parse(&type_name).ok_or(SchemaError::UnknownType {
            path: format!("{ppath}.type"),
            found: type_name,
        })?;
        params.push(ParamSpec {
            name: str_field(p, &ppath, "name")?,
            value_type,
            description: str_field(p, &ppath, "description")?,
            required: field(p, &ppath, "required")?
                .as_bool()
                .ok_or_else(|| invalid(&format!("{ppath}.required"), "expected a boolean"))?,
        });
    }
    let exc_raw = field(v, path, "exceptions")?
        .as_array()
        .ok_or_else(|| invalid(&format!("{path}.exceptions"), "expected an array"))?;
    let mut exceptions = Vec::with_capacity(exc_raw.len());
    for (j, e) in exc_raw.iter().enumerate() {
        let epath = format!("{path}.exceptions[{j}]");
        exceptions.push(ExceptionSpec {
            code: str_field(e, &epath, "code")?,
            message: str_field(e, &epath, "message")?,
        });
    }
    Ok(ApiSpec { name, description, params, exceptions })
}
