use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::params::{ParamError, ProtocolParams};
use crate::vector::FeatureVector;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

/// In-memory map from token identity to registered template.
///
/// The flat-file format holds one template per line as whitespace-separated
/// decimal components. `#` starts a comment; blank lines are skipped. Entries
/// loaded from a file are named `token-0`, `token-1`, ... in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateStore {
    templates: BTreeMap<String, FeatureVector>,
    order: Vec<String>,
}

impl TemplateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, template: FeatureVector) {
        let id = id.into();
        if self.templates.insert(id.clone(), template).is_none() {
            self.order.push(id);
        }
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.templates.get(id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &FeatureVector)> {
        self.order
            .iter()
            .map(move |id| (id.as_str(), &self.templates[id]))
    }

    pub fn parse(text: &str, params: &ProtocolParams) -> Result<Self, StoreError> {
        let mut store = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let components = line
                .split_whitespace()
                .map(|tok| tok.parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| StoreError::Parse {
                    line: n + 1,
                    detail: e.to_string(),
                })?;
            let template =
                FeatureVector::new(components, params).map_err(|e: ParamError| StoreError::Parse {
                    line: n + 1,
                    detail: e.to_string(),
                })?;
            store.insert(format!("token-{}", store.len()), template);
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>, params: &ProtocolParams) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, params)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (id, template) in self.iter() {
            out.push_str(&format!("# {id}\n"));
            let line: Vec<String> = template.components().iter().map(u32::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Uniformly random template under `params`.
pub fn random_template<R: Rng + ?Sized>(params: &ProtocolParams, rng: &mut R) -> FeatureVector {
    let modulus = params.bits().modulus();
    let components = (0..params.dim())
        .map(|_| rng.random_range(0..modulus) as u32)
        .collect();
    FeatureVector::new(components, params).expect("components drawn in range")
}
