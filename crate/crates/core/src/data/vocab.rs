use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, IoContext, Result};

/// Ordered event names; the position of a name is its class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl EventVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidArgument("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() || n.contains(';') || n.contains(',') {
                return Err(Error::InvalidArgument(format!("invalid event name {n:?}")));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate event name {n:?}")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// One name per line; blank lines and `#` comments are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).ctx(|| format!("reading {}", path.display()))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_owned)
                .collect(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.names.join("\n");
        text.push('\n');
        std::fs::write(path, text).ctx(|| format!("writing {}", path.display()))
    }
}
