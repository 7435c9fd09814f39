//! Versioned regex pattern file and its compiled form.

use std::path::Path;

use regex::{Regex, RegexBuilder, RegexSet, RegexSetBuilder};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_PATTERNS: &str = include_str!("patterns.toml");

pub const INJECTION_COUNT: usize = 11;
pub const CRYPTO_COUNT: usize = 8;
pub const PUMP_DUMP_COUNT: usize = 2;
pub const MANIPULATION_COUNT: usize = 5;
pub const IDEOLOGICAL_COUNT: usize = 4;

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("pattern file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("reading pattern file: {0}")]
    Io(#[from] std::io::Error),
    #[error("{category}: expected {expected} patterns, found {found}")]
    Count { category: &'static str, expected: usize, found: usize },
    #[error("pattern {name:?} does not compile: {source}")]
    Regex { name: String, source: regex::Error },
    #[error("{list} references unknown pattern {name:?}")]
    UnknownReference { list: &'static str, name: String },
    #[error("duplicate pattern name {0:?}")]
    DuplicateName(String),
}

#[derive(Debug, Deserialize)]
struct PatternEntry {
    name: String,
    regex: String,
}

#[derive(Debug, Deserialize)]
struct PatternFile {
    version: String,
    pump_dump_groups: Vec<String>,
    api_injection_patterns: Vec<String>,
    injection: Vec<PatternEntry>,
    crypto: Vec<PatternEntry>,
    manipulation: Vec<PatternEntry>,
    ideological: Vec<PatternEntry>,
}

/// One category of named, case-insensitive patterns.
#[derive(Debug, Clone)]
pub struct PatternGroup {
    names: Vec<String>,
    bodies: Vec<String>,
    set: RegexSet,
}

impl PatternGroup {
    fn compile(category: &'static str, entries: Vec<PatternEntry>, expected: usize) -> Result<Self, PatternError> {
        if entries.len() != expected {
            return Err(PatternError::Count { category, expected, found: entries.len() });
        }
        for e in &entries {
            RegexBuilder::new(&e.regex)
                .case_insensitive(true)
                .build()
                .map_err(|source| PatternError::Regex { name: e.name.clone(), source })?;
        }
        let bodies: Vec<String> = entries.iter().map(|e| e.regex.clone()).collect();
        let set = RegexSetBuilder::new(&bodies)
            .case_insensitive(true)
            .build()
            .map_err(|source| PatternError::Regex { name: category.to_string(), source })?;
        Ok(PatternGroup { names: entries.into_iter().map(|e| e.name).collect(), bodies, set })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn bodies(&self) -> &[String] {
        &self.bodies
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.set.is_match(text)
    }

    /// Indices of the patterns matching `text`, ascending.
    pub fn matching(&self, text: &str) -> Vec<usize> {
        self.set.matches(text).into_iter().collect()
    }

    pub fn matching_names(&self, text: &str) -> Vec<&str> {
        self.matching(text).into_iter().map(|i| self.names[i].as_str()).collect()
    }

    /// A standalone compiled regex for one pattern.
    pub fn regex(&self, idx: usize) -> Regex {
        RegexBuilder::new(&self.bodies[idx]).case_insensitive(true).build().expect("validated at load")
    }
}

/// All pattern categories, compiled.
#[derive(Debug, Clone)]
pub struct PatternSet {
    pub version: String,
    /// SHA-256 of the pattern document the set was loaded from.
    pub sha256: String,
    pub injection: PatternGroup,
    pub crypto: PatternGroup,
    pub manipulation: PatternGroup,
    pub ideological: PatternGroup,
    pump_dump: Vec<usize>,
    api_injection: Vec<usize>,
}

fn resolve(group: &PatternGroup, list: &'static str, names: &[String]) -> Result<Vec<usize>, PatternError> {
    names
        .iter()
        .map(|n| group.index_of(n).ok_or_else(|| PatternError::UnknownReference { list, name: n.clone() }))
        .collect()
}

impl PatternSet {
    pub fn from_toml(text: &str) -> Result<Self, PatternError> {
        let file: PatternFile = toml::from_str(text)?;
        let mut seen = std::collections::HashSet::new();
        for e in file.injection.iter().chain(&file.crypto).chain(&file.manipulation).chain(&file.ideological) {
            if !seen.insert(e.name.as_str()) {
                return Err(PatternError::DuplicateName(e.name.clone()));
            }
        }
        let injection = PatternGroup::compile("injection", file.injection, INJECTION_COUNT)?;
        let crypto = PatternGroup::compile("crypto", file.crypto, CRYPTO_COUNT)?;
        let manipulation = PatternGroup::compile("manipulation", file.manipulation, MANIPULATION_COUNT)?;
        let ideological = PatternGroup::compile("ideological", file.ideological, IDEOLOGICAL_COUNT)?;
        if file.pump_dump_groups.len() != PUMP_DUMP_COUNT {
            return Err(PatternError::Count {
                category: "pump_dump_groups",
                expected: PUMP_DUMP_COUNT,
                found: file.pump_dump_groups.len(),
            });
        }
        let pump_dump = resolve(&crypto, "pump_dump_groups", &file.pump_dump_groups)?;
        let api_injection = resolve(&injection, "api_injection_patterns", &file.api_injection_patterns)?;
        let sha256 = format!("{:x}", Sha256::digest(text.as_bytes()));
        Ok(PatternSet {
            version: file.version,
            sha256,
            injection,
            crypto,
            manipulation,
            ideological,
            pump_dump,
            api_injection,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, PatternError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn pump_dump_indices(&self) -> &[usize] {
        &self.pump_dump
    }

    pub fn api_injection_indices(&self) -> &[usize] {
        &self.api_injection
    }
}

impl Default for PatternSet {
    fn default() -> Self {
        Self::from_toml(DEFAULT_PATTERNS).expect("bundled pattern file is valid")
    }
}
