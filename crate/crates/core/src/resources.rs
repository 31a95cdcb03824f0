//! Loads the resource directory:
//!
//! ```text
//! taxonomy.txt  lexicon.txt  gazetteer.txt  temporal.rules
//! patterns.review  workers.jsonl  stopwords/<lang>.stop  workflows/<id>.json
//! ```
//!
//! Missing files yield empty resources.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::annotators::references::parse_review_file;
use crate::annotators::{ReferencePattern, TemporalRules};
use crate::engine::WorkflowDefinition;
use crate::knowledge::{Gazetteer, Lexicon, Taxonomy};
use crate::text::Stopwords;
use crate::workers::WorkerConfig;

pub const TAXONOMY_FILE: &str = "taxonomy.txt";
pub const LEXICON_FILE: &str = "lexicon.txt";
pub const GAZETTEER_FILE: &str = "gazetteer.txt";
pub const TEMPORAL_FILE: &str = "temporal.rules";
pub const PATTERNS_FILE: &str = "patterns.review";
pub const WORKERS_FILE: &str = "workers.jsonl";
pub const STOPWORDS_DIR: &str = "stopwords";
pub const WORKFLOWS_DIR: &str = "workflows";

#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct ResourceError {
    pub path: PathBuf,
    pub message: String,
}

impl ResourceError {
    fn new(path: &Path, message: impl ToString) -> Self {
        Self { path: path.to_path_buf(), message: message.to_string() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub taxonomy: Taxonomy,
    pub lexicon: Lexicon,
    pub gazetteer: Gazetteer,
    pub temporal: TemporalRules,
    pub stopwords: Stopwords,
    pub patterns: Vec<ReferencePattern>,
    pub workflows: Vec<WorkflowDefinition>,
    pub workers: Vec<WorkerConfig>,
}

fn read_optional(path: &Path) -> Result<Option<String>, ResourceError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ResourceError::new(path, e)),
    }
}

impl Resources {
    pub fn load(dir: &Path) -> Result<Self, ResourceError> {
        if !dir.is_dir() {
            return Err(ResourceError::new(dir, "not a directory"));
        }
        let mut r = Resources::default();
        let p = dir.join(TAXONOMY_FILE);
        if let Some(src) = read_optional(&p)? {
            r.taxonomy = Taxonomy::parse("taxonomy", &src).map_err(|e| ResourceError::new(&p, e))?;
        }
        let p = dir.join(LEXICON_FILE);
        if let Some(src) = read_optional(&p)? {
            r.lexicon = Lexicon::parse(&src).map_err(|e| ResourceError::new(&p, e))?;
        }
        let p = dir.join(GAZETTEER_FILE);
        if let Some(src) = read_optional(&p)? {
            r.gazetteer = Gazetteer::parse(&src).map_err(|e| ResourceError::new(&p, e))?;
        }
        let p = dir.join(TEMPORAL_FILE);
        if let Some(src) = read_optional(&p)? {
            r.temporal = TemporalRules::parse(&src).map_err(|e| ResourceError::new(&p, e))?;
        }
        let p = dir.join(PATTERNS_FILE);
        if let Some(src) = read_optional(&p)? {
            r.patterns = parse_review_file(&src).map_err(|e| ResourceError::new(&p, e))?;
        }
        let p = dir.join(WORKERS_FILE);
        if let Some(src) = read_optional(&p)? {
            r.workers = WorkerConfig::parse_lines(&src).map_err(|e| ResourceError::new(&p, e))?;
        }
        let p = dir.join(STOPWORDS_DIR);
        if p.is_dir() {
            r.stopwords = Stopwords::load_dir(&p).map_err(|e| ResourceError::new(&p, e))?;
        }
        r.workflows = load_workflows(&dir.join(WORKFLOWS_DIR))?;
        Ok(r)
    }

    pub fn workflow(&self, id: &str) -> Option<&WorkflowDefinition> {
        self.workflows.iter().find(|w| w.id == id)
    }
}

/// Every `*.json` definition in `dir`, sorted by file name.
pub fn load_workflows(dir: &Path) -> Result<Vec<WorkflowDefinition>, ResourceError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| ResourceError::new(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let src = fs::read_to_string(p).map_err(|e| ResourceError::new(p, e))?;
            let def = WorkflowDefinition::parse(&src).map_err(|e| ResourceError::new(p, e))?;
            def.validate().map_err(|e| ResourceError::new(p, e))?;
            Ok(def)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dir_is_empty_resources() {
        let dir = tempfile::tempdir().unwrap();
        let r = Resources::load(dir.path()).unwrap();
        assert!(r.taxonomy.is_empty() && r.workflows.is_empty() && r.workers.is_empty());
        assert!(Resources::load(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn bad_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(TAXONOMY_FILE), "nonsense").unwrap();
        let err = Resources::load(dir.path()).unwrap_err();
        assert!(err.path.ends_with(TAXONOMY_FILE));
    }
}
