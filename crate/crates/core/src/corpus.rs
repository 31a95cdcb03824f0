//! Reads a directory of plain-text documents. A file `x.txt` may have a
//! sidecar `x.txt.meta` of `key=value` lines: `id` and `language` set those
//! fields, every other key becomes metadata.

use std::fs;
use std::path::{Path, PathBuf};

use crate::model::Document;
use crate::resources::ResourceError;

pub const META_SUFFIX: &str = ".meta";
pub const DOC_BASE: &str = "http://lkg.local/doc/";

/// Parses sidecar lines; blank lines and `#` comments are skipped.
pub fn parse_meta(src: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Id used when the sidecar has none.
pub fn default_id(file_name: &str) -> String {
    let slug: String =
        file_name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '-' }).collect();
    format!("{DOC_BASE}{slug}")
}

/// Every non-sidecar file in `dir`, sorted by name, each read on its own so
/// one unreadable file does not hide the others.
pub fn read_document_dir(dir: &Path, default_lang: &str) -> Result<Vec<Result<Document, ResourceError>>, ResourceError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| err(dir, e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && !p.to_string_lossy().ends_with(META_SUFFIX))
        .collect();
    paths.sort();
    Ok(paths.iter().map(|p| read_document(p, default_lang)).collect())
}

/// Like [`read_document_dir`] but fails on the first unreadable file.
pub fn load_document_dir(dir: &Path, default_lang: &str) -> Result<Vec<Document>, ResourceError> {
    read_document_dir(dir, default_lang)?.into_iter().collect()
}

fn err(p: &Path, m: String) -> ResourceError {
    ResourceError { path: p.to_path_buf(), message: m }
}

pub fn read_document(p: &Path, default_lang: &str) -> Result<Document, ResourceError> {
    let content = fs::read_to_string(p).map_err(|e| err(p, e.to_string()))?;
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut doc = Document::new(default_id(&name), content.trim_end().to_string(), default_lang);
    let meta = PathBuf::from(format!("{}{META_SUFFIX}", p.display()));
    if meta.is_file() {
        let src = fs::read_to_string(&meta).map_err(|e| err(&meta, e.to_string()))?;
        for (k, v) in parse_meta(&src).map_err(|e| err(&meta, e))? {
            match k.as_str() {
                "id" => doc.id = v,
                "language" | "lang" => doc.language = v,
                _ => {
                    doc.metadata.insert(k, v);
                }
            }
        }
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_overrides() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a b.txt"), "Hallo Welt\n").unwrap();
        fs::write(dir.path().join("b.txt"), "hello").unwrap();
        fs::write(dir.path().join("b.txt.meta"), "# c\nid=http://x/b\nlanguage=de\ndct = 2020-01-01\n").unwrap();
        let docs = load_document_dir(dir.path(), "en").unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!((docs[0].id.as_str(), docs[0].language.as_str()), ("http://lkg.local/doc/a-b.txt", "en"));
        assert_eq!(docs[0].content, "Hallo Welt");
        assert_eq!((docs[1].id.as_str(), docs[1].language.as_str()), ("http://x/b", "de"));
        assert_eq!(docs[1].metadata["dct"], "2020-01-01");
        assert!(parse_meta("novalue").is_err());
        fs::write(dir.path().join("c.txt"), [0xff, 0xfe]).unwrap();
        let all = read_document_dir(dir.path(), "en").unwrap();
        assert_eq!(all.iter().filter(|r| r.is_ok()).count(), 2);
        assert!(load_document_dir(dir.path(), "en").is_err());
    }
}
