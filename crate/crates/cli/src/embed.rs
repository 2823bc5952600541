//! `protospace embed`: verbalize, consult the cache, fetch what is missing.
//!
//! Records already present in the output file or in a `<out>.partial` left by
//! an interrupted run are reused when their prompt text matches. New records
//! are appended to `<out>.partial` one chunk at a time, and the file is
//! renamed over the output only when every line has a vector.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use protospace_core::corpus::{
    eol_prompt, fetch_embeddings, load_embeddings, verbalize_entity, write_record, ServiceConfig,
};
use protospace_core::{EmbeddingVector, Error, Result};
use sha2::{Digest, Sha256};

use crate::EmbedArgs;

struct Line {
    id: String,
    prompt: String,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

fn read_lines(path: &Path, category: Option<&str>, eol: bool) -> Result<Vec<Line>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let (id, phrase) = match raw.split_once('\t') {
            Some((id, phrase)) => (id.trim(), phrase.trim()),
            None => (raw.trim(), raw.trim()),
        };
        if id.is_empty() {
            return Err(Error::Input(format!("{}:{}: empty id", path.display(), i + 1)));
        }
        if !seen.insert(id.to_owned()) {
            return Err(Error::Input(format!(
                "{}:{}: duplicate id `{id}`",
                path.display(),
                i + 1
            )));
        }
        let mut prompt = verbalize_entity(phrase, category)?;
        if eol {
            prompt = eol_prompt(&prompt)?;
        }
        out.push(Line {
            id: id.to_owned(),
            prompt,
        });
    }
    if out.is_empty() {
        return Err(Error::Input(format!("{} has no entries", path.display())));
    }
    Ok(out)
}

fn load_cache(paths: &[&Path], cache: &mut HashMap<String, EmbeddingVector>) {
    for p in paths {
        if !p.exists() {
            continue;
        }
        match load_embeddings(p) {
            Ok(store) => {
                for (_, text, v) in store.iter() {
                    cache.insert(prompt_key(text), v.clone());
                }
            }
            Err(e) => log::warn!("ignoring cache {}: {e}", p.display()),
        }
    }
}

/// Held for the duration of a run; a second writer on the same output fails.
struct Lock(PathBuf);

impl Lock {
    fn take(out: &Path) -> Result<Self> {
        let path = sibling(out, ".lock");
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::Config(format!(
                        "{} exists; another run is writing {}",
                        path.display(),
                        out.display()
                    ))
                } else {
                    Error::io(&path, e)
                }
            })?;
        Ok(Self(path))
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

pub fn run(a: &EmbedArgs) -> Result<u8> {
    let lines = read_lines(&a.texts, a.category.as_deref(), a.eol)?;
    let _lock = Lock::take(&a.out)?;
    let partial = sibling(&a.out, ".partial");

    let mut cache = HashMap::new();
    load_cache(&[a.out.as_path(), partial.as_path()], &mut cache);

    let mut cfg = ServiceConfig::new(a.endpoint.clone(), a.model.clone());
    cfg.api_key = a.api_key.clone().filter(|k| !k.is_empty());
    cfg.batch_size = a.batch_size.max(1);
    cfg.concurrency = a.concurrency.max(1);

    let file = File::create(&partial).map_err(|e| Error::io(&partial, e))?;
    let mut w = BufWriter::new(file);
    let (mut hits, mut fetched) = (0usize, 0usize);
    for chunk in lines.chunks(cfg.batch_size * cfg.concurrency) {
        hits += chunk
            .iter()
            .filter(|l| cache.contains_key(&prompt_key(&l.prompt)))
            .count();
        let mut queued = HashSet::new();
        let missing: Vec<String> = chunk
            .iter()
            .filter(|l| !cache.contains_key(&prompt_key(&l.prompt)))
            .filter(|l| queued.insert(l.prompt.as_str()))
            .map(|l| l.prompt.clone())
            .collect();
        if !missing.is_empty() {
            let vectors = fetch_embeddings(&missing, &cfg)?;
            fetched += missing.len();
            for (p, v) in missing.iter().zip(vectors) {
                cache.insert(prompt_key(p), v);
            }
        }
        for l in chunk {
            let v = &cache[&prompt_key(&l.prompt)];
            write_record(&mut w, &l.id, &l.prompt, v).map_err(|e| Error::io(&partial, e))?;
        }
        w.flush().map_err(|e| Error::io(&partial, e))?;
    }
    drop(w);
    std::fs::rename(&partial, &a.out).map_err(|e| Error::io(&a.out, e))?;
    println!(
        "{} records -> {} (cache hits {hits}, fetched {fetched})",
        lines.len(),
        a.out.display()
    );
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ids_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        std::fs::write(&p, "a\tbanana\nlemon\n\n").unwrap();
        let l = read_lines(&p, Some("food item"), false).unwrap();
        assert_eq!(l[0].id, "a");
        assert_eq!(l[0].prompt, "food item banana");
        assert_eq!(l[1].id, "lemon");
        std::fs::write(&p, "a\tx\na\ty\n").unwrap();
        assert!(matches!(read_lines(&p, None, false), Err(Error::Input(_))));
    }

    #[test]
    fn eol_wraps_the_verbalized_phrase() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        std::fs::write(&p, "banana\n").unwrap();
        let l = read_lines(&p, None, true).unwrap();
        assert_eq!(l[0].prompt, "The description of the term 'banana' in one word is");
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("e.jsonl");
        let l = Lock::take(&out).unwrap();
        assert!(matches!(Lock::take(&out), Err(Error::Config(_))));
        drop(l);
        assert!(Lock::take(&out).is_ok());
    }
}
