//! Plain-text corpus files: one whitespace-tokenized sentence per line,
//! named `<style>.<split>.txt`, with references in `<style>.<split>.ref<k>.txt`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dualstyle_core::corpus::{tokenize, Sentence, Split, Style, StyleCorpus};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

/// Style names of a corpus directory, stored as `corpus.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub source: String,
    pub target: String,
}

pub const MANIFEST: &str = "corpus.json";

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).at(path)?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            tokenize(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Lines of a file where blank lines are kept as `None`.
pub fn read_lines_keep_blank(path: &Path) -> Result<Vec<Option<Sentence>>> {
    let text = fs::read_to_string(path).at(path)?;
    Ok(text.lines().map(|l| tokenize(l).ok()).collect())
}

pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: std::fmt::Display,
{
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).at(&tmp)?;
    f.write_all(bytes).at(&tmp)?;
    f.sync_all().at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

pub fn split_path(dir: &Path, style: &str, split: Split) -> PathBuf {
    dir.join(format!("{style}.{}.txt", split.name()))
}

pub fn ref_path(dir: &Path, style: &str, split: Split, k: usize) -> PathBuf {
    dir.join(format!("{style}.{}.ref{k}.txt", split.name()))
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).at(&path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads every split and reference file of both styles. Missing dev/test
/// files are left empty; train files are required.
pub fn load_corpus(dir: &Path, names: &CorpusManifest) -> Result<StyleCorpus> {
    let mut corpus = StyleCorpus::new(&names.source, &names.target);
    for style in Style::BOTH {
        let name = corpus.label(style).name.clone();
        for split in Split::ALL {
            let path = split_path(dir, &name, split);
            if split != Split::Train && !path.exists() {
                continue;
            }
            let sentences = read_sentences(&path)?;
            let n = sentences.len();
            *corpus.side_mut(style).split_mut(split) = sentences;
            let mut refs: Vec<Vec<Sentence>> = Vec::new();
            for k in 0.. {
                let rp = ref_path(dir, &name, split, k);
                if split == Split::Train || !rp.exists() {
                    break;
                }
                let r = read_sentences(&rp)?;
                if r.len() != n {
                    return Err(dualstyle_core::Error::LengthMismatch { left: n, right: r.len() }.into());
                }
                refs.push(r);
            }
            if let Some(slot) = corpus.side_mut(style).refs_mut(split) {
                // file-major to sentence-major
                *slot = (0..if refs.is_empty() { 0 } else { n })
                    .map(|i| refs.iter().map(|r| r[i].clone()).collect())
                    .collect();
            }
        }
    }
    corpus.validate()?;
    Ok(corpus)
}

pub fn write_corpus(dir: &Path, corpus: &StyleCorpus) -> Result<()> {
    let names = CorpusManifest {
        source: corpus.label(Style::Source).name.clone(),
        target: corpus.label(Style::Target).name.clone(),
    };
    write_atomic(&dir.join(MANIFEST), serde_json::to_string_pretty(&names)?.as_bytes())?;
    for style in Style::BOTH {
        let name = &corpus.label(style).name;
        let side = corpus.side(style);
        for split in Split::ALL {
            write_lines(&split_path(dir, name, split), side.split(split))?;
            let refs = side.refs(split);
            let count = refs.iter().map(Vec::len).max().unwrap_or(0);
            for k in 0..count {
                write_lines(&ref_path(dir, name, split, k), refs.iter().map(|r| &r[k.min(r.len() - 1)]))?;
            }
        }
    }
    Ok(())
}
