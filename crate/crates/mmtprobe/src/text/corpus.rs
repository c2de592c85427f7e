//! Parallel corpora: line-aligned source/target sentence pairs bound to
//! feature rows by position.

use crate::error::{Error, Result};
use crate::text::tokenizer::tokenize;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One sentence pair; `image_index` selects the feature row (line number
/// by default).
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelSample {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub image_index: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub samples: Vec<ParallelSample>,
}

impl Corpus {
    /// Read and tokenize two line-aligned text files.
    pub fn load(source_path: &Path, target_path: &Path) -> Result<Self> {
        let src = read_lines(source_path)?;
        let tgt = read_lines(target_path)?;
        if src.len() != tgt.len() {
            return Err(Error::Alignment(format!(
                "{} has {} lines but {} has {}",
                source_path.display(),
                src.len(),
                target_path.display(),
                tgt.len()
            )));
        }
        let mut samples = Vec::with_capacity(src.len());
        for (i, (s, t)) in src.into_iter().zip(tgt).enumerate() {
            let source = tokenize(&s);
            let target = tokenize(&t);
            if source.is_empty() || target.is_empty() {
                return Err(Error::Alignment(format!(
                    "empty sentence at line {} of {} / {}",
                    i + 1,
                    source_path.display(),
                    target_path.display()
                )));
            }
            samples.push(ParallelSample {
                source,
                target,
                image_index: i,
            });
        }
        Ok(Corpus { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Write one side back to plain text, one sentence per line, tokens
    /// joined with single spaces.
    pub fn write_side(&self, path: &Path, side: Side) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for s in &self.samples {
            let tokens = match side {
                Side::Source => &s.source,
                Side::Target => &s.target,
            };
            writeln!(f, "{}", tokens.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = std::fs::File::open(path)?;
    let mut lines = Vec::new();
    for line in BufReader::new(f).lines() {
        lines.push(line?);
    }
    Ok(lines)
}
