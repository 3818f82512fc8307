use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::CaseDocument;
use crate::error::{Error, Result};

/// Streams documents from a JSON Lines file, one record in memory at a time.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    path: PathBuf,
    line_no: usize,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>) -> Self {
        CorpusReader {
            lines: reader.lines(),
            path: path.into(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<CaseDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: self.path.clone(),
                line: self.line_no,
                message: e.to_string(),
            }));
        }
    }
}

pub fn read_corpus(path: &Path) -> Result<CorpusReader<BufReader<File>>> {
    let file = File::open(path)?;
    Ok(CorpusReader::new(BufReader::new(file), path))
}

pub fn load_corpus(path: &Path) -> Result<Vec<CaseDocument>> {
    read_corpus(path)?.collect()
}

pub fn save_corpus<'a, I>(docs: I, path: &Path) -> Result<()>
where
    I: IntoIterator<Item = &'a CaseDocument>,
{
    let mut out = BufWriter::new(File::create(path)?);
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
