//! On-disk formats: line-delimited JSON corpora, tab-separated lexicons and
//! triples, the vocabulary file and the realization table.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use storyq_core::corpus::{QaPair, StorySample, IMAGES_PER_SEQUENCE};
use storyq_core::kglink::{KnowledgeTriple, RealizationTable};
use storyq_core::termspace::FrameLexicon;
use storyq_core::vocab::{Vocab, SPECIALS};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
}

impl FormatError {
    fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn line(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Line {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn file(path: &Path, message: impl Into<String>) -> Self {
        FormatError::File {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

/// Records kept by a lenient loader and how many it dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub skipped: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| FormatError::io(path, e))
}

/// Non-blank lines with their 1-based numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parses one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    lines(path)?
        .into_iter()
        .map(|(n, line)| {
            serde_json::from_str(&line)
                .map(|v| (n, v))
                .map_err(|e| FormatError::line(path, n, e.to_string()))
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| FormatError::file(path, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| FormatError::io(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormatError::file(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::file(path, e.to_string()))
}

/// Photo-sequence corpus. Every record must validate and carry a unique
/// `sequence_id`.
pub fn load_story_corpus(path: &Path) -> Result<Vec<StorySample>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (n, sample) in read_jsonl::<StorySample>(path)? {
        sample
            .validate()
            .map_err(|e| FormatError::line(path, n, e.to_string()))?;
        if !seen.insert(sample.sequence_id.clone()) {
            return Err(FormatError::line(
                path,
                n,
                format!("duplicate sequence_id {:?}", sample.sequence_id),
            ));
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_story_corpus(path: &Path, samples: &[StorySample]) -> Result<()> {
    write_jsonl(path, samples)
}

/// Reading-comprehension corpus. Paragraphs without questions are skipped
/// and counted.
pub fn load_qa_corpus(path: &Path) -> Result<Loaded<QaPair>> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for (n, pair) in read_jsonl::<QaPair>(path)? {
        if pair.questions.is_empty() {
            skipped += 1;
            continue;
        }
        pair.validate()
            .map_err(|e| FormatError::line(path, n, e.to_string()))?;
        records.push(pair);
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} paragraph(s) without questions", path.display());
    }
    Ok(Loaded { records, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlainStory {
    sentences: Vec<String>,
}

/// Text-only stories. Records that do not have exactly five sentences are
/// skipped and counted.
pub fn load_plain_story_corpus(path: &Path) -> Result<Loaded<Vec<String>>> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for (_, story) in read_jsonl::<PlainStory>(path)? {
        if story.sentences.len() == IMAGES_PER_SEQUENCE {
            records.push(story.sentences);
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} stories without five sentences", path.display());
    }
    Ok(Loaded { records, skipped })
}

pub fn write_plain_story_corpus(path: &Path, stories: &[Vec<String>]) -> Result<()> {
    let records: Vec<PlainStory> = stories
        .iter()
        .map(|s| PlainStory { sentences: s.clone() })
        .collect();
    write_jsonl(path, &records)
}

const VOCAB_MAGIC: &str = "#storyq-vocab";

/// Header `#storyq-vocab<TAB>tokens=N<TAB>specials=6`, then `token<TAB>id`
/// per line in id order.
pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut text = format!("{VOCAB_MAGIC}\ttokens={}\tspecials={}\n", vocab.len(), SPECIALS.len());
    for (token, id) in vocab.tokens() {
        text.push_str(&format!("{token}\t{id}\n"));
    }
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let all = lines(path)?;
    let (_, header) = all
        .first()
        .ok_or_else(|| FormatError::file(path, "empty vocabulary file"))?;
    let fields: Vec<&str> = header.split('\t').collect();
    let declared = match fields.as_slice() {
        [VOCAB_MAGIC, tokens, _] => tokens
            .strip_prefix("tokens=")
            .and_then(|n| n.parse::<usize>().ok()),
        _ => None,
    }
    .ok_or_else(|| FormatError::line(path, 1, "expected a vocabulary header"))?;
    let mut tokens = Vec::with_capacity(declared);
    for (n, line) in &all[1..] {
        let (token, id) = line
            .split_once('\t')
            .ok_or_else(|| FormatError::line(path, *n, "expected token<TAB>id"))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| FormatError::line(path, *n, format!("bad id {id:?}")))?;
        if id != tokens.len() {
            return Err(FormatError::line(path, *n, format!("id {id} out of order")));
        }
        tokens.push(token.to_string());
    }
    if tokens.len() != declared {
        return Err(FormatError::file(
            path,
            format!("header declares {declared} tokens, found {}", tokens.len()),
        ));
    }
    if tokens.iter().take(SPECIALS.len()).map(String::as_str).ne(SPECIALS) {
        return Err(FormatError::file(path, "special tokens missing or out of place"));
    }
    let vocab = Vocab::from(tokens);
    if vocab.len() != declared {
        return Err(FormatError::file(path, "duplicate tokens"));
    }
    Ok(vocab)
}

/// Parses `a<TAB>b[<TAB>c]` lines; `#` starts a comment line.
fn tsv(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    for (n, line) in lines(path)? {
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(|f| f.trim().to_string()).collect();
        if fields.len() != columns || fields.iter().any(String::is_empty) {
            return Err(FormatError::line(
                path,
                n,
                format!("expected {columns} non-empty tab-separated fields"),
            ));
        }
        out.push((n, fields));
    }
    Ok(out)
}

/// `verb<TAB>frame_label` per line.
pub fn load_frame_lexicon(path: &Path) -> Result<FrameLexicon> {
    let rows = tsv(path, 2)?;
    Ok(rows
        .iter()
        .map(|(_, f)| (f[0].as_str(), f[1].as_str()))
        .collect())
}

/// `subject<TAB>relation<TAB>object` per line.
pub fn load_triples(path: &Path) -> Result<Vec<KnowledgeTriple>> {
    tsv(path, 3)?
        .into_iter()
        .map(|(n, f)| {
            KnowledgeTriple::new(&f[0], &f[1], &f[2])
                .map_err(|e| FormatError::line(path, n, e.to_string()))
        })
        .collect()
}

pub fn write_triples(path: &Path, triples: &[KnowledgeTriple]) -> Result<()> {
    let mut text = String::new();
    for t in triples {
        text.push_str(&format!("{}\t{}\t{}\n", t.subject, t.relation, t.object));
    }
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

/// JSON object from hop count to template, e.g. `{"1": "the {x} {r} the {y}"}`.
pub fn load_realization_table(path: &Path) -> Result<RealizationTable> {
    let templates: BTreeMap<u8, String> = read_json(path)?;
    for (hops, t) in &templates {
        if !(1..=2).contains(hops) {
            return Err(FormatError::file(path, format!("unsupported hop count {hops}")));
        }
        if !t.contains("{x}") || !t.contains("{y}") {
            return Err(FormatError::file(path, format!("template for {hops} hop(s) lacks {{x}} or {{y}}")));
        }
    }
    Ok(RealizationTable::new(templates))
}
