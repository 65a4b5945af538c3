//! Model checkpoints and loss logs.
//!
//! A checkpoint is one JSON document: a small header naming the format and
//! the model kind, followed by the model itself. Seq2seq models store their
//! configuration and then every parameter with its name and shape, so a
//! checkpoint can be inspected without this crate.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use storyq_core::seq2seq::EpochLoss;

use crate::formats::{self, FormatError};

pub const FORMAT: &str = "storyq-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Terms,
    Lm,
    Story,
    Question,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Terms => "terms",
            ModelKind::Lm => "lm",
            ModelKind::Story => "story",
            ModelKind::Question => "question",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.ckpt.json", self.as_str())
    }

    pub fn loss_file_name(self) -> String {
        format!("{}.loss.jsonl", self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("missing {} checkpoint {}; run `storyq train {}` first", kind.as_str(), path.display(), kind.as_str())]
    Missing { kind: ModelKind, path: PathBuf },
    #[error("{} holds a {found} checkpoint, expected {}", path.display(), expected.as_str())]
    WrongKind {
        path: PathBuf,
        expected: ModelKind,
        found: String,
    },
    #[error("{} is not a {FORMAT} v{VERSION} file", path.display())]
    Format { path: PathBuf },
    #[error(transparent)]
    File(#[from] FormatError),
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    format: &'a str,
    version: u32,
    kind: ModelKind,
    model: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
}

#[derive(Deserialize)]
struct Body<T> {
    model: T,
}

pub fn save<T: Serialize>(path: &Path, kind: ModelKind, model: &T) -> Result<(), CheckpointError> {
    let envelope = Envelope {
        format: FORMAT,
        version: VERSION,
        kind,
        model,
    };
    Ok(formats::write_json(path, &envelope)?)
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: ModelKind) -> Result<T, CheckpointError> {
    if !path.exists() {
        return Err(CheckpointError::Missing {
            kind,
            path: path.to_path_buf(),
        });
    }
    let header: Header = formats::read_json(path)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(CheckpointError::Format {
            path: path.to_path_buf(),
        });
    }
    if header.kind != kind.as_str() {
        return Err(CheckpointError::WrongKind {
            path: path.to_path_buf(),
            expected: kind,
            found: header.kind,
        });
    }
    let body: Body<T> = formats::read_json(path)?;
    Ok(body.model)
}

/// One JSON line per epoch.
pub fn write_loss_history(path: &Path, history: &[EpochLoss]) -> Result<(), CheckpointError> {
    Ok(formats::write_jsonl(path, history)?)
}

pub fn read_loss_history(path: &Path) -> Result<Vec<EpochLoss>, CheckpointError> {
    Ok(formats::read_jsonl(path)?.into_iter().map(|(_, e)| e).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use storyq_core::lm::{train_ngram, NGramLm};
    use storyq_core::seq2seq::{ModelConfig, Seq2Seq};

    #[test]
    fn seq2seq_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt.json");
        let cfg = ModelConfig {
            hidden_size: 8,
            num_layers: 1,
            ffn_size: 16,
            max_positions: 16,
            ..ModelConfig::default()
        };
        let m = Seq2Seq::new(cfg, 12).unwrap();
        save(&p, ModelKind::Story, &m).unwrap();
        let back: Seq2Seq = load(&p, ModelKind::Story).unwrap();
        assert_eq!(back.params(), m.params());
        let bytes = std::fs::read(&p).unwrap();
        save(&p, ModelKind::Story, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), bytes);
        assert!(matches!(
            load::<Seq2Seq>(&p, ModelKind::Question),
            Err(CheckpointError::WrongKind { .. })
        ));
    }

    #[test]
    fn missing_checkpoint_names_the_artifact() {
        let err = load::<NGramLm>(Path::new("/nonexistent/lm.ckpt.json"), ModelKind::Lm).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lm") && msg.contains("/nonexistent/lm.ckpt.json"), "{msg}");
    }

    #[test]
    fn lm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lm.ckpt.json");
        let lm = train_ngram(&[vec!["a", "b"], vec!["a", "c"]], 2, 1.0).unwrap();
        save(&p, ModelKind::Lm, &lm).unwrap();
        let back: NGramLm = load(&p, ModelKind::Lm).unwrap();
        assert_eq!(back, lm);
    }
}
