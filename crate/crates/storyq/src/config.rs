//! Pipeline configuration file.
//!
//! One TOML document. Every section and field is optional; missing values
//! take the defaults below, which follow the published hyperparameters
//! except where a desk-scale value is noted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use storyq_core::kglink::MAX_PATHS_PER_PAIR;
use storyq_core::qgen::SampleConfig;
use storyq_core::seq2seq::{DecoderKind, ModelConfig, TrainConfig};
use storyq_core::storygen::BeamConfig;
use storyq_core::termspace::TOP_OBJECTS;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Every stochastic step derives its seed from this value.
    pub seed: u64,
    pub paths: Paths,
    pub vocab: VocabSection,
    pub terms: Stage,
    pub story: Stage,
    pub question: Stage,
    pub lm: LmSection,
    pub generate: GenerateSection,
    pub evaluate: EvaluateSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            paths: Paths::default(),
            vocab: VocabSection::default(),
            // Recurrent decoder with attention, Adam 1e-3.
            terms: Stage {
                model: ModelConfig {
                    decoder_kind: DecoderKind::RecurrentWithAttention,
                    ..ModelConfig::default()
                },
                train: TrainConfig::default(),
            },
            // Transformer decoder, Adam 1e-3.
            story: Stage::default(),
            // 3 epochs at 5e-5 with linear decay.
            question: Stage {
                model: ModelConfig::default(),
                train: TrainConfig::question_finetune(),
            },
            lm: LmSection::default(),
            generate: GenerateSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

/// Input and output locations. Relative paths are taken from the directory
/// holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Photo-sequence corpus with gold stories (JSONL).
    pub stories: Option<PathBuf>,
    /// Reading-comprehension paragraphs with questions (JSONL).
    pub qa: Option<PathBuf>,
    /// Text-only five-sentence stories for the language model (JSONL).
    pub plain_stories: Option<PathBuf>,
    /// Verb to frame table (TSV).
    pub frames: Option<PathBuf>,
    /// Knowledge-graph triples (TSV).
    pub triples: Option<PathBuf>,
    /// Hop-count to template table (JSON).
    pub realizations: Option<PathBuf>,
    /// Sequences to generate for; falls back to `stories`.
    pub generate_input: Option<PathBuf>,
    /// Question files to evaluate.
    pub questions: Vec<PathBuf>,
    /// Worker rankings (CSV).
    pub rankings: Option<PathBuf>,
    pub checkpoints: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            stories: None,
            qa: None,
            plain_stories: None,
            frames: None,
            triples: None,
            realizations: None,
            generate_input: None,
            questions: Vec::new(),
            rankings: None,
            checkpoints: PathBuf::from("checkpoints"),
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub min_count: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection { min_count: 2 }
    }
}

/// Architecture and optimizer settings of one seq2seq model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSection {
    pub order: usize,
    pub smoothing: f64,
}

impl Default for LmSection {
    fn default() -> Self {
        LmSection {
            order: 3,
            smoothing: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub top_objects: usize,
    pub path_cap: usize,
    /// Replace repeated mentions with pronouns after decoding.
    pub postprocess: bool,
    /// Method name written into question records.
    pub method: String,
    pub beam: BeamConfig,
    pub sample: SampleConfig,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            top_objects: TOP_OBJECTS,
            path_cap: MAX_PATHS_PER_PAIR,
            postprocess: true,
            method: "story2Q".into(),
            beam: BeamConfig::default(),
            sample: SampleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub iterations: usize,
    /// Compared against every other method for significance.
    pub primary_method: String,
    pub repetition_n: usize,
    pub repetition_threshold: usize,
    pub significance_level: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            iterations: 10_000,
            primary_method: "story2Q".into(),
            repetition_n: 1,
            repetition_threshold: 3,
            significance_level: 0.05,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))
    }

    /// Reads, validates and resolves relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        for path in [
            &mut p.stories,
            &mut p.qa,
            &mut p.plain_stories,
            &mut p.frames,
            &mut p.triples,
            &mut p.realizations,
            &mut p.generate_input,
            &mut p.rankings,
        ]
        .into_iter()
        .flatten()
        {
            join(path);
        }
        p.questions.iter_mut().for_each(join);
        join(&mut p.checkpoints);
        join(&mut p.output);
    }

    /// Range checks on every numeric setting.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |section: &str, e: &dyn std::fmt::Display| CliError::validation(format!("config [{section}]: {e}"));
        for (name, stage) in [("terms", &self.terms), ("story", &self.story), ("question", &self.question)] {
            stage.model.validate().map_err(|e| bad(name, &e))?;
            stage.train.validate().map_err(|e| bad(name, &e))?;
        }
        if self.vocab.min_count == 0 {
            return Err(bad("vocab", &"min_count must be at least 1"));
        }
        if self.lm.order == 0 {
            return Err(bad("lm", &"order must be at least 1"));
        }
        if !(self.lm.smoothing > 0.0 && self.lm.smoothing.is_finite()) {
            return Err(bad("lm", &"smoothing must be positive"));
        }
        self.generate.beam.validate().map_err(|e| bad("generate.beam", &e))?;
        self.generate.sample.validate().map_err(|e| bad("generate.sample", &e))?;
        if self.generate.top_objects == 0 || self.generate.path_cap == 0 {
            return Err(bad("generate", &"top_objects and path_cap must be at least 1"));
        }
        if self.evaluate.repetition_n == 0 || self.evaluate.repetition_threshold < 2 {
            return Err(bad("evaluate", &"repetition_n must be at least 1 and repetition_threshold at least 2"));
        }
        if !(self.evaluate.significance_level > 0.0 && self.evaluate.significance_level < 1.0) {
            return Err(bad("evaluate", &"significance_level must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Fails unless `path` is set and names an existing file.
pub fn require_file<'a>(path: Option<&'a Path>, key: &str) -> CliResult<&'a Path> {
    let path = path.ok_or_else(|| CliError::validation(format!("config: paths.{key} is required for this command")))?;
    if !path.is_file() {
        return Err(CliError::validation(format!("paths.{key}: {} does not exist", path.display())));
    }
    Ok(path)
}

/// Like [`require_file`] for settings that may be left out.
pub fn optional_file<'a>(path: Option<&'a Path>, key: &str) -> CliResult<Option<&'a Path>> {
    path.map(|p| require_file(Some(p), key)).transpose()
}
