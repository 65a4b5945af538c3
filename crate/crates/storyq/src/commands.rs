//! The `train`, `generate`, `evaluate` and `report` commands.
//!
//! Each command loads and validates the configuration and checks every input
//! it needs before it creates a directory or writes a file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use storyq_core::corpus::{StorySample, IMAGES_PER_SEQUENCE};
use storyq_core::evalkit::{
    aggregate_ranks, detect_repetition, distribution, render_distribution_table, render_rank_table,
    significance, MethodDistribution, QuestionRecord, RankAggregate, RankingRecord,
};
use storyq_core::kglink::{index_graph, KnowledgeGraph, RealizationTable, RelationPath};
use storyq_core::lm::{train_ngram, NGramLm};
use storyq_core::qgen::{generate_question, QuestionModel, SampleConfig};
use storyq_core::rng::stream_seed;
use storyq_core::seq2seq::{EpochLoss, ModelConfig, TrainConfig};
use storyq_core::storygen::{
    generate_story, preprocess_coref, PronounLexicon, RuleCoref, Story, StoryModel, StoryPipeline,
};
use storyq_core::termspace::{
    parse_sentences_to_terms, select_top_objects, FrameLexicon, LexiconAnnotator, Tag, TermPredictor,
    TermSequence,
};
use storyq_core::vocab::{detokenize, tokenize};

use crate::checkpoint::{self, ModelKind};
use crate::config::{optional_file, require_file, PipelineConfig, Stage};
use crate::error::{CliError, CliResult};
use crate::formats;

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub seed: Option<u64>,
    /// Output directory; wins over the config file.
    pub out: Option<PathBuf>,
    /// Only the first N sequences (or paragraphs) are used.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainTarget {
    Terms,
    Lm,
    Story,
    Question,
}

impl TrainTarget {
    fn kind(self) -> ModelKind {
        match self {
            TrainTarget::Terms => ModelKind::Terms,
            TrainTarget::Lm => ModelKind::Lm,
            TrainTarget::Story => ModelKind::Story,
            TrainTarget::Question => ModelKind::Question,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Train(TrainTarget),
    Generate { input: Option<PathBuf> },
    Evaluate { questions: Vec<PathBuf>, rankings: Option<PathBuf> },
    Report,
}

/// Loaded configuration with command-line overrides applied.
pub struct Context {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    pub limit: Option<usize>,
}

impl Context {
    pub fn new(opts: &Options) -> CliResult<Self> {
        let mut cfg = PipelineConfig::load(&opts.config)?;
        if let Some(seed) = opts.seed {
            cfg.seed = seed;
        }
        let out = opts.out.clone().unwrap_or_else(|| cfg.paths.output.clone());
        Ok(Context {
            cfg,
            out,
            limit: opts.limit,
        })
    }

    fn checkpoint(&self, kind: ModelKind) -> PathBuf {
        self.cfg.paths.checkpoints.join(kind.file_name())
    }

    fn take<T>(&self, mut items: Vec<T>) -> Vec<T> {
        if let Some(n) = self.limit {
            items.truncate(n);
        }
        items
    }

    /// Model and optimizer settings with seeds derived from the global one.
    fn stage(&self, name: &str, stage: &Stage) -> (ModelConfig, TrainConfig) {
        let mut model = stage.model.clone();
        let mut train = stage.train.clone();
        model.seed = stream_seed(self.cfg.seed, &format!("{name}/init"));
        train.seed = stream_seed(self.cfg.seed, &format!("{name}/train"));
        (model, train)
    }
}

pub fn run(opts: &Options, cmd: &Command) -> CliResult<()> {
    let ctx = Context::new(opts)?;
    match cmd {
        Command::Train(target) => train(&ctx, *target),
        Command::Generate { input } => generate(&ctx, input.as_deref()),
        Command::Evaluate { questions, rankings } => evaluate(&ctx, questions, rankings.as_deref()),
        Command::Report => report(&ctx).map(|text| print!("{text}")),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Tags every detected label as a noun on top of the built-in lexicon, so
/// gold terms and detector vocabularies line up.
pub fn term_annotator(samples: &[StorySample]) -> LexiconAnnotator {
    let mut ann = LexiconAnnotator::with_defaults();
    for d in samples.iter().flat_map(|s| &s.images).flat_map(|i| &i.detections) {
        for word in tokenize(&d.label) {
            ann.tags.entry(word).or_insert(Tag::Noun);
        }
    }
    ann
}

fn load_frames(path: Option<&Path>) -> CliResult<FrameLexicon> {
    Ok(match path {
        Some(p) => formats::load_frame_lexicon(p)?,
        None => FrameLexicon::default(),
    })
}

fn gold_samples(ctx: &Context, path: &Path) -> CliResult<Vec<StorySample>> {
    let all = formats::load_story_corpus(path)?;
    let gold: Vec<StorySample> = all.into_iter().filter(StorySample::is_gold).collect();
    let gold = ctx.take(gold);
    if gold.is_empty() {
        return Err(CliError::validation(format!("{}: no sequences with gold stories", path.display())));
    }
    Ok(gold)
}

fn save_trained<T: Serialize>(ctx: &Context, kind: ModelKind, model: &T, history: &[EpochLoss]) -> CliResult<()> {
    let dir = &ctx.cfg.paths.checkpoints;
    create_dir(dir)?;
    checkpoint::save(&ctx.checkpoint(kind), kind, model)?;
    checkpoint::write_loss_history(&dir.join(kind.loss_file_name()), history)?;
    if let Some(last) = history.last() {
        info!("{}: final mean loss {:.6}", kind.as_str(), last.mean_loss);
    }
    info!("wrote {}", ctx.checkpoint(kind).display());
    Ok(())
}

fn train(ctx: &Context, target: TrainTarget) -> CliResult<()> {
    let paths = &ctx.cfg.paths;
    let kind = target.kind();
    match target {
        TrainTarget::Terms => {
            let stories = require_file(paths.stories.as_deref(), "stories")?;
            let frames = load_frames(optional_file(paths.frames.as_deref(), "frames")?)?;
            let samples = gold_samples(ctx, stories)?;
            let examples = term_examples(&samples, &frames, ctx.cfg.generate.top_objects)?;
            let (model_cfg, train_cfg) = ctx.stage("terms", &ctx.cfg.terms);
            let mut predictor = TermPredictor::for_examples(&examples, model_cfg, ctx.cfg.vocab.min_count)
                .map_err(runtime_err("terms"))?;
            let history = predictor.train(&examples, &train_cfg).map_err(runtime_err("terms"))?;
            save_trained(ctx, kind, &predictor, &history)
        }
        TrainTarget::Lm => {
            let sentences = lm_corpus(ctx)?;
            let lm = train_ngram(&sentences, ctx.cfg.lm.order, ctx.cfg.lm.smoothing).map_err(runtime_err("lm"))?;
            let history = [EpochLoss {
                epoch: 1,
                mean_loss: lm_cross_entropy(&lm, &sentences),
                learning_rate: 0.0,
            }];
            save_trained(ctx, kind, &lm, &history)
        }
        TrainTarget::Story => {
            let stories = require_file(paths.stories.as_deref(), "stories")?;
            let frames = load_frames(optional_file(paths.frames.as_deref(), "frames")?)?;
            let samples = gold_samples(ctx, stories)?;
            let examples = story_examples(&samples, &frames)?;
            let (model_cfg, train_cfg) = ctx.stage("story", &ctx.cfg.story);
            let mut model =
                StoryModel::for_examples(&examples, model_cfg, ctx.cfg.vocab.min_count).map_err(runtime_err("story"))?;
            let history = model.train(&examples, &train_cfg).map_err(runtime_err("story"))?;
            save_trained(ctx, kind, &model, &history)
        }
        TrainTarget::Question => {
            let qa = require_file(paths.qa.as_deref(), "qa")?;
            let stories = optional_file(paths.stories.as_deref(), "stories")?;
            let loaded = formats::load_qa_corpus(qa)?;
            if loaded.skipped > 0 {
                warn!("{}: skipped {} paragraph(s) without questions", qa.display(), loaded.skipped);
            }
            let pairs = ctx.take(loaded.records);
            if pairs.is_empty() {
                return Err(CliError::validation(format!("{}: no usable paragraphs", qa.display())));
            }
            // Story text the model will later be prompted with.
            let extra: Vec<Vec<String>> = match stories {
                Some(p) => formats::load_story_corpus(p)?
                    .iter()
                    .map(|s| Story::from_text(&s.sentences).tokens())
                    .collect(),
                None => Vec::new(),
            };
            let (model_cfg, train_cfg) = ctx.stage("question", &ctx.cfg.question);
            let mut model = QuestionModel::for_pairs(&pairs, &extra, model_cfg, ctx.cfg.vocab.min_count)
                .map_err(runtime_err("question"))?;
            let history = model.train(&pairs, &train_cfg).map_err(runtime_err("question"))?;
            save_trained(ctx, kind, &model, &history)
        }
    }
}

fn runtime_err<E: std::fmt::Display>(what: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::runtime(format!("{what}: {e}"))
}

/// Detected labels paired with the gold term sets of each story.
pub fn term_examples(
    samples: &[StorySample],
    frames: &FrameLexicon,
    top_objects: usize,
) -> CliResult<Vec<(Vec<Vec<String>>, TermSequence)>> {
    let annotator = term_annotator(samples);
    samples
        .iter()
        .map(|s| {
            let labels = s.images.iter().map(|a| select_top_objects(a, top_objects)).collect();
            let parsed = parse_sentences_to_terms(&s.sentences, &annotator, frames)
                .map_err(|e| CliError::validation(format!("{}: {e}", s.sequence_id)))?;
            Ok((labels, parsed.sequence))
        })
        .collect()
}

/// Coreference-resolved stories with the term sets parsed from them.
pub fn story_examples(samples: &[StorySample], frames: &FrameLexicon) -> CliResult<Vec<(TermSequence, Story)>> {
    let annotator = term_annotator(samples);
    let lexicon = PronounLexicon::default();
    let coref = RuleCoref {
        lexicon: lexicon.clone(),
    };
    samples
        .iter()
        .map(|s| {
            let story = preprocess_coref(&Story::from_text(&s.sentences), &coref, &lexicon);
            let parsed = parse_sentences_to_terms(&story.text(), &annotator, frames)
                .map_err(|e| CliError::validation(format!("{}: {e}", s.sequence_id)))?;
            Ok((parsed.sequence, story))
        })
        .collect()
}

/// One tokenized sentence per training item.
fn lm_corpus(ctx: &Context) -> CliResult<Vec<Vec<String>>> {
    let paths = &ctx.cfg.paths;
    let stories: Vec<Vec<String>> = match optional_file(paths.plain_stories.as_deref(), "plain_stories")? {
        Some(p) => {
            let loaded = formats::load_plain_story_corpus(p)?;
            if loaded.skipped > 0 {
                warn!("{}: skipped {} record(s) without {IMAGES_PER_SEQUENCE} sentences", p.display(), loaded.skipped);
            }
            loaded.records
        }
        None => {
            let p = require_file(paths.stories.as_deref(), "stories")
                .map_err(|_| CliError::validation("config: train lm needs paths.plain_stories or paths.stories"))?;
            formats::load_story_corpus(p)?
                .into_iter()
                .filter(StorySample::is_gold)
                .map(|s| s.sentences)
                .collect()
        }
    };
    let sentences: Vec<Vec<String>> = ctx
        .take(stories)
        .iter()
        .flatten()
        .map(|s| tokenize(s))
        .filter(|t| !t.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(CliError::validation("language-model corpus is empty"));
    }
    Ok(sentences)
}

/// Mean negative log-likelihood per predicted token, `<eos>` included.
fn lm_cross_entropy(lm: &NGramLm, sentences: &[Vec<String>]) -> f64 {
    let tokens: usize = sentences.iter().map(|s| s.len() + 1).sum();
    -sentences.iter().map(|s| lm.log_prob(s)).sum::<f64>() / tokens as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryRecord {
    pub sequence_id: String,
    pub sentences: Vec<String>,
    /// 1-based position of the knowledge sentence, if one was added.
    pub inserted_index: Option<usize>,
    pub chosen_path: Option<RelationPath>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutput {
    pub sequence_id: String,
    pub method: String,
    pub question: String,
    pub num_tokens: usize,
    pub stop_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub sequences: usize,
    /// Sequences for which no knowledge-graph bridge was found.
    pub no_bridge: usize,
    pub warnings: usize,
}

pub const STORIES_FILE: &str = "stories.jsonl";
pub const QUESTIONS_FILE: &str = "questions.jsonl";
pub const SUMMARY_FILE: &str = "generate_summary.json";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const TABLES_FILE: &str = "tables.txt";

struct Models {
    predictor: TermPredictor,
    lm: NGramLm,
    story: StoryModel,
    question: QuestionModel,
}

fn load_models(ctx: &Context) -> CliResult<Models> {
    // Report every missing checkpoint, not just the first.
    let missing: Vec<String> = [ModelKind::Terms, ModelKind::Lm, ModelKind::Story, ModelKind::Question]
        .into_iter()
        .filter(|k| !ctx.checkpoint(*k).is_file())
        .map(|k| {
            checkpoint::CheckpointError::Missing {
                kind: k,
                path: ctx.checkpoint(k),
            }
            .to_string()
        })
        .collect();
    if !missing.is_empty() {
        return Err(CliError::validation(missing.join("\n")));
    }
    Ok(Models {
        predictor: checkpoint::load(&ctx.checkpoint(ModelKind::Terms), ModelKind::Terms)?,
        lm: checkpoint::load(&ctx.checkpoint(ModelKind::Lm), ModelKind::Lm)?,
        story: checkpoint::load(&ctx.checkpoint(ModelKind::Story), ModelKind::Story)?,
        question: checkpoint::load(&ctx.checkpoint(ModelKind::Question), ModelKind::Question)?,
    })
}

fn generate(ctx: &Context, input: Option<&Path>) -> CliResult<()> {
    let paths = &ctx.cfg.paths;
    let input = match input {
        Some(p) => require_file(Some(p), "generate_input")?,
        None => require_file(paths.generate_input.as_deref().or(paths.stories.as_deref()), "generate_input")?,
    };
    let triples = optional_file(paths.triples.as_deref(), "triples")?;
    let realizations = optional_file(paths.realizations.as_deref(), "realizations")?;
    let samples = ctx.take(formats::load_story_corpus(input)?);
    let graph: KnowledgeGraph = match triples {
        Some(p) => index_graph(formats::load_triples(p)?),
        None => {
            warn!("no knowledge-graph triples configured; stories keep five sentences");
            KnowledgeGraph::default()
        }
    };
    let table = match realizations {
        Some(p) => formats::load_realization_table(p)?,
        None => RealizationTable::default(),
    };
    let models = load_models(ctx)?;
    let pronouns = PronounLexicon::default();
    let g = &ctx.cfg.generate;
    let pipeline = StoryPipeline {
        predictor: &models.predictor,
        scorer: &models.lm,
        graph: &graph,
        realizations: &table,
        story_model: &models.story,
        pronouns: &pronouns,
        beam: g.beam.clone(),
        top_objects: g.top_objects,
        path_cap: g.path_cap,
        postprocess: g.postprocess,
    };
    let results: Vec<(StoryRecord, QuestionOutput)> = samples
        .par_iter()
        .map(|s| generate_one(s, &pipeline, &models.question, &g.sample, ctx.cfg.seed, &g.method))
        .collect::<CliResult<_>>()?;
    let summary = GenerateSummary {
        sequences: results.len(),
        no_bridge: results.iter().filter(|(s, _)| s.chosen_path.is_none()).count(),
        warnings: results.iter().map(|(s, _)| s.warnings.len()).sum(),
    };
    let (stories, questions): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    create_dir(&ctx.out)?;
    formats::write_jsonl(&ctx.out.join(STORIES_FILE), &stories)?;
    formats::write_jsonl(&ctx.out.join(QUESTIONS_FILE), &questions)?;
    formats::write_json(&ctx.out.join(SUMMARY_FILE), &summary)?;
    if summary.warnings > 0 {
        warn!("{} warning(s) over {} sequence(s)", summary.warnings, summary.sequences);
    }
    info!("wrote {} stories and questions to {}", summary.sequences, ctx.out.display());
    Ok(())
}

fn generate_one(
    sample: &StorySample,
    pipeline: &StoryPipeline<'_, NGramLm>,
    question_model: &QuestionModel,
    sample_cfg: &SampleConfig,
    global_seed: u64,
    method: &str,
) -> CliResult<(StoryRecord, QuestionOutput)> {
    let id = &sample.sequence_id;
    let generated = generate_story(&sample.images, pipeline).map_err(|e| CliError::runtime(format!("{id}: {e}")))?;
    let cfg = SampleConfig {
        seed: stream_seed(global_seed, &format!("question/{id}")),
        ..sample_cfg.clone()
    };
    let q = generate_question(question_model, &generated.story, &cfg)
        .map_err(|e| CliError::runtime(format!("{id}: {e}")))?;
    let story = StoryRecord {
        sequence_id: id.clone(),
        sentences: generated.story.text(),
        inserted_index: generated.inserted_index(),
        chosen_path: generated.chosen.clone(),
        warnings: generated.warnings.clone(),
    };
    let question = QuestionOutput {
        sequence_id: id.clone(),
        method: method.to_string(),
        question: detokenize(&q.tokens),
        num_tokens: q.tokens.len(),
        stop_reason: q.stop_reason.as_str().to_string(),
    };
    Ok((story, question))
}

#[derive(Debug, Deserialize)]
struct RankingRow {
    sequence_id: String,
    worker_id: String,
    method: String,
    rank: u32,
}

/// Long-format rankings: one `sequence_id,worker_id,method,rank` row per
/// method, grouped into one record per (sequence, worker) in first-seen
/// order.
pub fn load_rankings(path: &Path) -> CliResult<Vec<RankingRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mut records: Vec<RankingRecord> = Vec::new();
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    for row in reader.deserialize::<RankingRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::validation(format!("{}:{line}: {e}", path.display()))
        })?;
        let key = (row.sequence_id.clone(), row.worker_id.clone());
        let i = *index.entry(key).or_insert_with(|| {
            records.push(RankingRecord {
                sequence_id: row.sequence_id.clone(),
                worker_id: row.worker_id.clone(),
                ranks: BTreeMap::new(),
            });
            records.len() - 1
        });
        if records[i].ranks.insert(row.method.clone(), row.rank).is_some() {
            return Err(CliError::validation(format!(
                "{}: worker {} ranks {} twice for sequence {}",
                path.display(),
                row.worker_id,
                row.method,
                row.sequence_id
            )));
        }
    }
    if records.is_empty() {
        return Err(CliError::validation(format!("{}: no rankings", path.display())));
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method_a: String,
    pub method_b: String,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionCount {
    pub method: String,
    pub questions: usize,
    pub repeated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ranks: RankAggregate,
    pub distribution: Vec<MethodDistribution>,
    pub significance: Vec<Comparison>,
    pub significance_level: f64,
    pub notices: Vec<String>,
    pub repetition: Vec<RepetitionCount>,
}

pub fn evaluate_records(
    cfg: &PipelineConfig,
    rankings: &[RankingRecord],
    questions: &[QuestionRecord],
) -> CliResult<Evaluation> {
    let e = &cfg.evaluate;
    let ranks = aggregate_ranks(rankings).map_err(|err| CliError::validation(format!("rankings: {err}")))?;
    for r in &ranks.rejected {
        warn!("ranking {} ({} / {}) rejected: {}", r.index, r.sequence_id, r.worker_id, r.reason);
    }
    let mut notices = Vec::new();
    let mut comparisons = Vec::new();
    if ranks.methods.len() < 2 {
        notices.push("significance skipped: only one method was ranked".to_string());
    } else if ranks.method(&e.primary_method).is_none() {
        notices.push(format!("significance skipped: primary method {} was not ranked", e.primary_method));
    } else {
        for other in ranks.methods.iter().filter(|m| m.method != e.primary_method) {
            let seed = stream_seed(cfg.seed, &format!("significance/{}/{}", e.primary_method, other.method));
            let p = significance(rankings, &e.primary_method, &other.method, e.iterations, seed)
                .map_err(|err| CliError::validation(format!("significance: {err}")))?;
            comparisons.push(Comparison {
                method_a: e.primary_method.clone(),
                method_b: other.method.clone(),
                p_value: p,
                significant: p < e.significance_level,
            });
        }
    }
    if questions.is_empty() {
        notices.push("question-type distribution skipped: no question files".to_string());
    }
    let mut repetition: Vec<RepetitionCount> = Vec::new();
    for q in questions {
        let flagged = detect_repetition(&q.question, e.repetition_n, e.repetition_threshold)
            .map_err(|err| CliError::validation(format!("repetition: {err}")))?;
        let row = match repetition.iter_mut().position(|r| r.method == q.method) {
            Some(i) => &mut repetition[i],
            None => {
                repetition.push(RepetitionCount {
                    method: q.method.clone(),
                    questions: 0,
                    repeated: 0,
                });
                repetition.last_mut().expect("just pushed")
            }
        };
        row.questions += 1;
        row.repeated += usize::from(flagged);
    }
    Ok(Evaluation {
        ranks,
        distribution: distribution(questions),
        significance: comparisons,
        significance_level: e.significance_level,
        notices,
        repetition,
    })
}

/// Plain-text tables for an evaluation.
pub fn render_evaluation(ev: &Evaluation) -> String {
    let mut out = String::new();
    out.push_str("Ranking\n");
    out.push_str(&render_rank_table(&ev.ranks));
    if !ev.ranks.rejected.is_empty() {
        out.push_str(&format!("rejected records: {}\n", ev.ranks.rejected.len()));
    }
    if !ev.distribution.is_empty() {
        out.push_str("\nQuestion types\n");
        out.push_str(&render_distribution_table(&ev.distribution));
    }
    if !ev.significance.is_empty() {
        out.push_str(&format!("\nSign-flip test (alpha = {})\n", ev.significance_level));
        for c in &ev.significance {
            let mark = if c.significant { " *" } else { "" };
            out.push_str(&format!("{} vs {}: p = {:.4}{mark}\n", c.method_a, c.method_b, c.p_value));
        }
    }
    if !ev.repetition.is_empty() {
        out.push_str("\nRepetition errors\n");
        for r in &ev.repetition {
            out.push_str(&format!("{}: {} of {}\n", r.method, r.repeated, r.questions));
        }
    }
    for n in &ev.notices {
        out.push_str(&format!("\nnote: {n}\n"));
    }
    out
}

fn evaluate(ctx: &Context, questions: &[PathBuf], rankings: Option<&Path>) -> CliResult<()> {
    let paths = &ctx.cfg.paths;
    let rankings = require_file(rankings.or(paths.rankings.as_deref()), "rankings")?;
    let question_paths = if questions.is_empty() { &paths.questions } else { questions };
    for p in question_paths {
        require_file(Some(p), "questions")?;
    }
    let ranking_records = load_rankings(rankings)?;
    let mut question_records = Vec::new();
    for p in question_paths {
        question_records.extend(formats::read_jsonl::<QuestionRecord>(p)?.into_iter().map(|(_, q)| q));
    }
    let ev = evaluate_records(&ctx.cfg, &ranking_records, &question_records)?;
    let tables = render_evaluation(&ev);
    for n in &ev.notices {
        warn!("{n}");
    }
    create_dir(&ctx.out)?;
    formats::write_json(&ctx.out.join(EVALUATION_FILE), &ev)?;
    fs::write(ctx.out.join(TABLES_FILE), &tables).map_err(runtime_err("write tables"))?;
    print!("{tables}");
    Ok(())
}

fn report(ctx: &Context) -> CliResult<String> {
    let path = ctx.out.join(EVALUATION_FILE);
    if !path.is_file() {
        return Err(CliError::validation(format!(
            "{} not found; run `storyq evaluate` first",
            path.display()
        )));
    }
    let ev: Evaluation = formats::read_json(&path)?;
    Ok(render_evaluation(&ev))
}
