//! Story decoding: one sentence per term set with a repetition-penalized
//! beam search, plus pronoun handling before training and after decoding.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ImageAnnotation, IMAGES_PER_SEQUENCE};
use crate::kglink::{enrich, KnowledgeGraph, LinkError, PerplexityScorer, RealizationTable, RelationPath};
use crate::seq2seq::{
    encode_positions, EncodedSequence, EpochLoss, Memory, ModelConfig, ModelError, Seq2Seq,
    TrainConfig, TrainingPair,
};
use crate::termspace::{predict_terms, select_top_objects, TermError, TermPredictor, TermSequence};
use crate::vocab::{detokenize, is_special, tokenize, TokenId, Vocab, NEWLINE_ID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoryError {
    #[error("story model has not been trained")]
    Untrained,
    #[error("expected {expected} images, found {found}")]
    ImageCount { expected: usize, found: usize },
    #[error("story has {sentences} sentences for {sets} term sets")]
    Misaligned { sentences: usize, sets: usize },
    #[error("no training stories")]
    NoTrainingData,
    #[error("invalid beam configuration: {0}")]
    InvalidBeam(&'static str),
    #[error(transparent)]
    Terms(#[from] TermError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Sentences as token lists; sentence `i` was decoded from term set
/// `alignment[i]` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Story {
    pub sentences: Vec<Vec<String>>,
    pub alignment: Vec<usize>,
}

impl Story {
    /// Aligns sentence `i` with set `i + 1`.
    pub fn new(sentences: Vec<Vec<String>>) -> Self {
        let alignment = (1..=sentences.len()).collect();
        Story {
            sentences,
            alignment,
        }
    }

    pub fn from_text<S: AsRef<str>>(sentences: &[S]) -> Self {
        Story::new(sentences.iter().map(|s| tokenize(s.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn text(&self) -> Vec<String> {
        self.sentences.iter().map(|s| detokenize(s)).collect()
    }

    /// All tokens in reading order; the question model's context.
    pub fn tokens(&self) -> Vec<String> {
        self.sentences.iter().flatten().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Subtracted once per earlier occurrence of the token in the current
    /// sentence.
    pub intra_penalty: f64,
    /// Subtracted once per occurrence of the token in earlier sentences.
    pub inter_penalty: f64,
    /// Size of n-grams that may not repeat within a story; 0 disables.
    pub block_ngram: usize,
    pub max_sentence_tokens: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 4,
            intra_penalty: 1.0,
            inter_penalty: 0.5,
            block_ngram: 3,
            max_sentence_tokens: 20,
        }
    }
}

impl BeamConfig {
    /// Plain beam search of the given width.
    pub fn unpenalized(beam_width: usize, max_sentence_tokens: usize) -> Self {
        BeamConfig {
            beam_width,
            intra_penalty: 0.0,
            inter_penalty: 0.0,
            block_ngram: 0,
            max_sentence_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), StoryError> {
        if self.beam_width == 0 {
            return Err(StoryError::InvalidBeam("beam_width must be at least 1"));
        }
        if !(self.intra_penalty >= 0.0 && self.inter_penalty >= 0.0) {
            return Err(StoryError::InvalidBeam("penalties must be non-negative"));
        }
        if self.max_sentence_tokens == 0 {
            return Err(StoryError::InvalidBeam("max_sentence_tokens must be at least 1"));
        }
        Ok(())
    }
}

/// Next-token model seen by the beam search.
pub trait SentenceModel {
    fn vocab_size(&self) -> usize;

    /// Token that closes a sentence.
    fn stop_token(&self) -> TokenId;

    fn is_candidate(&self, _token: TokenId) -> bool {
        true
    }

    /// Log-probabilities for the next token of sentence `sentence`
    /// (0-based), given the finished sentences and the current prefix.
    fn next_log_probs(
        &self,
        previous: &[Vec<TokenId>],
        current: &[TokenId],
        sentence: usize,
    ) -> Result<Vec<f64>, ModelError>;
}

#[derive(Debug, Clone, PartialEq)]
struct Hypothesis {
    tokens: Vec<TokenId>,
    score: f64,
    finished: bool,
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Whether the n-gram ending in `next` already occurs in `history ++ current`.
fn repeats_ngram(history: &[TokenId], current: &[TokenId], next: TokenId, n: usize) -> bool {
    if n == 0 {
        return false;
    }
    let mut seq: Vec<TokenId> = history.iter().chain(current).copied().collect();
    seq.push(next);
    if seq.len() < n {
        return false;
    }
    let tail = &seq[seq.len() - n..];
    seq[..seq.len() - 1].windows(n).any(|w| w == tail)
}

/// Decoded sentences plus the number of sentences that needed the
/// unpenalized fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamOutput {
    pub sentences: Vec<Vec<TokenId>>,
    pub fallbacks: usize,
}

/// Decodes `sentence_count` sentences, each with a fresh beam conditioned
/// on the sentences already chosen. Returned sentences exclude the stop
/// token.
pub fn beam_search<M: SentenceModel + ?Sized>(
    model: &M,
    sentence_count: usize,
    cfg: &BeamConfig,
) -> Result<BeamOutput, StoryError> {
    cfg.validate()?;
    let mut previous: Vec<Vec<TokenId>> = Vec::with_capacity(sentence_count);
    let mut fallbacks = 0;
    for s in 0..sentence_count {
        let sentence = match beam_sentence(model, &previous, s, cfg)? {
            Some(tokens) => tokens,
            None => {
                log::warn!("sentence {}: every hypothesis was pruned; decoding without penalties", s + 1);
                fallbacks += 1;
                let plain = BeamConfig::unpenalized(cfg.beam_width, cfg.max_sentence_tokens);
                beam_sentence(model, &previous, s, &plain)?.unwrap_or_default()
            }
        };
        previous.push(sentence);
    }
    Ok(BeamOutput {
        sentences: previous,
        fallbacks,
    })
}

fn beam_sentence<M: SentenceModel + ?Sized>(
    model: &M,
    previous: &[Vec<TokenId>],
    sentence: usize,
    cfg: &BeamConfig,
) -> Result<Option<Vec<TokenId>>, StoryError> {
    let stop = model.stop_token();
    let history: Vec<TokenId> = previous.iter().flatten().copied().collect();
    let mut inter_counts: BTreeMap<TokenId, usize> = BTreeMap::new();
    for &t in &history {
        *inter_counts.entry(t).or_default() += 1;
    }
    let mut beam = alloc::vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        finished: false,
    }];
    while beam.iter().any(|h| !h.finished) {
        let mut next: Vec<Hypothesis> = Vec::new();
        for h in &beam {
            if h.finished {
                next.push(h.clone());
                continue;
            }
            let log_probs = model.next_log_probs(previous, &h.tokens, sentence)?;
            for (v, &lp) in log_probs.iter().enumerate() {
                let v = v as TokenId;
                if !model.is_candidate(v) || lp == f64::NEG_INFINITY {
                    continue;
                }
                if v == stop {
                    if h.tokens.is_empty() {
                        continue;
                    }
                    next.push(Hypothesis {
                        tokens: h.tokens.clone(),
                        score: h.score + lp,
                        finished: true,
                    });
                    continue;
                }
                if repeats_ngram(&history, &h.tokens, v, cfg.block_ngram) {
                    continue;
                }
                let intra = h.tokens.iter().filter(|&&t| t == v).count();
                let inter = inter_counts.get(&v).copied().unwrap_or(0);
                let score = h.score + lp
                    - cfg.intra_penalty * intra as f64
                    - cfg.inter_penalty * inter as f64;
                let mut tokens = h.tokens.clone();
                tokens.push(v);
                let finished = tokens.len() >= cfg.max_sentence_tokens;
                next.push(Hypothesis {
                    tokens,
                    score,
                    finished,
                });
            }
        }
        if next.is_empty() {
            return Ok(None);
        }
        next.sort_by(rank);
        next.truncate(cfg.beam_width);
        beam = next;
    }
    Ok(beam.into_iter().next().map(|h| h.tokens))
}

/// Seq2seq from term sets to story sentences.
///
/// The source holds one segment per term set; the target holds one sentence
/// per set, each closed by `<newline>`. Both carry the set count as their
/// total so the length-difference embedding tells the decoder how many
/// sentences remain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoryModel {
    pub vocab: Vocab,
    pub model: Seq2Seq,
    pub trained: bool,
}

impl StoryModel {
    pub fn new(vocab: Vocab, config: ModelConfig) -> Result<Self, StoryError> {
        let model = Seq2Seq::new(config, vocab.len())?;
        Ok(StoryModel {
            vocab,
            model,
            trained: false,
        })
    }

    /// Vocabulary over term surfaces and story tokens of `examples`.
    pub fn for_examples(
        examples: &[(TermSequence, Story)],
        config: ModelConfig,
        min_count: usize,
    ) -> Result<Self, StoryError> {
        let mut streams: Vec<Vec<String>> = Vec::new();
        for (terms, story) in examples {
            streams.push(terms.sets.iter().flat_map(|s| s.surfaces().map(str::to_string)).collect());
            streams.push(story.tokens());
        }
        StoryModel::new(Vocab::build(streams, min_count), config)
    }

    pub fn encode_source(&self, terms: &TermSequence) -> Result<EncodedSequence, StoryError> {
        let segs: Vec<Vec<TokenId>> = terms
            .sets
            .iter()
            .map(|s| s.surfaces().map(|t| self.vocab.id(t)).collect())
            .collect();
        Ok(encode_positions(&segs, terms.len() as u32)?)
    }

    pub fn encode_target(&self, story: &Story) -> Result<EncodedSequence, StoryError> {
        let segs: Vec<Vec<TokenId>> = story
            .sentences
            .iter()
            .map(|s| {
                let mut ids = self.vocab.encode(s);
                ids.push(NEWLINE_ID);
                ids
            })
            .collect();
        Ok(encode_positions(&segs, story.len() as u32)?)
    }

    pub fn train(
        &mut self,
        examples: &[(TermSequence, Story)],
        cfg: &TrainConfig,
    ) -> Result<Vec<EpochLoss>, StoryError> {
        if examples.is_empty() {
            return Err(StoryError::NoTrainingData);
        }
        let pairs = examples
            .iter()
            .map(|(terms, story)| {
                if terms.len() != story.len() {
                    return Err(StoryError::Misaligned {
                        sentences: story.len(),
                        sets: terms.len(),
                    });
                }
                Ok(TrainingPair {
                    source: self.encode_source(terms)?,
                    target: self.encode_target(story)?,
                })
            })
            .collect::<Result<Vec<_>, StoryError>>()?;
        let history = self.model.train(&pairs, cfg)?;
        self.trained = true;
        Ok(history)
    }

    /// Binds the encoded term sequence for decoding.
    pub fn condition(&self, terms: &TermSequence) -> Result<ConditionedStoryModel<'_>, StoryError> {
        if !self.trained {
            return Err(StoryError::Untrained);
        }
        let memory = self.model.encode(&self.encode_source(terms)?)?;
        Ok(ConditionedStoryModel {
            inner: self,
            memory,
            total: terms.len() as u32,
        })
    }
}

/// A [`StoryModel`] with its encoder output fixed to one term sequence.
pub struct ConditionedStoryModel<'a> {
    inner: &'a StoryModel,
    memory: Memory,
    total: u32,
}

impl SentenceModel for ConditionedStoryModel<'_> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab.len()
    }

    fn stop_token(&self) -> TokenId {
        NEWLINE_ID
    }

    fn is_candidate(&self, token: TokenId) -> bool {
        token == NEWLINE_ID || !is_special(self.inner.vocab.token(token))
    }

    fn next_log_probs(
        &self,
        previous: &[Vec<TokenId>],
        current: &[TokenId],
        sentence: usize,
    ) -> Result<Vec<f64>, ModelError> {
        let mut prefix = EncodedSequence {
            total_segments: self.total,
            ..EncodedSequence::default()
        };
        for (i, s) in previous.iter().enumerate() {
            let seg = i as u32 + 1;
            for &t in s {
                prefix.push(t, seg);
            }
            prefix.push(NEWLINE_ID, seg);
        }
        let seg = sentence as u32 + 1;
        for &t in current {
            prefix.push(t, seg);
        }
        let dist = self.inner.model.next_distribution(&self.memory, &prefix, seg)?;
        Ok(dist.into_iter().map(libm::log).collect())
    }
}

/// Decodes one sentence per term set.
pub fn beam_generate(model: &StoryModel, terms: &TermSequence, cfg: &BeamConfig) -> Result<Story, StoryError> {
    let conditioned = model.condition(terms)?;
    let out = beam_search(&conditioned, terms.len(), cfg)?;
    Ok(Story::new(out.sentences.iter().map(|s| model.vocab.decode(s)).collect()))
}

/// Location of a mention: sentence index and token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.sentence == other.sentence && self.start < other.end && other.start < self.end
    }
}

/// Mentions of one entity and the mention that names it best.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorefCluster {
    pub representative: Span,
    pub mentions: Vec<Span>,
}

/// Coreference seam; swap in a neural resolver here.
pub trait CorefAnnotator {
    fn clusters(&self, story: &Story) -> Vec<CorefCluster>;
}

/// Head noun to subject pronoun.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PronounLexicon {
    heads: BTreeMap<String, String>,
}

const DEFAULT_PRONOUNS: &[(&str, &str)] = &[
    ("man", "he"), ("boy", "he"), ("father", "he"), ("dad", "he"), ("groom", "he"),
    ("husband", "he"), ("brother", "he"), ("son", "he"), ("grandfather", "he"),
    ("woman", "she"), ("girl", "she"), ("mother", "she"), ("mom", "she"), ("bride", "she"),
    ("wife", "she"), ("sister", "she"), ("daughter", "she"), ("grandmother", "she"),
    ("dog", "it"), ("cat", "it"), ("baby", "it"), ("car", "it"), ("ball", "it"),
    ("people", "they"), ("friends", "they"), ("kids", "they"), ("children", "they"),
    ("family", "they"), ("team", "they"), ("crowd", "they"), ("men", "they"), ("women", "they"),
];

/// Determiners that open a definite mention.
const DETERMINERS: &[&str] = &["the", "my", "our", "his", "her", "their"];

/// Object and possessive forms that may stand for each subject pronoun.
const PRONOUN_FORMS: &[(&str, &[&str])] = &[
    ("he", &["he", "him"]),
    ("she", &["she"]),
    ("it", &["it"]),
    ("they", &["they", "them"]),
];

impl Default for PronounLexicon {
    fn default() -> Self {
        DEFAULT_PRONOUNS.iter().copied().collect()
    }
}

impl<'a> FromIterator<(&'a str, &'a str)> for PronounLexicon {
    fn from_iter<I: IntoIterator<Item = (&'a str, &'a str)>>(iter: I) -> Self {
        PronounLexicon {
            heads: iter
                .into_iter()
                .map(|(h, p)| (h.to_lowercase(), p.to_lowercase()))
                .collect(),
        }
    }
}

impl PronounLexicon {
    pub fn pronoun_for(&self, head: &str) -> Option<&str> {
        self.heads.get(head).map(String::as_str)
    }

    pub fn is_pronoun(&self, token: &str) -> bool {
        self.heads.values().any(|p| forms(p).contains(&token))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.heads.iter().map(|(h, p)| (h.as_str(), p.as_str()))
    }
}

fn forms(pronoun: &str) -> &'static [&'static str] {
    PRONOUN_FORMS
        .iter()
        .find(|(p, _)| *p == pronoun)
        .map_or(&[], |(_, f)| *f)
}

/// Determiner plus head noun, e.g. `the man`.
fn mentions_in(story: &Story) -> Vec<Span> {
    let mut out = Vec::new();
    for (si, s) in story.sentences.iter().enumerate() {
        for i in 1..s.len() {
            if DETERMINERS.contains(&s[i - 1].as_str()) && !DETERMINERS.contains(&s[i].as_str()) {
                out.push(Span {
                    sentence: si,
                    start: i - 1,
                    end: i + 1,
                });
            }
        }
    }
    out
}

/// Links each pronoun to the closest earlier `determiner + noun` mention
/// whose head takes that pronoun.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleCoref {
    pub lexicon: PronounLexicon,
}

impl CorefAnnotator for RuleCoref {
    fn clusters(&self, story: &Story) -> Vec<CorefCluster> {
        let mentions = mentions_in(story);
        let mut clusters: Vec<CorefCluster> = Vec::new();
        let mut by_head: BTreeMap<String, usize> = BTreeMap::new();
        let mut last_for_pronoun: BTreeMap<String, usize> = BTreeMap::new();
        for (si, s) in story.sentences.iter().enumerate() {
            for (ti, tok) in s.iter().enumerate() {
                if let Some(m) = mentions.iter().find(|m| m.sentence == si && m.start == ti) {
                    let head = &s[m.end - 1];
                    if let Some(p) = self.lexicon.pronoun_for(head) {
                        let idx = *by_head.entry(head.clone()).or_insert_with(|| {
                            clusters.push(CorefCluster {
                                representative: *m,
                                mentions: Vec::new(),
                            });
                            clusters.len() - 1
                        });
                        clusters[idx].mentions.push(*m);
                        last_for_pronoun.insert(p.to_string(), idx);
                    }
                }
                let subject = PRONOUN_FORMS
                    .iter()
                    .find(|(_, f)| f.contains(&tok.as_str()))
                    .map(|(p, _)| *p);
                if let Some(idx) = subject.and_then(|p| last_for_pronoun.get(p)) {
                    clusters[*idx].mentions.push(Span {
                        sentence: si,
                        start: ti,
                        end: ti + 1,
                    });
                }
            }
        }
        clusters
    }
}

/// Replaces every clustered pronoun with its cluster's representative
/// mention. Where mentions of different clusters overlap, the longer one
/// wins.
pub fn preprocess_coref(story: &Story, annotator: &dyn CorefAnnotator, lexicon: &PronounLexicon) -> Story {
    let clusters = annotator.clusters(story);
    let mut replacements: BTreeMap<Span, Vec<String>> = BTreeMap::new();
    for (ci, c) in clusters.iter().enumerate() {
        let rep = &story.sentences[c.representative.sentence][c.representative.start..c.representative.end];
        for m in &c.mentions {
            let tokens = &story.sentences[m.sentence][m.start..m.end];
            if m.len() != 1 || !lexicon.is_pronoun(&tokens[0]) {
                continue;
            }
            let covered = clusters.iter().enumerate().any(|(cj, other)| {
                cj != ci && other.mentions.iter().any(|o| o.overlaps(m) && o.len() > m.len())
            });
            if covered {
                log::warn!("pronoun at sentence {} token {} sits inside a longer mention; left as is", m.sentence + 1, m.start);
                continue;
            }
            if replacements.insert(*m, rep.to_vec()).is_some() {
                log::warn!("pronoun at sentence {} token {} claimed by two clusters", m.sentence + 1, m.start);
            }
        }
    }
    let mut out = story.clone();
    for (span, rep) in replacements.into_iter().rev() {
        out.sentences[span.sentence].splice(span.start..span.end, rep);
    }
    out
}

/// Replaces the second and later occurrences of each `determiner + noun`
/// mention with the head's pronoun. Heads missing from the lexicon are left
/// alone.
pub fn postprocess_anaphora(story: &Story, lexicon: &PronounLexicon) -> Story {
    let mut seen: BTreeMap<(String, String), ()> = BTreeMap::new();
    let mut out = story.clone();
    for s in out.sentences.iter_mut() {
        let mut i = 0;
        let mut rebuilt: Vec<String> = Vec::with_capacity(s.len());
        while i < s.len() {
            if i + 1 < s.len() && DETERMINERS.contains(&s[i].as_str()) && !DETERMINERS.contains(&s[i + 1].as_str()) {
                if let Some(p) = lexicon.pronoun_for(&s[i + 1]) {
                    let key = (s[i].clone(), s[i + 1].clone());
                    if seen.insert(key, ()).is_some() {
                        rebuilt.push(p.to_string());
                        i += 2;
                        continue;
                    }
                }
            }
            rebuilt.push(s[i].clone());
            i += 1;
        }
        *s = rebuilt;
    }
    out
}

/// Everything `generate_story` needs besides the images.
pub struct StoryPipeline<'a, S: ?Sized> {
    pub predictor: &'a TermPredictor,
    pub scorer: &'a S,
    pub graph: &'a KnowledgeGraph,
    pub realizations: &'a RealizationTable,
    pub story_model: &'a StoryModel,
    pub pronouns: &'a PronounLexicon,
    pub beam: BeamConfig,
    pub top_objects: usize,
    pub path_cap: usize,
    pub postprocess: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStory {
    pub story: Story,
    pub terms: TermSequence,
    pub chosen: Option<RelationPath>,
    pub warnings: Vec<String>,
}

impl GeneratedStory {
    pub fn inserted_index(&self) -> Option<usize> {
        self.terms.inserted_index().map(|i| i + 1)
    }
}

/// Top objects, term prediction, knowledge enrichment, beam decoding and
/// pronoun post-processing.
pub fn generate_story<S>(images: &[ImageAnnotation], p: &StoryPipeline<'_, S>) -> Result<GeneratedStory, StoryError>
where
    S: PerplexityScorer + ?Sized,
    S::Error: core::fmt::Display,
{
    if images.len() != IMAGES_PER_SEQUENCE {
        return Err(StoryError::ImageCount {
            expected: IMAGES_PER_SEQUENCE,
            found: images.len(),
        });
    }
    let labels: Vec<Vec<String>> = images.iter().map(|a| select_top_objects(a, p.top_objects)).collect();
    let terms = predict_terms(&labels, p.predictor)?;
    let enriched = enrich(&terms, p.graph, p.realizations, p.scorer, p.path_cap)?;
    let mut warnings = Vec::new();
    if enriched.chosen.is_none() {
        let msg = "no knowledge-graph path between adjacent term sets; keeping five sets".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let conditioned = p.story_model.condition(&enriched.sequence)?;
    let out = beam_search(&conditioned, enriched.sequence.len(), &p.beam)?;
    if out.fallbacks > 0 {
        warnings.push(format!("{} sentence(s) decoded without penalties after pruning", out.fallbacks));
    }
    let mut story = Story::new(out.sentences.iter().map(|s| p.story_model.vocab.decode(s)).collect());
    if p.postprocess {
        story = postprocess_anaphora(&story, p.pronouns);
    }
    Ok(GeneratedStory {
        story,
        terms: enriched.sequence,
        chosen: enriched.chosen,
        warnings,
    })
}
