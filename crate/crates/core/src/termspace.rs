//! Per-image term sets: gold extraction from stories and prediction from
//! detected object labels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ImageAnnotation, StorySample, IMAGES_PER_SEQUENCE};
use crate::seq2seq::{
    encode_positions, EncodedSequence, EpochLoss, ModelConfig, ModelError, Seq2Seq, TrainConfig,
    TrainingPair,
};
use crate::vocab::{tokenize, TokenId, Vocab, NEWLINE_ID};

/// Default number of detections kept per image.
pub const TOP_OBJECTS: usize = 25;
/// Default cap on decoded terms per set.
pub const MAX_TERMS_PER_SET: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TermError {
    #[error("expected {expected} term sets, found {found}")]
    SetCount { expected: usize, found: usize },
    #[error("a term sequence may hold at most one inserted set")]
    MultipleInserted,
    #[error("term sequence already expanded to six sets")]
    AlreadyExpanded,
    #[error("term predictor has not been trained")]
    Untrained,
    #[error("no training stories")]
    NoTrainingData,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    ObjectNoun,
    SemanticFrame,
    /// Relation label from a knowledge-graph bridge.
    Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Term {
    pub surface: String,
    pub kind: TermKind,
}

impl Term {
    /// Lowercases the surface form.
    pub fn new(surface: &str, kind: TermKind) -> Self {
        Term {
            surface: surface.trim().to_lowercase(),
            kind,
        }
    }

    pub fn noun(surface: &str) -> Self {
        Term::new(surface, TermKind::ObjectNoun)
    }

    pub fn frame(surface: &str) -> Self {
        Term::new(surface, TermKind::SemanticFrame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSet {
    /// 1-based position within its sequence.
    pub image_index: usize,
    pub terms: Vec<Term>,
    #[serde(default)]
    pub inserted: bool,
}

impl TermSet {
    pub fn new(image_index: usize, terms: Vec<Term>) -> Self {
        TermSet {
            image_index,
            terms,
            inserted: false,
        }
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|t| t.surface.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSequence {
    pub sets: Vec<TermSet>,
}

impl TermSequence {
    /// Wraps five or six sets and renumbers them `1..=len`.
    pub fn new(mut sets: Vec<TermSet>) -> Result<Self, TermError> {
        for (i, s) in sets.iter_mut().enumerate() {
            s.image_index = i + 1;
        }
        let seq = TermSequence { sets };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), TermError> {
        let inserted = self.sets.iter().filter(|s| s.inserted).count();
        if inserted > 1 {
            return Err(TermError::MultipleInserted);
        }
        let expected = IMAGES_PER_SEQUENCE + inserted;
        if self.sets.len() != expected {
            return Err(TermError::SetCount {
                expected,
                found: self.sets.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn inserted_index(&self) -> Option<usize> {
        self.sets.iter().position(|s| s.inserted)
    }
}

/// Labels of the `k` most confident detections, ties broken by label.
pub fn select_top_objects(ann: &ImageAnnotation, k: usize) -> Vec<String> {
    let mut dets: Vec<_> = ann.detections.iter().collect();
    dets.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    dets.into_iter().take(k).map(|d| d.label.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Noun,
    Verb,
    Other,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("annotation failed: {0}")]
pub struct AnnotationError(pub String);

/// Part-of-speech tagging seam; swap in a real tagger here.
pub trait LinguisticAnnotator {
    fn annotate(&self, sentence: &str) -> Result<Vec<(String, Tag)>, AnnotationError>;
}

/// Closed-lexicon tagger: a word is a noun or verb only if listed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexiconAnnotator {
    pub tags: BTreeMap<String, Tag>,
}

/// Everyday nouns that show up in photo-album stories.
const DEFAULT_NOUNS: &[&str] = &[
    "baby", "ball", "beach", "bench", "bike", "bird", "boat", "boy", "bride", "building", "cake",
    "car", "cat", "child", "children", "church", "city", "crowd", "day", "dinner", "dog", "door",
    "family", "father", "field", "flower", "flowers", "food", "friend", "friends", "game", "girl",
    "grass", "groom", "group", "hat", "home", "house", "kids", "lake", "man", "men", "mother",
    "mountain", "net", "night", "ocean", "park", "party", "people", "picture", "player", "road",
    "room", "sand", "shirt", "sky", "snow", "street", "sun", "table", "team", "tree", "trees",
    "view", "water", "wedding", "woman", "women", "fair", "craft",
];

/// Common story verbs, tagged so frame lookup sees them.
const DEFAULT_VERBS: &[&str] = &[
    "ate", "came", "danced", "drove", "enjoyed", "gathered", "had", "held", "hold", "holds",
    "looked", "made", "met", "played", "ran", "runs", "sat", "saw", "smiled", "swam", "took",
    "walked", "went", "arrived", "celebrated", "visited",
];

impl LexiconAnnotator {
    pub fn with_defaults() -> Self {
        let mut tags = BTreeMap::new();
        for n in DEFAULT_NOUNS {
            tags.insert(n.to_string(), Tag::Noun);
        }
        for v in DEFAULT_VERBS {
            tags.insert(v.to_string(), Tag::Verb);
        }
        LexiconAnnotator { tags }
    }

    pub fn insert(&mut self, word: &str, tag: Tag) {
        self.tags.insert(word.to_lowercase(), tag);
    }
}

impl LinguisticAnnotator for LexiconAnnotator {
    fn annotate(&self, sentence: &str) -> Result<Vec<(String, Tag)>, AnnotationError> {
        Ok(tokenize(sentence)
            .into_iter()
            .map(|t| {
                let tag = self.tags.get(&t).copied().unwrap_or(Tag::Other);
                (t, tag)
            })
            .collect())
    }
}

/// Verb to semantic-frame table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameLexicon {
    frames: BTreeMap<String, String>,
}

impl FrameLexicon {
    pub fn insert(&mut self, verb: &str, frame: &str) {
        self.frames.insert(verb.to_lowercase(), frame.to_lowercase());
    }

    pub fn frame(&self, verb: &str) -> Option<&str> {
        self.frames.get(&verb.to_lowercase()).map(String::as_str)
    }

    /// Whether `label` is a frame this lexicon can produce.
    pub fn has_frame(&self, label: &str) -> bool {
        let label = label.to_lowercase();
        self.frames.values().any(|f| *f == label)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.frames.iter().map(|(v, f)| (v.as_str(), f.as_str()))
    }
}

impl<'a> FromIterator<(&'a str, &'a str)> for FrameLexicon {
    fn from_iter<I: IntoIterator<Item = (&'a str, &'a str)>>(iter: I) -> Self {
        let mut lex = FrameLexicon::default();
        for (v, f) in iter {
            lex.insert(v, f);
        }
        lex
    }
}

/// Gold term sequence of a story plus the number of sentences the annotator
/// failed on.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTerms {
    pub sequence: TermSequence,
    pub failures: usize,
}

/// One term set per sentence: nouns from the annotator and frames for
/// verbs the lexicon knows, in sentence order.
pub fn parse_story_to_terms(
    sample: &StorySample,
    annotator: &dyn LinguisticAnnotator,
    frames: &FrameLexicon,
) -> Result<ParsedTerms, TermError> {
    parse_sentences_to_terms(&sample.sentences, annotator, frames)
}

pub fn parse_sentences_to_terms<S: AsRef<str>>(
    sentences: &[S],
    annotator: &dyn LinguisticAnnotator,
    frames: &FrameLexicon,
) -> Result<ParsedTerms, TermError> {
    if sentences.len() != IMAGES_PER_SEQUENCE {
        return Err(TermError::SetCount {
            expected: IMAGES_PER_SEQUENCE,
            found: sentences.len(),
        });
    }
    let mut failures = 0;
    let mut sets = Vec::with_capacity(sentences.len());
    for (i, sentence) in sentences.iter().enumerate() {
        let terms = match annotator.annotate(sentence.as_ref()) {
            Ok(tagged) => tagged
                .iter()
                .filter_map(|(word, tag)| match tag {
                    Tag::Noun => Some(Term::noun(word)),
                    Tag::Verb => frames.frame(word).map(Term::frame),
                    Tag::Other => None,
                })
                .collect(),
            Err(e) => {
                log::warn!("sentence {}: {e}; using an empty term set", i + 1);
                failures += 1;
                Vec::new()
            }
        };
        sets.push(TermSet::new(i + 1, terms));
    }
    Ok(ParsedTerms {
        sequence: TermSequence::new(sets)?,
        failures,
    })
}

/// Recurrent-decoder seq2seq mapping detected labels to term sets.
///
/// The source holds each image's labels as one segment; the target holds
/// each image's terms followed by `<newline>`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermPredictor {
    pub vocab: Vocab,
    pub model: Seq2Seq,
    /// Surfaces that decode as semantic frames rather than nouns.
    pub frame_labels: BTreeSet<String>,
    pub max_terms_per_set: usize,
    pub trained: bool,
}

impl TermPredictor {
    pub fn new(vocab: Vocab, config: ModelConfig, frame_labels: BTreeSet<String>) -> Result<Self, TermError> {
        let model = Seq2Seq::new(config, vocab.len())?;
        Ok(TermPredictor {
            vocab,
            model,
            frame_labels,
            max_terms_per_set: MAX_TERMS_PER_SET,
            trained: false,
        })
    }

    /// Builds the vocabulary from labels and gold terms of `examples`.
    pub fn for_examples(
        examples: &[(Vec<Vec<String>>, TermSequence)],
        config: ModelConfig,
        min_count: usize,
    ) -> Result<Self, TermError> {
        let mut streams: Vec<Vec<String>> = Vec::new();
        let mut frames = BTreeSet::new();
        for (labels, terms) in examples {
            streams.push(labels.iter().flatten().cloned().collect());
            streams.push(terms.sets.iter().flat_map(|s| s.surfaces().map(str::to_string)).collect());
            for t in terms.sets.iter().flat_map(|s| &s.terms) {
                if t.kind == TermKind::SemanticFrame {
                    frames.insert(t.surface.clone());
                }
            }
        }
        let vocab = Vocab::build(streams, min_count);
        TermPredictor::new(vocab, config, frames)
    }

    pub fn encode_source<S: AsRef<str>>(&self, labels: &[Vec<S>]) -> Result<EncodedSequence, TermError> {
        let segs: Vec<Vec<TokenId>> = labels.iter().map(|l| self.vocab.encode(l)).collect();
        Ok(encode_positions(&segs, IMAGES_PER_SEQUENCE as u32)?)
    }

    pub fn encode_target(&self, terms: &TermSequence) -> Result<EncodedSequence, TermError> {
        let segs: Vec<Vec<TokenId>> = terms
            .sets
            .iter()
            .map(|s| {
                let mut ids: Vec<TokenId> = s
                    .surfaces()
                    .take(self.max_terms_per_set)
                    .map(|t| self.vocab.id(t))
                    .collect();
                ids.push(NEWLINE_ID);
                ids
            })
            .collect();
        Ok(encode_positions(&segs, terms.len() as u32)?)
    }

    pub fn train(
        &mut self,
        examples: &[(Vec<Vec<String>>, TermSequence)],
        cfg: &TrainConfig,
    ) -> Result<Vec<EpochLoss>, TermError> {
        if examples.is_empty() {
            return Err(TermError::NoTrainingData);
        }
        let pairs = examples
            .iter()
            .map(|(labels, terms)| {
                Ok(TrainingPair {
                    source: self.encode_source(labels)?,
                    target: self.encode_target(terms)?,
                })
            })
            .collect::<Result<Vec<_>, TermError>>()?;
        let history = self.model.train(&pairs, cfg)?;
        self.trained = true;
        Ok(history)
    }

    fn term_for(&self, id: TokenId) -> Term {
        let surface = self.vocab.token(id);
        if self.frame_labels.contains(surface) {
            Term::frame(surface)
        } else {
            Term::noun(surface)
        }
    }
}

/// Greedily decodes five term sets from five images' object labels.
pub fn predict_terms<S: AsRef<str>>(
    objects_per_image: &[Vec<S>],
    predictor: &TermPredictor,
) -> Result<TermSequence, TermError> {
    if !predictor.trained {
        return Err(TermError::Untrained);
    }
    if objects_per_image.len() != IMAGES_PER_SEQUENCE {
        return Err(TermError::SetCount {
            expected: IMAGES_PER_SEQUENCE,
            found: objects_per_image.len(),
        });
    }
    let source = predictor.encode_source(objects_per_image)?;
    let memory = predictor.model.encode(&source)?;
    let mut prefix = EncodedSequence {
        total_segments: IMAGES_PER_SEQUENCE as u32,
        ..EncodedSequence::default()
    };
    let mut sets = Vec::with_capacity(IMAGES_PER_SEQUENCE);
    for t in 1..=IMAGES_PER_SEQUENCE as u32 {
        let decoded = predictor.model.greedy_segment(
            &memory,
            &mut prefix,
            t,
            NEWLINE_ID,
            predictor.max_terms_per_set,
        )?;
        if decoded.last() != Some(&NEWLINE_ID) {
            // Cap reached: close the set so the next one starts cleanly.
            prefix.push(NEWLINE_ID, t);
        }
        let terms = decoded
            .into_iter()
            .filter(|&id| id != NEWLINE_ID && !crate::vocab::is_special(predictor.vocab.token(id)))
            .map(|id| predictor.term_for(id))
            .collect();
        sets.push(TermSet::new(t as usize, terms));
    }
    TermSequence::new(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Detection;
    use crate::seq2seq::DecoderKind;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn ann(dets: &[(&str, f64)]) -> ImageAnnotation {
        ImageAnnotation {
            image_id: "img".into(),
            detections: dets
                .iter()
                .map(|(l, c)| Detection {
                    label: l.to_string(),
                    confidence: *c,
                })
                .collect(),
        }
    }

    #[test]
    fn top_25_of_30() {
        let dets: Vec<(String, f64)> = (0..30).map(|i| (format!("obj{i:02}"), (i as f64) / 30.0)).collect();
        let a = ann(&dets.iter().map(|(l, c)| (l.as_str(), *c)).collect::<Vec<_>>());
        let top = select_top_objects(&a, TOP_OBJECTS);
        assert_eq!(top.len(), 25);
        // The 26th most confident is obj04 (confidence 4/30).
        let floor = 4.0 / 30.0;
        for l in &top {
            let c = a.detections.iter().find(|d| &d.label == l).unwrap().confidence;
            assert!(c >= floor);
        }
        assert!(!top.contains(&"obj04".to_string()));
    }

    #[test]
    fn fewer_than_k_and_ties() {
        assert_eq!(select_top_objects(&ann(&[("x", 0.1), ("y", 0.9), ("z", 0.5)]), 25).len(), 3);
        assert_eq!(select_top_objects(&ann(&[("b", 0.5), ("a", 0.5)]), 1), vec!["a"]);
    }

    proptest! {
        #[test]
        fn top_objects_sorted_and_sized(
            dets in proptest::collection::vec(("[a-e]{1,2}", 0.0f64..=1.0), 0..40),
            k in 1usize..30,
        ) {
            let a = ann(&dets.iter().map(|(l, c)| (l.as_str(), *c)).collect::<Vec<_>>());
            let top = select_top_objects(&a, k);
            prop_assert_eq!(top.len(), k.min(dets.len()));
            let mut sorted: Vec<(f64, String)> = dets.iter().map(|(l, c)| (*c, l.clone())).collect();
            sorted.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then_with(|| x.1.cmp(&y.1)));
            let expect: Vec<String> = sorted.into_iter().take(k).map(|(_, l)| l).collect();
            prop_assert_eq!(top, expect);
        }
    }

    fn lexicon() -> FrameLexicon {
        [("ran", "Self_motion"), ("sat", "Posture"), ("ate", "Ingestion")].into_iter().collect()
    }

    fn story(sentences: [&str; 5]) -> StorySample {
        StorySample {
            sequence_id: "s1".into(),
            images: vec![ann(&[]); 5],
            sentences: sentences.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn parse_the_dog_ran() {
        let parsed = parse_story_to_terms(
            &story(["the dog ran", "", "a man sat on the bench", "we ate cake", "the end"]),
            &LexiconAnnotator::with_defaults(),
            &lexicon(),
        )
        .unwrap();
        assert_eq!(parsed.sequence.len(), 5);
        assert_eq!(parsed.sequence.sets[0].terms, vec![Term::noun("dog"), Term::frame("self_motion")]);
        assert!(parsed.sequence.sets[1].terms.is_empty());
        assert_eq!(
            parsed.sequence.sets[2].terms,
            vec![Term::noun("man"), Term::frame("posture"), Term::noun("bench")]
        );
        assert_eq!(parsed.failures, 0);
    }

    struct Flaky;
    impl LinguisticAnnotator for Flaky {
        fn annotate(&self, sentence: &str) -> Result<Vec<(String, Tag)>, AnnotationError> {
            if sentence.contains("boom") {
                Err(AnnotationError("boom".into()))
            } else {
                LexiconAnnotator::with_defaults().annotate(sentence)
            }
        }
    }

    #[test]
    fn annotator_failure_gives_empty_set() {
        let parsed =
            parse_story_to_terms(&story(["the dog ran", "boom", "x", "y", "z"]), &Flaky, &lexicon()).unwrap();
        assert!(parsed.sequence.sets[1].terms.is_empty());
        assert_eq!(parsed.failures, 1);
    }

    proptest! {
        #[test]
        fn frames_come_from_the_lexicon(words in proptest::collection::vec("(ran|sat|ate|went|dog|park|zz)", 0..12)) {
            let sentence = words.join(" ");
            let mut ann = LexiconAnnotator::with_defaults();
            ann.insert("went", Tag::Verb);
            let lex = lexicon();
            let parsed = parse_sentences_to_terms(&[sentence.as_str(), "", "", "", ""], &ann, &lex).unwrap();
            for t in parsed.sequence.sets.iter().flat_map(|s| &s.terms) {
                if t.kind == TermKind::SemanticFrame {
                    prop_assert!(lex.has_frame(&t.surface));
                }
            }
        }
    }

    fn tiny_predictor(examples: &[(Vec<Vec<String>>, TermSequence)]) -> TermPredictor {
        let cfg = ModelConfig {
            hidden_size: 32,
            num_heads: 2,
            num_layers: 1,
            ffn_size: 64,
            max_positions: 64,
            dropout: 0.0,
            decoder_kind: DecoderKind::RecurrentWithAttention,
            seed: 3,
        };
        TermPredictor::for_examples(examples, cfg, 1).unwrap()
    }

    fn example() -> (Vec<Vec<String>>, TermSequence) {
        let labels: Vec<Vec<String>> = [["dog", "grass"], ["man", "ball"], ["tree", "sky"], ["car", "road"], ["cake", "table"]]
            .iter()
            .map(|l| l.iter().map(|s| s.to_string()).collect())
            .collect();
        let sets = vec![
            TermSet::new(1, vec![Term::noun("dog"), Term::frame("self_motion")]),
            TermSet::new(2, vec![Term::noun("man")]),
            TermSet::new(3, vec![]),
            TermSet::new(4, vec![Term::noun("car"), Term::noun("road")]),
            TermSet::new(5, vec![Term::frame("ingestion"), Term::noun("cake")]),
        ];
        (labels, TermSequence::new(sets).unwrap())
    }

    #[test]
    fn untrained_predictor_is_rejected() {
        let ex = example();
        let p = tiny_predictor(std::slice::from_ref(&ex));
        assert_eq!(predict_terms(&ex.0, &p), Err(TermError::Untrained));
    }

    #[test]
    fn empty_labels_give_five_sets() {
        let ex = example();
        let mut p = tiny_predictor(std::slice::from_ref(&ex));
        p.trained = true;
        let empty: Vec<Vec<String>> = vec![Vec::new(); 5];
        let out = predict_terms(&empty, &p).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.sets.iter().all(|s| !s.inserted && s.terms.len() <= MAX_TERMS_PER_SET));
        assert_eq!(out, predict_terms(&empty, &p).unwrap());
    }

    #[test]
    fn memorizes_one_pair() {
        let ex = example();
        let mut p = tiny_predictor(std::slice::from_ref(&ex));
        let cfg = TrainConfig {
            learning_rate: 3e-3,
            epochs: 300,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let history = p.train(std::slice::from_ref(&ex), &cfg).unwrap();
        assert!(history.last().unwrap().mean_loss < 0.01, "{:?}", history.last());
        assert_eq!(predict_terms(&ex.0, &p).unwrap(), ex.1);
    }
}
