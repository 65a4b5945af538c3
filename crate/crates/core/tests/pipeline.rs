//! Images to story to question, in process, with tiny models.

use storyq_core::corpus::{Detection, ImageAnnotation, QaPair};
use storyq_core::kglink::{index_graph, KnowledgeTriple, RealizationTable};
use storyq_core::lm::train_ngram;
use storyq_core::qgen::{generate_question, QuestionModel, SampleConfig, StopReason};
use storyq_core::seq2seq::{DecoderKind, ModelConfig, TrainConfig};
use storyq_core::storygen::{generate_story, BeamConfig, PronounLexicon, Story, StoryModel, StoryPipeline};
use storyq_core::termspace::{
    parse_sentences_to_terms, select_top_objects, FrameLexicon, LexiconAnnotator, Tag, TermPredictor,
};
use storyq_core::vocab::tokenize;

const LABELS: [[&str; 2]; 5] = [["dog", "beach"], ["dog", "ball"], ["man", "ball"], ["cake", "table"], ["house", "car"]];

const SENTENCES: [&str; 5] = [
    "The dog ran on the beach.",
    "The dog found a ball.",
    "A man threw the ball.",
    "We ate cake at the table.",
    "Then we drove home in the car.",
];

fn images() -> Vec<ImageAnnotation> {
    LABELS
        .iter()
        .enumerate()
        .map(|(i, labels)| ImageAnnotation {
            image_id: format!("img{i}"),
            detections: labels
                .iter()
                .map(|l| Detection {
                    label: l.to_string(),
                    confidence: 0.9,
                })
                .collect(),
        })
        .collect()
}

fn model(kind: DecoderKind) -> ModelConfig {
    ModelConfig {
        hidden_size: 16,
        num_heads: 2,
        num_layers: 1,
        ffn_size: 32,
        max_positions: 128,
        dropout: 0.0,
        decoder_kind: kind,
        seed: 5,
    }
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        epochs: 20,
        batch_size: 1,
        ..TrainConfig::default()
    }
}

fn run_pipeline() -> (Story, Vec<String>, StopReason) {
    let mut annotator = LexiconAnnotator::with_defaults();
    for labels in LABELS {
        for l in labels {
            annotator.insert(l, Tag::Noun);
        }
    }
    let mut frames = FrameLexicon::default();
    frames.insert("ran", "self_motion");
    frames.insert("ate", "ingestion");

    let gold = parse_sentences_to_terms(&SENTENCES, &annotator, &frames).unwrap().sequence;
    let images = images();
    let labels: Vec<Vec<String>> = images.iter().map(|a| select_top_objects(a, 5)).collect();
    let term_ex = vec![(labels, gold.clone())];
    let mut predictor = TermPredictor::for_examples(&term_ex, model(DecoderKind::RecurrentWithAttention), 1).unwrap();
    predictor.train(&term_ex, &train_cfg()).unwrap();

    let story_ex = vec![(gold, Story::from_text(&SENTENCES))];
    let mut story_model = StoryModel::for_examples(&story_ex, model(DecoderKind::SelfAttention), 1).unwrap();
    story_model.train(&story_ex, &train_cfg()).unwrap();

    let lm = train_ngram(&SENTENCES.iter().map(|s| tokenize(s)).collect::<Vec<_>>(), 2, 0.1).unwrap();
    let graph = index_graph(vec![
        KnowledgeTriple::new("dog", "at_location", "beach").unwrap(),
        KnowledgeTriple::new("ball", "used_by", "man").unwrap(),
        KnowledgeTriple::new("cake", "at_location", "table").unwrap(),
        KnowledgeTriple::new("table", "part_of", "house").unwrap(),
    ]);
    let realizations = RealizationTable::default();
    let pronouns = PronounLexicon::default();
    let pipeline = StoryPipeline {
        predictor: &predictor,
        scorer: &lm,
        graph: &graph,
        realizations: &realizations,
        story_model: &story_model,
        pronouns: &pronouns,
        beam: BeamConfig {
            beam_width: 2,
            max_sentence_tokens: 10,
            ..BeamConfig::default()
        },
        top_objects: 5,
        path_cap: 5000,
        postprocess: true,
    };
    let generated = generate_story(&images, &pipeline).unwrap();

    let qa = vec![QaPair {
        context: SENTENCES[..2].join(" "),
        questions: vec!["What did the dog find?".into()],
    }];
    let mut questions = QuestionModel::for_pairs(&qa, &[], model(DecoderKind::SelfAttention), 1).unwrap();
    questions.train(&qa, &train_cfg()).unwrap();
    let q = generate_question(&questions, &generated.story, &SampleConfig::default()).unwrap();
    (generated.story, q.tokens, q.stop_reason)
}

#[test]
fn images_to_story_to_question() {
    let (story, question, stop) = run_pipeline();
    assert!(story.len() == 5 || story.len() == 6, "{} sentences", story.len());
    assert!(story.text().iter().all(|s| !s.is_empty()));
    assert!(question.len() <= 26);
    if question.len() < 26 {
        assert_eq!(stop, StopReason::Newline);
    }
}

#[test]
fn pipeline_is_deterministic() {
    assert_eq!(run_pipeline(), run_pipeline());
}
