//! Acceptance suite: one numbered check per criterion, each printing a
//! PASS/FAIL line with the measured values. Tolerances are fixed here.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use storyq::commands::{story_examples, term_examples};
use storyq_core::corpus::{ImageAnnotation, QaPair, StorySample};
use storyq_core::evalkit::{aggregate_ranks, distribution, QuestionRecord, RankingRecord};
use storyq_core::kglink::{enumerate_paths, index_graph, KnowledgeGraph, KnowledgeTriple, RealizationTable};
use storyq_core::lm::{train_ngram, train_ngram_with_vocab, NGramLm};
use storyq_core::qgen::{generate_question, nucleus_filter, nucleus_support, sample_index, QuestionModel, SampleConfig, StopReason};
use storyq_core::rng::seeded;
use storyq_core::seq2seq::{encode_positions, gradient_check, DecoderKind, ModelConfig, Seq2Seq, TrainConfig, TrainingPair};
use storyq_core::storygen::{
    beam_generate, generate_story, BeamConfig, PronounLexicon, SentenceModel, Story, StoryModel, StoryPipeline,
};
use storyq_core::termspace::{predict_terms, FrameLexicon, Term, TermPredictor, TermSequence, TermSet};
use storyq_core::vocab::{tokenize, TokenId, Vocab};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

// 1. Rank table.

fn table1() -> Outcome {
    let start = Instant::now();
    let records: Vec<RankingRecord> = rankings_from_counts(&TABLE1_COUNTS)
        .iter()
        .enumerate()
        .map(|(i, ranks)| RankingRecord {
            sequence_id: format!("seq{}", i / 5),
            worker_id: format!("w{}", i % 5),
            ranks: TABLE1_METHODS.iter().map(|m| m.to_string()).zip(ranks.iter().copied()).collect(),
        })
        .collect();
    let agg = aggregate_ranks(&records).map_err(|e| e.to_string())?;
    within(start.elapsed(), Duration::from_secs(1))?;
    let published = [("img2Q", 2.30), ("caption2Q", 1.91), ("story2Q", 1.78)];
    let mut detail = format!("N={}", agg.n);
    let mut ok = agg.n == 1250;
    for (m, want) in published {
        let got = agg.method(m).ok_or(format!("{m} missing"))?.avg_rank;
        ok &= (got - want).abs() <= 0.005;
        detail.push_str(&format!(" {m}={got:.4} (want {want} +-0.005)"));
    }
    ensure(ok, detail)
}

// 2. Question-type table.

fn table2() -> Outcome {
    let start = Instant::now();
    let published: [(&str, [f64; 7]); 3] = [
        ("img2Q", [70.7, 1.4, 5.1, 3.0, 0.0, 13.8, 6.0]),
        ("caption2Q", [79.2, 1.1, 2.7, 3.7, 0.0, 7.6, 5.7]),
        ("story2Q", [55.5, 5.6, 11.6, 15.3, 1.0, 6.3, 4.7]),
    ];
    let openers = ["what", "where", "when", "why", "who", "how", "is"];
    let mut records = Vec::new();
    for (method, pct) in &published {
        // 1000 questions per method.
        for (opener, p) in openers.iter().zip(pct) {
            for i in 0..(p * 10.0).round() as usize {
                records.push(QuestionRecord {
                    sequence_id: format!("{method}-{opener}-{i}"),
                    method: method.to_string(),
                    question: format!("{opener} did they see at the park ?"),
                });
            }
        }
    }
    let rows = distribution(&records);
    within(start.elapsed(), Duration::from_secs(1))?;
    let mut worst: f64 = 0.0;
    for (method, pct) in &published {
        let row = rows.iter().find(|r| r.method == *method).ok_or(format!("{method} missing"))?;
        for (got, want) in row.percentages.iter().zip(pct) {
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 0.1, format!("21 cells, max |diff| = {worst:.3} (tolerance 0.1)"))
}

// 3. Path enumeration against nested loops.

type PathKey = (String, Vec<String>, Option<String>, String);

fn brute_force_paths(a: &[String], b: &[String], triples: &[KnowledgeTriple]) -> BTreeSet<PathKey> {
    let in_a = |e: &str| a.iter().any(|t| t == e);
    let in_b = |e: &str| b.iter().any(|t| t == e);
    let mut out = BTreeSet::new();
    for t1 in triples {
        if !in_a(&t1.subject) {
            continue;
        }
        if in_b(&t1.object) {
            out.insert((t1.subject.clone(), vec![t1.relation.clone()], None, t1.object.clone()));
        }
        for t2 in triples {
            let m = &t1.object;
            if t2.subject == *m && in_b(&t2.object) && !in_a(m) && !in_b(m) {
                out.insert((
                    t1.subject.clone(),
                    vec![t1.relation.clone(), t2.relation.clone()],
                    Some(m.clone()),
                    t2.object.clone(),
                ));
            }
        }
    }
    out
}

fn path_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(3);
    let mut total_paths = 0;
    for g in 0..100 {
        let n_entities = rng.gen_range(2..=50);
        let n_triples = rng.gen_range(0..=200);
        let relations = ["at_location", "used_for", "part_of", "desires", "has"];
        let triples: Vec<KnowledgeTriple> = (0..n_triples)
            .map(|_| {
                let s = format!("e{}", rng.gen_range(0..n_entities));
                let o = format!("e{}", rng.gen_range(0..n_entities));
                KnowledgeTriple::new(&s, relations.choose(&mut rng).unwrap(), &o).unwrap()
            })
            .collect();
        let kg = index_graph(triples.clone());
        let draw_set = |rng: &mut storyq_core::rng::StreamRng| -> Vec<String> {
            // Some terms fall outside the graph.
            (0..rng.gen_range(0..=8)).map(|_| format!("e{}", rng.gen_range(0..n_entities + 5))).collect()
        };
        let a = draw_set(&mut rng);
        let b = draw_set(&mut rng);
        let set = |i, terms: &[String]| TermSet::new(i, terms.iter().map(|t| Term::noun(t)).collect());
        let got: BTreeSet<PathKey> = enumerate_paths(&set(1, &a), &set(2, &b), &kg)
            .into_iter()
            .map(|p| (p.anchor_terms.0, p.relations, p.middle, p.anchor_terms.1))
            .collect();
        let want = brute_force_paths(&a, &b, &triples);
        if got != want {
            return Err(format!("graph {g}: {} paths enumerated, {} by brute force", got.len(), want.len()));
        }
        total_paths += want.len();
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("100 graphs, {total_paths} paths, all equal"))
}

// 4. Perplexity by hand.

fn perplexity_hand_check() -> Outcome {
    let corpus = |lines: &[&str]| -> Vec<Vec<String>> {
        lines.iter().map(|l| l.split_whitespace().map(String::from).collect()).collect()
    };
    let lm = train_ngram(&corpus(&["a b", "a c"]), 2, 1.0).map_err(|e| e.to_string())?;
    let (a, b) = (lm.vocab().id("a"), lm.vocab().id("b"));
    let p_ba = lm.prob(&[a], b);
    // Outcomes a, b, c, <unk>, <eos>: p(a|<bos>) = 3/7, p(b|a) = 2/7,
    // p(<eos>|b) = 2/6.
    let want = (-((3.0f64 / 7.0).ln() + (2.0f64 / 7.0).ln() + (2.0f64 / 6.0).ln()) / 3.0).exp();
    let got = lm.perplexity(&["a", "b"]).map_err(|e| e.to_string())?;
    let rel = (got - want).abs() / want;

    let uniform = train_ngram_with_vocab(&corpus(&["a b u"]), 1, 0.5, Vocab::from_tokens(["a", "b"]))
        .map_err(|e| e.to_string())?;
    let v = uniform.outcome_count() as f64;
    let u = uniform.perplexity(&["b", "a", "a"]).map_err(|e| e.to_string())?;
    let u_rel = (u - v).abs() / v;
    ensure(
        p_ba == 2.0 / 7.0 && rel <= 1e-12 && u_rel <= 1e-12,
        format!("p(b|a)={p_ba} (2/7), ppl rel err {rel:.1e}, uniform ppl {u} vs |V|={v} (rel {u_rel:.1e}, tolerance 1e-12)"),
    )
}

// 5. Nucleus support and sampling frequencies.

fn nucleus() -> Outcome {
    let mut rng = seeded(5);
    let mut worst_freq: f64 = 0.0;
    for d in 0..50 {
        let n = rng.gen_range(2..=20);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64).powi(2)).collect();
        let z: f64 = raw.iter().sum();
        let dist: Vec<f64> = raw.iter().map(|x| x / z).collect();
        for p in [0.5, 0.9, 1.0] {
            // Exhaustive scan: the first prefix of the sorted order whose
            // mass reaches p.
            let mut order: Vec<usize> = (0..n).filter(|&i| dist[i] > 0.0).collect();
            order.sort_by(|&x, &y| dist[y].total_cmp(&dist[x]).then(x.cmp(&y)));
            let k = (1..=order.len())
                .find(|&k| order[..k].iter().map(|&i| dist[i]).sum::<f64>() >= p - 1e-12)
                .unwrap_or(order.len());
            let want: BTreeSet<usize> = order[..k].iter().copied().collect();
            let got: BTreeSet<usize> = nucleus_support(&dist, p).into_iter().collect();
            if got != want {
                return Err(format!("distribution {d}, p={p}: support {got:?}, want {want:?}"));
            }
            let filtered = nucleus_filter(&dist, p);
            let mut counts = vec![0usize; n];
            for _ in 0..100_000 {
                counts[sample_index(&filtered, &mut rng).map_err(|e| e.to_string())?] += 1;
            }
            for (c, q) in counts.iter().zip(&filtered) {
                worst_freq = worst_freq.max((*c as f64 / 100_000.0 - q).abs());
            }
        }
    }
    ensure(
        worst_freq <= 0.01,
        format!("150 supports minimal, max |freq - p| = {worst_freq:.4} over 100000 draws (tolerance 0.01)"),
    )
}

// 6. Gradient check.

fn gradients() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for kind in [DecoderKind::SelfAttention, DecoderKind::RecurrentWithAttention] {
        let cfg = ModelConfig {
            hidden_size: 16,
            num_heads: 2,
            num_layers: 2,
            ffn_size: 32,
            max_positions: 32,
            dropout: 0.0,
            decoder_kind: kind,
            seed: 17,
        };
        let model = Seq2Seq::new(cfg, 24).map_err(|e| e.to_string())?;
        let params = model.parameter_count();
        let sample = TrainingPair {
            source: encode_positions(&[vec![6, 7, 8], vec![9, 10], vec![11], vec![12, 13], vec![14]], 5)
                .map_err(|e| e.to_string())?,
            target: encode_positions(&[vec![15, 5], vec![16, 17, 5], vec![18, 5], vec![19, 5], vec![20, 21, 5]], 5)
                .map_err(|e| e.to_string())?,
        };
        let check = gradient_check(&model, &sample, 1e-5, params, 1).map_err(|e| e.to_string())?;
        ok &= params <= 50_000 && check.max_relative_error <= 1e-4;
        detail.push(format!(
            "{kind:?}: {params} params, {} coords, max rel err {:.2e}",
            check.coordinates, check.max_relative_error
        ));
    }
    ensure(ok, format!("{} (tolerance 1e-4)", detail.join("; ")))
}

// 7. Beam search against exhaustive search, and trigram blocking.

/// Highest-scoring sentence over every candidate sequence of at most
/// `max_len` tokens; a sentence that reaches `max_len` ends there.
fn exhaustive_sentence<M: SentenceModel>(m: &M, previous: &[Vec<TokenId>], sentence: usize, max_len: usize) -> Vec<TokenId> {
    let stop = m.stop_token();
    let mut best: Option<(f64, Vec<TokenId>)> = None;
    let mut frontier = vec![(Vec::<TokenId>::new(), 0.0)];
    while let Some((prefix, score)) = frontier.pop() {
        let lp = m.next_log_probs(previous, &prefix, sentence).unwrap();
        for v in 0..m.vocab_size() as TokenId {
            if !m.is_candidate(v) {
                continue;
            }
            let s = score + lp[v as usize];
            let done = if v == stop {
                if prefix.is_empty() {
                    continue;
                }
                Some(prefix.clone())
            } else {
                let mut t = prefix.clone();
                t.push(v);
                if t.len() == max_len {
                    Some(t)
                } else {
                    frontier.push((t, s));
                    None
                }
            };
            if let Some(t) = done {
                if best.as_ref().is_none_or(|(bs, bt)| s > *bs || (s == *bs && t < *bt)) {
                    best = Some((s, t));
                }
            }
        }
    }
    best.unwrap().1
}

fn random_story_model(words: usize, seed: u64) -> (StoryModel, TermSequence) {
    let names: Vec<String> = (0..words).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::from_tokens(names.iter().map(String::as_str));
    let cfg = ModelConfig {
        hidden_size: 8,
        num_heads: 2,
        num_layers: 1,
        ffn_size: 16,
        max_positions: 128,
        dropout: 0.0,
        decoder_kind: DecoderKind::SelfAttention,
        seed,
    };
    let mut model = StoryModel::new(vocab, cfg).unwrap();
    // Random weights are a valid, if arbitrary, trained model.
    model.trained = true;
    let sets = (0..5)
        .map(|i| TermSet::new(i + 1, vec![Term::noun(&names[i % words])]))
        .collect();
    (model, TermSequence::new(sets).unwrap())
}

fn beam_oracle() -> Outcome {
    let mut cases = 0;
    // (words, max tokens); the stop token makes the candidate count
    // words + 1, at most 10.
    for &(words, len) in &[(2usize, 6usize), (3, 4), (4, 4), (8, 3), (9, 2)] {
        // Wide enough to keep every prefix alive.
        let width = words.pow(len as u32 - 1).max(words + 1);
        for seed in 0..3 {
            let (model, terms) = random_story_model(words, seed);
            let got = beam_generate(&model, &terms, &BeamConfig::unpenalized(width, len)).map_err(|e| e.to_string())?;
            let conditioned = model.condition(&terms).map_err(|e| e.to_string())?;
            let mut previous: Vec<Vec<TokenId>> = Vec::new();
            for (s, sentence) in got.sentences.iter().enumerate() {
                let want = exhaustive_sentence(&conditioned, &previous, s, len);
                let got_ids = model.vocab.encode(sentence);
                if got_ids != want {
                    return Err(format!("words={words} len={len} width={width} seed={seed} sentence {s}: {got_ids:?} vs {want:?}"));
                }
                previous.push(want);
            }
            cases += 1;
        }
    }
    let mut stories = 0;
    let mut fallbacks_free = 0;
    for seed in 0..20 {
        let (model, terms) = random_story_model(12, 100 + seed);
        let cfg = BeamConfig {
            beam_width: 3,
            max_sentence_tokens: 8,
            ..BeamConfig::default()
        };
        let story = beam_generate(&model, &terms, &cfg).map_err(|e| e.to_string())?;
        let flat = story.tokens();
        let mut seen = BTreeSet::new();
        for w in flat.windows(3) {
            if !seen.insert(w.to_vec()) {
                return Err(format!("seed {seed}: repeated trigram {w:?}"));
            }
        }
        stories += 1;
        fallbacks_free += 1;
    }
    Ok(format!(
        "{cases} model/length cases equal exhaustive search; {stories} stories with block_ngram=3 have no repeated trigram ({fallbacks_free} decoded)"
    ))
}

// 8. Sampling stop rule.

fn fixture_samples() -> Vec<StorySample> {
    STORIES.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn fixture_qa() -> Vec<QaPair> {
    QA.lines()
        .map(|l| serde_json::from_str::<QaPair>(l).unwrap())
        .filter(|p| !p.questions.is_empty())
        .collect()
}

fn small(kind: DecoderKind, seed: u64) -> ModelConfig {
    ModelConfig {
        hidden_size: 32,
        num_heads: 2,
        num_layers: 1,
        ffn_size: 64,
        max_positions: 128,
        dropout: 0.0,
        decoder_kind: kind,
        seed,
    }
}

fn decoding_contract() -> Outcome {
    let pairs = fixture_qa();
    let mut model = QuestionModel::for_pairs(&pairs, &[], small(DecoderKind::SelfAttention, 2), 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        epochs: 5,
        batch_size: 2,
        ..TrainConfig::default()
    };
    model.train(&pairs, &cfg).map_err(|e| e.to_string())?;
    let stories: Vec<Story> = fixture_samples().iter().map(|s| Story::from_text(&s.sentences)).collect();
    let (mut newline, mut max_len, mut longest) = (0, 0, 0);
    for i in 0..200u64 {
        let sample = SampleConfig {
            seed: i,
            ..SampleConfig::default()
        };
        let q = generate_question(&model, &stories[i as usize % stories.len()], &sample).map_err(|e| e.to_string())?;
        let n = q.tokens.len();
        longest = longest.max(n);
        if n > 26 || (n < 26 && q.stop_reason != StopReason::Newline) {
            return Err(format!("question {i}: {n} tokens, stop {:?}", q.stop_reason));
        }
        match q.stop_reason {
            StopReason::Newline => newline += 1,
            StopReason::MaxLen => max_len += 1,
        }
    }
    Ok(format!("200 questions, longest {longest} tokens, {newline} stopped at newline, {max_len} at the cap"))
}

// 10. Memorization (run before 9, which reuses the models).

struct Memorized {
    predictor: TermPredictor,
    story: StoryModel,
    sample: StorySample,
}

fn memorization(slot: &mut Option<Memorized>) -> Outcome {
    let start = Instant::now();
    let sample = fixture_samples().remove(0);
    let frames: FrameLexicon = [("ran", "self_motion"), ("ate", "ingestion")].into_iter().collect();
    let long = |epochs| TrainConfig {
        learning_rate: 3e-3,
        epochs,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let mut detail = Vec::new();

    let term_ex = term_examples(std::slice::from_ref(&sample), &frames, 25).map_err(|e| e.to_string())?;
    let mut predictor =
        TermPredictor::for_examples(&term_ex, small(DecoderKind::RecurrentWithAttention, 3), 1).map_err(|e| e.to_string())?;
    let loss = predictor.train(&term_ex, &long(300)).map_err(|e| e.to_string())?.last().unwrap().mean_loss;
    let terms_ok = predict_terms(&term_ex[0].0, &predictor).map_err(|e| e.to_string())? == term_ex[0].1;
    detail.push(format!("terms loss {loss:.4} exact={terms_ok}"));
    let mut ok = loss < 0.01 && terms_ok;

    let story_ex = story_examples(std::slice::from_ref(&sample), &frames).map_err(|e| e.to_string())?;
    let mut story = StoryModel::for_examples(&story_ex, small(DecoderKind::SelfAttention, 3), 1).map_err(|e| e.to_string())?;
    let loss = story.train(&story_ex, &long(200)).map_err(|e| e.to_string())?.last().unwrap().mean_loss;
    let decoded = beam_generate(&story, &story_ex[0].0, &BeamConfig::unpenalized(1, 20)).map_err(|e| e.to_string())?;
    let story_ok = decoded == story_ex[0].1;
    detail.push(format!("story loss {loss:.4} exact={story_ok}"));
    ok &= loss < 0.01 && story_ok;

    let pair = fixture_qa().remove(1);
    let mut question =
        QuestionModel::for_pairs(std::slice::from_ref(&pair), &[], small(DecoderKind::SelfAttention, 11), 1).map_err(|e| e.to_string())?;
    let loss = question.train(std::slice::from_ref(&pair), &long(150)).map_err(|e| e.to_string())?.last().unwrap().mean_loss;
    let q = question.greedy(&tokenize(&pair.context), 26).map_err(|e| e.to_string())?;
    let question_ok = q.tokens == tokenize(&pair.questions[0]) && q.stop_reason == StopReason::Newline;
    detail.push(format!("question loss {loss:.4} exact={question_ok}"));
    ok &= loss < 0.01 && question_ok;

    let elapsed = start.elapsed();
    ok &= elapsed <= Duration::from_secs(300);
    *slot = Some(Memorized { predictor, story, sample });
    ensure(ok, format!("{} in {elapsed:.1?} (loss < 0.01, limit 5 min)", detail.join("; ")))
}

// 9. Six sentences and one inserted set whenever a bridge exists.

fn random_bridge_graph(terms: &TermSequence, rng: &mut storyq_core::rng::StreamRng) -> KnowledgeGraph {
    let relations = ["at_location", "used_for", "part_of", "desires", "near"];
    let mut triples = Vec::new();
    for _ in 0..rng.gen_range(0..60) {
        let s = format!("noise{}", rng.gen_range(0..30));
        let o = format!("noise{}", rng.gen_range(0..30));
        triples.push(KnowledgeTriple::new(&s, relations.choose(rng).unwrap(), &o).unwrap());
    }
    let i = rng.gen_range(0..terms.len() - 1);
    let x: Vec<&str> = terms.sets[i].surfaces().collect();
    let y: Vec<&str> = terms.sets[i + 1].surfaces().collect();
    let (x, y) = (*x.choose(rng).unwrap(), *y.choose(rng).unwrap());
    if rng.gen_bool(0.5) {
        triples.push(KnowledgeTriple::new(x, relations.choose(rng).unwrap(), y).unwrap());
    } else {
        let m = format!("bridge{}", rng.gen_range(0..5));
        triples.push(KnowledgeTriple::new(x, relations.choose(rng).unwrap(), &m).unwrap());
        triples.push(KnowledgeTriple::new(&m, relations.choose(rng).unwrap(), y).unwrap());
    }
    index_graph(triples)
}

fn structural(models: Option<&Memorized>) -> Outcome {
    let m = models.ok_or("memorized models unavailable")?;
    let sentences: Vec<Vec<String>> = fixture_samples()
        .iter()
        .flat_map(|s| s.sentences.iter().map(|t| tokenize(t)))
        .collect();
    let lm: NGramLm = train_ngram(&sentences, 2, 0.1).map_err(|e| e.to_string())?;
    let labels: Vec<Vec<String>> = m.sample.images.iter().map(|a| storyq_core::termspace::select_top_objects(a, 25)).collect();
    let predicted = predict_terms(&labels, &m.predictor).map_err(|e| e.to_string())?;
    if predicted.sets.iter().any(|s| s.terms.is_empty()) {
        return Err("predictor left a term set empty".into());
    }
    let table = RealizationTable::default();
    let pronouns = PronounLexicon::default();
    let images: Vec<ImageAnnotation> = m.sample.images.clone();
    let mut rng = seeded(9);
    let mut hops = [0usize; 2];
    for run in 0..50 {
        let graph = random_bridge_graph(&predicted, &mut rng);
        let pipeline = StoryPipeline {
            predictor: &m.predictor,
            scorer: &lm,
            graph: &graph,
            realizations: &table,
            story_model: &m.story,
            pronouns: &pronouns,
            beam: BeamConfig::default(),
            top_objects: 25,
            path_cap: 5000,
            postprocess: true,
        };
        let out = generate_story(&images, &pipeline).map_err(|e| format!("run {run}: {e}"))?;
        let inserted = out.terms.sets.iter().filter(|s| s.inserted).count();
        if out.story.len() != 6 || inserted != 1 {
            return Err(format!("run {run}: {} sentences, {inserted} inserted sets", out.story.len()));
        }
        let path = out.chosen.as_ref().ok_or(format!("run {run}: no path chosen"))?;
        hops[path.hop_count() as usize - 1] += 1;
    }
    Ok(format!("50 runs: 6 sentences and 1 inserted set each ({} one-hop, {} two-hop bridges)", hops[0], hops[1]))
}

// 11. Determinism through the binary.

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = write_fixture(dir.path());
    for target in ["terms", "lm", "story", "question"] {
        let out = storyq(&config, &["train", target]);
        if !out.status.success() {
            return Err(format!("train {target}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    let mut snaps = Vec::new();
    for name in ["run-a", "run-b"] {
        let out_dir = dir.path().join(name);
        let out = storyq(&config, &["--out", out_dir.to_str().unwrap(), "generate"]);
        if !out.status.success() {
            return Err(format!("generate: {}", String::from_utf8_lossy(&out.stderr)));
        }
        snaps.push(snapshot(&out_dir));
    }
    let bytes: usize = snaps[0].values().map(Vec::len).sum();
    let files: Vec<String> = snaps[0].keys().map(|p| p.display().to_string()).collect();
    let _ = fs::remove_dir_all(dir.path());
    ensure(
        snaps[0] == snaps[1] && !snaps[0].is_empty(),
        format!("{} ({bytes} bytes) identical across two runs", files.join(", ")),
    )
}

fn run(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> (u32, String, bool) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (ok, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    let line = format!("criterion {id:>2} {} {name}: {detail} [{secs:.2}s]", if ok { "PASS" } else { "FAIL" });
    (id, line, ok)
}

fn main() {
    let mut results = vec![
        run(1, "rank table", table1),
        run(2, "question-type table", table2),
        run(3, "path enumeration oracle", path_oracle),
        run(4, "perplexity hand check", perplexity_hand_check),
        run(5, "nucleus sampling", nucleus),
        run(6, "gradient check", gradients),
        run(7, "beam search oracle", beam_oracle),
        run(8, "decoding contract", decoding_contract),
    ];
    let mut models = None;
    results.push(run(10, "memorization", || memorization(&mut models)));
    results.push(run(9, "structural invariant", || structural(models.as_ref())));
    results.push(run(11, "determinism", determinism));
    results.sort_by_key(|r| r.0);
    for (_, line, _) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|r| !r.2).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
