//! Knowledge-graph bridges between adjacent term sets.
//!
//! For each adjacent pair of term sets every one-hop `(x, r, y)` and two-hop
//! `(x, r1, m, r2, y)` path is enumerated, turned into a short token sequence
//! with a template, and scored by a language model. The single
//! lowest-perplexity path across all pairs becomes a new term set inserted
//! between the two images it connects.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::lm::PerplexityScorer;
use crate::termspace::{Term, TermKind, TermSequence, TermSet};

/// Default cap on enumerated paths per adjacent pair.
pub const MAX_PATHS_PER_PAIR: usize = 5_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("triple fields must be non-empty")]
    EmptyField,
    #[error("no realization template for {0}-hop paths")]
    MissingTemplate(u8),
    #[error("path has no realization")]
    Unrealized,
    #[error("expected a five-set sequence without insertions, found {0} sets")]
    NotExpandable(usize),
    #[error("bridge source image {0} outside 1..=4")]
    BadSourceImage(usize),
    #[error("scorer failed: {0}")]
    Scorer(String),
}

/// Normalizes a knowledge-graph field: trimmed, lowercase, inner whitespace
/// joined with `_` so that it stays one token.
pub fn normalize_entity(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl KnowledgeTriple {
    pub fn new(subject: &str, relation: &str, object: &str) -> Result<Self, LinkError> {
        let t = KnowledgeTriple {
            subject: normalize_entity(subject),
            relation: normalize_entity(relation),
            object: normalize_entity(object),
        };
        if t.subject.is_empty() || t.relation.is_empty() || t.object.is_empty() {
            return Err(LinkError::EmptyField);
        }
        Ok(t)
    }
}

/// Deduplicated triples with subject and object indexes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    triples: Vec<KnowledgeTriple>,
    subject_index: BTreeMap<String, Vec<usize>>,
    object_index: BTreeMap<String, Vec<usize>>,
}

pub fn index_graph(triples: impl IntoIterator<Item = KnowledgeTriple>) -> KnowledgeGraph {
    let unique: BTreeSet<KnowledgeTriple> = triples.into_iter().collect();
    let triples: Vec<KnowledgeTriple> = unique.into_iter().collect();
    let mut subject_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut object_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, t) in triples.iter().enumerate() {
        subject_index.entry(t.subject.clone()).or_default().push(i);
        object_index.entry(t.object.clone()).or_default().push(i);
    }
    KnowledgeGraph {
        triples,
        subject_index,
        object_index,
    }
}

impl KnowledgeGraph {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[KnowledgeTriple] {
        &self.triples
    }

    pub fn contains(&self, t: &KnowledgeTriple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    pub fn by_subject(&self, subject: &str) -> impl Iterator<Item = &KnowledgeTriple> {
        self.subject_index
            .get(subject)
            .into_iter()
            .flatten()
            .map(|&i| &self.triples[i])
    }

    pub fn by_object(&self, object: &str) -> impl Iterator<Item = &KnowledgeTriple> {
        self.object_index
            .get(object)
            .into_iter()
            .flatten()
            .map(|&i| &self.triples[i])
    }

    /// Number of triples touching `entity` as subject or object.
    pub fn degree(&self, entity: &str) -> usize {
        self.subject_index.get(entity).map_or(0, Vec::len)
            + self.object_index.get(entity).map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationPath {
    /// 1-based index of the earlier image of the bridged pair.
    pub source_image: usize,
    /// `(term of image t, term of image t + 1)`.
    pub anchor_terms: (String, String),
    /// One relation for a one-hop path, two for a two-hop path.
    pub relations: Vec<String>,
    /// Bridging entity, present exactly for two-hop paths.
    pub middle: Option<String>,
    #[serde(default)]
    pub realization: Vec<String>,
    /// Perplexity of the realization once scored.
    #[serde(default)]
    pub score: Option<f64>,
}

impl RelationPath {
    pub fn hop_count(&self) -> u8 {
        if self.middle.is_some() {
            2
        } else {
            1
        }
    }

    fn key(&self) -> (u8, &str, &[String], Option<&str>, &str) {
        (
            self.hop_count(),
            &self.anchor_terms.0,
            &self.relations,
            self.middle.as_deref(),
            &self.anchor_terms.1,
        )
    }
}

fn unique_surfaces(set: &TermSet) -> Vec<&str> {
    let s: BTreeSet<&str> = set.surfaces().collect();
    s.into_iter().collect()
}

/// Every one- and two-hop path from a term of `a` to a term of `b`, capped
/// at [`MAX_PATHS_PER_PAIR`].
pub fn enumerate_paths(a: &TermSet, b: &TermSet, kg: &KnowledgeGraph) -> Vec<RelationPath> {
    enumerate_paths_capped(a, b, kg, MAX_PATHS_PER_PAIR)
}

/// Paths are ordered by hop count, then anchor, relation and middle names.
/// Past `cap`, paths whose entities have the highest total graph degree are
/// kept.
pub fn enumerate_paths_capped(
    a: &TermSet,
    b: &TermSet,
    kg: &KnowledgeGraph,
    cap: usize,
) -> Vec<RelationPath> {
    let xs = unique_surfaces(a);
    let ys: BTreeSet<&str> = b.surfaces().collect();
    if xs.is_empty() || ys.is_empty() {
        return Vec::new();
    }
    let endpoints: BTreeSet<&str> = xs.iter().copied().chain(ys.iter().copied()).collect();
    let mut paths = Vec::new();
    for &x in &xs {
        for t1 in kg.by_subject(x) {
            if ys.contains(t1.object.as_str()) {
                paths.push(RelationPath {
                    source_image: a.image_index,
                    anchor_terms: (x.to_string(), t1.object.clone()),
                    relations: alloc::vec![t1.relation.clone()],
                    middle: None,
                    realization: Vec::new(),
                    score: None,
                });
            }
            let m = t1.object.as_str();
            if endpoints.contains(m) {
                continue;
            }
            for t2 in kg.by_subject(m) {
                if ys.contains(t2.object.as_str()) {
                    paths.push(RelationPath {
                        source_image: a.image_index,
                        anchor_terms: (x.to_string(), t2.object.clone()),
                        relations: alloc::vec![t1.relation.clone(), t2.relation.clone()],
                        middle: Some(m.to_string()),
                        realization: Vec::new(),
                        score: None,
                    });
                }
            }
        }
    }
    paths.sort_by(|p, q| p.key().cmp(&q.key()));
    paths.dedup_by(|p, q| p.key() == q.key());
    if paths.len() > cap {
        let degree = |p: &RelationPath| {
            kg.degree(&p.anchor_terms.0)
                + kg.degree(&p.anchor_terms.1)
                + p.middle.as_deref().map_or(0, |m| kg.degree(m))
        };
        let mut ranked: Vec<(usize, usize)> = paths.iter().enumerate().map(|(i, p)| (degree(p), i)).collect();
        ranked.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut keep: Vec<usize> = ranked.into_iter().take(cap).map(|(_, i)| i).collect();
        keep.sort_unstable();
        let mut it = keep.into_iter().peekable();
        paths = paths
            .into_iter()
            .enumerate()
            .filter(|(i, _)| it.next_if_eq(i).is_some())
            .map(|(_, p)| p)
            .collect();
    }
    paths
}

/// Hop count to template, with `{x}`, `{r}`, `{r1}`, `{m}`, `{r2}`, `{y}`
/// slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizationTable {
    templates: BTreeMap<u8, String>,
}

impl Default for RealizationTable {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(1, "the {x} {r} the {y}".to_string());
        templates.insert(2, "the {x} {r1} the {m} {r2} the {y}".to_string());
        RealizationTable { templates }
    }
}

impl RealizationTable {
    pub fn new(templates: BTreeMap<u8, String>) -> Self {
        RealizationTable { templates }
    }

    pub fn template(&self, hops: u8) -> Option<&str> {
        self.templates.get(&hops).map(String::as_str)
    }

    pub fn templates(&self) -> &BTreeMap<u8, String> {
        &self.templates
    }
}

/// Fills the path's template; every whitespace-separated template word is a
/// token.
pub fn realize_path(path: &RelationPath, table: &RealizationTable) -> Result<Vec<String>, LinkError> {
    let hops = path.hop_count();
    let template = table.template(hops).ok_or(LinkError::MissingTemplate(hops))?;
    let (x, y) = (&path.anchor_terms.0, &path.anchor_terms.1);
    let r1 = path.relations.first().map(String::as_str).unwrap_or("");
    let r2 = path.relations.get(1).map(String::as_str).unwrap_or("");
    let m = path.middle.as_deref().unwrap_or("");
    Ok(template
        .split_whitespace()
        .map(|w| {
            w.replace("{x}", x)
                .replace("{y}", y)
                .replace("{r1}", r1)
                .replace("{r2}", r2)
                .replace("{r}", r1)
                .replace("{m}", m)
        })
        .filter(|w| !w.is_empty())
        .collect())
}

/// Scores every path and returns the lowest-perplexity one. Ties go to the
/// shorter path, then the lexicographically smaller realization.
pub fn select_relation<S>(paths: &[RelationPath], scorer: &S) -> Result<Option<RelationPath>, LinkError>
where
    S: PerplexityScorer + ?Sized,
    S::Error: core::fmt::Display,
{
    let mut best: Option<RelationPath> = None;
    for p in paths {
        if p.realization.is_empty() {
            return Err(LinkError::Unrealized);
        }
        let score = scorer
            .perplexity(&p.realization)
            .map_err(|e| LinkError::Scorer(e.to_string()))?;
        let mut scored = p.clone();
        scored.score = Some(score);
        let better = match &best {
            None => true,
            Some(b) => compare_scored(&scored, b) == Ordering::Less,
        };
        if better {
            best = Some(scored);
        }
    }
    Ok(best)
}

fn compare_scored(a: &RelationPath, b: &RelationPath) -> Ordering {
    let (sa, sb) = (a.score.unwrap_or(f64::INFINITY), b.score.unwrap_or(f64::INFINITY));
    sa.partial_cmp(&sb)
        .unwrap_or(Ordering::Equal)
        .then(a.hop_count().cmp(&b.hop_count()))
        .then_with(|| a.realization.cmp(&b.realization))
}

/// Inserts the chosen bridge as a new set between images `t` and `t + 1`.
/// The new set holds the relation labels and, for two hops, the middle
/// entity in path order.
pub fn expand_terms(seq: &TermSequence, chosen: &RelationPath) -> Result<TermSequence, LinkError> {
    if seq.len() != 5 || seq.inserted_index().is_some() {
        return Err(LinkError::NotExpandable(seq.len()));
    }
    let t = chosen.source_image;
    if !(1..=4).contains(&t) {
        return Err(LinkError::BadSourceImage(t));
    }
    let mut terms = alloc::vec![Term::new(&chosen.relations[0], TermKind::Relation)];
    if let Some(m) = &chosen.middle {
        terms.push(Term::noun(m));
        if let Some(r2) = chosen.relations.get(1) {
            terms.push(Term::new(r2, TermKind::Relation));
        }
    }
    let mut sets = seq.sets.clone();
    sets.insert(
        t,
        TermSet {
            image_index: t + 1,
            terms,
            inserted: true,
        },
    );
    for (i, s) in sets.iter_mut().enumerate() {
        s.image_index = i + 1;
    }
    Ok(TermSequence { sets })
}

/// Result of knowledge enrichment over a five-set sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Enrichment {
    pub sequence: TermSequence,
    pub chosen: Option<RelationPath>,
    pub candidates: usize,
}

/// Enumerates, realizes and scores bridges for all four adjacent pairs and
/// inserts the global winner. Without any candidate the input is returned
/// unchanged.
pub fn enrich<S>(
    seq: &TermSequence,
    kg: &KnowledgeGraph,
    table: &RealizationTable,
    scorer: &S,
    cap: usize,
) -> Result<Enrichment, LinkError>
where
    S: PerplexityScorer + ?Sized,
    S::Error: core::fmt::Display,
{
    if seq.len() != 5 || seq.inserted_index().is_some() {
        return Err(LinkError::NotExpandable(seq.len()));
    }
    let mut all = Vec::new();
    for pair in seq.sets.windows(2) {
        for mut p in enumerate_paths_capped(&pair[0], &pair[1], kg, cap) {
            p.realization = realize_path(&p, table)?;
            all.push(p);
        }
    }
    let candidates = all.len();
    match select_relation(&all, scorer)? {
        Some(chosen) => Ok(Enrichment {
            sequence: expand_terms(seq, &chosen)?,
            chosen: Some(chosen),
            candidates,
        }),
        None => Ok(Enrichment {
            sequence: seq.clone(),
            chosen: None,
            candidates,
        }),
    }
}
