//! Training text emitted by experts: entity paragraphs, two-hop sentences and
//! JSONL output with provenance.
//!
//! JSONL field order is fixed: `idx, text, expert_id, entity_id, kind, split,
//! diversity, fact_ids, corrupted`. `fact_ids` are ground-truth fact ids; for a
//! corrupted sentence the id is that of the fact it was corrupted from.

pub mod rephrase;
pub mod templates;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{within_cluster_two_hops, EdgePartition};
use crate::error::{Error, Result};
use crate::experts::ExpertProfile;
use crate::kg::{EntityId, FactId, KnowledgeGraph, TwoHopFact};
use crate::seed::rng_for;
use rephrase::rephrase_checked;
pub use rephrase::{IdentityRephraser, RemoteRephraser, RephraseProvider};
pub use templates::{render_sentence, two_hop_sentence, TemplateParser, TwoHopFormat};

/// Consecutive empty paragraphs tolerated before giving up on a sample.
pub const MAX_EMPTY_RETRIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotaMode {
    Equal,
    Proportional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoHopConfig {
    pub include: bool,
    pub validation_size: usize,
    pub train_repeat: usize,
    pub format: TwoHopFormat,
}

impl Default for TwoHopConfig {
    fn default() -> Self {
        TwoHopConfig { include: false, validation_size: 0, train_repeat: 20, format: TwoHopFormat::Plain }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub total_samples: usize,
    pub quota_mode: QuotaMode,
    pub alpha: f64,
    pub diversity_level: u8,
    #[serde(default)]
    pub two_hop: TwoHopConfig,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn new(total_samples: usize, seed: u64) -> Self {
        CorpusConfig {
            total_samples,
            quota_mode: QuotaMode::Equal,
            alpha: 0.0,
            diversity_level: 1,
            two_hop: TwoHopConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::validation(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(1..=4).contains(&self.diversity_level) {
            return Err(Error::validation(format!("unknown diversity level {}", self.diversity_level)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    OneHopParagraph,
    TwoHopPlain,
    TwoHopCot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub idx: u64,
    pub text: String,
    pub expert_id: Option<usize>,
    pub entity_id: Option<EntityId>,
    pub kind: SampleKind,
    pub split: Split,
    pub diversity: u8,
    pub fact_ids: Vec<FactId>,
    pub corrupted: Vec<bool>,
    /// Set when a Level 3/4 rewrite was rejected and the Level 2 text kept.
    #[serde(skip)]
    pub rephrase_fallback: bool,
}

/// One rendered paragraph: indices into the expert's personal facts, in sentence order.
#[derive(Clone, Debug, PartialEq)]
pub struct Paragraph {
    pub facts: Vec<u32>,
    pub text: String,
}

/// Writes each personal fact touching `entity` with probability given by the expert's
/// emission weight, in shuffled order. May return an empty paragraph.
pub fn emit_paragraph(
    graph: &KnowledgeGraph,
    expert: &ExpertProfile,
    entity: EntityId,
    alpha: f64,
    level: u8,
    rng: &mut impl Rng,
) -> Result<Paragraph> {
    let incident = expert.incident(entity);
    if incident.is_empty() {
        return Err(Error::Emission(format!("no incident facts for entity {entity} in expert {}", expert.expert_id)));
    }
    let mut chosen: Vec<u32> = incident
        .iter()
        .copied()
        .filter(|&i| rng.random::<f64>() < expert.emission_weight(&expert.facts[i as usize], alpha))
        .collect();
    chosen.shuffle(rng);
    let sentences = chosen
        .iter()
        .map(|&i| render_sentence(graph, &expert.facts[i as usize].fact, level, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Paragraph { facts: chosen, text: sentences.join(" ") })
}

/// Samples per expert: equal shares with the remainder to the lowest ids, or
/// largest-remainder shares proportional to personal-graph size.
pub fn quotas(experts: &[ExpertProfile], total: usize, mode: QuotaMode) -> Vec<usize> {
    let n = experts.len();
    match mode {
        QuotaMode::Equal => (0..n).map(|i| total / n + usize::from(i < total % n)).collect(),
        QuotaMode::Proportional => {
            let weights: Vec<u128> = experts.iter().map(|e| e.facts.len() as u128).collect();
            largest_remainder(total, &weights)
        }
    }
}

pub fn largest_remainder(total: usize, weights: &[u128]) -> Vec<usize> {
    let sum: u128 = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let t = total as u128;
    let mut counts: Vec<usize> = weights.iter().map(|w| (t * w / sum) as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| ((t * weights[b]) % sum).cmp(&((t * weights[a]) % sum)).then(a.cmp(&b)));
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TwoHopSplits {
    pub train_within: Vec<TwoHopFact>,
    pub validation_within: Vec<TwoHopFact>,
    pub test_across: Vec<TwoHopFact>,
}

/// Within-expertise two-hop facts minus a uniform validation sample, plus all across-expertise ones.
pub fn split_two_hops(graph: &KnowledgeGraph, partition: &EdgePartition, validation_size: usize, seed: u64) -> Result<TwoHopSplits> {
    let split = within_cluster_two_hops(graph, partition)?;
    if validation_size > split.within.len() {
        return Err(Error::validation(format!(
            "validation size {validation_size} exceeds the {} within-expertise two-hop facts",
            split.within.len()
        )));
    }
    let mut within = split.within;
    within.shuffle(&mut rng_for(seed, "validation", 0));
    let mut train_within = within.split_off(validation_size);
    let mut validation_within = within;
    train_within.sort();
    validation_within.sort();
    Ok(TwoHopSplits { train_within, validation_within, test_across: split.across })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    /// Paragraphs followed by repeated two-hop training sentences.
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub quotas: Vec<usize>,
    pub rephrase_fallbacks: usize,
}

fn two_hop_sample(graph: &KnowledgeGraph, th: &TwoHopFact, idx: u64, split: Split, format: TwoHopFormat, level: u8) -> Sample {
    let ids = [th.first_hop(), th.second_hop()].map(|f| graph.fact_id(&f).expect("two-hop edges are graph facts"));
    Sample {
        idx,
        text: two_hop_sentence(graph, th, format),
        expert_id: None,
        entity_id: Some(th.head),
        kind: match format {
            TwoHopFormat::Plain => SampleKind::TwoHopPlain,
            TwoHopFormat::Cot => SampleKind::TwoHopCot,
        },
        split,
        diversity: level,
        fact_ids: ids.to_vec(),
        corrupted: vec![false, false],
        rephrase_fallback: false,
    }
}

pub struct CorpusInputs<'a> {
    pub graph: &'a KnowledgeGraph,
    pub experts: &'a [ExpertProfile],
    /// Required when two-hop sentences are included.
    pub partition: Option<&'a EdgePartition>,
    pub provider: Option<&'a dyn RephraseProvider>,
}

pub fn generate_corpus(inputs: &CorpusInputs<'_>, config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let CorpusInputs { graph, experts, partition, provider } = *inputs;
    if experts.is_empty() {
        return Err(Error::validation("corpus needs at least one expert"));
    }
    if let Some(e) = experts.iter().find(|e| e.facts.is_empty()) {
        return Err(Error::Emission(format!("expert {} has an empty personal graph", e.expert_id)));
    }
    let quotas = quotas(experts, config.total_samples, config.quota_mode);
    let mut owner = Vec::with_capacity(config.total_samples);
    for (i, &q) in quotas.iter().enumerate() {
        owner.extend(std::iter::repeat_n(i, q));
    }
    let nodes: Vec<Vec<EntityId>> = experts.iter().map(ExpertProfile::node_list).collect();
    let level = config.diversity_level;
    let mut train = owner
        .par_iter()
        .enumerate()
        .map(|(idx, &e)| {
            let expert = &experts[e];
            let mut rng = rng_for(config.seed, "sample", idx as u64);
            for _ in 0..MAX_EMPTY_RETRIES {
                let entity = nodes[e][rng.random_range(0..nodes[e].len())];
                let para = emit_paragraph(graph, expert, entity, config.alpha, level, &mut rng)?;
                if para.facts.is_empty() {
                    continue;
                }
                let facts: Vec<_> = para.facts.iter().map(|&i| expert.facts[i as usize]).collect();
                let mut text = para.text;
                let mut fallback = false;
                if level >= 3 {
                    let mut names: Vec<&str> = facts.iter().flat_map(|pf| [graph.name(pf.fact.head), graph.name(pf.fact.tail)]).collect();
                    names.sort_unstable();
                    names.dedup();
                    match provider {
                        Some(p) => {
                            let r = rephrase_checked(p, &text, level, &names);
                            text = r.text;
                            fallback = r.fell_back;
                        }
                        None => fallback = true,
                    }
                }
                return Ok(Sample {
                    idx: idx as u64,
                    text,
                    expert_id: Some(expert.expert_id),
                    entity_id: Some(entity),
                    kind: SampleKind::OneHopParagraph,
                    split: Split::Train,
                    diversity: level,
                    fact_ids: facts.iter().map(|pf| pf.source).collect(),
                    corrupted: facts.iter().map(|pf| pf.corrupted).collect(),
                    rephrase_fallback: fallback,
                });
            }
            Err(Error::Emission(format!(
                "expert {}: {MAX_EMPTY_RETRIES} consecutive empty paragraphs at sample {idx}",
                expert.expert_id
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    let rephrase_fallbacks = train.iter().filter(|s| s.rephrase_fallback).count();
    let mut corpus = Corpus { quotas, rephrase_fallbacks, ..Corpus::default() };
    if config.two_hop.include {
        let partition = partition.ok_or_else(|| Error::validation("two-hop sentences need a partition"))?;
        let splits = split_two_hops(graph, partition, config.two_hop.validation_size, config.seed)?;
        let format = config.two_hop.format;
        let mut idx = train.len() as u64;
        for _ in 0..config.two_hop.train_repeat {
            for th in &splits.train_within {
                train.push(two_hop_sample(graph, th, idx, Split::Train, format, level));
                idx += 1;
            }
        }
        corpus.validation = splits
            .validation_within
            .iter()
            .enumerate()
            .map(|(i, th)| two_hop_sample(graph, th, i as u64, Split::Validation, format, level))
            .collect();
        corpus.test = splits
            .test_across
            .iter()
            .enumerate()
            .map(|(i, th)| two_hop_sample(graph, th, i as u64, Split::Test, format, level))
            .collect();
    }
    corpus.train = train;
    Ok(corpus)
}

pub fn write_jsonl(samples: &[Sample], out: &mut impl Write) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut *out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(samples: &[Sample]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(samples, &mut buf).expect("writing to memory");
    buf
}

pub fn read_jsonl(bytes: &[u8]) -> Result<Vec<Sample>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse { line: 0, column: 0, message: e.to_string() })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, column: e.column(), message: e.to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::{build_denoising_experts, build_generalization_experts, build_selection_experts, PersonalFact, Setting};
    use crate::kg::test_support::{random_graph, tiny};
    use crate::kg::Fact;

    fn single_expert(g: &KnowledgeGraph, coverage: Vec<f64>, clusters: &[usize]) -> ExpertProfile {
        let facts = g
            .facts()
            .iter()
            .enumerate()
            .map(|(i, &fact)| PersonalFact { source: FactId(i as u32), fact, corrupted: false, cluster: clusters[i] })
            .collect();
        ExpertProfile::new(0, Setting::Selection, coverage, facts, 0)
    }

    fn hub() -> KnowledgeGraph {
        tiny(&["a", "b", "c", "d", "e"], &[(0, 0, 1), (0, 1, 2), (3, 0, 0), (0, 2, 4)], 3)
    }

    #[test]
    fn alpha_zero_and_full_expertise_write_everything() {
        let g = hub();
        let mut rng = rng_for(1, "t", 0);
        let half = single_expert(&g, vec![0.5], &[0; 4]);
        let full = single_expert(&g, vec![1.0], &[0; 4]);
        for _ in 0..200 {
            assert_eq!(emit_paragraph(&g, &half, EntityId(0), 0.0, 1, &mut rng).unwrap().facts.len(), 4);
            assert_eq!(emit_paragraph(&g, &full, EntityId(0), 1.0, 1, &mut rng).unwrap().facts.len(), 4);
        }
    }

    #[test]
    fn inclusion_rate_tracks_coverage() {
        let g = hub();
        let e = single_expert(&g, vec![0.5], &[0; 4]);
        let mut rng = rng_for(2, "t", 0);
        let n = 100_000;
        let total: usize = (0..n).map(|_| emit_paragraph(&g, &e, EntityId(1), 1.0, 1, &mut rng).unwrap().facts.len()).sum();
        let rate = total as f64 / n as f64;
        assert!((rate - 0.5).abs() < 5.0 * (0.25 / n as f64).sqrt(), "{rate}");
    }

    #[test]
    fn isolated_entity_is_an_error() {
        let g = tiny(&["a", "b", "c"], &[(0, 0, 1)], 1);
        let e = single_expert(&g, vec![1.0], &[0]);
        let err = emit_paragraph(&g, &e, EntityId(2), 0.0, 1, &mut rng_for(0, "t", 0)).unwrap_err();
        assert!(err.to_string().contains("no incident facts"));
    }

    #[test]
    fn alpha_monotonicity_with_paired_seeds() {
        let g = hub();
        let e = single_expert(&g, vec![0.3, 1.0], &[0, 1, 0, 1]);
        let mean = |alpha: f64| {
            let mut rng = rng_for(3, "paired", 0);
            (0..20_000).map(|_| emit_paragraph(&g, &e, EntityId(0), alpha, 1, &mut rng).unwrap().facts.len()).sum::<usize>()
        };
        let counts: Vec<usize> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&a| mean(a)).collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
        let perfect = single_expert(&g, vec![1.0, 1.0], &[0, 1, 0, 1]);
        let mut rng = rng_for(3, "paired", 1);
        assert!((0..100).all(|_| emit_paragraph(&g, &perfect, EntityId(0), 0.7, 1, &mut rng).unwrap().facts.len() == 4));
    }

    #[test]
    fn quota_examples() {
        let g = random_graph(1, 60, 3, 4, 100);
        let experts = build_denoising_experts(&g, 3, 1.0, 0).unwrap();
        assert_eq!(quotas(&experts, 10, QuotaMode::Equal), vec![4, 3, 3]);
        assert_eq!(largest_remainder(100, &[30, 20, 50]), vec![30, 20, 50]);
        assert_eq!(largest_remainder(10, &[1, 1, 1]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(7, &[5, 3, 2]), vec![4, 2, 1]);
    }

    #[test]
    fn split_edge_cases() {
        let g = random_graph(4, 40, 2, 3, 150);
        let p = EdgePartition::new(2, (0..g.num_facts()).map(|i| i % 2).collect()).unwrap();
        let all = within_cluster_two_hops(&g, &p).unwrap();
        let none = split_two_hops(&g, &p, 0, 1).unwrap();
        assert_eq!(none.train_within.len(), all.within.len());
        let every = split_two_hops(&g, &p, all.within.len(), 1).unwrap();
        assert!(every.train_within.is_empty());
        assert!(split_two_hops(&g, &p, all.within.len() + 1, 1).is_err());
        let some = split_two_hops(&g, &p, all.within.len() / 3, 9).unwrap();
        assert_eq!(some, split_two_hops(&g, &p, all.within.len() / 3, 9).unwrap());
        let mut union: Vec<TwoHopFact> =
            some.train_within.iter().chain(&some.validation_within).chain(&some.test_across).copied().collect();
        let n = union.len();
        union.sort();
        union.dedup();
        assert_eq!(union.len(), n);
        let mut f2 = g.enumerate_two_hop();
        f2.sort();
        assert_eq!(union, f2);
    }

    #[test]
    fn corpus_provenance_and_determinism() {
        let g = random_graph(7, 120, 3, 5, 400);
        let p = EdgePartition::new(4, (0..g.num_facts()).map(|i| (i / 7) % 4).collect()).unwrap();
        let experts = build_selection_experts(&g, &p, 5, 0.3, 7).unwrap();
        let mut config = CorpusConfig::new(500, 11);
        config.alpha = 0.6;
        config.two_hop = TwoHopConfig { include: true, validation_size: 5, train_repeat: 2, format: TwoHopFormat::Cot };
        let inputs = CorpusInputs { graph: &g, experts: &experts, partition: Some(&p), provider: None };
        let a = generate_corpus(&inputs, &config).unwrap();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = serial.install(|| generate_corpus(&inputs, &config).unwrap());
        assert_eq!(to_jsonl(&a.train), to_jsonl(&b.train));
        let parser = TemplateParser::new(&g);
        let paragraphs: Vec<&Sample> = a.train.iter().filter(|s| s.kind == SampleKind::OneHopParagraph).collect();
        assert_eq!(paragraphs.len(), 500);
        for s in paragraphs {
            let e = &experts[s.expert_id.unwrap()];
            let parsed = parser.parse_paragraph(&s.text).unwrap();
            assert_eq!(parsed.len(), s.fact_ids.len());
            for ((fact, src), bad) in parsed.iter().zip(&s.fact_ids).zip(&s.corrupted) {
                let pf = e.facts[src.index()];
                assert_eq!(pf.fact, *fact);
                assert_eq!(pf.corrupted, *bad);
                assert!(fact.touches(s.entity_id.unwrap()));
            }
        }
        let cot = a.train.iter().filter(|s| s.kind == SampleKind::TwoHopCot).count();
        assert_eq!(cot % 2, 0);
        assert_eq!(a.validation.len(), 5);
        assert_eq!(read_jsonl(&to_jsonl(&a.train)).unwrap(), a.train);
    }

    #[test]
    fn generalization_quotas_are_proportional() {
        let g = random_graph(9, 120, 3, 5, 100);
        let assignment: Vec<usize> = (0..100).map(|i| if i < 30 { 0 } else if i < 50 { 1 } else { 2 }).collect();
        let p = EdgePartition::new(3, assignment).unwrap();
        let experts = build_generalization_experts(&g, &p).unwrap();
        assert_eq!(quotas(&experts, 100, QuotaMode::Proportional), vec![30, 20, 50]);
    }

    #[test]
    fn jsonl_field_order_is_fixed() {
        let s = Sample {
            idx: 3,
            text: "x".into(),
            expert_id: Some(1),
            entity_id: Some(EntityId(4)),
            kind: SampleKind::OneHopParagraph,
            split: Split::Train,
            diversity: 1,
            fact_ids: vec![FactId(2)],
            corrupted: vec![true],
            rephrase_fallback: false,
        };
        assert_eq!(
            String::from_utf8(to_jsonl(&[s])).unwrap(),
            "{\"idx\":3,\"text\":\"x\",\"expert_id\":1,\"entity_id\":4,\"kind\":\"one_hop_paragraph\",\"split\":\"train\",\"diversity\":1,\"fact_ids\":[2],\"corrupted\":[true]}\n"
        );
        let err = read_jsonl(b"{\"idx\":1}\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn levels_three_and_four_fall_back_without_provider() {
        let g = random_graph(2, 40, 2, 3, 60);
        let experts = build_denoising_experts(&g, 2, 1.0, 0).unwrap();
        let mut config = CorpusConfig::new(20, 1);
        config.diversity_level = 3;
        let inputs = CorpusInputs { graph: &g, experts: &experts, partition: None, provider: None };
        let c = generate_corpus(&inputs, &config).unwrap();
        assert_eq!(c.rephrase_fallbacks, 20);
        let with = CorpusInputs { provider: Some(&rephrase::IdentityRephraser), ..inputs };
        let c = generate_corpus(&with, &config).unwrap();
        assert_eq!(c.rephrase_fallbacks, 0);
        let parser = TemplateParser::new(&g);
        assert!(c.train.iter().all(|s| parser.parse_paragraph(&s.text).is_some()));
        let _ = Fact::new(0, 0, 1);
    }
}
