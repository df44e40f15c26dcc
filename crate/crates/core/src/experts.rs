//! Simulated experts for the three settings.
//!
//! An expert holds one personal fact per ground-truth fact it was assigned:
//! either the fact itself or a corruption that swaps one endpoint for another
//! entity of the same semantic type.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::EdgePartition;
use crate::error::{Error, Result};
use crate::kg::{EntityId, Fact, FactId, KnowledgeGraph};
use crate::seed::{derive_seed, rng_for};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Denoising,
    Selection,
    Generalization,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Denoising => "denoising",
            Setting::Selection => "selection",
            Setting::Generalization => "generalization",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnUncorruptible {
    Error,
    KeepCorrect,
}

/// Whether experts draw their own corruption of a fact or share one per fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misconceptions {
    Independent,
    Shared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Head,
    Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpertOptions {
    pub on_uncorruptible: OnUncorruptible,
    pub misconceptions: Misconceptions,
}

impl ExpertOptions {
    pub fn for_setting(setting: Setting) -> Self {
        let misconceptions = match setting {
            Setting::Selection => Misconceptions::Shared,
            _ => Misconceptions::Independent,
        };
        ExpertOptions { on_uncorruptible: OnUncorruptible::Error, misconceptions }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PersonalFact {
    pub source: FactId,
    pub fact: Fact,
    pub corrupted: bool,
    /// Cluster of the source fact (0 when no partition is involved).
    pub cluster: usize,
}

#[derive(Clone, Debug)]
pub struct ExpertProfile {
    pub expert_id: usize,
    pub setting: Setting,
    /// Per-cluster accuracy; a single global value in the denoising setting.
    pub coverage: Vec<f64>,
    pub facts: Vec<PersonalFact>,
    pub seed: u64,
    incidence: BTreeMap<EntityId, Vec<u32>>,
}

impl PartialEq for ExpertProfile {
    fn eq(&self, other: &Self) -> bool {
        self.expert_id == other.expert_id
            && self.setting == other.setting
            && self.coverage == other.coverage
            && self.facts == other.facts
            && self.seed == other.seed
    }
}

impl ExpertProfile {
    pub fn new(expert_id: usize, setting: Setting, coverage: Vec<f64>, facts: Vec<PersonalFact>, seed: u64) -> Self {
        let mut incidence: BTreeMap<EntityId, Vec<u32>> = BTreeMap::new();
        for (i, pf) in facts.iter().enumerate() {
            incidence.entry(pf.fact.head).or_default().push(i as u32);
            incidence.entry(pf.fact.tail).or_default().push(i as u32);
        }
        ExpertProfile { expert_id, setting, coverage, facts, seed, incidence }
    }

    /// Accuracy the expert has on the given cluster.
    pub fn coverage_for(&self, cluster: usize) -> f64 {
        match self.setting {
            Setting::Denoising => self.coverage[0],
            _ => self.coverage.get(cluster).copied().unwrap_or(0.0),
        }
    }

    /// Probability a personal fact is written when its entity is chosen: `α·s + (1 − α)` for selection, 1 otherwise.
    pub fn emission_weight(&self, pf: &PersonalFact, alpha: f64) -> f64 {
        match self.setting {
            Setting::Selection => alpha * self.coverage_for(pf.cluster) + (1.0 - alpha),
            _ => 1.0,
        }
    }

    /// Non-isolated nodes of the personal graph, ascending.
    pub fn nodes(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.incidence.keys().copied()
    }

    pub fn num_nodes(&self) -> usize {
        self.incidence.len()
    }

    pub fn node_list(&self) -> Vec<EntityId> {
        self.incidence.keys().copied().collect()
    }

    /// Indices into `facts` of personal facts touching `entity`; a fact whose
    /// endpoints coincide is listed once per endpoint.
    pub fn incident(&self, entity: EntityId) -> &[u32] {
        self.incidence.get(&entity).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn correct_count(&self) -> usize {
        self.facts.iter().filter(|pf| !pf.corrupted).count()
    }

    pub fn corrupted_count(&self) -> usize {
        self.facts.len() - self.correct_count()
    }

    /// `Σ_j s_j·|C_j|` for the given cluster sizes.
    pub fn budget(&self, sizes: &[usize]) -> f64 {
        sizes.iter().enumerate().map(|(j, &n)| self.coverage_for(j) * n as f64).sum()
    }
}

fn candidate_count(graph: &KnowledgeGraph, replaced: EntityId, other: EntityId) -> usize {
    let pool = graph.entities_of_type(graph.semantic_type(replaced));
    let other_in_pool = graph.semantic_type(other) == graph.semantic_type(replaced);
    pool.len() - 1 - usize::from(other_in_pool)
}

/// Replace the endpoint on `side` by a uniform same-type entity other than the
/// original and the opposite endpoint.
pub fn corrupt_fact_side(graph: &KnowledgeGraph, fact: &Fact, side: Side, rng: &mut impl Rng) -> Option<Fact> {
    let (replaced, other) = match side {
        Side::Head => (fact.head, fact.tail),
        Side::Tail => (fact.tail, fact.head),
    };
    if candidate_count(graph, replaced, other) == 0 {
        return None;
    }
    let pool = graph.entities_of_type(graph.semantic_type(replaced));
    let pick = loop {
        let e = pool[rng.random_range(0..pool.len())];
        if e != replaced && e != other {
            break e;
        }
    };
    Some(match side {
        Side::Head => Fact { head: pick, ..*fact },
        Side::Tail => Fact { tail: pick, ..*fact },
    })
}

/// Corrupt one endpoint chosen uniformly; falls back to the other side when the chosen one has no substitute.
pub fn corrupt_fact(graph: &KnowledgeGraph, fact: &Fact, rng: &mut impl Rng) -> Result<Fact> {
    let (first, second) = if rng.random_bool(0.5) { (Side::Head, Side::Tail) } else { (Side::Tail, Side::Head) };
    corrupt_fact_side(graph, fact, first, rng)
        .or_else(|| corrupt_fact_side(graph, fact, second, rng))
        .ok_or_else(|| Error::Uncorruptible(graph.fact_id(fact).map(FactId::index).unwrap_or(usize::MAX)))
}

struct Draw<'a> {
    graph: &'a KnowledgeGraph,
    master: u64,
    expert_seed: u64,
    options: ExpertOptions,
}

impl Draw<'_> {
    fn personal(&self, id: FactId, cluster: usize, keep: bool) -> Result<PersonalFact> {
        let fact = self.graph.fact(id);
        if keep {
            return Ok(PersonalFact { source: id, fact, corrupted: false, cluster });
        }
        let mut rng = match self.options.misconceptions {
            Misconceptions::Independent => rng_for(self.expert_seed, "corrupt", id.0 as u64),
            Misconceptions::Shared => rng_for(self.master, "misconception", id.0 as u64),
        };
        match corrupt_fact(self.graph, &fact, &mut rng) {
            Ok(bad) => Ok(PersonalFact { source: id, fact: bad, corrupted: true, cluster }),
            Err(e) => match self.options.on_uncorruptible {
                OnUncorruptible::Error => Err(e),
                OnUncorruptible::KeepCorrect => Ok(PersonalFact { source: id, fact, corrupted: false, cluster }),
            },
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::validation(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

pub fn expert_seed(master: u64, expert_id: usize) -> u64 {
    derive_seed(master, "expert", expert_id as u64)
}

pub fn build_denoising_experts(graph: &KnowledgeGraph, n_e: usize, c: f64, seed: u64) -> Result<Vec<ExpertProfile>> {
    build_denoising_experts_with(graph, n_e, c, seed, ExpertOptions::for_setting(Setting::Denoising))
}

pub fn build_denoising_experts_with(
    graph: &KnowledgeGraph,
    n_e: usize,
    c: f64,
    seed: u64,
    options: ExpertOptions,
) -> Result<Vec<ExpertProfile>> {
    check_unit("coverage", c)?;
    if n_e == 0 {
        return Err(Error::validation("need at least one expert"));
    }
    (0..n_e)
        .into_par_iter()
        .map(|id| {
            let es = expert_seed(seed, id);
            let draw = Draw { graph, master: seed, expert_seed: es, options };
            let mut keep_rng = rng_for(es, "keep", 0);
            let facts = (0..graph.num_facts())
                .map(|f| {
                    let keep = keep_rng.random_bool(c);
                    draw.personal(FactId(f as u32), 0, keep)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ExpertProfile::new(id, Setting::Denoising, vec![c], facts, es))
        })
        .collect()
}

/// Greedy concentrated coverage: clusters in `order` get `s = 1` while the budget
/// lasts, the next one takes the fractional remainder, the rest 0.
pub fn greedy_coverage(sizes: &[usize], order: &[usize], budget: f64) -> Vec<f64> {
    let mut s = vec![0.0; sizes.len()];
    let mut remaining = budget;
    for &j in order {
        if remaining <= 0.0 {
            break;
        }
        let size = sizes[j] as f64;
        if size == 0.0 {
            continue;
        }
        if remaining >= size {
            s[j] = 1.0;
            remaining -= size;
        } else {
            s[j] = remaining / size;
            remaining = 0.0;
        }
    }
    s
}

pub fn build_selection_experts(
    graph: &KnowledgeGraph,
    partition: &EdgePartition,
    n_e: usize,
    c: f64,
    seed: u64,
) -> Result<Vec<ExpertProfile>> {
    build_selection_experts_with(graph, partition, n_e, c, seed, ExpertOptions::for_setting(Setting::Selection))
}

pub fn build_selection_experts_with(
    graph: &KnowledgeGraph,
    partition: &EdgePartition,
    n_e: usize,
    c: f64,
    seed: u64,
    options: ExpertOptions,
) -> Result<Vec<ExpertProfile>> {
    check_unit("coverage", c)?;
    if c == 0.0 {
        return Err(Error::validation("selection coverage must be positive"));
    }
    if n_e == 0 {
        return Err(Error::validation("need at least one expert"));
    }
    partition.check_graph(graph)?;
    let budget = c * graph.num_facts() as f64;
    (0..n_e)
        .into_par_iter()
        .map(|id| {
            let es = expert_seed(seed, id);
            let mut order: Vec<usize> = (0..partition.k()).collect();
            order.shuffle(&mut rng_for(es, "order", 0));
            let coverage = greedy_coverage(partition.sizes(), &order, budget);
            let draw = Draw { graph, master: seed, expert_seed: es, options };
            let mut keep_rng = rng_for(es, "keep", 0);
            let facts = (0..graph.num_facts())
                .map(|f| {
                    let id = FactId(f as u32);
                    let cluster = partition.cluster_of(id);
                    let s = coverage[cluster];
                    let keep = s >= 1.0 || (s > 0.0 && keep_rng.random_bool(s));
                    draw.personal(id, cluster, keep)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ExpertProfile::new(id, Setting::Selection, coverage, facts, es))
        })
        .collect()
}

/// One perfect expert per non-empty cluster, in cluster order.
pub fn build_generalization_experts(graph: &KnowledgeGraph, partition: &EdgePartition) -> Result<Vec<ExpertProfile>> {
    partition.check_graph(graph)?;
    let members = partition.members();
    Ok(members
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .enumerate()
        .map(|(id, (cluster, m))| {
            let mut coverage = vec![0.0; partition.k()];
            coverage[cluster] = 1.0;
            let facts = m
                .iter()
                .map(|&f| PersonalFact { source: f, fact: graph.fact(f), corrupted: false, cluster })
                .collect();
            ExpertProfile::new(id, Setting::Generalization, coverage, facts, 0)
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpertDoc {
    expert_id: usize,
    setting: Setting,
    coverage_vector: Vec<f64>,
    seed: u64,
    facts: Vec<[u32; 3]>,
    corrupted_flags: Vec<bool>,
    source_ids: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpertSetDoc {
    experts: Vec<ExpertDoc>,
}

pub fn experts_to_json(experts: &[ExpertProfile]) -> Vec<u8> {
    let doc = ExpertSetDoc {
        experts: experts
            .iter()
            .map(|e| ExpertDoc {
                expert_id: e.expert_id,
                setting: e.setting,
                coverage_vector: e.coverage.clone(),
                seed: e.seed,
                facts: e.facts.iter().map(|pf| [pf.fact.head.0, pf.fact.relation.0, pf.fact.tail.0]).collect(),
                corrupted_flags: e.facts.iter().map(|pf| pf.corrupted).collect(),
                source_ids: e.facts.iter().map(|pf| pf.source.0).collect(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec(&doc).expect("expert set serializes");
    bytes.push(b'\n');
    bytes
}

/// Loads an expert set; clusters are recovered from `partition` (required unless every expert is denoising).
pub fn experts_from_json(bytes: &[u8], graph: &KnowledgeGraph, partition: Option<&EdgePartition>) -> Result<Vec<ExpertProfile>> {
    let doc: ExpertSetDoc = serde_json::from_slice(bytes).map_err(Error::from_json)?;
    if let Some(p) = partition {
        p.check_graph(graph)?;
    }
    doc.experts
        .into_iter()
        .map(|e| {
            let n = e.facts.len();
            if e.corrupted_flags.len() != n || e.source_ids.len() != n {
                return Err(Error::validation(format!("expert {}: facts, flags and sources differ in length", e.expert_id)));
            }
            if e.setting != Setting::Denoising && partition.is_none() {
                return Err(Error::validation(format!("expert {} needs a partition", e.expert_id)));
            }
            let facts = e
                .facts
                .iter()
                .zip(&e.corrupted_flags)
                .zip(&e.source_ids)
                .map(|((&[h, r, t], &corrupted), &src)| {
                    if src as usize >= graph.num_facts() {
                        return Err(Error::Unknown { what: "source fact", id: src.to_string() });
                    }
                    for x in [h, t] {
                        if x as usize >= graph.num_entities() {
                            return Err(Error::Unknown { what: "entity", id: x.to_string() });
                        }
                    }
                    if r as usize >= graph.relations().len() {
                        return Err(Error::Unknown { what: "relation", id: r.to_string() });
                    }
                    let source = FactId(src);
                    let cluster = partition.map(|p| p.cluster_of(source)).unwrap_or(0);
                    Ok(PersonalFact { source, fact: Fact::new(h, r, t), corrupted, cluster })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ExpertProfile::new(e.expert_id, e.setting, e.coverage_vector, facts, e.seed))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::test_support::random_graph;
    use crate::kg::{build_graph, Entity, Relation, RelationId};
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn typed_graph() -> KnowledgeGraph {
        let types = ["person", "person", "city", "city", "city", "city", "city"];
        let entities = types
            .iter()
            .enumerate()
            .map(|(i, t)| Entity { id: EntityId(i as u32), name: format!("N{i}"), semantic_type: t.to_string() })
            .collect();
        let facts = vec![Fact::new(0, 0, 2), Fact::new(1, 0, 3), Fact::new(0, 1, 4)];
        build_graph(entities, vec![Relation { id: RelationId(0), name: "born in".into() }, Relation { id: RelationId(1), name: "lives in".into() }], facts)
            .unwrap()
    }

    #[test]
    fn forced_head_side_with_single_candidate() {
        let g = typed_graph();
        let f = Fact::new(0, 0, 2);
        let bad = corrupt_fact_side(&g, &f, Side::Head, &mut rng_for(1, "t", 0)).unwrap();
        assert_eq!(bad, Fact::new(1, 0, 2));
    }

    #[test]
    fn singleton_pools_are_uncorruptible() {
        let entities = vec![
            Entity { id: EntityId(0), name: "a".into(), semantic_type: "x".into() },
            Entity { id: EntityId(1), name: "b".into(), semantic_type: "y".into() },
        ];
        let g = build_graph(entities, vec![Relation { id: RelationId(0), name: "r".into() }], vec![Fact::new(0, 0, 1)]).unwrap();
        let err = corrupt_fact(&g, &g.facts()[0], &mut rng_for(0, "t", 0)).unwrap_err();
        assert!(err.to_string().contains("uncorruptible fact"));
        assert!(build_denoising_experts(&g, 1, 0.0, 0).is_err());
        let lenient = ExpertOptions { on_uncorruptible: OnUncorruptible::KeepCorrect, misconceptions: Misconceptions::Independent };
        let experts = build_denoising_experts_with(&g, 1, 0.0, 0, lenient).unwrap();
        assert_eq!(experts[0].correct_count(), 1);
        assert!(build_denoising_experts(&g, 1, 1.0, 0).is_ok());
    }

    #[test]
    fn corruption_preserves_relation_and_type() {
        let g = random_graph(4, 60, 3, 5, 200);
        let mut rng = rng_for(4, "t", 0);
        for i in 0..10_000 {
            let f = g.facts()[i % g.num_facts()];
            let bad = corrupt_fact(&g, &f, &mut rng).unwrap();
            assert_eq!(bad.relation, f.relation);
            assert_eq!((bad.head != f.head) as u8 + (bad.tail != f.tail) as u8, 1);
            assert_eq!(g.semantic_type(bad.head), g.semantic_type(f.head));
            assert_eq!(g.semantic_type(bad.tail), g.semantic_type(f.tail));
            assert_ne!(bad.head, bad.tail);
        }
    }

    #[test]
    fn substitutes_are_uniform() {
        let g = random_graph(8, 40, 2, 3, 50);
        let f = g.facts()[0];
        let pool: Vec<EntityId> = g
            .entities_of_type(g.semantic_type(f.tail))
            .iter()
            .copied()
            .filter(|&e| e != f.tail && e != f.head)
            .collect();
        let mut counts = BTreeMap::new();
        let mut rng = rng_for(8, "uniform", 0);
        let draws = 100_000;
        for _ in 0..draws {
            let bad = corrupt_fact_side(&g, &f, Side::Tail, &mut rng).unwrap();
            *counts.entry(bad.tail).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), pool.len());
        let expected = draws as f64 / pool.len() as f64;
        let stat: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let critical = ChiSquared::new((pool.len() - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi2 {stat} >= {critical}");
    }

    #[test]
    fn denoising_extremes_and_binomial_count() {
        let g = random_graph(2, 300, 3, 6, 1000);
        let perfect = build_denoising_experts(&g, 3, 1.0, 5).unwrap();
        for e in &perfect {
            assert!(e.facts.iter().all(|pf| pf.fact == g.fact(pf.source) && !pf.corrupted));
        }
        let hopeless = build_denoising_experts(&g, 3, 0.0, 5).unwrap();
        assert!(hopeless.iter().all(|e| e.correct_count() == 0));
        let n = g.num_facts() as f64;
        let sd = (n * 0.2 * 0.8).sqrt();
        for e in build_denoising_experts(&g, 20, 0.2, 5).unwrap() {
            assert_eq!(e.facts.len(), g.num_facts());
            assert!((e.correct_count() as f64 - 0.2 * n).abs() <= 4.0 * sd);
        }
    }

    #[test]
    fn experts_are_stable_under_n_e() {
        let g = random_graph(3, 100, 3, 4, 300);
        let few = build_denoising_experts(&g, 10, 0.4, 9).unwrap();
        let many = build_denoising_experts(&g, 100, 0.4, 9).unwrap();
        assert_eq!(&few[..], &many[..10]);
    }

    #[test]
    fn independent_errors_overlap_at_product_rate() {
        let g = random_graph(6, 400, 2, 6, 2000);
        let experts = build_denoising_experts(&g, 2, 0.5, 1).unwrap();
        let both = (0..g.num_facts())
            .filter(|&i| experts[0].facts[i].corrupted && experts[1].facts[i].corrupted)
            .count() as f64;
        let n = g.num_facts() as f64;
        // product rate 0.25 with a binomial 4-sigma band
        assert!((both - 0.25 * n).abs() <= 4.0 * (n * 0.25 * 0.75).sqrt(), "{both}");
        // identical corruptions happen only by collision
        let same = (0..g.num_facts())
            .filter(|&i| experts[0].facts[i].corrupted && experts[0].facts[i] == experts[1].facts[i])
            .count() as f64;
        assert!(same < 0.1 * both);
    }

    #[test]
    fn shared_misconceptions_coincide() {
        let g = random_graph(6, 400, 2, 6, 500);
        let p = EdgePartition::new(1, vec![0; g.num_facts()]).unwrap();
        let experts = build_selection_experts(&g, &p, 2, 0.5, 1).unwrap();
        for i in 0..g.num_facts() {
            let (a, b) = (&experts[0].facts[i], &experts[1].facts[i]);
            if a.corrupted && b.corrupted {
                assert_eq!(a.fact, b.fact);
            }
        }
    }

    #[test]
    fn greedy_coverage_examples() {
        assert_eq!(greedy_coverage(&[60, 40], &[0, 1], 50.0), vec![50.0 / 60.0, 0.0]);
        assert_eq!(greedy_coverage(&[60, 40], &[1, 0], 50.0), vec![10.0 / 60.0, 1.0]);
        assert_eq!(greedy_coverage(&[60, 40], &[0, 1], 100.0), vec![1.0, 1.0]);
    }

    #[test]
    fn selection_budgets_hold() {
        let g = random_graph(12, 600, 4, 8, 2000);
        let k = 50;
        let assignment: Vec<usize> = (0..g.num_facts()).map(|i| (i * 7 + i / 3) % k).collect();
        let p = EdgePartition::new(k, assignment).unwrap();
        let target = 0.1 * g.num_facts() as f64;
        for e in build_selection_experts(&g, &p, 100, 0.1, 3).unwrap() {
            assert!((e.budget(p.sizes()) - target).abs() <= 1.0);
            for pf in &e.facts {
                assert_eq!(pf.cluster, p.cluster_of(pf.source));
                if e.coverage[pf.cluster] == 1.0 {
                    assert!(!pf.corrupted);
                }
                if e.coverage[pf.cluster] == 0.0 {
                    assert!(pf.corrupted);
                }
            }
        }
        let full = build_selection_experts(&g, &p, 2, 1.0, 3).unwrap();
        assert!(full.iter().all(|e| e.coverage.iter().zip(p.sizes()).all(|(&s, &n)| s == 1.0 || n == 0)));
    }

    #[test]
    fn generalization_experts_partition_facts() {
        let g = random_graph(12, 100, 3, 4, 300);
        let assignment: Vec<usize> = (0..g.num_facts()).map(|i| [0, 2, 3][i % 3]).collect();
        let p = EdgePartition::new(5, assignment).unwrap();
        let experts = build_generalization_experts(&g, &p).unwrap();
        assert_eq!(experts.len(), 3);
        let mut seen = vec![0; g.num_facts()];
        for e in &experts {
            assert_eq!(e.corrupted_count(), 0);
            assert_eq!(e.coverage.iter().filter(|&&s| s == 1.0).count(), 1);
            for pf in &e.facts {
                seen[pf.source.index()] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        // expert j knows exactly the two-hop facts internal to its cluster
        for th in g.enumerate_two_hop() {
            let a = g.fact_id(&th.first_hop()).unwrap();
            let b = g.fact_id(&th.second_hop()).unwrap();
            let knowers = experts
                .iter()
                .filter(|e| e.facts.iter().any(|pf| pf.source == a) && e.facts.iter().any(|pf| pf.source == b))
                .count();
            assert_eq!(knowers, usize::from(p.cluster_of(a) == p.cluster_of(b)));
        }
    }

    #[test]
    fn json_round_trip() {
        let g = random_graph(1, 80, 3, 4, 200);
        let p = EdgePartition::new(4, (0..g.num_facts()).map(|i| i % 4).collect()).unwrap();
        let experts = build_selection_experts(&g, &p, 3, 0.3, 2).unwrap();
        let bytes = experts_to_json(&experts);
        let back = experts_from_json(&bytes, &g, Some(&p)).unwrap();
        assert_eq!(back, experts);
        assert!(experts_from_json(&bytes, &g, None).is_err());
        let noisy = build_denoising_experts(&g, 2, 0.5, 2).unwrap();
        assert_eq!(experts_from_json(&experts_to_json(&noisy), &g, None).unwrap(), noisy);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn every_corruption_is_well_formed(seed in any::<u64>(), c in 0.0f64..1.0) {
            let g = random_graph(seed, 80, 3, 4, 250);
            for e in build_denoising_experts(&g, 3, c, seed).unwrap() {
                prop_assert_eq!(e.facts.len(), g.num_facts());
                for pf in &e.facts {
                    let src = g.fact(pf.source);
                    prop_assert_eq!(pf.fact.relation, src.relation);
                    if pf.corrupted {
                        let changed = (pf.fact.head != src.head) as u8 + (pf.fact.tail != src.tail) as u8;
                        prop_assert_eq!(changed, 1);
                        prop_assert_eq!(g.semantic_type(pf.fact.head), g.semantic_type(src.head));
                        prop_assert_eq!(g.semantic_type(pf.fact.tail), g.semantic_type(src.tail));
                    } else {
                        prop_assert_eq!(pf.fact, src);
                    }
                }
            }
        }
    }
}
