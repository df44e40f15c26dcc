//! Synthetic typed knowledge graphs.
//!
//! Entities are laid out type by type. Each relation gets a share of the edge
//! budget proportional to its head-type population (capped by how many distinct
//! facts its typing admits). Within a relation the heads split the edges evenly,
//! so most `(head, relation)` pairs have one or two tails, and tails are drawn
//! from a Zipf-like law over a seeded ranking of the tail-type pool, so hubs
//! such as popular countries and languages collect most of the in-edges.

pub mod names;

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kg::{build_graph, Entity, EntityId, Fact, KnowledgeGraph, Relation, RelationId};
use crate::seed::{derive_seed, rng_for};

pub use names::{
    pseudoword_name, rename_entities, IdentityNames, LlmTransport, NameProvider, NameRequest, PseudowordNames,
    RemoteNames, RetryPolicy,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpec {
    pub name: String,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub name: String,
    pub head_type: String,
    pub tail_type: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphGenConfig {
    pub n_entities: usize,
    pub types: Vec<TypeSpec>,
    pub relations: Vec<RelationSpec>,
    pub target_edges: usize,
    /// Zipf exponent for tail selection by hub rank; 0 is uniform. Heads share
    /// each relation's edges evenly.
    pub degree_skew: f64,
    pub seed: u64,
    /// At most one tail per `(head, relation)`.
    #[serde(default)]
    pub functional: bool,
}

const DESK_TYPES: [(&str, f64); 8] = [
    ("person", 0.35),
    ("city", 0.15),
    ("country", 0.05),
    ("organization", 0.12),
    ("occupation", 0.08),
    ("award", 0.05),
    ("work", 0.15),
    ("language", 0.05),
];

const RELATIONS: [(&str, &str, &str); 39] = [
    ("country of citizenship", "person", "country"),
    ("place of birth", "person", "city"),
    ("place of death", "person", "city"),
    ("occupation", "person", "occupation"),
    ("award received by", "person", "award"),
    ("employer", "person", "organization"),
    ("native language", "person", "language"),
    ("notable work", "person", "work"),
    ("capital", "country", "city"),
    ("head of government", "country", "person"),
    ("official language", "country", "language"),
    ("country", "city", "country"),
    ("mayor", "city", "person"),
    ("headquarters location", "organization", "city"),
    ("founder", "organization", "person"),
    ("screenwriter", "work", "person"),
    ("director", "work", "person"),
    ("country of origin", "work", "country"),
    ("original language", "work", "language"),
    ("presenter", "award", "organization"),
    ("spouse", "person", "person"),
    ("father", "person", "person"),
    ("mother", "person", "person"),
    ("alma mater", "person", "organization"),
    ("affiliation", "person", "organization"),
    ("field of work", "person", "occupation"),
    ("residence", "person", "city"),
    ("second language", "person", "language"),
    ("sister city", "city", "city"),
    ("neighboring country", "country", "country"),
    ("largest city", "country", "city"),
    ("parent organization", "organization", "organization"),
    ("industry", "organization", "occupation"),
    ("country of incorporation", "organization", "country"),
    ("producer", "work", "person"),
    ("composer", "work", "person"),
    ("publisher", "work", "organization"),
    ("narrative location", "work", "city"),
    ("notable recipient", "award", "person"),
];

fn spec_lists(relations: usize) -> (Vec<TypeSpec>, Vec<RelationSpec>) {
    let types = DESK_TYPES.iter().map(|&(n, f)| TypeSpec { name: n.into(), fraction: f }).collect();
    let rels = RELATIONS[..relations]
        .iter()
        .map(|&(n, h, t)| RelationSpec { name: n.into(), head_type: h.into(), tail_type: t.into() })
        .collect();
    (types, rels)
}

impl GraphGenConfig {
    /// 1,000 entities, 8 types, 20 relations, 5,000 edges.
    pub fn desk(seed: u64) -> Self {
        let (types, relations) = spec_lists(20);
        GraphGenConfig { n_entities: 1000, types, relations, target_edges: 5000, degree_skew: 0.5, seed, functional: false }
    }

    /// 25,000 entities, 39 relations, 54,500 edges.
    pub fn reference(seed: u64) -> Self {
        let (types, relations) = spec_lists(39);
        GraphGenConfig {
            n_entities: 25_000,
            types,
            relations,
            target_edges: 54_500,
            degree_skew: 0.5,
            seed,
            functional: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_entities == 0 || self.target_edges == 0 {
            return Err(Error::validation("n_entities and target_edges must be positive"));
        }
        if self.types.is_empty() || self.relations.is_empty() {
            return Err(Error::validation("at least one type and one relation are required"));
        }
        let total: f64 = self.types.iter().map(|t| t.fraction).sum();
        if (total - 1.0).abs() > 1e-9 || self.types.iter().any(|t| !(t.fraction >= 0.0)) {
            return Err(Error::validation(format!("type fractions must be non-negative and sum to 1 (got {total})")));
        }
        let mut seen = HashSet::new();
        if let Some(t) = self.types.iter().find(|t| t.name.is_empty() || !seen.insert(t.name.as_str())) {
            return Err(Error::validation(format!("type names must be unique and non-empty ({:?})", t.name)));
        }
        if !(self.degree_skew >= 0.0 && self.degree_skew.is_finite()) {
            return Err(Error::validation("degree_skew must be a non-negative real"));
        }
        let mut rel_names = HashSet::new();
        for r in &self.relations {
            if r.name.trim().is_empty() || !rel_names.insert(r.name.as_str()) {
                return Err(Error::validation(format!("relation names must be unique and non-empty ({:?})", r.name)));
            }
            for ty in [&r.head_type, &r.tail_type] {
                if !seen.contains(ty.as_str()) {
                    return Err(Error::Infeasible(format!("relation {:?} uses undeclared type {ty:?}", r.name)));
                }
            }
        }
        if self.target_edges as u128 > (self.n_entities as u128).pow(2) {
            return Err(Error::Infeasible("target_edges exceeds n_entities^2".into()));
        }
        Ok(())
    }

    /// Entities per type by largest-remainder apportionment.
    pub fn type_counts(&self) -> Vec<usize> {
        let weights: Vec<f64> = self.types.iter().map(|t| t.fraction).collect();
        apportion_real(self.n_entities, &weights)
    }
}

fn apportion_real(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Builds a graph as a pure function of `config`.
pub fn generate_graph(config: &GraphGenConfig) -> Result<KnowledgeGraph> {
    config.validate()?;
    let counts = config.type_counts();
    let mut pools: Vec<Vec<EntityId>> = Vec::with_capacity(counts.len());
    let mut entities = Vec::with_capacity(config.n_entities);
    let mut taken = HashSet::with_capacity(config.n_entities);
    let name_seed = derive_seed(config.seed, "names", 0);
    for (spec, &count) in config.types.iter().zip(&counts) {
        let mut pool = Vec::with_capacity(count);
        for index in 0..count as u64 {
            let id = EntityId(entities.len() as u32);
            let mut provider = PseudowordNames { seed: name_seed };
            let mut request = NameRequest {
                entity: id,
                semantic_type: &spec.name,
                index_in_type: index,
                current_name: "",
                neighbor_names: Vec::new(),
                start_letter: 'A',
                attempt: 0,
            };
            let name = loop {
                let candidate = provider.name(&request)?;
                if taken.insert(candidate.clone()) {
                    break candidate;
                }
                request.attempt += 1;
                if request.attempt > names::MAX_REDRAWS {
                    return Err(Error::Infeasible(format!("could not find a unique name for entity {}", id.0)));
                }
            };
            entities.push(Entity { id, name, semantic_type: spec.name.clone() });
            pool.push(id);
        }
        pools.push(pool);
    }
    let type_pos = |name: &str| config.types.iter().position(|t| t.name == name).expect("validated");

    for (spec, pool) in config.types.iter().zip(&pools) {
        if pool.len() < 2 {
            let used = config.relations.iter().any(|r| r.head_type == spec.name || r.tail_type == spec.name);
            if used || pool.is_empty() {
                return Err(Error::Infeasible(format!(
                    "type {:?} has {} entities; at least 2 are required so facts stay corruptible",
                    spec.name,
                    pool.len()
                )));
            }
        }
    }

    let capacity: Vec<usize> = config
        .relations
        .iter()
        .map(|r| {
            let h = pools[type_pos(&r.head_type)].len();
            let t = pools[type_pos(&r.tail_type)].len();
            let tails = if r.head_type == r.tail_type { t.saturating_sub(1) } else { t };
            if config.functional {
                if tails > 0 {
                    h
                } else {
                    0
                }
            } else {
                h * tails
            }
        })
        .collect();
    let head_counts: Vec<f64> = config.relations.iter().map(|r| pools[type_pos(&r.head_type)].len() as f64).collect();
    let quotas = relation_quotas(config.target_edges, &capacity, &head_counts)?;

    // Zipf ranking is per type so the same hubs recur across relations.
    let rankings: Vec<Vec<EntityId>> = pools
        .iter()
        .enumerate()
        .map(|(i, pool)| {
            let mut ranked = pool.clone();
            ranked.shuffle(&mut rng_for(config.seed, "hubs", i as u64));
            ranked
        })
        .collect();

    let mut facts = Vec::with_capacity(config.target_edges);
    for (r, spec) in config.relations.iter().enumerate() {
        let relation = RelationId(r as u32);
        let heads = &pools[type_pos(&spec.head_type)];
        let tails = &rankings[type_pos(&spec.tail_type)];
        let mut rng = rng_for(config.seed, "relation", r as u64);
        facts.extend(sample_relation(relation, heads, tails, quotas[r], config, &mut rng));
    }

    let relations =
        config.relations.iter().enumerate().map(|(i, r)| Relation { id: RelationId(i as u32), name: r.name.clone() }).collect();
    build_graph(entities, relations, facts)
}

/// Splits `target` across relations in proportion to `weight`, spilling over
/// from relations that reach capacity.
fn relation_quotas(target: usize, capacity: &[usize], weight: &[f64]) -> Result<Vec<usize>> {
    let mut quotas = vec![0usize; capacity.len()];
    let mut remaining = target;
    loop {
        let open: Vec<usize> = (0..capacity.len()).filter(|&r| quotas[r] < capacity[r]).collect();
        if remaining == 0 {
            return Ok(quotas);
        }
        if open.is_empty() {
            return Err(Error::Infeasible(format!(
                "target_edges {target} exceeds the {} distinct facts the relation typing admits",
                capacity.iter().sum::<usize>()
            )));
        }
        let share = apportion_real(remaining, &open.iter().map(|&r| weight[r]).collect::<Vec<_>>());
        for (&r, s) in open.iter().zip(share) {
            let give = s.min(capacity[r] - quotas[r]);
            quotas[r] += give;
            remaining -= give;
        }
    }
}

fn sample_relation(
    relation: RelationId,
    heads: &[EntityId],
    tails: &[EntityId],
    quota: usize,
    config: &GraphGenConfig,
    rng: &mut impl Rng,
) -> Vec<Fact> {
    // Heads share the quota evenly; tails are drawn by hub rank.
    let mut order: Vec<EntityId> = heads.to_vec();
    order.sort_unstable();
    order.shuffle(rng);
    let (base, extra) = (quota / heads.len(), quota % heads.len());
    let weights: Vec<f64> = (0..tails.len()).map(|k| ((k + 1) as f64).powf(-config.degree_skew)).collect();
    let tail_dist = WeightedIndex::new(&weights).expect("positive weights");
    let mut chosen: HashSet<(EntityId, EntityId)> = HashSet::with_capacity(quota);
    let mut short = 0;
    for (i, &h) in order.iter().enumerate() {
        let want = base + usize::from(i < extra);
        let mut got = 0;
        let mut attempts = 0;
        while got < want && attempts < 20 * want + 100 {
            attempts += 1;
            let t = tails[tail_dist.sample(rng)];
            if t != h && chosen.insert((h, t)) {
                got += 1;
            }
        }
        short += want - got;
    }
    if short > 0 {
        // Near capacity: enumerate the free slots and take a uniform subset.
        let mut free: Vec<(EntityId, EntityId)> = Vec::new();
        let mut sorted_heads = heads.to_vec();
        sorted_heads.sort_unstable();
        for &h in &sorted_heads {
            if config.functional && chosen.iter().any(|&(ch, _)| ch == h) {
                continue;
            }
            free.extend(tails.iter().filter(|&&t| t != h && !chosen.contains(&(h, t))).map(|&t| (h, t)));
        }
        free.shuffle(rng);
        for (h, t) in free {
            if short == 0 {
                break;
            }
            if config.functional && chosen.iter().any(|&(ch, _)| ch == h) {
                continue;
            }
            chosen.insert((h, t));
            short -= 1;
        }
    }
    let mut facts: Vec<Fact> = chosen.into_iter().map(|(head, tail)| Fact { head, relation, tail }).collect();
    facts.sort_unstable();
    facts
}

/// Hex SHA-256 over entity types and the id-level fact list. Names are excluded,
/// so renaming leaves it unchanged.
pub fn structure_digest(graph: &KnowledgeGraph) -> String {
    let mut hasher = Sha256::new();
    for e in graph.entities() {
        hasher.update(e.id.0.to_le_bytes());
        hasher.update(e.semantic_type.as_bytes());
        hasher.update([0]);
    }
    hasher.update((graph.relations().len() as u64).to_le_bytes());
    for f in graph.facts() {
        hasher.update(f.head.0.to_le_bytes());
        hasher.update(f.relation.0.to_le_bytes());
        hasher.update(f.tail.0.to_le_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::serialize;
    use std::collections::HashMap;
    use std::time::Instant;

    fn small(seed: u64) -> GraphGenConfig {
        GraphGenConfig {
            n_entities: 10,
            types: vec![TypeSpec { name: "thing".into(), fraction: 1.0 }],
            relations: vec![RelationSpec { name: "link".into(), head_type: "thing".into(), tail_type: "thing".into() }],
            target_edges: 5,
            degree_skew: 0.0,
            seed,
            functional: false,
        }
    }

    #[test]
    fn small_graph_is_reproducible() {
        let a = generate_graph(&small(7)).unwrap();
        let b = generate_graph(&small(7)).unwrap();
        assert_eq!(a.num_facts(), 5);
        assert_eq!(serialize(&a), serialize(&b));
        assert_ne!(serialize(&a), serialize(&generate_graph(&small(8)).unwrap()));
    }

    #[test]
    fn desk_graph_is_fast_and_well_typed() {
        let config = GraphGenConfig::desk(1);
        let start = Instant::now();
        let g = generate_graph(&config).unwrap();
        assert!(start.elapsed().as_secs_f64() < 1.0, "took {:?}", start.elapsed());
        assert_eq!(g.num_entities(), 1000);
        assert_eq!(g.relations().len(), 20);
        assert!((g.num_facts() as f64 - 5000.0).abs() <= 50.0);
        for f in g.facts() {
            let spec = &config.relations[f.relation.index()];
            assert_eq!(g.semantic_type(f.head), spec.head_type);
            assert_eq!(g.semantic_type(f.tail), spec.tail_type);
        }
        for pool in g.type_index().values() {
            assert!(pool.len() >= 20);
        }
    }

    #[test]
    fn reference_scale_graph_imports() {
        let g = generate_graph(&GraphGenConfig::reference(3)).unwrap();
        let back = crate::kg::deserialize(&serialize(&g)).unwrap();
        assert_eq!(back.num_entities(), 25_000);
        assert_eq!(back.relations().len(), 39);
        assert!((back.num_facts() as f64 - 54_500.0).abs() <= 545.0);
    }

    #[test]
    fn functional_flag_yields_single_tails() {
        let mut config = GraphGenConfig::desk(2);
        config.functional = true;
        config.target_edges = 3000;
        let g = generate_graph(&config).unwrap();
        assert_eq!(g.num_facts(), 3000);
        assert!(g.multi_tail_prefixes().is_empty());
    }

    #[test]
    fn zero_entity_type_is_infeasible() {
        let mut config = small(1);
        config.types.push(TypeSpec { name: "ghost".into(), fraction: 0.0 });
        config.relations.push(RelationSpec { name: "haunts".into(), head_type: "ghost".into(), tail_type: "thing".into() });
        assert!(matches!(generate_graph(&config), Err(Error::Infeasible(_))));
        let mut config = small(1);
        config.relations[0].tail_type = "nothing".into();
        assert!(matches!(generate_graph(&config), Err(Error::Infeasible(_))));
        let mut config = small(1);
        config.target_edges = 91;
        assert!(matches!(generate_graph(&config), Err(Error::Infeasible(_))));
    }

    #[test]
    fn unskewed_tail_degrees_are_uniform() {
        // chi-square over tails of one relation, pooled across seeds
        let mut counts: HashMap<EntityId, f64> = HashMap::new();
        let mut total = 0.0;
        for seed in 0..20 {
            let config = GraphGenConfig {
                n_entities: 200,
                types: vec![TypeSpec { name: "a".into(), fraction: 0.5 }, TypeSpec { name: "b".into(), fraction: 0.5 }],
                relations: vec![RelationSpec { name: "r".into(), head_type: "a".into(), tail_type: "b".into() }],
                target_edges: 500,
                degree_skew: 0.0,
                seed,
                functional: false,
            };
            let g = generate_graph(&config).unwrap();
            for f in g.facts() {
                *counts.entry(f.tail).or_default() += 1.0;
                total += 1.0;
            }
        }
        let k = 100.0;
        let expected = total / k;
        let chi2: f64 = (100..200u32).map(|i| (counts.get(&EntityId(i)).copied().unwrap_or(0.0) - expected).powi(2) / expected).sum();
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let critical = ChiSquared::new(k - 1.0).unwrap().inverse_cdf(0.999);
        assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
    }

    #[test]
    fn skew_concentrates_tails() {
        let mut config = GraphGenConfig::desk(4);
        config.degree_skew = 1.0;
        let g = generate_graph(&config).unwrap();
        let max = g.degree_profile().in_degree.into_iter().max().unwrap();
        let mut flat = GraphGenConfig::desk(4);
        flat.degree_skew = 0.0;
        let flat_max = generate_graph(&flat).unwrap().degree_profile().in_degree.into_iter().max().unwrap();
        assert!(max > flat_max);
    }
}
