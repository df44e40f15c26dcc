//! Fictional entity names.
//!
//! [`pseudoword_name`] maps `(seed, type, index)` to a two-word name made of
//! pronounceable syllables. Within one type the map is injective: the index
//! goes through a seeded affine permutation of `[0, SYLLABLES^4)` before being
//! spelled out, so two indices never share a name. Names of different types
//! can still collide; [`rename_entities`] re-draws those.

use std::collections::{HashSet, VecDeque};
use std::thread;
use std::time::Duration;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{build_graph, Entity, EntityId, KnowledgeGraph};
use crate::seed::{derive_seed, rng_for};

const ONSETS: [&str; 20] =
    ["b", "br", "d", "dr", "f", "g", "gl", "k", "l", "m", "n", "p", "r", "s", "st", "t", "th", "v", "x", "z"];
const NUCLEI: [&str; 8] = ["a", "e", "i", "o", "u", "ae", "y", "or"];
const SYLLABLES: u64 = (ONSETS.len() * NUCLEI.len()) as u64;
const SPACE: u64 = SYLLABLES * SYLLABLES * SYLLABLES * SYLLABLES;

/// Bound on collision re-draws before giving up.
pub const MAX_REDRAWS: u32 = 16;

fn syllable(i: u64) -> String {
    let onset = ONSETS[(i / NUCLEI.len() as u64) as usize];
    let nucleus = NUCLEI[(i % NUCLEI.len() as u64) as usize];
    format!("{onset}{nucleus}")
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Deterministic pronounceable name, unique per `(type, index)` for a fixed seed.
///
/// Supports up to `SYLLABLES^4` (655,360,000) indices per type.
pub fn pseudoword_name(seed: u64, semantic_type: &str, index: u64) -> String {
    let key = derive_seed(seed, semantic_type, 0);
    let mut multiplier = (key % SPACE) | 1;
    while gcd(multiplier, SPACE) != 1 {
        multiplier = (multiplier + 2) % SPACE;
    }
    let offset = derive_seed(seed, semantic_type, 1) % SPACE;
    let mut y = ((index % SPACE) as u128 * multiplier as u128 + offset as u128) % SPACE as u128;
    let mut parts = [0u64; 4];
    for p in parts.iter_mut() {
        *p = (y % SYLLABLES as u128) as u64;
        y /= SYLLABLES as u128;
    }
    let first = capitalize(&(syllable(parts[0]) + &syllable(parts[1])));
    let second = capitalize(&(syllable(parts[2]) + &syllable(parts[3])));
    format!("{first} {second}")
}

/// Context handed to a [`NameProvider`] for one entity.
#[derive(Clone, Debug)]
pub struct NameRequest<'a> {
    pub entity: EntityId,
    pub semantic_type: &'a str,
    pub index_in_type: u64,
    pub current_name: &'a str,
    /// Names of neighbors that have already been renamed.
    pub neighbor_names: Vec<String>,
    pub start_letter: char,
    /// 0 on the first request, incremented on each collision re-draw.
    pub attempt: u32,
}

pub trait NameProvider {
    fn name(&mut self, request: &NameRequest<'_>) -> Result<String>;

    /// Whether entities should be visited breadth-first from country-type seeds.
    fn wants_bfs_order(&self) -> bool {
        false
    }
}

/// Keeps every name as it is.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityNames;

impl NameProvider for IdentityNames {
    fn name(&mut self, request: &NameRequest<'_>) -> Result<String> {
        Ok(request.current_name.to_string())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PseudowordNames {
    pub seed: u64,
}

impl NameProvider for PseudowordNames {
    fn name(&mut self, request: &NameRequest<'_>) -> Result<String> {
        let seed = if request.attempt == 0 { self.seed } else { derive_seed(self.seed, "redraw", request.attempt as u64) };
        Ok(pseudoword_name(seed, request.semantic_type, request.index_in_type))
    }
}

/// A text-completion backend. Implementations live outside the core crate.
pub trait LlmTransport {
    fn complete(&self, prompt: &str) -> std::result::Result<String, String>;
}

#[derive(Clone, Copy, Debug)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    /// Calls `op` up to `attempts` times, sleeping `base_delay * 2^k` between tries.
    pub fn run<T>(&self, mut op: impl FnMut() -> std::result::Result<T, String>) -> Result<T> {
        let mut last = String::from("no attempts made");
        for attempt in 0..self.attempts {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            }
            if attempt + 1 < self.attempts {
                thread::sleep(self.base_delay * 2u32.pow(attempt));
            }
        }
        Err(Error::Provider { attempts: self.attempts, message: last })
    }
}

/// Asks a language model for a fictional name given already-renamed neighbors.
pub struct RemoteNames<T> {
    pub transport: T,
    pub retry: RetryPolicy,
}

impl<T: LlmTransport> RemoteNames<T> {
    pub fn new(transport: T) -> Self {
        RemoteNames { transport, retry: RetryPolicy::default() }
    }

    pub fn prompt(request: &NameRequest<'_>) -> String {
        let mut prompt = format!(
            "Invent a fictional name for an entity of type \"{}\". The name must start with the letter '{}'.",
            request.semantic_type, request.start_letter
        );
        if !request.neighbor_names.is_empty() {
            prompt.push_str(" It is related to: ");
            prompt.push_str(&request.neighbor_names.join(", "));
            prompt.push('.');
        }
        if request.attempt > 0 {
            prompt.push_str(" Do not reuse an existing name.");
        }
        prompt.push_str(" Answer with the name only.");
        prompt
    }
}

impl<T: LlmTransport> NameProvider for RemoteNames<T> {
    fn name(&mut self, request: &NameRequest<'_>) -> Result<String> {
        let prompt = Self::prompt(request);
        let name = self.retry.run(|| {
            let raw = self.transport.complete(&prompt)?;
            let name = raw.trim().trim_matches('"').trim().to_string();
            if name.is_empty() || name.contains('\n') {
                Err(format!("unusable name {raw:?}"))
            } else {
                Ok(name)
            }
        })?;
        Ok(name)
    }

    fn wants_bfs_order(&self) -> bool {
        true
    }
}

/// Breadth-first visiting order seeded from every entity of type `country`
/// (then from the lowest unvisited id for components without one).
pub fn bfs_order(graph: &KnowledgeGraph) -> Vec<EntityId> {
    let n = graph.num_entities();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let seeds = graph.entities_of_type("country").iter().copied().chain((0..n as u32).map(EntityId));
    for start in seeds {
        if visited[start.index()] {
            continue;
        }
        visited[start.index()] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for u in neighbors(graph, v) {
                if !visited[u.index()] {
                    visited[u.index()] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order
}

fn neighbors(graph: &KnowledgeGraph, v: EntityId) -> Vec<EntityId> {
    let mut out: Vec<EntityId> = graph
        .out_facts(v)
        .iter()
        .map(|&f| graph.fact(f).tail)
        .chain(graph.in_facts(v).iter().map(|&f| graph.fact(f).head))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Replaces every entity name through `provider`, leaving ids, types and facts untouched.
///
/// `seed` drives the random start letters handed to the provider.
pub fn rename_entities(graph: &KnowledgeGraph, provider: &mut dyn NameProvider, seed: u64) -> Result<KnowledgeGraph> {
    let order: Vec<EntityId> = if provider.wants_bfs_order() {
        bfs_order(graph)
    } else {
        (0..graph.num_entities() as u32).map(EntityId).collect()
    };
    let mut index_in_type = vec![0u64; graph.num_entities()];
    for ids in graph.type_index().values() {
        for (i, id) in ids.iter().enumerate() {
            index_in_type[id.index()] = i as u64;
        }
    }
    let mut rng = rng_for(seed, "start-letter", 0);
    let mut new_names: Vec<Option<String>> = vec![None; graph.num_entities()];
    let mut taken = HashSet::with_capacity(graph.num_entities());
    for id in order {
        let entity = graph.entity(id);
        let neighbor_names =
            neighbors(graph, id).into_iter().filter_map(|u| new_names[u.index()].clone()).collect();
        let start_letter = (b'A' + rng.random_range(0..26u8)) as char;
        let mut request = NameRequest {
            entity: id,
            semantic_type: &entity.semantic_type,
            index_in_type: index_in_type[id.index()],
            current_name: &entity.name,
            neighbor_names,
            start_letter,
            attempt: 0,
        };
        let name = loop {
            let candidate = provider.name(&request)?;
            if !taken.contains(&candidate) {
                break candidate;
            }
            request.attempt += 1;
            if request.attempt > MAX_REDRAWS {
                return Err(Error::Infeasible(format!(
                    "name collision for entity {} persisted after {MAX_REDRAWS} re-draws",
                    id.0
                )));
            }
        };
        taken.insert(name.clone());
        new_names[id.index()] = Some(name);
    }
    let entities = graph
        .entities()
        .iter()
        .map(|e| Entity {
            id: e.id,
            name: new_names[e.id.index()].take().expect("every entity visited"),
            semantic_type: e.semantic_type.clone(),
        })
        .collect();
    build_graph(entities, graph.relations().to_vec(), graph.facts().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_gen::structure_digest;
    use crate::kg::test_support::random_graph;
    use std::cell::Cell;
    use std::collections::HashMap;

    #[test]
    fn same_inputs_same_name() {
        assert_eq!(pseudoword_name(3, "person", 17), pseudoword_name(3, "person", 17));
        let name = pseudoword_name(3, "person", 17);
        assert!(name.split(' ').count() == 2 && name.chars().next().unwrap().is_uppercase(), "{name}");
    }

    #[test]
    fn no_collisions_in_25000_draws() {
        let names: HashSet<String> = (0..25_000).map(|i| pseudoword_name(99, "person", i)).collect();
        assert_eq!(names.len(), 25_000);
    }

    #[test]
    fn distinct_seeds_give_distinct_multisets() {
        let a: HashSet<String> = (0..1000).map(|i| pseudoword_name(1, "city", i)).collect();
        let b: HashSet<String> = (0..1000).map(|i| pseudoword_name(2, "city", i)).collect();
        // two independent 1000-draws from a 6.5e8 space overlap in ~1.5 names on average
        assert!(a.intersection(&b).count() < 20);
    }

    #[test]
    fn identity_provider_keeps_graph() {
        let g = random_graph(4, 40, 3, 3, 80);
        let renamed = rename_entities(&g, &mut IdentityNames, 0).unwrap();
        assert_eq!(renamed, g);
    }

    #[test]
    fn pseudoword_renaming_is_stable_and_isomorphic() {
        let g = random_graph(4, 40, 3, 3, 80);
        let a = rename_entities(&g, &mut PseudowordNames { seed: 5 }, 0).unwrap();
        let b = rename_entities(&g, &mut PseudowordNames { seed: 5 }, 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.entities()[0].name, g.entities()[0].name);
        assert_eq!(structure_digest(&a), structure_digest(&g));
    }

    struct Canned {
        names: HashMap<u32, String>,
        calls: Cell<u32>,
    }

    impl LlmTransport for Canned {
        fn complete(&self, prompt: &str) -> std::result::Result<String, String> {
            self.calls.set(self.calls.get() + 1);
            let n = self.calls.get();
            Ok(self.names.get(&n).cloned().unwrap_or_else(|| format!("Name{n} {}", prompt.len())))
        }
    }

    #[test]
    fn remote_stub_preserves_structure() {
        let g = random_graph(8, 30, 2, 3, 60);
        let mut provider = RemoteNames::new(Canned { names: HashMap::new(), calls: Cell::new(0) });
        provider.retry.base_delay = Duration::ZERO;
        let renamed = rename_entities(&g, &mut provider, 1).unwrap();
        assert_eq!(structure_digest(&renamed), structure_digest(&g));
        // isomorphism oracle: map facts through names and compare edge sets
        let mapped: HashSet<(String, u32, String)> = renamed
            .facts()
            .iter()
            .map(|f| (renamed.name(f.head).to_string(), f.relation.0, renamed.name(f.tail).to_string()))
            .collect();
        let by_id: HashSet<(String, u32, String)> = g
            .facts()
            .iter()
            .map(|f| (renamed.name(f.head).to_string(), f.relation.0, renamed.name(f.tail).to_string()))
            .collect();
        assert_eq!(mapped, by_id);
        assert_eq!(renamed.num_facts(), g.num_facts());
    }

    #[test]
    fn remote_collision_triggers_redraw() {
        let g = random_graph(8, 4, 1, 1, 3);
        let names = HashMap::from([(1, "Same".to_string()), (2, "Same".to_string())]);
        let mut provider = RemoteNames::new(Canned { names, calls: Cell::new(0) });
        provider.retry.base_delay = Duration::ZERO;
        let renamed = rename_entities(&g, &mut provider, 1).unwrap();
        let unique: HashSet<&str> = renamed.entities().iter().map(|e| e.name.as_str()).collect();
        assert_eq!(unique.len(), 4);
    }

    struct Failing;
    impl LlmTransport for Failing {
        fn complete(&self, _: &str) -> std::result::Result<String, String> {
            Err("connection refused".into())
        }
    }

    #[test]
    fn remote_failure_is_structured_after_retries() {
        let g = random_graph(8, 4, 1, 1, 3);
        let mut provider = RemoteNames::new(Failing);
        provider.retry.base_delay = Duration::ZERO;
        let err = rename_entities(&g, &mut provider, 1).unwrap_err();
        assert!(matches!(err, Error::Provider { attempts: 3, .. }), "{err}");
    }

    #[test]
    fn bfs_starts_from_countries() {
        let entities = vec![
            Entity { id: EntityId(0), name: "a".into(), semantic_type: "person".into() },
            Entity { id: EntityId(1), name: "b".into(), semantic_type: "city".into() },
            Entity { id: EntityId(2), name: "c".into(), semantic_type: "country".into() },
        ];
        let rels = vec![crate::kg::Relation { id: crate::kg::RelationId(0), name: "r".into() }];
        let g = build_graph(entities, rels, vec![crate::kg::Fact::new(0, 0, 1), crate::kg::Fact::new(1, 0, 2)]).unwrap();
        assert_eq!(bfs_order(&g), vec![EntityId(2), EntityId(1), EntityId(0)]);
    }
}
