//! Knowledge-graph data model: typed entities, directed facts, answer sets,
//! two-hop enumeration and degree statistics.
//!
//! A [`KnowledgeGraph`] is immutable once built. Facts are stored in canonical
//! `(head, relation, tail)` order and a fact's position in that order is its
//! [`FactId`]; every enumeration and serialization in the crate follows it.

mod serialize;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use serialize::{deserialize, serialize, GraphDoc};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

/// Index of a fact in the graph's canonical fact order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl FactId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub semantic_type: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub id: RelationId,
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Fact {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Fact { head: EntityId(head), relation: RelationId(relation), tail: EntityId(tail) }
    }

    pub fn prefix(&self) -> QueryKey {
        QueryKey { head: self.head, relation: self.relation }
    }

    pub fn touches(&self, entity: EntityId) -> bool {
        self.head == entity || self.tail == entity
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// A one-hop query: a fact with its tail removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueryKey {
    pub head: EntityId,
    pub relation: RelationId,
}

impl QueryKey {
    pub fn new(head: EntityId, relation: RelationId) -> Self {
        QueryKey { head, relation }
    }
}

/// A bridge-witnessed pair of chained facts `(head, r1, bridge)`, `(bridge, r2, tail)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TwoHopFact {
    pub head: EntityId,
    pub r1: RelationId,
    pub r2: RelationId,
    pub bridge: EntityId,
    pub tail: EntityId,
}

impl TwoHopFact {
    pub fn first_hop(&self) -> Fact {
        Fact { head: self.head, relation: self.r1, tail: self.bridge }
    }

    pub fn second_hop(&self) -> Fact {
        Fact { head: self.bridge, relation: self.r2, tail: self.tail }
    }

    /// The `(head, r1, r2)` input with the bridge and answer hidden.
    pub fn input(&self) -> TwoHopInput {
        TwoHopInput { head: self.head, r1: self.r1, r2: self.r2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TwoHopInput {
    pub head: EntityId,
    pub r1: RelationId,
    pub r2: RelationId,
}

impl fmt::Display for TwoHopInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.r1, self.r2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeProfile {
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
    pub total_in: usize,
    pub total_out: usize,
}

impl DegreeProfile {
    /// Σ_v d_in(v)·d_out(v), the number of two-hop paths counted with bridge multiplicity.
    pub fn path_count(&self) -> usize {
        self.in_degree.iter().zip(&self.out_degree).map(|(i, o)| i * o).sum()
    }
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    facts: Vec<Fact>,
    type_index: BTreeMap<String, Vec<EntityId>>,
    answer_index: HashMap<QueryKey, Vec<EntityId>>,
    names: HashMap<String, EntityId>,
    out_facts: Vec<Vec<FactId>>,
    in_facts: Vec<Vec<FactId>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.relations == other.relations && self.facts == other.facts
    }
}

impl Eq for KnowledgeGraph {}

/// Validates the inputs and builds all indexes.
///
/// Entity and relation ids must be dense (`0..n` in order). Facts may arrive
/// in any order; they are sorted into canonical order.
pub fn build_graph(entities: Vec<Entity>, relations: Vec<Relation>, mut facts: Vec<Fact>) -> Result<KnowledgeGraph> {
    let mut names = HashMap::with_capacity(entities.len());
    let mut type_index: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
    for (i, entity) in entities.iter().enumerate() {
        if entity.id.index() != i {
            return Err(Error::validation(format!("entity ids must be dense: position {i} holds id {}", entity.id.0)));
        }
        if entity.semantic_type.is_empty() {
            return Err(Error::validation(format!("entity {} has an empty semantic type", entity.id.0)));
        }
        if names.insert(entity.name.clone(), entity.id).is_some() {
            return Err(Error::DuplicateName(entity.name.clone()));
        }
        type_index.entry(entity.semantic_type.clone()).or_default().push(entity.id);
    }
    let mut relation_names = HashMap::new();
    for (i, relation) in relations.iter().enumerate() {
        if relation.id.index() != i {
            return Err(Error::validation(format!("relation ids must be dense: position {i} holds id {}", relation.id.0)));
        }
        if relation_names.insert(relation.name.as_str(), relation.id).is_some() {
            return Err(Error::validation(format!("duplicate relation name {:?}", relation.name)));
        }
    }
    for (index, fact) in facts.iter().enumerate() {
        for (what, id, bound) in [
            ("entity", fact.head.0, entities.len()),
            ("relation", fact.relation.0, relations.len()),
            ("entity", fact.tail.0, entities.len()),
        ] {
            if id as usize >= bound {
                return Err(Error::DanglingReference { index, what, id });
            }
        }
        if fact.head == fact.tail {
            return Err(Error::SelfLoop(fact.head.0));
        }
    }
    facts.sort_unstable();
    if let Some(w) = facts.windows(2).find(|w| w[0] == w[1]) {
        let f = w[0];
        return Err(Error::DuplicateFact { head: f.head.0, relation: f.relation.0, tail: f.tail.0 });
    }

    let mut answer_index: HashMap<QueryKey, Vec<EntityId>> = HashMap::new();
    let mut out_facts = vec![Vec::new(); entities.len()];
    let mut in_facts = vec![Vec::new(); entities.len()];
    for (i, fact) in facts.iter().enumerate() {
        let id = FactId(i as u32);
        // canonical order keeps each tail list sorted
        answer_index.entry(fact.prefix()).or_default().push(fact.tail);
        out_facts[fact.head.index()].push(id);
        in_facts[fact.tail.index()].push(id);
    }

    Ok(KnowledgeGraph { entities, relations, facts, type_index, answer_index, names, out_facts, in_facts })
}

impl KnowledgeGraph {
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_facts(&self) -> usize {
        self.facts.len()
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id.index()]
    }

    pub fn relation(&self, id: RelationId) -> &Relation {
        &self.relations[id.index()]
    }

    pub fn fact(&self, id: FactId) -> Fact {
        self.facts[id.index()]
    }

    pub fn name(&self, id: EntityId) -> &str {
        &self.entities[id.index()].name
    }

    pub fn semantic_type(&self, id: EntityId) -> &str {
        &self.entities[id.index()].semantic_type
    }

    pub fn entity_by_name(&self, name: &str) -> Option<EntityId> {
        self.names.get(name).copied()
    }

    pub fn type_index(&self) -> &BTreeMap<String, Vec<EntityId>> {
        &self.type_index
    }

    /// Entities of one semantic type, sorted by id.
    pub fn entities_of_type(&self, semantic_type: &str) -> &[EntityId] {
        self.type_index.get(semantic_type).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn fact_id(&self, fact: &Fact) -> Option<FactId> {
        self.facts.binary_search(fact).ok().map(|i| FactId(i as u32))
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.facts.binary_search(fact).is_ok()
    }

    pub fn out_facts(&self, entity: EntityId) -> &[FactId] {
        &self.out_facts[entity.index()]
    }

    pub fn in_facts(&self, entity: EntityId) -> &[FactId] {
        &self.in_facts[entity.index()]
    }

    /// All correct tails for `(head, relation)`; empty when no fact matches.
    pub fn answers(&self, head: EntityId, relation: RelationId) -> Result<&[EntityId]> {
        if head.index() >= self.entities.len() {
            return Err(Error::Unknown { what: "entity", id: head.0.to_string() });
        }
        if relation.index() >= self.relations.len() {
            return Err(Error::Unknown { what: "relation", id: relation.0.to_string() });
        }
        Ok(self.tails(QueryKey { head, relation }))
    }

    /// Like [`answers`](Self::answers) without bounds checking; unknown keys yield an empty set.
    pub fn tails(&self, key: QueryKey) -> &[EntityId] {
        self.answer_index.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_answer(&self, key: QueryKey, tail: EntityId) -> bool {
        self.tails(key).binary_search(&tail).is_ok()
    }

    /// Distinct one-hop prefixes in canonical order.
    pub fn prefixes(&self) -> Vec<QueryKey> {
        let mut keys: Vec<QueryKey> = self.facts.iter().map(Fact::prefix).collect();
        keys.dedup();
        keys
    }

    pub fn degree_profile(&self) -> DegreeProfile {
        let in_degree: Vec<usize> = self.in_facts.iter().map(Vec::len).collect();
        let out_degree: Vec<usize> = self.out_facts.iter().map(Vec::len).collect();
        DegreeProfile { total_in: in_degree.iter().sum(), total_out: out_degree.iter().sum(), in_degree, out_degree }
    }

    /// Every bridge-witnessed two-hop fact, sorted by `(head, r1, r2, bridge, tail)`.
    pub fn enumerate_two_hop(&self) -> Vec<TwoHopFact> {
        let mut out = Vec::with_capacity(self.degree_profile().path_count());
        for first in &self.facts {
            for &second in &self.out_facts[first.tail.index()] {
                let second = self.facts[second.index()];
                out.push(TwoHopFact {
                    head: first.head,
                    r1: first.relation,
                    r2: second.relation,
                    bridge: first.tail,
                    tail: second.tail,
                });
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Prefixes with two or more tails.
    pub fn multi_tail_prefixes(&self) -> Vec<QueryKey> {
        let mut keys: Vec<QueryKey> =
            self.answer_index.iter().filter(|(_, tails)| tails.len() > 1).map(|(k, _)| *k).collect();
        keys.sort_unstable();
        keys
    }
}
