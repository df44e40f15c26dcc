//! Lookup-table learners for two-hop composition under a simplicity bias.
//!
//! Two hypothesis families fit the within-expertise two-hop training set `D`
//! with zero error: a memorizer that stores every `(head, r1, r2) → tail`
//! mapping, and a compositional hypothesis that stores one-hop facts and
//! answers `g(g(head, r1), r2)`. Complexity `κ` counts non-null table entries,
//! plus a fixed overhead `κ_comp` for composition; ERM keeps the cheaper one.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{within_cluster_two_hops, EdgePartition};
use crate::error::{Error, Result};
use crate::kg::{Entity, EntityId, Fact, FactId, KnowledgeGraph, QueryKey, Relation, RelationId, TwoHopFact, TwoHopInput};

pub const DEFAULT_KAPPA_COMP: usize = 64;

/// Prefixes with two or more tails; composition needs this list empty.
pub fn functional_check(graph: &KnowledgeGraph) -> Vec<QueryKey> {
    graph.multi_tail_prefixes()
}

fn require_functional(graph: &KnowledgeGraph) -> Result<()> {
    let violations = functional_check(graph);
    if let Some(first) = violations.first() {
        return Err(Error::validation(format!(
            "graph is not functional: {} prefixes have several tails, first ({}, {})",
            violations.len(),
            first.head,
            first.relation
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TwoHopExample {
    pub input: TwoHopInput,
    pub label: EntityId,
    pub bridge: EntityId,
    /// Generalization expert whose cluster holds both hops.
    pub source: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingSet {
    /// Distinct inputs, sorted.
    pub examples: Vec<TwoHopExample>,
    /// Two-hop paths counted with bridge multiplicity.
    pub path_count: usize,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Expert id of each cluster, numbering non-empty clusters in order.
fn expert_of_cluster(partition: &EdgePartition) -> Vec<usize> {
    let mut next = 0;
    partition
        .sizes()
        .iter()
        .map(|&s| {
            let id = next;
            if s > 0 {
                next += 1;
            }
            id
        })
        .collect()
}

/// Training examples from `paths`, each of which must lie inside one cluster.
pub fn training_set_from(graph: &KnowledgeGraph, partition: &EdgePartition, paths: &[TwoHopFact]) -> Result<TrainingSet> {
    require_functional(graph)?;
    partition.check_graph(graph)?;
    let experts = expert_of_cluster(partition);
    let mut by_input: BTreeMap<TwoHopInput, TwoHopExample> = BTreeMap::new();
    for th in paths {
        let a = graph.fact_id(&th.first_hop()).ok_or_else(|| Error::validation(format!("{} is not a graph fact", th.first_hop())))?;
        let b = graph.fact_id(&th.second_hop()).ok_or_else(|| Error::validation(format!("{} is not a graph fact", th.second_hop())))?;
        let cluster = partition.cluster_of(a);
        if cluster != partition.cluster_of(b) {
            return Err(Error::validation(format!("two-hop path {} crosses clusters", th.input())));
        }
        let example = TwoHopExample { input: th.input(), label: th.tail, bridge: th.bridge, source: experts[cluster] };
        if let Some(prev) = by_input.insert(th.input(), example) {
            if prev.label != th.tail {
                return Err(Error::InconsistentLabels(th.input().to_string()));
            }
        }
    }
    Ok(TrainingSet { examples: by_input.into_values().collect(), path_count: paths.len() })
}

/// All within-expertise two-hop examples.
pub fn build_training_set(graph: &KnowledgeGraph, partition: &EdgePartition) -> Result<TrainingSet> {
    require_functional(graph)?;
    let within = within_cluster_two_hops(graph, partition)?.within;
    training_set_from(graph, partition, &within)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableScope {
    /// One-hop facts on some derivation of `D`.
    #[default]
    IncidentToD,
    /// Every one-hop fact of the graph.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisKind {
    Memorizer,
    Compositional,
}

impl HypothesisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HypothesisKind::Memorizer => "memorizer",
            HypothesisKind::Compositional => "compositional",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    kind: HypothesisKind,
    memo: BTreeMap<TwoHopInput, EntityId>,
    table: BTreeMap<QueryKey, EntityId>,
    kappa_comp: usize,
}

impl Hypothesis {
    /// A compositional hypothesis over an explicit one-hop table.
    pub fn compositional(table: BTreeMap<QueryKey, EntityId>, kappa_comp: usize) -> Self {
        Hypothesis { kind: HypothesisKind::Compositional, memo: BTreeMap::new(), table, kappa_comp }
    }

    pub fn kind(&self) -> HypothesisKind {
        self.kind
    }

    pub fn kappa(&self) -> usize {
        match self.kind {
            HypothesisKind::Memorizer => self.memo.len(),
            HypothesisKind::Compositional => self.table.len() + self.kappa_comp,
        }
    }

    pub fn memo(&self) -> &BTreeMap<TwoHopInput, EntityId> {
        &self.memo
    }

    pub fn table(&self) -> &BTreeMap<QueryKey, EntityId> {
        &self.table
    }

    pub fn predict(&self, input: &TwoHopInput) -> Option<EntityId> {
        match self.kind {
            HypothesisKind::Memorizer => self.memo.get(input).copied(),
            HypothesisKind::Compositional => {
                let bridge = self.table.get(&QueryKey::new(input.head, input.r1))?;
                self.table.get(&QueryKey::new(*bridge, input.r2)).copied()
            }
        }
    }

    pub fn training_errors(&self, set: &TrainingSet) -> usize {
        set.examples.iter().filter(|e| self.predict(&e.input) != Some(e.label)).count()
    }

    pub fn to_json(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Dump<'a> {
            kind: &'a str,
            kappa: usize,
            kappa_comp: usize,
            entries: Vec<Vec<u32>>,
        }
        let entries = match self.kind {
            HypothesisKind::Memorizer => self.memo.iter().map(|(i, t)| vec![i.head.0, i.r1.0, i.r2.0, t.0]).collect(),
            HypothesisKind::Compositional => self.table.iter().map(|(k, t)| vec![k.head.0, k.relation.0, t.0]).collect(),
        };
        let dump = Dump {
            kind: self.kind.as_str(),
            kappa: self.kappa(),
            kappa_comp: if self.kind == HypothesisKind::Compositional { self.kappa_comp } else { 0 },
            entries,
        };
        let mut bytes = serde_json::to_vec(&dump).expect("hypothesis serializes");
        bytes.push(b'\n');
        bytes
    }
}

pub fn fit_memorizer(set: &TrainingSet) -> Result<Hypothesis> {
    let mut memo = BTreeMap::new();
    for e in &set.examples {
        if let Some(prev) = memo.insert(e.input, e.label) {
            if prev != e.label {
                return Err(Error::InconsistentLabels(e.input.to_string()));
            }
        }
    }
    Ok(Hypothesis { kind: HypothesisKind::Memorizer, memo, table: BTreeMap::new(), kappa_comp: 0 })
}

fn insert_fact(table: &mut BTreeMap<QueryKey, EntityId>, fact: Fact) -> Result<()> {
    match table.insert(fact.prefix(), fact.tail) {
        Some(prev) if prev != fact.tail => Err(Error::InconsistentLabels(format!("({}, {})", fact.head, fact.relation))),
        _ => Ok(()),
    }
}

pub fn fit_compositional(graph: &KnowledgeGraph, set: &TrainingSet, scope: TableScope, kappa_comp: usize) -> Result<Hypothesis> {
    let mut table = BTreeMap::new();
    match scope {
        TableScope::IncidentToD => {
            for e in &set.examples {
                insert_fact(&mut table, Fact { head: e.input.head, relation: e.input.r1, tail: e.bridge })?;
                insert_fact(&mut table, Fact { head: e.bridge, relation: e.input.r2, tail: e.label })?;
            }
        }
        TableScope::Full => {
            for f in graph.facts() {
                insert_fact(&mut table, *f)?;
            }
        }
    }
    Ok(Hypothesis::compositional(table, kappa_comp))
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub chosen: Hypothesis,
    pub kappa_memorizer: usize,
    pub kappa_compositional: usize,
}

/// The zero-training-error hypothesis of least `κ`; equal `κ` goes to the compositional one.
pub fn erm_select(graph: &KnowledgeGraph, set: &TrainingSet, scope: TableScope, kappa_comp: usize) -> Result<Selection> {
    let mem = fit_memorizer(set)?;
    let comp = fit_compositional(graph, set, scope, kappa_comp)?;
    debug_assert_eq!(mem.training_errors(set), 0);
    debug_assert_eq!(comp.training_errors(set), 0);
    let (km, kc) = (mem.kappa(), comp.kappa());
    let chosen = if kc <= km { comp } else { mem };
    Ok(Selection { chosen, kappa_memorizer: km, kappa_compositional: kc })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SufficientCondition {
    /// `|F⁽¹⁾| + κ_comp`.
    pub lhs: usize,
    /// Within-expertise two-hop paths with bridge multiplicity.
    pub rhs: usize,
    /// Distinct within-expertise inputs.
    pub d_size: usize,
    pub holds: bool,
}

pub fn sufficient_condition(graph: &KnowledgeGraph, partition: &EdgePartition, kappa_comp: usize) -> Result<SufficientCondition> {
    let within = within_cluster_two_hops(graph, partition)?.within;
    let mut inputs: Vec<TwoHopInput> = within.iter().map(TwoHopFact::input).collect();
    inputs.sort_unstable();
    inputs.dedup();
    let lhs = graph.num_facts() + kappa_comp;
    let rhs = within.len();
    Ok(SufficientCondition { lhs, rhs, d_size: inputs.len(), holds: lhs < rhs })
}

/// Exact-match accuracy; unanswerable queries count as wrong.
pub fn evaluate_two_hop(h: &Hypothesis, queries: &[TwoHopFact]) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let hits: usize = queries.par_iter().filter(|q| h.predict(&q.input()) == Some(q.tail)).count();
    hits as f64 / queries.len() as f64
}

/// One row of the condition report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionRow {
    pub lhs: usize,
    pub rhs: usize,
    pub holds: bool,
    pub kind_selected: &'static str,
    pub acc_within_val: f64,
    pub acc_across: f64,
}

pub fn write_condition_csv(rows: &[ConditionRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// A graph with `hubs` bridge entities. Each hub has `fan_in` heads linked by
/// `r1` and `fan_out` tails linked by distinct relations `s_1..s_fan_out`, all
/// in cluster 0; each hub also has `outsiders` heads linked by relation `q` in
/// cluster 1. Within-expertise inputs number `hubs · fan_in · fan_out`; the
/// `hubs · outsiders · fan_out` across-expertise paths start with `q`.
pub fn layered_instance(hubs: usize, fan_in: usize, fan_out: usize, outsiders: usize) -> Result<(KnowledgeGraph, EdgePartition)> {
    if hubs == 0 || fan_out == 0 {
        return Err(Error::validation("layered instance needs at least one hub and one outgoing relation"));
    }
    let mut entities = Vec::new();
    let mut add = |name: String, ty: &str| {
        let id = EntityId(entities.len() as u32);
        entities.push(Entity { id, name, semantic_type: ty.to_string() });
        id
    };
    let mut relations = vec![
        Relation { id: RelationId(0), name: "member of".into() },
        Relation { id: RelationId(1), name: "visitor of".into() },
    ];
    for j in 0..fan_out {
        relations.push(Relation { id: RelationId(2 + j as u32), name: format!("attribute {j}") });
    }
    let mut facts = Vec::new();
    let mut cluster_of: BTreeMap<Fact, usize> = BTreeMap::new();
    for h in 0..hubs {
        let hub = add(format!("Hub {h}"), "hub");
        for j in 0..fan_out {
            let t = add(format!("Value {h}-{j}"), "value");
            let f = Fact { head: hub, relation: RelationId(2 + j as u32), tail: t };
            facts.push(f);
            cluster_of.insert(f, 0);
        }
        for i in 0..fan_in {
            let a = add(format!("Member {h}-{i}"), "agent");
            let f = Fact { head: a, relation: RelationId(0), tail: hub };
            facts.push(f);
            cluster_of.insert(f, 0);
        }
        for i in 0..outsiders {
            let a = add(format!("Visitor {h}-{i}"), "agent");
            let f = Fact { head: a, relation: RelationId(1), tail: hub };
            facts.push(f);
            cluster_of.insert(f, 1);
        }
    }
    let graph = crate::kg::build_graph(entities, relations, facts)?;
    let assignment = (0..graph.num_facts()).map(|i| cluster_of[&graph.fact(FactId(i as u32))]).collect();
    let partition = EdgePartition::new(2, assignment)?;
    Ok((graph, partition))
}
