use serde::{Deserialize, Serialize};

use super::{build_graph, Entity, EntityId, Fact, KnowledgeGraph, Relation, RelationId};
use crate::error::{Error, Result};

/// On-disk graph layout: `entities`, `relations`, `facts` as `[head, relation, tail]` triples.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub entities: Vec<EntityDoc>,
    pub relations: Vec<RelationDoc>,
    pub facts: Vec<[u32; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityDoc {
    pub id: u32,
    pub name: String,
    #[serde(rename = "type")]
    pub semantic_type: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationDoc {
    pub id: u32,
    pub name: String,
}

impl From<&KnowledgeGraph> for GraphDoc {
    fn from(g: &KnowledgeGraph) -> Self {
        GraphDoc {
            entities: g
                .entities()
                .iter()
                .map(|e| EntityDoc { id: e.id.0, name: e.name.clone(), semantic_type: e.semantic_type.clone() })
                .collect(),
            relations: g.relations().iter().map(|r| RelationDoc { id: r.id.0, name: r.name.clone() }).collect(),
            facts: g.facts().iter().map(|f| [f.head.0, f.relation.0, f.tail.0]).collect(),
        }
    }
}

impl TryFrom<GraphDoc> for KnowledgeGraph {
    type Error = Error;

    fn try_from(doc: GraphDoc) -> Result<Self> {
        let entities = doc
            .entities
            .into_iter()
            .map(|e| Entity { id: EntityId(e.id), name: e.name, semantic_type: e.semantic_type })
            .collect();
        let relations = doc.relations.into_iter().map(|r| Relation { id: RelationId(r.id), name: r.name }).collect();
        let facts = doc.facts.into_iter().map(|[h, r, t]| Fact::new(h, r, t)).collect();
        build_graph(entities, relations, facts)
    }
}

/// Compact canonical JSON followed by a newline. Byte-stable for a given graph.
pub fn serialize(graph: &KnowledgeGraph) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(&GraphDoc::from(graph)).expect("graph document serializes");
    bytes.push(b'\n');
    bytes
}

pub fn deserialize(bytes: &[u8]) -> Result<KnowledgeGraph> {
    let doc: GraphDoc = serde_json::from_slice(bytes).map_err(Error::from_json)?;
    KnowledgeGraph::try_from(doc)
}
