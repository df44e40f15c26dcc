//! Sentence templates and their inverse parser.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, Fact, KnowledgeGraph, Relation, RelationId, TwoHopFact};

const PREPOSITIONS: [&str; 9] = ["by", "in", "for", "from", "at", "on", "to", "with", "of"];

/// Number of Level-2 templates per relation.
pub const LEVEL2_TEMPLATES: usize = 4;

fn ends_with_preposition(name: &str) -> bool {
    name.rsplit(' ').next().is_some_and(|w| PREPOSITIONS.contains(&w))
}

/// The relation as it precedes a head: "place of birth of", "award received by".
pub fn relation_phrase(name: &str) -> String {
    if ends_with_preposition(name) {
        name.to_string()
    } else {
        format!("{name} of")
    }
}

/// The relation as a bare noun: "place of birth", "award received".
pub fn relation_noun(name: &str) -> String {
    if ends_with_preposition(name) {
        name.rsplit_once(' ').map(|(n, _)| n.to_string()).unwrap_or_default()
    } else {
        name.to_string()
    }
}

fn fill(template: usize, relation: &str, head: &str, tail: &str) -> String {
    match template {
        0 => format!("The {} {head} is {tail}.", relation_phrase(relation)),
        1 => format!("{head}'s {} is {tail}.", relation_noun(relation)),
        2 => format!("{tail} is the {} {head}.", relation_phrase(relation)),
        _ => format!("As for {head}, the {} is {tail}.", relation_noun(relation)),
    }
}

/// Renders one fact. Level 1 is the canonical template; Level 2 picks one of four
/// templates uniformly; Levels 3 and 4 render as Level 2 (their rewriting happens
/// in a rephrase provider).
pub fn render_sentence(graph: &KnowledgeGraph, fact: &Fact, level: u8, rng: &mut impl Rng) -> Result<String> {
    let relation = &graph.relation(fact.relation).name;
    let (head, tail) = (graph.name(fact.head), graph.name(fact.tail));
    match level {
        1 => Ok(fill(0, relation, head, tail)),
        2..=4 => Ok(fill(rng.random_range(0..LEVEL2_TEMPLATES), relation, head, tail)),
        _ => Err(Error::validation(format!("unknown diversity level {level}"))),
    }
}

/// Level-2 template with a fixed index, for inspection and tests.
pub fn render_with_template(graph: &KnowledgeGraph, fact: &Fact, template: usize) -> String {
    fill(template, &graph.relation(fact.relation).name, graph.name(fact.head), graph.name(fact.tail))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoHopFormat {
    Plain,
    Cot,
}

/// Plain: "The {r2} the {r1} {head} is {tail}." CoT: "What is the {r2} the {r1} {head}? {bridge}; {tail}."
pub fn two_hop_sentence(graph: &KnowledgeGraph, th: &TwoHopFact, format: TwoHopFormat) -> String {
    let p1 = relation_phrase(&graph.relation(th.r1).name);
    let p2 = relation_phrase(&graph.relation(th.r2).name);
    let (head, tail) = (graph.name(th.head), graph.name(th.tail));
    match format {
        TwoHopFormat::Plain => format!("The {p2} the {p1} {head} is {tail}."),
        TwoHopFormat::Cot => format!("What is the {p2} the {p1} {head}? {}; {tail}.", graph.name(th.bridge)),
    }
}

struct Forms {
    id: RelationId,
    phrase: String,
    noun: String,
}

/// Recovers facts from rendered text by matching every template against every
/// relation and accepting splits whose names resolve in the graph.
pub struct TemplateParser<'g> {
    graph: &'g KnowledgeGraph,
    forms: Vec<Forms>,
}

impl<'g> TemplateParser<'g> {
    pub fn new(graph: &'g KnowledgeGraph) -> Self {
        let forms = graph
            .relations()
            .iter()
            .map(|Relation { id, name }| Forms { id: *id, phrase: relation_phrase(name), noun: relation_noun(name) })
            .collect();
        TemplateParser { graph, forms }
    }

    fn entity(&self, name: &str) -> Option<EntityId> {
        self.graph.entity_by_name(name)
    }

    /// Splits `text` at each occurrence of `sep` and returns the first split whose sides both name entities.
    fn split_names(&self, text: &str, sep: &str) -> Option<(EntityId, EntityId)> {
        let mut from = 0;
        while let Some(pos) = text[from..].find(sep) {
            let at = from + pos;
            if let (Some(a), Some(b)) = (self.entity(&text[..at]), self.entity(&text[at + sep.len()..])) {
                return Some((a, b));
            }
            from = at + 1;
        }
        None
    }

    /// Parses one sentence (with its final period) into a fact.
    pub fn parse_sentence(&self, sentence: &str) -> Option<Fact> {
        let body = sentence.strip_suffix('.')?;
        for f in &self.forms {
            let fact = |head, tail| Fact { head, relation: f.id, tail };
            if let Some(rest) = body.strip_prefix("The ").and_then(|r| r.strip_prefix(f.phrase.as_str())) {
                if let Some((h, t)) = rest.strip_prefix(' ').and_then(|r| self.split_names(r, " is ")) {
                    return Some(fact(h, t));
                }
            }
            if let Some((h, t)) = self.split_names(body, &format!("'s {} is ", f.noun)) {
                return Some(fact(h, t));
            }
            if let Some((t, h)) = self.split_names(body, &format!(" is the {} ", f.phrase)) {
                return Some(fact(h, t));
            }
            if let Some(rest) = body.strip_prefix("As for ") {
                if let Some((h, t)) = self.split_names(rest, &format!(", the {} is ", f.noun)) {
                    return Some(fact(h, t));
                }
            }
        }
        None
    }

    /// Parses a paragraph of sentences separated by single spaces.
    pub fn parse_paragraph(&self, text: &str) -> Option<Vec<Fact>> {
        split_sentences(text).map(|s| self.parse_sentence(s)).collect()
    }

    /// Parses a plain two-hop sentence into `(head, r1, r2, tail)`.
    pub fn parse_two_hop_plain(&self, sentence: &str) -> Option<(EntityId, RelationId, RelationId, EntityId)> {
        let body = sentence.strip_suffix('.')?.strip_prefix("The ")?;
        for f2 in &self.forms {
            let Some(rest) = body.strip_prefix(f2.phrase.as_str()).and_then(|r| r.strip_prefix(" the ")) else { continue };
            for f1 in &self.forms {
                let Some(rest) = rest.strip_prefix(f1.phrase.as_str()).and_then(|r| r.strip_prefix(' ')) else { continue };
                if let Some((h, t)) = self.split_names(rest, " is ") {
                    return Some((h, f1.id, f2.id, t));
                }
            }
        }
        None
    }
}

/// Sentences of a paragraph, each keeping its final period.
pub fn split_sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split_inclusive(". ").map(|s| s.strip_suffix(' ').unwrap_or(s))
}
