//! Tabular mixture learner over one-hop queries.
//!
//! The exact model is the distribution a corpus generated by the experts
//! converges to. For expert `i` with non-isolated node set `V_i`, a personal
//! fact of emission weight `w` is written per accepted sample at rate
//! `(2 / |V_i|) · w / P_i(nonempty)`, where `P_i(nonempty)` is the chance that
//! a uniformly drawn entity yields a non-empty paragraph (empty ones are
//! redrawn). With corpus shares `u_i`:
//!
//! ```text
//! p_i(x)    = Σ rates of personal facts with prefix x
//! f_i(y|x)  = rate(x → y) / p_i(x)
//! ḡ(i|x)    = u_i p_i(x) / Σ_j u_j p_j(x)
//! f̄(y|x)    = Σ_i ḡ(i|x) f_i(y|x)
//! ```

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::TemplateParser;
use crate::error::{Error, Result};
use crate::experts::ExpertProfile;
use crate::kg::{EntityId, FactId, KnowledgeGraph, QueryKey};
use crate::seed::rng_for;

/// A conditional distribution over tails, sorted by tail id.
pub type Conditional = Vec<(EntityId, f64)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Exact,
    Empirical,
}

#[derive(Clone, Debug)]
pub struct Components {
    /// Normalized expert weights `u_i`.
    pub weights: Vec<f64>,
    /// `p_i(x)` per expert.
    pub emission: Vec<HashMap<QueryKey, f64>>,
    /// `f_i(·|x)` per expert.
    pub conditionals: Vec<HashMap<QueryKey, Conditional>>,
    /// Non-zero `ḡ(i|x)` per prefix, by expert index.
    pub posterior: BTreeMap<QueryKey, Vec<(usize, f64)>>,
}

impl Components {
    pub fn posterior_of(&self, key: &QueryKey, expert: usize) -> f64 {
        self.posterior
            .get(key)
            .and_then(|g| g.iter().find(|(i, _)| *i == expert))
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct MixtureModel {
    kind: ModelKind,
    table: BTreeMap<QueryKey, Conditional>,
    components: Option<Components>,
}

fn normalize(mut dist: BTreeMap<EntityId, f64>) -> Conditional {
    dist.retain(|_, p| *p > 0.0);
    let total: f64 = dist.values().sum();
    dist.into_iter().map(|(y, p)| (y, p / total)).collect()
}

/// Emission rate of every personal fact of `expert`, in personal-fact order.
pub fn emission_rates(expert: &ExpertProfile, alpha: f64) -> Result<Vec<f64>> {
    let weights: Vec<f64> = expert.facts.iter().map(|pf| expert.emission_weight(pf, alpha)).collect();
    let n = expert.num_nodes() as f64;
    let nonempty: f64 = expert
        .nodes()
        .map(|v| 1.0 - expert.incident(v).iter().map(|&i| 1.0 - weights[i as usize]).product::<f64>())
        .sum::<f64>()
        / n;
    if !(nonempty > 0.0) {
        return Err(Error::Emission(format!("expert {} emits no facts", expert.expert_id)));
    }
    Ok(weights.iter().map(|w| 2.0 / n * w / nonempty).collect())
}

/// Corpus-share weights: sample quotas normalized to sum to one.
pub fn quota_weights(quotas: &[usize]) -> Vec<f64> {
    let total: usize = quotas.iter().sum();
    quotas.iter().map(|&q| q as f64 / total as f64).collect()
}

pub fn exact_mixture(experts: &[ExpertProfile], alpha: f64, weights: &[f64]) -> Result<MixtureModel> {
    if experts.is_empty() || weights.len() != experts.len() {
        return Err(Error::validation("need one weight per expert and at least one expert"));
    }
    let total_weight: f64 = weights.iter().sum();
    if !(total_weight > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::validation("expert weights must be non-negative with a positive sum"));
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / total_weight).collect();
    let per_expert: Vec<(HashMap<QueryKey, f64>, HashMap<QueryKey, BTreeMap<EntityId, f64>>)> = experts
        .par_iter()
        .map(|e| {
            let rates = emission_rates(e, alpha)?;
            let mut emission: HashMap<QueryKey, f64> = HashMap::new();
            let mut joint: HashMap<QueryKey, BTreeMap<EntityId, f64>> = HashMap::new();
            for (pf, &rate) in e.facts.iter().zip(&rates) {
                if rate > 0.0 {
                    let key = pf.fact.prefix();
                    *emission.entry(key).or_default() += rate;
                    *joint.entry(key).or_default().entry(pf.fact.tail).or_default() += rate;
                }
            }
            Ok((emission, joint))
        })
        .collect::<Result<_>>()?;
    let mut mixed: BTreeMap<QueryKey, BTreeMap<EntityId, f64>> = BTreeMap::new();
    let mut mass: BTreeMap<QueryKey, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, (emission, joint)) in per_expert.iter().enumerate() {
        for (key, dist) in joint {
            let slot = mixed.entry(*key).or_default();
            for (&y, &r) in dist {
                *slot.entry(y).or_default() += weights[i] * r;
            }
            mass.entry(*key).or_default().push((i, weights[i] * emission[key]));
        }
    }
    let table: BTreeMap<QueryKey, Conditional> = mixed.into_iter().map(|(k, d)| (k, normalize(d))).collect();
    let posterior = mass
        .into_iter()
        .filter_map(|(k, mut g)| {
            g.retain(|(_, m)| *m > 0.0);
            g.sort_by_key(|(i, _)| *i);
            let total: f64 = g.iter().map(|(_, m)| m).sum();
            (total > 0.0).then(|| (k, g.into_iter().map(|(i, m)| (i, m / total)).collect()))
        })
        .collect();
    let (emission, conditionals) = per_expert
        .into_iter()
        .map(|(emission, joint)| (emission, joint.into_iter().map(|(k, d)| (k, normalize(d))).collect()))
        .unzip();
    Ok(MixtureModel {
        kind: ModelKind::Exact,
        table,
        components: Some(Components { weights, emission, conditionals, posterior }),
    })
}

/// Maximum-likelihood table from parsed paragraphs. Items are `(line number, text)`.
pub fn fit_empirical<'a>(graph: &KnowledgeGraph, paragraphs: impl IntoIterator<Item = (usize, &'a str)>) -> Result<MixtureModel> {
    let parser = TemplateParser::new(graph);
    let mut counts: BTreeMap<QueryKey, BTreeMap<EntityId, f64>> = BTreeMap::new();
    for (line, text) in paragraphs {
        let facts = parser.parse_paragraph(text).ok_or_else(|| Error::Parse {
            line,
            column: 0,
            message: format!("unparseable paragraph {text:?}"),
        })?;
        for f in facts {
            *counts.entry(f.prefix()).or_default().entry(f.tail).or_default() += 1.0;
        }
    }
    Ok(MixtureModel {
        kind: ModelKind::Empirical,
        table: counts.into_iter().map(|(k, d)| (k, normalize(d))).collect(),
        components: None,
    })
}

/// Fits from corpus JSONL, reading one-hop paragraphs and ignoring two-hop lines.
pub fn fit_empirical_jsonl(graph: &KnowledgeGraph, bytes: &[u8]) -> Result<MixtureModel> {
    let samples = crate::corpus::read_jsonl(bytes)?;
    let texts: Vec<(usize, &str)> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.kind == crate::corpus::SampleKind::OneHopParagraph)
        .map(|(i, s)| (i + 1, s.text.as_str()))
        .collect();
    fit_empirical(graph, texts)
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature >= 0.0) || temperature.is_infinite() {
        return Err(Error::validation(format!("temperature must be a non-negative real, got {temperature}")));
    }
    Ok(())
}

/// `f(y)^{1/τ}` renormalized; τ = 0 puts all mass on the lowest-id argmax.
pub fn tempered(dist: &[(EntityId, f64)], temperature: f64) -> Conditional {
    if dist.is_empty() {
        return Vec::new();
    }
    let best = argmax(dist).expect("non-empty");
    if temperature == 0.0 {
        return vec![(best.0, 1.0)];
    }
    let ln_max = best.1.ln();
    let raw: Vec<(EntityId, f64)> = dist.iter().map(|&(y, p)| (y, ((p.ln() - ln_max) / temperature).exp())).collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(y, w)| (y, w / total)).collect()
}

fn argmax(dist: &[(EntityId, f64)]) -> Option<(EntityId, f64)> {
    dist.iter().copied().fold(None, |best, (y, p)| match best {
        Some((_, bp)) if bp >= p => best,
        _ => Some((y, p)),
    })
}

#[derive(Clone, Debug, Serialize)]
struct DumpEntry {
    head: EntityId,
    relation: crate::kg::RelationId,
    tails: Vec<(EntityId, f64)>,
}

#[derive(Serialize)]
struct Dump {
    kind: ModelKind,
    prefixes: Vec<DumpEntry>,
}

impl MixtureModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn distribution(&self, key: &QueryKey) -> Option<&[(EntityId, f64)]> {
        self.table.get(key).map(Vec::as_slice)
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &QueryKey> {
        self.table.keys()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn components(&self) -> Option<&Components> {
        self.components.as_ref()
    }

    /// A tail for `key`: argmax at τ = 0 (lowest id on ties), a draw from the tempered distribution otherwise.
    pub fn predict(&self, key: &QueryKey, temperature: f64, rng: &mut impl Rng) -> Result<Option<EntityId>> {
        check_temperature(temperature)?;
        let Some(dist) = self.table.get(key) else { return Ok(None) };
        if temperature == 0.0 {
            return Ok(argmax(dist).map(|(y, _)| y));
        }
        let t = tempered(dist, temperature);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(y, p) in &t {
            acc += p;
            if u < acc {
                return Ok(Some(y));
            }
        }
        Ok(t.last().map(|(y, _)| *y))
    }

    /// Largest deviation of any stored conditional's total from 1.
    pub fn normalization_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut check = |d: &Conditional| {
            worst = worst.max((d.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs());
            if d.iter().any(|(_, p)| *p < 0.0) {
                worst = f64::INFINITY;
            }
        };
        self.table.values().for_each(&mut check);
        if let Some(c) = &self.components {
            c.conditionals.iter().flat_map(|m| m.values()).for_each(&mut check);
            for g in c.posterior.values() {
                worst = worst.max((g.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs());
            }
        }
        worst
    }

    pub fn dump_json(&self) -> Vec<u8> {
        let dump = Dump {
            kind: self.kind,
            prefixes: self
                .table
                .iter()
                .map(|(k, d)| DumpEntry { head: k.head, relation: k.relation, tails: d.clone() })
                .collect(),
        };
        let mut bytes = serde_json::to_vec(&dump).expect("model dump serializes");
        bytes.push(b'\n');
        bytes
    }
}

/// Total variation distance between two conditionals.
pub fn total_variation(a: &[(EntityId, f64)], b: &[(EntityId, f64)]) -> f64 {
    let mut diff: BTreeMap<EntityId, f64> = BTreeMap::new();
    for &(y, p) in a {
        *diff.entry(y).or_default() += p;
    }
    for &(y, p) in b {
        *diff.entry(y).or_default() -= p;
    }
    diff.values().map(|d| d.abs()).sum::<f64>() / 2.0
}

/// Test distribution over one-hop queries with the reward `r(x, y) = [y ∈ answers(x)]`.
#[derive(Clone, Debug)]
pub struct RewardSpec {
    queries: Vec<(QueryKey, f64)>,
}

impl RewardSpec {
    /// Each ground-truth fact contributes `1/|E|` to its prefix.
    pub fn uniform_over_facts(graph: &KnowledgeGraph) -> Self {
        let m = graph.num_facts() as f64;
        let mut weight: BTreeMap<QueryKey, f64> = BTreeMap::new();
        for f in graph.facts() {
            *weight.entry(f.prefix()).or_default() += 1.0 / m;
        }
        RewardSpec { queries: weight.into_iter().collect() }
    }

    pub fn new(queries: Vec<(QueryKey, f64)>) -> Result<Self> {
        let total: f64 = queries.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 || queries.iter().any(|(_, p)| *p < 0.0) {
            return Err(Error::validation(format!("test distribution must sum to 1, got {total}")));
        }
        Ok(RewardSpec { queries })
    }

    pub fn queries(&self) -> &[(QueryKey, f64)] {
        &self.queries
    }
}

/// Probability that a draw from `dist` answers `key` correctly.
pub fn query_reward(graph: &KnowledgeGraph, key: &QueryKey, dist: &[(EntityId, f64)]) -> f64 {
    dist.iter().filter(|(y, _)| graph.is_answer(*key, *y)).map(|(_, p)| p).sum()
}

/// Expected reward `Σ_x p(x) Σ_y f̄_τ(y|x) r(x, y)` of the model.
pub fn model_reward(model: &MixtureModel, graph: &KnowledgeGraph, spec: &RewardSpec, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    Ok(spec
        .queries
        .iter()
        .map(|(key, p)| p * model.distribution(key).map(|d| query_reward(graph, key, &tempered(d, temperature))).unwrap_or(0.0))
        .sum())
}

/// Fraction of ground-truth facts whose predicted tail is a correct answer. Unseen prefixes count as wrong.
pub fn query_accuracy(model: &MixtureModel, graph: &KnowledgeGraph, temperature: f64, seed: u64) -> Result<f64> {
    check_temperature(temperature)?;
    let hits: usize = (0..graph.num_facts())
        .into_par_iter()
        .map(|i| {
            let key = graph.fact(FactId(i as u32)).prefix();
            let mut rng = rng_for(seed, "query", i as u64);
            let y = model.predict(&key, temperature, &mut rng).expect("temperature checked");
            usize::from(y.is_some_and(|y| graph.is_answer(key, y)))
        })
        .sum();
    Ok(hits as f64 / graph.num_facts().max(1) as f64)
}

/// The expert's own answer distribution per prefix: its emission weights normalized per prefix.
pub fn expert_conditionals(expert: &ExpertProfile, alpha: f64) -> HashMap<QueryKey, Conditional> {
    let mut joint: HashMap<QueryKey, BTreeMap<EntityId, f64>> = HashMap::new();
    for pf in &expert.facts {
        let w = expert.emission_weight(pf, alpha);
        if w > 0.0 {
            *joint.entry(pf.fact.prefix()).or_default().entry(pf.fact.tail).or_default() += w;
        }
    }
    joint.into_iter().map(|(k, d)| (k, normalize(d))).collect()
}

/// `R(f_i)`: expected reward of answering with the expert's own emission
/// distribution; prefixes it never writes about score 0.
pub fn expert_reward(graph: &KnowledgeGraph, expert: &ExpertProfile, alpha: f64, spec: &RewardSpec) -> f64 {
    let cond = expert_conditionals(expert, alpha);
    spec.queries.iter().map(|(key, p)| p * cond.get(key).map(|d| query_reward(graph, key, d)).unwrap_or(0.0)).sum()
}

/// Per-query quantities entering the two-expert statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoremTerm {
    pub p: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub g_a: f64,
    pub g_b: f64,
}

/// `E_x[(r_x(f_a) − r_x(f_b)) · (g(a|x) − g(b|x))]` in floating point.
pub fn theorem1_statistic(terms: &[TheoremTerm]) -> Result<f64> {
    for t in terms {
        if (t.g_a + t.g_b - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("posterior not normalized: {} + {} != 1", t.g_a, t.g_b)));
        }
    }
    Ok(terms.iter().map(|t| t.p * (t.r_a - t.r_b) * (t.g_a - t.g_b)).sum())
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

/// Exact-arithmetic route: every input is converted to the rational it denotes,
/// `g(b|x)` is taken as `1 − g(a|x)`, and both the transcendence flag at τ = 1
/// and the statistic are evaluated without rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactTheoremCheck {
    pub mixture_reward: BigRational,
    pub reward_a: BigRational,
    pub reward_b: BigRational,
    pub statistic: BigRational,
}

impl ExactTheoremCheck {
    pub fn transcends(&self) -> bool {
        self.mixture_reward > self.reward_a && self.mixture_reward > self.reward_b
    }

    pub fn statistic_positive(&self) -> bool {
        self.statistic.is_positive()
    }
}

pub fn theorem1_exact(terms: &[TheoremTerm]) -> Result<ExactTheoremCheck> {
    theorem1_statistic(terms)?;
    let one = BigRational::one();
    let mut out = ExactTheoremCheck {
        mixture_reward: BigRational::zero(),
        reward_a: BigRational::zero(),
        reward_b: BigRational::zero(),
        statistic: BigRational::zero(),
    };
    for t in terms {
        let (p, ra, rb, ga) = (exact(t.p), exact(t.r_a), exact(t.r_b), exact(t.g_a));
        let gb = &one - &ga;
        out.mixture_reward += &p * (&ga * &ra + &gb * &rb);
        out.reward_a += &p * &ra;
        out.reward_b += &p * &rb;
        out.statistic += &p * (&ra - &rb) * (&ga - &gb);
    }
    Ok(out)
}

/// Terms for a two-expert exact mixture; prefixes neither expert writes get `g = 1/2` and zero rewards.
pub fn two_expert_terms(
    model: &MixtureModel,
    graph: &KnowledgeGraph,
    spec: &RewardSpec,
    alpha: f64,
    experts: &[ExpertProfile],
) -> Result<Vec<TheoremTerm>> {
    let comps = model.components().ok_or_else(|| Error::validation("theorem statistic needs an exact mixture"))?;
    if experts.len() != 2 || comps.weights.len() != 2 {
        return Err(Error::validation("theorem statistic is defined for exactly two experts"));
    }
    let ca = expert_conditionals(&experts[0], alpha);
    let cb = expert_conditionals(&experts[1], alpha);
    Ok(spec
        .queries
        .iter()
        .map(|(key, p)| {
            let r_a = ca.get(key).map(|d| query_reward(graph, key, d)).unwrap_or(0.0);
            let r_b = cb.get(key).map(|d| query_reward(graph, key, d)).unwrap_or(0.0);
            let (g_a, g_b) = if comps.posterior.contains_key(key) {
                let g_a = comps.posterior_of(key, 0);
                (g_a, 1.0 - g_a)
            } else {
                (0.5, 0.5)
            };
            TheoremTerm { p: *p, r_a, r_b, g_a, g_b }
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct TranscendenceReport {
    pub model_reward: f64,
    pub expert_rewards: Vec<f64>,
    pub best_expert_reward: f64,
    pub transcends: bool,
    pub theorem_statistic: Option<f64>,
}

pub fn transcendence_report(
    model: &MixtureModel,
    graph: &KnowledgeGraph,
    experts: &[ExpertProfile],
    alpha: f64,
    spec: &RewardSpec,
    temperature: f64,
) -> Result<TranscendenceReport> {
    let model_reward = model_reward(model, graph, spec, temperature)?;
    let expert_rewards: Vec<f64> = experts.par_iter().map(|e| expert_reward(graph, e, alpha, spec)).collect();
    let best = expert_rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let theorem_statistic = if experts.len() == 2 && model.components().is_some() {
        Some(theorem1_statistic(&two_expert_terms(model, graph, spec, alpha, experts)?)?)
    } else {
        None
    };
    Ok(TranscendenceReport {
        model_reward,
        expert_rewards,
        best_expert_reward: best,
        transcends: model_reward > best,
        theorem_statistic,
    })
}

/// Exact rational form of a float for reporting; exposed for oracles.
pub fn to_rational(x: f64) -> BigRational {
    exact(x)
}

pub fn rational_to_f64(x: &BigRational) -> f64 {
    let scale = BigInt::from(10u64).pow(18);
    let scaled = (x * BigRational::from_integer(scale.clone())).round().to_integer();
    scaled.to_string().parse::<f64>().unwrap_or(f64::NAN) / 1e18
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::{build_denoising_experts, build_selection_experts, PersonalFact, Setting};
    use crate::kg::test_support::{random_graph, tiny};
    use crate::kg::Fact;
    use crate::clustering::EdgePartition;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn expert_with(g: &KnowledgeGraph, id: usize, facts: &[(u32, u32, u32, u32, bool)]) -> ExpertProfile {
        let _ = g;
        let facts = facts
            .iter()
            .map(|&(src, h, r, t, corrupted)| PersonalFact { source: FactId(src), fact: Fact::new(h, r, t), corrupted, cluster: 0 })
            .collect();
        ExpertProfile::new(id, Setting::Denoising, vec![1.0], facts, 0)
    }

    #[test]
    fn perfect_single_expert() {
        let g = random_graph(1, 50, 2, 3, 120);
        let experts = build_denoising_experts(&g, 1, 1.0, 0).unwrap();
        let m = exact_mixture(&experts, 0.0, &[1.0]).unwrap();
        for key in g.prefixes() {
            let d = m.distribution(&key).unwrap();
            if g.tails(key).len() == 1 {
                assert_eq!(d, &[(g.tails(key)[0], 1.0)]);
            }
        }
        assert_eq!(query_accuracy(&m, &g, 0.0, 0).unwrap(), 1.0);
        assert!(m.normalization_error() < 1e-9);
    }

    #[test]
    fn symmetric_disagreement_splits_evenly() {
        let g = tiny(&["h", "t", "u"], &[(0, 0, 1)], 1);
        let a = expert_with(&g, 0, &[(0, 0, 0, 1, false)]);
        let b = expert_with(&g, 1, &[(0, 0, 0, 2, true)]);
        let m = exact_mixture(&[a, b], 0.0, &[0.5, 0.5]).unwrap();
        let d = m.distribution(&QueryKey::new(EntityId(0), crate::kg::RelationId(0))).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d[0].1 - 0.5).abs() < 1e-12 && (d[1].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn posterior_and_mixture_identities() {
        let g = random_graph(3, 80, 3, 4, 300);
        let p = EdgePartition::new(5, (0..g.num_facts()).map(|i| i % 5).collect()).unwrap();
        let experts = build_selection_experts(&g, &p, 4, 0.3, 2).unwrap();
        let u = [0.1, 0.2, 0.3, 0.4];
        let m = exact_mixture(&experts, 0.7, &u).unwrap();
        let c = m.components().unwrap();
        for (key, dist) in m.table.iter() {
            let denom: f64 = (0..4).map(|i| u[i] * c.emission[i].get(key).copied().unwrap_or(0.0)).sum();
            for i in 0..4 {
                let expected = u[i] * c.emission[i].get(key).copied().unwrap_or(0.0) / denom;
                assert!((c.posterior_of(key, i) - expected).abs() < 1e-12);
            }
            for &(y, fy) in dist {
                let mix: f64 = (0..4)
                    .map(|i| {
                        let fi = c.conditionals[i].get(key).and_then(|d| d.iter().find(|(t, _)| *t == y)).map(|(_, p)| *p);
                        c.posterior_of(key, i) * fi.unwrap_or(0.0)
                    })
                    .sum();
                assert!((mix - fy).abs() < 1e-9);
            }
        }
        assert!(m.normalization_error() < 1e-9);
    }

    #[test]
    fn empirical_counts() {
        let g = tiny(&["a", "b", "c"], &[(0, 0, 1), (0, 0, 2)], 1);
        let one = "The rel0 of a is b.";
        let m = fit_empirical(&g, [(1, one)]).unwrap();
        assert_eq!(m.distribution(&QueryKey::new(EntityId(0), crate::kg::RelationId(0))).unwrap(), &[(EntityId(1), 1.0)]);
        let lines = [(1, one), (2, one), (3, "The rel0 of a is c. The rel0 of a is b.")];
        let m = fit_empirical(&g, lines).unwrap();
        assert_eq!(
            m.distribution(&QueryKey::new(EntityId(0), crate::kg::RelationId(0))).unwrap(),
            &[(EntityId(1), 0.75), (EntityId(2), 0.25)]
        );
        let err = fit_empirical(&g, [(1, one), (7, "gibberish.")]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }));
    }

    #[test]
    fn prediction_rules() {
        let g = tiny(&["a", "b", "c"], &[(0, 0, 1), (0, 0, 2)], 1);
        let m = fit_empirical(&g, [(1, "The rel0 of a is b. The rel0 of a is b. The rel0 of a is b. The rel0 of a is c. The rel0 of a is c.")]).unwrap();
        let key = QueryKey::new(EntityId(0), crate::kg::RelationId(0));
        let mut rng = rng_for(0, "t", 0);
        assert_eq!(m.predict(&key, 0.0, &mut rng).unwrap(), Some(EntityId(1)));
        assert!(m.predict(&key, -1.0, &mut rng).is_err());
        assert_eq!(m.predict(&QueryKey::new(EntityId(2), crate::kg::RelationId(0)), 0.0, &mut rng).unwrap(), None);
        // τ = 1 draws follow the table
        let n = 100_000;
        let bs = (0..n).filter(|_| m.predict(&key, 1.0, &mut rng).unwrap() == Some(EntityId(1))).count() as f64;
        let expected = [0.6 * n as f64, 0.4 * n as f64];
        let observed = [bs, n as f64 - bs];
        let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
        assert!(stat < ChiSquared::new(1.0).unwrap().inverse_cdf(0.999));
        // the mode of low-temperature draws is the argmax
        let low = (0..10_000).filter(|_| m.predict(&key, 0.5, &mut rng).unwrap() == Some(EntityId(1))).count();
        assert!(low > 5_000);
        // ties go to the lowest id
        let tie = fit_empirical(&g, [(1, "The rel0 of a is c. The rel0 of a is b.")]).unwrap();
        assert_eq!(tie.predict(&key, 0.0, &mut rng).unwrap(), Some(EntityId(1)));
    }

    #[test]
    fn theorem_examples() {
        let t = TheoremTerm { p: 1.0, r_a: 1.0, r_b: 0.0, g_a: 0.9, g_b: 0.1 };
        assert!((theorem1_statistic(&[t]).unwrap() - 0.8).abs() < 1e-12);
        let sym = TheoremTerm { p: 0.5, r_a: 0.3, r_b: 0.3, g_a: 0.8, g_b: 0.2 };
        assert_eq!(theorem1_statistic(&[sym, sym]).unwrap(), 0.0);
        let bad = TheoremTerm { g_b: 0.3, ..t };
        assert!(theorem1_statistic(&[bad]).is_err());
        let ex = theorem1_exact(&[t]).unwrap();
        assert_eq!(rational_to_f64(&ex.statistic), 0.8);
    }

    #[test]
    fn complementary_specialists_transcend() {
        // expert a knows (0,r,1), expert b knows (2,r,3); each writes nothing else
        let g = tiny(&["a", "b", "c", "d"], &[(0, 0, 1), (2, 0, 3)], 1);
        let a = expert_with(&g, 0, &[(0, 0, 0, 1, false)]);
        let b = expert_with(&g, 1, &[(1, 2, 0, 3, false)]);
        let experts = [a, b];
        let m = exact_mixture(&experts, 0.0, &[0.5, 0.5]).unwrap();
        let spec = RewardSpec::uniform_over_facts(&g);
        let r = transcendence_report(&m, &g, &experts, 0.0, &spec, 1.0).unwrap();
        assert_eq!(r.model_reward, 1.0);
        assert_eq!(r.expert_rewards, vec![0.5, 0.5]);
        assert!(r.transcends);
        assert!(r.theorem_statistic.unwrap() > 0.0);
    }

    #[test]
    fn single_expert_never_transcends() {
        let g = random_graph(5, 60, 2, 3, 150);
        let experts = build_denoising_experts(&g, 1, 0.6, 1).unwrap();
        let m = exact_mixture(&experts, 0.0, &[1.0]).unwrap();
        let spec = RewardSpec::uniform_over_facts(&g);
        let r1 = transcendence_report(&m, &g, &experts, 0.0, &spec, 1.0).unwrap();
        assert!((r1.model_reward - r1.expert_rewards[0]).abs() < 1e-12);
        assert!(!r1.transcends);
    }

    #[test]
    fn expert_reward_matches_brute_force() {
        let g = random_graph(9, 60, 2, 3, 200);
        let spec = RewardSpec::uniform_over_facts(&g);
        let p = EdgePartition::new(3, (0..g.num_facts()).map(|i| i % 3).collect()).unwrap();
        for e in build_selection_experts(&g, &p, 5, 0.4, 3).unwrap() {
            // enumerate every (prefix, tail) emission weight directly
            let mut brute = 0.0;
            for f in g.facts() {
                let key = f.prefix();
                let (mut hit, mut all) = (0.0, 0.0);
                for pf in e.facts.iter().filter(|pf| pf.fact.prefix() == key) {
                    let w = e.emission_weight(pf, 0.8);
                    all += w;
                    if g.is_answer(key, pf.fact.tail) {
                        hit += w;
                    }
                }
                if all > 0.0 {
                    brute += hit / all / g.num_facts() as f64;
                }
            }
            assert!((expert_reward(&g, &e, 0.8, &spec) - brute).abs() < 1e-12);
        }
        let perfect = build_denoising_experts(&g, 1, 1.0, 0).unwrap();
        assert!((expert_reward(&g, &perfect[0], 0.0, &spec) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tempering_keeps_argmax() {
        let d = vec![(EntityId(3), 0.5), (EntityId(5), 0.3), (EntityId(9), 0.2)];
        for tau in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let t = tempered(&d, tau);
            assert_eq!(argmax(&t).unwrap().0, EntityId(3));
            assert!((t.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for ((y, p), (z, q)) in tempered(&d, 1.0).into_iter().zip(d) {
            assert!(y == z && (p - q).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rewards_match_brute_force(seed in any::<u64>(), c in 0.0f64..1.0, tau in 0.0f64..3.0) {
            let g = random_graph(seed, 40, 2, 3, 90);
            let experts = build_denoising_experts(&g, 3, c, seed).unwrap();
            let m = exact_mixture(&experts, 0.0, &[1.0, 1.0, 1.0]).unwrap();
            let spec = RewardSpec::uniform_over_facts(&g);
            let fast = model_reward(&m, &g, &spec, tau).unwrap();
            let mut brute = 0.0;
            for f in g.facts() {
                if let Some(d) = m.distribution(&f.prefix()) {
                    let t = tempered(d, tau);
                    for (y, p) in t {
                        if g.tails(f.prefix()).contains(&y) {
                            brute += p / g.num_facts() as f64;
                        }
                    }
                }
            }
            prop_assert!((fast - brute).abs() < 1e-12);
            prop_assert!(m.normalization_error() < 1e-9);
            let greedy = query_accuracy(&m, &g, 0.0, seed).unwrap();
            prop_assert!((greedy - model_reward(&m, &g, &spec, 0.0).unwrap()).abs() < 1e-12);
        }
    }
}
