//! Two-hop shortcut baselines, experiment sweeps and CSV reports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::EdgePartition;
use crate::corpus::{generate_corpus, quotas, split_two_hops, CorpusConfig, CorpusInputs, QuotaMode, SampleKind};
use crate::error::{Error, Result};
use crate::experts::{build_denoising_experts, build_selection_experts, ExpertProfile, Setting};
use crate::gen_learner::{
    erm_select, evaluate_two_hop, layered_instance, sufficient_condition, training_set_from, ConditionRow, Hypothesis,
    HypothesisKind, TableScope,
};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, TwoHopFact};
use crate::mixture::{exact_mixture, expert_reward, fit_empirical, query_accuracy, quota_weights, RewardSpec};

/// First line of every report.
pub const REPORT_VERSION_LINE: &str = "# transcend-lab report v1";

/// Fraction of queries whose head has some direct one-hop edge to the answer.
pub fn direct_connection_baseline(graph: &KnowledgeGraph, queries: &[TwoHopFact]) -> f64 {
    let pairs: HashSet<(EntityId, EntityId)> = graph.facts().iter().map(|f| (f.head, f.tail)).collect();
    fraction(queries.iter().filter(|q| pairs.contains(&(q.head, q.tail))).count(), queries.len())
}

/// Fraction of queries whose head and answer co-occur in some two-hop training fact.
pub fn cooccurrence_baseline(train: &[TwoHopFact], queries: &[TwoHopFact]) -> f64 {
    let pairs: HashSet<(EntityId, EntityId)> = train.iter().map(|t| (t.head, t.tail)).collect();
    fraction(queries.iter().filter(|q| pairs.contains(&(q.head, q.tail))).count(), queries.len())
}

/// For each query, the most frequent `r2` tail of the answer's semantic type
/// (lowest id on ties); no such tail is a wrong answer.
pub fn majority_relation_baseline(graph: &KnowledgeGraph, queries: &[TwoHopFact]) -> f64 {
    let mut counts: HashMap<RelationId, BTreeMap<EntityId, usize>> = HashMap::new();
    for f in graph.facts() {
        *counts.entry(f.relation).or_default().entry(f.tail).or_default() += 1;
    }
    // best tail per (relation, type)
    let mut best: HashMap<(RelationId, &str), (EntityId, usize)> = HashMap::new();
    for (&r, tails) in &counts {
        for (&t, &n) in tails {
            let slot = best.entry((r, graph.semantic_type(t))).or_insert((t, n));
            if n > slot.1 {
                *slot = (t, n);
            }
        }
    }
    let hits = queries
        .iter()
        .filter(|q| best.get(&(q.r2, graph.semantic_type(q.tail))).is_some_and(|&(t, _)| t == q.tail))
        .count();
    fraction(hits, queries.len())
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub setting: String,
    pub n_experts: Option<usize>,
    pub coverage: Option<f64>,
    pub alpha: Option<f64>,
    pub temperature: Option<f64>,
    pub d_size: Option<usize>,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

pub fn write_report(rows: &[ReportRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{REPORT_VERSION_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["experiment", "setting", "n_experts", "coverage", "alpha", "temperature", "d_size", "metric", "value", "seed"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn report_bytes(rows: &[ReportRow]) -> Vec<u8> {
    let mut out = Vec::new();
    write_report(rows, &mut out).expect("writing to memory");
    out
}

pub fn read_report(bytes: &[u8]) -> Result<Vec<ReportRow>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse { line: 1, column: 0, message: e.to_string() })?;
    let body = text.strip_prefix(REPORT_VERSION_LINE).ok_or_else(|| Error::Parse {
        line: 1,
        column: 0,
        message: format!("missing version line {REPORT_VERSION_LINE:?}"),
    })?;
    let mut r = csv::Reader::from_reader(body.trim_start_matches('\n').as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    /// The limit of infinitely many corpus samples.
    #[default]
    Exact,
    /// Counts over a generated Level-1 corpus of `samples` paragraphs.
    Empirical { samples: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertPrior {
    /// Corpus shares.
    #[default]
    Quota,
    Uniform,
}

/// A full-factorial sweep over experts, coverage, α and temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub experiment: String,
    pub setting: Setting,
    pub n_experts: Vec<usize>,
    pub coverage: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    pub temperature: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub model: ModelChoice,
    #[serde(default)]
    pub prior: ExpertPrior,
}

fn default_alpha() -> Vec<f64> {
    vec![0.0]
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("n_experts", self.n_experts.is_empty()),
            ("coverage", self.coverage.is_empty()),
            ("alpha", self.alpha.is_empty()),
            ("temperature", self.temperature.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::validation(format!("sweep grid {name} is empty")));
        }
        if self.setting == Setting::Generalization {
            return Err(Error::validation("generalization sweeps use run_generalization"));
        }
        if self.n_experts.contains(&0) {
            return Err(Error::validation("n_experts values must be positive"));
        }
        for &c in &self.coverage {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::validation(format!("coverage {c} outside [0, 1]")));
            }
        }
        for &a in &self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::validation(format!("alpha {a} outside [0, 1]")));
            }
        }
        for &t in &self.temperature {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::validation(format!("temperature {t} must be a non-negative real")));
            }
        }
        Ok(())
    }

    /// Rows produced per seed.
    pub fn rows_per_seed(&self) -> usize {
        let cells = self.n_experts.len() * self.coverage.len() * self.alpha.len();
        cells * (self.temperature.len() + 2)
    }
}

#[derive(Clone, Copy)]
struct Cell {
    seed: u64,
    c_idx: usize,
    n_e: usize,
    alpha: f64,
}

/// Runs the sweep. Per seed and coverage the experts are built once for the
/// largest `n_e`; smaller counts use a prefix, since expert `i` does not depend
/// on how many experts are drawn. Rows come out in grid order
/// `seed × coverage × n_experts × alpha`, then `temperature` accuracies, then
/// the best and mean expert rewards.
pub fn run_sweep(spec: &SweepSpec, graph: &KnowledgeGraph, partition: Option<&EdgePartition>) -> Result<Vec<ReportRow>> {
    spec.validate()?;
    if spec.setting == Setting::Selection && partition.is_none() {
        return Err(Error::validation("selection sweeps need an edge partition"));
    }
    let max_n = *spec.n_experts.iter().max().expect("validated");
    let pools: Vec<Vec<Vec<ExpertProfile>>> = spec
        .seeds
        .iter()
        .map(|&seed| {
            spec.coverage
                .iter()
                .map(|&c| match spec.setting {
                    Setting::Denoising => build_denoising_experts(graph, max_n, c, seed),
                    _ => build_selection_experts(graph, partition.expect("checked"), max_n, c, seed),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for (s_idx, &seed) in spec.seeds.iter().enumerate() {
        for c_idx in 0..spec.coverage.len() {
            for &n_e in &spec.n_experts {
                for &alpha in &spec.alpha {
                    cells.push((s_idx, Cell { seed, c_idx, n_e, alpha }));
                }
            }
        }
    }
    let spec_reward = RewardSpec::uniform_over_facts(graph);
    let chunks: Vec<Vec<ReportRow>> = cells
        .par_iter()
        .map(|&(s_idx, cell)| {
            let experts = &pools[s_idx][cell.c_idx][..cell.n_e];
            let alpha = if spec.setting == Setting::Denoising { 0.0 } else { cell.alpha };
            run_cell(spec, graph, experts, &spec_reward, cell, alpha).map_err(|e| {
                Error::validation(format!(
                    "sweep cell (seed {}, c {}, n_e {}, alpha {}): {e}",
                    cell.seed, spec.coverage[cell.c_idx], cell.n_e, cell.alpha
                ))
            })
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn run_cell(
    spec: &SweepSpec,
    graph: &KnowledgeGraph,
    experts: &[ExpertProfile],
    reward: &RewardSpec,
    cell: Cell,
    alpha: f64,
) -> Result<Vec<ReportRow>> {
    let weights = match spec.prior {
        ExpertPrior::Quota => quota_weights(&quotas(experts, 1_000_000, QuotaMode::Equal)),
        ExpertPrior::Uniform => vec![1.0; experts.len()],
    };
    let model = match spec.model {
        ModelChoice::Exact => exact_mixture(experts, alpha, &weights)?,
        ModelChoice::Empirical { samples } => {
            let mut config = CorpusConfig::new(samples, cell.seed);
            config.alpha = alpha;
            let corpus = generate_corpus(&CorpusInputs { graph, experts, partition: None, provider: None }, &config)?;
            let texts = corpus
                .train
                .iter()
                .enumerate()
                .filter(|(_, s)| s.kind == SampleKind::OneHopParagraph)
                .map(|(i, s)| (i + 1, s.text.as_str()));
            fit_empirical(graph, texts)?
        }
    };
    let row = |temperature: Option<f64>, metric: &str, value: f64| ReportRow {
        experiment: spec.experiment.clone(),
        setting: spec.setting.as_str().to_string(),
        n_experts: Some(cell.n_e),
        coverage: Some(spec.coverage[cell.c_idx]),
        alpha: (spec.setting != Setting::Denoising).then_some(cell.alpha),
        temperature,
        d_size: None,
        metric: metric.to_string(),
        value,
        seed: cell.seed,
    };
    let mut rows = Vec::with_capacity(spec.temperature.len() + 2);
    for &t in &spec.temperature {
        rows.push(row(Some(t), "query_accuracy", query_accuracy(&model, graph, t, cell.seed)?));
    }
    let rewards: Vec<f64> = experts.iter().map(|e| expert_reward(graph, e, alpha, reward)).collect();
    rows.push(row(None, "max_expert_reward", rewards.iter().copied().fold(0.0, f64::max)));
    rows.push(row(None, "mean_expert_reward", rewards.iter().sum::<f64>() / rewards.len() as f64));
    Ok(rows)
}

/// Settings for the two-hop generalization pipeline on a clustered graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizationSpec {
    pub experiment: String,
    pub validation_size: usize,
    pub kappa_comp: usize,
    #[serde(default)]
    pub scope: TableScope,
    /// Also report the two-hop co-occurrence shortcut.
    #[serde(default)]
    pub cooccurrence: bool,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct GeneralizationOutcome {
    pub condition: ConditionRow,
    pub hypothesis: Hypothesis,
    pub rows: Vec<ReportRow>,
}

/// Trains on within-expertise two-hop facts minus a validation sample, then
/// scores the held-out within-expertise and all across-expertise queries.
pub fn run_generalization(spec: &GeneralizationSpec, graph: &KnowledgeGraph, partition: &EdgePartition) -> Result<GeneralizationOutcome> {
    let splits = split_two_hops(graph, partition, spec.validation_size, spec.seed)?;
    let train = training_set_from(graph, partition, &splits.train_within)?;
    let sel = erm_select(graph, &train, spec.scope, spec.kappa_comp)?;
    let cond = sufficient_condition(graph, partition, spec.kappa_comp)?;
    let acc_val = evaluate_two_hop(&sel.chosen, &splits.validation_within);
    let acc_across = evaluate_two_hop(&sel.chosen, &splits.test_across);
    let d_size = train.len();
    let row = |metric: &str, value: f64| ReportRow {
        experiment: spec.experiment.clone(),
        setting: Setting::Generalization.as_str().to_string(),
        n_experts: Some(partition.non_empty()),
        coverage: None,
        alpha: None,
        temperature: None,
        d_size: Some(d_size),
        metric: metric.to_string(),
        value,
        seed: spec.seed,
    };
    let mut rows = vec![
        row("acc_within_val", acc_val),
        row("acc_across", acc_across),
        row("kappa_memorizer", sel.kappa_memorizer as f64),
        row("kappa_compositional", sel.kappa_compositional as f64),
        row("selected_compositional", f64::from(u8::from(sel.chosen.kind() == HypothesisKind::Compositional))),
        row("direct_connection_val", direct_connection_baseline(graph, &splits.validation_within)),
        row("direct_connection_across", direct_connection_baseline(graph, &splits.test_across)),
        row("majority_relation_val", majority_relation_baseline(graph, &splits.validation_within)),
        row("majority_relation_across", majority_relation_baseline(graph, &splits.test_across)),
    ];
    if spec.cooccurrence {
        rows.push(row("cooccurrence_val", cooccurrence_baseline(&splits.train_within, &splits.validation_within)));
        rows.push(row("cooccurrence_across", cooccurrence_baseline(&splits.train_within, &splits.test_across)));
    }
    Ok(GeneralizationOutcome {
        condition: ConditionRow {
            lhs: cond.lhs,
            rhs: cond.rhs,
            holds: cond.holds,
            kind_selected: sel.chosen.kind().as_str(),
            acc_within_val: acc_val,
            acc_across,
        },
        hypothesis: sel.chosen,
        rows,
    })
}

/// One point of a phase-transition sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhasePoint {
    pub d_size: usize,
    pub threshold: usize,
    pub kind: HypothesisKind,
    pub acc_across: f64,
    pub direct_connection: f64,
    pub majority_relation: f64,
}

/// Sweeps `fan_out` on the layered family, which grows `|D|` faster than
/// `|F⁽¹⁾|`, and records which hypothesis ERM keeps. The table holds every
/// one-hop fact so a compositional choice covers all across-expertise hops.
pub fn phase_transition(hubs: usize, fan_in: usize, outsiders: usize, fan_outs: &[usize], kappa_comp: usize) -> Result<Vec<PhasePoint>> {
    fan_outs
        .iter()
        .map(|&fan_out| {
            let (graph, partition) = layered_instance(hubs, fan_in, fan_out, outsiders)?;
            let split = crate::clustering::within_cluster_two_hops(&graph, &partition)?;
            let train = training_set_from(&graph, &partition, &split.within)?;
            let sel = erm_select(&graph, &train, TableScope::Full, kappa_comp)?;
            Ok(PhasePoint {
                d_size: train.len(),
                threshold: graph.num_facts() + kappa_comp,
                kind: sel.chosen.kind(),
                acc_across: evaluate_two_hop(&sel.chosen, &split.across),
                direct_connection: direct_connection_baseline(&graph, &split.across),
                majority_relation: majority_relation_baseline(&graph, &split.across),
            })
        })
        .collect()
}

pub fn phase_rows(experiment: &str, points: &[PhasePoint], seed: u64) -> Vec<ReportRow> {
    points
        .iter()
        .flat_map(|p| {
            let row = |metric: &str, value: f64| ReportRow {
                experiment: experiment.to_string(),
                setting: Setting::Generalization.as_str().to_string(),
                n_experts: Some(2),
                coverage: None,
                alpha: None,
                temperature: None,
                d_size: Some(p.d_size),
                metric: metric.to_string(),
                value,
                seed,
            };
            [
                row("acc_across", p.acc_across),
                row("selected_compositional", f64::from(u8::from(p.kind == HypothesisKind::Compositional))),
                row("direct_connection_across", p.direct_connection),
                row("majority_relation_across", p.majority_relation),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::test_support::{random_graph, tiny};

    #[test]
    fn direct_connection_counts_shortcuts() {
        // a -0-> b -1-> c and a shortcut a -2-> c
        let g = tiny(&["a", "b", "c"], &[(0, 0, 1), (1, 1, 2), (0, 2, 2)], 3);
        let q = TwoHopFact { head: EntityId(0), r1: RelationId(0), r2: RelationId(1), bridge: EntityId(1), tail: EntityId(2) };
        assert_eq!(direct_connection_baseline(&g, &[q]), 1.0);
        let g = tiny(&["a", "b", "c"], &[(0, 0, 1), (1, 1, 2)], 2);
        assert_eq!(direct_connection_baseline(&g, &g.enumerate_two_hop()), 0.0);
    }

    #[test]
    fn majority_picks_the_dominant_tail() {
        // relation 1 points at z nine times out of ten
        let mut facts = vec![];
        for h in 0..10u32 {
            facts.push((h, 1, if h == 9 { 11 } else { 10 }));
        }
        let names: Vec<String> = (0..12).map(|i| format!("n{i}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let g = tiny(&names, &facts, 2);
        let queries: Vec<TwoHopFact> = (0..10u32)
            .map(|h| TwoHopFact {
                head: EntityId(h),
                r1: RelationId(0),
                r2: RelationId(1),
                bridge: EntityId(h),
                tail: EntityId(if h == 9 { 11 } else { 10 }),
            })
            .collect();
        assert!((majority_relation_baseline(&g, &queries) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn uniform_tails_score_one_over_m() {
        // m tails each hit once through relation 1; ties go to the lowest id
        let m = 8u32;
        let facts: Vec<(u32, u32, u32)> = (0..m).map(|i| (i, 1, m + i)).collect();
        let names: Vec<String> = (0..2 * m).map(|i| format!("n{i}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let g = tiny(&names, &facts, 2);
        let queries: Vec<TwoHopFact> = facts
            .iter()
            .map(|&(h, r, t)| TwoHopFact { head: EntityId(h), r1: RelationId(0), r2: RelationId(r), bridge: EntityId(h), tail: EntityId(t) })
            .collect();
        assert!((majority_relation_baseline(&g, &queries) - 1.0 / m as f64).abs() < 1e-12);
    }

    #[test]
    fn report_round_trip_and_header() {
        let rows = vec![ReportRow {
            experiment: "e".into(),
            setting: "denoising".into(),
            n_experts: Some(3),
            coverage: Some(0.2),
            alpha: None,
            temperature: Some(0.0),
            d_size: None,
            metric: "query_accuracy".into(),
            value: 0.5,
            seed: 1,
        }];
        let bytes = report_bytes(&rows);
        let text = String::from_utf8(bytes.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(REPORT_VERSION_LINE));
        assert_eq!(lines.next(), Some("experiment,setting,n_experts,coverage,alpha,temperature,d_size,metric,value,seed"));
        assert_eq!(lines.next(), Some("e,denoising,3,0.2,,0.0,,query_accuracy,0.5,1"));
        assert_eq!(read_report(&bytes).unwrap(), rows);
        assert!(report_bytes(&[]).ends_with(b"seed\n"));
        assert!(read_report(b"experiment\n").is_err());
    }

    #[test]
    fn denoising_grid_row_count_and_determinism() {
        let g = random_graph(4, 120, 3, 4, 400);
        let spec = SweepSpec {
            experiment: "fig4".into(),
            setting: Setting::Denoising,
            n_experts: vec![1, 10, 100],
            coverage: vec![0.2, 0.5, 0.8],
            alpha: vec![0.0],
            temperature: vec![0.0, 1.0],
            seeds: vec![7],
            model: ModelChoice::Exact,
            prior: ExpertPrior::Quota,
        };
        let rows = run_sweep(&spec, &g, None).unwrap();
        assert_eq!(rows.len(), spec.rows_per_seed());
        assert_eq!(rows.iter().filter(|r| r.metric == "query_accuracy").count(), 18);
        assert!(rows.iter().filter(|r| r.metric != "mean_expert_reward").all(|r| (0.0..=1.0).contains(&r.value)));
        assert_eq!(report_bytes(&rows), report_bytes(&run_sweep(&spec, &g, None).unwrap()));
    }

    #[test]
    fn prefix_experts_match_fresh_builds() {
        let g = random_graph(5, 80, 2, 3, 250);
        let big = build_denoising_experts(&g, 10, 0.3, 2).unwrap();
        let small = build_denoising_experts(&g, 4, 0.3, 2).unwrap();
        assert_eq!(&big[..4], &small[..]);
    }

    #[test]
    fn selection_sweep_needs_partition() {
        let g = random_graph(5, 80, 2, 3, 250);
        let spec = SweepSpec {
            experiment: "fig5".into(),
            setting: Setting::Selection,
            n_experts: vec![2],
            coverage: vec![0.1],
            alpha: vec![0.8, 1.0],
            temperature: vec![0.0],
            seeds: vec![1],
            model: ModelChoice::Exact,
            prior: ExpertPrior::Uniform,
        };
        assert!(run_sweep(&spec, &g, None).is_err());
        let p = EdgePartition::new(4, (0..g.num_facts()).map(|i| i % 4).collect()).unwrap();
        let rows = run_sweep(&spec, &g, Some(&p)).unwrap();
        assert_eq!(rows.len(), 2 * 3);
        assert_eq!(rows[0].alpha, Some(0.8));
    }

    #[test]
    fn empirical_model_sweeps() {
        let g = random_graph(6, 60, 2, 3, 150);
        let spec = SweepSpec {
            experiment: "emp".into(),
            setting: Setting::Denoising,
            n_experts: vec![5],
            coverage: vec![1.0],
            alpha: vec![0.0],
            temperature: vec![0.0],
            seeds: vec![1],
            model: ModelChoice::Empirical { samples: 2000 },
            prior: ExpertPrior::Quota,
        };
        let rows = run_sweep(&spec, &g, None).unwrap();
        assert!(rows[0].value > 0.9);
    }

    #[test]
    fn phase_transition_flips_at_threshold() {
        // 4 hubs, 10 heads and 5 outsiders each: |D| = 40 m, |F1| = 4 (15 + m)
        // κ_comp = 228 puts the tie at m = 8
        let points = phase_transition(4, 10, 5, &(1..=12).collect::<Vec<_>>(), 228).unwrap();
        for p in &points {
            let expected = if p.d_size >= p.threshold { HypothesisKind::Compositional } else { HypothesisKind::Memorizer };
            assert_eq!(p.kind, expected, "{p:?}");
        }
        assert!(points.iter().any(|p| p.d_size == p.threshold));
        assert_eq!(phase_rows("phase", &points, 0).len(), 4 * points.len());
    }

    #[test]
    fn generalization_pipeline_on_layered_graph() {
        let (g, p) = layered_instance(3, 6, 6, 2).unwrap();
        let spec = GeneralizationSpec {
            experiment: "gen".into(),
            validation_size: 10,
            kappa_comp: 4,
            scope: TableScope::Full,
            cooccurrence: true,
            seed: 3,
        };
        let out = run_generalization(&spec, &g, &p).unwrap();
        assert_eq!(out.condition.kind_selected, "compositional");
        assert_eq!(out.condition.acc_within_val, 1.0);
        assert_eq!(out.condition.acc_across, 1.0);
        assert_eq!(out.rows.len(), 11);
    }
}
