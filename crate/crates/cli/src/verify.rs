//! `verify`: end-to-end checks of every pipeline against independent oracles.
//!
//! Writes `verify.csv` (denoising, selection and phase experiments in report
//! format, suitable for plotting) and `verify_checks.json`, and prints one
//! PASS/FAIL line per check. Any failure makes the command exit with code 2.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use anyhow::{bail, Result};
use rand::Rng;
use serde::Serialize;

use transcend_lab::clustering::cluster_edges;
use transcend_lab::corpus::{
    generate_corpus, CorpusConfig, CorpusInputs, Sample, SampleKind, Split, TemplateParser, TwoHopFormat,
};
use transcend_lab::eval::{
    direct_connection_baseline, majority_relation_baseline, phase_rows, phase_transition, report_bytes, run_sweep,
    ReportRow, SweepSpec,
};
use transcend_lab::experts::{build_denoising_experts, build_selection_experts, ExpertProfile, Setting};
use transcend_lab::gen_learner::HypothesisKind;
use transcend_lab::graph_gen::{generate_graph, GraphGenConfig};
use transcend_lab::kg::{EntityId, KnowledgeGraph, TwoHopFact};
use transcend_lab::mixture::{
    exact_mixture, fit_empirical, theorem1_exact, total_variation, two_expert_terms, RewardSpec,
};
use transcend_lab::seed::{derive_seed, rng_for};

use crate::commands::Ctx;

#[derive(Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

struct Sizes {
    coverage: Vec<f64>,
    n_experts: Vec<usize>,
    temperature: Vec<f64>,
    selection_seeds: usize,
    theorem_configs: usize,
}

impl Sizes {
    fn new(quick: bool) -> Self {
        if quick {
            Sizes {
                coverage: vec![0.2],
                n_experts: vec![1, 100],
                temperature: vec![0.0, 1.0],
                selection_seeds: 1,
                theorem_configs: 200,
            }
        } else {
            Sizes {
                coverage: vec![0.1, 0.2, 0.3, 0.5, 0.8],
                n_experts: vec![1, 10, 100],
                temperature: vec![0.0, 0.5, 1.0],
                selection_seeds: 3,
                theorem_configs: 1000,
            }
        }
    }
}

fn find<'a>(rows: &'a [ReportRow], pred: impl Fn(&ReportRow) -> bool) -> Option<&'a ReportRow> {
    rows.iter().find(|r| pred(r))
}

fn same(a: Option<f64>, b: f64) -> bool {
    a.is_some_and(|x| (x - b).abs() < 1e-12)
}

pub fn run(ctx: &Ctx, quick: bool) -> Result<()> {
    let sizes = Sizes::new(quick);
    let master = ctx.config.seed;
    let mut checks = Vec::new();
    let mut report = Vec::new();

    let t = Instant::now();
    let desk = generate_graph(&GraphGenConfig::desk(derive_seed(master, "graph", 0)))?;
    let expert_seed = derive_seed(master, "experts", 0);
    let denoise = SweepSpec {
        experiment: "denoising".into(),
        setting: Setting::Denoising,
        n_experts: sizes.n_experts.clone(),
        coverage: sizes.coverage.clone(),
        alpha: vec![0.0],
        temperature: sizes.temperature.clone(),
        seeds: vec![expert_seed],
        model: Default::default(),
        prior: Default::default(),
    };
    let rows = run_sweep(&denoise, &desk, None)?;
    let secs = t.elapsed().as_secs_f64();
    let cell = |metric: &str, temp: Option<f64>| {
        find(&rows, |r| {
            r.n_experts == Some(100)
                && same(r.coverage, 0.2)
                && r.metric == metric
                && match temp {
                    Some(t) => same(r.temperature, t),
                    None => r.temperature.is_none(),
                }
        })
        .map(|r| r.value)
    };
    let (acc0, acc1, best) = (
        cell("query_accuracy", Some(0.0)).unwrap_or(f64::NAN),
        cell("query_accuracy", Some(1.0)).unwrap_or(f64::NAN),
        cell("max_expert_reward", None).unwrap_or(f64::NAN),
    );
    checks.push(Check {
        name: "denoising_transcendence",
        pass: acc0 >= 0.95 && acc0 > best && (best - 0.2).abs() <= 0.03,
        detail: format!("n_e=100 c=0.2: tau=0 accuracy {acc0:.4}, best expert {best:.4}"),
        seconds: secs,
    });
    checks.push(Check {
        name: "temperature_effect",
        pass: (acc1 - 0.2).abs() <= 0.05 && acc0 >= acc1 + 0.5,
        detail: format!("tau=1 accuracy {acc1:.4} (c=0.2), tau=0 accuracy {acc0:.4}"),
        seconds: 0.0,
    });
    report.extend(rows);

    let t = Instant::now();
    let partition = cluster_edges(&desk, 50, derive_seed(master, "cluster", 0))?;
    let alphas = [0.8, 0.9, 0.95, 1.0];
    let select = SweepSpec {
        experiment: "selection".into(),
        setting: Setting::Selection,
        n_experts: vec![10, 100],
        coverage: vec![0.1],
        alpha: alphas.to_vec(),
        temperature: vec![0.0],
        seeds: (0..sizes.selection_seeds as u64).map(|i| derive_seed(master, "experts", i)).collect(),
        model: Default::default(),
        prior: Default::default(),
    };
    let rows = run_sweep(&select, &desk, Some(&partition))?;
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for &seed in &select.seeds {
        for n_e in [10, 100] {
            let acc: Vec<f64> = alphas
                .iter()
                .map(|&a| {
                    find(&rows, |r| {
                        r.seed == seed && r.n_experts == Some(n_e) && same(r.alpha, a) && r.metric == "query_accuracy"
                    })
                    .map_or(f64::NAN, |r| r.value)
                })
                .collect();
            if !acc.windows(2).all(|w| w[1] >= w[0]) {
                failures.push(format!("seed {seed} n_e {n_e}: not monotone {acc:?}"));
            }
            if n_e == 100 {
                if acc[3] - acc[0] <= 0.05 {
                    failures.push(format!("seed {seed}: alpha gap {:.4}", acc[3] - acc[0]));
                }
                if acc[3] < 0.9 {
                    failures.push(format!("seed {seed}: alpha=1 accuracy {:.4}", acc[3]));
                }
                summary.push(format!("{:.3}->{:.3}", acc[0], acc[3]));
            }
        }
    }
    let worst = rows.iter().filter(|r| r.metric == "max_expert_reward").map(|r| r.value).fold(0.0, f64::max);
    if worst > 0.15 {
        failures.push(format!("expert reward {worst:.4} exceeds c + 0.05"));
    }
    checks.push(Check {
        name: "selection_transcendence",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("n_e=100 accuracy alpha 0.8->1.0: {}; best expert {worst:.4}", summary.join(", "))
        } else {
            failures.join("; ")
        },
        seconds: t.elapsed().as_secs_f64(),
    });
    report.extend(rows);

    let t = Instant::now();
    checks.push(theorem_necessity(master, sizes.theorem_configs, t)?);

    let t = Instant::now();
    let g = &ctx.config.generalize;
    let points = phase_transition(g.phase_hubs, g.phase_fan_in, g.phase_outsiders, &g.phase_fan_outs, g.kappa_comp)?;
    let mut bad = Vec::new();
    for p in &points {
        let expect = if p.d_size >= p.threshold { HypothesisKind::Compositional } else { HypothesisKind::Memorizer };
        let ok = p.kind == expect
            && match p.kind {
                HypothesisKind::Compositional => {
                    p.acc_across == 1.0 && p.acc_across > p.direct_connection && p.acc_across > p.majority_relation
                }
                HypothesisKind::Memorizer => p.acc_across == 0.0,
            };
        if !ok {
            bad.push(format!("|D|={} threshold {}: {:?} acc {}", p.d_size, p.threshold, p.kind, p.acc_across));
        }
    }
    let flips = points.windows(2).filter(|w| w[0].kind != w[1].kind).count();
    checks.push(Check {
        name: "phase_transition",
        pass: bad.is_empty() && flips == 1,
        detail: if bad.is_empty() {
            format!("{} points, {flips} flip at the |F1|+kappa threshold", points.len())
        } else {
            bad.join("; ")
        },
        seconds: t.elapsed().as_secs_f64(),
    });
    report.extend(phase_rows("phase", &points, master));

    let t = Instant::now();
    checks.push(mixture_correctness(master, t)?);
    let t = Instant::now();
    checks.push(corpus_contract(master, t)?);
    let t = Instant::now();
    checks.push(baseline_oracles(master, t)?);

    ctx.write("verify.csv", &report_bytes(&report))?;
    let mut json = serde_json::to_vec_pretty(&checks)?;
    json.push(b'\n');
    ctx.write("verify_checks.json", &json)?;

    let mut failed = 0;
    for c in &checks {
        println!("{} {:<24} {} ({:.1}s)", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail, c.seconds);
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(())
}

fn small_graph(seed: u64, entities: usize, edges: usize) -> Result<KnowledgeGraph> {
    let mut config = GraphGenConfig::desk(seed);
    config.n_entities = entities;
    config.target_edges = edges;
    Ok(generate_graph(&config)?)
}

/// Two selection experts on small clustered graphs with random coverage, α and
/// prior weight; transcendence at τ = 1 must imply a positive statistic.
fn theorem_necessity(master: u64, configs: usize, t: Instant) -> Result<Check> {
    let mut flagged = 0;
    let mut violations = Vec::new();
    for i in 0..configs {
        let mut rng = rng_for(master, "theorem-config", i as u64);
        let graph = small_graph(rng.random(), 80, rng.random_range(40..=100))?;
        let k = rng.random_range(2..=6);
        let partition = cluster_edges(&graph, k, rng.random())?;
        let c = rng.random_range(0.05..=0.6);
        let alpha = rng.random_range(0.5..=1.0);
        let experts = build_selection_experts(&graph, &partition, 2, c, rng.random())?;
        let w = rng.random_range(0.05..=0.95);
        let model = exact_mixture(&experts, alpha, &[w, 1.0 - w])?;
        let spec = RewardSpec::uniform_over_facts(&graph);
        let check = theorem1_exact(&two_expert_terms(&model, &graph, &spec, alpha, &experts)?)?;
        if check.transcends() {
            flagged += 1;
            if !check.statistic_positive() {
                violations.push(i);
            }
        }
    }
    Ok(Check {
        name: "theorem_necessity",
        pass: violations.is_empty() && flagged > 0,
        detail: format!("{configs} configurations, {flagged} transcendent, violations {violations:?}"),
        seconds: t.elapsed().as_secs_f64(),
    })
}

fn paragraphs(samples: &[Sample]) -> impl Iterator<Item = (usize, &str)> {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.kind == SampleKind::OneHopParagraph)
        .map(|(i, s)| (i + 1, s.text.as_str()))
}

/// Empirical fit on 10^5 generated paragraphs against the exact mixture.
fn mixture_correctness(master: u64, t: Instant) -> Result<Check> {
    let graph = small_graph(derive_seed(master, "mixture-graph", 0), 200, 200)?;
    let experts = build_denoising_experts(&graph, 5, 0.5, derive_seed(master, "mixture-experts", 0))?;
    let exact = exact_mixture(&experts, 0.0, &[1.0; 5])?;
    let config = CorpusConfig::new(100_000, derive_seed(master, "mixture-corpus", 0));
    let corpus = generate_corpus(&CorpusInputs { graph: &graph, experts: &experts, partition: None, provider: None }, &config)?;
    let fitted = fit_empirical(&graph, paragraphs(&corpus.train))?;
    let mut worst = 0.0f64;
    let mut missing = 0;
    for key in exact.prefixes() {
        match fitted.distribution(key) {
            Some(d) => worst = worst.max(total_variation(exact.distribution(key).expect("own prefix"), d)),
            None => missing += 1,
        }
    }
    let norm = exact.normalization_error().max(fitted.normalization_error());
    Ok(Check {
        name: "mixture_correctness",
        pass: worst <= 0.05 && missing == 0 && norm <= 1e-9 && fitted.len() == exact.len(),
        detail: format!("{} prefixes, max TV {worst:.4}, normalization error {norm:.1e}", exact.len()),
        seconds: t.elapsed().as_secs_f64(),
    })
}

fn two_hop_of(graph: &KnowledgeGraph, s: &Sample) -> TwoHopFact {
    let (a, b) = (graph.fact(s.fact_ids[0]), graph.fact(s.fact_ids[1]));
    TwoHopFact { head: a.head, r1: a.relation, r2: b.relation, bridge: a.tail, tail: b.tail }
}

/// Serial vs. parallel byte identity, Level-1 provenance, split partition and CoT shape.
fn corpus_contract(master: u64, t: Instant) -> Result<Check> {
    let graph = small_graph(derive_seed(master, "corpus-graph", 0), 300, 900)?;
    let partition = cluster_edges(&graph, 6, derive_seed(master, "corpus-cluster", 0))?;
    let experts = build_denoising_experts(&graph, 10, 0.3, derive_seed(master, "corpus-experts", 0))?;
    let mut config = CorpusConfig::new(5000, derive_seed(master, "corpus", 0));
    config.two_hop.include = true;
    config.two_hop.train_repeat = 2;
    config.two_hop.format = TwoHopFormat::Cot;
    config.two_hop.validation_size = 20;
    let inputs = CorpusInputs { graph: &graph, experts: &experts, partition: Some(&partition), provider: None };
    let run_with = |threads: usize| -> Result<Vec<u8>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        let corpus = pool.install(|| generate_corpus(&inputs, &config))?;
        let mut bytes = transcend_lab::corpus::to_jsonl(&corpus.train);
        bytes.extend(transcend_lab::corpus::to_jsonl(&corpus.validation));
        bytes.extend(transcend_lab::corpus::to_jsonl(&corpus.test));
        Ok(bytes)
    };
    let mut problems = Vec::new();
    if run_with(1)? != run_with(8)? {
        problems.push("serial and 8-worker corpora differ".to_string());
    }
    let corpus = generate_corpus(&inputs, &config)?;
    let parser = TemplateParser::new(&graph);
    let mut unsound = 0;
    for s in corpus.train.iter().filter(|s| s.kind == SampleKind::OneHopParagraph) {
        let expert: &ExpertProfile = &experts[s.expert_id.expect("paragraphs carry an expert")];
        let expected: Vec<_> = s.fact_ids.iter().map(|f| expert.facts[f.index()].fact).collect();
        if parser.parse_paragraph(&s.text) != Some(expected) {
            unsound += 1;
        }
    }
    if unsound > 0 {
        problems.push(format!("{unsound} paragraphs do not parse back to their fact_ids"));
    }
    let collect = |split: Split, samples: &[Sample]| -> BTreeSet<TwoHopFact> {
        samples.iter().filter(|s| s.split == split && s.kind == SampleKind::TwoHopCot).map(|s| two_hop_of(&graph, s)).collect()
    };
    let train = collect(Split::Train, &corpus.train);
    let val = collect(Split::Validation, &corpus.validation);
    let test = collect(Split::Test, &corpus.test);
    let all: BTreeSet<TwoHopFact> = graph.enumerate_two_hop().into_iter().collect();
    let disjoint = train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test);
    let union: BTreeSet<TwoHopFact> = train.iter().chain(&val).chain(&test).copied().collect();
    if !disjoint || union != all {
        problems.push(format!(
            "splits {}/{}/{} disjoint={disjoint}, union {} of {}",
            train.len(),
            val.len(),
            test.len(),
            union.len(),
            all.len()
        ));
    }
    let bad_cot = corpus
        .train
        .iter()
        .chain(&corpus.validation)
        .chain(&corpus.test)
        .filter(|s| s.kind == SampleKind::TwoHopCot)
        .filter(|s| {
            let th = two_hop_of(&graph, s);
            let suffix = format!("? {}; {}.", graph.name(th.bridge), graph.name(th.tail));
            !(s.text.starts_with("What is the ") && s.text.ends_with(&suffix))
        })
        .count();
    if bad_cot > 0 {
        problems.push(format!("{bad_cot} CoT lines off format"));
    }
    Ok(Check {
        name: "corpus_contract",
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("{} samples, {} two-hop facts split {}/{}/{}", corpus.train.len(), all.len(), train.len(), val.len(), test.len())
        } else {
            problems.join("; ")
        },
        seconds: t.elapsed().as_secs_f64(),
    })
}

fn brute_direct(graph: &KnowledgeGraph, queries: &[TwoHopFact]) -> f64 {
    let hits = queries.iter().filter(|q| graph.facts().iter().any(|f| f.head == q.head && f.tail == q.tail)).count();
    if queries.is_empty() {
        0.0
    } else {
        hits as f64 / queries.len() as f64
    }
}

fn brute_majority(graph: &KnowledgeGraph, queries: &[TwoHopFact]) -> f64 {
    let hits = queries
        .iter()
        .filter(|q| {
            let ty = graph.semantic_type(q.tail);
            let mut counts: BTreeMap<EntityId, usize> = BTreeMap::new();
            for f in graph.facts() {
                if f.relation == q.r2 && graph.semantic_type(f.tail) == ty {
                    *counts.entry(f.tail).or_default() += 1;
                }
            }
            let top = counts.values().copied().max().unwrap_or(0);
            counts.iter().find(|(_, &n)| n == top).is_some_and(|(&t, _)| t == q.tail)
        })
        .count();
    if queries.is_empty() {
        0.0
    } else {
        hits as f64 / queries.len() as f64
    }
}

fn baseline_oracles(master: u64, t: Instant) -> Result<Check> {
    let mut mismatches = Vec::new();
    for i in 0..20u64 {
        let mut rng = rng_for(master, "baseline-graph", i);
        let graph = small_graph(rng.random(), 200, rng.random_range(100..=500))?;
        let queries = graph.enumerate_two_hop();
        let (d, db) = (direct_connection_baseline(&graph, &queries), brute_direct(&graph, &queries));
        let (m, mb) = (majority_relation_baseline(&graph, &queries), brute_majority(&graph, &queries));
        if d != db || m != mb {
            mismatches.push(format!("graph {i}: direct {d} vs {db}, majority {m} vs {mb}"));
        }
    }
    Ok(Check {
        name: "baseline_oracles",
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() { "20 random graphs agree exactly".into() } else { mismatches.join("; ") },
        seconds: t.elapsed().as_secs_f64(),
    })
}
