use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use transcend_lab::clustering::{cluster_edges_with, line_graph_modularity, ClusterOptions, EdgePartition};
use transcend_lab::corpus::{generate_corpus, split_two_hops, to_jsonl, CorpusConfig, CorpusInputs, QuotaMode, RemoteRephraser};
use transcend_lab::eval::{
    cooccurrence_baseline, direct_connection_baseline, majority_relation_baseline, phase_rows, phase_transition,
    report_bytes, run_generalization, run_sweep, GeneralizationSpec, ReportRow, SweepSpec,
};
use transcend_lab::experts::{
    build_denoising_experts_with, build_generalization_experts, build_selection_experts_with, experts_from_json,
    experts_to_json, ExpertOptions, ExpertProfile, Setting,
};
use transcend_lab::gen_learner::write_condition_csv;
use transcend_lab::graph_gen::{generate_graph, rename_entities, structure_digest, PseudowordNames, RemoteNames};
use transcend_lab::kg::{self, KnowledgeGraph};
use transcend_lab::seed::derive_seed;

use crate::config::{NameSource, RunConfig};
use crate::provider::{HttpTransport, KEY_VAR};
use crate::{Cli, Command, Invalid};

pub const LOCK_FILE: &str = ".transcend-lab.lock";

/// Held for the lifetime of a run; removes the lock file on drop.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                anyhow::anyhow!("{} is locked by another run (delete {} if it is stale)", dir.display(), path.display())
            } else {
                anyhow::Error::new(e).context(format!("creating {}", path.display()))
            }
        })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(DirLock(path))
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct Ctx {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    fn read(&self, name: &str, produced_by: &str) -> Result<Vec<u8>> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Invalid(format!("{} not found; run `{produced_by}` first", path.display())).into());
        }
        fs::read(&path).with_context(|| format!("reading {}", path.display()))
    }

    fn seed(&self, purpose: &str) -> u64 {
        derive_seed(self.config.seed, purpose, 0)
    }

    fn graph(&self) -> Result<KnowledgeGraph> {
        let bytes = self.read("graph.json", "gen-graph")?;
        kg::deserialize(&bytes).context("loading graph.json")
    }

    fn partition(&self, graph: &KnowledgeGraph) -> Result<EdgePartition> {
        let bytes = self.read("partition.json", "cluster")?;
        let p = EdgePartition::from_json(&bytes).context("loading partition.json")?;
        p.check_graph(graph).context("partition.json does not match graph.json")?;
        Ok(p)
    }

    fn partition_if_present(&self, graph: &KnowledgeGraph) -> Result<Option<EdgePartition>> {
        if self.path("partition.json").exists() {
            self.partition(graph).map(Some)
        } else {
            Ok(None)
        }
    }

    fn experts(&self, graph: &KnowledgeGraph, partition: Option<&EdgePartition>) -> Result<Vec<ExpertProfile>> {
        let bytes = self.read("experts.json", "make-experts")?;
        experts_from_json(&bytes, graph, partition).context("loading experts.json")
    }
}

fn transport(cfg: &RunConfig, purpose: &str) -> Result<HttpTransport> {
    HttpTransport::from_env(&cfg.llm).ok_or_else(|| Invalid(format!("{purpose} needs the {KEY_VAR} environment variable")).into())
}

/// Folds flag overrides into the loaded configuration.
fn apply_flags(cli: &Cli, cfg: &mut RunConfig) {
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::GenGraph(a) => {
            let g = &mut cfg.graph;
            if let Some(p) = a.preset {
                g.preset = p;
            }
            if a.import.is_some() {
                g.import = a.import.clone();
            }
            g.n_entities = a.entities.or(g.n_entities);
            g.target_edges = a.edges.or(g.target_edges);
            g.relations = a.relations.or(g.relations);
            g.degree_skew = a.skew.or(g.degree_skew);
            g.functional |= a.functional;
            if let Some(n) = a.names {
                g.names = n;
            }
        }
        Command::Cluster(a) => {
            if let Some(k) = a.k {
                cfg.cluster.k = k;
            }
        }
        Command::MakeExperts(a) => {
            let e = &mut cfg.experts;
            if let Some(s) = a.setting {
                e.setting = s;
            }
            if let Some(n) = a.n_experts {
                e.n_experts = n;
            }
            if let Some(c) = a.coverage {
                e.coverage = c;
            }
        }
        Command::GenCorpus(a) => {
            let c = &mut cfg.corpus;
            if let Some(n) = a.samples {
                c.total_samples = n;
            }
            if let Some(x) = a.alpha {
                c.alpha = x;
            }
            if let Some(l) = a.level {
                c.diversity_level = l;
            }
            c.two_hop.include |= a.two_hop;
            if let Some(f) = a.format {
                c.two_hop.format = f;
            }
            if let Some(v) = a.validation_size {
                c.two_hop.validation_size = v;
            }
        }
        Command::Simulate(a) => {
            if a.setting.is_some() {
                cfg.simulate.setting = a.setting;
            }
            if let Some(samples) = a.empirical {
                cfg.simulate.model = transcend_lab::eval::ModelChoice::Empirical { samples };
            }
        }
        Command::Generalize(a) => {
            if let Some(k) = a.kappa_comp {
                cfg.generalize.kappa_comp = k;
            }
            if let Some(v) = a.validation_size {
                cfg.generalize.validation_size = v;
            }
        }
        Command::Baselines | Command::Verify(_) => {}
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Invalid("--workers must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    let mut config = RunConfig::load(cli.config.as_deref())?;
    apply_flags(cli, &mut config);
    let out = config.output_dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
    let _lock = DirLock::acquire(&out)?;
    config.write_effective(&out)?;
    let ctx = Ctx { config, out };
    match &cli.command {
        Command::GenGraph(_) => gen_graph(&ctx),
        Command::Cluster(_) => cluster(&ctx),
        Command::MakeExperts(_) => make_experts(&ctx),
        Command::GenCorpus(_) => gen_corpus(&ctx),
        Command::Simulate(_) => simulate(&ctx),
        Command::Generalize(_) => generalize(&ctx),
        Command::Baselines => baselines(&ctx),
        Command::Verify(a) => crate::verify::run(&ctx, a.quick),
    }
}

fn gen_graph(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.config;
    let seed = ctx.seed("graph");
    let name_seed = derive_seed(seed, "rename", 0);
    let graph = match &cfg.graph.import {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| Invalid(format!("cannot read {}: {e}", path.display())))?;
            let g = kg::deserialize(&bytes).with_context(|| format!("importing {}", path.display()))?;
            match cfg.graph.names {
                NameSource::Pseudoword => rename_entities(&g, &mut PseudowordNames { seed: name_seed }, name_seed)?,
                NameSource::Remote => {
                    rename_entities(&g, &mut RemoteNames::new(transport(cfg, "remote naming")?), name_seed)?
                }
            }
        }
        None => {
            let gen = cfg.graph.to_gen_config(seed)?;
            let g = generate_graph(&gen)?;
            match cfg.graph.names {
                NameSource::Pseudoword => g,
                NameSource::Remote => {
                    rename_entities(&g, &mut RemoteNames::new(transport(cfg, "remote naming")?), name_seed)?
                }
            }
        }
    };
    ctx.write("graph.json", &kg::serialize(&graph))?;
    println!(
        "graph: {} entities, {} relations, {} facts, digest {}",
        graph.num_entities(),
        graph.relations().len(),
        graph.num_facts(),
        structure_digest(&graph)
    );
    Ok(())
}

fn cluster(ctx: &Ctx) -> Result<()> {
    let graph = ctx.graph()?;
    let c = &ctx.config.cluster;
    let options = ClusterOptions { laplacian: c.laplacian, restarts: c.restarts, ..ClusterOptions::default() };
    let p = cluster_edges_with(&graph, c.k, ctx.seed("cluster"), &options)?;
    ctx.write("partition.json", &p.to_json())?;
    let sizes = p.sizes().iter().filter(|&&s| s > 0);
    let (min, max) = sizes.fold((usize::MAX, 0), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    println!(
        "partition: {} non-empty clusters of {min}..{max} facts, line-graph modularity {:.3}",
        p.non_empty(),
        line_graph_modularity(&graph, p.assignment(), p.k())
    );
    Ok(())
}

fn make_experts(ctx: &Ctx) -> Result<()> {
    let graph = ctx.graph()?;
    let e = &ctx.config.experts;
    let mut options = ExpertOptions::for_setting(e.setting);
    options.on_uncorruptible = e.on_uncorruptible;
    if let Some(m) = e.misconceptions {
        options.misconceptions = m;
    }
    let seed = ctx.seed("experts");
    let experts = match e.setting {
        Setting::Denoising => build_denoising_experts_with(&graph, e.n_experts, e.coverage, seed, options)?,
        Setting::Selection => {
            let p = ctx.partition(&graph)?;
            build_selection_experts_with(&graph, &p, e.n_experts, e.coverage, seed, options)?
        }
        Setting::Generalization => build_generalization_experts(&graph, &ctx.partition(&graph)?)?,
    };
    ctx.write("experts.json", &experts_to_json(&experts))?;
    let corrupted: usize = experts.iter().map(ExpertProfile::corrupted_count).sum();
    let total: usize = experts.iter().map(|x| x.facts.len()).sum();
    println!("experts: {} {} experts, {corrupted} of {total} personal facts corrupted", experts.len(), e.setting.as_str());
    Ok(())
}

fn corpus_seed(ctx: &Ctx) -> u64 {
    ctx.seed("corpus")
}

fn gen_corpus(ctx: &Ctx) -> Result<()> {
    let graph = ctx.graph()?;
    let partition = ctx.partition_if_present(&graph)?;
    let experts = ctx.experts(&graph, partition.as_ref())?;
    let c = &ctx.config.corpus;
    let setting = experts.first().map(|e| e.setting).unwrap_or(Setting::Denoising);
    let quota_mode = c.quota_mode.unwrap_or(match setting {
        Setting::Generalization => QuotaMode::Proportional,
        _ => QuotaMode::Equal,
    });
    let config = CorpusConfig {
        total_samples: c.total_samples,
        quota_mode,
        alpha: c.alpha,
        diversity_level: c.diversity_level,
        two_hop: c.two_hop.clone(),
        seed: corpus_seed(ctx),
    };
    if config.two_hop.include && partition.is_none() {
        return Err(Invalid("two-hop sentences need partition.json; run `cluster` first".into()).into());
    }
    let remote = if config.diversity_level >= 3 {
        HttpTransport::from_env(&ctx.config.llm).map(RemoteRephraser::new)
    } else {
        None
    };
    let provider = remote.as_ref().map(|r| r as &dyn transcend_lab::corpus::RephraseProvider);
    if config.diversity_level >= 3 && provider.is_none() {
        eprintln!("warning: no {KEY_VAR} set; Level {} paragraphs keep their Level 2 text", config.diversity_level);
    }
    let inputs = CorpusInputs { graph: &graph, experts: &experts, partition: partition.as_ref(), provider };
    let corpus = generate_corpus(&inputs, &config)?;
    ctx.write("corpus/train.jsonl", &to_jsonl(&corpus.train))?;
    ctx.write("corpus/validation.jsonl", &to_jsonl(&corpus.validation))?;
    ctx.write("corpus/test.jsonl", &to_jsonl(&corpus.test))?;
    let manifest = json!({
        "graph_digest": structure_digest(&graph),
        "config": config,
        "quotas": corpus.quotas,
        "counts": {
            "train": corpus.train.len(),
            "validation": corpus.validation.len(),
            "test": corpus.test.len(),
        },
        "rephrase_fallbacks": corpus.rephrase_fallbacks,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    ctx.write("corpus/manifest.json", &bytes)?;
    println!(
        "corpus: {} train, {} validation, {} test samples",
        corpus.train.len(),
        corpus.validation.len(),
        corpus.test.len()
    );
    Ok(())
}

fn simulate(ctx: &Ctx) -> Result<()> {
    let graph = ctx.graph()?;
    let s = &ctx.config.simulate;
    let setting = ctx.config.simulate_setting();
    let partition = match setting {
        Setting::Selection => Some(ctx.partition(&graph)?),
        _ => None,
    };
    let spec = SweepSpec {
        experiment: s.experiment.clone(),
        setting,
        n_experts: s.n_experts.clone(),
        coverage: s.coverage.clone(),
        alpha: if setting == Setting::Denoising { vec![0.0] } else { s.alpha.clone() },
        temperature: s.temperature.clone(),
        seeds: s.seeds.clone(),
        model: s.model,
        prior: s.prior,
    };
    let rows = run_sweep(&spec, &graph, partition.as_ref())?;
    ctx.write("report.csv", &report_bytes(&rows))?;
    println!("report: {} rows", rows.len());
    Ok(())
}

fn generalize(ctx: &Ctx) -> Result<()> {
    let graph = ctx.graph()?;
    let partition = ctx.partition(&graph)?;
    let g = &ctx.config.generalize;
    let spec = GeneralizationSpec {
        experiment: "two_hop".into(),
        validation_size: g.validation_size,
        kappa_comp: g.kappa_comp,
        scope: g.scope,
        cooccurrence: g.cooccurrence,
        seed: corpus_seed(ctx),
    };
    let outcome = run_generalization(&spec, &graph, &partition)?;
    let points = phase_transition(g.phase_hubs, g.phase_fan_in, g.phase_outsiders, &g.phase_fan_outs, g.kappa_comp)?;
    let mut rows = outcome.rows;
    rows.extend(phase_rows("phase", &points, ctx.config.seed));
    ctx.write("generalize.csv", &report_bytes(&rows))?;
    let mut cond = Vec::new();
    write_condition_csv(std::slice::from_ref(&outcome.condition), &mut cond)?;
    ctx.write("condition.csv", &cond)?;
    ctx.write("hypothesis.json", &outcome.hypothesis.to_json())?;
    let c = &outcome.condition;
    println!(
        "generalize: |D|+|F1| = {} vs |T1|+kappa = {} ({}), selected {}, within-val {:.3}, across {:.3}",
        c.lhs,
        c.rhs,
        if c.holds { "holds" } else { "fails" },
        c.kind_selected,
        c.acc_within_val,
        c.acc_across
    );
    Ok(())
}

fn baselines(ctx: &Ctx) -> Result<()> {
    let graph = ctx.graph()?;
    let partition = ctx.partition(&graph)?;
    let splits = split_two_hops(&graph, &partition, ctx.config.generalize.validation_size, corpus_seed(ctx))?;
    let row = |metric: &str, value: f64| ReportRow {
        experiment: "baselines".into(),
        setting: Setting::Generalization.as_str().into(),
        n_experts: Some(partition.non_empty()),
        coverage: None,
        alpha: None,
        temperature: None,
        d_size: Some(splits.train_within.len()),
        metric: metric.into(),
        value,
        seed: ctx.config.seed,
    };
    let rows = vec![
        row("direct_connection_val", direct_connection_baseline(&graph, &splits.validation_within)),
        row("direct_connection_across", direct_connection_baseline(&graph, &splits.test_across)),
        row("majority_relation_val", majority_relation_baseline(&graph, &splits.validation_within)),
        row("majority_relation_across", majority_relation_baseline(&graph, &splits.test_across)),
        row("cooccurrence_val", cooccurrence_baseline(&splits.train_within, &splits.validation_within)),
        row("cooccurrence_across", cooccurrence_baseline(&splits.train_within, &splits.test_across)),
    ];
    ctx.write("baselines.csv", &report_bytes(&rows))?;
    for r in &rows {
        println!("{:<26} {:.4}", r.metric, r.value);
    }
    Ok(())
}
