//! Run configuration: one TOML file covering every pipeline stage.
//!
//! Precedence, lowest to highest: built-in defaults, the config file, then
//! command-line flags. The merged result is written back as
//! `effective_config.toml` in the output directory; running again with that
//! file as `--config` reproduces the outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use transcend_lab::clustering::LaplacianKind;
use transcend_lab::corpus::{QuotaMode, TwoHopConfig};
use transcend_lab::eval::{ExpertPrior, ModelChoice};
use transcend_lab::experts::{Misconceptions, OnUncorruptible, Setting};
use transcend_lab::gen_learner::{TableScope, DEFAULT_KAPPA_COMP};
use transcend_lab::graph_gen::{GraphGenConfig, RelationSpec, TypeSpec};

use crate::Invalid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every stage derives its own seed from it by purpose name.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub graph: GraphSection,
    pub cluster: ClusterSection,
    pub experts: ExpertSection,
    pub corpus: CorpusSection,
    pub simulate: SimulateSection,
    pub generalize: GeneralizeSection,
    pub llm: LlmSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: PathBuf::from("out"),
            graph: GraphSection::default(),
            cluster: ClusterSection::default(),
            experts: ExpertSection::default(),
            corpus: CorpusSection::default(),
            simulate: SimulateSection::default(),
            generalize: GeneralizeSection::default(),
            llm: LlmSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NameSource {
    Pseudoword,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub preset: Preset,
    /// Load this graph JSON instead of generating one; names are then redrawn.
    pub import: Option<PathBuf>,
    pub n_entities: Option<usize>,
    pub target_edges: Option<usize>,
    /// Use the first `relations` entries of the preset's relation list.
    pub relations: Option<usize>,
    pub degree_skew: Option<f64>,
    pub functional: bool,
    pub names: NameSource,
    /// Replace the preset's types and relations entirely.
    pub types_override: Option<Vec<TypeSpec>>,
    pub relations_override: Option<Vec<RelationSpec>>,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            preset: Preset::Desk,
            import: None,
            n_entities: None,
            target_edges: None,
            relations: None,
            degree_skew: None,
            functional: false,
            names: NameSource::Pseudoword,
            types_override: None,
            relations_override: None,
        }
    }
}

impl GraphSection {
    pub fn to_gen_config(&self, seed: u64) -> Result<GraphGenConfig> {
        let mut config = match self.preset {
            Preset::Desk => GraphGenConfig::desk(seed),
            Preset::Reference => GraphGenConfig::reference(seed),
        };
        if let Some(n) = self.relations {
            if n == 0 || n > config.relations.len() {
                return Err(Invalid(format!("graph.relations must lie in 1..={}", config.relations.len())).into());
            }
            config.relations.truncate(n);
        }
        if let Some(types) = &self.types_override {
            config.types = types.clone();
        }
        if let Some(rels) = &self.relations_override {
            config.relations = rels.clone();
        }
        if let Some(n) = self.n_entities {
            config.n_entities = n;
        }
        if let Some(m) = self.target_edges {
            config.target_edges = m;
        }
        if let Some(s) = self.degree_skew {
            config.degree_skew = s;
        }
        config.functional = self.functional;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub k: usize,
    pub laplacian: LaplacianKind,
    pub restarts: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection { k: 50, laplacian: LaplacianKind::Normalized, restarts: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertSection {
    pub setting: Setting,
    pub n_experts: usize,
    pub coverage: f64,
    /// Defaults per setting: shared for selection, independent otherwise.
    pub misconceptions: Option<Misconceptions>,
    pub on_uncorruptible: OnUncorruptible,
}

impl Default for ExpertSection {
    fn default() -> Self {
        ExpertSection {
            setting: Setting::Denoising,
            n_experts: 100,
            coverage: 0.2,
            misconceptions: None,
            on_uncorruptible: OnUncorruptible::Error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub total_samples: usize,
    /// Defaults to equal shares, proportional in the generalization setting.
    pub quota_mode: Option<QuotaMode>,
    pub alpha: f64,
    pub diversity_level: u8,
    pub two_hop: TwoHopConfig,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            total_samples: 100_000,
            quota_mode: None,
            alpha: 1.0,
            diversity_level: 1,
            two_hop: TwoHopConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub experiment: String,
    /// Defaults to `experts.setting`.
    pub setting: Option<Setting>,
    pub n_experts: Vec<usize>,
    pub coverage: Vec<f64>,
    pub alpha: Vec<f64>,
    pub temperature: Vec<f64>,
    /// Replicate seeds, used as the expert master seeds.
    pub seeds: Vec<u64>,
    pub model: ModelChoice,
    pub prior: ExpertPrior,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            experiment: "sweep".into(),
            setting: None,
            n_experts: vec![1, 10, 100],
            coverage: vec![0.2, 0.5, 0.8],
            alpha: vec![0.8, 0.9, 0.95, 1.0],
            temperature: vec![0.0, 1.0],
            seeds: vec![1],
            model: ModelChoice::Exact,
            prior: ExpertPrior::Quota,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneralizeSection {
    pub validation_size: usize,
    pub kappa_comp: usize,
    pub scope: TableScope,
    pub cooccurrence: bool,
    /// Layered-family sweep: hubs, heads per hub, outsiders per hub, fan-outs.
    pub phase_hubs: usize,
    pub phase_fan_in: usize,
    pub phase_outsiders: usize,
    pub phase_fan_outs: Vec<usize>,
}

impl Default for GeneralizeSection {
    fn default() -> Self {
        GeneralizeSection {
            validation_size: 200,
            kappa_comp: DEFAULT_KAPPA_COMP,
            scope: TableScope::IncidentToD,
            cooccurrence: false,
            phase_hubs: 4,
            phase_fan_in: 10,
            phase_outsiders: 5,
            phase_fan_outs: (1..=12).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmSection {
    /// OpenAI-compatible chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            timeout_secs: 60,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Invalid(format!("config {}: {e}", path.display())).into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn write_effective(&self, dir: &Path) -> Result<()> {
        let path = dir.join("effective_config.toml");
        std::fs::write(&path, self.to_toml()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn simulate_setting(&self) -> Setting {
        self.simulate.setting.unwrap_or(self.experts.setting)
    }
}
