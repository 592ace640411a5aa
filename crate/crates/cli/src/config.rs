use std::path::{Path, PathBuf};

use defi_tiers::econ::{Aggregation, PanelOptions, SuiteOptions};
use defi_tiers::graph::{CdpEdge, FilterParams};
use defi_tiers::hierarchy::{DiscoveryParams, PipelineParams, SensitivityGrid};
use defi_tiers::ingest::{CategoryMap, PrefixRegistry};
use defi_tiers::synth::SynthConfig;
use defi_tiers::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Pool snapshots. The first is the baseline; `stability` compares the
    /// others against it.
    pub snapshots: Vec<PathBuf>,
    pub categories: Option<PathBuf>,
    pub cdp_edges: Option<PathBuf>,
    /// TOML with `receipt` and `wrappers` tables; built-in defaults otherwise.
    pub registry: Option<PathBuf>,
    pub event_windows: Option<PathBuf>,
    /// Panel CSV read by the regression stages; `<out>/panel.csv` if unset.
    pub panel: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaceboConfig {
    pub spec: String,
    pub n_perm: usize,
}

impl Default for PlaceboConfig {
    fn default() -> Self {
        Self { spec: "tier_4_both_fe".into(), n_perm: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollingConfig {
    pub spec: String,
    pub regressor: String,
    pub window: usize,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self { spec: "tier_1_time_fe".into(), regressor: "tier".into(), window: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsConfig {
    pub spec: String,
    /// Keep month fixed effects inside each window.
    pub time_fe: bool,
}

impl Default for EventsConfig {
    fn default() -> Self {
        Self { spec: "tier_1_time_fe".into(), time_fe: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Tokens whose tier changes are listed individually, as `SYMBOL@chain`.
    pub core: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub inputs: Inputs,
    pub discovery: DiscoveryParams,
    pub filter: FilterParams,
    pub panel: PanelOptions,
    pub suite: SuiteOptions,
    pub placebo: PlaceboConfig,
    pub rolling: RollingConfig,
    pub events: EventsConfig,
    pub sensitivity: SensitivityGrid,
    pub ablation: AblationConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            inputs: Inputs::default(),
            discovery: DiscoveryParams::default(),
            filter: FilterParams::default(),
            panel: PanelOptions { aggregation: Aggregation::Mean, ..Default::default() },
            suite: SuiteOptions::default(),
            placebo: PlaceboConfig::default(),
            rolling: RollingConfig::default(),
            events: EventsConfig::default(),
            sensitivity: SensitivityGrid::default(),
            ablation: AblationConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // relative paths in a config file are taken relative to that file
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.out);
        let i = &mut cfg.inputs;
        i.snapshots.iter_mut().for_each(fix);
        for p in [&mut i.categories, &mut i.cdp_edges, &mut i.registry, &mut i.event_windows, &mut i.panel].into_iter().flatten() {
            fix(p);
        }
        Ok(cfg)
    }

    /// Checks that every configured input exists. Snapshots are skipped
    /// for stages that only write them.
    pub fn check_inputs(&self, snapshots: bool) -> Result<()> {
        let i = &self.inputs;
        let all = i.snapshots.iter().filter(|_| snapshots).chain([&i.categories, &i.cdp_edges, &i.registry, &i.event_windows].into_iter().flatten());
        for p in all {
            if !p.is_file() {
                return Err(Error::Config(format!("input {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn baseline_snapshot(&self) -> Result<&Path> {
        self.inputs
            .snapshots
            .first()
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::Config("no snapshot configured; set inputs.snapshots or pass --input".into()))
    }

    pub fn categories(&self) -> Result<CategoryMap> {
        match &self.inputs.categories {
            Some(p) => CategoryMap::from_path(p),
            None => Ok(CategoryMap::new()),
        }
    }

    pub fn registry(&self) -> Result<PrefixRegistry> {
        match &self.inputs.registry {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
            None => Ok(PrefixRegistry::default()),
        }
    }

    pub fn pipeline(&self) -> Result<PipelineParams> {
        let mut filter = self.filter.clone();
        filter.registry = Some(self.registry()?);
        if let Some(p) = &self.inputs.cdp_edges {
            filter.cdp_edges = CdpEdge::read_csv(std::fs::File::open(p)?)?;
        }
        Ok(PipelineParams { filter, discovery: self.discovery })
    }

    pub fn panel_path(&self) -> PathBuf {
        self.inputs.panel.clone().unwrap_or_else(|| self.out.join("panel.csv"))
    }
}
