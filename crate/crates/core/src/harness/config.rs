//! Versioned JSON experiment configuration and its validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::{EmpiricalDistribution, DEFAULT_ATOM_CAP};
use crate::error::{Error, Result};
use crate::market::{MarketMode, MarketProcess, MarketState};
use crate::user::{PlanningOptions, UserProfile, UserProfileSpec};
use crate::wma::{Instance, MarketTiming, PriceGrid, PricingMode, RealtimePrice, SystemModel, Wma, WmaConfig};

use super::ingest::{ingest_price_traces, ingest_wind_trace, read_distribution_dump};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Free-form remarks carried along with the config.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub slots: usize,
    pub days: u64,
    #[serde(default)]
    pub seed: u64,
    pub users: Vec<UserProfileSpec>,
    pub renewable: RenewableSpec,
    pub market: MarketSpec,
    pub price_grid: GridSpec,
    pub wma: WmaSpec,
    #[serde(default = "default_resolution")]
    pub planning_resolution: f64,
    #[serde(default = "default_atom_cap")]
    pub atom_cap: usize,
    /// Attach the stationary LP benchmark to sweeps.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_resolution() -> f64 {
    0.01
}

fn default_atom_cap() -> usize {
    DEFAULT_ATOM_CAP
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenewableSpec {
    /// One atom list per slot.
    Atoms(Vec<EmpiricalDistribution>),
    WindTrace(PathBuf),
    Dump(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketKind {
    #[default]
    Iid,
    Markov,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<MarketState>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_traces: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub mode: MarketKind,
    /// IID weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Uniform { min: f64, max: f64, points: usize },
    List(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    One(f64),
    Many(Vec<f64>),
}

impl EtaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EtaSpec::One(e) => vec![*e],
            EtaSpec::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WmaSpec {
    pub eta: EtaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub pricing: PricingMode,
    #[serde(default)]
    pub timing: MarketTiming,
    #[serde(default)]
    pub realtime: RealtimePrice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combination_cap: Option<u128>,
}

/// Command-line replacements for config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub days: Option<u64>,
    pub eta: Option<Vec<f64>>,
    pub pricing: Option<PricingMode>,
    pub market: Option<MarketKind>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = o.days {
            self.days = d;
        }
        if let Some(e) = &o.eta {
            self.wma.eta = EtaSpec::Many(e.clone());
        }
        if let Some(p) = o.pricing {
            self.wma.pricing = p;
        }
        if let Some(m) = o.market {
            self.market.mode = m;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn etas(&self) -> Vec<f64> {
        self.wma.eta.values()
    }

    pub fn wma_config(&self, eta: f64) -> WmaConfig {
        let mut c = WmaConfig::new(eta);
        c.gamma = self.wma.gamma;
        c.pricing = self.wma.pricing;
        c.timing = self.wma.timing;
        c.realtime = self.wma.realtime;
        if let Some(cap) = self.wma.combination_cap {
            c.combination_cap = cap;
        }
        c
    }

    pub fn planning(&self) -> PlanningOptions {
        PlanningOptions {
            resolution: self.planning_resolution,
        }
    }

    pub fn renewable_distributions(&self) -> Result<Vec<EmpiricalDistribution>> {
        match &self.renewable {
            RenewableSpec::Atoms(a) => Ok(a.clone()),
            RenewableSpec::WindTrace(p) => ingest_wind_trace(&self.resolve(p), self.slots),
            RenewableSpec::Dump(p) => read_distribution_dump(&self.resolve(p)),
        }
    }

    pub fn market_process(&self) -> Result<MarketProcess> {
        let m = &self.market;
        let states = match (&m.states, &m.price_traces) {
            (Some(s), None) => s.clone(),
            (None, Some(paths)) => {
                let paths: Vec<PathBuf> = paths.iter().map(|p| self.resolve(p)).collect();
                ingest_price_traces(&paths, self.slots)?.process.states().to_vec()
            }
            _ => return Err(Error::config("market needs exactly one of 'states' or 'price_traces'")),
        };
        let count = states.len();
        let mode = match m.mode {
            MarketKind::Iid => MarketMode::Iid {
                probabilities: m.probabilities.clone().unwrap_or_else(|| vec![1.0 / count as f64; count]),
            },
            MarketKind::Markov => MarketMode::Markov {
                transition: m
                    .transition
                    .clone()
                    .ok_or_else(|| Error::config("markov market mode needs a 'transition' matrix"))?,
                initial: m.initial.clone(),
            },
        };
        MarketProcess::new(states, mode)
    }

    pub fn price_grid(&self) -> Result<PriceGrid> {
        match &self.price_grid {
            GridSpec::Uniform { min, max, points } => PriceGrid::uniform(*min, *max, *points),
            GridSpec::List(v) => PriceGrid::new(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserCheck {
    pub name: String,
    pub l_av: f64,
    pub max_l_min: f64,
    pub l_max: f64,
    pub w_max: f64,
    /// `l_av > max_t l_min(t)` and `l_max - w_max >= l_av + w_max`.
    pub load_condition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaBound {
    pub eta: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<String>,
    pub users: Vec<UserCheck>,
    pub market_states: Option<usize>,
    pub gamma_measured: Option<f64>,
    pub gamma_configured: Option<f64>,
    pub delta_max: Option<f64>,
    pub bounds: Vec<EtaBound>,
}

fn user_check(spec: &UserProfileSpec) -> UserCheck {
    let max_l_min = spec.l_min.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    UserCheck {
        name: spec.name.clone(),
        l_av: spec.l_av,
        max_l_min,
        l_max: spec.l_max,
        w_max: spec.w_max,
        load_condition: spec.l_av > max_l_min && spec.l_max - spec.w_max >= spec.l_av + spec.w_max,
    }
}

/// Runs every check it can and builds the instance when nothing failed.
pub(crate) fn assemble(cfg: &ExperimentConfig) -> (ValidationReport, Option<Instance>) {
    let mut issues = Vec::new();
    let mut note = |r: Result<()>| {
        if let Err(e) = r {
            issues.push(e.to_string());
        }
    };
    if cfg.schema_version != SCHEMA_VERSION {
        note(Err(Error::config(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        ))));
    }
    if cfg.slots == 0 {
        note(Err(Error::config("slots must be at least 1")));
    }
    if cfg.days == 0 {
        note(Err(Error::config("days must be at least 1")));
    }
    if !(cfg.planning_resolution.is_finite() && cfg.planning_resolution > 0.0) {
        note(Err(Error::config("planning_resolution must be positive")));
    }
    let etas = cfg.etas();
    if etas.is_empty() {
        note(Err(Error::config("at least one eta is required")));
    }
    for &e in &etas {
        if !(e.is_finite() && e > 0.0) {
            note(Err(Error::config(format!("eta = {e} must be positive"))));
        }
    }
    if cfg.users.is_empty() {
        note(Err(Error::config("at least one user is required")));
    }
    let user_checks: Vec<UserCheck> = cfg.users.iter().map(user_check).collect();
    for c in &user_checks {
        if !c.load_condition {
            note(Err(Error::config(format!(
                "user '{}' fails the load condition (l_av {}, max l_min {}, l_max {}, w_max {})",
                c.name, c.l_av, c.max_l_min, c.l_max, c.w_max
            ))));
        }
    }
    let mut users = Vec::new();
    for spec in &cfg.users {
        match UserProfile::from_spec(spec.clone()) {
            Ok(u) if u.slots() != cfg.slots => note(Err(Error::config(format!(
                "user '{}' has {} slots, expected {}",
                u.name(),
                u.slots(),
                cfg.slots
            )))),
            Ok(u) => users.push(u),
            Err(e) => note(Err(e)),
        }
    }
    let renewable = cfg.renewable_distributions().map_err(|e| note(Err(e))).ok();
    let market = cfg.market_process().map_err(|e| note(Err(e))).ok();
    let grid = cfg.price_grid().map_err(|e| note(Err(e))).ok();
    if let Some(m) = &market {
        if m.slots() != cfg.slots {
            note(Err(Error::config(format!("market states have {} slots, expected {}", m.slots(), cfg.slots))));
        }
    }
    if let Some(r) = &renewable {
        if r.len() != cfg.slots {
            note(Err(Error::config(format!("renewable has {} slots, expected {}", r.len(), cfg.slots))));
        }
    }
    let market_states = market.as_ref().map(|m| m.states().len());

    let mut report = ValidationReport {
        ok: false,
        issues: Vec::new(),
        users: user_checks,
        market_states,
        gamma_measured: None,
        gamma_configured: cfg.wma.gamma,
        delta_max: None,
        bounds: Vec::new(),
    };
    let mut instance = None;
    if issues.is_empty() {
        let (renewable, market, grid) = (renewable.unwrap(), market.unwrap(), grid.unwrap());
        let built = SystemModel::with_atom_cap(users, renewable, cfg.atom_cap)
            .and_then(|model| Instance::new(model, market, grid, &cfg.planning()));
        match built {
            Ok(inst) => {
                report.gamma_measured = Some(inst.gamma());
                for &eta in &etas {
                    match Wma::new(&inst, cfg.wma_config(eta)) {
                        Ok(w) => {
                            report.delta_max = Some(w.delta_max());
                            report.bounds.push(EtaBound {
                                eta,
                                bound: w.queue_bound(),
                            });
                        }
                        Err(e) => issues.push(format!("eta {eta}: {e}")),
                    }
                }
                instance = Some(inst);
            }
            Err(e) => issues.push(e.to_string()),
        }
    }
    report.ok = issues.is_empty();
    report.issues = issues;
    if !report.ok {
        instance = None;
    }
    (report, instance)
}

pub fn validate_config(cfg: &ExperimentConfig) -> ValidationReport {
    assemble(cfg).0
}
