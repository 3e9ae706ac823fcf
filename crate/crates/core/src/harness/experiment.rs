//! Single runs, eta sweeps, and oracle reports with their artifact files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::oracle::{optimal_stationary_welfare, price_of_single_price, unconstrained_welfare, OracleOutcome, PospReport};
use crate::wma::{batch_means_se, run, Instance, RunStats, Simulation, Wma};

use super::config::{assemble, ExperimentConfig, ValidationReport, SCHEMA_VERSION};
use super::output::{fmt_num, round_sig, RunWriter};

const SE_BATCHES: usize = 20;

/// A validated config with its precomputed instance.
pub struct Experiment {
    config: ExperimentConfig,
    instance: Instance,
    report: ValidationReport,
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        let (report, instance) = assemble(&config);
        match instance {
            Some(instance) => Ok(Self {
                config,
                instance,
                report,
            }),
            None => Err(Error::Config(report.issues.join("; "))),
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn controller(&self, eta: f64) -> Result<Wma<'_>> {
        Wma::new(&self.instance, self.config.wma_config(eta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QouRow {
    pub average_load: f64,
    /// `l_av - Q_end / (K T)`.
    pub guaranteed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eta: f64,
    pub welfare: f64,
    pub welfare_se: f64,
    pub avg_queue: f64,
    pub max_queue: f64,
    pub bound: f64,
    pub gamma: f64,
    pub delta_max: f64,
    pub min_drift_slack: f64,
    pub qou: Vec<QouRow>,
    /// Stationary LP welfare, when computed.
    pub oracle: Option<f64>,
    /// Oracle welfare minus `C1 T / eta`.
    pub welfare_lower_bound: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub outcome: OracleOutcome,
    /// Myopic welfare ignoring QoU targets.
    pub unconstrained: f64,
    pub posp: Option<PospReport>,
    pub c1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub oracle: Option<OracleReport>,
}

#[derive(Serialize)]
struct ViolationDump<'a> {
    eta: f64,
    error: String,
    day: u64,
    queues: &'a [f64],
    bound: f64,
}

pub fn run_file_name(eta: f64) -> String {
    format!("run_{}.csv", fmt_num(eta))
}

/// Runs one eta for the configured horizon and writes `run_<eta>.csv`.
/// Invariant failures also leave `violation_<eta>.json` behind.
pub fn run_single(exp: &Experiment, eta: f64, out: &Path) -> Result<SweepRow> {
    let started = Instant::now();
    let wma = exp.controller(eta)?;
    let (bound, gamma, delta_max) = (wma.queue_bound(), wma.gamma(), wma.delta_max());
    let file = BufWriter::new(File::create(out.join(run_file_name(eta)))?);
    let mut writer = RunWriter::new(file, exp.instance.users(), bound)?;
    let mut sim = Simulation::new(wma, exp.config.seed);
    let stats = match run(&mut sim, exp.config.days, |r| writer.write_day(r)) {
        Ok(s) => s,
        Err(e) => {
            if matches!(e, Error::InvariantViolation { .. } | Error::ModelViolation(_)) {
                let dump = ViolationDump {
                    eta,
                    error: e.to_string(),
                    day: sim.day(),
                    queues: sim.queues().values(),
                    bound,
                };
                let path = out.join(format!("violation_{}.json", fmt_num(eta)));
                fs::write(path, serde_json::to_string_pretty(&dump)?)?;
            }
            return Err(e);
        }
    };
    writer.finish()?;
    Ok(sweep_row(exp, eta, &stats, bound, gamma, delta_max, started))
}

fn sweep_row(exp: &Experiment, eta: f64, s: &RunStats, bound: f64, gamma: f64, delta_max: f64, started: Instant) -> SweepRow {
    let l_av = exp.instance.model().l_av();
    SweepRow {
        eta,
        welfare: s.average_welfare(),
        welfare_se: batch_means_se(&s.daily_welfare, SE_BATCHES),
        avg_queue: s.average_total_queue(),
        max_queue: s.max_total_queue,
        bound,
        gamma,
        delta_max,
        min_drift_slack: s.min_drift_slack,
        qou: s
            .qou(&l_av)
            .into_iter()
            .map(|(average_load, guaranteed)| QouRow {
                average_load,
                guaranteed,
            })
            .collect(),
        oracle: None,
        welfare_lower_bound: None,
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

pub fn oracle_report(inst: &Instance) -> Result<OracleReport> {
    let outcome = optimal_stationary_welfare(inst)?;
    let posp = match &outcome {
        OracleOutcome::Optimal(_) => Some(price_of_single_price(inst)?),
        OracleOutcome::Infeasible(_) => None,
    };
    Ok(OracleReport {
        outcome,
        unconstrained: unconstrained_welfare(inst),
        posp,
        c1: inst.model().drift_constants().c1,
    })
}

/// Every configured eta in parallel with the same seed, then the oracle if
/// requested. Writes `run_<eta>.csv`, `sweep.csv` and `summary.json`.
pub fn run_experiment(exp: &Experiment, out: &Path) -> Result<SweepResult> {
    fs::create_dir_all(out)?;
    let etas = exp.config.etas();
    let mut rows = etas
        .par_iter()
        .map(|&eta| run_single(exp, eta, out))
        .collect::<Result<Vec<_>>>()?;
    let oracle = if exp.config.oracle {
        Some(oracle_report(&exp.instance)?)
    } else {
        None
    };
    if let Some(OracleReport {
        outcome: OracleOutcome::Optimal(sol),
        c1,
        ..
    }) = &oracle
    {
        let slots = exp.instance.slots() as f64;
        for r in &mut rows {
            r.oracle = Some(sol.value);
            r.welfare_lower_bound = Some(sol.value - c1 * slots / r.eta);
        }
    }
    for r in &rows {
        if r.max_queue > r.bound * (1.0 + 1e-12) {
            return Err(Error::InvariantViolation {
                day: exp.config.days.saturating_sub(1),
                slot: exp.instance.slots() - 1,
                detail: format!("eta {}: max total queue {} exceeds bound {}", r.eta, r.max_queue, r.bound),
            });
        }
    }
    let result = SweepResult { rows, oracle };
    write_sweep_csv(&out.join("sweep.csv"), &result.rows)?;
    write_json(&out.join("summary.json"), &summary(exp, &result))?;
    Ok(result)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "eta",
        "welfare",
        "welfare_se",
        "avg_queue",
        "max_queue",
        "bound",
        "min_drift_slack",
        "oracle",
        "welfare_lower_bound",
    ])?;
    for r in rows {
        w.write_record([
            fmt_num(r.eta),
            fmt_num(r.welfare),
            fmt_num(r.welfare_se),
            fmt_num(r.avg_queue),
            fmt_num(r.max_queue),
            fmt_num(r.bound),
            fmt_num(r.min_drift_slack),
            opt(r.oracle),
            opt(r.welfare_lower_bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    seed: u64,
    days: u64,
    slots: usize,
    users: Vec<&'a str>,
    market_states: usize,
    markov: bool,
    pricing: crate::wma::PricingMode,
    runs: &'a [SweepRow],
    run_files: Vec<PathBuf>,
    oracle: Option<&'a OracleReport>,
}

fn summary<'a>(exp: &'a Experiment, r: &'a SweepResult) -> Summary<'a> {
    let inst = &exp.instance;
    Summary {
        schema_version: SCHEMA_VERSION,
        seed: exp.config.seed,
        days: exp.config.days,
        slots: inst.slots(),
        users: inst.model().users().iter().map(|u| u.name()).collect(),
        market_states: inst.market().states().len(),
        markov: inst.market().is_markov(),
        pricing: exp.config.wma.pricing,
        runs: &r.rows,
        run_files: r.rows.iter().map(|row| PathBuf::from(run_file_name(row.eta))).collect(),
        oracle: r.oracle.as_ref(),
    }
}

/// Rounds every float in a JSON tree to 12 significant digits.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = x;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with 12-significant-digit floats.
pub fn to_rounded_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_rounded_json(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::tests::two_user_config;
    use serde_json::json;

    fn experiment(v: Value) -> Experiment {
        Experiment::build(serde_json::from_value(v).unwrap()).unwrap()
    }

    #[test]
    fn sweep_writes_one_row_per_eta() {
        let mut v = two_user_config();
        v["wma"]["eta"] = json!([5.0, 10.0, 20.0, 40.0]);
        v["days"] = json!(40);
        let exp = experiment(v);
        let dir = tempfile::tempdir().unwrap();
        let res = run_experiment(&exp, dir.path()).unwrap();
        assert_eq!(res.rows.len(), 4);
        for r in &res.rows {
            assert!(r.max_queue <= r.bound);
            assert!(dir.path().join(run_file_name(r.eta)).exists());
            assert!(r.min_drift_slack >= 0.0);
        }
        let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(sweep.lines().count(), 5);
        let rows = fs::read_to_string(dir.path().join("run_20.csv")).unwrap();
        assert_eq!(rows.lines().count(), 1 + 40 * 2);
        assert!(rows.starts_with("day,slot,market_state,"));
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let exp = experiment(two_user_config());
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&exp, a.path()).unwrap();
        run_experiment(&exp, b.path()).unwrap();
        for f in ["run_5.csv", "run_20.csv", "sweep.csv"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn oracle_is_attached_when_requested() {
        let mut v = two_user_config();
        v["oracle"] = json!(true);
        let exp = experiment(v);
        let dir = tempfile::tempdir().unwrap();
        let res = run_experiment(&exp, dir.path()).unwrap();
        let rep = res.oracle.unwrap();
        assert!(rep.posp.unwrap().posp >= -1e-9);
        let value = rep.outcome.optimal().unwrap().value;
        for r in &res.rows {
            assert_eq!(r.oracle, Some(value));
            assert_eq!(r.welfare_lower_bound, Some(value - rep.c1 * 2.0 / r.eta));
        }
        let s: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s["oracle"]["outcome"]["status"], "optimal");
    }

    #[test]
    fn rounding_walks_the_tree() {
        let mut v = json!({"a": [1.0 / 3.0, 2], "b": {"c": 0.1 + 0.2}});
        round_json(&mut v);
        assert_eq!(v.to_string(), r#"{"a":[0.333333333333,2],"b":{"c":0.3}}"#);
    }
}
