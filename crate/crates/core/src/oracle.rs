//! Benchmarks for small instances: the best stationary randomized pricing
//! policy as a linear program, its per-user relaxation, and the exact
//! within-day objective by enumeration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{Infeasibility, LinearProgram, LpOutcome, Relation};
use crate::wma::{Instance, Wma};

/// Optimal stationary randomized policy restricted to the price grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    /// Expected welfare per day.
    pub value: f64,
    /// `[state][slot][grid]` price probabilities.
    pub probabilities: Vec<Vec<Vec<f64>>>,
    /// Shadow price of each user's QoU constraint (`>= 0`).
    pub qou_duals: Vec<f64>,
    /// Expected daily load minus `T * l_av` per user.
    pub qou_slack: Vec<f64>,
    pub dual_bound: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OracleOutcome {
    Optimal(LpSolution),
    Infeasible(Infeasibility),
}

impl OracleOutcome {
    pub fn optimal(self) -> Result<LpSolution> {
        match self {
            OracleOutcome::Optimal(s) => Ok(s),
            OracleOutcome::Infeasible(c) => Err(Error::Lp(format!(
                "QoU targets are infeasible on this grid (certificate violation {})",
                c.violation
            ))),
        }
    }
}

const CERTIFY_TOL: f64 = 1e-9;

/// Maximizes `sum_m pi_m sum_t sum_g a[m][t][g] * value[m][t][g]` over
/// distributions `a[m][t][.]`, subject to one expected-load floor per user.
fn mixture_lp(
    inst: &Instance,
    value: impl Fn(usize, usize, usize) -> f64,
    users: &[usize],
) -> Result<OracleOutcome> {
    let pi = inst.market().long_run_distribution();
    let (m_count, slots, grid) = (pi.len(), inst.slots(), inst.grid().len());
    let var = |m: usize, t: usize, g: usize| (m * slots + t) * grid + g;
    let mut objective = vec![0.0; m_count * slots * grid];
    for m in 0..m_count {
        for t in 0..slots {
            for g in 0..grid {
                objective[var(m, t, g)] = pi[m] * value(m, t, g);
            }
        }
    }
    let mut lp = LinearProgram::new(objective);
    for m in 0..m_count {
        for t in 0..slots {
            lp.add((0..grid).map(|g| (var(m, t, g), 1.0)).collect(), Relation::Eq, 1.0);
        }
    }
    let l_av = inst.model().l_av();
    let table = inst.table();
    for &n in users {
        let mut row = Vec::with_capacity(m_count * slots * grid);
        for (m, &p) in pi.iter().enumerate() {
            for t in 0..slots {
                for g in 0..grid {
                    row.push((var(m, t, g), p * table.planned(t, g)[n]));
                }
            }
        }
        lp.add(row, Relation::Ge, slots as f64 * l_av[n]);
    }
    let o = match lp.solve()? {
        LpOutcome::Optimal(o) => o,
        LpOutcome::Infeasible(c) => return Ok(OracleOutcome::Infeasible(c)),
        LpOutcome::Unbounded => return Err(Error::Lp("mixture program cannot be unbounded".into())),
    };
    let probabilities = (0..m_count)
        .map(|m| {
            (0..slots)
                .map(|t| (0..grid).map(|g| o.x[var(m, t, g)]).collect())
                .collect()
        })
        .collect();
    let first_qou = m_count * slots;
    let qou_duals = o.duals[first_qou..].iter().map(|y| -y).collect();
    let qou_slack = users
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let row = &lp.constraints()[first_qou + k];
            row.coeffs.iter().map(|&(j, a)| a * o.x[j]).sum::<f64>() - slots as f64 * l_av[n]
        })
        .collect();
    Ok(OracleOutcome::Optimal(LpSolution {
        value: o.value,
        probabilities,
        qou_duals,
        qou_slack,
        dual_bound: o.dual_value,
        gap: o.gap(),
        primal_residual: o.primal_residual,
        dual_residual: o.dual_residual,
        certified: o.certified(CERTIFY_TOL),
    }))
}

/// Best stationary randomized common-price policy. Market states are
/// weighted by their long-run frequencies.
pub fn optimal_stationary_welfare(inst: &Instance) -> Result<OracleOutcome> {
    let users: Vec<usize> = (0..inst.users()).collect();
    mixture_lp(inst, |m, t, g| inst.slot_welfare(m, t, g), &users)
}

/// The welfare objective at the myopic price of every `(state, slot)`,
/// ignoring QoU targets.
pub fn unconstrained_welfare(inst: &Instance) -> f64 {
    let pi = inst.market().long_run_distribution();
    pi.iter()
        .enumerate()
        .map(|(m, p)| {
            p * (0..inst.slots())
                .map(|t| {
                    (0..inst.grid().len())
                        .map(|g| inst.slot_welfare(m, t, g))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxedWelfare {
    pub value: f64,
    pub per_user: Vec<LpSolution>,
}

/// Drops the common-price coupling: each user gets an independent program
/// over its own price distributions, charged the share `L_n / L` of the
/// optimal procurement cost at the common-price aggregate.
pub fn relaxed_welfare(inst: &Instance) -> Result<RelaxedWelfare> {
    let n_users = inst.users();
    let table = inst.table();
    let per_user = (0..n_users)
        .map(|n| {
            let value = |m: usize, t: usize, g: usize| {
                let loads = table.planned(t, g);
                let total: f64 = loads.iter().sum();
                let share = if total > 0.0 {
                    loads[n] / total
                } else {
                    1.0 / n_users as f64
                };
                table.utility(t, g)[n] - share * inst.cost(m, t, g)
            };
            mixture_lp(inst, value, &[n])?.optimal()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RelaxedWelfare {
        value: per_user.iter().map(|s| s.value).sum(),
        per_user,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PospReport {
    pub welfare_single: f64,
    pub welfare_relaxed: f64,
    pub posp: f64,
}

pub fn price_of_single_price(inst: &Instance) -> Result<PospReport> {
    let single = optimal_stationary_welfare(inst)?.optimal()?.value;
    let relaxed = relaxed_welfare(inst)?.value;
    Ok(PospReport {
        welfare_single: single,
        welfare_relaxed: relaxed,
        posp: relaxed - single,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayObjective {
    /// Best value of the exact objective with queues evolving inside the day.
    pub phi_star: f64,
    pub argmax: Vec<usize>,
    /// Frozen-queue objective at the controller's own prices.
    pub phi_a: f64,
    pub phi_a_prices: Vec<usize>,
    /// Exact objective evaluated at the controller's prices.
    pub phi_at_phi_a_prices: f64,
}

pub const DEFAULT_DP_BUDGET: u128 = 10_000_000;

/// Exhaustive maximization of the within-day objective
///
/// ```text
/// sum_t E[ eta * (sum_n U_n - Cost) + sum_n Q_n(t_k + t) * L^d_n(p_t) ]
/// ```
///
/// over common grid-price vectors, for the observed market state `state`
/// and frame-start queues `q`. The expectation over consumption noise is
/// exact; each user's queue path only depends on its own noise.
pub fn dp_phi_star(wma: &Wma<'_>, state: usize, q: &[f64], budget: u128) -> Result<DayObjective> {
    let inst = wma.instance();
    let (slots, grid, users) = (inst.slots(), inst.grid().len(), inst.users());
    let paths: u128 = (0..users)
        .map(|n| {
            (0..slots.saturating_sub(1))
                .map(|t| inst.model().users()[n].noise(t).len() as u128)
                .product::<u128>()
        })
        .sum();
    let vectors = (grid as u128).checked_pow(slots as u32).unwrap_or(u128::MAX);
    let required = vectors.saturating_mul(paths.max(1));
    if required > budget {
        return Err(Error::BudgetExceeded {
            required,
            cap: budget,
        });
    }

    let weights = [(state, 1.0)];
    let mut idx = vec![0usize; slots];
    let mut best = (f64::NEG_INFINITY, idx.clone());
    loop {
        let v = phi_exact(wma, state, q, &idx);
        if v > best.0 {
            best = (v, idx.clone());
        }
        let mut k = slots;
        let done = loop {
            if k == 0 {
                break true;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < grid {
                break false;
            }
            idx[k] = 0;
        };
        if done {
            break;
        }
    }
    let choice = wma.choose_prices(q, &weights)?;
    let phi_a_prices: Vec<usize> = choice.0.iter().map(|p| p[0]).collect();
    let phi_a = phi_a_prices
        .iter()
        .enumerate()
        .map(|(t, &g)| wma.phi_a_slot(t, g, q, &weights))
        .sum();
    Ok(DayObjective {
        phi_star: best.0,
        argmax: best.1,
        phi_a,
        phi_at_phi_a_prices: phi_exact(wma, state, q, &phi_a_prices),
        phi_a_prices,
    })
}

/// Exact within-day objective for one common-price vector.
pub fn phi_exact(wma: &Wma<'_>, state: usize, q: &[f64], prices: &[usize]) -> f64 {
    let inst = wma.instance();
    let eta = wma.config().eta;
    let table = inst.table();
    let mut total = 0.0;
    for (t, &g) in prices.iter().enumerate() {
        total += eta * inst.slot_welfare(state, t, g);
    }
    for (n, user) in inst.model().users().iter().enumerate() {
        // distribution of Q_n at the start of each slot, as (value, prob) atoms
        let mut dist = vec![(q[n], 1.0)];
        for (t, &g) in prices.iter().enumerate() {
            let l = table.planned(t, g)[n];
            let mean_q: f64 = dist.iter().map(|(v, p)| v * p).sum();
            total += mean_q * l;
            if t + 1 < prices.len() {
                let noise = user.noise(t);
                dist = dist
                    .iter()
                    .flat_map(|&(v, p)| noise.atoms().map(move |(w, pw)| ((v - (l + w)).max(0.0) + user.l_av(), p * pw)))
                    .collect();
            }
        }
    }
    total
}
