//! Drift-plus-penalty pricing and the day-by-day control loop.
//!
//! Each day the controller posts one price per slot (or one per user and
//! slot) maximizing
//!
//! ```text
//! eta * sum_n E[U_n] - eta * E[Cost*] + sum_n Q_n(t_k) * L^d_n
//! ```
//!
//! slot by slot, using the queues frozen at the start of the day. Base power
//! is then bought at the newsvendor quantile, consumption is realized, the
//! deficit is bought in real time, and the queues advance slot by slot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{effective_renewable, EmpiricalDistribution, DEFAULT_ATOM_CAP};
use crate::error::{Error, Result};
use crate::market::{MarketProcess, MarketState};
use crate::procurement::{expected_cost_optimal, optimal_base_power, realtime_deficit, ProcurementInputs};
use crate::queues::{drift_bound_check, queue_bound, DeficitQueues, DriftConstants, DriftDiagnostic};
use crate::user::{heterogeneity_gamma, max_pairwise_ratio, plan_consumption, PlanningOptions, UserProfile};

/// Users and renewable supply, with the per-slot effective renewable
/// `Z(t) = X(t) - sum_n w_n(t)` precomputed.
#[derive(Debug, Clone)]
pub struct SystemModel {
    users: Vec<UserProfile>,
    renewable: Vec<EmpiricalDistribution>,
    effective: Vec<EmpiricalDistribution>,
}

impl SystemModel {
    pub fn new(users: Vec<UserProfile>, renewable: Vec<EmpiricalDistribution>) -> Result<Self> {
        Self::with_atom_cap(users, renewable, DEFAULT_ATOM_CAP)
    }

    pub fn with_atom_cap(
        users: Vec<UserProfile>,
        renewable: Vec<EmpiricalDistribution>,
        atom_cap: usize,
    ) -> Result<Self> {
        let Some(first) = users.first() else {
            return Err(Error::config("at least one user is required"));
        };
        let slots = first.slots();
        if let Some(u) = users.iter().find(|u| u.slots() != slots) {
            return Err(Error::config(format!(
                "user '{}' has {} slots, expected {slots}",
                u.name(),
                u.slots()
            )));
        }
        if renewable.len() != slots {
            return Err(Error::config(format!(
                "renewable has {} slots, expected {slots}",
                renewable.len()
            )));
        }
        if let Some(t) = renewable.iter().position(|x| x.min() < 0.0) {
            return Err(Error::config(format!("renewable output in slot {t} has negative atoms")));
        }
        let effective = (0..slots)
            .map(|t| {
                let noises: Vec<&EmpiricalDistribution> = users.iter().map(|u| u.noise(t)).collect();
                effective_renewable(&renewable[t], &noises, atom_cap)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            users,
            renewable,
            effective,
        })
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn slots(&self) -> usize {
        self.renewable.len()
    }

    pub fn renewable(&self, slot: usize) -> &EmpiricalDistribution {
        &self.renewable[slot]
    }

    pub fn effective(&self, slot: usize) -> &EmpiricalDistribution {
        &self.effective[slot]
    }

    pub fn l_av(&self) -> Vec<f64> {
        self.users.iter().map(UserProfile::l_av).collect()
    }

    pub fn drift_constants(&self) -> DriftConstants {
        DriftConstants::new(&self.users)
    }
}

/// Ascending finite set of candidate prices, shared by every slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriceGrid(Vec<f64>);

impl PriceGrid {
    pub fn new(mut prices: Vec<f64>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::config("price grid is empty"));
        }
        if prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::config("price grid entries must be finite and non-negative"));
        }
        prices.sort_by(f64::total_cmp);
        Ok(Self(prices))
    }

    /// `points` evenly spaced prices from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points == 0 || !(lo <= hi) {
            return Err(Error::config(format!("invalid uniform grid [{lo}, {hi}] x {points}")));
        }
        if points == 1 {
            return Self::new(vec![lo]);
        }
        let step = (hi - lo) / (points - 1) as f64;
        Self::new((0..points).map(|i| if i + 1 == points { hi } else { lo + i as f64 * step }).collect())
    }

    pub fn prices(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0[0]
    }

    pub fn max(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for PriceGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PriceGrid> for Vec<f64> {
    fn from(g: PriceGrid) -> Self {
        g.0
    }
}

/// Planned loads and expected utilities of every user at every grid price.
#[derive(Debug, Clone)]
pub struct ResponseTable {
    /// `[slot][grid][user]`
    planned: Vec<Vec<Vec<f64>>>,
    /// `[slot][grid][user]`, `E[U_n(L^d_n + w_n)]`.
    utility: Vec<Vec<Vec<f64>>>,
}

impl ResponseTable {
    pub fn build(model: &SystemModel, grid: &PriceGrid, opts: &PlanningOptions) -> Result<Self> {
        let slots = model.slots();
        let cells: Vec<(usize, usize)> = (0..slots)
            .flat_map(|t| (0..grid.len()).map(move |g| (t, g)))
            .collect();
        let rows = cells
            .par_iter()
            .map(|&(t, g)| {
                let p = grid.prices()[g];
                model
                    .users()
                    .iter()
                    .map(|u| {
                        let l = plan_consumption(u, p, t, opts)?;
                        Ok((l, u.expected_utility(l, t)))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut planned = vec![Vec::with_capacity(grid.len()); slots];
        let mut utility = vec![Vec::with_capacity(grid.len()); slots];
        for ((t, _), row) in cells.into_iter().zip(rows) {
            let (l, u): (Vec<f64>, Vec<f64>) = row.into_iter().unzip();
            planned[t].push(l);
            utility[t].push(u);
        }
        Ok(Self { planned, utility })
    }

    pub fn planned(&self, slot: usize, g: usize) -> &[f64] {
        &self.planned[slot][g]
    }

    pub fn utility(&self, slot: usize, g: usize) -> &[f64] {
        &self.utility[slot][g]
    }

    pub fn aggregate(&self, slot: usize, g: usize) -> f64 {
        self.planned[slot][g].iter().sum()
    }
}

/// Everything about a scenario that does not depend on `eta`: model, market,
/// price grid, the response table and the optimal procurement cost of each
/// `(market state, slot, grid price)` under a common price.
#[derive(Debug, Clone)]
pub struct Instance {
    model: SystemModel,
    market: MarketProcess,
    grid: PriceGrid,
    table: ResponseTable,
    /// `[state][slot][grid]`
    cost: Vec<Vec<Vec<f64>>>,
}

impl Instance {
    pub fn new(model: SystemModel, market: MarketProcess, grid: PriceGrid, opts: &PlanningOptions) -> Result<Self> {
        if market.slots() != model.slots() {
            return Err(Error::config(format!(
                "market has {} slots but users have {}",
                market.slots(),
                model.slots()
            )));
        }
        let table = ResponseTable::build(&model, &grid, opts)?;
        let cost = market
            .states()
            .iter()
            .map(|s| {
                (0..model.slots())
                    .map(|t| {
                        (0..grid.len())
                            .map(|g| slot_cost(&model, s, t, table.aggregate(t, g)))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            market,
            grid,
            table,
            cost,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn market(&self) -> &MarketProcess {
        &self.market
    }

    pub fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    pub fn table(&self) -> &ResponseTable {
        &self.table
    }

    pub fn slots(&self) -> usize {
        self.model.slots()
    }

    pub fn users(&self) -> usize {
        self.model.users().len()
    }

    /// Optimal expected procurement cost under a common grid price.
    pub fn cost(&self, state: usize, slot: usize, g: usize) -> f64 {
        self.cost[state][slot][g]
    }

    /// Optimal expected procurement cost at an arbitrary aggregate load.
    pub fn cost_at(&self, state: usize, slot: usize, aggregate: f64) -> Result<f64> {
        slot_cost(&self.model, self.market.state(state), slot, aggregate)
    }

    /// `sum_n E[U_n] - E[Cost*]` under a common grid price.
    pub fn slot_welfare(&self, state: usize, slot: usize, g: usize) -> f64 {
        self.table.utility(slot, g).iter().sum::<f64>() - self.cost(state, slot, g)
    }

    /// Heterogeneity constant over the grid.
    pub fn gamma(&self) -> f64 {
        let mut gamma: f64 = 1.0;
        for t in 0..self.slots() {
            for g in 0..self.grid.len() {
                gamma = gamma.max(max_pairwise_ratio(self.table.planned(t, g)));
            }
        }
        gamma
    }

    pub fn delta_max(&self) -> f64 {
        self.market.delta_max()
    }
}

fn slot_cost(model: &SystemModel, s: &MarketState, t: usize, aggregate: f64) -> Result<f64> {
    let inputs = ProcurementInputs::new(aggregate, s.beta[t], s.alpha_bar[t], model.effective(t));
    Ok(expected_cost_optimal(&inputs)?.cost)
}

/// Recomputes `gamma` directly from the profiles (slower; used to
/// cross-check [`Instance::gamma`]).
pub fn gamma_from_profiles(model: &SystemModel, grid: &PriceGrid, opts: &PlanningOptions) -> Result<f64> {
    heterogeneity_gamma(model.users(), grid.prices(), opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PricingMode {
    /// One price per slot for every user.
    #[default]
    Same,
    /// One price per user and slot, chosen jointly.
    PerUser,
}

/// What the pricing step knows about the day's market pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarketTiming {
    /// The pair for day `k` is seen before prices are posted.
    #[default]
    Observed,
    /// Prices are posted first; the cost term averages over the law of the
    /// coming pair.
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RealtimePrice {
    /// `alpha = alpha_bar`.
    #[default]
    Expected,
    /// `alpha = clamp(alpha_bar * (1 + u), 0, cap)` with `u ~ U[-spread, spread]`.
    UniformNoise { spread: f64, cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmaConfig {
    pub eta: f64,
    /// Heterogeneity constant used in the queue bound; defaults to the value
    /// measured on the grid.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub pricing: PricingMode,
    #[serde(default)]
    pub timing: MarketTiming,
    #[serde(default)]
    pub realtime: RealtimePrice,
    /// Largest number of per-user price combinations searched per slot.
    #[serde(default = "default_combination_cap")]
    pub combination_cap: u128,
}

fn default_combination_cap() -> u128 {
    1_000_000
}

impl WmaConfig {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            gamma: None,
            pricing: PricingMode::Same,
            timing: MarketTiming::Observed,
            realtime: RealtimePrice::Expected,
            combination_cap: default_combination_cap(),
        }
    }
}

/// Grid indices chosen for one day: `[slot][user]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceChoice(pub Vec<Vec<usize>>);

/// Controller for one `eta` over a shared [`Instance`].
#[derive(Debug, Clone)]
pub struct Wma<'a> {
    inst: &'a Instance,
    cfg: WmaConfig,
    gamma: f64,
    delta_max: f64,
    bound: f64,
    constants: DriftConstants,
    l_av: Vec<f64>,
}

impl<'a> Wma<'a> {
    pub fn new(inst: &'a Instance, cfg: WmaConfig) -> Result<Self> {
        if !(cfg.eta.is_finite() && cfg.eta > 0.0) {
            return Err(Error::config(format!("eta = {} must be positive", cfg.eta)));
        }
        let measured = inst.gamma();
        let gamma = match cfg.gamma {
            Some(g) if !(g >= 1.0) => {
                return Err(Error::config(format!("configured gamma {g} must be at least 1")));
            }
            Some(g) if measured > g * (1.0 + 1e-12) => {
                return Err(Error::config(format!(
                    "configured gamma {g} is below the measured heterogeneity {measured}"
                )));
            }
            Some(g) => g,
            None => measured,
        };
        if cfg.pricing == PricingMode::PerUser {
            let required = (inst.grid.len() as u128)
                .checked_pow(inst.users() as u32)
                .unwrap_or(u128::MAX);
            if required > cfg.combination_cap {
                return Err(Error::BudgetExceeded {
                    required,
                    cap: cfg.combination_cap,
                });
            }
        }
        let mut delta_max = inst.delta_max();
        if let RealtimePrice::UniformNoise { spread, cap } = cfg.realtime {
            if !(spread.is_finite() && (0.0..=1.0).contains(&spread) && cap.is_finite() && cap >= 0.0) {
                return Err(Error::config("real-time noise needs spread in [0, 1] and a finite cap"));
            }
            delta_max = delta_max.max(cap);
        }
        let l_av = inst.model.l_av();
        let bound = queue_bound(delta_max, inst.users(), gamma, cfg.eta, inst.slots(), l_av.iter().sum());
        Ok(Self {
            inst,
            constants: inst.model.drift_constants(),
            cfg,
            gamma,
            delta_max,
            bound,
            l_av,
        })
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn config(&self) -> &WmaConfig {
        &self.cfg
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    /// Deterministic bound on the total queue.
    pub fn queue_bound(&self) -> f64 {
        self.bound
    }

    pub fn drift_constants(&self) -> DriftConstants {
        self.constants
    }

    /// Market weights for the cost term given the realized state and the
    /// previous day's state.
    pub fn cost_weights(&self, state: usize, prev: Option<usize>) -> Vec<(usize, f64)> {
        match self.cfg.timing {
            MarketTiming::Observed => vec![(state, 1.0)],
            MarketTiming::Expected => self
                .inst
                .market
                .next_state_weights(prev)
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(m, &w)| (m, w))
                .collect(),
        }
    }

    /// Per-slot objective for a common grid price `g`.
    pub fn phi_a_slot(&self, slot: usize, g: usize, q: &[f64], weights: &[(usize, f64)]) -> f64 {
        let table = &self.inst.table;
        let eu: f64 = table.utility(slot, g).iter().sum();
        let cost: f64 = weights.iter().map(|&(m, w)| w * self.inst.cost(m, slot, g)).sum();
        let pressure: f64 = q.iter().zip(table.planned(slot, g)).map(|(q, l)| q * l).sum();
        self.cfg.eta * (eu - cost) + pressure
    }

    /// Per-slot objective for per-user grid prices.
    pub fn phi_a_slot_per_user(&self, slot: usize, prices: &[usize], q: &[f64], weights: &[(usize, f64)]) -> Result<f64> {
        let table = &self.inst.table;
        let (mut eu, mut agg, mut pressure) = (0.0, 0.0, 0.0);
        for (n, &g) in prices.iter().enumerate() {
            let l = table.planned(slot, g)[n];
            eu += table.utility(slot, g)[n];
            agg += l;
            pressure += q[n] * l;
        }
        let mut cost = 0.0;
        for &(m, w) in weights {
            cost += w * self.inst.cost_at(m, slot, agg)?;
        }
        Ok(self.cfg.eta * (eu - cost) + pressure)
    }

    /// `sum_t` of the per-slot objective for a full price choice.
    pub fn phi_a(&self, choice: &PriceChoice, q: &[f64], weights: &[(usize, f64)]) -> Result<f64> {
        choice
            .0
            .iter()
            .enumerate()
            .map(|(t, p)| self.phi_a_slot_per_user(t, p, q, weights))
            .sum()
    }

    /// Slot-by-slot argmax of the objective over the grid; ties go to the
    /// lowest price (lexicographically lowest tuple in per-user mode).
    pub fn choose_prices(&self, q: &[f64], weights: &[(usize, f64)]) -> Result<PriceChoice> {
        let n = self.inst.users();
        let slots = self.inst.slots();
        let choice = match self.cfg.pricing {
            PricingMode::Same => (0..slots)
                .map(|t| {
                    let g = argmax_first((0..self.inst.grid.len()).map(|g| self.phi_a_slot(t, g, q, weights)));
                    vec![g; n]
                })
                .collect(),
            PricingMode::PerUser => (0..slots)
                .map(|t| self.best_tuple(t, q, weights))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(PriceChoice(choice))
    }

    fn best_tuple(&self, slot: usize, q: &[f64], weights: &[(usize, f64)]) -> Result<Vec<usize>> {
        let n = self.inst.users();
        let grid = self.inst.grid.len();
        let mut idx = vec![0usize; n];
        let mut best = idx.clone();
        let mut best_val = f64::NEG_INFINITY;
        loop {
            let v = self.phi_a_slot_per_user(slot, &idx, q, weights)?;
            if v > best_val {
                best_val = v;
                best.clone_from(&idx);
            }
            // odometer, last user fastest
            let mut k = n;
            loop {
                if k == 0 {
                    return Ok(best);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < grid {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: usize,
    /// Posted price per user.
    pub prices: Vec<f64>,
    pub beta: f64,
    pub alpha_bar: f64,
    pub alpha: f64,
    pub planned: Vec<f64>,
    pub realized: Vec<f64>,
    pub utility: Vec<f64>,
    pub base_power: f64,
    pub renewable: f64,
    pub deficit: f64,
    pub cost: f64,
    /// Queues after this slot's update.
    pub queues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayRecord {
    pub day: u64,
    pub market_state: usize,
    pub queues_start: Vec<f64>,
    pub slots: Vec<SlotRecord>,
    pub welfare: f64,
    pub drift: DriftDiagnostic,
}

impl DayRecord {
    pub fn queues_end(&self) -> &[f64] {
        self.slots.last().map_or(&self.queues_start, |s| &s.queues)
    }
}

/// A single seeded run of the controller.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    wma: Wma<'a>,
    queues: DeficitQueues,
    day: u64,
    prev_market: Option<usize>,
    rng: ChaCha8Rng,
}

impl<'a> Simulation<'a> {
    pub fn new(wma: Wma<'a>, seed: u64) -> Self {
        let n = wma.inst.users();
        Self::with_queues(wma, seed, DeficitQueues::zeros(n))
    }

    pub fn with_queues(wma: Wma<'a>, seed: u64, queues: DeficitQueues) -> Self {
        Self {
            wma,
            queues,
            day: 0,
            prev_market: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn controller(&self) -> &Wma<'a> {
        &self.wma
    }

    pub fn queues(&self) -> &DeficitQueues {
        &self.queues
    }

    pub fn day(&self) -> u64 {
        self.day
    }

    /// Simulates one day and advances the queues by `T` slots.
    pub fn run_day(&mut self) -> Result<DayRecord> {
        let wma = &self.wma;
        let inst = wma.inst;
        let model = &inst.model;
        let m = inst.market.sample_day(self.prev_market, &mut self.rng);
        let weights = wma.cost_weights(m, self.prev_market);
        let q_start = self.queues.values().to_vec();
        let choice = wma.choose_prices(&q_start, &weights)?;
        let state = inst.market.state(m);
        let grid = inst.grid.prices();

        let mut slots = Vec::with_capacity(inst.slots());
        let mut path = vec![q_start.clone()];
        let mut loads = Vec::with_capacity(inst.slots());
        let mut welfare = 0.0;
        for (t, idx) in choice.0.iter().enumerate() {
            let planned: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(n, &g)| inst.table.planned(t, g)[n])
                .collect();
            let l_d: f64 = planned.iter().sum();
            let (beta, alpha_bar) = (state.beta[t], state.alpha_bar[t]);
            let base = optimal_base_power(&ProcurementInputs::new(l_d, beta, alpha_bar, model.effective(t)))?;

            let x = model.renewable(t).sample(&mut self.rng);
            let mut realized = Vec::with_capacity(planned.len());
            for (u, &p) in model.users().iter().zip(&planned) {
                let w = u.noise(t).sample(&mut self.rng);
                let l = u.realize_consumption(p, w)?;
                if l < u.l_min(t) - 1e-9 {
                    return Err(Error::ModelViolation(format!(
                        "user '{}' slot {t}: realized load {l} below l_min {}",
                        u.name(),
                        u.l_min(t)
                    )));
                }
                realized.push(l);
            }
            let alpha = match wma.cfg.realtime {
                RealtimePrice::Expected => alpha_bar,
                RealtimePrice::UniformNoise { spread, cap } => {
                    let u: f64 = self.rng.gen_range(-1.0..=1.0);
                    (alpha_bar * (1.0 + spread * u)).clamp(0.0, cap)
                }
            };
            let total: f64 = realized.iter().sum();
            let deficit = realtime_deficit(total, base, x);
            let cost = beta * base + alpha * deficit;
            let utility: Vec<f64> = model
                .users()
                .iter()
                .zip(&realized)
                .map(|(u, &l)| u.utility(t).eval(l))
                .collect();
            welfare += utility.iter().sum::<f64>() - cost;

            self.queues.update(&realized, &wma.l_av);
            let total_q = self.queues.total();
            if total_q > wma.bound * (1.0 + 1e-12) {
                return Err(Error::InvariantViolation {
                    day: self.day,
                    slot: t,
                    detail: format!("total queue {total_q} exceeds bound {}", wma.bound),
                });
            }
            path.push(self.queues.values().to_vec());
            loads.push(realized.clone());
            slots.push(SlotRecord {
                slot: t,
                prices: idx.iter().map(|&g| grid[g]).collect(),
                beta,
                alpha_bar,
                alpha,
                planned,
                realized,
                utility,
                base_power: base,
                renewable: x,
                deficit,
                cost,
                queues: self.queues.values().to_vec(),
            });
        }
        let drift = drift_bound_check(&path, &loads, &wma.l_av, &wma.constants);
        if !drift.holds() {
            return Err(Error::InvariantViolation {
                day: self.day,
                slot: inst.slots() - 1,
                detail: format!("drift {} exceeds bound {}", drift.drift, drift.bound),
            });
        }
        let record = DayRecord {
            day: self.day,
            market_state: m,
            queues_start: q_start,
            slots,
            welfare,
            drift,
        };
        self.day += 1;
        self.prev_market = Some(m);
        Ok(record)
    }
}

/// Running totals over a simulated horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub days: u64,
    pub slots: usize,
    pub daily_welfare: Vec<f64>,
    /// Sum over slots of the total queue after each update.
    pub queue_sum: f64,
    pub max_total_queue: f64,
    pub min_drift_slack: f64,
    pub realized_load_sum: Vec<f64>,
    pub final_queues: Vec<f64>,
}

impl RunStats {
    pub fn new(users: usize, slots: usize) -> Self {
        Self {
            days: 0,
            slots,
            daily_welfare: Vec::new(),
            queue_sum: 0.0,
            max_total_queue: 0.0,
            min_drift_slack: f64::INFINITY,
            realized_load_sum: vec![0.0; users],
            final_queues: vec![0.0; users],
        }
    }

    pub fn observe(&mut self, r: &DayRecord) {
        self.days += 1;
        self.daily_welfare.push(r.welfare);
        for s in &r.slots {
            let total: f64 = s.queues.iter().sum();
            self.queue_sum += total;
            self.max_total_queue = self.max_total_queue.max(total);
            for (acc, l) in self.realized_load_sum.iter_mut().zip(&s.realized) {
                *acc += l;
            }
        }
        self.min_drift_slack = self.min_drift_slack.min(r.drift.slack);
        self.final_queues = r.queues_end().to_vec();
    }

    pub fn average_welfare(&self) -> f64 {
        self.daily_welfare.iter().sum::<f64>() / self.days.max(1) as f64
    }

    /// Time-average of the total queue over all slots.
    pub fn average_total_queue(&self) -> f64 {
        self.queue_sum / (self.days as f64 * self.slots as f64).max(1.0)
    }

    /// Per user: average realized load per slot and `l_av - Q_end / (K T)`.
    pub fn qou(&self, l_av: &[f64]) -> Vec<(f64, f64)> {
        let kt = (self.days as f64 * self.slots as f64).max(1.0);
        self.realized_load_sum
            .iter()
            .zip(&self.final_queues)
            .zip(l_av)
            .map(|((s, q), a)| (s / kt, a - q / kt))
            .collect()
    }
}

/// Runs `days` days and folds them into [`RunStats`], passing each record to
/// `sink` first.
pub fn run(sim: &mut Simulation<'_>, days: u64, mut sink: impl FnMut(&DayRecord) -> Result<()>) -> Result<RunStats> {
    let inst = sim.wma.inst;
    let mut stats = RunStats::new(inst.users(), inst.slots());
    stats.final_queues = sim.queues.values().to_vec();
    for _ in 0..days {
        let r = sim.run_day()?;
        sink(&r)?;
        stats.observe(&r);
    }
    Ok(stats)
}

pub fn average_welfare(records: &[DayRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::domain("average welfare of an empty run"));
    }
    Ok(records.iter().map(|r| r.welfare).sum::<f64>() / records.len() as f64)
}

/// Running mean of day welfare after each day.
pub fn cumulative_average_welfare(records: &[DayRecord]) -> Vec<f64> {
    let mut sum = 0.0;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            sum += r.welfare;
            sum / (i + 1) as f64
        })
        .collect()
}

/// Standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(values: &[f64], batches: usize) -> f64 {
    let size = values.len() / batches.max(1);
    if batches < 2 || size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}
