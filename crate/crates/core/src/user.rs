//! Users: utility functions, price response, and realized consumption.
//!
//! Loads are in 100 MW units and money in thousand dollars, so utility values
//! and prices share the unit "thousand dollars per 100 MW per slot".

use serde::{Deserialize, Serialize};

use crate::distributions::EmpiricalDistribution;
use crate::error::{Error, Result};

/// Continuous piecewise-linear function given by `(load, value)` breakpoints.
/// Constant beyond the first and last breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    loads: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config("utility needs at least one breakpoint"));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::config("utility breakpoints must be finite"));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::config(format!(
                    "utility breakpoint loads must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::config(format!(
                    "utility must be non-decreasing in load ({} -> {} between loads {} and {})",
                    w[0].1, w[1].1, w[0].0, w[1].0
                )));
            }
        }
        let (loads, values) = points.into_iter().unzip();
        Ok(Self { loads, values })
    }

    pub fn eval(&self, load: f64) -> f64 {
        let n = self.loads.len();
        if load <= self.loads[0] {
            return self.values[0];
        }
        if load >= self.loads[n - 1] {
            return self.values[n - 1];
        }
        let i = self.loads.partition_point(|&b| b <= load);
        let (l0, l1) = (self.loads[i - 1], self.loads[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (load - l0) * (v1 - v0) / (l1 - l0)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.loads
    }

    /// Largest slope over all segments.
    pub fn max_slope(&self) -> f64 {
        self.loads
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(l, v)| (v[1] - v[0]) / (l[1] - l[0]))
            .fold(0.0, f64::max)
    }

    /// True when every segment meeting `(lo, hi)` has positive slope and the
    /// function is not clamped flat anywhere inside the interval.
    pub fn strictly_increasing_on(&self, lo: f64, hi: f64) -> bool {
        let n = self.loads.len();
        if n < 2 || lo < self.loads[0] || hi > self.loads[n - 1] {
            return false;
        }
        (0..n - 1).all(|i| {
            let overlaps = self.loads[i] < hi && self.loads[i + 1] > lo;
            !overlaps || self.values[i + 1] > self.values[i]
        })
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = Error;

    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(f: PiecewiseLinear) -> Self {
        f.loads.into_iter().zip(f.values).collect()
    }
}

/// Raw profile as it appears in configuration files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserProfileSpec {
    #[serde(default)]
    pub name: String,
    /// One utility function per slot.
    pub utility: Vec<PiecewiseLinear>,
    pub l_min: Vec<f64>,
    pub l_max: f64,
    #[serde(default)]
    pub w_max: f64,
    pub l_av: f64,
    /// Per-slot consumption noise; absent means no noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<EmpiricalDistribution>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UserProfileSpec", into = "UserProfileSpec")]
pub struct UserProfile {
    name: String,
    utility: Vec<PiecewiseLinear>,
    l_min: Vec<f64>,
    l_max: f64,
    w_max: f64,
    l_av: f64,
    noise: Vec<EmpiricalDistribution>,
}

const NOISE_MEAN_TOLERANCE: f64 = 1e-9;

impl UserProfile {
    pub fn from_spec(spec: UserProfileSpec) -> Result<Self> {
        let slots = spec.utility.len();
        if slots == 0 {
            return Err(Error::config("user profile needs at least one slot"));
        }
        let noise = match spec.noise {
            Some(n) => n,
            None => vec![EmpiricalDistribution::degenerate(0.0)?; slots],
        };
        let profile = Self {
            name: spec.name,
            utility: spec.utility,
            l_min: spec.l_min,
            l_max: spec.l_max,
            w_max: spec.w_max,
            l_av: spec.l_av,
            noise,
        };
        let issues = profile.issues();
        if issues.is_empty() {
            Ok(profile)
        } else {
            Err(Error::Config(format!(
                "user '{}': {}",
                profile.name,
                issues.join("; ")
            )))
        }
    }

    /// Every violated profile invariant, including the existence condition
    /// `l_av > max_t l_min(t)` and `l_max - w_max >= l_av + w_max`.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let slots = self.utility.len();
        if self.l_min.len() != slots {
            out.push(format!("l_min has {} entries for {slots} slots", self.l_min.len()));
        }
        if self.noise.len() != slots {
            out.push(format!("noise has {} entries for {slots} slots", self.noise.len()));
        }
        for (name, v) in [("l_max", self.l_max), ("w_max", self.w_max), ("l_av", self.l_av)] {
            if !v.is_finite() || v < 0.0 {
                out.push(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if self.l_min.iter().any(|v| !v.is_finite() || *v < 0.0) {
            out.push("l_min entries must be finite and non-negative".into());
        }
        if !out.is_empty() {
            return out;
        }
        let max_l_min = self.l_min.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.l_av <= max_l_min {
            out.push(format!(
                "l_av = {} must exceed max_t l_min(t) = {max_l_min}",
                self.l_av
            ));
        }
        if self.l_d_max() < self.l_av + self.w_max {
            out.push(format!(
                "l_max - w_max = {} must be at least l_av + w_max = {}",
                self.l_d_max(),
                self.l_av + self.w_max
            ));
        }
        for (t, noise) in self.noise.iter().enumerate() {
            if noise.mean().abs() > NOISE_MEAN_TOLERANCE {
                out.push(format!("slot {t}: noise mean {} is not zero", noise.mean()));
            }
            if noise.max() > self.w_max + 1e-12 {
                out.push(format!(
                    "slot {t}: noise atom {} exceeds w_max = {}",
                    noise.max(),
                    self.w_max
                ));
            }
            if self.min_planned_load(t) > self.l_d_max() {
                out.push(format!(
                    "slot {t}: planning interval [{}, {}] is empty",
                    self.min_planned_load(t),
                    self.l_d_max()
                ));
            }
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slots(&self) -> usize {
        self.utility.len()
    }

    pub fn utility(&self, slot: usize) -> &PiecewiseLinear {
        &self.utility[slot]
    }

    pub fn l_min(&self, slot: usize) -> f64 {
        self.l_min[slot]
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn l_av(&self) -> f64 {
        self.l_av
    }

    /// Largest planned load, `l_max - w_max`.
    pub fn l_d_max(&self) -> f64 {
        self.l_max - self.w_max
    }

    pub fn noise(&self, slot: usize) -> &EmpiricalDistribution {
        &self.noise[slot]
    }

    /// Lower end of the planning interval. Raised above `l_min(t)` by the
    /// most negative noise atom so that every realization stays at or above
    /// `l_min(t)`.
    pub fn min_planned_load(&self, slot: usize) -> f64 {
        self.l_min[slot] + (-self.noise[slot].min()).max(0.0)
    }

    /// `E[U(load + w, t)]` over the slot's noise atoms.
    pub fn expected_utility(&self, load: f64, slot: usize) -> f64 {
        let u = &self.utility[slot];
        self.noise[slot].atoms().map(|(w, p)| p * u.eval(load + w)).sum()
    }

    /// `E[U(load + w, t) - price * (load + w)]`.
    pub fn expected_net_benefit(&self, load: f64, price: f64, slot: usize) -> f64 {
        let u = &self.utility[slot];
        self.noise[slot]
            .atoms()
            .map(|(w, p)| p * (u.eval(load + w) - price * (load + w)))
            .sum()
    }

    /// Realized consumption `planned + noise`.
    pub fn realize_consumption(&self, planned: f64, noise_sample: f64) -> Result<f64> {
        realize_consumption(planned, noise_sample, self.l_max)
    }
}

impl TryFrom<UserProfileSpec> for UserProfile {
    type Error = Error;

    fn try_from(spec: UserProfileSpec) -> Result<Self> {
        Self::from_spec(spec)
    }
}

impl From<UserProfile> for UserProfileSpec {
    fn from(p: UserProfile) -> Self {
        let noisy = p.noise.iter().any(|d| d.len() > 1 || d.min() != 0.0);
        UserProfileSpec {
            name: p.name,
            utility: p.utility,
            l_min: p.l_min,
            l_max: p.l_max,
            w_max: p.w_max,
            l_av: p.l_av,
            noise: noisy.then_some(p.noise),
        }
    }
}

/// `planned + noise_sample`, rejecting results above `l_max`.
pub fn realize_consumption(planned: f64, noise_sample: f64, l_max: f64) -> Result<f64> {
    let load = planned + noise_sample;
    if load > l_max + 1e-9 {
        return Err(Error::ModelViolation(format!(
            "realized load {load} exceeds l_max = {l_max}"
        )));
    }
    if load < 0.0 {
        return Err(Error::ModelViolation(format!("realized load {load} is negative")));
    }
    Ok(load)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningOptions {
    /// Spacing of the uniform load grid searched alongside the utility kinks.
    pub resolution: f64,
}

impl Default for PlanningOptions {
    fn default() -> Self {
        Self { resolution: 1e-3 }
    }
}

/// Candidate planned loads for one slot: a uniform grid over the planning
/// interval, its endpoints, and every utility breakpoint shifted by every
/// noise atom. The expected net benefit is piecewise linear with kinks only
/// at the shifted breakpoints, so the set contains an exact maximizer.
pub fn candidate_loads(user: &UserProfile, slot: usize, opts: &PlanningOptions) -> Result<Vec<f64>> {
    if !(opts.resolution.is_finite() && opts.resolution > 0.0) {
        return Err(Error::config("planning resolution must be positive"));
    }
    let lo = user.min_planned_load(slot);
    let hi = user.l_d_max();
    if lo > hi {
        return Err(Error::config(format!(
            "user '{}' slot {slot}: empty planning interval [{lo}, {hi}]",
            user.name
        )));
    }
    let steps = ((hi - lo) / opts.resolution).floor() as usize;
    let mut out: Vec<f64> = (0..=steps).map(|i| lo + i as f64 * opts.resolution).collect();
    out.push(hi);
    for &b in user.utility(slot).breakpoints() {
        for w in user.noise(slot).values() {
            let l = b - w;
            if l > lo && l < hi {
                out.push(l);
            }
        }
    }
    out.retain(|&l| l <= hi);
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// Relative tolerance under which two net-benefit values count as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

/// Intended consumption at `price`: the smallest load attaining the maximum
/// expected net benefit over [`candidate_loads`].
pub fn plan_consumption(
    user: &UserProfile,
    price: f64,
    slot: usize,
    opts: &PlanningOptions,
) -> Result<f64> {
    if slot >= user.slots() {
        return Err(Error::domain(format!("slot {slot} out of range")));
    }
    if !price.is_finite() || price < 0.0 {
        return Err(Error::domain(format!("price {price} must be finite and non-negative")));
    }
    let candidates = candidate_loads(user, slot, opts)?;
    let values: Vec<f64> = candidates
        .iter()
        .map(|&l| user.expected_net_benefit(l, price, slot))
        .collect();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = best - TIE_TOLERANCE * best.abs().max(1.0);
    let idx = values
        .iter()
        .position(|&v| v >= floor)
        .expect("candidate set is never empty");
    Ok(candidates[idx])
}

/// `L^d(p, t) = sum_n L^d_n(p, t)`.
pub fn aggregate_planned_load(
    users: &[UserProfile],
    price: f64,
    slot: usize,
    opts: &PlanningOptions,
) -> Result<f64> {
    users
        .iter()
        .map(|u| plan_consumption(u, price, slot, opts))
        .sum()
}

/// Smallest `gamma >= 1` with `L^d_n <= gamma * L^d_m` for every user pair,
/// grid price, and slot. Returns `f64::INFINITY` when some user plans zero
/// load while another plans a positive load.
pub fn heterogeneity_gamma(
    users: &[UserProfile],
    price_grid: &[f64],
    opts: &PlanningOptions,
) -> Result<f64> {
    let slots = users.first().map_or(0, UserProfile::slots);
    let mut gamma: f64 = 1.0;
    for t in 0..slots {
        for &p in price_grid {
            let loads = users
                .iter()
                .map(|u| plan_consumption(u, p, t, opts))
                .collect::<Result<Vec<_>>>()?;
            gamma = gamma.max(max_pairwise_ratio(&loads));
        }
    }
    Ok(gamma)
}

pub(crate) fn max_pairwise_ratio(loads: &[f64]) -> f64 {
    let hi = loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = loads.iter().copied().fold(f64::INFINITY, f64::min);
    if loads.len() < 2 || hi == lo {
        1.0
    } else if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn off_peak(a: f64, l_min: f64, l_max: f64, l_av: f64) -> UserProfile {
        UserProfile::from_spec(UserProfileSpec {
            name: "offpeak".into(),
            utility: vec![PiecewiseLinear::new(vec![(0.0, 0.0), (6.0, 6.0 * a), (12.0, 6.0 * a)]).unwrap()],
            l_min: vec![l_min],
            l_max,
            w_max: 0.0,
            l_av,
            noise: None,
        })
        .unwrap()
    }

    fn linear_user(slope: f64, l_min: f64, l_max: f64) -> UserProfile {
        UserProfile::from_spec(UserProfileSpec {
            name: "linear".into(),
            utility: vec![PiecewiseLinear::new(vec![(0.0, 0.0), (l_max, slope * l_max)]).unwrap()],
            l_min: vec![l_min],
            l_max,
            w_max: 0.0,
            l_av: l_min + 0.5 * (l_max - l_min),
            noise: None,
        })
        .unwrap()
    }

    #[test]
    fn plan_consumption_examples() {
        let user = off_peak(3.0, 3.0, 12.0, 4.5);
        let opts = PlanningOptions::default();
        assert_eq!(plan_consumption(&user, 2.0, 0, &opts).unwrap(), 6.0);
        assert_eq!(plan_consumption(&user, 4.0, 0, &opts).unwrap(), 3.0);
        assert_eq!(plan_consumption(&user, 3.0, 0, &opts).unwrap(), 3.0);
    }

    #[test]
    fn plan_consumption_is_grid_optimal_and_deterministic() {
        let user = off_peak(3.0, 3.0, 12.0, 4.5);
        let opts = PlanningOptions { resolution: 0.01 };
        for i in 0..50 {
            let p = i as f64 * 0.1;
            let l = plan_consumption(&user, p, 0, &opts).unwrap();
            assert_eq!(l.to_bits(), plan_consumption(&user, p, 0, &opts).unwrap().to_bits());
            let best = user.expected_net_benefit(l, p, 0);
            for c in candidate_loads(&user, 0, &opts).unwrap() {
                assert!(best >= user.expected_net_benefit(c, p, 0) - 1e-12);
            }
        }
    }

    #[test]
    fn price_extremes() {
        let user = linear_user(2.0, 1.0, 10.0);
        let opts = PlanningOptions::default();
        assert_eq!(plan_consumption(&user, 0.0, 0, &opts).unwrap(), 10.0);
        assert_eq!(plan_consumption(&user, 2.5, 0, &opts).unwrap(), 1.0);
    }

    #[test]
    fn noisy_user_plans_on_shifted_kinks() {
        let noise = EmpiricalDistribution::from_atoms([(-0.5, 0.5), (0.5, 0.5)]).unwrap();
        let user = UserProfile::from_spec(UserProfileSpec {
            name: "noisy".into(),
            utility: vec![PiecewiseLinear::new(vec![(0.0, 0.0), (6.0, 18.0), (12.0, 18.0)]).unwrap()],
            l_min: vec![3.0],
            l_max: 12.0,
            w_max: 0.5,
            l_av: 5.0,
            noise: Some(vec![noise]),
        })
        .unwrap();
        assert_eq!(user.min_planned_load(0), 3.5);
        // slope 3 on the left of 6, flat on the right: with p = 1 the marginal
        // expected gain is 3 - 1 while both atoms sit below 6, then 1.5 - 1,
        // then -1, so the optimum is the last kink 6 + 0.5.
        let l = plan_consumption(&user, 1.0, 0, &PlanningOptions { resolution: 0.01 }).unwrap();
        assert!((l - 6.5).abs() < 1e-12, "{l}");
        let l = plan_consumption(&user, 2.0, 0, &PlanningOptions { resolution: 0.01 }).unwrap();
        assert!((l - 5.5).abs() < 1e-12, "{l}");
    }

    #[test]
    fn demand_is_monotone_in_price() {
        // peak-hour shape: non-concave
        let peak = PiecewiseLinear::new(vec![(0.0, 0.0), (5.0, 40.0), (6.0, 40.8), (12.0, 64.8)]).unwrap();
        let user = UserProfile::from_spec(UserProfileSpec {
            name: "peak".into(),
            utility: vec![peak],
            l_min: vec![5.0],
            l_max: 12.0,
            w_max: 0.0,
            l_av: 8.0,
            noise: None,
        })
        .unwrap();
        let opts = PlanningOptions::default();
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let l = plan_consumption(&user, i as f64 * 0.2, 0, &opts).unwrap();
            assert!(l <= prev);
            prev = l;
        }
    }

    #[test]
    fn realize_consumption_examples() {
        assert_eq!(realize_consumption(5.0, 0.0, 12.0).unwrap(), 5.0);
        assert_eq!(realize_consumption(5.0, 0.5, 12.0).unwrap(), 5.5);
        assert_eq!(realize_consumption(11.5, 0.5, 12.0).unwrap(), 12.0);
        assert!(matches!(realize_consumption(12.0, 0.5, 12.0), Err(Error::ModelViolation(_))));
    }

    #[test]
    fn gamma_examples() {
        let grid: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let opts = PlanningOptions::default();
        let a = off_peak(3.0, 3.0, 12.0, 4.5);
        assert_eq!(heterogeneity_gamma(&[a.clone(), a.clone()], &grid, &opts).unwrap(), 1.0);
        assert_eq!(heterogeneity_gamma(&[a.clone()], &grid, &opts).unwrap(), 1.0);
        // utility slopes above every grid price pin both users at their l_d_max
        let two = linear_user(100.0, 1.0, 2.0);
        let three = linear_user(100.0, 1.0, 3.0);
        assert_eq!(heterogeneity_gamma(&[two, three], &grid, &opts).unwrap(), 1.5);
        assert_eq!(max_pairwise_ratio(&[0.0, 1.0]), f64::INFINITY);
    }

    #[test]
    fn aggregate_examples() {
        let opts = PlanningOptions::default();
        let a = off_peak(3.0, 3.0, 12.0, 4.5);
        assert_eq!(aggregate_planned_load(&[a.clone()], 2.0, 0, &opts).unwrap(), 6.0);
        assert_eq!(aggregate_planned_load(&[a.clone(), a.clone()], 4.0, 0, &opts).unwrap(), 6.0);
        let b = linear_user(2.0, 1.0, 3.0);
        assert_eq!(aggregate_planned_load(&[a.clone(), b], 1.0, 0, &opts).unwrap(), 9.0);
        let n = 5;
        assert_eq!(aggregate_planned_load(&vec![a; n], 2.0, 0, &opts).unwrap(), 30.0);
    }

    #[test]
    fn load_condition_is_enforced() {
        let spec = UserProfileSpec {
            name: "bad".into(),
            utility: vec![PiecewiseLinear::new(vec![(0.0, 0.0), (6.0, 18.0)]).unwrap()],
            l_min: vec![5.0],
            l_max: 12.0,
            w_max: 0.0,
            l_av: 5.0,
            noise: None,
        };
        assert!(matches!(UserProfile::from_spec(spec), Err(Error::Config(_))));
    }

    #[test]
    fn profile_json_round_trip() {
        let user = off_peak(3.0, 3.0, 12.0, 4.5);
        let s = serde_json::to_string(&user).unwrap();
        let back: UserProfile = serde_json::from_str(&s).unwrap();
        assert_eq!(back, user);
    }
}
