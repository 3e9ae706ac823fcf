//! Finite weighted distributions.
//!
//! Every random quantity in the model (renewable output, per-user consumption
//! noise, the effective renewable `Z = X - w`) is carried as a sorted list of
//! weighted atoms. Prefix sums of weight and of `value * weight` are kept
//! alongside the atoms so that CDF lookups, generalized quantiles, and
//! truncated first moments are all `O(log n)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights supplied from outside must sum to one within this tolerance; they
/// are then renormalized so the stored sum is one to machine precision.
pub const INPUT_WEIGHT_TOLERANCE: f64 = 1e-9;

/// Slack used when comparing accumulated weights against a probability level.
const CDF_EPS: f64 = 1e-12;

/// Default cap on the number of atoms kept after a convolution.
pub const DEFAULT_ATOM_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
    /// `cdf[i]` = total weight of atoms `0..=i`.
    cdf: Vec<f64>,
    /// `first_moment[i]` = sum of `value * weight` over atoms `0..=i`.
    first_moment: Vec<f64>,
}

/// Rounds to 12 significant digits; atoms whose keys agree are coalesced.
fn coalesce_key(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

impl EmpiricalDistribution {
    /// Builds a distribution from `(value, weight)` pairs in any order.
    pub fn from_atoms<I>(atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return Err(Error::domain("distribution needs at least one atom"));
        }
        let mut total = 0.0;
        for &(v, w) in &atoms {
            if !v.is_finite() {
                return Err(Error::domain(format!("atom value {v} is not finite")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::domain(format!(
                    "atom weight {w} must be finite and strictly positive"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > INPUT_WEIGHT_TOLERANCE {
            return Err(Error::domain(format!("atom weights sum to {total}, expected 1")));
        }
        Ok(Self::normalized(atoms))
    }

    /// Builds an equal-weight distribution over `samples`, coalescing repeats.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("no samples"));
        }
        let w = 1.0 / samples.len() as f64;
        Self::from_atoms(samples.iter().map(|&v| (v, w)))
    }

    pub fn degenerate(value: f64) -> Result<Self> {
        Self::from_atoms([(value, 1.0)])
    }

    /// Sorts, coalesces, and rescales positive-weight atoms. Callers guarantee
    /// finiteness and positivity.
    fn normalized(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut moments: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut members: Vec<usize> = Vec::with_capacity(atoms.len());
        let mut last_key = f64::NAN;
        for (v, w) in atoms {
            let key = coalesce_key(v);
            if key == last_key {
                let i = values.len() - 1;
                weights[i] += w;
                moments[i] += v * w;
                members[i] += 1;
            } else {
                values.push(v);
                weights.push(w);
                moments.push(v * w);
                members.push(1);
                last_key = key;
            }
        }
        for i in 0..values.len() {
            if members[i] > 1 {
                // a merged atom sits at the weighted mean of its members
                values[i] = moments[i] / weights[i];
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self::from_sorted_parts(values, weights)
    }

    fn from_sorted_parts(values: Vec<f64>, weights: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(values.len());
        let mut first_moment = Vec::with_capacity(values.len());
        let (mut c, mut m) = (0.0, 0.0);
        for (&v, &w) in values.iter().zip(&weights) {
            c += w;
            m += v * w;
            cdf.push(c);
            first_moment.push(m);
        }
        Self {
            values,
            weights,
            cdf,
            first_moment,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.first_moment[self.first_moment.len() - 1]
    }

    /// Weighted mean and (population) variance.
    pub fn moments(&self) -> (f64, f64) {
        let mean = self.mean();
        let var = self
            .atoms()
            .map(|(v, w)| w * (v - mean) * (v - mean))
            .sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Number of atoms with value `<= x`.
    fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x)
    }

    /// `P(V <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.count_le(x) {
            0 => 0.0,
            k => self.cdf[k - 1].min(1.0),
        }
    }

    /// Generalized inverse CDF: the smallest atom `v` with `P(V <= v) >= a`.
    pub fn quantile(&self, a: f64) -> Result<f64> {
        Ok(self.values[self.quantile_index(a)?])
    }

    pub(crate) fn quantile_index(&self, a: f64) -> Result<usize> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::domain(format!("quantile level {a} outside (0, 1]")));
        }
        let idx = self.cdf.partition_point(|&c| c < a - CDF_EPS);
        Ok(idx.min(self.values.len() - 1))
    }

    /// Truncated first moment `sum_{v <= theta} v * weight(v)`.
    pub fn partial_expectation(&self, theta: f64) -> f64 {
        match self.count_le(theta) {
            0 => 0.0,
            k => self.first_moment[k - 1],
        }
    }

    /// `E[(level - V)^+]`, the expected shortfall of the variable below `level`.
    pub fn expected_shortfall(&self, level: f64) -> f64 {
        match self.count_le(level) {
            0 => 0.0,
            k => (level * self.cdf[k - 1] - self.first_moment[k - 1]).max(0.0),
        }
    }

    /// Draws one atom by inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // u in (0, 1]
        let u = 1.0 - rng.gen::<f64>();
        let idx = self
            .cdf
            .partition_point(|&c| c < u - CDF_EPS)
            .min(self.values.len() - 1);
        self.values[idx]
    }

    /// Distribution of `self + other` for independent variables.
    pub fn add_independent(&self, other: &Self, cap: usize) -> Result<Self> {
        self.combine(other, cap, |a, b| a + b)
    }

    /// Distribution of `self - other` for independent variables.
    pub fn sub_independent(&self, other: &Self, cap: usize) -> Result<Self> {
        self.combine(other, cap, |a, b| a - b)
    }

    fn combine(&self, other: &Self, cap: usize, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if cap == 0 {
            return Err(Error::domain("atom cap must be positive"));
        }
        let mut atoms = Vec::with_capacity(self.len() * other.len());
        for (a, wa) in self.atoms() {
            for (b, wb) in other.atoms() {
                atoms.push((op(a, b), wa * wb));
            }
        }
        let out = Self::normalized(atoms);
        Ok(if out.len() > cap { out.rebin(cap) } else { out })
    }

    /// Collapses into `bins` equal-probability bins, each represented by the
    /// conditional mean of the mass it holds. Atoms straddling a bin boundary
    /// are split. The mean is preserved exactly (up to rounding).
    pub fn rebin(&self, bins: usize) -> Self {
        if bins >= self.len() || bins == 0 {
            return self.clone();
        }
        let target = 1.0 / bins as f64;
        let mut out = Vec::with_capacity(bins);
        let (mut mass, mut moment) = (0.0, 0.0);
        for (v, w) in self.atoms() {
            let mut rest = w;
            loop {
                let last_bin = out.len() + 1 == bins;
                let room = if last_bin { f64::INFINITY } else { target - mass };
                let take = rest.min(room.max(0.0));
                mass += take;
                moment += take * v;
                rest -= take;
                if !last_bin && mass >= target - 1e-15 {
                    out.push((moment / mass, mass));
                    mass = 0.0;
                    moment = 0.0;
                }
                if rest <= 0.0 {
                    break;
                }
            }
        }
        if mass > 0.0 {
            out.push((moment / mass, mass));
        }
        Self::normalized(out)
    }

    /// `a + b * V`, for `b >= 0`.
    pub fn affine(&self, shift: f64, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) || !shift.is_finite() {
            return Err(Error::domain(format!("invalid affine map shift={shift} scale={scale}")));
        }
        Ok(Self::normalized(
            self.atoms().map(|(v, w)| (shift + scale * v, w)).collect(),
        ))
    }
}

impl TryFrom<Vec<(f64, f64)>> for EmpiricalDistribution {
    type Error = Error;

    fn try_from(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_atoms(atoms)
    }
}

impl From<EmpiricalDistribution> for Vec<(f64, f64)> {
    fn from(d: EmpiricalDistribution) -> Self {
        d.atoms().collect()
    }
}

/// `Z = X - sum(w)` with every term independent.
pub fn effective_renewable(
    x: &EmpiricalDistribution,
    noises: &[&EmpiricalDistribution],
    cap: usize,
) -> Result<EmpiricalDistribution> {
    let w = sum_independent(noises, cap)?;
    x.sub_independent(&w, cap)
}

/// Law of the sum of independent variables; degenerate at 0 for no terms.
pub fn sum_independent(terms: &[&EmpiricalDistribution], cap: usize) -> Result<EmpiricalDistribution> {
    let mut acc = EmpiricalDistribution::degenerate(0.0)?;
    for t in terms {
        acc = acc.add_independent(t, cap)?;
    }
    Ok(acc)
}

/// `mu + sigma * H` with `H` zero-mean and unit-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationScaleDistribution {
    base: EmpiricalDistribution,
    mu: f64,
    sigma: f64,
}

impl LocationScaleDistribution {
    pub const STANDARDIZATION_TOLERANCE: f64 = 1e-9;

    pub fn new(base: EmpiricalDistribution, mu: f64, sigma: f64) -> Result<Self> {
        let (m, v) = base.moments();
        if m.abs() > Self::STANDARDIZATION_TOLERANCE {
            return Err(Error::domain(format!("base distribution has mean {m}, expected 0")));
        }
        if (v - 1.0).abs() > Self::STANDARDIZATION_TOLERANCE {
            return Err(Error::domain(format!(
                "base distribution has variance {v}, expected 1"
            )));
        }
        if !mu.is_finite() {
            return Err(Error::domain("location must be finite"));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::domain(format!("scale {sigma} must be finite and >= 0")));
        }
        Ok(Self { base, mu, sigma })
    }

    /// Decomposes a non-degenerate distribution into its standardized shape,
    /// mean, and standard deviation.
    pub fn standardize(dist: &EmpiricalDistribution) -> Result<Self> {
        let (mean, var) = dist.moments();
        if var <= 0.0 {
            return Err(Error::domain("cannot standardize a degenerate distribution"));
        }
        let sd = var.sqrt();
        let base = EmpiricalDistribution::normalized(
            dist.atoms().map(|(v, w)| ((v - mean) / sd, w)).collect(),
        );
        // remove residual rounding from the standardization
        let (m2, v2) = base.moments();
        let base = EmpiricalDistribution::normalized(
            base.atoms().map(|(v, w)| ((v - m2) / v2.sqrt(), w)).collect(),
        );
        Self::new(base, mean, sd)
    }

    pub fn base(&self) -> &EmpiricalDistribution {
        &self.base
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn with_location(&self, mu: f64) -> Result<Self> {
        Self::new(self.base.clone(), mu, self.sigma)
    }

    pub fn with_scale(&self, sigma: f64) -> Result<Self> {
        Self::new(self.base.clone(), self.mu, sigma)
    }

    /// Materializes the atoms `mu + sigma * h`.
    pub fn shift_scale(&self) -> EmpiricalDistribution {
        EmpiricalDistribution::normalized(
            self.base
                .atoms()
                .map(|(h, w)| (self.mu + self.sigma * h, w))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(atoms: &[(f64, f64)]) -> EmpiricalDistribution {
        EmpiricalDistribution::from_atoms(atoms.iter().copied()).unwrap()
    }

    fn uniform_grid(n: usize) -> EmpiricalDistribution {
        let w = 1.0 / n as f64;
        EmpiricalDistribution::from_atoms((0..n).map(|i| ((i as f64 + 0.5) * w, w))).unwrap()
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(dist(&[(0.0, 0.5), (1.0, 0.5)]).quantile(1.0).unwrap(), 1.0);
        let third = 1.0 / 3.0;
        let d = dist(&[(1.0, third), (2.0, third), (3.0, third)]);
        assert_eq!(d.quantile(0.4).unwrap(), 2.0);
        let point = dist(&[(5.0, 1.0)]);
        for a in [1e-9, 0.3, 1.0] {
            assert_eq!(point.quantile(a).unwrap(), 5.0);
        }
    }

    #[test]
    fn quantile_rejects_levels_outside_unit_interval() {
        let d = dist(&[(0.0, 1.0)]);
        assert!(matches!(d.quantile(0.0), Err(Error::Domain(_))));
        assert!(matches!(d.quantile(-0.1), Err(Error::Domain(_))));
        assert!(matches!(d.quantile(1.0 + 1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn construction_validates_atoms() {
        assert!(EmpiricalDistribution::from_atoms([(0.0, 0.5)]).is_err());
        assert!(EmpiricalDistribution::from_atoms([(0.0, 1.0), (1.0, 0.0)]).is_err());
        assert!(EmpiricalDistribution::from_atoms([(f64::NAN, 1.0)]).is_err());
        assert!(EmpiricalDistribution::from_atoms(Vec::<(f64, f64)>::new()).is_err());
        let d = dist(&[(2.0, 0.25), (1.0, 0.5), (2.0, 0.25)]);
        assert_eq!(d.values(), &[1.0, 2.0]);
        assert_eq!(d.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn effective_renewable_examples() {
        let zero = EmpiricalDistribution::degenerate(0.0).unwrap();
        let x = dist(&[(1.0, 0.5), (2.0, 0.5)]);
        assert_eq!(x.sub_independent(&zero, DEFAULT_ATOM_CAP).unwrap(), x);

        let w = dist(&[(0.0, 0.5), (1.0, 0.5)]);
        let z = x.sub_independent(&w, DEFAULT_ATOM_CAP).unwrap();
        assert_eq!(z.values(), &[0.0, 1.0, 2.0]);
        assert_eq!(z.weights(), &[0.25, 0.5, 0.25]);

        let z = EmpiricalDistribution::degenerate(5.0)
            .unwrap()
            .sub_independent(&EmpiricalDistribution::degenerate(2.0).unwrap(), 10)
            .unwrap();
        assert_eq!(z.values(), &[3.0]);

        let coin = dist(&[(0.0, 0.5), (1.0, 0.5)]);
        let z = effective_renewable(&dist(&[(4.0, 1.0)]), &[&coin, &coin], DEFAULT_ATOM_CAP).unwrap();
        assert_eq!(z.values(), &[2.0, 3.0, 4.0]);
        assert_eq!(z.weights(), &[0.25, 0.5, 0.25]);
        assert_eq!(effective_renewable(&x, &[], 10).unwrap(), x);
    }

    #[test]
    fn partial_expectation_examples() {
        let d = dist(&[(-1.0, 0.5), (1.0, 0.5)]);
        assert_eq!(d.partial_expectation(0.0), -0.5);
        assert_eq!(d.partial_expectation(10.0), d.mean());
        let d = dist(&[(0.0, 0.25), (1.0, 0.5), (2.0, 0.25)]);
        assert_eq!(d.partial_expectation(1.0), 0.5);
        assert_eq!(d.partial_expectation(-1.0), 0.0);
    }

    #[test]
    fn moments_examples() {
        assert_eq!(dist(&[(3.0, 1.0)]).moments(), (3.0, 0.0));
        assert_eq!(dist(&[(0.0, 0.5), (2.0, 0.5)]).moments(), (1.0, 1.0));
        assert_eq!(dist(&[(-1.0, 0.5), (1.0, 0.5)]).moments(), (0.0, 1.0));
    }

    #[test]
    fn shift_scale_examples() {
        let h = dist(&[(-1.0, 0.5), (1.0, 0.5)]);
        let id = LocationScaleDistribution::new(h.clone(), 0.0, 1.0).unwrap();
        assert_eq!(id.shift_scale(), h);
        let ls = LocationScaleDistribution::new(h.clone(), 2.0, 3.0).unwrap();
        let m = ls.shift_scale();
        assert_eq!(m.values(), &[-1.0, 5.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let flat = LocationScaleDistribution::new(h.clone(), 4.0, 0.0).unwrap();
        assert_eq!(flat.shift_scale().values(), &[4.0]);
        assert!(LocationScaleDistribution::new(h, 0.0, -1.0).is_err());
    }

    #[test]
    fn location_scale_requires_standardized_base() {
        let not_centered = dist(&[(0.0, 0.5), (2.0, 0.5)]);
        assert!(LocationScaleDistribution::new(not_centered.clone(), 0.0, 1.0).is_err());
        let ls = LocationScaleDistribution::standardize(&not_centered).unwrap();
        assert!((ls.mu() - 1.0).abs() < 1e-12);
        assert!((ls.sigma() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_shortfall_of_uniform_grid() {
        let u = uniform_grid(100);
        assert!((u.expected_shortfall(1.0) - 0.5).abs() < 1e-12);
        assert_eq!(u.expected_shortfall(0.0), 0.0);
    }

    #[test]
    fn rebinning_keeps_mean_and_cap() {
        let u = uniform_grid(1000);
        let r = u.rebin(10);
        assert_eq!(r.len(), 10);
        assert!((r.mean() - u.mean()).abs() < 1e-12);
        for &w in r.weights() {
            assert!((w - 0.1).abs() < 1e-9);
        }
        let a = uniform_grid(400);
        let b = uniform_grid(300);
        let c = a.add_independent(&b, 50).unwrap();
        assert!(c.len() <= 50);
        assert!((c.mean() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn serde_round_trip_as_atom_list() {
        let d = dist(&[(0.0, 0.25), (1.5, 0.75)]);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, "[[0.0,0.25],[1.5,0.75]]");
        let back: EmpiricalDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<EmpiricalDistribution>("[[0.0,0.5]]").is_err());
    }

    fn arb_dist() -> impl Strategy<Value = EmpiricalDistribution> {
        prop::collection::vec((-50.0f64..50.0, 0.01f64..1.0), 1..25).prop_map(|raw| {
            let total: f64 = raw.iter().map(|a| a.1).sum();
            EmpiricalDistribution::from_atoms(raw.into_iter().map(|(v, w)| (v, w / total)))
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn stored_invariants_hold(d in arb_dist()) {
            let total: f64 = d.weights().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(d.values().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(d.weights().iter().all(|&w| w > 0.0));
        }

        #[test]
        fn quantile_is_monotone_generalized_inverse(d in arb_dist()) {
            let mut prev = f64::NEG_INFINITY;
            for i in 1..=100 {
                let a = i as f64 / 100.0;
                let q = d.quantile(a).unwrap();
                prop_assert!(q >= prev);
                prop_assert!(d.cdf(q) >= a - 1e-12);
                prev = q;
            }
        }

        #[test]
        fn difference_preserves_mean(x in arb_dist(), w in arb_dist()) {
            let z = x.sub_independent(&w, DEFAULT_ATOM_CAP).unwrap();
            prop_assert!((z.mean() - (x.mean() - w.mean())).abs() < 1e-9);
        }

        #[test]
        fn partial_expectation_monotone_for_nonnegative_atoms(d in arb_dist(), a in 0.0f64..60.0, b in 0.0f64..60.0) {
            let d = d.affine(60.0, 1.0).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(d.partial_expectation(lo + 50.0) <= d.partial_expectation(hi + 50.0));
            prop_assert!((d.partial_expectation(d.max()) - d.mean()).abs() < 1e-12);
        }

        #[test]
        fn shift_scale_recovers_moments(d in arb_dist(), mu in -10.0f64..10.0, sigma in 0.0f64..5.0) {
            prop_assume!(d.moments().1 > 1e-6);
            let base = LocationScaleDistribution::standardize(&d).unwrap();
            let ls = LocationScaleDistribution::new(base.base().clone(), mu, sigma).unwrap();
            let (m, v) = ls.shift_scale().moments();
            prop_assert!((m - mu).abs() < 1e-9);
            prop_assert!((v - sigma * sigma).abs() < 1e-9 * (1.0 + sigma * sigma));
        }
    }
}
