//! Daily market price pairs and the process generating them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOLERANCE: f64 = 1e-12;
const STATIONARY_RESIDUAL: f64 = 1e-12;
const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// Day-ahead and expected real-time prices for each slot of one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub beta: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl MarketState {
    pub fn new(beta: Vec<f64>, alpha_bar: Vec<f64>) -> Result<Self> {
        let s = Self { beta, alpha_bar };
        s.validate()?;
        Ok(s)
    }

    /// Same pair in every slot.
    pub fn flat(slots: usize, beta: f64, alpha_bar: f64) -> Result<Self> {
        Self::new(vec![beta; slots], vec![alpha_bar; slots])
    }

    pub fn slots(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty() || self.beta.len() != self.alpha_bar.len() {
            return Err(Error::config(format!(
                "market state needs equal, non-zero slot counts (beta {}, alpha_bar {})",
                self.beta.len(),
                self.alpha_bar.len()
            )));
        }
        for (t, (&b, &a)) in self.beta.iter().zip(&self.alpha_bar).enumerate() {
            if !(b.is_finite() && a.is_finite() && b >= 0.0 && a >= 0.0) {
                return Err(Error::config(format!("slot {t}: prices must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn beta_max(&self) -> f64 {
        self.beta.iter().copied().fold(0.0, f64::max)
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_bar.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarketMode {
    Iid {
        probabilities: Vec<f64>,
    },
    Markov {
        transition: Vec<Vec<f64>>,
        /// Defaults to the stationary distribution.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarketProcessSpec", into = "MarketProcessSpec")]
pub struct MarketProcess {
    states: Vec<MarketState>,
    mode: MarketMode,
    /// Day-one law: the IID probabilities or the Markov initial distribution.
    first_day: Vec<f64>,
    /// Long-run state frequencies.
    long_run: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MarketProcessSpec {
    states: Vec<MarketState>,
    mode: MarketMode,
}

impl TryFrom<MarketProcessSpec> for MarketProcess {
    type Error = Error;

    fn try_from(spec: MarketProcessSpec) -> Result<Self> {
        MarketProcess::new(spec.states, spec.mode)
    }
}

impl From<MarketProcess> for MarketProcessSpec {
    fn from(p: MarketProcess) -> Self {
        MarketProcessSpec {
            states: p.states,
            mode: p.mode,
        }
    }
}

fn check_probabilities(p: &[f64], what: &str, m: usize) -> Result<()> {
    if p.len() != m {
        return Err(Error::config(format!("{what}: expected {m} entries, got {}", p.len())));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::config(format!("{what}: entries must be finite and non-negative")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::config(format!("{what}: sums to {s}, expected 1")));
    }
    Ok(())
}

impl MarketProcess {
    pub fn new(states: Vec<MarketState>, mode: MarketMode) -> Result<Self> {
        let m = states.len();
        if m == 0 {
            return Err(Error::config("market process needs at least one state"));
        }
        for s in &states {
            s.validate()?;
            if s.slots() != states[0].slots() {
                return Err(Error::config("market states disagree on the number of slots"));
            }
        }
        let (first_day, long_run) = match &mode {
            MarketMode::Iid { probabilities } => {
                check_probabilities(probabilities, "IID probabilities", m)?;
                (probabilities.clone(), probabilities.clone())
            }
            MarketMode::Markov {
                transition,
                initial,
            } => {
                if transition.len() != m {
                    return Err(Error::config(format!(
                        "transition matrix has {} rows for {m} states",
                        transition.len()
                    )));
                }
                for (i, row) in transition.iter().enumerate() {
                    check_probabilities(row, &format!("transition row {i}"), m)?;
                }
                if !is_primitive(transition) {
                    return Err(Error::config(
                        "transition matrix must be irreducible and aperiodic",
                    ));
                }
                let pi = stationary_of(transition)?;
                let first = match initial {
                    Some(init) => {
                        check_probabilities(init, "initial distribution", m)?;
                        init.clone()
                    }
                    None => pi.clone(),
                };
                (first, pi)
            }
        };
        Ok(Self {
            states,
            mode,
            first_day,
            long_run,
        })
    }

    pub fn iid(states: Vec<MarketState>, probabilities: Vec<f64>) -> Result<Self> {
        Self::new(states, MarketMode::Iid { probabilities })
    }

    pub fn markov(
        states: Vec<MarketState>,
        transition: Vec<Vec<f64>>,
        initial: Option<Vec<f64>>,
    ) -> Result<Self> {
        Self::new(
            states,
            MarketMode::Markov {
                transition,
                initial,
            },
        )
    }

    /// A single fixed market pair.
    pub fn constant(state: MarketState) -> Result<Self> {
        Self::iid(vec![state], vec![1.0])
    }

    pub fn states(&self) -> &[MarketState] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> &MarketState {
        &self.states[idx]
    }

    pub fn mode(&self) -> &MarketMode {
        &self.mode
    }

    pub fn is_markov(&self) -> bool {
        matches!(self.mode, MarketMode::Markov { .. })
    }

    pub fn slots(&self) -> usize {
        self.states[0].slots()
    }

    pub fn beta_max(&self) -> f64 {
        self.states.iter().map(MarketState::beta_max).fold(0.0, f64::max)
    }

    pub fn alpha_max(&self) -> f64 {
        self.states.iter().map(MarketState::alpha_max).fold(0.0, f64::max)
    }

    /// `max(alpha_max, beta_max)`.
    pub fn delta_max(&self) -> f64 {
        self.beta_max().max(self.alpha_max())
    }

    /// Long-run state frequencies: the IID law, or the Markov stationary law.
    pub fn long_run_distribution(&self) -> &[f64] {
        &self.long_run
    }

    /// Law of the next day's state given the previous one (`None` on day one).
    pub fn next_state_weights(&self, prev: Option<usize>) -> &[f64] {
        match (&self.mode, prev) {
            (MarketMode::Iid { probabilities }, _) => probabilities,
            (MarketMode::Markov { .. }, None) => &self.first_day,
            (MarketMode::Markov { transition, .. }, Some(i)) => &transition[i],
        }
    }

    /// Draws the next day's state index.
    pub fn sample_day<R: Rng + ?Sized>(&self, prev: Option<usize>, rng: &mut R) -> usize {
        draw_index(self.next_state_weights(prev), rng)
    }
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    if weights.len() == 1 {
        return 0;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Stationary distribution of a Markov market process.
pub fn stationary_distribution(process: &MarketProcess) -> Result<Vec<f64>> {
    match process.mode() {
        MarketMode::Markov { transition, .. } => stationary_of(transition),
        MarketMode::Iid { .. } => Err(Error::domain("stationary distribution requires Markov mode")),
    }
}

/// Power iteration `pi <- pi P` from the uniform vector until the L1
/// residual falls below `1e-12`.
pub fn stationary_of(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = transition.len();
    let mut pi = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    for _ in 0..STATIONARY_MAX_ITERS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in transition.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                next[j] += pi[i] * p;
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual < STATIONARY_RESIDUAL {
            return Ok(pi);
        }
    }
    Err(Error::config(
        "power iteration did not converge; the chain is likely reducible or periodic",
    ))
}

/// A non-negative `m x m` matrix is primitive iff its `(m-1)^2 + 1` power is
/// entrywise positive. Only the zero pattern matters, so booleans suffice.
pub fn is_primitive(matrix: &[Vec<f64>]) -> bool {
    let m = matrix.len();
    let pattern: Vec<Vec<bool>> = matrix.iter().map(|r| r.iter().map(|&x| x > 0.0).collect()).collect();
    let bool_mul = |a: &[Vec<bool>], b: &[Vec<bool>]| -> Vec<Vec<bool>> {
        (0..m)
            .map(|i| (0..m).map(|j| (0..m).any(|k| a[i][k] && b[k][j])).collect())
            .collect()
    };
    let mut exp = (m - 1) * (m - 1) + 1;
    let mut base = pattern;
    let mut acc: Option<Vec<Vec<bool>>> = None;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => bool_mul(&a, &base),
            });
        }
        exp >>= 1;
        if exp > 0 {
            base = bool_mul(&base, &base);
        }
    }
    acc.is_some_and(|a| a.iter().all(|r| r.iter().all(|&x| x)))
}
