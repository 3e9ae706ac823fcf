//! Deficit queues, the quadratic Lyapunov function, and the constants of
//! the drift and queue bounds.

use serde::Serialize;

use crate::user::UserProfile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficitQueues {
    q: Vec<f64>,
    tau: u64,
}

impl DeficitQueues {
    pub fn zeros(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            tau: 0,
        }
    }

    /// Clamps negative entries to zero.
    pub fn from_values(q: Vec<f64>) -> Self {
        Self {
            q: q.into_iter().map(|x| x.max(0.0)).collect(),
            tau: 0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Slots elapsed since construction.
    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }

    /// One slot of `Q_n <- [Q_n - L_n]^+ + l_av_n`.
    pub fn update(&mut self, realized: &[f64], l_av: &[f64]) {
        debug_assert_eq!(realized.len(), self.q.len());
        debug_assert_eq!(l_av.len(), self.q.len());
        for ((q, &l), &a) in self.q.iter_mut().zip(realized).zip(l_av) {
            *q = (*q - l).max(0.0) + a;
        }
        self.tau += 1;
    }

    /// `V = 1/2 sum_n Q_n^2`.
    pub fn lyapunov(&self) -> f64 {
        lyapunov_value(&self.q)
    }
}

pub fn update_queue(q: f64, realized: f64, l_av: f64) -> f64 {
    (q - realized).max(0.0) + l_av
}

pub fn lyapunov_value(q: &[f64]) -> f64 {
    0.5 * q.iter().map(|x| x * x).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftConstants {
    /// `1/2 sum_n (l_max^2 + l_av^2)`.
    pub c: f64,
    /// `(T - 1) * c`.
    pub c0: f64,
    /// `T * c`.
    pub c1: f64,
}

impl DriftConstants {
    pub fn from_limits(l_max: &[f64], l_av: &[f64], slots: usize) -> Self {
        let c = 0.5
            * l_max
                .iter()
                .zip(l_av)
                .map(|(m, a)| m * m + a * a)
                .sum::<f64>();
        let t = slots as f64;
        Self {
            c,
            c0: (t - 1.0) * c,
            c1: t * c,
        }
    }

    pub fn new(users: &[UserProfile]) -> Self {
        let slots = users.first().map_or(0, UserProfile::slots);
        let l_max: Vec<f64> = users.iter().map(UserProfile::l_max).collect();
        let l_av: Vec<f64> = users.iter().map(UserProfile::l_av).collect();
        Self::from_limits(&l_max, &l_av, slots)
    }
}

/// `delta_max * N * gamma^2 * eta + T * sum_n l_av_n`.
pub fn queue_bound(delta_max: f64, users: usize, gamma: f64, eta: f64, slots: usize, l_av_sum: f64) -> f64 {
    delta_max * users as f64 * gamma * gamma * eta + slots as f64 * l_av_sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftDiagnostic {
    /// `V(t_{k+1}) - V(t_k)`.
    pub drift: f64,
    /// `C T - sum_t sum_n Q_n(t_k + t) (L_n(t) - l_av_n)`.
    pub bound: f64,
    pub slack: f64,
}

impl DriftDiagnostic {
    /// Tolerates rounding proportional to the magnitudes involved.
    pub fn holds(&self) -> bool {
        self.slack >= -1e-9 * (1.0 + self.bound.abs().max(self.drift.abs()))
    }
}

/// Checks the per-frame drift inequality along one realized frame.
///
/// `queue_path[t]` holds the queues at the start of slot `t`, so it has one
/// more entry than `realized`; the last entry is the state after the frame.
pub fn drift_bound_check(
    queue_path: &[Vec<f64>],
    realized: &[Vec<f64>],
    l_av: &[f64],
    constants: &DriftConstants,
) -> DriftDiagnostic {
    debug_assert_eq!(queue_path.len(), realized.len() + 1);
    let slots = realized.len() as f64;
    let drift = lyapunov_value(&queue_path[realized.len()]) - lyapunov_value(&queue_path[0]);
    let pressure: f64 = realized
        .iter()
        .zip(queue_path)
        .map(|(loads, q)| {
            q.iter()
                .zip(loads)
                .zip(l_av)
                .map(|((q, l), a)| q * (l - a))
                .sum::<f64>()
        })
        .sum();
    let bound = constants.c * slots - pressure;
    DriftDiagnostic {
        drift,
        bound,
        slack: bound - drift,
    }
}
