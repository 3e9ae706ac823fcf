//! Day-ahead / real-time procurement.
//!
//! For a slot with planned aggregate load `l_d`, day-ahead price `beta`,
//! expected real-time price `alpha_bar`, and effective renewable `Z`, buying
//! base power `B` a day ahead costs in expectation
//!
//! ```text
//! E[Cost](B) = beta * B + alpha_bar * E[(l_d - B - Z)^+]
//! ```
//!
//! which is convex and piecewise linear in `B`. Its minimizer is the
//! newsvendor quantile `B* = [l_d - F_Z^{-1}(beta / alpha_bar)]^+` when
//! `alpha_bar >= beta`, and `0` otherwise.
//!
//! With atoms instead of densities `F_Z` jumps over `beta / alpha_bar`, so the
//! textbook closed-form cost `beta * l_d - alpha_bar * int^{theta} z dF` is off
//! by `theta * (alpha_bar * F_Z(theta) - beta)`. [`OptimalCost::cost`] is the
//! exact minimum; [`OptimalCost::closed_form`] keeps the uncorrected value for
//! comparison.

use serde::Serialize;

use crate::distributions::{EmpiricalDistribution, LocationScaleDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ProcurementInputs<'a> {
    /// Aggregate planned load.
    pub l_d: f64,
    /// Day-ahead price.
    pub beta: f64,
    /// Expected real-time price.
    pub alpha_bar: f64,
    /// Effective renewable for the slot.
    pub z: &'a EmpiricalDistribution,
}

impl<'a> ProcurementInputs<'a> {
    pub fn new(l_d: f64, beta: f64, alpha_bar: f64, z: &'a EmpiricalDistribution) -> Self {
        Self {
            l_d,
            beta,
            alpha_bar,
            z,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("l_d", self.l_d), ("beta", self.beta), ("alpha_bar", self.alpha_bar)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if self.beta == 0.0 && self.alpha_bar == 0.0 {
            return Err(Error::DegeneratePricing);
        }
        Ok(())
    }
}

/// `E[Cost]` for an arbitrary base-power purchase `b`.
pub fn expected_cost(inputs: &ProcurementInputs<'_>, b: f64) -> Result<f64> {
    inputs.validate()?;
    if !b.is_finite() || b < 0.0 {
        return Err(Error::domain(format!("base power {b} must be finite and non-negative")));
    }
    Ok(inputs.beta * b + inputs.alpha_bar * inputs.z.expected_shortfall(inputs.l_d - b))
}

/// Cost-minimizing base power.
///
/// `beta = 0` with `alpha_bar > 0` buys the worst-case need
/// `[l_d - min Z]^+` for free.
pub fn optimal_base_power(inputs: &ProcurementInputs<'_>) -> Result<f64> {
    Ok(solve(inputs)?.b_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalCost {
    pub b_star: f64,
    /// Exact minimum of [`expected_cost`].
    pub cost: f64,
    /// `alpha_bar * E[(l_d - Z)^+]` when `b_star = 0`, otherwise
    /// `beta * l_d - alpha_bar * partial_expectation(Z, theta)`.
    pub closed_form: f64,
    /// Newsvendor quantile `theta = F_Z^{-1}(beta / alpha_bar)` when the
    /// day-ahead market is used.
    pub theta: Option<f64>,
    /// `|closed_form - cost|`; zero when `F_Z(theta) = beta / alpha_bar`.
    pub discrete_slack: f64,
}

pub fn expected_cost_optimal(inputs: &ProcurementInputs<'_>) -> Result<OptimalCost> {
    solve(inputs)
}

fn solve(inputs: &ProcurementInputs<'_>) -> Result<OptimalCost> {
    inputs.validate()?;
    let ProcurementInputs {
        l_d,
        beta,
        alpha_bar,
        z,
    } = *inputs;

    if alpha_bar < beta {
        let cost = alpha_bar * z.expected_shortfall(l_d);
        return Ok(OptimalCost {
            b_star: 0.0,
            cost,
            closed_form: cost,
            theta: None,
            discrete_slack: 0.0,
        });
    }
    if beta == 0.0 {
        let b_star = (l_d - z.min()).max(0.0);
        return Ok(OptimalCost {
            b_star,
            cost: 0.0,
            closed_form: 0.0,
            theta: None,
            discrete_slack: 0.0,
        });
    }

    let theta = z.quantile((beta / alpha_bar).min(1.0))?;
    let b_star = (l_d - theta).max(0.0);
    if b_star == 0.0 {
        let cost = alpha_bar * z.expected_shortfall(l_d);
        return Ok(OptimalCost {
            b_star,
            cost,
            closed_form: cost,
            theta: Some(theta),
            discrete_slack: 0.0,
        });
    }
    let cost = beta * b_star + alpha_bar * z.expected_shortfall(theta);
    let closed_form = beta * l_d - alpha_bar * z.partial_expectation(theta);
    Ok(OptimalCost {
        b_star,
        cost,
        closed_form,
        theta: Some(theta),
        discrete_slack: (closed_form - cost).abs(),
    })
}

/// Value of the renewable source when the day-ahead market is used
/// (`alpha_bar >= beta > 0`): the drop in minimal expected cost from the
/// renewable-free benchmark `beta * l_d`, which does not depend on `l_d` once
/// `B* > 0`.
///
/// Equals `alpha_bar * int^{theta} z dF_Z` for continuous laws; on atoms the
/// exact drop subtracts `theta * (alpha_bar * F_Z(theta) - beta)`.
pub fn value_of_renewable(beta: f64, alpha_bar: f64, z: &EmpiricalDistribution) -> Result<f64> {
    if !(beta.is_finite() && alpha_bar.is_finite() && beta > 0.0 && alpha_bar >= beta) {
        return Err(Error::domain(format!(
            "value of renewable needs alpha_bar >= beta > 0 (beta = {beta}, alpha_bar = {alpha_bar})"
        )));
    }
    let ratio = (beta / alpha_bar).min(1.0);
    let idx = z.quantile_index(ratio)?;
    let theta = z.values()[idx];
    let f_theta = z.cdf(theta);
    Ok(alpha_bar * z.partial_expectation(theta) - theta * (alpha_bar * f_theta - beta))
}

/// Renewable value for any price pair, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenewableValue {
    pub value: f64,
    /// `false` on the `alpha_bar >= beta > 0`, `B* > 0` branch where the value
    /// follows the newsvendor formula; `true` where the reported number is
    /// `[min(beta, alpha_bar) * l_d - E[Cost*]]^+`.
    pub extended: bool,
}

pub fn renewable_value(inputs: &ProcurementInputs<'_>) -> Result<RenewableValue> {
    let opt = solve(inputs)?;
    if inputs.beta > 0.0 && inputs.alpha_bar >= inputs.beta && opt.b_star > 0.0 {
        return Ok(RenewableValue {
            value: value_of_renewable(inputs.beta, inputs.alpha_bar, inputs.z)?,
            extended: false,
        });
    }
    let benchmark = inputs.beta.min(inputs.alpha_bar) * inputs.l_d;
    Ok(RenewableValue {
        value: (benchmark - opt.cost).max(0.0),
        extended: true,
    })
}

/// `Z = mu + sigma * H` form of [`value_of_renewable`]:
/// `beta * mu + sigma * (alpha_bar * int^{theta_H} h dF_H - theta_H * (alpha_bar * F_H(theta_H) - beta))`
/// with `theta_H = F_H^{-1}(beta / alpha_bar)`. The last term vanishes for
/// continuous `H`, leaving `beta * mu + sigma * alpha_bar * int^{theta_H} h dF_H`.
pub fn vor_location_scale(
    beta: f64,
    alpha_bar: f64,
    dist: &LocationScaleDistribution,
) -> Result<f64> {
    if !(beta.is_finite() && alpha_bar.is_finite() && beta > 0.0 && alpha_bar >= beta) {
        return Err(Error::domain(format!(
            "value of renewable needs alpha_bar >= beta > 0 (beta = {beta}, alpha_bar = {alpha_bar})"
        )));
    }
    let h = dist.base();
    let theta_h = h.quantile((beta / alpha_bar).min(1.0))?;
    let spread = alpha_bar * h.partial_expectation(theta_h) - theta_h * (alpha_bar * h.cdf(theta_h) - beta);
    Ok(beta * dist.mu() + dist.sigma() * spread)
}

/// Real-time deficit `[load - base - renewable]^+`.
pub fn realtime_deficit(load: f64, base: f64, renewable: f64) -> f64 {
    (load - base - renewable).max(0.0)
}
