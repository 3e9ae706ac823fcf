//! Deterministic instances for the benchmarks.

use gridwelfare::{
    EmpiricalDistribution, Instance, MarketProcess, MarketState, PiecewiseLinear, PlanningOptions, PriceGrid,
    SystemModel, UserProfile, UserProfileSpec,
};

pub struct Size {
    pub users: usize,
    pub slots: usize,
    pub states: usize,
    pub grid_points: usize,
}

pub const SMALL: Size = Size {
    users: 2,
    slots: 4,
    states: 2,
    grid_points: 11,
};

pub const DAY: Size = Size {
    users: 4,
    slots: 24,
    states: 4,
    grid_points: 21,
};

pub fn planning() -> PlanningOptions {
    PlanningOptions { resolution: 0.01 }
}

/// Renewable output with `atoms` equally likely levels between 0 and 8.
pub fn renewable(atoms: usize) -> EmpiricalDistribution {
    let w = 1.0 / atoms as f64;
    EmpiricalDistribution::from_atoms((0..atoms).map(|k| (8.0 * k as f64 / atoms.max(2) as f64, w))).unwrap()
}

fn user(n: usize, slots: usize) -> UserProfile {
    let scale = 1.0 + 0.3 * n as f64;
    let utility = (0..slots)
        .map(|t| {
            let peak = 1.0 + 0.5 * ((t as f64) * std::f64::consts::PI / slots as f64).sin();
            let s = 6.0 * scale * peak;
            PiecewiseLinear::new(vec![(0.0, 0.0), (4.0, 4.0 * s), (8.0, 6.0 * s), (12.0, 6.8 * s)]).unwrap()
        })
        .collect();
    UserProfile::from_spec(UserProfileSpec {
        name: format!("u{n}"),
        utility,
        l_min: vec![1.0 + 0.25 * n as f64; slots],
        l_max: 12.0,
        w_max: 0.5,
        l_av: 5.0,
        noise: Some(vec![
            EmpiricalDistribution::from_atoms([(-0.5, 0.25), (0.0, 0.5), (0.5, 0.25)]).unwrap();
            slots
        ]),
    })
    .unwrap()
}

pub fn instance(size: &Size) -> Instance {
    let users = (0..size.users).map(|n| user(n, size.slots)).collect();
    let renewable = (0..size.slots).map(|t| renewable(2 + t % 4)).collect();
    let states = (0..size.states)
        .map(|m| {
            let beta: Vec<f64> = (0..size.slots).map(|t| 1.0 + 0.5 * m as f64 + 0.1 * (t % 6) as f64).collect();
            let alpha = beta.iter().map(|b| 1.5 * b).collect();
            MarketState::new(beta, alpha).unwrap()
        })
        .collect();
    let p = 1.0 / size.states as f64;
    let market = MarketProcess::iid(states, vec![p; size.states]).unwrap();
    let grid = PriceGrid::uniform(0.0, 10.0, size.grid_points).unwrap();
    Instance::new(SystemModel::new(users, renewable).unwrap(), market, grid, &planning()).unwrap()
}
