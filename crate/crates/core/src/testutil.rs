use crate::distributions::EmpiricalDistribution;
use crate::market::{MarketProcess, MarketState};
use crate::user::{PiecewiseLinear, PlanningOptions, UserProfile, UserProfileSpec};
use crate::wma::{Instance, PriceGrid, SystemModel};

pub fn user(
    points: Vec<(f64, f64)>,
    l_min: f64,
    l_max: f64,
    l_av: f64,
    noise: Option<EmpiricalDistribution>,
    slots: usize,
) -> UserProfile {
    let w_max = noise.as_ref().map_or(0.0, |d| d.max().max(-d.min()));
    UserProfile::from_spec(UserProfileSpec {
        name: String::new(),
        utility: vec![PiecewiseLinear::new(points).unwrap(); slots],
        l_min: vec![l_min; slots],
        l_max,
        w_max,
        l_av,
        noise: noise.map(|d| vec![d; slots]),
    })
    .unwrap()
}

pub fn flat_market(slots: usize, beta: f64, alpha: f64) -> MarketProcess {
    MarketProcess::constant(MarketState::flat(slots, beta, alpha).unwrap()).unwrap()
}

pub fn instance(
    users: Vec<UserProfile>,
    renewable: EmpiricalDistribution,
    market: MarketProcess,
    grid: PriceGrid,
) -> Instance {
    let slots = users[0].slots();
    let model = SystemModel::new(users, vec![renewable; slots]).unwrap();
    Instance::new(model, market, grid, &PlanningOptions { resolution: 0.01 }).unwrap()
}
