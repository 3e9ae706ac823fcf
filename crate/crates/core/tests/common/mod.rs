#![allow(dead_code)]

use gridwelfare::{
    EmpiricalDistribution, Instance, MarketProcess, MarketState, PiecewiseLinear, PlanningOptions, PriceGrid,
    SystemModel, UserProfile, UserProfileSpec,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn dist(atoms: &[(f64, f64)]) -> EmpiricalDistribution {
    EmpiricalDistribution::from_atoms(atoms.iter().copied()).unwrap()
}

pub fn planning() -> PlanningOptions {
    PlanningOptions { resolution: 0.01 }
}

/// Concave, strictly increasing utility with 2 to 4 linear pieces.
pub fn random_utility(rng: &mut ChaCha8Rng, l_max: f64) -> PiecewiseLinear {
    let pieces = rng.gen_range(2..=4);
    let mut breaks: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(0.5..l_max - 0.5)).collect();
    breaks.push(l_max);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 0.1);
    let mut slope = rng.gen_range(2.0..10.0);
    let mut pts = vec![(0.0, 0.0)];
    let mut prev = (0.0, 0.0);
    for b in breaks {
        let v = prev.1 + slope * (b - prev.0);
        pts.push((b, v));
        prev = (b, v);
        slope *= rng.gen_range(0.3..0.9);
    }
    PiecewiseLinear::new(pts).unwrap()
}

/// Zero-mean noise symmetric around zero, with at most three atoms.
pub fn random_noise(rng: &mut ChaCha8Rng) -> EmpiricalDistribution {
    if rng.gen_bool(0.25) {
        return dist(&[(0.0, 1.0)]);
    }
    let w = rng.gen_range(0.2..1.0);
    if rng.gen_bool(0.5) {
        dist(&[(-w, 0.5), (w, 0.5)])
    } else {
        let p = rng.gen_range(0.1..0.4);
        dist(&[(-w, p), (0.0, 1.0 - 2.0 * p), (w, p)])
    }
}

pub fn random_user(rng: &mut ChaCha8Rng, slots: usize, name: String) -> UserProfile {
    let l_max = rng.gen_range(8.0..16.0);
    let noise = random_noise(rng);
    let w_max = noise.max();
    let l_min: Vec<f64> = (0..slots).map(|_| rng.gen_range(0.5..0.3 * l_max)).collect();
    let top = l_min.iter().copied().fold(0.0, f64::max);
    let l_av = top + rng.gen_range(0.1..0.9) * (l_max - 2.0 * w_max - top);
    UserProfile::from_spec(UserProfileSpec {
        name,
        utility: (0..slots).map(|_| random_utility(rng, l_max)).collect(),
        l_min,
        l_max,
        w_max,
        l_av,
        noise: Some(vec![noise; slots]),
    })
    .unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, slots: usize) -> MarketState {
    let beta: Vec<f64> = (0..slots).map(|_| rng.gen_range(0.5..5.0)).collect();
    let alpha = beta.iter().map(|b| b * rng.gen_range(0.7..2.0)).collect();
    MarketState::new(beta, alpha).unwrap()
}

pub fn random_renewable(rng: &mut ChaCha8Rng) -> EmpiricalDistribution {
    let k = rng.gen_range(1..=4);
    let raw: Vec<(f64, f64)> = (0..k).map(|_| (rng.gen_range(0.0..8.0), rng.gen_range(0.1..1.0))).collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    let atoms: Vec<(f64, f64)> = raw.iter().map(|&(v, w)| (v, w / total)).collect();
    EmpiricalDistribution::from_atoms(renormalized(atoms)).unwrap()
}

/// Forces the weights to sum to one in floating point.
fn renormalized(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let head: f64 = atoms[..atoms.len() - 1].iter().map(|a| a.1).sum();
    let last = atoms.len() - 1;
    atoms[last].1 = 1.0 - head;
    atoms
}

/// A primitive two-state chain.
pub fn random_chain(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let a: f64 = rng.gen_range(0.1..0.9);
    let b: f64 = rng.gen_range(0.1..0.9);
    vec![vec![a, 1.0 - a], vec![1.0 - b, b]]
}

pub struct Shape {
    pub slots: usize,
    pub users: usize,
    pub states: usize,
    pub grid_points: usize,
    pub markov: bool,
}

pub fn random_instance(rng: &mut ChaCha8Rng, shape: &Shape) -> Instance {
    let users = (0..shape.users)
        .map(|n| random_user(rng, shape.slots, format!("u{n}")))
        .collect();
    let renewable = (0..shape.slots).map(|_| random_renewable(rng)).collect();
    let states: Vec<MarketState> = (0..shape.states).map(|_| random_state(rng, shape.slots)).collect();
    let market = if shape.markov {
        assert_eq!(shape.states, 2);
        MarketProcess::markov(states, random_chain(rng), None).unwrap()
    } else {
        let m = states.len();
        MarketProcess::iid(states, vec![1.0 / m as f64; m]).unwrap()
    };
    let grid = PriceGrid::uniform(0.0, rng.gen_range(6.0..12.0), shape.grid_points).unwrap();
    Instance::new(SystemModel::new(users, renewable).unwrap(), market, grid, &planning()).unwrap()
}

/// Two heterogeneous users over two slots: a steep peak-hour user and a
/// flat off-peak user, two market states, an 11-point grid.
pub fn small_instance(markov: Option<Vec<Vec<f64>>>) -> Instance {
    let peak = UserProfile::from_spec(UserProfileSpec {
        name: "peak".into(),
        utility: vec![
            PiecewiseLinear::new(vec![(0.0, 0.0), (5.0, 40.0), (8.0, 52.0), (12.0, 56.0)]).unwrap(),
            PiecewiseLinear::new(vec![(0.0, 0.0), (4.0, 24.0), (9.0, 39.0), (12.0, 42.0)]).unwrap(),
        ],
        l_min: vec![3.0, 3.0],
        l_max: 12.0,
        w_max: 0.5,
        l_av: 8.0,
        noise: Some(vec![dist(&[(-0.5, 0.5), (0.5, 0.5)]); 2]),
    })
    .unwrap();
    let off_peak = UserProfile::from_spec(UserProfileSpec {
        name: "off-peak".into(),
        utility: vec![
            PiecewiseLinear::new(vec![(0.0, 0.0), (6.0, 18.0), (12.0, 24.0)]).unwrap(),
            PiecewiseLinear::new(vec![(0.0, 0.0), (3.0, 12.0), (12.0, 21.0)]).unwrap(),
        ],
        l_min: vec![1.0, 1.0],
        l_max: 12.0,
        w_max: 1.0,
        l_av: 4.5,
        noise: Some(vec![dist(&[(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]); 2]),
    })
    .unwrap();
    let renewable = vec![dist(&[(0.0, 0.5), (4.0, 0.5)]), dist(&[(1.0, 0.25), (3.0, 0.75)])];
    let states = vec![
        MarketState::new(vec![2.0, 3.0], vec![3.0, 4.0]).unwrap(),
        MarketState::new(vec![4.0, 6.0], vec![5.0, 9.0]).unwrap(),
    ];
    let market = match markov {
        Some(p) => MarketProcess::markov(states, p, None).unwrap(),
        None => MarketProcess::iid(states, vec![0.5, 0.5]).unwrap(),
    };
    let grid = PriceGrid::uniform(0.0, 10.0, 11).unwrap();
    Instance::new(
        SystemModel::new(vec![peak, off_peak], renewable).unwrap(),
        market,
        grid,
        &planning(),
    )
    .unwrap()
}

/// Largest pairwise ratio of planned loads at a common grid price,
/// recomputed from the response table.
pub fn measured_gamma(inst: &Instance) -> f64 {
    let mut gamma: f64 = 1.0;
    for t in 0..inst.slots() {
        for g in 0..inst.grid().len() {
            let l = inst.table().planned(t, g);
            let hi = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = l.iter().copied().fold(f64::INFINITY, f64::min);
            if lo > 0.0 {
                gamma = gamma.max(hi / lo);
            } else if hi > 0.0 {
                gamma = f64::INFINITY;
            }
        }
    }
    gamma
}
