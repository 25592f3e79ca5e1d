//! Brute-force reference computations and random instance generators shared
//! by the integration tests. Nothing here calls into the planner or the
//! verification code: beliefs, likelihoods, gains and cumulative likelihoods
//! are recomputed from the sensor model by direct enumeration.

#![allow(dead_code)]

use mrac_core::belief::{Agent, CellBelief, ObsModel, Observation};
use mrac_core::scenario::{Grid, Pose};
use mrac_core::verify::HistoryLedger;
use rand::Rng;

/// Gap below which two reference values count as a numerical tie.
pub const AMBIGUITY: f64 = 1e-9;
/// Gap below which two reference values count as an exact tie.
pub const EXACT_TIE: f64 = 1e-13;

pub fn lik(m: &ObsModel, z: bool, x: bool) -> f64 {
    let p1 = if x { m.p_detect } else { m.p_false_alarm };
    if z {
        p1
    } else {
        1.0 - p1
    }
}

/// Posterior marginals by per-cell odds products.
pub fn ref_belief(prior: &[f64], obs: &[Observation], m: &ObsModel) -> Vec<f64> {
    let mut w1 = prior.to_vec();
    let mut w0: Vec<f64> = prior.iter().map(|q| 1.0 - q).collect();
    for o in obs {
        w1[o.cell] *= lik(m, o.value, true);
        w0[o.cell] *= lik(m, o.value, false);
    }
    w1.iter().zip(&w0).map(|(a, b)| a / (a + b)).collect()
}

/// `P(seq)` under independent cells: per cell, mix the two occupancy
/// hypotheses over all of that cell's readings.
pub fn ref_seq_likelihood(b: &[f64], obs: &[Observation], m: &ObsModel) -> f64 {
    let mut cells: Vec<usize> = obs.iter().map(|o| o.cell).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
        .iter()
        .map(|&c| {
            let (mut l1, mut l0) = (b[c], 1.0 - b[c]);
            for o in obs.iter().filter(|o| o.cell == c) {
                l1 *= lik(m, o.value, true);
                l0 *= lik(m, o.value, false);
            }
            l1 + l0
        })
        .product()
}

pub fn neg_h(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        p * p.ln() + (1.0 - p) * (1.0 - p).ln()
    }
}

/// N, S, E, W with moves off the grid clamped.
pub fn ref_move(grid: Grid, pose: Pose, prim: usize) -> Pose {
    let (r, c) = (pose.row as i64, pose.col as i64);
    let (nr, nc) = match prim {
        0 => (r - 1, c),
        1 => (r + 1, c),
        2 => (r, c + 1),
        _ => (r, c - 1),
    };
    if nr < 0 || nc < 0 || nr >= grid.height as i64 || nc >= grid.width as i64 {
        pose
    } else {
        Pose::new(nr as usize, nc as usize)
    }
}

/// Expected one-step entropy-reward gain of each of the 16 joint moves,
/// by enumerating hidden occupancies of the observed cells jointly with
/// both readings.
pub fn ref_gains(grid: Grid, poses: [Pose; 2], b: &[f64], m: &ObsModel) -> Vec<f64> {
    let mut out = Vec::with_capacity(16);
    for ar in 0..4 {
        for arp in 0..4 {
            let c0 = {
                let p = ref_move(grid, poses[0], ar);
                p.row * grid.width + p.col
            };
            let c1 = {
                let p = ref_move(grid, poses[1], arp);
                p.row * grid.width + p.col
            };
            let mut cells = vec![c0, c1];
            cells.dedup();
            let k = cells.len();
            let mut gain = 0.0;
            for z0 in [false, true] {
                for z1 in [false, true] {
                    let mut pz = 0.0;
                    let mut mass = vec![0.0; k];
                    for x in 0..(1u32 << k) {
                        let occ = |c: usize| x >> cells.iter().position(|&v| v == c).unwrap() & 1 == 1;
                        let prior: f64 = cells.iter().map(|&c| if occ(c) { b[c] } else { 1.0 - b[c] }).product();
                        let joint = prior * lik(m, z0, occ(c0)) * lik(m, z1, occ(c1));
                        pz += joint;
                        for (j, &c) in cells.iter().enumerate() {
                            if occ(c) {
                                mass[j] += joint;
                            }
                        }
                    }
                    if pz <= 0.0 {
                        continue;
                    }
                    let delta: f64 = cells.iter().enumerate().map(|(j, &c)| neg_h(mass[j] / pz) - neg_h(b[c])).sum();
                    gain += pz * delta;
                }
            }
            out.push(gain);
        }
    }
    out
}

/// Lowest-index maximum within `1e-12`, and whether the choice is robust to
/// rounding: every other value is either an exact tie or clearly smaller.
pub fn ref_argmax(values: &[f64]) -> (usize, bool) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = values.iter().position(|&v| v >= max - 1e-12).unwrap();
    let robust = values.iter().all(|&v| (v - max).abs() < EXACT_TIE || v < max - AMBIGUITY);
    (best, robust)
}

pub fn ref_best_action(grid: Grid, poses: [Pose; 2], b: &[f64], m: &ObsModel) -> (usize, bool) {
    ref_argmax(&ref_gains(grid, poses, b, m))
}

/// Slots are `(time, robot, cell)`; realization `i` assigns slot `j` the bit
/// `i >> (n-1-j)`.
pub fn realization(slots: &[Observation], i: u64) -> Vec<Observation> {
    let n = slots.len();
    slots.iter().enumerate().map(|(j, s)| Observation::new(s.time, s.robot, s.cell, i >> (n - 1 - j) & 1 == 1)).collect()
}

/// Exact cumulative likelihood of every action over all realizations of
/// `slots` given `common`, and whether every favored action was robust.
pub fn ref_cumulative(
    grid: Grid,
    poses: [Pose; 2],
    prior: &[f64],
    common: &[Observation],
    slots: &[Observation],
    m: &ObsModel,
) -> (Vec<f64>, bool) {
    let cb = ref_belief(prior, common, m);
    let mut cl = vec![0.0; 16];
    let mut robust = true;
    for i in 0..(1u64 << slots.len()) {
        let z = realization(slots, i);
        let mut h = common.to_vec();
        h.extend_from_slice(&z);
        let (a, r) = ref_best_action(grid, poses, &ref_belief(prior, &h, m), m);
        robust &= r;
        cl[a] += ref_seq_likelihood(&cb, &z, m);
    }
    (cl, robust)
}

/// Every action the reference favors on at least one realization.
pub fn ref_partition(
    grid: Grid,
    poses: [Pose; 2],
    prior: &[f64],
    common: &[Observation],
    slots: &[Observation],
    m: &ObsModel,
) -> (Vec<usize>, bool) {
    let mut seen = Vec::new();
    let mut robust = true;
    for i in 0..(1u64 << slots.len()) {
        let mut h = common.to_vec();
        h.extend_from_slice(&realization(slots, i));
        let (a, r) = ref_best_action(grid, poses, &ref_belief(prior, &h, m), m);
        robust &= r;
        if !seen.contains(&a) {
            seen.push(a);
        }
    }
    seen.sort_unstable();
    (seen, robust)
}

/// A planning instant: grid, poses, prior and a split history.
#[derive(Debug, Clone)]
pub struct Instance {
    pub grid: Grid,
    pub poses: [Pose; 2],
    pub prior: Vec<f64>,
    pub common: Vec<Observation>,
    pub unshared: [Vec<Observation>; 2],
    pub model: ObsModel,
}

impl Instance {
    pub fn prior_belief(&self) -> CellBelief {
        CellBelief::new(self.prior.clone()).unwrap()
    }

    pub fn ledgers(&self) -> [HistoryLedger; 2] {
        HistoryLedger::pair(&self.common, &self.unshared[0], &self.unshared[1]).unwrap()
    }

    /// The same slots with new values, read from the bits of `bits`
    /// (robot R's slots first).
    pub fn with_values(&self, bits: u64) -> Instance {
        let mut all: Vec<Observation> = self.unshared.iter().flatten().copied().collect();
        let n = all.len();
        for (j, o) in all.iter_mut().enumerate() {
            o.value = bits >> (n - 1 - j) & 1 == 1;
        }
        let split = self.unshared[0].len();
        let mut out = self.clone();
        out.unshared = [all[..split].to_vec(), all[split..].to_vec()];
        out
    }

    pub fn history(&self, agent: Agent) -> Vec<Observation> {
        let mut h = self.common.clone();
        h.extend_from_slice(&self.unshared[agent.index()]);
        h
    }
}

pub fn random_prior<R: Rng>(rng: &mut R, cells: usize) -> Vec<f64> {
    (0..cells).map(|_| if rng.random_bool(0.3) { 0.5 } else { rng.random_range(0.1..0.9) }).collect()
}

/// Random instance on a `width x height` grid. The common history covers
/// times `1..=k` with one reading per robot per step; robot R then holds
/// `p_r` unshared readings and robot R' holds `p_rp`.
pub fn random_instance<R: Rng>(rng: &mut R, width: usize, height: usize, k: u32, p_r: u32, p_rp: u32) -> Instance {
    let grid = Grid::new(width, height).unwrap();
    let cells = grid.cells();
    let pose = |rng: &mut R| Pose::new(rng.random_range(0..height), rng.random_range(0..width));
    let poses = [pose(rng), pose(rng)];
    let prior = random_prior(rng, cells);
    let mut common = Vec::new();
    for t in 1..=k {
        for robot in Agent::BOTH {
            common.push(Observation::new(t, robot, rng.random_range(0..cells), rng.random_bool(0.5)));
        }
    }
    let mut unshared = [Vec::new(), Vec::new()];
    for (robot, p) in [(Agent::R, p_r), (Agent::Rp, p_rp)] {
        for t in k + 1..=k + p {
            unshared[robot.index()].push(Observation::new(t, robot, rng.random_range(0..cells), rng.random_bool(0.5)));
        }
    }
    Instance { grid, poses, prior, common, unshared, model: ObsModel::default() }
}
