//! Search-and-rescue world: an occupancy grid with hidden static targets,
//! two robots with known poses and N/S/E/W motion primitives.
//!
//! Axis convention: `N` decreases the row index, `E` increases the column
//! index. Moves that would leave the grid keep the robot where it is.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{Agent, CellBelief, CellId, ObsModel, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input(format!("grid {width}x{height} has no cells")));
        }
        Ok(Self { width, height })
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, pose: Pose) -> bool {
        pose.row < self.height && pose.col < self.width
    }

    #[inline]
    pub fn cell(&self, pose: Pose) -> CellId {
        pose.row * self.width + pose.col
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub row: usize,
    pub col: usize,
}

impl Pose {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Primitive {
    N,
    S,
    E,
    W,
}

impl Primitive {
    /// Canonical order used by the joint-action enumeration.
    pub const ALL: [Primitive; 4] = [Primitive::N, Primitive::S, Primitive::E, Primitive::W];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Primitive::N => 'N',
            Primitive::S => 'S',
            Primitive::E => 'E',
            Primitive::W => 'W',
        };
        write!(f, "{c}")
    }
}

/// Unit step in the primitive's direction, clamped to the grid.
pub fn move_pose(grid: &Grid, pose: Pose, prim: Primitive) -> Pose {
    let Pose { row, col } = pose;
    match prim {
        Primitive::N if row > 0 => Pose::new(row - 1, col),
        Primitive::S if row + 1 < grid.height => Pose::new(row + 1, col),
        Primitive::E if col + 1 < grid.width => Pose::new(row, col + 1),
        Primitive::W if col > 0 => Pose::new(row, col - 1),
        _ => pose,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    MaxEntropy,
    PriorKnowledge,
    Random,
}

/// Prior occupancy belief shared by both robots at the start of an episode.
pub fn init_prior<R: Rng + ?Sized>(kind: InitKind, ground_truth: &[bool], rng: &mut R) -> CellBelief {
    let probs = match kind {
        InitKind::MaxEntropy => vec![0.5; ground_truth.len()],
        InitKind::PriorKnowledge => ground_truth.iter().map(|&occ| if occ { 0.7 } else { 0.3 }).collect(),
        InitKind::Random => ground_truth.iter().map(|_| rng.random_range(0.05..=0.95)).collect(),
    };
    CellBelief::new(probs).expect("prior marginals are in range by construction")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub width: usize,
    pub height: usize,
    pub target_density: f64,
    pub horizon: u32,
    pub comm_restrictions: u32,
    pub init: InitKind,
    pub sensor: ObsModel,
    pub start_poses: [Pose; 2],
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            target_density: 0.2,
            horizon: 200,
            comm_restrictions: 0,
            init: InitKind::MaxEntropy,
            sensor: ObsModel::default(),
            start_poses: [Pose::new(0, 0), Pose::new(9, 9)],
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<Grid> {
        let grid = Grid::new(self.width, self.height)?;
        if !(0.0..=1.0).contains(&self.target_density) {
            return Err(Error::input(format!("target_density={} is not a probability", self.target_density)));
        }
        if self.horizon == 0 {
            return Err(Error::input("horizon must be at least 1"));
        }
        if self.comm_restrictions > self.horizon {
            return Err(Error::input(format!("comm_restrictions={} exceeds horizon={}", self.comm_restrictions, self.horizon)));
        }
        ObsModel::new(self.sensor.p_detect, self.sensor.p_false_alarm)?;
        for (i, p) in self.start_poses.iter().enumerate() {
            if !grid.contains(*p) {
                return Err(Error::input(format!("start pose {i} ({}, {}) is outside the grid", p.row, p.col)));
            }
        }
        Ok(grid)
    }
}

/// A fully determined world instance. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: Grid,
    pub ground_truth: Vec<bool>,
    pub start_poses: [Pose; 2],
    pub horizon: u32,
    pub restrictions: BTreeSet<u32>,
    pub sensor: ObsModel,
    pub prior: CellBelief,
    pub seed: u64,
}

pub fn build_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    let grid = config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ground_truth: Vec<bool> = (0..grid.cells()).map(|_| rng.random_bool(config.target_density)).collect();
    let restrictions =
        index::sample(&mut rng, config.horizon as usize, config.comm_restrictions as usize).into_iter().map(|i| i as u32 + 1).collect();
    let prior = init_prior(config.init, &ground_truth, &mut rng);
    Ok(Scenario {
        grid,
        ground_truth,
        start_poses: config.start_poses,
        horizon: config.horizon,
        restrictions,
        sensor: config.sensor,
        prior,
        seed,
    })
}

impl Scenario {
    /// Independent random stream for sensor noise.
    pub fn sensing_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        rng
    }

    pub fn is_restricted(&self, time: u32) -> bool {
        self.restrictions.contains(&time)
    }

    /// Ground truth as a flat row-major 0/1 vector.
    pub fn ground_truth_flat(&self) -> Vec<u8> {
        self.ground_truth.iter().map(|&b| b as u8).collect()
    }
}

/// Draws the reading of the cell under `pose`.
pub fn sense<R: Rng + ?Sized>(scenario: &Scenario, pose: Pose, robot: Agent, time: u32, rng: &mut R) -> Observation {
    let cell = scenario.grid.cell(pose);
    let p1 = scenario.sensor.likelihood(true, scenario.ground_truth[cell]);
    let value = rng.random::<f64>() < p1;
    Observation::new(time, robot, cell, value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(5, 4).unwrap()
    }

    #[test]
    fn moves_follow_axis_convention_and_clamp() {
        let g = grid();
        let p = Pose::new(2, 2);
        assert_eq!(move_pose(&g, p, Primitive::N), Pose::new(1, 2));
        assert_eq!(move_pose(&g, p, Primitive::S), Pose::new(3, 2));
        assert_eq!(move_pose(&g, p, Primitive::E), Pose::new(2, 3));
        assert_eq!(move_pose(&g, p, Primitive::W), Pose::new(2, 1));
        assert_eq!(move_pose(&g, Pose::new(0, 1), Primitive::N), Pose::new(0, 1));
        assert_eq!(move_pose(&g, Pose::new(3, 4), Primitive::S), Pose::new(3, 4));
        assert_eq!(move_pose(&g, Pose::new(3, 4), Primitive::E), Pose::new(3, 4));
        assert_eq!(move_pose(&g, Pose::new(3, 0), Primitive::W), Pose::new(3, 0));
        let back = [Primitive::N, Primitive::S, Primitive::E, Primitive::W].into_iter().fold(p, |acc, m| move_pose(&g, acc, m));
        assert_eq!(back, p);
    }

    #[test]
    fn moves_never_leave_the_grid() {
        let g = grid();
        for row in 0..g.height {
            for col in 0..g.width {
                for m in Primitive::ALL {
                    assert!(g.contains(move_pose(&g, Pose::new(row, col), m)));
                }
            }
        }
    }

    #[test]
    fn priors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(init_prior(InitKind::MaxEntropy, &[false; 4], &mut rng).probs(), &[0.5; 4]);
        assert_eq!(init_prior(InitKind::PriorKnowledge, &[true, false], &mut rng).probs(), &[0.7, 0.3]);
        let random = init_prior(InitKind::Random, &vec![false; 10_000], &mut rng);
        assert!(random.probs().iter().all(|p| (0.05..=0.95).contains(p)));
    }

    #[test]
    fn scenario_is_deterministic_in_seed() {
        let cfg = ScenarioConfig { init: InitKind::Random, comm_restrictions: 17, ..Default::default() };
        let a = build_scenario(&cfg, 42).unwrap();
        let b = build_scenario(&cfg, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.restrictions.len(), 17);
        assert!(a.restrictions.iter().all(|t| (1..=200).contains(t)));
        assert_ne!(a.ground_truth, build_scenario(&cfg, 43).unwrap().ground_truth);
    }

    #[test]
    fn restriction_extremes() {
        let none = build_scenario(&ScenarioConfig::default(), 1).unwrap();
        assert!(none.restrictions.is_empty());
        let cfg = ScenarioConfig { horizon: 30, comm_restrictions: 30, ..Default::default() };
        let all = build_scenario(&cfg, 1).unwrap();
        assert_eq!(all.restrictions, (1..=30).collect());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            ScenarioConfig { width: 0, ..Default::default() },
            ScenarioConfig { target_density: 1.5, ..Default::default() },
            ScenarioConfig { comm_restrictions: 201, ..Default::default() },
            ScenarioConfig { start_poses: [Pose::new(0, 0), Pose::new(10, 0)], ..Default::default() },
            ScenarioConfig { sensor: ObsModel { p_detect: 1.2, p_false_alarm: 0.1 }, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(build_scenario(&cfg, 0), Err(Error::InvalidInput(_))), "{cfg:?}");
        }
    }

    fn one_cell(occupied: bool, sensor: ObsModel) -> Scenario {
        Scenario {
            grid: Grid::new(1, 1).unwrap(),
            ground_truth: vec![occupied],
            start_poses: [Pose::new(0, 0); 2],
            horizon: 1,
            restrictions: BTreeSet::new(),
            sensor,
            prior: CellBelief::uniform(1, 0.5).unwrap(),
            seed: 9,
        }
    }

    #[test]
    fn perfect_sensor_reports_truth() {
        let s = one_cell(true, ObsModel::new(1.0, 0.0).unwrap());
        let mut rng = s.sensing_rng();
        for t in 1..100 {
            assert!(sense(&s, Pose::new(0, 0), Agent::R, t, &mut rng).value);
        }
    }

    #[test]
    fn sensor_frequencies() {
        let s = one_cell(true, ObsModel::new(0.9, 0.2).unwrap());
        let mut rng = s.sensing_rng();
        let n = 10_000;
        let hits = (0..n).filter(|&t| sense(&s, Pose::new(0, 0), Agent::R, t, &mut rng).value).count();
        assert!((hits as f64 / n as f64 - 0.9).abs() <= 0.01);

        let coin = one_cell(false, ObsModel::new(0.5, 0.5).unwrap());
        let mut rng = coin.sensing_rng();
        let hits = (0..n).filter(|&t| sense(&coin, Pose::new(0, 0), Agent::R, t, &mut rng).value).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() <= 0.02);
    }
}
