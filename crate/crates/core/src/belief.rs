//! Factored Bernoulli occupancy beliefs.
//!
//! The state is a vector of independent binary cells, so a belief is just the
//! vector of per-cell occupancy marginals. Every operation here returns a new
//! value or mutates a value the caller owns; nothing is shared.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a grid cell in row-major order.
pub type CellId = usize;

/// Marginals are kept inside `[MARGINAL_FLOOR, 1 - MARGINAL_FLOOR]` after an
/// informative update so that the ratio form of the down-date stays defined.
pub const MARGINAL_FLOOR: f64 = 1e-12;

/// One of the two robots of the team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Agent {
    R = 0,
    Rp = 1,
}

impl Agent {
    pub const BOTH: [Agent; 2] = [Agent::R, Agent::Rp];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn peer(self) -> Agent {
        match self {
            Agent::R => Agent::Rp,
            Agent::Rp => Agent::R,
        }
    }
}

/// A binary reading of a single cell taken by one robot at one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub time: u32,
    pub robot: Agent,
    pub cell: CellId,
    pub value: bool,
}

impl Observation {
    pub fn new(time: u32, robot: Agent, cell: CellId, value: bool) -> Self {
        Self { time, robot, cell, value }
    }

    /// Total order shared by both agents: time, then robot, then cell.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        (self.time, self.robot, self.cell).cmp(&(other.time, other.robot, other.cell))
    }
}

pub fn sort_canonical(obs: &mut [Observation]) {
    obs.sort_by(Observation::canonical_cmp);
}

/// Two-parameter binary detector: `P(z=1|x=1)` and `P(z=1|x=0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsModel {
    pub p_detect: f64,
    pub p_false_alarm: f64,
}

impl Default for ObsModel {
    fn default() -> Self {
        Self { p_detect: 0.9, p_false_alarm: 0.2 }
    }
}

impl ObsModel {
    pub fn new(p_detect: f64, p_false_alarm: f64) -> Result<Self> {
        for (name, p) in [("p_detect", p_detect), ("p_false_alarm", p_false_alarm)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::input(format!("{name}={p} is not a probability")));
            }
        }
        Ok(Self { p_detect, p_false_alarm })
    }

    /// `P(z | x)` for a single cell.
    #[inline]
    pub fn likelihood(&self, value: bool, occupied: bool) -> f64 {
        let p1 = if occupied { self.p_detect } else { self.p_false_alarm };
        if value {
            p1
        } else {
            1.0 - p1
        }
    }

    /// `P(z)` for a cell whose occupancy marginal is `q`.
    #[inline]
    pub fn predictive(&self, q: f64, value: bool) -> f64 {
        self.likelihood(value, true) * q + self.likelihood(value, false) * (1.0 - q)
    }

    pub fn is_informative(&self) -> bool {
        self.p_detect != self.p_false_alarm
    }

    /// Posterior marginal after observing `value`, or `None` when the
    /// observation has zero probability under `q`.
    #[inline]
    pub fn posterior(&self, q: f64, value: bool) -> Option<f64> {
        if !self.is_informative() {
            return Some(q);
        }
        let num = self.likelihood(value, true) * q;
        let den = num + self.likelihood(value, false) * (1.0 - q);
        if den <= 0.0 {
            return None;
        }
        Some((num / den).clamp(MARGINAL_FLOOR, 1.0 - MARGINAL_FLOOR))
    }

    /// Inverse of [`ObsModel::posterior`] for unclamped marginals.
    pub fn prior_of(&self, posterior: f64, value: bool) -> Option<f64> {
        if !self.is_informative() {
            return Some(posterior);
        }
        let l1 = self.likelihood(value, true);
        let l0 = self.likelihood(value, false);
        if l1 <= 0.0 || l0 <= 0.0 {
            return None;
        }
        let num = posterior * l0;
        let den = num + (1.0 - posterior) * l1;
        if den <= 0.0 {
            return None;
        }
        let prior = num / den;
        (prior.is_finite() && (0.0..=1.0).contains(&prior)).then_some(prior)
    }
}

/// `p ln p + (1-p) ln (1-p)` with `0 ln 0 = 0`.
#[inline]
pub fn neg_entropy(p: f64) -> f64 {
    xlnx(p) + xlnx(1.0 - p)
}

#[inline]
fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Independent per-cell occupancy marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBelief {
    probs: Vec<f64>,
}

impl CellBelief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some((cell, p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::input(format!("cell {cell} has marginal {p} outside [0,1]")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(cells: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; cells])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn get(&self, cell: CellId) -> f64 {
        self.probs[cell]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn check_cell(&self, cell: CellId) -> Result<()> {
        if cell >= self.probs.len() {
            return Err(Error::CellOutOfRange { cell, cells: self.probs.len() });
        }
        Ok(())
    }

    pub fn update_in_place(&mut self, cell: CellId, value: bool, m: &ObsModel) -> Result<()> {
        self.check_cell(cell)?;
        let q = self.probs[cell];
        self.probs[cell] = m.posterior(q, value).ok_or(Error::DegenerateEvidence { cell, value })?;
        Ok(())
    }

    pub fn bayes_update(&self, o: &Observation, m: &ObsModel) -> Result<CellBelief> {
        let mut next = self.clone();
        next.update_in_place(o.cell, o.value, m)?;
        Ok(next)
    }

    /// Removes a previously incorporated observation.
    pub fn bayes_downdate(&self, o: &Observation, m: &ObsModel) -> Result<CellBelief> {
        self.check_cell(o.cell)?;
        let mut next = self.clone();
        next.probs[o.cell] = m.prior_of(self.probs[o.cell], o.value).ok_or(Error::InconsistentLedger { cell: o.cell })?;
        Ok(next)
    }

    /// Minus the entropy of the belief, in nats. Lies in `[-X ln 2, 0]`.
    pub fn entropy_reward(&self) -> f64 {
        self.probs.iter().map(|&p| neg_entropy(p)).sum()
    }

    /// Exact `P(seq | b)`: each factor is the predictive probability under the
    /// belief already updated by the earlier entries of the sequence, which
    /// handles repeated visits to one cell.
    pub fn observation_likelihood(&self, seq: &[Observation], m: &ObsModel) -> f64 {
        let mut overlay: Vec<(CellId, f64)> = Vec::new();
        let mut total = 1.0;
        for o in seq {
            let slot = overlay.iter().position(|(c, _)| *c == o.cell);
            let q = slot.map_or_else(|| self.probs[o.cell], |i| overlay[i].1);
            let p = m.predictive(q, o.value);
            total *= p;
            if total == 0.0 {
                return 0.0;
            }
            let post = m.posterior(q, o.value).unwrap_or(q);
            match slot {
                Some(i) => overlay[i].1 = post,
                None => overlay.push((o.cell, post)),
            }
        }
        total
    }

    /// Folds the observations into `prior` in canonical order, so the result
    /// depends only on the set of observations and is bit-identical on both
    /// agents.
    pub fn from_history(prior: &CellBelief, observations: &[Observation], m: &ObsModel) -> Result<CellBelief> {
        let mut sorted = observations.to_vec();
        sort_canonical(&mut sorted);
        let mut b = prior.clone();
        for o in &sorted {
            b.update_in_place(o.cell, o.value, m)?;
        }
        Ok(b)
    }
}
