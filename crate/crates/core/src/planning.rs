//! Joint actions, the open-loop entropy objective, the shared argmax and the
//! partition of a missing-observation space by favored action.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::belief::{neg_entropy, Agent, CellBelief, CellId, ObsModel, Observation};
use crate::error::{Error, Result};
use crate::scenario::{move_pose, Grid, Pose, Primitive};

/// Objective differences at or below this are ties, resolved by the smaller
/// [`ActionIndex`].
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of missing-observation slots that may be
/// enumerated (`2^12` realizations).
pub const DEFAULT_SLOT_CAP: usize = 12;

const MAX_HORIZON: usize = 3;

/// Position of a joint action in the canonical enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionIndex(pub usize);

/// One primitive per robot for each of the `L` planning steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction {
    steps: Vec<[Primitive; 2]>,
}

impl JointAction {
    pub fn new(steps: Vec<[Primitive; 2]>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::input("a joint action needs at least one step"));
        }
        Ok(Self { steps })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[[Primitive; 2]] {
        &self.steps
    }

    /// The primitive sequence of one robot.
    pub fn component(&self, agent: Agent) -> Vec<Primitive> {
        self.steps.iter().map(|s| s[agent.index()]).collect()
    }

    /// What `agent` executes now.
    pub fn first(&self, agent: Agent) -> Primitive {
        self.steps[0][agent.index()]
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            write!(f, "{}", s[0])?;
        }
        write!(f, "/")?;
        for s in &self.steps {
            write!(f, "{}", s[1])?;
        }
        Ok(())
    }
}

/// The canonical enumeration of all `16^L` joint actions. Per step the code
/// is `4 * prim_r + prim_r'`; the first step is the most significant digit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    horizon: usize,
    actions: Vec<JointAction>,
}

impl ActionSpace {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon > MAX_HORIZON {
            return Err(Error::input(format!("planning horizon must be in 1..={MAX_HORIZON}, got {horizon}")));
        }
        let total = 16usize.pow(horizon as u32);
        let actions = (0..total)
            .map(|i| {
                let steps = (0..horizon)
                    .map(|l| {
                        let digit = i / 16usize.pow((horizon - 1 - l) as u32) % 16;
                        [Primitive::ALL[digit / 4], Primitive::ALL[digit % 4]]
                    })
                    .collect();
                JointAction { steps }
            })
            .collect();
        Ok(Self { horizon, actions })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, a: ActionIndex) -> &JointAction {
        &self.actions[a.0]
    }

    pub fn index_of(&self, action: &JointAction) -> Option<ActionIndex> {
        if action.horizon() != self.horizon {
            return None;
        }
        let code = action.steps.iter().fold(0usize, |acc, s| acc * 16 + s[0].index() * 4 + s[1].index());
        Some(ActionIndex(code))
    }

    pub fn indices(&self) -> impl Iterator<Item = ActionIndex> {
        (0..self.actions.len()).map(ActionIndex)
    }
}

/// Index of the maximum under the shared tie rule: a later candidate replaces
/// the current best only if it is larger by more than `tol`.
pub fn argmax_with_ties(values: &[f64], tol: f64) -> Option<ActionIndex> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if v > values[b] + tol => best = Some(i),
            _ => {}
        }
    }
    best.map(ActionIndex)
}

/// Everything that is common knowledge at a planning instant: the grid, the
/// sensor, both poses and the candidate actions. Paths of every candidate are
/// precomputed.
#[derive(Debug, Clone)]
pub struct Planner<'a> {
    grid: Grid,
    model: ObsModel,
    poses: [Pose; 2],
    actions: &'a ActionSpace,
    slot_cap: usize,
    paths: Vec<Vec<[CellId; 2]>>,
    target_cells: Vec<CellId>,
}

impl<'a> Planner<'a> {
    pub fn new(grid: Grid, model: ObsModel, poses: [Pose; 2], actions: &'a ActionSpace) -> Self {
        let paths: Vec<Vec<[CellId; 2]>> = actions
            .actions
            .iter()
            .map(|a| {
                let mut cur = poses;
                a.steps
                    .iter()
                    .map(|s| {
                        for agent in Agent::BOTH {
                            cur[agent.index()] = move_pose(&grid, cur[agent.index()], s[agent.index()]);
                        }
                        [grid.cell(cur[0]), grid.cell(cur[1])]
                    })
                    .collect()
            })
            .collect();
        let mut target_cells: Vec<CellId> = paths.iter().flatten().flatten().copied().collect();
        target_cells.sort_unstable();
        target_cells.dedup();
        Self { grid, model, poses, actions, slot_cap: DEFAULT_SLOT_CAP, paths, target_cells }
    }

    pub fn with_slot_cap(mut self, cap: usize) -> Self {
        self.slot_cap = cap;
        self
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn model(&self) -> &ObsModel {
        &self.model
    }

    pub fn poses(&self) -> [Pose; 2] {
        self.poses
    }

    pub fn actions(&self) -> &'a ActionSpace {
        self.actions
    }

    pub fn slot_cap(&self) -> usize {
        self.slot_cap
    }

    /// Cells observed by some candidate action. The argmax depends on the
    /// belief only through these marginals.
    pub fn target_cells(&self) -> &[CellId] {
        &self.target_cells
    }

    /// `Σ_{l=1..L} E[ρ(b_{k+l})] - L ρ(b_k)`: the action-dependent part of the
    /// objective, computed exactly over all `4^L` joint observation outcomes.
    pub fn gain(&self, b: &CellBelief, a: ActionIndex) -> f64 {
        let mut overlay = Vec::with_capacity(2 * self.actions.horizon());
        self.expected_delta(b, &self.paths[a.0], &mut overlay)
    }

    fn expected_delta(&self, b: &CellBelief, path: &[[CellId; 2]], overlay: &mut Vec<(CellId, f64)>) -> f64 {
        let Some((&[c0, c1], rest)) = path.split_first() else {
            return 0.0;
        };
        let m = &self.model;
        let mut acc = 0.0;
        for z0 in [false, true] {
            let q0 = lookup(b, overlay, c0);
            let p0 = m.predictive(q0, z0);
            if p0 <= 0.0 {
                continue;
            }
            let saved0 = set(overlay, c0, m.posterior(q0, z0).unwrap_or(q0));
            for z1 in [false, true] {
                let q1 = lookup(b, overlay, c1);
                let p1 = m.predictive(q1, z1);
                if p1 <= 0.0 {
                    continue;
                }
                let saved1 = set(overlay, c1, m.posterior(q1, z1).unwrap_or(q1));
                let delta: f64 = overlay.iter().map(|&(c, p)| neg_entropy(p) - neg_entropy(b.get(c))).sum();
                acc += p0 * p1 * (delta + self.expected_delta(b, rest, overlay));
                restore(overlay, c1, saved1);
            }
            restore(overlay, c0, saved0);
        }
        acc
    }

    /// Open-loop objective `J(b, a)`.
    pub fn evaluate_objective(&self, b: &CellBelief, a: ActionIndex) -> f64 {
        self.actions.horizon() as f64 * b.entropy_reward() + self.gain(b, a)
    }

    pub fn gains(&self, b: &CellBelief) -> Vec<f64> {
        self.actions.indices().map(|a| self.gain(b, a)).collect()
    }

    /// Argmax of the objective under the shared tie rule. Comparing gains is
    /// equivalent because `L ρ(b)` is common to every candidate.
    pub fn best_action(&self, b: &CellBelief) -> ActionIndex {
        argmax_with_ties(&self.gains(b), TIE_TOLERANCE).expect("action spaces are never empty")
    }

    /// Best action over an explicit candidate subset.
    pub fn best_among(&self, b: &CellBelief, candidates: &[ActionIndex]) -> Result<ActionIndex> {
        let gains: Vec<f64> = candidates.iter().map(|&a| self.gain(b, a)).collect();
        argmax_with_ties(&gains, TIE_TOLERANCE).map(|i| candidates[i.0]).ok_or_else(|| Error::input("empty candidate action set"))
    }

    /// Action preferred after conditioning `b_common` on the realization `z`.
    pub fn favored_action(&self, b_common: &CellBelief, z: &[Observation]) -> Result<ActionIndex> {
        let b = CellBelief::from_history(b_common, z, &self.model)?;
        Ok(self.best_action(&b))
    }
}

fn lookup(b: &CellBelief, overlay: &[(CellId, f64)], cell: CellId) -> f64 {
    overlay.iter().rev().find(|(c, _)| *c == cell).map_or_else(|| b.get(cell), |&(_, p)| p)
}

fn set(overlay: &mut Vec<(CellId, f64)>, cell: CellId, p: f64) -> Option<f64> {
    match overlay.iter_mut().find(|(c, _)| *c == cell) {
        Some(entry) => Some(std::mem::replace(&mut entry.1, p)),
        None => {
            overlay.push((cell, p));
            None
        }
    }
}

fn restore(overlay: &mut Vec<(CellId, f64)>, cell: CellId, saved: Option<f64>) {
    match saved {
        Some(p) => {
            if let Some(entry) = overlay.iter_mut().find(|(c, _)| *c == cell) {
                entry.1 = p;
            }
        }
        None => {
            if let Some(pos) = overlay.iter().position(|(c, _)| *c == cell) {
                overlay.remove(pos);
            }
        }
    }
}

/// A missing observation: who observed which cell when, value unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Slot {
    pub time: u32,
    pub robot: Agent,
    pub cell: CellId,
}

impl Slot {
    pub fn of(o: &Observation) -> Self {
        Self { time: o.time, robot: o.robot, cell: o.cell }
    }

    pub fn with_value(self, value: bool) -> Observation {
        Observation::new(self.time, self.robot, self.cell, value)
    }
}

/// Cartesian product of binary values over a list of slots. Realization `i`
/// assigns slot `j` the bit `n-1-j` of `i`, so realizations run in
/// lexicographic order with the earliest slot most significant and 0 before 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsSeqSpace {
    slots: Vec<Slot>,
}

impl ObsSeqSpace {
    pub fn new(mut slots: Vec<Slot>) -> Self {
        slots.sort();
        Self { slots }
    }

    pub fn of_observations(obs: &[Observation]) -> Self {
        Self::new(obs.iter().map(Slot::of).collect())
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Number of realizations, `2^len`.
    pub fn size(&self) -> u64 {
        1u64 << self.slots.len()
    }

    pub fn realization(&self, i: u64) -> Vec<Observation> {
        let n = self.slots.len();
        self.slots.iter().enumerate().map(|(j, s)| s.with_value(i >> (n - 1 - j) & 1 == 1)).collect()
    }

    /// Inverse of [`ObsSeqSpace::realization`] for observations on exactly these slots.
    pub fn index_of(&self, obs: &[Observation]) -> Option<u64> {
        if obs.len() != self.slots.len() {
            return None;
        }
        let mut sorted = obs.to_vec();
        sorted.sort_by(Observation::canonical_cmp);
        let mut idx = 0u64;
        for (s, o) in self.slots.iter().zip(&sorted) {
            if *s != Slot::of(o) {
                return None;
            }
            idx = idx << 1 | o.value as u64;
        }
        Some(idx)
    }

    pub fn contains(&self, slot: &Slot) -> bool {
        self.slots.binary_search(slot).is_ok()
    }

    pub fn remove(&mut self, slot: &Slot) -> bool {
        match self.slots.binary_search(slot) {
            Ok(i) => {
                self.slots.remove(i);
                true
            }
            Err(_) => false,
        }
    }

    pub fn insert(&mut self, slot: Slot) {
        if let Err(i) = self.slots.binary_search(&slot) {
            self.slots.insert(i, slot);
        }
    }
}

type SlotKey = (u32, Agent);

#[derive(Debug, Clone, Copy)]
enum Entry {
    Known(bool),
    Slot(usize),
}

/// Evaluates realizations of a slot space against a common history: the
/// conditional belief `P(x | common, z)`, its favored action, and the
/// likelihood `P(z | common)`.
///
/// Conditional beliefs are rebuilt per touched cell in canonical order, so
/// the belief for a realization is bit-identical to the one the peer builds
/// from its actual history.
#[derive(Debug)]
pub struct RealizationEvaluator<'p, 'a> {
    planner: &'p Planner<'a>,
    prior: CellBelief,
    common_belief: CellBelief,
    space: ObsSeqSpace,
    templates: Vec<(CellId, Vec<Entry>)>,
    target_positions: Vec<usize>,
    memo: HashMap<Vec<u64>, ActionIndex>,
    evaluated: usize,
}

impl<'p, 'a> RealizationEvaluator<'p, 'a> {
    pub fn new(planner: &'p Planner<'a>, prior: &CellBelief, common: &[Observation], space: ObsSeqSpace) -> Result<Self> {
        if space.len() > planner.slot_cap() {
            return Err(Error::EnumerationLimit { slots: space.len(), cap: planner.slot_cap() });
        }
        let model = planner.model();
        let common_belief = CellBelief::from_history(prior, common, model)?;
        let mut keyed: BTreeMap<CellId, Vec<(SlotKey, Entry)>> = BTreeMap::new();
        for (j, s) in space.slots().iter().enumerate() {
            keyed.entry(s.cell).or_default().push(((s.time, s.robot), Entry::Slot(j)));
        }
        for o in common {
            if let Some(list) = keyed.get_mut(&o.cell) {
                list.push(((o.time, o.robot), Entry::Known(o.value)));
            }
        }
        let templates: Vec<(CellId, Vec<Entry>)> = keyed
            .into_iter()
            .map(|(cell, mut list)| {
                list.sort_by_key(|(k, _)| *k);
                (cell, list.into_iter().map(|(_, e)| e).collect())
            })
            .collect();
        let target_positions = planner.target_cells().iter().filter_map(|c| templates.iter().position(|(tc, _)| tc == c)).collect();
        Ok(Self { planner, prior: prior.clone(), common_belief, space, templates, target_positions, memo: HashMap::new(), evaluated: 0 })
    }

    pub fn space(&self) -> &ObsSeqSpace {
        &self.space
    }

    pub fn size(&self) -> u64 {
        self.space.size()
    }

    pub fn common_belief(&self) -> &CellBelief {
        &self.common_belief
    }

    /// Number of realizations whose favored action has been computed.
    pub fn evaluated(&self) -> usize {
        self.evaluated
    }

    fn refold(&self, cell: CellId, entries: &[Entry], i: u64) -> f64 {
        let n = self.space.len();
        let model = self.planner.model();
        entries.iter().fold(self.prior.get(cell), |q, e| {
            let value = match *e {
                Entry::Known(v) => v,
                Entry::Slot(j) => i >> (n - 1 - j) & 1 == 1,
            };
            // a zero-probability realization keeps the marginal; its
            // likelihood is zero so it never carries weight
            model.posterior(q, value).unwrap_or(q)
        })
    }

    /// Conditional belief `P(x | common, z_i)`.
    pub fn belief(&self, i: u64) -> CellBelief {
        let mut probs = self.common_belief.probs().to_vec();
        for (cell, entries) in &self.templates {
            probs[*cell] = self.refold(*cell, entries, i);
        }
        CellBelief::new(probs).expect("folded marginals stay in [0,1]")
    }

    /// Favored action of realization `i`.
    pub fn favored(&mut self, i: u64) -> ActionIndex {
        self.evaluated += 1;
        let key: Vec<u64> = self
            .target_positions
            .iter()
            .map(|&t| {
                let (cell, entries) = &self.templates[t];
                self.refold(*cell, entries, i).to_bits()
            })
            .collect();
        if let Some(&a) = self.memo.get(&key) {
            return a;
        }
        let a = self.planner.best_action(&self.belief(i));
        self.memo.insert(key, a);
        a
    }

    /// `P(z_i | common)`, exact by sequential per-cell marginalization.
    pub fn likelihood(&self, i: u64) -> f64 {
        self.common_belief.observation_likelihood(&self.space.realization(i), self.planner.model())
    }
}

/// Realizations grouped by the action they favor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsPartition {
    pub favored: Vec<ActionIndex>,
    pub by_action: BTreeMap<ActionIndex, Vec<u64>>,
}

impl ObsPartition {
    /// `Some(a)` iff every realization favors `a`.
    pub fn consistent_for(&self) -> Option<ActionIndex> {
        match self.by_action.len() {
            1 => self.by_action.keys().next().copied(),
            _ => None,
        }
    }

    pub fn is_consistent_for(&self, a: ActionIndex) -> bool {
        self.consistent_for() == Some(a)
    }
}

/// Partitions every realization of the evaluator's space by favored action.
pub fn consistent_obs_sets(eval: &mut RealizationEvaluator<'_, '_>) -> ObsPartition {
    let favored: Vec<ActionIndex> = (0..eval.size()).map(|i| eval.favored(i)).collect();
    let mut by_action: BTreeMap<ActionIndex, Vec<u64>> = BTreeMap::new();
    for (i, a) in favored.iter().enumerate() {
        by_action.entry(*a).or_default().push(i as u64);
    }
    ObsPartition { favored, by_action }
}
