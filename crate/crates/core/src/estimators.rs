//! Sampled estimators for when exact enumeration is out of reach: state and
//! observation sampling, observation-sequence likelihood, cumulative
//! likelihood as a favored-sample ratio, and Hoeffding intervals.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::belief::{CellBelief, ObsModel, Observation};
use crate::error::{Error, Result};
use crate::planning::{ActionIndex, Slot};
use crate::relaxed::CumulativeLikelihoodTable;

/// Joint occupancy samples at the cells of a list of slots. Targets are
/// static, so slots on the same cell share a value within a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSampleSet {
    slots: Vec<Slot>,
    samples: Vec<Vec<bool>>,
}

impl StateSampleSet {
    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// One occupancy value per slot, per sample.
    pub fn samples(&self) -> &[Vec<bool>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn sample_states<R: Rng + ?Sized>(b: &CellBelief, slots: &[Slot], n: usize, rng: &mut R) -> Result<StateSampleSet> {
    if n == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    if let Some(s) = slots.iter().find(|s| s.cell >= b.len()) {
        return Err(Error::CellOutOfRange { cell: s.cell, cells: b.len() });
    }
    let mut cells: Vec<usize> = slots.iter().map(|s| s.cell).collect();
    cells.sort_unstable();
    cells.dedup();
    let samples = (0..n)
        .map(|_| {
            let draw: BTreeMap<usize, bool> = cells.iter().map(|&c| (c, rng.random::<f64>() < b.get(c))).collect();
            slots.iter().map(|s| draw[&s.cell]).collect()
        })
        .collect();
    Ok(StateSampleSet { slots: slots.to_vec(), samples })
}

/// Mean over state samples of the product of per-slot observation
/// likelihoods. `seq` must hold one observation per slot, in slot order.
pub fn estimate_seq_likelihood(samples: &StateSampleSet, seq: &[Observation], m: &ObsModel) -> Result<f64> {
    if seq.len() != samples.slots.len() || seq.iter().zip(&samples.slots).any(|(o, s)| Slot::of(o) != *s) {
        return Err(Error::input("observation sequence does not match the sampled slots"));
    }
    let total: f64 = samples.samples.iter().map(|x| seq.iter().zip(x).map(|(o, &occ)| m.likelihood(o.value, occ)).product::<f64>()).sum();
    Ok(total / samples.len() as f64)
}

/// `N_Z` observation sequences per state sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsSampleSet {
    per_state: Vec<Vec<Vec<Observation>>>,
}

impl ObsSampleSet {
    pub fn per_state(&self) -> &[Vec<Vec<Observation>>] {
        &self.per_state
    }

    pub fn total(&self) -> usize {
        self.per_state.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Observation]> {
        self.per_state.iter().flatten().map(Vec::as_slice)
    }
}

pub fn sample_observations<R: Rng + ?Sized>(states: &StateSampleSet, n_z: usize, m: &ObsModel, rng: &mut R) -> Result<ObsSampleSet> {
    if n_z == 0 {
        return Err(Error::input("observation samples per state must be at least 1"));
    }
    let per_state = states
        .samples
        .iter()
        .map(|x| {
            (0..n_z)
                .map(|_| states.slots.iter().zip(x).map(|(s, &occ)| s.with_value(rng.random::<f64>() < m.likelihood(true, occ))).collect())
                .collect()
        })
        .collect();
    Ok(ObsSampleSet { per_state })
}

/// Fraction of sampled sequences favoring each action.
pub fn estimate_cumulative_likelihood<F>(obs: &ObsSampleSet, mut favored: F) -> Result<CumulativeLikelihoodTable>
where
    F: FnMut(&[Observation]) -> Result<ActionIndex>,
{
    let total = obs.total();
    if total == 0 {
        return Err(Error::input("no observation samples"));
    }
    let mut counts: BTreeMap<ActionIndex, usize> = BTreeMap::new();
    for seq in obs.iter() {
        *counts.entry(favored(seq)?).or_insert(0) += 1;
    }
    CumulativeLikelihoodTable::from_values(counts.into_iter().map(|(a, c)| (a, c as f64 / total as f64)).collect())
}

pub fn hoeffding_half_width(n: usize, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("delta must be in (0,1), got {delta}")));
    }
    Ok(((2.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Two-sided interval around a mean of `n` i.i.d. `[0,1]` summands, clipped
/// to `[0,1]`.
pub fn hoeffding_interval(estimate: f64, n: usize, delta: f64) -> Result<(f64, f64)> {
    let h = hoeffding_half_width(n, delta)?;
    Ok(((estimate - h).max(0.0), (estimate + h).min(1.0)))
}

/// Static scalar state `x ~ N(mean, var)` observed as `z_t ~ N(x, obs_var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianToy {
    pub mean: f64,
    pub var: f64,
    pub obs_var: f64,
}

impl GaussianToy {
    pub fn new(mean: f64, var: f64, obs_var: f64) -> Result<Self> {
        if !(var > 0.0 && obs_var > 0.0 && mean.is_finite()) {
            return Err(Error::input("variances must be positive and the mean finite"));
        }
        Ok(Self { mean, var, obs_var })
    }

    pub fn sample_states<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::input("sample count must be at least 1"));
        }
        let d = Normal::new(self.mean, self.var.sqrt()).map_err(|e| Error::input(e.to_string()))?;
        Ok((0..n).map(|_| d.sample(rng)).collect())
    }

    pub fn sample_observations<R: Rng + ?Sized>(&self, x: f64, len: usize, rng: &mut R) -> Vec<f64> {
        let d = Normal::new(x, self.obs_var.sqrt()).expect("positive observation variance");
        (0..len).map(|_| d.sample(rng)).collect()
    }

    pub fn obs_density(&self, z: f64, x: f64) -> f64 {
        (-(z - x).powi(2) / (2.0 * self.obs_var)).exp() / (2.0 * PI * self.obs_var).sqrt()
    }

    /// Sampled estimate of `p(z_1..z_n)`.
    pub fn estimate_seq_likelihood(&self, samples: &[f64], zs: &[f64]) -> f64 {
        samples.iter().map(|&x| zs.iter().map(|&z| self.obs_density(z, x)).product::<f64>()).sum::<f64>() / samples.len() as f64
    }

    /// Exact `p(z_1..z_n)`: a normal with covariance `var·11ᵀ + obs_var·I`.
    pub fn exact_seq_likelihood(&self, zs: &[f64]) -> f64 {
        let n = zs.len() as f64;
        if zs.is_empty() {
            return 1.0;
        }
        let s = self.obs_var + n * self.var;
        let d: Vec<f64> = zs.iter().map(|z| z - self.mean).collect();
        let sum: f64 = d.iter().sum();
        let sq: f64 = d.iter().map(|v| v * v).sum();
        let quad = (sq - self.var * sum * sum / s) / self.obs_var;
        let log_det = (n - 1.0) * self.obs_var.ln() + s.ln();
        (-0.5 * (n * (2.0 * PI).ln() + log_det + quad)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Agent;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn slot(t: u32, cell: usize) -> Slot {
        Slot { time: t, robot: Agent::Rp, cell }
    }

    #[test]
    fn hoeffding_values() {
        assert_abs_diff_eq!(hoeffding_half_width(200, 0.05).unwrap(), 0.096033, epsilon = 1e-6);
        assert!(hoeffding_half_width(100_000_000, 0.05).unwrap() < 1e-3);
        let (lo, hi) = hoeffding_interval(0.98, 738, 0.05).unwrap();
        assert_abs_diff_eq!(lo, 0.98 - hoeffding_half_width(738, 0.05).unwrap(), epsilon = 1e-15);
        assert_eq!(hi, 1.0);
        assert!(hoeffding_interval(0.5, 10, 0.0).is_err());
        assert!(hoeffding_interval(0.5, 0, 0.1).is_err());
    }

    #[test]
    fn deterministic_belief_samples() {
        let b = CellBelief::new(vec![1.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_states(&b, &[slot(1, 0), slot(2, 1), slot(3, 0)], 50, &mut rng).unwrap();
        assert!(s.samples().iter().all(|x| x == &vec![true, false, true]));
        let m = ObsModel::default();
        let seq =
            [Observation::new(1, Agent::Rp, 0, true), Observation::new(2, Agent::Rp, 1, false), Observation::new(3, Agent::Rp, 0, false)];
        assert_abs_diff_eq!(estimate_seq_likelihood(&s, &seq, &m).unwrap(), 0.9 * 0.8 * 0.1, epsilon = 1e-15);
        assert!(sample_states(&b, &[], 0, &mut rng).is_err());
    }

    #[test]
    fn empty_sequence_has_unit_likelihood() {
        let b = CellBelief::uniform(2, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_states(&b, &[], 10, &mut rng).unwrap();
        assert_eq!(estimate_seq_likelihood(&s, &[], &ObsModel::default()).unwrap(), 1.0);
        assert_eq!(GaussianToy::new(0.0, 1.0, 1.0).unwrap().exact_seq_likelihood(&[]), 1.0);
    }

    #[test]
    fn ratio_table() {
        let b = CellBelief::uniform(1, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_states(&b, &[slot(1, 0)], 200, &mut rng).unwrap();
        let obs = sample_observations(&s, 1, &ObsModel::default(), &mut rng).unwrap();
        let mut k = 0;
        let t = estimate_cumulative_likelihood(&obs, |_| {
            k += 1;
            Ok(ActionIndex(if k <= 50 { 2 } else { 7 }))
        })
        .unwrap();
        assert_eq!(t.get(ActionIndex(2)), 0.25);
        assert_eq!(t.get(ActionIndex(7)), 0.75);
        let all = estimate_cumulative_likelihood(&obs, |_| Ok(ActionIndex(3))).unwrap();
        assert_eq!(all.get(ActionIndex(3)), 1.0);
    }

    #[test]
    fn gaussian_density_single_observation() {
        let g = GaussianToy::new(1.0, 2.0, 0.5).unwrap();
        // one observation is N(mean, var + obs_var)
        let z: f64 = 0.3;
        let v = 2.5;
        let expected = (-(z - 1.0).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        assert_abs_diff_eq!(g.exact_seq_likelihood(&[z]), expected, epsilon = 1e-14);
        assert!(GaussianToy::new(0.0, 0.0, 1.0).is_err());
    }
}
