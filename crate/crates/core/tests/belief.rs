mod common;

use approx::assert_abs_diff_eq;
use common::{ref_belief, ref_seq_likelihood};
use mrac_core::belief::{Agent, CellBelief, ObsModel, Observation};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = ObsModel> {
    (0.55f64..0.99, 0.01f64..0.45).prop_map(|(d, f)| ObsModel::new(d, f).unwrap())
}

fn obs_seq(cells: usize, max_len: usize) -> impl Strategy<Value = Vec<Observation>> {
    prop::collection::vec((0..cells, any::<bool>(), any::<bool>()), 0..=max_len).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(t, (c, robot, value))| Observation::new(t as u32 + 1, if robot { Agent::Rp } else { Agent::R }, c, value))
            .collect()
    })
}

proptest! {
    #[test]
    fn update_then_downdate_is_identity(p in 0.01f64..0.99, value: bool, m in model()) {
        let b = CellBelief::uniform(1, p).unwrap();
        let o = Observation::new(1, Agent::R, 0, value);
        let back = b.bayes_update(&o, &m).unwrap().bayes_downdate(&o, &m).unwrap();
        prop_assert!((back.get(0) - p).abs() <= 1e-12);
    }

    #[test]
    fn history_fold_matches_odds_product(
        prior in prop::collection::vec(0.05f64..0.95, 4),
        obs in obs_seq(4, 8),
        m in model(),
    ) {
        let b = CellBelief::from_history(&CellBelief::new(prior.clone()).unwrap(), &obs, &m).unwrap();
        for (got, want) in b.probs().iter().zip(ref_belief(&prior, &obs, &m)) {
            prop_assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn history_fold_is_order_free(prior in prop::collection::vec(0.05f64..0.95, 3), obs in obs_seq(3, 6), m in model()) {
        let pb = CellBelief::new(prior).unwrap();
        let mut rev = obs.clone();
        rev.reverse();
        prop_assert_eq!(CellBelief::from_history(&pb, &obs, &m).unwrap(), CellBelief::from_history(&pb, &rev, &m).unwrap());
    }

    #[test]
    fn sequence_likelihood_matches_reference(prior in prop::collection::vec(0.05f64..0.95, 3), obs in obs_seq(3, 6), m in model()) {
        let b = CellBelief::new(prior.clone()).unwrap();
        prop_assert!((b.observation_likelihood(&obs, &m) - ref_seq_likelihood(&prior, &obs, &m)).abs() <= 1e-12);
    }

    #[test]
    fn sequence_likelihood_is_normalized(prior in prop::collection::vec(0.0f64..=1.0, 3), cells in prop::collection::vec(0usize..3, 1..=6), m in model()) {
        let b = CellBelief::new(prior).unwrap();
        let n = cells.len();
        let total: f64 = (0..1u32 << n)
            .map(|bits| {
                let seq: Vec<Observation> = cells
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| Observation::new(j as u32 + 1, Agent::R, c, bits >> j & 1 == 1))
                    .collect();
                b.observation_likelihood(&seq, &m)
            })
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn entropy_reward_is_bounded(probs in prop::collection::vec(0.0f64..=1.0, 1..20)) {
        let b = CellBelief::new(probs.clone()).unwrap();
        let rho = b.entropy_reward();
        prop_assert!(rho <= 0.0);
        prop_assert!(rho >= -(probs.len() as f64) * 2f64.ln() - 1e-12);
    }

    #[test]
    fn posteriors_stay_in_the_open_interval(p in 0.0f64..=1.0, value: bool, m in model()) {
        if let Some(q) = m.posterior(p, value) {
            prop_assert!(q > 0.0 && q < 1.0);
        }
    }
}

#[test]
fn max_entropy_reward() {
    for x in [1usize, 9, 100] {
        assert_abs_diff_eq!(CellBelief::uniform(x, 0.5).unwrap().entropy_reward(), -(x as f64) * 2f64.ln(), epsilon = 1e-12);
    }
}

#[test]
fn invalid_beliefs_and_cells() {
    assert!(CellBelief::new(vec![0.5, 1.2]).is_err());
    assert!(CellBelief::new(vec![f64::NAN]).is_err());
    let b = CellBelief::uniform(2, 0.5).unwrap();
    assert!(b.bayes_update(&Observation::new(1, Agent::R, 2, true), &ObsModel::default()).is_err());
    assert!(ObsModel::new(1.1, 0.2).is_err());
}

#[test]
fn impossible_reading_is_reported() {
    let m = ObsModel::new(1.0, 0.0).unwrap();
    let b = CellBelief::new(vec![0.0]).unwrap();
    assert!(b.bayes_update(&Observation::new(1, Agent::R, 0, true), &m).is_err());
    assert_eq!(b.observation_likelihood(&[Observation::new(1, Agent::R, 0, true)], &m), 0.0);
}
