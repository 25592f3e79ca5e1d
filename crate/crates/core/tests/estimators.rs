mod common;

use common::{random_instance, ref_cumulative};
use mrac_core::belief::CellBelief;
use mrac_core::estimators::{estimate_cumulative_likelihood, hoeffding_half_width, sample_observations, sample_states, GaussianToy};
use mrac_core::planning::{ActionIndex, ActionSpace, ObsSeqSpace, Planner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sampled_cumulative_likelihood_is_covered() {
    let actions = ActionSpace::new(1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 200;
    let h = hoeffding_half_width(n, 0.05).unwrap();
    let (mut runs, mut covered) = (0, 0);
    while runs < 150 {
        let inst = random_instance(&mut rng, 3, 3, 1, 0, 3);
        let (cl, ok) = ref_cumulative(inst.grid, inst.poses, &inst.prior, &inst.common, &inst.unshared[1], &inst.model);
        if !ok {
            continue;
        }
        runs += 1;
        let pl = Planner::new(inst.grid, inst.model, inst.poses, &actions);
        let cb = CellBelief::from_history(&inst.prior_belief(), &inst.common, &inst.model).unwrap();
        let slots = ObsSeqSpace::of_observations(&inst.unshared[1]).slots().to_vec();
        let states = sample_states(&cb, &slots, n, &mut rng).unwrap();
        let obs = sample_observations(&states, 1, &inst.model, &mut rng).unwrap();
        let est = estimate_cumulative_likelihood(&obs, |z| pl.favored_action(&cb, z)).unwrap();
        assert!((est.sum() - 1.0).abs() < 1e-9);
        let leader = ActionIndex(cl.iter().enumerate().fold(0, |b, (i, &v)| if v > cl[b] + 1e-12 { i } else { b }));
        if (est.get(leader) - cl[leader.0]).abs() <= h {
            covered += 1;
        }
    }
    assert!(covered as f64 / runs as f64 >= 0.93, "{covered}/{runs}");
}

#[test]
fn gaussian_toy_converges() {
    let g = GaussianToy::new(0.5, 1.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let zs = [0.2, 0.9];
    let exact = g.exact_seq_likelihood(&zs);
    let xs = g.sample_states(100_000, &mut rng).unwrap();
    assert!((g.estimate_seq_likelihood(&xs, &zs) - exact).abs() < 0.01);
    // numerical integral over x as an independent check of the closed form
    let dx = 1e-3;
    let integral: f64 = (-8000..8000)
        .map(|k| {
            let x = 0.5 + k as f64 * dx;
            let px = (-(x - 0.5f64).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            px * zs.iter().map(|&z| g.obs_density(z, x)).product::<f64>() * dx
        })
        .sum();
    assert!((integral - exact).abs() < 1e-9);
    let z = g.sample_observations(1.0, 5, &mut rng);
    assert_eq!(z.len(), 5);
}
