//! The solvers at `f32`, against their `f64` results, and model file round trips.

use riskmdp::augmented::entropic_total;
use riskmdp::ergodic::ergodic_rvi;
use riskmdp::fixtures;
use riskmdp::io;
use riskmdp::mdp::FiniteMdp;
use riskmdp::neutral::{policy_iteration, value_iteration};
use riskmdp::oce::UtilitySpec;
use riskmdp::random::{random_mdp, RandomMdpSpec};
use riskmdp::recursive::{entropic_fast_path, solve_recursive};

fn close(a: &[f32], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(&x, &y)| (x as f64 - y).abs() <= tol * (1.0 + y.abs()))
}

#[test]
fn jaquette_in_single_precision() {
    let m64 = fixtures::jaquette();
    let m: FiniteMdp<f32> = m64.cast();
    let pi = policy_iteration(&m).unwrap();
    assert!((pi.value[0] - 8.0 / 3.0).abs() < 1e-5);
    let vi = value_iteration(&m, 1e-5, 10_000).unwrap();
    assert!(close(&vi.value, &policy_iteration(&m64).unwrap().value, 1e-4));

    let rec = entropic_fast_path(&m, 1.0, 1e-5).unwrap();
    let rec64 = entropic_fast_path(&m64, 1.0, 1e-12).unwrap();
    assert!(close(&rec.value, &rec64.value, 1e-4));
    assert_eq!(rec.policy, rec64.policy);
    let generic = solve_recursive(&m, &UtilitySpec::Cvar { alpha: 0.2 }, 1e-5).unwrap();
    let generic64 = solve_recursive(&m64, &UtilitySpec::Cvar { alpha: 0.2 }, 1e-12).unwrap();
    assert!(close(&generic.value, &generic64.value, 1e-4));

    let total = entropic_total(&m, 1.0, 30).unwrap();
    let total64 = entropic_total(&m64, 1.0, 30).unwrap();
    assert!(close(total.value(), total64.value(), 1e-4));
    assert_eq!(total.stage_policy(&m, 0), total64.stage_policy(&m64, 0));
}

#[test]
fn ergodic_in_single_precision() {
    let m: FiniteMdp<f32> = fixtures::invariant_model().cast();
    let s = ergodic_rvi(&m, 1.0, 1e-5, 0).unwrap();
    assert!((s.xi as f64 - (0.5 * (1.0 + 1f64.exp())).ln()).abs() < 1e-5);
}

#[test]
fn random_models_survive_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let spec = RandomMdpSpec { with_costs: seed % 2 == 0, ..Default::default() };
        let m = random_mdp(&spec, seed);
        let path = dir.path().join(format!("m{seed}.json"));
        io::save(&m, &path).unwrap();
        let back = io::load(&path).unwrap();
        assert_eq!(back.states, m.states);
        assert_eq!(back.actions, m.actions);
        assert_eq!(back.discount, m.discount);
        for (a, b) in back.choices.iter().flatten().zip(m.choices.iter().flatten()) {
            assert_eq!((a.action, a.reward, a.cost), (b.action, b.reward, b.cost));
            for (p, q) in a.successors.iter().zip(&b.successors) {
                assert_eq!(p.0, q.0);
                assert!((p.1 - q.1).abs() <= 1e-15);
            }
        }
    }
}
