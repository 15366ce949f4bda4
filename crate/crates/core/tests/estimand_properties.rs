//! Structural properties of the causal estimands: sign laws implied by the
//! hazard model, the exact two-person reduction of the controlled outcome,
//! and the equivalence of observed and exposure-marginalized outcomes.

use contagion_core::cohort::{Covariates, InfectionHistory};
use contagion_core::estimands::{
    contagion_effect, contagion_effect_controlled, controlled_outcome, infectiousness_effect,
    infectiousness_effect_controlled, marginalized_outcome, susceptibility_effect,
    susceptibility_effect_controlled, McSettings,
};
use contagion_core::hazard::{BaselineHazard, ModelParams};
use contagion_core::rng::substream;
use contagion_core::sim::simulate_cluster;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_baseline(rng: &mut ChaCha8Rng, allow_zero: bool) -> BaselineHazard {
    match rng.random_range(0..3) {
        0 => BaselineHazard::Constant {
            rate: if allow_zero && rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(0.05..4.0)
            },
        },
        1 => BaselineHazard::ExpDecay {
            scale: rng.random_range(0.5..8.0),
            decay: rng.random_range(0.0..2.0),
        },
        _ => BaselineHazard::Seasonal {
            amplitude: rng.random_range(0.05..2.0),
            phase: rng.random_range(-3.0..3.0),
        },
    }
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    ModelParams {
        beta1: rng.random_range(-2.0..1.0),
        beta2: rng.random_range(-2.0..1.0),
        theta1: vec![rng.random_range(-0.5..0.5)],
        theta2: vec![rng.random_range(-0.5..0.5)],
        alpha: random_baseline(rng, false),
        gamma: random_baseline(rng, false),
    }
}

#[test]
fn controlled_sign_laws_hold_exactly() {
    let mut rng = substream(61, 0);
    for rep in 0..100 {
        let mut p = random_params(&mut rng);
        let l = Covariates::from_rows(vec![
            vec![rng.random_range(-1.0..1.0)],
            vec![rng.random_range(-1.0..1.0)],
            vec![rng.random_range(-1.0..1.0)],
        ])
        .unwrap();
        let x: Vec<bool> = (0..3).map(|_| rng.random_bool(0.5)).collect();
        let t = rng.random_range(0.5..1.5);
        let t1 = rng.random_range(0.05..0.3);
        let t2 = rng.random_range(0.35..0.45);

        // Contagion: earlier infections raise risk whenever gamma > 0.
        let earlier = InfectionHistory::from_events([(1, t1), (2, t2)]).unwrap();
        let later = InfectionHistory::from_events([(1, t1 + 0.1), (2, t2 + 0.1)]).unwrap();
        let ce = contagion_effect_controlled(t, 0, &x, &earlier, &later, &l, &p).unwrap();
        assert!(ce > 0.0, "rep {rep}: CE {ce} not positive");

        // Susceptibility: sign equals the sign of beta1.
        for beta1 in [
            rng.random_range(-2.0..-0.05),
            0.0,
            rng.random_range(0.05..1.0),
        ] {
            p.beta1 = beta1;
            let se = susceptibility_effect_controlled(t, 0, &x, &earlier, &l, &p).unwrap();
            assert_eq!(
                se.partial_cmp(&0.0),
                beta1.partial_cmp(&0.0),
                "rep {rep}: SE {se} vs beta1 {beta1}"
            );
        }

        // Infectiousness: sign equals the sign of beta2.
        for beta2 in [
            rng.random_range(-2.0..-0.05),
            0.0,
            rng.random_range(0.05..1.0),
        ] {
            p.beta2 = beta2;
            let ie = infectiousness_effect_controlled(
                t,
                0,
                x[0],
                &[false, true, true],
                &[false, false, false],
                &earlier,
                &l,
                &p,
            )
            .unwrap();
            assert_eq!(
                ie.partial_cmp(&0.0),
                beta2.partial_cmp(&0.0),
                "rep {rep}: IE {ie} vs beta2 {beta2}"
            );
        }
    }
}

#[test]
fn marginalized_sign_laws_hold_within_mc_error() {
    let mut rng = substream(62, 0);
    let l = Covariates::zeros(2, 1);
    for rep in 0..20 {
        let mut p = random_params(&mut rng);
        p.beta1 = rng.random_range(-2.0..-0.2);
        p.beta2 = rng.random_range(-2.0..-0.2);
        p.alpha = BaselineHazard::Constant {
            rate: rng.random_range(0.2..1.0),
        };
        let t = rng.random_range(0.3..0.8);
        let mc = McSettings {
            samples: 500,
            seed: 100 + rep,
        };

        // Marginalizer all-untreated produces stochastically earlier
        // histories than all-treated when beta1 < 0.
        let ce =
            contagion_effect(t, 0, false, &[false, false], &[true, true], &l, &p, &mc).unwrap();
        assert!(
            ce.value > -3.0 * ce.mc_se.unwrap(),
            "rep {rep}: CE {}±{}",
            ce.value,
            ce.mc_se.unwrap()
        );

        // Shared histories make the marginalized SE/IE signs pointwise.
        let se = susceptibility_effect(t, 0, &[false, false], &l, &p, &mc).unwrap();
        assert!(se.value < 0.0, "rep {rep}: SE {}", se.value);

        let ie = infectiousness_effect(
            t,
            0,
            false,
            &[true, true],
            &[false, false],
            &[false, false],
            &l,
            &p,
            &mc,
        )
        .unwrap();
        assert!(ie.value <= 0.0, "rep {rep}: IE {}", ie.value);
    }
}

/// The two-person reduction of the controlled outcome, written directly from
/// the two-branch conditional form: `F(t)` before the partner's infection,
/// `F(t_j) + (1 - F(t_j)) * (1 - exp(-[external + internal mass]))` after.
fn two_person_formula(t: f64, t_j: f64, x: &[bool], l: &Covariates, p: &ModelParams) -> f64 {
    let own = p.susceptibility_factor(x[0], l.row(0));
    let src = p.source_factor(x[1], l.row(1));
    let f0 = |s: f64| -> f64 { -(-(own * p.alpha.cumulative(0.0, s).unwrap())).exp_m1() };
    if t <= t_j {
        f0(t)
    } else {
        let external = p.alpha.cumulative(t_j, t).unwrap();
        let internal = src * p.gamma.cumulative(0.0, t - t_j).unwrap();
        let cond = -(-(own * (external + internal))).exp_m1();
        f0(t_j) + (1.0 - f0(t_j)) * cond
    }
}

#[test]
fn two_person_reduction_is_an_algebraic_identity() {
    let mut rng = substream(63, 0);
    for rep in 0..100 {
        let p = random_params(&mut rng);
        let l = Covariates::from_rows(vec![
            vec![rng.random_range(-1.0..1.0)],
            vec![rng.random_range(-1.0..1.0)],
        ])
        .unwrap();
        let x = vec![rng.random_bool(0.5), rng.random_bool(0.5)];
        let t_j = rng.random_range(0.1..1.0);
        let t = rng.random_range(0.05..1.5);
        let h = InfectionHistory::from_events([(1, t_j)]).unwrap();
        let lhs = controlled_outcome(t, 0, &x, &h, &l, &p).unwrap();
        let rhs = two_person_formula(t, t_j, &x, &l, &p);
        assert!(
            (lhs - rhs).abs() < 1e-12,
            "rep {rep}: {lhs} vs {rhs} (t={t}, t_j={t_j})"
        );
    }
}

#[test]
fn observed_equals_marginalized_in_consistent_world() {
    // G-computation check: the exposure-marginalized outcome with matching
    // integrand and marginalizer treatments equals the plain conditional
    // mean of the simulated process.
    let p = ModelParams {
        beta1: 0.5f64.ln(),
        beta2: 0.5f64.ln(),
        theta1: vec![0.9f64.ln()],
        theta2: vec![0.9f64.ln()],
        alpha: BaselineHazard::Constant { rate: 0.3 },
        gamma: BaselineHazard::Constant { rate: 3.0 },
    };
    for (n, x) in [(2, vec![false, true]), (3, vec![true, false, true])] {
        let l_rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.1 * i as f64 - 0.1]).collect();
        let l = Covariates::from_rows(l_rows).unwrap();
        let t = 0.4;

        let reps = 100_000u64;
        let mut infected = 0u64;
        for r in 0..reps {
            let mut rng = substream(64 + n as u64, r);
            let (h, _) = simulate_cluster(&p, &x, &l, t, &mut rng).unwrap();
            infected += u64::from(h.contains(0));
        }
        let direct = infected as f64 / reps as f64;
        let direct_se = (direct * (1.0 - direct) / reps as f64).sqrt();

        let mc = McSettings {
            samples: 20_000,
            seed: 65,
        };
        let marg = marginalized_outcome(t, 0, x[0], &x, &x, &l, &p, &mc).unwrap();

        let combined = (direct_se.powi(2) + marg.mc_se.powi(2)).sqrt();
        assert!(
            (direct - marg.value).abs() < 3.0 * combined,
            "n={n}: direct {direct} vs marginalized {} (3se {})",
            marg.value,
            3.0 * combined
        );
    }
}

#[test]
fn excluded_world_histogram_matches_closed_form_cells() {
    // n = 2: the exposure distribution of the partner is exponential with
    // the external rate only. Compare empirical cell masses of the sampler
    // against the closed form at 3 MC standard errors.
    let p = ModelParams {
        beta1: 0.5f64.ln(),
        beta2: 0.5f64.ln(),
        theta1: vec![0.9f64.ln()],
        theta2: vec![0.9f64.ln()],
        alpha: BaselineHazard::Constant { rate: 0.9 },
        gamma: BaselineHazard::Constant { rate: 3.0 },
    };
    let l = Covariates::from_rows(vec![vec![0.0], vec![0.4]]).unwrap();
    let x = vec![false, true];
    let t_obs = 1.0;
    let rate = 0.9 * p.susceptibility_factor(x[1], l.row(1));

    let reps = 50_000u64;
    let edges = [0.0, 0.2, 0.5, 1.0];
    let mut counts = [0u64; 4];
    for r in 0..reps {
        let mut rng = substream(66, r);
        let h = contagion_core::sim::simulate_history_excluding(0, &p, &x, &l, t_obs, &mut rng)
            .unwrap();
        match h.infection_time(1) {
            Some(t) => {
                let cell = edges.iter().rposition(|&e| t > e).unwrap();
                counts[cell] += 1;
            }
            None => counts[3] += 1,
        }
    }
    // Cells: (0, 0.2], (0.2, 0.5], (0.5, 1.0], censored.
    let surv = |t: f64| (-rate * t).exp();
    let expected = [
        1.0 - surv(0.2),
        surv(0.2) - surv(0.5),
        surv(0.5) - surv(1.0),
        surv(1.0),
    ];
    for (k, &e) in expected.iter().enumerate() {
        let obs = counts[k] as f64 / reps as f64;
        let se = (e * (1.0 - e) / reps as f64).sqrt();
        assert!(
            (obs - e).abs() < 3.0 * se,
            "cell {k}: observed {obs}, expected {e}"
        );
    }
}
