//! Calibration of the continuous-time simulator against the enumeration
//! oracle and the scenario-level attack-rate expectations.

use contagion_core::cohort::{Allocation, CovariateModel, Covariates, Design};
use contagion_core::hazard::{BaselineHazard, ModelParams};
use contagion_core::oracle::{enumerate_joint, DiscreteModel, Grid};
use contagion_core::rng::substream;
use contagion_core::sim::{
    simulate_cluster, simulate_history_excluding, simulate_study, StudySpec,
};
use contagion_core::study::{table_cells, HazardScenario};

fn untreated(alpha: f64, gamma: f64) -> ModelParams {
    ModelParams {
        beta1: 0.0,
        beta2: 0.0,
        theta1: vec![0.0],
        theta2: vec![0.0],
        alpha: BaselineHazard::Constant { rate: alpha },
        gamma: BaselineHazard::Constant { rate: gamma },
    }
}

/// Richardson extrapolation of an enumerated functional at `dt` and `dt/2`
/// removes the first-order grid bias.
fn extrapolate(coarse: f64, fine: f64) -> f64 {
    2.0 * fine - coarse
}

#[test]
fn cluster_marginal_matches_oracle_to_half_percent() {
    // n = 2, constant hazards: empirical E[Y_1(0.4)] against the
    // grid-extrapolated enumeration value.
    let p = untreated(0.3, 3.0);
    let l = Covariates::zeros(2, 1);
    let x = vec![false, false];
    let t_obs = 0.4;

    let marginal_at = |steps: usize| -> f64 {
        let grid = Grid {
            dt: t_obs / steps as f64,
            steps,
        };
        let model = DiscreteModel::new(&p, &x, &l, grid).unwrap();
        let pmf = enumerate_joint(&model).unwrap();
        pmf.entries()
            .filter(|(d, _)| d[0] >= 1)
            .map(|(_, prob)| prob)
            .sum()
    };
    let oracle = extrapolate(marginal_at(400), marginal_at(800));

    let reps = 100_000u64;
    let mut infected = 0u64;
    for r in 0..reps {
        let mut rng = substream(81, r);
        let (h, _) = simulate_cluster(&p, &x, &l, t_obs, &mut rng).unwrap();
        infected += u64::from(h.contains(0));
    }
    let empirical = infected as f64 / reps as f64;
    assert!(
        (empirical - oracle).abs() < 0.005,
        "empirical {empirical} vs oracle {oracle}"
    );
}

#[test]
fn table_scenarios_hit_the_expected_attack_band() {
    // Average infection rate 5%-20% across the grid cells.
    for table in [1u8, 4] {
        for cell in table_cells(table, 2_000).unwrap() {
            if cell.scenario != HazardScenario::Constant || cell.allocation.label() == "block" {
                continue;
            }
            let data = simulate_study(&cell.study_spec(), 82).unwrap();
            let infected: usize = data
                .clusters
                .iter()
                .map(|c| c.delta.iter().filter(|&&d| d).count())
                .sum();
            let frac = infected as f64 / (cell.n * cell.clusters) as f64;
            assert!(
                (0.05..=0.20).contains(&frac),
                "{}: attack fraction {frac}",
                cell.label()
            );
        }
    }
}

#[test]
fn excluded_world_histogram_matches_extrapolated_exposure_law() {
    // n = 3 with mixed treatments: the sampled exposure histories follow the
    // enumerated exposure distribution. Coarse cells (each of the two others
    // never / early / late) against the grid-extrapolated oracle masses,
    // within 3 MC standard errors.
    let p = ModelParams {
        beta1: 0.5f64.ln(),
        beta2: 0.5f64.ln(),
        theta1: vec![0.9f64.ln()],
        theta2: vec![0.9f64.ln()],
        alpha: BaselineHazard::Constant { rate: 0.5 },
        gamma: BaselineHazard::Constant { rate: 3.0 },
    };
    let x = vec![false, true, false];
    let l = Covariates::from_rows(vec![vec![0.1], vec![-0.2], vec![0.3]]).unwrap();
    let t_obs = 0.2;
    let half = t_obs / 2.0;

    // Oracle cell masses over the i-removed model (others are individuals 1
    // and 2), at two grid resolutions.
    let cells_at = |steps: usize| -> [[f64; 3]; 3] {
        let others_x = vec![x[1], x[2]];
        let others_l = Covariates::from_rows(vec![l.row(1).to_vec(), l.row(2).to_vec()]).unwrap();
        let grid = Grid {
            dt: t_obs / steps as f64,
            steps,
        };
        let model = DiscreteModel::new(&p, &others_x, &others_l, grid).unwrap();
        let pmf = enumerate_joint(&model).unwrap();
        let bucket = |g: u16| -> usize {
            if g == 0 {
                0
            } else if (g as usize) <= steps / 2 {
                1
            } else {
                2
            }
        };
        let mut cells = [[0.0; 3]; 3];
        for (d, prob) in pmf.entries() {
            cells[bucket(d[0])][bucket(d[1])] += prob;
        }
        cells
    };
    let coarse = cells_at(40);
    let fine = cells_at(80);

    let reps = 40_000u64;
    let mut counts = [[0u64; 3]; 3];
    for r in 0..reps {
        let mut rng = substream(83, r);
        let h = simulate_history_excluding(0, &p, &x, &l, t_obs, &mut rng).unwrap();
        let bucket = |j: usize| -> usize {
            match h.infection_time(j) {
                None => 0,
                Some(t) if t <= half => 1,
                Some(_) => 2,
            }
        };
        counts[bucket(1)][bucket(2)] += 1;
    }

    for a in 0..3 {
        for b in 0..3 {
            let expected = extrapolate(coarse[a][b], fine[a][b]);
            let observed = counts[a][b] as f64 / reps as f64;
            let se = (expected.max(1e-9) * (1.0 - expected) / reps as f64).sqrt();
            assert!(
                (observed - expected).abs() <= 3.0 * se + 1e-4,
                "cell ({a},{b}): observed {observed} vs oracle {expected} (se {se})"
            );
        }
    }
}

#[test]
fn study_dataset_respects_censoring_invariants() {
    let spec = StudySpec {
        params: untreated(0.3, 3.0),
        design: Design {
            allocation: Allocation::bernoulli(),
            covariates: CovariateModel::new(0.0, 1.0),
        },
        n: 4,
        t_obs: 0.3,
        clusters: 2_000,
    };
    let data = simulate_study(&spec, 84).unwrap();
    for c in &data.clusters {
        c.validate().unwrap();
    }
    assert_eq!(data.clusters.len(), 2_000);
}
