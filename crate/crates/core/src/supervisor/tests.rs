use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::solve_square;
use crate::invariant::{compute_rci, RciOptions, RciProblem, RciTemplate};
use crate::network::AffineRealization;

fn integrator(ts: f64, bd: f64) -> Subsystem<f64> {
    let aff = AffineRealization {
        a: Matrix::from_rows(vec![vec![1.0]]).unwrap(),
        b_u: Matrix::from_rows(vec![vec![ts]]).unwrap(),
        b_y: Matrix::from_rows_with_cols(vec![vec![]], 0).unwrap(),
        b_d: Matrix::from_rows(vec![vec![bd]]).unwrap(),
        c: vec![0.0],
        output: Matrix::from_rows(vec![vec![1.0]]).unwrap(),
    };
    Subsystem::from_affine(0, vec![], aff).unwrap()
}

fn interval_cbf(kappa: f64) -> Cbf<f64> {
    Cbf::new(Matrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap(), vec![1.0, 1.0], kappa).unwrap()
}

fn sym(r: &[f64]) -> AxisBox<f64> {
    AxisBox::symmetric(r).unwrap()
}

#[test]
fn barrier_values() {
    let cbf = Cbf::new(Matrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap(), vec![2.0, 2.0], 1.0).unwrap();
    assert_eq!(cbf_value(&cbf, &[0.0]).unwrap(), 1.0);
    assert_eq!(cbf_value(&cbf, &[2.0]).unwrap(), 0.0);
    assert_eq!(cbf_value(&cbf, &[1.0]).unwrap(), 0.5);
    assert!(cbf_value(&cbf, &[2.5]).unwrap() < 0.0);
    assert!(cbf_value(&cbf, &[1.0, 0.0]).is_err());
    assert!(Cbf::new(Matrix::from_rows(vec![vec![1.0]]).unwrap(), vec![0.0], 1.0).is_err());
    assert!(Cbf::new(Matrix::from_rows(vec![vec![1.0]]).unwrap(), vec![1.0], 0.0).is_err());
}

#[test]
fn outward_push_is_projected_in_closed_form() {
    let ts = 0.1;
    let sub = integrator(ts, 0.0);
    let (d, u) = (sym(&[0.0]), sym(&[10.0]));
    let prob = FilterProblem { subsystem: &sub, step_time: ts, disturbance: &d, input: &u };
    let cbf = interval_cbf(5.0);
    let r = cbf_filter(&cbf, &prob, &[0.99], &[], &[1.0]).unwrap();
    assert_eq!(r.active, vec![0]);
    assert!(r.intervened);
    // x + Ts u ≤ 0.995 − 1e-12 written as a u ≥ c with a = −Ts
    let (a, c, u0) = (-ts, -(1.0 - 0.5 * 0.01 - 1e-12 - 0.99), 1.0);
    let expected = u0 + ((c - a * u0) / (a * a)).max(0.0) * a;
    assert!((r.u_star[0] - expected).abs() < 1e-12);
    assert!(r.slack.abs() < 1e-12);
}

#[test]
fn admissible_proposals_pass_unchanged() {
    let ts = 0.1;
    let sub = integrator(ts, 0.0);
    let (d, u) = (sym(&[0.0]), sym(&[10.0]));
    let prob = FilterProblem { subsystem: &sub, step_time: ts, disturbance: &d, input: &u };
    let cbf = interval_cbf(5.0);
    let u0 = [0.123_456_789];
    let r = cbf_filter(&cbf, &prob, &[0.0], &[], &u0).unwrap();
    assert!(!r.intervened);
    assert_eq!(r.u_star, u0.to_vec());
    assert_eq!(r.active, vec![0, 1]);
    let r = cbf_filter(&cbf, &prob, &[0.99], &[], &[-3.0]).unwrap();
    assert!(!r.intervened);
    assert_eq!(r.u_star, vec![-3.0]);
    // outside the input box is an intervention even with no binding facet
    let r = cbf_filter(&cbf, &prob, &[0.0], &[], &[20.0]).unwrap();
    assert!(r.intervened);
    assert!(r.u_star[0] <= 5.0 + 1e-12);
}

#[test]
fn infeasible_rate_condition_reports_a_facet() {
    let ts = 0.1;
    let sub = integrator(ts, 1.0);
    let (d, u) = (sym(&[0.9]), sym(&[10.0]));
    let prob = FilterProblem { subsystem: &sub, step_time: ts, disturbance: &d, input: &u };
    match cbf_filter(&interval_cbf(5.0), &prob, &[0.0], &[], &[0.0]) {
        Err(SupervisorError::Infeasible { facet, violation }) => {
            assert!(facet < 2);
            assert!(violation > 0.0);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        cbf_filter(&interval_cbf(10.0), &prob, &[0.0], &[], &[0.0]),
        Err(SupervisorError::InvalidKappa { .. })
    ));
}

#[test]
fn students() {
    let zero = StudentController::<f64>::zero();
    assert_eq!(zero.control(&[1.0, 2.0], 0.0, 1), vec![0.0]);
    let p = StudentController::<f64>::proportional(10.0, None);
    assert!((p.control(&[0.0, 0.01], 0.0, 1)[0] + 0.1).abs() < 1e-15);
    let sat = StudentController::proportional(10.0, Some(sym(&[0.05])));
    assert_eq!(sat.control(&[0.0, 0.01], 0.0, 1), vec![-0.05]);
    assert_eq!(p.control(&[0.3], 0.0, 1), vec![0.0]);
    let s = StudentController {
        kind: StudentKind::Scripted {
            times: vec![0.1, 0.2],
            values: vec![vec![1.0], vec![-1.0]],
        },
        saturation: None,
    };
    assert_eq!(s.control(&[0.0], 0.05, 1), vec![0.0]);
    assert_eq!(s.control(&[0.0], 0.1, 1), vec![1.0]);
    assert_eq!(s.control(&[0.0], 5.0, 1), vec![-1.0]);
    let json = serde_json::to_string(&sat).unwrap();
    assert!(json.contains("proportional_frequency"));
    assert_eq!(serde_json::from_str::<StudentController<f64>>(&json).unwrap(), sat);
}

/// Projection by trying every active set of at most `m` rows.
fn projection_oracle(g: &[Vec<f64>], h: &[f64], u0: &[f64]) -> Option<Vec<f64>> {
    let m = u0.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << g.len()) {
        let rows: Vec<usize> = (0..g.len()).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > m {
            continue;
        }
        // u = u0 − G_Sᵀ μ with G_S u = h_S
        let gram: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| rows.iter().map(|&j| dot(&g[i], &g[j])).collect())
            .collect();
        let rhs: Vec<f64> = rows.iter().map(|&i| dot(&g[i], u0) - h[i]).collect();
        let Some(mu) = (if rows.is_empty() { Some(vec![]) } else { solve_square(&gram, &rhs, 1e-12) }) else {
            continue;
        };
        let mut u = u0.to_vec();
        for (&i, &mi) in rows.iter().zip(&mu) {
            for (uj, gj) in u.iter_mut().zip(&g[i]) {
                *uj -= mi * gj;
            }
        }
        if g.iter().zip(h).all(|(gi, hi)| dot(gi, &u) <= hi + 1e-9) {
            let dist: f64 = u.iter().zip(u0).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, u));
            }
        }
    }
    best.map(|b| b.1)
}

fn generator() -> (RciProblem<f64>, Cbf<f64>) {
    let ts = 0.01;
    let (m, d, b) = (0.5, 0.2, 5.0);
    let g = ts / m;
    let aff = AffineRealization {
        a: Matrix::from_rows(vec![vec![1.0, ts], vec![-g * b, 1.0 - g * d]]).unwrap(),
        b_u: Matrix::from_rows(vec![vec![0.0], vec![-g]]).unwrap(),
        b_y: Matrix::from_rows(vec![vec![0.0], vec![g * b]]).unwrap(),
        b_d: Matrix::from_rows(vec![vec![0.0], vec![-g]]).unwrap(),
        c: vec![0.0, 0.0],
        output: Matrix::from_rows(vec![vec![1.0, 0.0]]).unwrap(),
    };
    let sub = Subsystem::from_affine(0, vec![1], aff).unwrap();
    let prob = RciProblem::new(sub, sym(&[0.05]), sym(&[0.01]), vec![0.002]).unwrap();
    let c = 0.25;
    let tmpl = RciTemplate::new(
        Matrix::from_rows(vec![vec![0.0, 1.0], vec![0.0, -1.0], vec![1.0, c], vec![-1.0, -c]]).unwrap(),
        vec![0.005; 4],
    )
    .unwrap();
    let rci = compute_rci(&prob, &tmpl, &RciOptions::largest(Some(0.006))).unwrap();
    assert!(rci.is_invariant());
    let cbf = Cbf::from_rci(&rci, 0.5 / ts).unwrap();
    (prob, cbf)
}

fn random_inside(cbf: &Cbf<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let x = vec![rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01)];
        if cbf_value(cbf, &x).unwrap() >= 0.0 {
            return x;
        }
    }
}

#[test]
fn filtered_generator_stays_inside() {
    let (prob, cbf) = generator();
    let ts = 0.01;
    let fp = FilterProblem {
        subsystem: prob.subsystem(),
        step_time: ts,
        disturbance: prob.disturbance(),
        input: prob.input(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let student = StudentController::<f64> {
        kind: StudentKind::Scripted { times: vec![0.0], values: vec![vec![-0.05]] },
        saturation: None,
    };
    let mut x = vec![0.0, 0.0];
    let mut interventions = 0;
    for k in 0..2000 {
        let u0 = student.control(&x, k as f64 * ts, 1);
        let y = [rng.gen_range(-0.002..=0.002)];
        let r = cbf_filter(&cbf, &fp, &x, &y, &u0).unwrap();
        interventions += usize::from(r.intervened);
        let d = [if rng.gen_bool(0.5) { 0.01 } else { -0.01 }];
        x = prob.subsystem().step(&x, &y, &r.u_star, &d).unwrap();
        assert!(cbf_value(&cbf, &x).unwrap() >= -1e-9, "step {k}: {x:?}");
    }
    assert!(interventions > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn active_set_matches_enumeration(
        m in 1usize..=3,
        seed in any::<u64>(),
        rows in 1usize..=6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feasible: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<Vec<f64>> = (0..rows).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let h: Vec<f64> = g.iter().map(|gi| dot(gi, &feasible) + rng.gen_range(0.0..0.5)).collect();
        let u0: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (u, _) = qp::project(&g, &h, &u0, feasible);
        let oracle = projection_oracle(&g, &h, &u0).unwrap();
        prop_assert!(g.iter().zip(&h).all(|(gi, hi)| dot(gi, &u) <= hi + 1e-9));
        let dist = |v: &[f64]| v.iter().zip(&u0).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        prop_assert!((dist(&u) - dist(&oracle)).abs() < 1e-9, "{:?} vs {:?}", u, oracle);
    }

    #[test]
    fn filter_is_minimal_and_respects_the_rate(seed in any::<u64>(), u0 in -0.2f64..0.2) {
        let (prob, cbf) = generator();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_inside(&cbf, &mut rng);
        let y = [rng.gen_range(-0.002..=0.002)];
        let ts = 0.01;
        let fp = FilterProblem {
            subsystem: prob.subsystem(),
            step_time: ts,
            disturbance: prob.disturbance(),
            input: prob.input(),
        };
        let r = cbf_filter(&cbf, &fp, &x, &y, &[u0]).unwrap();
        if !r.intervened {
            prop_assert_eq!(r.u_star[0].to_bits(), u0.to_bits());
        } else {
            let (g, h) = rate_constraints(&cbf, &fp, &x, &y, &r.active).unwrap();
            let mut found = 0;
            while found < 100 {
                let u = [rng.gen_range(-0.05..=0.05)];
                if satisfies(&g, &h, &u) {
                    found += 1;
                    prop_assert!((r.u_star[0] - u0).abs() <= (u[0] - u0).abs() + 1e-12);
                }
            }
        }
        let x_next = prob.subsystem().step(&x, &y, &r.u_star, &[0.0]).unwrap();
        let kts = cbf.kappa * ts;
        for &k in &r.active {
            let pk = cbf.p.row(k);
            let now = cbf.q[k] - dot(pk, &x);
            let next = cbf.q[k] - dot(pk, &x_next);
            prop_assert!(next >= (1.0 - kts) * now - 1e-9);
        }
    }
}
