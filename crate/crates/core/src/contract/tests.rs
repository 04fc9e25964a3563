use proptest::prelude::*;

use super::*;
use crate::geometry::{lp_solve_with, AxisBox, HPolytope, LpOptions, Matrix, PolytopeUnion};

const BIG: f64 = 100.0;

/// Exact epigraph of `λ(x) = c + Σ a_k x_k` on `[0, BIG]^k × (−∞, BIG]`.
fn linear_epigraph(c: f64, a: &[f64]) -> EpigraphApprox<f64> {
    let k = a.len();
    let mut rows = Vec::new();
    let mut b = Vec::new();
    let mut r: Vec<f64> = a.to_vec();
    r.push(-1.0);
    rows.push(r);
    b.push(-c);
    for j in 0..=k {
        let mut up = vec![0.0; k + 1];
        up[j] = 1.0;
        rows.push(up);
        b.push(BIG);
        if j < k {
            let mut lo = vec![0.0; k + 1];
            lo[j] = -1.0;
            rows.push(lo);
            b.push(0.0);
        }
    }
    EpigraphApprox::convex(HPolytope::from_rows(rows, b).unwrap(), BIG)
}

fn two_system_approx(mu: [f64; 2], nu: [f64; 2], d: [f64; 2]) -> GainFamily<f64> {
    GainFamily::new(vec![
        GainEntry::approx(vec![1], linear_epigraph(mu[0] * d[0], &[nu[0]])),
        GainEntry::approx(vec![0], linear_epigraph(mu[1] * d[1], &[nu[1]])),
    ])
    .unwrap()
}

fn two_system_callable(mu: [f64; 2], nu: [f64; 2], d: [f64; 2]) -> GainFamily<f64> {
    GainFamily::new(vec![
        GainEntry::callable(vec![1], move |x: &[f64]| mu[0] * d[0] + nu[0] * x[0]),
        GainEntry::callable(vec![0], move |x: &[f64]| mu[1] * d[1] + nu[1] * x[0]),
    ])
    .unwrap()
}

fn params(v: &[f64]) -> ContractParams<f64> {
    ContractParams::new(v.to_vec()).unwrap()
}

#[test]
fn zero_gains_are_valid_anywhere() {
    let g = GainFamily::new(vec![
        GainEntry::callable(vec![1], |_: &[f64]| 0.0),
        GainEntry::callable(vec![0], |_: &[f64]| 0.0),
    ])
    .unwrap();
    for y in [[0.0, 0.0], [3.0, 0.5]] {
        assert!(check_validity(&params(&y), &g, 1e-9).unwrap().is_valid());
    }
}

#[test]
fn small_gain_point_is_valid_with_zero_slack() {
    let g = two_system_callable([1.0, 1.0], [0.5, 0.5], [1.0, 1.0]);
    let v = check_validity(&params(&[2.0, 2.0]), &g, 1e-9).unwrap();
    let cert = v.certificate().unwrap();
    assert_eq!(cert.slacks, vec![0.0, 0.0]);
    assert_eq!(cert.provenance, vec![Provenance::Callable; 2]);
    match check_validity(&params(&[1.0, 1.0]), &g, 1e-9).unwrap() {
        Validity::Violated { violations } => {
            assert_eq!(violations.len(), 2);
            for (i, v) in violations.iter().enumerate() {
                assert_eq!(v.subsystem, i);
                assert_eq!(v.margin, Some(0.5));
            }
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn holes_and_approximations_in_validity() {
    let g = GainFamily::new(vec![
        GainEntry::callable(vec![1], |_: &[f64]| f64::INFINITY),
        GainEntry::approx(vec![0], linear_epigraph(1.0, &[0.5])),
    ])
    .unwrap();
    match check_validity(&params(&[1.0, 1.5]), &g, 1e-9).unwrap() {
        Validity::Violated { violations } => {
            assert_eq!(violations.len(), 1);
            assert_eq!(violations[0].margin, None);
            assert_eq!(violations[0].provenance, Provenance::Hole);
        }
        other => panic!("{other:?}"),
    }
    match check_validity(&params(&[1.0, 1.4]), &g, 1e-9).unwrap() {
        Validity::Violated { violations } => {
            assert_eq!(violations[1].provenance, Provenance::Outside);
            assert!(violations[1].margin.unwrap() > 0.0);
        }
        other => panic!("{other:?}"),
    }
    assert!(check_validity(&params(&[1.0]), &g, 1e-9).is_err());
}

#[test]
fn family_validation() {
    let unknown = GainFamily::new(vec![GainEntry::callable(vec![3], |_: &[f64]| 0.0)]);
    assert!(matches!(unknown, Err(ContractError::UnknownNeighbor { .. })));
    let own = GainFamily::new(vec![GainEntry::callable(vec![0], |_: &[f64]| 0.0)]);
    assert!(matches!(own, Err(ContractError::InvalidNeighbors { .. })));
    let wrong_dim = GainFamily::new(vec![
        GainEntry::approx(vec![1], linear_epigraph(0.0, &[1.0, 1.0])),
        GainEntry::callable(vec![], |_: &[f64]| 0.0),
    ]);
    assert!(matches!(wrong_dim, Err(ContractError::ApproxDimension { .. })));
    assert!(ContractParams::new(vec![-1.0]).is_err());
}

#[test]
fn search_recovers_small_gain_minimum() {
    let g = two_system_approx([1.0, 1.0], [0.5, 0.5], [1.0, 1.0]);
    let r = search_contract(&g, &SearchOptions::default()).unwrap();
    assert!((r.params.y_max[0] - 2.0).abs() < 1e-9);
    assert!((r.params.y_max[1] - 2.0).abs() < 1e-9);
    assert!((r.objective - 4.0).abs() < 1e-9);
    assert!(check_validity(&r.params, &g, 1e-9).unwrap().is_valid());
}

#[test]
fn search_reports_infeasible_loop() {
    let g = two_system_approx([1.0, 1.0], [1.0, 1.0], [1.0, 0.0]);
    assert_eq!(
        search_contract(&g, &SearchOptions::default()),
        Err(ContractError::Infeasible { subsystems: vec![0, 1] })
    );
    // a third, unrelated subsystem is left out of the conflicting set
    let g = GainFamily::new(vec![
        GainEntry::approx(vec![1], linear_epigraph(1.0, &[1.0])),
        GainEntry::approx(vec![0], linear_epigraph(0.0, &[1.0])),
        GainEntry::approx(vec![0], linear_epigraph(0.5, &[0.1])),
    ])
    .unwrap();
    assert_eq!(
        search_contract(&g, &SearchOptions::default()),
        Err(ContractError::Infeasible { subsystems: vec![0, 1] })
    );
}

#[test]
fn decoupled_constant_gain() {
    let poly = HPolytope::from_rows(vec![vec![-1.0], vec![1.0]], vec![-0.7, BIG]).unwrap();
    let g = GainFamily::new(vec![GainEntry::approx(vec![], EpigraphApprox::convex(poly, BIG))]).unwrap();
    let r = search_contract(&g, &SearchOptions::default()).unwrap();
    assert!((r.params.y_max[0] - 0.7).abs() < 1e-12);
}

#[test]
fn feasibility_mode_and_weights() {
    let g = two_system_approx([1.0, 1.0], [0.5, 0.5], [1.0, 1.0]);
    let opts = SearchOptions {
        feasibility_only: true,
        ..SearchOptions::default()
    };
    let r = search_contract(&g, &opts).unwrap();
    assert!(check_validity(&r.params, &g, 1e-9).unwrap().is_valid());
    let bad = SearchOptions {
        weights: Some(vec![1.0, -1.0]),
        ..SearchOptions::default()
    };
    assert_eq!(search_contract(&g, &bad), Err(ContractError::InvalidWeights));
    let callables = two_system_callable([1.0, 1.0], [0.5, 0.5], [1.0, 1.0]);
    assert!(matches!(
        search_contract(&callables, &SearchOptions::default()),
        Err(ContractError::NotApproximation { subsystem: 0 })
    ));
}

#[test]
fn union_search_picks_best_piece() {
    // subsystem 0 may sit low only if y1 is small; subsystem 1 is pinned at 0.5
    let low = HPolytope::<f64>::from_box(&AxisBox::new(vec![0.0, 0.2], vec![0.4, 5.0]).unwrap());
    let high = HPolytope::from_box(&AxisBox::new(vec![0.0, 1.0], vec![5.0, 5.0]).unwrap());
    let approx0 = EpigraphApprox::union(PolytopeUnion::new(vec![high, low]).unwrap(), 5.0);
    let approx1 = EpigraphApprox::union(
        PolytopeUnion::new(vec![HPolytope::from_box(&AxisBox::new(vec![0.0, 0.5], vec![5.0, 5.0]).unwrap())])
            .unwrap(),
        5.0,
    );
    let g = GainFamily::new(vec![GainEntry::approx(vec![1], approx0), GainEntry::approx(vec![0], approx1)]).unwrap();
    let r = search_contract(&g, &SearchOptions::default()).unwrap();
    assert!((r.params.y_max[0] - 1.0).abs() < 1e-9, "{:?}", r.params);
    assert!((r.params.y_max[1] - 0.5).abs() < 1e-9);
    assert_eq!(r.pieces, vec![0, 0]);
}

#[test]
fn refine_examples() {
    let half = GainFamily::new(vec![
        GainEntry::callable(vec![1], |x: &[f64]| 0.5 * x[0]),
        GainEntry::callable(vec![0], |x: &[f64]| 0.5 * x[0]),
    ])
    .unwrap();
    let log = refine(&params(&[1.0, 1.0]), &half, &RefineOptions::default()).unwrap();
    assert_eq!(log.termination, Termination::Converged);
    assert!(log.last().y_max.iter().all(|v| *v < 1e-7));
    for w in log.iterates.windows(2) {
        assert!(w[1].iter().zip(&w[0]).all(|(a, b)| a <= b && *a >= 0.0));
    }

    let sg = two_system_callable([1.0, 1.0], [0.5, 0.5], [1.0, 1.0]);
    let log = refine(&params(&[2.0, 2.0]), &sg, &RefineOptions::default()).unwrap();
    assert_eq!(log.iterates.len(), 2);
    assert!(log.iterates[1].iter().zip(&log.iterates[0]).all(|(a, b)| (a - b).abs() <= 1e-12));

    let identity = GainFamily::new(vec![
        GainEntry::callable(vec![1], |x: &[f64]| x[0]),
        GainEntry::callable(vec![0], |x: &[f64]| x[0]),
    ])
    .unwrap();
    let log = refine(&params(&[0.3, 0.3]), &identity, &RefineOptions::default()).unwrap();
    assert_eq!(log.iterations(), 1);
    assert_eq!(log.last().y_max, vec![0.3, 0.3]);

    let capped = RefineOptions {
        max_iters: 3,
        ..RefineOptions::default()
    };
    let log = refine(&params(&[1.0, 1.0]), &half, &capped).unwrap();
    assert_eq!(log.termination, Termination::MaxIters);
    assert_eq!(log.last().y_max, vec![0.125, 0.125]);
}

#[test]
fn refine_rejects_invalid_and_non_monotone() {
    let sg = two_system_callable([1.0, 1.0], [0.5, 0.5], [1.0, 1.0]);
    assert!(matches!(
        refine(&params(&[1.0, 1.0]), &sg, &RefineOptions::default()),
        Err(ContractError::InvalidInitial { .. })
    ));
    let decreasing = GainFamily::new(vec![
        GainEntry::callable(vec![1], |x: &[f64]| (1.0 - x[0]).max(0.0)),
        GainEntry::callable(vec![0], |x: &[f64]| 0.5 * x[0]),
    ])
    .unwrap();
    match refine(&params(&[1.0, 1.0]), &decreasing, &RefineOptions::default()) {
        Err(ContractError::NonMonotone { iteration, subsystem, previous, next }) => {
            assert_eq!((iteration, subsystem), (2, 0));
            assert_eq!((previous, next), (0.0, 0.5));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn small_gain_examples() {
    assert_eq!(
        small_gain_closed_form(1.0, 1.0, 0.5, 0.5, 1.0, 1.0).unwrap(),
        SmallGain::Bounded { y1: 2.0, y2: 2.0 }
    );
    let (mu1, mu2, nu1, d1, d2) = (0.3, 0.7, 0.9, 2.0, 1.5);
    assert_eq!(
        small_gain_closed_form(mu1, mu2, nu1, 0.0, d1, d2).unwrap(),
        SmallGain::Bounded {
            y1: mu1 * d1 + mu2 * nu1 * d2,
            y2: mu2 * d2
        }
    );
    assert_eq!(small_gain_closed_form(1.0, 1.0, 2.0, 0.5, 1.0, 1.0).unwrap(), SmallGain::NoCertificate);
    assert!(matches!(
        small_gain_closed_form(1.0, -1.0, 0.5, 0.5, 1.0, 1.0),
        Err(ContractError::NegativeInput { name: "mu2" })
    ));
}

#[test]
fn horizon_extension_iteration() {
    let steps = GeneralContractIteration::<u64> {
        lambda_hat: Box::new(|t| Ok(t + 1)),
        gamma: Box::new(|t| Ok(*t)),
        initial: 0,
    };
    let seq = general_ag_iterate(&steps, 3);
    let ts = 0.01;
    let horizons: Vec<f64> = seq.p_af.iter().map(|k| *k as f64 * ts).collect();
    assert_eq!(horizons, vec![0.0, 0.01, 0.02, 0.03]);
    assert_eq!(seq.p_g, vec![1, 2, 3, 4]);
    assert!(seq.failure.is_none());

    let seconds = GeneralContractIteration::<f64> {
        lambda_hat: Box::new(move |t| Ok(t + ts)),
        gamma: Box::new(|t| Ok(*t)),
        initial: 0.0,
    };
    let seq = general_ag_iterate(&seconds, 3);
    for (k, t) in seq.p_af.iter().enumerate() {
        assert!((t - k as f64 * ts).abs() < 1e-15);
    }

    let constant = GeneralContractIteration::<f64> {
        lambda_hat: Box::new(|_| Ok(2.0)),
        gamma: Box::new(|_| Ok(1.0)),
        initial: 1.0,
    };
    let seq = general_ag_iterate(&constant, 5);
    assert_eq!(seq.p_g, vec![2.0; 6]);
    assert_eq!(general_ag_iterate(&constant, 0).p_g, vec![2.0]);

    let failing = GeneralContractIteration::<u64> {
        lambda_hat: Box::new(|t| if *t >= 2 { Err("out of range".into()) } else { Ok(t + 1) }),
        gamma: Box::new(|t| Ok(*t)),
        initial: 0,
    };
    let seq = general_ag_iterate(&failing, 5);
    assert_eq!(seq.p_g, vec![1, 2]);
    let failure = seq.failure.unwrap();
    assert_eq!((failure.step, failure.map), (2, IterationMap::LambdaHat));
}

/// Random union instance: per subsystem, neighbor list and pieces given as
/// boxes optionally cut by a halfplane through the box centre.
#[derive(Clone, Debug)]
struct RandomInstance {
    neighbors: Vec<Vec<usize>>,
    pieces: Vec<Vec<HPolytope<f64>>>,
}

fn piece(dim: usize) -> impl Strategy<Value = HPolytope<f64>> {
    (
        prop::collection::vec((0.0f64..2.0, 0.2f64..2.0), dim),
        prop::option::of(prop::collection::vec(-1.0f64..1.0, dim)),
    )
        .prop_map(|(axes, cut)| {
            let lower: Vec<f64> = axes.iter().map(|a| a.0).collect();
            let upper: Vec<f64> = axes.iter().map(|a| a.0 + a.1).collect();
            let mut poly = HPolytope::from_box(&AxisBox::new(lower.clone(), upper.clone()).unwrap());
            if let Some(c) = cut {
                let centre: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
                let b: f64 = c.iter().zip(&centre).map(|(x, y)| x * y).sum();
                poly = poly.intersect(&HPolytope::from_rows(vec![c], vec![b]).unwrap()).unwrap();
            }
            poly
        })
}

fn random_instance() -> impl Strategy<Value = RandomInstance> {
    (2usize..=4)
        .prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec(any::<bool>(), n), n).prop_map(move |adj| {
                (0..n)
                    .map(|i| (0..n).filter(|&j| j != i && adj[i][j]).take(2).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
        })
        .prop_flat_map(|neighbors| {
            let pieces: Vec<_> = neighbors
                .iter()
                .map(|nb| prop::collection::vec(piece(nb.len() + 1), 1..=3))
                .collect();
            (Just(neighbors), pieces)
        })
        .prop_map(|(neighbors, pieces)| RandomInstance { neighbors, pieces })
}

fn family(inst: &RandomInstance) -> GainFamily<f64> {
    GainFamily::new(
        inst.neighbors
            .iter()
            .zip(&inst.pieces)
            .map(|(nb, ps)| GainEntry::approx(nb.clone(), EpigraphApprox::union(PolytopeUnion::new(ps.clone()).unwrap(), 4.0)))
            .collect(),
    )
    .unwrap()
}

/// Minimum of `Σ y` over every combination of pieces, one LP per combination.
fn exhaustive(inst: &RandomInstance) -> Option<f64> {
    let n = inst.neighbors.len();
    let total: usize = inst.pieces.iter().map(|p| p.len()).product();
    let mut best: Option<f64> = None;
    for mut code in 0..total {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..n {
            let mut r = vec![0.0; n];
            r[i] = -1.0;
            rows.push(r);
            rhs.push(0.0);
            let k = code % inst.pieces[i].len();
            code /= inst.pieces[i].len();
            let poly = &inst.pieces[i][k];
            for (local, &b) in poly.a().rows_iter().zip(poly.b()) {
                let mut r = vec![0.0; n];
                for (c, &j) in inst.neighbors[i].iter().enumerate() {
                    r[j] += local[c];
                }
                r[i] += local[local.len() - 1];
                rows.push(r);
                rhs.push(b);
            }
        }
        let a = Matrix::from_rows(rows).unwrap();
        let out = lp_solve_with(&vec![1.0; n], &a, &rhs, LpOptions::default()).unwrap();
        if let Some(v) = out.value {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn branch_and_bound_matches_enumeration(inst in random_instance()) {
        let g = family(&inst);
        let oracle = exhaustive(&inst);
        match (search_contract(&g, &SearchOptions::default()), oracle) {
            (Ok(r), Some(v)) => {
                prop_assert!((r.objective - v).abs() <= 1e-9, "{} vs {}", r.objective, v);
                prop_assert!(check_validity(&r.params, &g, 1e-9).unwrap().is_valid());
            }
            (Err(ContractError::Infeasible { subsystems }), None) => {
                prop_assert!(!subsystems.is_empty());
            }
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
        }
    }

    #[test]
    fn closed_form_is_the_epigraph_minimum(
        mu in (0.0f64..2.0, 0.0f64..2.0),
        nu in (0.0f64..0.95, 0.0f64..0.95),
        d in (0.1f64..2.0, 0.1f64..2.0),
    ) {
        let SmallGain::Bounded { y1, y2 } =
            small_gain_closed_form(mu.0, mu.1, nu.0, nu.1, d.0, d.1).unwrap() else {
            unreachable!()
        };
        prop_assume!(y1 < BIG && y2 < BIG);
        let g = two_system_approx([mu.0, mu.1], [nu.0, nu.1], [d.0, d.1]);
        let r = search_contract(&g, &SearchOptions::default()).unwrap();
        prop_assert!((r.params.y_max[0] - y1).abs() < 1e-7 * (1.0 + y1));
        prop_assert!((r.params.y_max[1] - y2).abs() < 1e-7 * (1.0 + y2));
        let sg = two_system_callable([mu.0, mu.1], [nu.0, nu.1], [d.0, d.1]);
        let log = refine(&params(&[y1, y2]), &sg, &RefineOptions { validity_tol: 1e-9, ..RefineOptions::default() }).unwrap();
        prop_assert!(log.iterates[1].iter().zip(&log.iterates[0]).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b)));
    }

    #[test]
    fn refinement_descends_to_a_valid_fixed_point(
        c in prop::collection::vec(0.0f64..1.0, 3),
        a in prop::collection::vec(0.0f64..0.3, 6),
    ) {
        // λ_i(y) = c_i + Σ_{j≠i} a_ij y_j with row sums below 0.6
        let nb = |i: usize| (0..3).filter(|&j| j != i).collect::<Vec<_>>();
        let entries = (0..3)
            .map(|i| {
                let (ci, w) = (c[i], [a[2 * i], a[2 * i + 1]]);
                GainEntry::callable(nb(i), move |x: &[f64]| ci + w[0] * x[0] + w[1] * x[1])
            })
            .collect();
        let g = GainFamily::new(entries).unwrap();
        let start = 1.0 / (1.0 - 0.6) + 1.0;
        let log = refine(&params(&[start; 3]), &g, &RefineOptions::default()).unwrap();
        prop_assert_eq!(log.termination, Termination::Converged);
        for w in log.iterates.windows(2) {
            prop_assert!(w[1].iter().zip(&w[0]).all(|(x, y)| x <= y && *x >= 0.0));
        }
        let last = log.last();
        prop_assert!(check_validity(&last, &g, 1e-9).unwrap().is_valid());
        let next = g.apply(&last).unwrap();
        prop_assert!(next.iter().zip(&last.y_max).all(|(x, y)| (x - y).abs() < 1e-7));
    }
}
