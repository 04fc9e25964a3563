use proptest::prelude::*;

use super::*;

fn scalar_affine(a: f64, by: Vec<f64>, bd: f64) -> AffineRealization<f64> {
    let k = by.len();
    AffineRealization {
        a: Matrix::from_rows(vec![vec![a]]).unwrap(),
        b_u: Matrix::from_rows_with_cols(vec![vec![]], 0).unwrap(),
        b_y: Matrix::from_rows_with_cols(vec![by], k).unwrap(),
        b_d: Matrix::from_rows(vec![vec![bd]]).unwrap(),
        c: vec![0.0],
        output: Matrix::from_rows(vec![vec![1.0]]).unwrap(),
    }
}

fn bus(id: usize, kind: BusKind, m: f64, d: f64, p_in: f64) -> BusSpec<f64> {
    BusSpec { id, kind, m, d, p_in }
}

fn line(from: usize, to: usize, b: f64) -> LineSpec<f64> {
    LineSpec { from, to, b }
}

fn wscc() -> (Vec<BusSpec<f64>>, Vec<LineSpec<f64>>) {
    let buses = (1..=9)
        .map(|i| {
            if i <= 3 {
                bus(i, BusKind::Generator, 0.5, 0.2, 0.0)
            } else {
                bus(i, BusKind::Load, 0.0, 0.8, 0.0)
            }
        })
        .collect();
    let lines = [(1, 4), (4, 5), (5, 6), (3, 6), (6, 7), (7, 8), (8, 2), (8, 9), (9, 4)]
        .into_iter()
        .map(|(a, b)| line(a, b, if a <= 3 || b <= 3 { 5.0 } else { 3.0 }))
        .collect();
    (buses, lines)
}

#[test]
fn scalar_affine_step() {
    let s = Subsystem::from_affine(0, vec![], scalar_affine(0.5, vec![], 1.0)).unwrap();
    let x = s.step(&[1.0], &[], &[], &[0.1]).unwrap();
    assert!((x[0] - 0.6).abs() < 1e-15);
    let x = s.step(&[0.9], &[], &[], &[0.1]).unwrap();
    assert!((x[0] - 0.55).abs() < 1e-15);
    assert!(s.step(&[1.0, 2.0], &[], &[], &[0.1]).is_err());
    assert!(s.step(&[f64::NAN], &[], &[], &[0.1]).is_err());
}

#[test]
fn two_coupled_scalars() {
    let s1 = Subsystem::from_affine(1, vec![2], scalar_affine(0.5, vec![0.25], 0.0)).unwrap();
    let s2 = Subsystem::from_affine(2, vec![1], scalar_affine(0.5, vec![0.25], 0.0)).unwrap();
    let net = NetworkSystem::new(vec![s1.clone(), s2.clone()], 1.0).unwrap();
    let states: Signals<f64> = [(1, vec![1.0]), (2, vec![0.0])].into();
    let zeros: Signals<f64> = [(1, vec![]), (2, vec![])].into();
    let dist: Signals<f64> = [(1, vec![0.0]), (2, vec![0.0])].into();
    let (next, outputs) = net.step(&states, &zeros, &dist).unwrap();
    assert_eq!(next[&1], vec![0.5]);
    assert_eq!(next[&2], vec![0.25]);
    assert_eq!(outputs[&1], vec![1.0]);

    let swapped = NetworkSystem::new(vec![s2, s1], 1.0).unwrap();
    let (next2, _) = swapped.step(&states, &zeros, &dist).unwrap();
    assert_eq!(next, next2);

    let missing: Signals<f64> = [(1, vec![1.0])].into();
    assert!(matches!(
        net.step(&missing, &zeros, &dist),
        Err(NetworkError::MissingEntry { id: 2, .. })
    ));
}

#[test]
fn construction_invariants() {
    assert!(matches!(
        Subsystem::from_affine(3, vec![3], scalar_affine(0.5, vec![1.0], 0.0)),
        Err(NetworkError::SelfLoop { id: 3 })
    ));
    let shifted = Subsystem::<f64>::new(
        0,
        Dims { state: 1, input: 0, disturbance: 0, output: 1 },
        vec![],
        0,
        |x, _, _, _| x.to_vec(),
        |x| vec![x[0] + 1.0],
        None,
    );
    assert!(matches!(shifted, Err(NetworkError::OutputNotZero { .. })));
    let mismatched = Subsystem::<f64>::new(
        0,
        Dims { state: 1, input: 0, disturbance: 1, output: 1 },
        vec![],
        0,
        |x, _, _, d| vec![0.5 * x[0] + 2.0 * d[0]],
        |x| x.to_vec(),
        Some(scalar_affine(0.5, vec![], 1.0)),
    );
    assert!(matches!(mismatched, Err(NetworkError::AffineMismatch { .. })));
    let lonely = Subsystem::from_affine(1, vec![9], scalar_affine(0.5, vec![1.0], 0.0)).unwrap();
    assert!(matches!(
        NetworkSystem::new(vec![lonely], 1.0),
        Err(NetworkError::UnknownNeighbor { id: 1, neighbor: 9 })
    ));
}

#[test]
fn generator_at_origin_stays() {
    let net = build_microgrid(&[bus(1, BusKind::Generator, 1.0, 0.5, 0.0)], &[], 0.01).unwrap();
    let sub = net.subsystem(1).unwrap();
    assert_eq!(sub.step(&[0.0, 0.0], &[], &[0.0], &[0.0]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn single_generator_eigenvalues() {
    let (m, d, ts) = (2.0, 0.5, 0.01);
    let net = build_microgrid(&[bus(1, BusKind::Generator, m, d, 0.0)], &[], ts).unwrap();
    let a = &net.subsystem(1).unwrap().affine().unwrap().a;
    // upper triangular, so the eigenvalues are the diagonal entries
    assert_eq!(a[(1, 0)], 0.0);
    assert_eq!(a[(0, 0)], 1.0);
    assert!((a[(1, 1)] - (1.0 - ts * d / m)).abs() < 1e-15);
}

#[test]
fn load_bus_solves_algebraic_balance() {
    let ts = 0.01;
    let net = build_microgrid(
        &[
            bus(1, BusKind::Generator, 1.0, 1.0, 0.0),
            bus(2, BusKind::Load, 0.0, 1.0, 0.5),
        ],
        &[line(1, 2, 2.0)],
        ts,
    )
    .unwrap();
    let load = net.subsystem(2).unwrap();
    let next = load.step(&[0.0], &[0.0], &[0.0], &[0.0]).unwrap();
    assert!((next[0] - ts * 0.5).abs() < 1e-15);
}

#[test]
fn two_bus_line_is_symmetric() {
    let net = build_microgrid(
        &[
            bus(1, BusKind::Generator, 1.0, 1.0, 0.0),
            bus(2, BusKind::Generator, 1.0, 1.0, 0.0),
        ],
        &[line(1, 2, 3.0)],
        0.01,
    )
    .unwrap();
    let a1 = net.subsystem(1).unwrap().affine().unwrap();
    let a2 = net.subsystem(2).unwrap().affine().unwrap();
    assert_eq!(a1.a[(1, 0)], -a1.b_y[(1, 0)]);
    assert_eq!(a2.a[(1, 0)], -a2.b_y[(1, 0)]);
    assert_eq!(a1.b_y[(1, 0)], a2.b_y[(1, 0)]);
}

#[test]
fn wscc_dimensions() {
    let (buses, lines) = wscc();
    let net = build_microgrid(&buses, &lines, 0.01).unwrap();
    assert_eq!(net.subsystems().len(), 9);
    assert_eq!(net.total_state_dim(), 12);
    assert_eq!(net.subsystem(4).unwrap().neighbors(), &[1, 5, 9]);
}

#[test]
fn builder_rejects_bad_input() {
    let g = bus(1, BusKind::Generator, 1.0, 1.0, 0.0);
    let l = bus(2, BusKind::Load, 0.0, 1.0, 0.0);
    assert!(matches!(
        build_microgrid(&[g.clone(), l.clone()], &[], 0.01),
        Err(NetworkError::Disconnected(2))
    ));
    assert!(matches!(
        build_microgrid(&[bus(1, BusKind::Generator, 0.0, 1.0, 0.0)], &[], 0.01),
        Err(NetworkError::InvalidBus { id: 1, .. })
    ));
    assert!(matches!(
        build_microgrid(&[bus(1, BusKind::Generator, 1.0, -1.0, 0.0)], &[], 0.01),
        Err(NetworkError::InvalidBus { id: 1, .. })
    ));
    assert!(matches!(
        build_microgrid(std::slice::from_ref(&g), &[], 0.5),
        Err(NetworkError::InvalidStep(_))
    ));
    assert!(matches!(
        build_microgrid(std::slice::from_ref(&l), &[], 0.01),
        Err(NetworkError::NoGenerators)
    ));
    assert!(matches!(
        build_microgrid(&[g, l], &[line(1, 2, 1.0), line(2, 1, 1.0)], 0.01),
        Err(NetworkError::InvalidLine { .. })
    ));
}

/// Phase angles balancing the injections, found by Gaussian elimination on
/// the grounded Laplacian (bus 1 pinned at 0).
fn power_flow_angles(buses: &[BusSpec<f64>], lines: &[LineSpec<f64>]) -> Vec<f64> {
    let n = buses.len();
    let pos = |id: usize| buses.iter().position(|b| b.id == id).unwrap();
    let mut lap = vec![vec![0.0; n]; n];
    for l in lines {
        let (i, j) = (pos(l.from), pos(l.to));
        lap[i][i] += l.b;
        lap[j][j] += l.b;
        lap[i][j] -= l.b;
        lap[j][i] -= l.b;
    }
    let rows: Vec<Vec<f64>> = lap[1..].iter().map(|r| r[1..].to_vec()).collect();
    let rhs: Vec<f64> = buses[1..].iter().map(|b| b.p_in).collect();
    let mut theta = vec![0.0];
    theta.extend(crate::geometry::solve_square(&rows, &rhs, 1e-12).unwrap());
    theta
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn balanced_operating_point_is_fixed(p in prop::collection::vec(-0.5f64..0.5, 8)) {
        let (mut buses, lines) = wscc();
        let total: f64 = p.iter().sum();
        for (b, v) in buses.iter_mut().skip(1).zip(&p) {
            b.p_in = *v;
        }
        buses[0].p_in = -total;
        let net = build_microgrid(&buses, &lines, 0.01).unwrap();
        let theta = power_flow_angles(&buses, &lines);
        let states: Signals<f64> = buses
            .iter()
            .zip(&theta)
            .map(|(b, &t)| (b.id, if b.kind == BusKind::Generator { vec![t, 0.0] } else { vec![t] }))
            .collect();
        let zeros = net.zeros(|d| d.input);
        let (next, _) = net.step(&states, &zeros, &zeros).unwrap();
        for (id, x) in &states {
            for (a, b) in x.iter().zip(&next[id]) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coupling_is_local(x in prop::collection::vec(-1.0f64..1.0, 12), victim in 1usize..=9) {
        let (buses, lines) = wscc();
        let net = build_microgrid(&buses, &lines, 0.01).unwrap();
        let mut it = x.into_iter();
        let states: Signals<f64> = net
            .subsystems()
            .iter()
            .map(|s| (s.id(), (0..s.dims().state).map(|_| it.next().unwrap()).collect()))
            .collect();
        let zeros = net.zeros(|d| d.input);
        let (base, _) = net.step(&states, &zeros, &zeros).unwrap();
        let mut perturbed = states.clone();
        perturbed.get_mut(&victim).unwrap().iter_mut().for_each(|v| *v = 0.0);
        let (after, _) = net.step(&perturbed, &zeros, &zeros).unwrap();
        for s in net.subsystems() {
            if s.id() != victim && !s.neighbors().contains(&victim) {
                prop_assert_eq!(&base[&s.id()], &after[&s.id()]);
            }
        }
    }

    #[test]
    fn affine_matches_dynamics(seed in any::<u64>()) {
        let (buses, lines) = wscc();
        let net = build_microgrid(&buses, &lines, 0.01).unwrap();
        for s in net.subsystems() {
            let aff = s.affine().unwrap();
            prop_assert!(s.affine_deviation(aff, 100, seed) <= 1e-12);
        }
    }
}
