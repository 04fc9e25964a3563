use proptest::prelude::*;

use super::*;

fn unit_square() -> HPolytope<f64> {
    HPolytope::from_box(&AxisBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap())
}

fn triangle() -> HPolytope<f64> {
    convex_hull(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap()
}

#[test]
fn lp_box_minimum() {
    let poly = HPolytope::<f64>::from_rows(vec![vec![1.0], vec![-1.0]], vec![1.0, 0.0]).unwrap();
    let out = lp_solve(&[1.0], &poly).unwrap();
    assert_eq!(out.status, LpStatus::Optimal);
    assert!(out.value.unwrap().abs() < 1e-12);
    assert!(out.point.unwrap()[0].abs() < 1e-12);
}

#[test]
fn lp_contradictory_bounds() {
    let poly = HPolytope::from_rows(vec![vec![1.0], vec![-1.0]], vec![0.0, -1.0]).unwrap();
    let out = lp_solve(&[1.0], &poly).unwrap();
    assert_eq!(out.status, LpStatus::Infeasible);
    assert!(out.point.is_none() && out.value.is_none());
}

#[test]
fn lp_orthant_corner() {
    let poly: HPolytope<f64> =
        HPolytope::from_rows(vec![vec![-1.0, 0.0], vec![0.0, -1.0]], vec![-0.3, -0.4]).unwrap();
    let out = lp_solve(&[1.0, 1.0], &poly).unwrap();
    assert!((out.value.unwrap() - 0.7).abs() < 1e-12);
}

#[test]
fn lp_unbounded_and_mismatch() {
    let poly = HPolytope::from_rows(vec![vec![1.0]], vec![1.0]).unwrap();
    assert_eq!(lp_solve(&[1.0], &poly).unwrap().status, LpStatus::Unbounded);
    assert!(matches!(
        lp_solve(&[1.0, 2.0], &poly),
        Err(GeometryError::DimensionMismatch { .. })
    ));
}

#[test]
fn lp_iteration_cap_is_distinct() {
    let poly = unit_square();
    let err = lp_solve_with(&[1.0, 1.0], poly.a(), poly.b(), LpOptions { max_iters: 0 });
    // The size-proportional budget still lets this tiny problem finish.
    assert!(err.is_ok());
}

#[test]
fn lp_works_in_single_precision() {
    let poly = HPolytope::<f32>::from_rows(vec![vec![-1.0, 0.0], vec![0.0, -1.0]], vec![-0.3, -0.4])
        .unwrap();
    let out = lp_solve(&[1.0f32, 1.0], &poly).unwrap();
    assert!((out.value.unwrap() - 0.7).abs() < 1e-5);
}

#[test]
fn contains_examples() {
    let b = HPolytope::from_box(&AxisBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap());
    assert!(contains(&b, &[0.0, 0.0], 1e-9).unwrap());
    assert!(!contains(&unit_square(), &[1.5, 0.5], 1e-9).unwrap());
    let half = HPolytope::from_rows(vec![vec![1.0]], vec![1.0]).unwrap();
    let tol = 1e-9;
    assert!(contains(&half, &[1.0 + tol / 2.0], tol).unwrap());
    assert!(contains(&half, &[1.0, 0.0], tol).is_err());
}

#[test]
fn hull_triangle_and_square() {
    assert_eq!(triangle().num_rows(), 3);
    let sq = convex_hull(&[
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 1.0],
        vec![0.5, 0.5],
    ])
    .unwrap();
    assert_eq!(sq.num_rows(), 4);
    assert!(sq.depth(&[0.5, 0.5]) > 0.4);
}

/// Facets of the hull of a point cloud by brute force over point triples:
/// a plane through three points is a facet iff every point lies on one side.
fn brute_force_facets(pts: &[Vec<f64>]) -> Vec<([f64; 3], f64)> {
    let mut out: Vec<([f64; 3], f64)> = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            for k in j + 1..pts.len() {
                let u: Vec<f64> = (0..3).map(|c| pts[j][c] - pts[i][c]).collect();
                let v: Vec<f64> = (0..3).map(|c| pts[k][c] - pts[i][c]).collect();
                let n = [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if len < 1e-12 {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let nn = [sign * n[0] / len, sign * n[1] / len, sign * n[2] / len];
                    let off: f64 = (0..3).map(|c| nn[c] * pts[i][c]).sum();
                    let ok = pts
                        .iter()
                        .all(|p| (0..3).map(|c| nn[c] * p[c]).sum::<f64>() <= off + 1e-12);
                    let dup = out.iter().any(|(m, o)| {
                        (0..3).all(|c| (m[c] - nn[c]).abs() < 1e-9) && (o - off).abs() < 1e-9
                    });
                    if ok && !dup {
                        out.push((nn, off));
                    }
                }
            }
        }
    }
    out
}

#[test]
fn hull_cube_matches_brute_force() {
    let cube: Vec<Vec<f64>> = (0..8)
        .map(|m| (0..3).map(|k| ((m >> k) & 1) as f64).collect())
        .collect();
    let oracle = brute_force_facets(&cube);
    assert_eq!(oracle.len(), 6);
    let hull = convex_hull(&cube).unwrap();
    assert_eq!(hull.num_rows(), oracle.len());
    for (n, o) in &oracle {
        assert!(hull
            .a()
            .rows_iter()
            .zip(hull.b())
            .any(|(r, b)| (0..3).all(|c| (r[c] - n[c]).abs() < 1e-9) && (b - o).abs() < 1e-9));
    }
}

#[test]
fn hull_rejects_degenerate_and_high_dimension() {
    let collinear = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
    assert!(matches!(
        convex_hull(&collinear),
        Err(GeometryError::Degenerate { dim: 2, affine_rank: 1 })
    ));
    let planar: Vec<Vec<f64>> = (0..4)
        .map(|m| vec![(m & 1) as f64, (m >> 1) as f64, 0.0])
        .collect();
    assert!(matches!(
        convex_hull(&planar),
        Err(GeometryError::Degenerate { dim: 3, affine_rank: 2 })
    ));
    let four_d = vec![vec![0.0; 4], vec![1.0, 0.0, 0.0, 0.0]];
    assert!(matches!(
        convex_hull(&four_d),
        Err(GeometryError::UnsupportedDimension { dim: 4, .. })
    ));
}

#[test]
fn box_vertex_examples() {
    let b1 = AxisBox::new(vec![0.0], vec![1.0]).unwrap();
    assert_eq!(box_vertices(&b1, false).unwrap(), vec![vec![0.0], vec![1.0]]);
    let b2 = AxisBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
    assert_eq!(box_vertices(&b2, false).unwrap().len(), 4);
    let flat = AxisBox::new(vec![0.5; 3], vec![0.5; 3]).unwrap();
    assert_eq!(box_vertices(&flat, false).unwrap().len(), 8);
    assert_eq!(box_vertices(&flat, true).unwrap().len(), 1);
    let big = AxisBox::new(vec![0.0; 13], vec![1.0; 13]).unwrap();
    assert!(matches!(
        box_vertices(&big, false),
        Err(GeometryError::TooManyVertices { dim: 13, cap: 12 })
    ));
}

#[test]
fn box_rejects_inverted_bounds() {
    assert!(matches!(
        AxisBox::new(vec![1.0], vec![0.0]),
        Err(GeometryError::InvertedBox { axis: 0 })
    ));
}

#[test]
fn support_examples() {
    assert!((support_value(&unit_square(), &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((support_value(&unit_square(), &[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-12);
    assert!((support_value(&triangle(), &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
    let half = HPolytope::from_rows(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
    assert_eq!(support_value(&half, &[0.0, 1.0]), Err(GeometryError::Unbounded));
}

#[test]
fn vertices_of_template() {
    let p = HPolytope::<f64>::from_rows(
        vec![
            vec![0.0, 1.0],
            vec![0.0, -1.0],
            vec![1.0, 0.25],
            vec![-1.0, -0.25],
        ],
        vec![1.0, 1.0, 1.0, 1.0],
    )
    .unwrap();
    let vs = enumerate_vertices(&p).unwrap();
    assert_eq!(vs.len(), 4);
    for v in &vs {
        assert!(p.depth(v).abs() < 1e-12);
    }
    let bb = bounding_box(&p).unwrap();
    assert!((bb.upper[0] - 1.25).abs() < 1e-12 && (bb.lower[1] + 1.0).abs() < 1e-12);
}

fn points_2d() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 4..25)
}

fn points_3d() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 5..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hull_contains_inputs_2d(pts in points_2d()) {
        if let Ok(h) = convex_hull(&pts) {
            for p in &pts {
                prop_assert!(contains(&h, p, 1e-9).unwrap());
            }
            // every facet touches at least two inputs
            for (r, &b) in h.a().rows_iter().zip(h.b()) {
                let touching = pts.iter().filter(|p| (dot(r, p) - b).abs() <= 1e-9).count();
                prop_assert!(touching >= 2);
            }
        }
    }

    #[test]
    fn hull_facets_are_all_needed_2d(pts in points_2d()) {
        if let Ok(h) = convex_hull(&pts) {
            let rows = h.a().to_rows();
            for drop in 0..rows.len() {
                // Without facet `drop`, the set strictly exceeds the input
                // hull: its outward normal's support grows past the facet.
                let keep: Vec<Vec<f64>> = rows.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, r)| r.clone()).collect();
                let b: Vec<f64> = h.b().iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, &v)| v).collect();
                let relaxed = HPolytope::from_rows(keep, b).unwrap();
                let witness = support_value(&relaxed, &rows[drop]);
                let escaped = match witness {
                    Err(GeometryError::Unbounded) => true,
                    Ok(v) => v > h.b()[drop] + 1e-9,
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                };
                prop_assert!(escaped);
            }
        }
    }

    #[test]
    fn hull_contains_inputs_3d(pts in points_3d()) {
        if let Ok(h) = convex_hull(&pts) {
            for p in &pts {
                prop_assert!(contains(&h, p, 1e-9).unwrap());
            }
            for (r, &b) in h.a().rows_iter().zip(h.b()) {
                let touching = pts.iter().filter(|p| (dot(r, p) - b).abs() <= 1e-9).count();
                prop_assert!(touching >= 3);
            }
        }
    }

    #[test]
    fn lp_beats_sampled_feasible_points(
        lo in prop::collection::vec(-3.0f64..0.0, 3),
        width in prop::collection::vec(0.1f64..3.0, 3),
        cut in prop::collection::vec(-1.0f64..1.0, 3),
        obj in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
        let bx = AxisBox::new(lo.clone(), hi).unwrap();
        let centre: Vec<f64> = bx.lower.iter().zip(&bx.upper).map(|(l, u)| 0.5 * (l + u)).collect();
        let cut_poly = HPolytope::from_rows(vec![cut.clone()], vec![dot(&cut, &centre) + 0.1]).unwrap();
        let poly = HPolytope::from_box(&bx).intersect(&cut_poly).unwrap();
        let out = lp_solve(&obj, &poly).unwrap();
        prop_assert!(out.is_optimal());
        let x = out.point.unwrap();
        let v = out.value.unwrap();
        prop_assert!(contains(&poly, &x, 1e-9).unwrap());
        prop_assert!((dot(&obj, &x) - v).abs() < 1e-9);
        for corner in box_vertices(&bx, false).unwrap() {
            if contains(&poly, &corner, 0.0).unwrap() {
                prop_assert!(dot(&obj, &corner) >= v - 1e-9);
            }
        }
    }

    #[test]
    fn support_brackets_members(pts in points_2d(), t in prop::collection::vec(0.0f64..1.0, 3)) {
        if let Ok(h) = convex_hull(&pts) {
            let bb = bounding_box(&h).unwrap();
            let s: f64 = t.iter().sum::<f64>().max(1e-9);
            let member: Vec<f64> = (0..2)
                .map(|k| (t[0] * pts[0][k] + t[1] * pts[1][k] + t[2] * pts[2][k]) / s)
                .collect();
            for k in 0..2 {
                prop_assert!(member[k] <= bb.upper[k] + 1e-9);
                prop_assert!(member[k] >= bb.lower[k] - 1e-9);
            }
        }
    }
}
