//! Convex hulls in two and three dimensions, returned in inequality form.

use std::collections::BTreeSet;

use crate::scalar::{dot, Scalar};

use super::{GeometryError, HPolytope, Matrix};

/// Convex hull of `points` as `{x : A x ≤ b}` with unit-length facet normals.
///
/// Only 2-D and 3-D inputs are supported; affinely dependent inputs are
/// rejected rather than lifted.
pub fn convex_hull<T: Scalar>(points: &[Vec<T>]) -> Result<HPolytope<T>, GeometryError> {
    let dim = points.first().map_or(0, Vec::len);
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(GeometryError::DimensionMismatch {
            context: "hull point".into(),
            expected: dim,
            found: p.len(),
        });
    }
    if points.iter().any(|p| !crate::scalar::all_finite(p)) {
        return Err(GeometryError::NonFinite("hull point".into()));
    }
    match dim {
        2 => hull_2d(points),
        3 => hull_3d(points),
        d => Err(GeometryError::UnsupportedDimension {
            dim: d,
            hint: "convex hulls are limited to 2-D and 3-D; use the monotone-cell epigraph path",
        }),
    }
}

fn scale_of<T: Scalar>(points: &[Vec<T>]) -> T {
    points
        .iter()
        .fold(T::zero(), |m, p| m.max(crate::scalar::max_abs(p)))
        .max(T::one())
}

fn cross2<T: Scalar>(o: &[T], a: &[T], b: &[T]) -> T {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn hull_2d<T: Scalar>(points: &[Vec<T>]) -> Result<HPolytope<T>, GeometryError> {
    let scale = scale_of(points);
    let eps = T::of(T::DEDUP_TOL) * scale * scale;
    let mut pts: Vec<&Vec<T>> = points.iter().collect();
    pts.sort_by(|a, b| {
        a[0].partial_cmp(&b[0])
            .unwrap()
            .then(a[1].partial_cmp(&b[1]).unwrap())
    });
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= eps && (a[1] - b[1]).abs() <= eps);
    if pts.len() < 3 {
        return Err(GeometryError::Degenerate {
            dim: 2,
            affine_rank: pts.len().saturating_sub(1),
        });
    }

    // Andrew's monotone chain, dropping collinear points.
    let mut lower: Vec<&Vec<T>> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross2(lower[lower.len() - 2], lower[lower.len() - 1], p) <= eps {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<&Vec<T>> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(upper[upper.len() - 2], upper[upper.len() - 1], p) <= eps {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    let ring: Vec<&Vec<T>> = lower.into_iter().chain(upper).collect();
    if ring.len() < 3 {
        return Err(GeometryError::Degenerate {
            dim: 2,
            affine_rank: 1,
        });
    }

    let mut rows = Vec::with_capacity(ring.len());
    let mut rhs = Vec::with_capacity(ring.len());
    for k in 0..ring.len() {
        let p = ring[k];
        let q = ring[(k + 1) % ring.len()];
        // counter-clockwise ring: outward normal is the edge rotated clockwise
        let nx = q[1] - p[1];
        let ny = p[0] - q[0];
        let norm = (nx * nx + ny * ny).sqrt();
        let n = vec![nx / norm, ny / norm];
        rhs.push(dot(&n, p));
        rows.push(n);
    }
    HPolytope::new(Matrix::from_rows(rows)?, rhs)
}

fn sub3<T: Scalar>(a: &[T], b: &[T]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3<T: Scalar>(u: [T; 3], v: [T; 3]) -> [T; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

fn norm3<T: Scalar>(u: [T; 3]) -> T {
    (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
}

#[derive(Clone, Copy)]
struct Face<T: Scalar> {
    v: [usize; 3],
    normal: [T; 3],
    offset: T,
}

impl<T: Scalar> Face<T> {
    fn new(pts: &[Vec<T>], v: [usize; 3]) -> Self {
        let n = cross3(sub3(&pts[v[1]], &pts[v[0]]), sub3(&pts[v[2]], &pts[v[0]]));
        let len = norm3(n);
        let normal = [n[0] / len, n[1] / len, n[2] / len];
        let offset = dot(&normal, &pts[v[0]]);
        Self { v, normal, offset }
    }

    fn distance(&self, p: &[T]) -> T {
        dot(&self.normal, p) - self.offset
    }
}

fn hull_3d<T: Scalar>(points: &[Vec<T>]) -> Result<HPolytope<T>, GeometryError> {
    let scale = scale_of(points);
    let eps = T::of(T::DEDUP_TOL) * T::of(1e2) * scale;

    let mut pts: Vec<Vec<T>> = Vec::with_capacity(points.len());
    for p in points {
        if !pts
            .iter()
            .any(|q| (0..3).all(|k| (p[k] - q[k]).abs() <= eps))
        {
            pts.push(p.clone());
        }
    }

    // Initial simplex from extreme points.
    let i0 = 0;
    let far = |from: &dyn Fn(&Vec<T>) -> T| -> (usize, T) {
        pts.iter()
            .enumerate()
            .map(|(i, p)| (i, from(p)))
            .fold((0, T::neg_infinity()), |a, b| if b.1 > a.1 { b } else { a })
    };
    let (i1, d1) = far(&|p| norm3(sub3(p, &pts[i0])));
    if d1 <= eps {
        return Err(GeometryError::Degenerate { dim: 3, affine_rank: 0 });
    }
    let dir = sub3(&pts[i1], &pts[i0]);
    let (i2, d2) = far(&|p| norm3(cross3(dir, sub3(p, &pts[i0]))) / d1);
    if d2 <= eps {
        return Err(GeometryError::Degenerate { dim: 3, affine_rank: 1 });
    }
    let plane_n = cross3(dir, sub3(&pts[i2], &pts[i0]));
    let plane_len = norm3(plane_n);
    let (i3, d3) = far(&|p| (dot(&plane_n, &sub3(p, &pts[i0])) / plane_len).abs());
    if d3 <= eps {
        return Err(GeometryError::Degenerate { dim: 3, affine_rank: 2 });
    }

    let centroid: Vec<T> = (0..3)
        .map(|k| (pts[i0][k] + pts[i1][k] + pts[i2][k] + pts[i3][k]) / T::of(4.0))
        .collect();
    let mut faces: Vec<Face<T>> = Vec::new();
    for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        let mut f = Face::new(&pts, tri);
        if f.distance(&centroid) > T::zero() {
            f = Face::new(&pts, [tri[0], tri[2], tri[1]]);
        }
        faces.push(f);
    }

    for p in 0..pts.len() {
        if [i0, i1, i2, i3].contains(&p) {
            continue;
        }
        let visible: Vec<bool> = faces.iter().map(|f| f.distance(&pts[p]) > eps).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut visible_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                visible_edges.insert((f.v[k], f.v[(k + 1) % 3]));
            }
        }
        let horizon: Vec<(usize, usize)> = visible_edges
            .iter()
            .filter(|&&(a, b)| !visible_edges.contains(&(b, a)))
            .copied()
            .collect();
        let mut next: Vec<Face<T>> = faces
            .iter()
            .zip(&visible)
            .filter(|(_, &v)| !v)
            .map(|(f, _)| *f)
            .collect();
        for (a, b) in horizon {
            next.push(Face::new(&pts, [a, b, p]));
        }
        faces = next;
    }

    // Merge coplanar triangles into facets.
    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut rhs: Vec<T> = Vec::new();
    let merge_tol = T::of(T::FEAS_TOL);
    for f in &faces {
        if !f.normal.iter().all(|x| x.is_finite()) {
            continue;
        }
        let dup = rows.iter().zip(&rhs).any(|(n, &o)| {
            (0..3).all(|k| (n[k] - f.normal[k]).abs() <= merge_tol)
                && (o - f.offset).abs() <= merge_tol * scale
        });
        if !dup {
            rows.push(f.normal.to_vec());
            rhs.push(f.offset);
        }
    }
    HPolytope::new(Matrix::from_rows(rows)?, rhs)
}
