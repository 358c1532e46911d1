//! Lines, tubes, boxes and slabs in `R^n` (n >= 3).
//!
//! A line segment is parametrised by a base point `x` and a slope `v`, both in
//! the open unit ball of `R^{n-1}`; the segment itself is `{(x + v t, t) : t in [0, 1]}`.
//! Its tube is the closed `delta`-neighbourhood of the segment.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Result};

pub type Point = Vec<f64>;

/// Orthogonality / unit-length tolerance for box axes and slab normals.
pub const FRAME_TOL: f64 = 1e-12;

/// Absolute slack applied to containment comparisons so exact lattice
/// configurations are not lost to rounding.
pub const CONTAIN_TOL: f64 = 1e-12;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Component of `w` orthogonal to the unit vector `u`.
pub(crate) fn perp(w: &[f64], u: &[f64]) -> Vec<f64> {
    let c = dot(w, u);
    w.iter().zip(u).map(|(wi, ui)| wi - c * ui).collect()
}

pub(crate) fn normalized(w: &[f64]) -> Option<Vec<f64>> {
    let l = norm(w);
    (l > 1e-12).then(|| w.iter().map(|x| x / l).collect())
}

/// Completes the given orthonormal vectors to an orthonormal basis of `R^n`
/// by Gram-Schmidt against the standard basis; returns only the new vectors.
pub fn orthonormal_complement(given: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = given.to_vec();
    let mut out = Vec::new();
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        // two passes keep the frame orthogonal to ~1e-16
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&e, b);
                for (ei, bi) in e.iter_mut().zip(b) {
                    *ei -= c * bi;
                }
            }
        }
        if norm(&e) > 1e-6 {
            let e = normalized(&e).unwrap();
            basis.push(e.clone());
            out.push(e);
        }
    }
    out
}

/// Volume of the unit ball in `R^k`.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(k - 2) * 2.0 * PI / k as f64,
    }
}

/// Cross-sectional constant of a tube: `|T_l| ~ omega_{n-1} delta^{n-1} len(l)`.
pub fn tube_cross_section(n: usize) -> f64 {
    unit_ball_volume(n - 1)
}

/// Constant `c_n` of [`tube_intersection_bound`].
///
/// Calibrated by voxel counting two tubes of slopes `+-e_1 / 2` (unit angle
/// proxy) crossing at mid-height, `delta = 1/64`, cell `delta / 2`. The n = 3
/// and n = 4 values are frozen voxel measurements (see the `calibration`
/// integration test). Higher dimensions use the exact crossing volume of that
/// configuration, `8 omega_{n-2} / (n sin theta)` with `sin theta = 4/5`.
pub fn intersection_constant(n: usize) -> f64 {
    match n {
        3 => INTERSECTION_C3,
        4 => INTERSECTION_C4,
        _ => 8.0 * unit_ball_volume(n - 2) / (n as f64 * 0.8),
    }
}

pub const INTERSECTION_C3: f64 = 6.09375;
pub const INTERSECTION_C4: f64 = 8.125;

/// Ambient dimension, n >= 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbientDim(usize);

impl AmbientDim {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return domain(format!("ambient dimension must be >= 3, got {n}"));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSeg {
    x: Vec<f64>,
    v: Vec<f64>,
}

impl LineSeg {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() || x.len() < 2 {
            return domain("x and v must both lie in R^{n-1} with n >= 3");
        }
        if x.iter().chain(&v).any(|c| !c.is_finite()) {
            return domain("non-finite line coordinates");
        }
        if norm(&x) >= 1.0 {
            return domain(format!("|x| = {} is not < 1", norm(&x)));
        }
        if norm(&v) >= 1.0 {
            return domain(format!("|v| = {} is not < 1", norm(&v)));
        }
        Ok(Self { x, v })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Ambient dimension n.
    pub fn dim(&self) -> usize {
        self.x.len() + 1
    }

    pub fn point_at(&self, t: f64) -> Result<Point> {
        if !(0.0..=1.0).contains(&t) {
            return domain(format!("t = {t} outside [0, 1]"));
        }
        Ok(self.eval(t))
    }

    pub(crate) fn eval(&self, t: f64) -> Point {
        let mut p: Vec<f64> = self.x.iter().zip(&self.v).map(|(x, v)| x + v * t).collect();
        p.push(t);
        p
    }

    pub fn start(&self) -> Point {
        self.eval(0.0)
    }

    pub fn end(&self) -> Point {
        self.eval(1.0)
    }

    pub fn midpoint(&self) -> Point {
        self.eval(0.5)
    }

    /// `(v, 1)`, the displacement from start to end.
    pub fn direction(&self) -> Vec<f64> {
        let mut d = self.v.clone();
        d.push(1.0);
        d
    }

    pub fn unit_direction(&self) -> Vec<f64> {
        normalized(&self.direction()).expect("direction has last coordinate 1")
    }

    /// Euclidean length `sqrt(1 + |v|^2)`.
    pub fn length(&self) -> f64 {
        (1.0 + dot(&self.v, &self.v)).sqrt()
    }

    /// The same segment shifted by `dx` in the base position.
    pub fn translated(&self, dx: &[f64]) -> Result<Self> {
        Self::new(self.x.iter().zip(dx).map(|(a, b)| a + b).collect(), self.v.clone())
    }
}

/// Squared distance from `p` to the segment `a + s d`, `s in [0, 1]`, with `dd = |d|^2`.
#[inline]
pub(crate) fn point_segment_dist2(p: &[f64], a: &[f64], d: &[f64], dd: f64) -> f64 {
    let mut wd = 0.0;
    for k in 0..p.len() {
        wd += (p[k] - a[k]) * d[k];
    }
    let s = (wd / dd).clamp(0.0, 1.0);
    let mut r2 = 0.0;
    for k in 0..p.len() {
        let r = p[k] - a[k] - s * d[k];
        r2 += r * r;
    }
    r2
}

/// Minimum distance between two closed segments.
pub fn segment_distance(l1: &LineSeg, l2: &LineSeg) -> f64 {
    let a1 = l1.start();
    let d1 = l1.direction();
    let a2 = l2.start();
    let d2 = l2.direction();
    let dd1 = dot(&d1, &d1);
    let dd2 = dot(&d2, &d2);
    let r = sub(&a1, &a2);
    let b = dot(&d1, &d2);
    let e1 = dot(&d1, &r);
    let e2 = dot(&d2, &r);
    let at = |s: f64, t: f64| -> f64 {
        a1.iter()
            .zip(&d1)
            .zip(a2.iter().zip(&d2))
            .map(|((p, dp), (q, dq))| {
                let z = p + s * dp - q - t * dq;
                z * z
            })
            .sum::<f64>()
    };
    let mut best = f64::INFINITY;
    // the objective is convex on [0,1]^2: check the interior stationary point
    // and the clamped minimiser on each edge
    let det = dd1 * dd2 - b * b;
    if det > 1e-14 * dd1 * dd2 {
        let s = (b * e2 - dd2 * e1) / det;
        let t = (dd1 * e2 - b * e1) / det;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
            best = best.min(at(s, t));
        }
    }
    for s in [0.0, 1.0] {
        let t = ((e2 + s * b) / dd2).clamp(0.0, 1.0);
        best = best.min(at(s, t));
    }
    for t in [0.0, 1.0] {
        let s = ((t * b - e1) / dd1).clamp(0.0, 1.0);
        best = best.min(at(s, t));
    }
    best.sqrt()
}

/// Angle proxy `|v(l1) - v(l2)|`.
pub fn angle(l1: &LineSeg, l2: &LineSeg) -> f64 {
    dist(l1.v(), l2.v())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub line: LineSeg,
    pub delta: f64,
}

impl Tube {
    pub fn new(line: LineSeg, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return domain(format!("delta = {delta} outside (0, 1)"));
        }
        Ok(Self { line, delta })
    }

    /// Closed membership: distance to the segment at most `delta`.
    pub fn contains(&self, p: &[f64]) -> bool {
        let a = self.line.start();
        let d = self.line.direction();
        let dd = dot(&d, &d);
        point_segment_dist2(p, &a, &d, dd) <= self.delta * self.delta
    }
}

pub fn tube_contains(t: &Tube, p: &[f64]) -> bool {
    t.contains(p)
}

/// Analytic surrogate `c_n delta^n / (delta + angle)` for `|T_{l1} ∩ T_{l2}|`.
pub fn tube_intersection_bound(l1: &LineSeg, l2: &LineSeg, delta: f64) -> f64 {
    let n = l1.dim();
    intersection_constant(n) * delta.powi(n as i32) / (delta + angle(l1, l2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point,
    pub axes: Vec<Vec<f64>>,
    pub half_lengths: Vec<f64>,
}

impl OrientedBox {
    pub fn new(center: Point, axes: Vec<Vec<f64>>, half_lengths: Vec<f64>) -> Result<Self> {
        let n = center.len();
        if axes.len() != n || half_lengths.len() != n || axes.iter().any(|a| a.len() != n) {
            return domain("box needs n axes of length n and n half-lengths");
        }
        if half_lengths.iter().any(|h| !(*h > 0.0)) {
            return domain("box half-lengths must be positive");
        }
        for i in 0..n {
            for j in i..n {
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot(&axes[i], &axes[j]) - target).abs() > FRAME_TOL {
                    return domain("box axes are not orthonormal");
                }
            }
        }
        Ok(Self { center, axes, half_lengths })
    }

    /// Axis-aligned box with the given center and half-lengths.
    pub fn axis_aligned(center: Point, half_lengths: Vec<f64>) -> Result<Self> {
        let n = center.len();
        let axes = (0..n)
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                e
            })
            .collect();
        Self::new(center, axes, half_lengths)
    }

    /// Box whose first axis is `l`'s direction, centered at its midpoint;
    /// the remaining axes come from [`orthonormal_complement`].
    pub fn along(l: &LineSeg, half_lengths: Vec<f64>) -> Result<Self> {
        let u = l.unit_direction();
        let mut axes = vec![u.clone()];
        axes.extend(orthonormal_complement(&[u], l.dim()));
        Self::new(l.midpoint(), axes, half_lengths)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `p` lies in the box shrunk by `margin` along every axis.
    pub fn contains_point(&self, p: &[f64], margin: f64) -> bool {
        let w = sub(p, &self.center);
        self.axes
            .iter()
            .zip(&self.half_lengths)
            .all(|(a, h)| dot(&w, a).abs() <= h - margin + CONTAIN_TOL)
    }

    pub fn contains_tube(&self, t: &Tube) -> bool {
        if self.half_lengths.iter().any(|h| *h < t.delta) {
            return false;
        }
        self.contains_point(&t.line.start(), t.delta) && self.contains_point(&t.line.end(), t.delta)
    }
}

/// Containment certificate for "T_l in R": both endpoints of the axis lie in
/// `R` shrunk by `delta`, which places the whole closed tube inside `R`.
pub fn box_contains_tube(r: &OrientedBox, t: &Tube) -> bool {
    r.contains_tube(t)
}

/// The `theta/2`-neighbourhood of an affine 2-plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub plane_point: Point,
    pub normal_basis: Vec<Vec<f64>>,
    pub theta: f64,
}

impl Slab {
    pub fn new(plane_point: Point, normal_basis: Vec<Vec<f64>>, theta: f64) -> Result<Self> {
        let n = plane_point.len();
        if normal_basis.len() + 2 != n || normal_basis.iter().any(|b| b.len() != n) {
            return domain("slab needs n-2 normal vectors in R^n");
        }
        if !(theta > 0.0) {
            return domain("slab thickness must be positive");
        }
        for i in 0..normal_basis.len() {
            for j in i..normal_basis.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot(&normal_basis[i], &normal_basis[j]) - target).abs() > FRAME_TOL {
                    return domain("slab normals are not orthonormal");
                }
            }
        }
        Ok(Self { plane_point, normal_basis, theta })
    }

    /// Slab around the plane through `point` spanned by `d1`, `d2`
    /// (linearly independent, not necessarily orthonormal).
    pub fn spanned_by(point: Point, d1: &[f64], d2: &[f64], theta: f64) -> Result<Self> {
        let n = point.len();
        let e1 = normalized(d1).ok_or_else(|| crate::Error::Domain("zero spanning vector".into()))?;
        let e2 = normalized(&perp(d2, &e1))
            .ok_or_else(|| crate::Error::Domain("spanning vectors are parallel".into()))?;
        let normals = orthonormal_complement(&[e1, e2], n);
        Self::new(point, normals, theta)
    }

    /// Norm of the component of `p - plane_point` normal to the plane.
    pub fn normal_distance(&self, p: &[f64]) -> f64 {
        let w = sub(p, &self.plane_point);
        self.normal_basis
            .iter()
            .map(|b| {
                let c = dot(&w, b);
                c * c
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.normal_distance(p) <= self.theta / 2.0
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(self.plane_point.clone(), self.normal_basis.clone(), theta)
    }
}
