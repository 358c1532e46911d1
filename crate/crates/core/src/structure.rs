//! Structural statistics of tube families: plate number, dyadic bins,
//! hairbrushes, two-ends, bilinear splitting, L^2 incidence counts, slabs.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimate::{Exponent, ExponentProfile};
use crate::family::TubeFamily;
use crate::geom::{
    dist, dot, normalized, orthonormal_complement, perp, segment_distance, tube_cross_section, tube_intersection_bound, LineSeg,
    OrientedBox, Point, Slab, Tube, CONTAIN_TOL,
};
use crate::raster::{multiplicity_histogram, multiplicity_histogram_where, visit_tube_all, GridSpec, ScalarField, TubeGeom};

// ---------------------------------------------------------------- plate number

pub const DEFAULT_PLATE_C: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateOptions {
    /// Box scale: half-lengths are `(C/2, C w/2, C delta/2, ...)`. Must exceed 2.
    pub c: f64,
    /// Nearest partners (by midpoint) tried for each seed tube.
    pub partners: usize,
    /// Upper bound on the number of seed tubes, spread evenly over the family.
    pub max_seeds: usize,
    /// Candidates kept for local refinement of the center.
    pub refine: usize,
}

impl Default for PlateOptions {
    fn default() -> Self {
        Self { c: DEFAULT_PLATE_C, partners: 8, max_seeds: 512, refine: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateResult {
    /// `count / (w / delta)`, a lower bound for the plate number.
    pub value: f64,
    pub count: usize,
    pub w: f64,
    pub c: f64,
    pub delta: f64,
    pub witness: OrientedBox,
}

fn plate_box(center: &[f64], axes: &[Vec<f64>], w: f64, delta: f64, c: f64) -> Result<OrientedBox> {
    let n = center.len();
    let mut half = vec![c * delta / 2.0; n];
    half[0] = c / 2.0;
    half[1] = c * w / 2.0;
    OrientedBox::new(center.to_vec(), axes.to_vec(), half)
}

/// Number of tubes of `f` contained in `witness`.
pub fn plate_count(f: &TubeFamily, witness: &OrientedBox) -> usize {
    f.lines
        .iter()
        .filter(|l| witness.contains_tube(&Tube { line: (*l).clone(), delta: f.delta }))
        .count()
}

/// Recomputes `count / (w / delta)` from the witness alone.
pub fn verify_plate(f: &TubeFamily, r: &PlateResult) -> f64 {
    plate_count(f, &r.witness) as f64 / (r.w / f.delta)
}

/// Endpoints, for fast containment counts.
struct Ends(Vec<(Point, Point)>);

impl Ends {
    fn new(f: &TubeFamily) -> Self {
        Ends(f.lines.iter().map(|l| (l.start(), l.end())).collect())
    }

    fn count(&self, center: &[f64], axes: &[Vec<f64>], half: &[f64], delta: f64) -> usize {
        if half.iter().any(|h| *h < delta) {
            return 0;
        }
        let inside = |p: &[f64]| {
            axes.iter().zip(half).all(|(a, h)| {
                let c: f64 = p.iter().zip(center).zip(a).map(|((pi, ci), ai)| (pi - ci) * ai).sum();
                c.abs() <= h - delta + CONTAIN_TOL
            })
        };
        self.0.iter().filter(|(a, b)| inside(a) && inside(b)).count()
    }
}

#[derive(Clone)]
struct PlateCand {
    value: f64,
    count: usize,
    w: f64,
    center: Point,
    axes: Vec<Vec<f64>>,
}

/// Larger value first; then smaller `w`; then lexicographically smaller center.
fn plate_order(a: &PlateCand, b: &PlateCand) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then(a.w.total_cmp(&b.w))
        .then_with(|| a.center.iter().zip(&b.center).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal))
}

fn widths(delta: f64) -> Vec<f64> {
    let mut out = vec![delta];
    while out.last().unwrap() * 2.0 <= 1.0 + 1e-12 {
        out.push(out.last().unwrap() * 2.0);
    }
    out
}

fn best_width(ends: &Ends, center: &[f64], axes: &[Vec<f64>], delta: f64, c: f64) -> PlateCand {
    let n = center.len();
    let mut best: Option<PlateCand> = None;
    for w in widths(delta) {
        let mut half = vec![c * delta / 2.0; n];
        half[0] = c / 2.0;
        half[1] = c * w / 2.0;
        let count = ends.count(center, axes, &half, delta);
        let cand = PlateCand { value: count as f64 / (w / delta), count, w, center: center.to_vec(), axes: axes.to_vec() };
        if best.as_ref().map_or(true, |b| plate_order(&cand, b) == Ordering::Less) {
            best = Some(cand);
        }
    }
    best.expect("at least one width")
}

fn frame_for(u: &[f64], second: &[f64]) -> Option<Vec<Vec<f64>>> {
    let a1 = normalized(&perp(second, u))?;
    let mut axes = vec![u.to_vec(), a1.clone()];
    axes.extend(orthonormal_complement(&[u.to_vec(), a1], u.len()));
    (axes.len() == u.len()).then_some(axes)
}

pub fn plate_number(f: &TubeFamily, opts: &PlateOptions) -> Result<PlateResult> {
    plate_number_seeded(f, &[], opts)
}

/// Plate-number search that also evaluates the given witnesses on `f`,
/// so searching a superset seeded with a subset's witness never returns less.
pub fn plate_number_seeded(f: &TubeFamily, seeds: &[PlateResult], opts: &PlateOptions) -> Result<PlateResult> {
    if f.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if !(opts.c > 2.0) {
        return domain("plate scale C must exceed 2");
    }
    let delta = f.delta;
    let n = f.n;
    let c = opts.c;
    let ends = Ends::new(f);
    let mids: Vec<Point> = f.lines.iter().map(|l| l.midpoint()).collect();
    let units: Vec<Vec<f64>> = f.lines.iter().map(|l| l.unit_direction()).collect();
    let stride = f.len().div_ceil(opts.max_seeds.max(1));
    let seed_ids: Vec<usize> = (0..f.len()).step_by(stride.max(1)).collect();

    let mut cands: Vec<PlateCand> = seed_ids
        .par_iter()
        .flat_map_iter(|&i| {
            let u = &units[i];
            let mut frames: Vec<(Point, Vec<Vec<f64>>)> = Vec::new();
            let mut base = vec![u.clone()];
            base.extend(orthonormal_complement(&[u.clone()], n));
            frames.push((mids[i].clone(), base));
            let mut near: Vec<(f64, usize)> =
                (0..f.len()).filter(|&j| j != i).map(|j| (dist(&mids[i], &mids[j]), j)).collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in near.iter().take(opts.partners) {
                let disp: Vec<f64> = mids[j].iter().zip(&mids[i]).map(|(a, b)| a - b).collect();
                let axes = frame_for(u, &disp).or_else(|| frame_for(u, &units[j]));
                if let Some(axes) = axes {
                    let half_way: Point = mids[i].iter().zip(&mids[j]).map(|(a, b)| (a + b) / 2.0).collect();
                    frames.push((mids[i].clone(), axes.clone()));
                    frames.push((half_way, axes));
                }
            }
            frames.into_iter().map(|(ctr, axes)| best_width(&ends, &ctr, &axes, delta, c)).collect::<Vec<_>>()
        })
        .collect();
    for s in seeds {
        if s.witness.dim() == n {
            let count = ends.count(&s.witness.center, &s.witness.axes, &s.witness.half_lengths, delta);
            // witnesses built with a different C are not comparable and are skipped
            let w = s.w;
            if (s.c - c).abs() < 1e-15 {
                cands.push(PlateCand { value: count as f64 / (w / delta), count, w, center: s.witness.center.clone(), axes: s.witness.axes.clone() });
            }
        }
    }
    cands.sort_by(plate_order);

    // local refinement: move the center along the transverse axes
    let refined: Vec<PlateCand> = cands
        .iter()
        .take(opts.refine)
        .cloned()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|mut cur| {
            let mut half = vec![c * delta / 2.0; n];
            half[0] = c / 2.0;
            half[1] = c * cur.w / 2.0;
            let mut step = delta / 2.0;
            while step >= delta / 8.0 {
                let mut improved = true;
                while improved {
                    improved = false;
                    for k in 1..n {
                        for sgn in [-1.0, 1.0] {
                            let ctr: Point = cur.center.iter().zip(&cur.axes[k]).map(|(p, a)| p + sgn * step * a).collect();
                            let count = ends.count(&ctr, &cur.axes, &half, delta);
                            if count > cur.count {
                                cur = PlateCand { value: count as f64 / (cur.w / delta), count, w: cur.w, center: ctr, axes: cur.axes.clone() };
                                improved = true;
                            }
                        }
                    }
                }
                step /= 2.0;
            }
            cur
        })
        .collect();
    cands.extend(refined);
    let best = cands.into_iter().min_by(plate_order).expect("nonempty family yields candidates");
    let witness = plate_box(&best.center, &best.axes, best.w, delta, c)?;
    let count = plate_count(f, &witness);
    Ok(PlateResult { value: count as f64 / (best.w / delta), count, w: best.w, c, delta, witness })
}

// ------------------------------------------------------------- dyadic bins

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicBin {
    pub line: LineSeg,
    /// Local multiplicity level, a power of two.
    pub mu: u64,
    /// Dominant angle level `delta 2^j`.
    pub sigma: f64,
    pub sigma_level: u32,
    pub cells: Vec<usize>,
}

/// Splits the cells of `T_l ∩ E` by multiplicity level `mu` (next power of
/// two of the cell's multiplicity) and dominant angle `sigma` (smallest
/// `delta 2^j` such that the tubes through the cell with `delta + |v - v(l)| <= sigma`
/// account for at least half of the multiplicity).
pub fn dyadic_decompose(l: &LineSeg, f: &TubeFamily, e: &ScalarField) -> Result<Vec<DyadicBin>> {
    if !f.lines.contains(l) {
        return domain("the line must belong to the family");
    }
    if e.spec().n != f.n {
        return domain("field and family dimensions differ");
    }
    let delta = f.delta;
    let partners: Vec<(TubeGeom, f64)> = f
        .lines
        .iter()
        .filter(|m| segment_distance(l, m) <= 2.0 * delta * (1.0 + 1e-12))
        .map(|m| (TubeGeom::new(m, delta), delta + dist(m.v(), l.v())))
        .collect();
    let vals = e.values();
    let mut bins: BTreeMap<(u64, u32), Vec<usize>> = BTreeMap::new();
    let mut angles = Vec::with_capacity(partners.len());
    visit_tube_all(e.spec(), &TubeGeom::new(l, delta), |idx, p| {
        if vals[idx] <= 0.0 {
            return;
        }
        angles.clear();
        angles.extend(partners.iter().filter(|(g, _)| g.contains(p)).map(|(_, a)| *a));
        let total = angles.len().max(1) as u64;
        let mu = total.next_power_of_two();
        let mut level = 0u32;
        loop {
            let sigma = delta * (level as f64).exp2();
            let within = angles.iter().filter(|a| **a <= sigma * (1.0 + 1e-12)).count() as u64;
            if 2 * within >= total {
                break;
            }
            level += 1;
        }
        bins.entry((mu, level)).or_default().push(idx);
    });
    Ok(bins
        .into_iter()
        .map(|((mu, level), cells)| DyadicBin {
            line: l.clone(),
            mu,
            sigma: delta * (level as f64).exp2(),
            sigma_level: level,
            cells,
        })
        .collect())
}

// ---------------------------------------------------------------- hairbrush

/// `{l in f : T_l meets T_{l0} and delta + |v(l) - v(l0)| is within 2^{±slack} of sigma}`.
pub fn hairbrush(f: &TubeFamily, l0: &LineSeg, sigma: f64, slack_dyadic: u32) -> TubeFamily {
    let delta = f.delta;
    let window = (slack_dyadic as f64).exp2();
    let lines = f
        .lines
        .iter()
        .filter(|l| {
            let a = delta + dist(l.v(), l0.v());
            a >= sigma / window * (1.0 - 1e-12)
                && a <= sigma * window * (1.0 + 1e-12)
                && segment_distance(l, l0) <= 2.0 * delta * (1.0 + 1e-12)
        })
        .cloned()
        .collect();
    f.with_lines(lines)
}

// ---------------------------------------------------------------- two ends

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoEndsParams {
    /// The large integer `N`; balls have radius `delta^{1/N}`.
    pub n_big: u32,
    pub epsilon: f64,
    /// Multiplicative slack standing in for the polylog loss.
    pub slack: f64,
}

impl Default for TwoEndsParams {
    fn default() -> Self {
        Self { n_big: 10, epsilon: 0.1, slack: 1.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoEndsReport {
    pub holds: bool,
    pub radius: f64,
    /// `delta^{eps/2N} * lambda * omega_{n-1} delta^{n-1} len(l) * slack`.
    pub bound: f64,
    pub worst_mass: f64,
    pub worst_center: Option<Point>,
    pub balls: usize,
}

/// Largest mass of `T ∩ E` in a ball of radius `delta^{1/N}` centered on the
/// axis, against `delta^{eps/2N} lambda |T|_analytic * slack`.
pub fn two_ends_report(t: &Tube, e: &ScalarField, params: &TwoEndsParams, lambda: f64) -> Result<TwoEndsReport> {
    if !(lambda > 0.0) {
        return domain("lambda must be positive");
    }
    if params.n_big < 2 {
        return domain("N must be >= 2");
    }
    let delta = t.delta;
    let n = t.line.dim();
    let big = params.n_big as f64;
    let radius = delta.powf(1.0 / big);
    let len = t.line.length();
    let bound = delta.powf(params.epsilon / (2.0 * big))
        * lambda
        * tube_cross_section(n)
        * delta.powi(n as i32 - 1)
        * len
        * params.slack;
    let spacing = radius / 2.0;
    let balls = (len / spacing).ceil() as usize + 1;
    let vals = e.values();
    let mut pts: Vec<Point> = Vec::new();
    visit_tube_all(e.spec(), &TubeGeom::new(&t.line, delta), |idx, p| {
        if vals[idx] > 0.0 {
            pts.push(p.to_vec());
        }
    });
    let cellvol = e.spec().cell_volume();
    let mut worst_mass = 0.0;
    let mut worst_center = None;
    for k in 0..balls {
        let s = ((k as f64 * spacing) / len).min(1.0);
        let c = t.line.point_at(s)?;
        let mass = pts.iter().filter(|p| dist(p, &c) <= radius).count() as f64 * cellvol;
        if mass > worst_mass {
            worst_mass = mass;
            worst_center = Some(c);
        }
    }
    Ok(TwoEndsReport { holds: worst_mass <= bound, radius, bound, worst_mass, worst_center, balls })
}

pub fn two_ends_check(t: &Tube, e: &ScalarField, params: &TwoEndsParams, lambda: f64) -> Result<bool> {
    Ok(two_ends_report(t, e, params, lambda)?.holds)
}

// ---------------------------------------------------------------- bilinear

pub const DEFAULT_C0: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearResult {
    pub first: TubeFamily,
    pub second: TubeFamily,
    /// `||(sum_{E1} chi)(sum_{E2} chi)||_{p'/2}^{1/2}`.
    pub norm: f64,
    /// Lattice cells of the two direction groups.
    pub cells: (Vec<i64>, Vec<i64>),
    pub separation: f64,
}

/// Sorted sparse multiplicity field of a group of tubes.
fn sparse_field(spec: &GridSpec, lines: &[&LineSeg], delta: f64) -> Vec<(usize, u32)> {
    let mut idx: Vec<usize> = Vec::new();
    for l in lines {
        visit_tube_all(spec, &TubeGeom::new(l, delta), |i, _| idx.push(i));
    }
    idx.sort_unstable();
    let mut out: Vec<(usize, u32)> = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some((j, c)) if *j == i => *c += 1,
            _ => out.push((i, 1)),
        }
    }
    out
}

/// `(sum (g1 g2)^s cellvol)^{1/s}` with `s = p'/2`, square-rooted.
fn product_quasi_norm(a: &[(usize, u32)], b: &[(usize, u32)], s: Exponent, cellvol: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut prods: Vec<f64> = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                prods.push(a[i].1 as f64 * b[j].1 as f64);
                i += 1;
                j += 1;
            }
        }
    }
    let q = match s {
        Exponent::Infinite => prods.iter().copied().fold(0.0, f64::max),
        Exponent::Finite(_) => {
            let s = s.to_f64();
            let terms: Vec<f64> = prods.iter().map(|x| x.powf(s) * cellvol).collect();
            crate::numeric::pairwise_sum(&terms).powf(1.0 / s)
        }
    };
    q.sqrt()
}

/// Key of the direction-lattice cell of side `c0 / (4 sqrt(n-1))`, so cells have diameter `c0/4`.
fn direction_cell(v: &[f64], side: f64) -> Vec<i64> {
    v.iter().map(|c| (c / side).floor() as i64).collect()
}

pub fn bilinear_split(f: &TubeFamily, c0: f64, profile: &ExponentProfile, budget_cells: u64) -> Result<BilinearResult> {
    if !(c0 > 0.0 && c0 < 1.0) {
        return domain("c0 must lie in (0, 1)");
    }
    if f.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let h = f.n - 1;
    let side = c0 / (4.0 * (h as f64).sqrt());
    let mut groups: BTreeMap<Vec<i64>, Vec<&LineSeg>> = BTreeMap::new();
    for l in &f.lines {
        groups.entry(direction_cell(l.v(), side)).or_default().push(l);
    }
    let keys: Vec<&Vec<i64>> = groups.keys().collect();
    let centre = |k: &[i64]| -> Point { k.iter().map(|i| (*i as f64 + 0.5) * side).collect() };
    let mut pairs = Vec::new();
    for a in 0..keys.len() {
        for b in a + 1..keys.len() {
            let s = dist(&centre(keys[a]), &centre(keys[b]));
            if s >= c0 / 2.0 {
                pairs.push((a, b, s));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoSeparatedPair);
    }
    let spec = GridSpec::covering(f.n, &f.lines, f.delta, f.delta / 2.0)?;
    let cellvol = spec.cell_volume();
    let visits: f64 = f.lines.iter().map(|l| f.tube_measure(l) / cellvol).sum();
    if visits > budget_cells as f64 {
        return Err(Error::Budget { required: visits.ceil() as u64, limit: budget_cells });
    }
    let fields: Vec<Vec<(usize, u32)>> = keys.par_iter().map(|k| sparse_field(&spec, &groups[*k], f.delta)).collect();
    let s = match profile.p_conj() {
        Exponent::Infinite => Exponent::Infinite,
        Exponent::Finite(x) => Exponent::Finite(x / 2),
    };
    let scored: Vec<f64> = pairs.par_iter().map(|(a, b, _)| product_quasi_norm(&fields[*a], &fields[*b], s, cellvol)).collect();
    // first maximum in lexicographic pair order
    let mut best = 0;
    for (i, v) in scored.iter().enumerate() {
        if *v > scored[best] {
            best = i;
        }
    }
    let (a, b, sep) = pairs[best];
    let take = |k: usize| f.with_lines(groups[keys[k]].iter().map(|l| (*l).clone()).collect());
    Ok(BilinearResult {
        first: take(a),
        second: take(b),
        norm: scored[best],
        cells: (keys[a].clone(), keys[b].clone()),
        separation: sep,
    })
}

// ---------------------------------------------------------------- Córdoba

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CordobaResult {
    pub measured_l2_sq: f64,
    pub incidence_bound: f64,
    /// Ordered pairs `(l, l')` with intersecting tubes, diagonal included.
    pub intersecting_pairs: usize,
}

/// Horizontal gap `min_t |dx + dv t|` over `t in [0, 1]`.
fn horizontal_gap(a: &LineSeg, b: &LineSeg) -> f64 {
    let dx: Vec<f64> = a.x().iter().zip(b.x()).map(|(p, q)| p - q).collect();
    let dv: Vec<f64> = a.v().iter().zip(b.v()).map(|(p, q)| p - q).collect();
    let vv = dot(&dv, &dv);
    let t = if vv > 0.0 { (-dot(&dx, &dv) / vv).clamp(0.0, 1.0) } else { 0.0 };
    dx.iter().zip(&dv).map(|(x, v)| (x + v * t).powi(2)).sum::<f64>().sqrt()
}

/// Measured `||sum chi_{T_l}||_2^2` (optionally on a region) and the sum of
/// [`tube_intersection_bound`] over ordered pairs of intersecting tubes.
pub fn cordoba_l2(f: &TubeFamily, region: Option<&OrientedBox>, budget_cells: u64) -> Result<CordobaResult> {
    if f.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let delta = f.delta;
    let spec = GridSpec::covering(f.n, &f.lines, delta, delta / 2.0)?;
    let hist = match region {
        Some(r) => multiplicity_histogram_where(f, &spec, budget_cells, |p| r.contains_point(p, 0.0))?,
        None => multiplicity_histogram(f, &spec, budget_cells)?,
    };
    let reach = 2.0 * delta * (1.0 + 1e-12);
    let per: Vec<(f64, usize)> = (0..f.len())
        .into_par_iter()
        .map(|i| {
            let a = &f.lines[i];
            let mut sum = 0.0;
            let mut k = 0;
            for b in &f.lines {
                // points within 2 delta are within 4 delta horizontally at a common height
                if horizontal_gap(a, b) <= 2.0 * reach && segment_distance(a, b) <= reach {
                    sum += tube_intersection_bound(a, b, delta);
                    k += 1;
                }
            }
            (sum, k)
        })
        .collect();
    let sums: Vec<f64> = per.iter().map(|p| p.0).collect();
    Ok(CordobaResult {
        measured_l2_sq: hist.l2_squared(),
        incidence_bound: crate::numeric::pairwise_sum(&sums),
        intersecting_pairs: per.iter().map(|p| p.1).sum(),
    })
}

// ---------------------------------------------------------------- slabs

/// `|E ∩ S|` by voxel count.
pub fn slab_mass(e: &ScalarField, s: &Slab) -> f64 {
    let spec = e.spec();
    let count = e
        .values()
        .par_iter()
        .enumerate()
        .filter(|(i, v)| **v > 0.0 && s.contains(&spec.center(*i)))
        .count();
    count as f64 * spec.cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabOptions {
    pub partners: usize,
    pub max_seeds: usize,
}

impl Default for SlabOptions {
    fn default() -> Self {
        Self { partners: 8, max_seeds: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabResult {
    pub slab: Slab,
    pub theta: f64,
    pub mass: f64,
    /// `mass / theta^{1/2}`.
    pub score: f64,
}

/// Searches slabs spanned by a tube's direction and a partner's direction (or
/// the displacement to it), plus coordinate fallbacks, over `thetas`, and
/// returns the one maximizing `mass / theta^{1/2}`.
pub fn best_slab_search(e: &ScalarField, thetas: &[f64], candidates_from: &TubeFamily, opts: &SlabOptions) -> Result<SlabResult> {
    if candidates_from.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if thetas.is_empty() || thetas.iter().any(|t| !(*t > 0.0)) {
        return domain("thetas must be positive and nonempty");
    }
    let n = candidates_from.n;
    if e.spec().n != n {
        return domain("field and family dimensions differ");
    }
    let spec = e.spec();
    let occ: Vec<Point> = e.occupied().map(|i| spec.center(i)).collect();
    let cellvol = spec.cell_volume();
    let lines = &candidates_from.lines;
    let mids: Vec<Point> = lines.iter().map(|l| l.midpoint()).collect();
    let dirs: Vec<Vec<f64>> = lines.iter().map(|l| l.direction()).collect();
    let stride = lines.len().div_ceil(opts.max_seeds.max(1)).max(1);
    let mut planes: Vec<(Point, Vec<f64>, Vec<f64>)> = Vec::new();
    for i in (0..lines.len()).step_by(stride) {
        let mut near: Vec<(f64, usize)> = (0..lines.len()).filter(|&j| j != i).map(|j| (dist(&mids[i], &mids[j]), j)).collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in near.iter().take(opts.partners) {
            planes.push((mids[i].clone(), dirs[i].clone(), dirs[j].clone()));
            let disp: Vec<f64> = mids[j].iter().zip(&mids[i]).map(|(a, b)| a - b).collect();
            planes.push((mids[i].clone(), dirs[i].clone(), disp));
        }
        for k in 0..n {
            let mut ek = vec![0.0; n];
            ek[k] = 1.0;
            planes.push((mids[i].clone(), dirs[i].clone(), ek));
        }
    }
    let mut sorted_thetas = thetas.to_vec();
    sorted_thetas.sort_by(f64::total_cmp);
    let scored: Vec<Option<(f64, usize, Slab)>> = planes
        .par_iter()
        .map(|(p, d1, d2)| {
            let slab = Slab::spanned_by(p.clone(), d1, d2, sorted_thetas[0]).ok()?;
            let mut ds: Vec<f64> = occ.iter().map(|q| slab.normal_distance(q)).collect();
            ds.sort_by(f64::total_cmp);
            let mut best: Option<(f64, usize)> = None;
            for (ti, th) in sorted_thetas.iter().enumerate() {
                let count = ds.partition_point(|d| *d <= th / 2.0);
                let score = count as f64 * cellvol / th.sqrt();
                if best.map_or(true, |(s, _)| score > s) {
                    best = Some((score, ti));
                }
            }
            best.map(|(s, ti)| (s, ti, slab))
        })
        .collect();
    let mut best: Option<(f64, usize, Slab)> = None;
    for cand in scored.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| cand.0 > b.0) {
            best = Some(cand);
        }
    }
    let (_, ti, slab) = best.ok_or_else(|| Error::Domain("no admissible slab candidate".into()))?;
    let theta = sorted_thetas[ti];
    let slab = slab.with_theta(theta)?;
    let mass = slab_mass(e, &slab);
    Ok(SlabResult { score: mass / theta.sqrt(), slab, theta, mass })
}
