//! Separated nets and tube families with a direction-multiplicity bound.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geom::{dist, norm, tube_cross_section, LineSeg, Point};
use crate::numeric::pairwise_sum;
use crate::raster::{stream_counts, visit_tube_all, ScalarField, TubeGeom};

/// Relative slack on separation checks, so exact lattices are not flagged by rounding.
const SEPARATION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetMode {
    Lattice,
    MaximalRandom,
}

/// A `delta`-separated point set in the open unit ball of `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub delta: f64,
    pub points: Vec<Point>,
}

impl Net {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of pairs closer than `delta`.
    pub fn separation_violations(&self) -> usize {
        close_pairs(&self.points, self.delta)
    }

    pub fn is_valid(&self) -> bool {
        self.points.iter().all(|p| norm(p) < 1.0) && self.separation_violations() == 0
    }
}

fn cell_key(p: &[f64], side: f64) -> Vec<i64> {
    p.iter().map(|c| (c / side).floor() as i64).collect()
}

fn neighbour_keys(key: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(key.len())];
    for &k in key {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-1..=1).map(move |d| {
                    let mut p = prefix.clone();
                    p.push(k + d);
                    p
                })
            })
            .collect();
    }
    out
}

/// Spatial hash with cell side `delta`; all points within `delta` of a query
/// sit in the 3^dim neighbouring cells.
struct Proximity {
    side: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    points: Vec<Point>,
}

impl Proximity {
    fn new(side: f64) -> Self {
        Self { side, cells: HashMap::new(), points: Vec::new() }
    }

    fn has_point_within(&self, p: &[f64], r: f64) -> bool {
        neighbour_keys(&cell_key(p, self.side)).iter().any(|k| {
            self.cells
                .get(k)
                .is_some_and(|ids| ids.iter().any(|&i| dist(&self.points[i], p) < r))
        })
    }

    fn insert(&mut self, p: Point) {
        let k = cell_key(&p, self.side);
        self.cells.entry(k).or_default().push(self.points.len());
        self.points.push(p);
    }
}

/// Counts pairs of points at distance `< delta (1 - slack)`.
fn close_pairs(points: &[Point], delta: f64) -> usize {
    let r = delta * (1.0 - SEPARATION_SLACK);
    let mut grid = Proximity::new(delta);
    let mut bad = 0;
    for p in points {
        let keys = neighbour_keys(&cell_key(p, delta));
        for k in &keys {
            if let Some(ids) = grid.cells.get(k) {
                bad += ids.iter().filter(|&&i| dist(&grid.points[i], p) < r).count();
            }
        }
        grid.insert(p.clone());
    }
    bad
}

/// All points of `delta Z^dim` strictly inside the unit ball, in lexicographic order.
pub fn lattice_points(dim: usize, spacing: f64) -> Vec<Point> {
    let k = (1.0 / spacing).floor() as i64;
    let mut out = Vec::new();
    let mut idx = vec![-k; dim];
    loop {
        let p: Point = idx.iter().map(|&i| i as f64 * spacing).collect();
        if norm(&p) < 1.0 {
            out.push(p);
        }
        let mut j = dim;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            if idx[j] < k {
                idx[j] += 1;
                break;
            }
            idx[j] = -k;
        }
    }
}

/// Snaps to the `delta`-lattice.
pub(crate) fn snap(p: &[f64], delta: f64) -> Point {
    p.iter().map(|c| (c / delta).round() * delta + 0.0).collect()
}

pub fn build_net(dim: usize, delta: f64, seed: u64, mode: NetMode) -> Result<Net> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("net spacing {delta} outside (0, 1)"));
    }
    if dim < 2 {
        return domain("nets live in B^{n-1} with n >= 3");
    }
    let points = match mode {
        NetMode::Lattice => lattice_points(dim, delta),
        NetMode::MaximalRandom => poisson_disk(dim, delta, seed),
    };
    Ok(Net { delta, points })
}

fn random_in_ball(rng: &mut ChaCha8Rng, dim: usize) -> Point {
    loop {
        let p: Point = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if norm(&p) < 1.0 {
            return p;
        }
    }
}

/// Greedy dart throwing (Bridson) followed by a saturation sweep over a
/// `delta / 4` candidate lattice, so no gap wide enough for another point survives.
fn poisson_disk(dim: usize, delta: f64, seed: u64) -> Vec<Point> {
    const ATTEMPTS: usize = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = Proximity::new(delta);
    let first = random_in_ball(&mut rng, dim);
    grid.insert(first);
    let mut active = vec![0usize];
    while !active.is_empty() {
        let slot = rng.gen_range(0..active.len());
        let centre = grid.points[active[slot]].clone();
        let mut placed = false;
        for _ in 0..ATTEMPTS {
            let u = loop {
                let u: Point = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let l = norm(&u);
                if l > 1e-9 && l <= 1.0 {
                    break u.iter().map(|c| c / l).collect::<Point>();
                }
            };
            let frac: f64 = rng.gen();
            let r = delta * (1.0 + ((1u64 << dim) as f64 - 1.0) * frac).powf(1.0 / dim as f64);
            let cand: Point = centre.iter().zip(&u).map(|(c, d)| c + r * d).collect();
            if norm(&cand) < 1.0 && !grid.has_point_within(&cand, delta) {
                active.push(grid.points.len());
                grid.insert(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            active.swap_remove(slot);
        }
    }
    let offset: Point = (0..dim).map(|_| rng.gen_range(0.0..delta / 4.0)).collect();
    let fine = delta / 4.0;
    let k = (1.0 / fine).ceil() as i64;
    let mut idx = vec![-k; dim];
    'sweep: loop {
        let cand: Point = idx.iter().zip(&offset).map(|(&i, o)| i as f64 * fine + o).collect();
        if norm(&cand) < 1.0 && !grid.has_point_within(&cand, delta) {
            grid.insert(cand);
        }
        let mut j = dim;
        loop {
            if j == 0 {
                break 'sweep;
            }
            j -= 1;
            if idx[j] < k {
                idx[j] += 1;
                break;
            }
            idx[j] = -k;
        }
    }
    grid.points
}

/// A finite set of unit line segments with direction multiplicity bound `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeFamily {
    pub n: usize,
    pub delta: f64,
    pub m: usize,
    pub seed: Option<u64>,
    pub lines: Vec<LineSeg>,
}

impl TubeFamily {
    pub fn new(n: usize, delta: f64, m: usize, lines: Vec<LineSeg>) -> Result<Self> {
        if n < 3 {
            return domain(format!("n = {n} must be >= 3"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return domain(format!("delta = {delta} outside (0, 1)"));
        }
        if m < 1 {
            return domain("m must be >= 1");
        }
        if lines.iter().any(|l| l.dim() != n) {
            return domain("line dimension differs from the family's n");
        }
        Ok(Self { n, delta, m, seed: None, lines })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Same parameters, different lines.
    pub fn with_lines(&self, lines: Vec<LineSeg>) -> Self {
        Self { lines, ..self.clone() }
    }

    pub fn max_multiplicity(&self) -> usize {
        direction_counts(&self.lines).values().copied().max().unwrap_or(0)
    }

    /// `omega_{n-1} delta^{n-1} len(l)`: the analytic measure of `T_l`.
    pub fn tube_measure(&self, l: &LineSeg) -> f64 {
        tube_cross_section(self.n) * self.delta.powi(self.n as i32 - 1) * l.length()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) -> Result<()> {
        use std::io::Write;
        let h = self.n - 1;
        writeln!(out, "# tubelab-family v1")?;
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        writeln!(out, "# n={},delta={},m={},seed={}", self.n, self.delta, self.m, seed)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = (0..h).map(|k| format!("x{k}")).chain((0..h).map(|k| format!("v{k}"))).collect();
        w.write_record(&header)?;
        for l in &self.lines {
            let rec: Vec<String> = l.x().iter().chain(l.v()).map(|c| format!("{c}")).collect();
            w.write_record(&rec)?;
        }
        out.extend(w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(c) = line.strip_prefix('#') {
                for kv in c.split(',') {
                    if let Some((k, v)) = kv.split_once('=') {
                        meta.insert(k.trim().to_string(), v.trim().to_string());
                    }
                }
            } else if !line.trim().is_empty() {
                body.push_str(line);
                body.push('\n');
            }
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::Parse(format!("family header lacks `{k}`")));
        let parse_err = |k: &str| Error::Parse(format!("bad `{k}` in family header"));
        let n: usize = get("n")?.parse().map_err(|_| parse_err("n"))?;
        let delta: f64 = get("delta")?.parse().map_err(|_| parse_err("delta"))?;
        let m: usize = get("m")?.parse().map_err(|_| parse_err("m"))?;
        let seed = match get("seed")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| parse_err("seed"))?),
        };
        if n < 3 {
            return Err(Error::Parse(format!("n = {n} must be >= 3")));
        }
        let h = n - 1;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 * h {
                return Err(Error::Parse(format!("record has {} fields, expected {}", rec.len(), 2 * h)));
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}`"))))
                .collect::<Result<_>>()?;
            lines.push(LineSeg::new(vals[..h].to_vec(), vals[h..].to_vec())?);
        }
        let mut f = Self::new(n, delta, m, lines)?;
        f.seed = seed;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn bits(p: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 are the same coordinate
    p.iter().map(|c| (c + 0.0).to_bits()).collect()
}

fn direction_counts(lines: &[LineSeg]) -> BTreeMap<Vec<u64>, usize> {
    let mut counts = BTreeMap::new();
    for l in lines {
        *counts.entry(bits(l.v())).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub size: usize,
    pub declared_m: usize,
    pub max_multiplicity: usize,
    /// `|{l : v(l) = v}| <= m` for every direction.
    pub m_def_holds: bool,
    /// `1 <= m <= ceil(delta^{1-n})`.
    pub m_in_range: bool,
    pub direction_violations: usize,
    pub position_violations: usize,
    pub out_of_ball: usize,
    pub duplicate_lines: usize,
}

impl FamilyReport {
    pub fn is_valid(&self) -> bool {
        self.m_def_holds
            && self.m_in_range
            && self.direction_violations == 0
            && self.position_violations == 0
            && self.out_of_ball == 0
            && self.duplicate_lines == 0
    }

    pub fn summary(&self) -> String {
        format!(
            "size={} m={} max_multiplicity={} direction_violations={} position_violations={} duplicates={}",
            self.size,
            self.declared_m,
            self.max_multiplicity,
            self.direction_violations,
            self.position_violations,
            self.duplicate_lines
        )
    }
}

pub fn validate_family(f: &TubeFamily) -> FamilyReport {
    let counts = direction_counts(&f.lines);
    let max_multiplicity = counts.values().copied().max().unwrap_or(0);
    let cap = f.delta.powi(1 - f.n as i32).ceil() as usize;
    let dirs: Vec<Point> = counts.keys().map(|b| b.iter().map(|u| f64::from_bits(*u)).collect()).collect();
    let mut positions: BTreeMap<Vec<u64>, Point> = BTreeMap::new();
    let mut seen = BTreeMap::new();
    let mut duplicate_lines = 0;
    let mut out_of_ball = 0;
    for l in &f.lines {
        positions.entry(bits(l.x())).or_insert_with(|| l.x().to_vec());
        let key = (bits(l.x()), bits(l.v()));
        if seen.insert(key, ()).is_some() {
            duplicate_lines += 1;
        }
        if norm(l.x()) >= 1.0 || norm(l.v()) >= 1.0 {
            out_of_ball += 1;
        }
    }
    let positions: Vec<Point> = positions.into_values().collect();
    FamilyReport {
        size: f.lines.len(),
        declared_m: f.m,
        max_multiplicity,
        m_def_holds: max_multiplicity <= f.m,
        m_in_range: f.m >= 1 && f.m <= cap,
        direction_violations: close_pairs(&dirs, f.delta),
        position_violations: close_pairs(&positions, f.delta),
        out_of_ball,
        duplicate_lines,
    }
}

/// Mean tube density `lambda` and mean multiplicity `mu` of a family on a set `E`.
///
/// `lambda` is normalised by the analytic tube measure
/// `omega_{n-1} delta^{n-1} len(l)` and averaged with length weights, so that
/// `mu |E| = lambda * tube_measure` holds up to rounding, where
/// `tube_measure = sum_l omega_{n-1} delta^{n-1} len(l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStats {
    pub lambda: f64,
    pub mu: f64,
    pub set_measure: f64,
    pub tube_measure: f64,
}

impl DensityStats {
    /// Relative defect of `mu |E| = lambda * tube_measure`.
    pub fn identity_defect(&self) -> f64 {
        let a = self.mu * self.set_measure;
        let b = self.lambda * self.tube_measure;
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }
}

fn check_indicator(f: &TubeFamily, e: &ScalarField) -> Result<()> {
    if e.spec().n != f.n {
        return domain("field and family dimensions differ");
    }
    if !e.is_indicator() {
        return domain("target set must be a 0/1 indicator field");
    }
    Ok(())
}

/// Number of cells of `T_l ∩ E` for every tube, on `E`'s grid.
pub fn tube_hits(f: &TubeFamily, e: &ScalarField) -> Vec<u64> {
    let spec = e.spec();
    let vals = e.values();
    f.lines
        .par_iter()
        .map(|l| {
            let tg = TubeGeom::new(l, f.delta);
            let mut c = 0u64;
            visit_tube_all(spec, &tg, |idx, _| {
                if vals[idx] > 0.0 {
                    c += 1;
                }
            });
            c
        })
        .collect()
}

pub fn density_stats(f: &TubeFamily, e: &ScalarField) -> Result<DensityStats> {
    check_indicator(f, e)?;
    if f.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let spec = e.spec();
    let cellvol = spec.cell_volume();
    let e_cells = e.occupied().count() as u64;
    if e_cells == 0 {
        return Err(Error::EmptyTargetSet);
    }
    let hits = tube_hits(f, e);
    let hit_total: u64 = hits.iter().sum();
    let measures: Vec<f64> = f.lines.iter().map(|l| f.tube_measure(l)).collect();
    let tube_measure = pairwise_sum(&measures);
    // multiplicity summed over E, accumulated independently of the per-tube counts
    let tubes: Vec<TubeGeom> = f.lines.iter().map(|l| TubeGeom::new(l, f.delta)).collect();
    let vals = e.values();
    let mut mult_on_e = 0u64;
    stream_counts(spec, &tubes, |range, buf| {
        for (c, v) in buf.iter().zip(&vals[range]) {
            if *v > 0.0 {
                mult_on_e += *c as u64;
            }
        }
    });
    debug_assert_eq!(mult_on_e, hit_total);
    let set_measure = e_cells as f64 * cellvol;
    Ok(DensityStats {
        lambda: hit_total as f64 * cellvol / tube_measure,
        mu: mult_on_e as f64 / e_cells as f64,
        set_measure,
        tube_measure,
    })
}

/// Tubes whose `|T_l ∩ E|` lies within `2^{±tolerance_dyadic}` of
/// `lambda_target` times the tube's analytic measure.
pub fn refine_by_density(f: &TubeFamily, e: &ScalarField, lambda_target: f64, tolerance_dyadic: u32) -> Result<TubeFamily> {
    check_indicator(f, e)?;
    if tolerance_dyadic < 1 {
        return domain("tolerance_dyadic must be >= 1");
    }
    if !(lambda_target > 0.0) {
        return domain("lambda_target must be positive");
    }
    let cellvol = e.spec().cell_volume();
    let window = (tolerance_dyadic as f64).exp2();
    let hits = tube_hits(f, e);
    let kept = f
        .lines
        .iter()
        .zip(hits)
        .filter(|(l, h)| {
            let target = lambda_target * f.tube_measure(l);
            let got = *h as f64 * cellvol;
            got >= target / window && got <= target * window
        })
        .map(|(l, _)| l.clone())
        .collect();
    Ok(f.with_lines(kept))
}
