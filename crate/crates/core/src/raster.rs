//! Voxel grids over the ambient box `[-2, 2]^{n-1} x [0, 1]`.
//!
//! Cells are addressed row-major with axis 0 fastest and the height axis
//! (`t`, axis `n - 1`) slowest, so a contiguous run of whole layers is a
//! contiguous slice of the value array. Every accumulation splits the grid
//! into such layer blocks; each block is owned by exactly one worker, which
//! makes the parallel result identical to the sequential one.
//!
//! Tube membership is decided at cell centers with the exact closed
//! point-to-segment distance.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::family::{Net, TubeFamily};
use crate::geom::{dot, point_segment_dist2, LineSeg, Point, Tube};
use crate::numeric::{is_dyadic_multiple, pairwise_sum};

pub const DEFAULT_BUDGET_CELLS: u64 = 1 << 28;

/// Target number of cells in one streamed block (16 MiB of `u32` counts).
const BLOCK_CELLS: usize = 1 << 22;

pub fn ambient_lo(n: usize) -> Point {
    let mut lo = vec![-2.0; n - 1];
    lo.push(0.0);
    lo
}

pub fn ambient_hi(n: usize) -> Point {
    let mut hi = vec![2.0; n - 1];
    hi.push(1.0);
    hi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub cell: f64,
    pub lo: Point,
    pub hi: Point,
    pub dims: Vec<usize>,
}

impl GridSpec {
    /// Grid with corner `lo`; `hi` is rounded up to a whole number of cells.
    pub fn new(n: usize, cell: f64, lo: Point, hi: Point) -> Result<Self> {
        if n < 3 || lo.len() != n || hi.len() != n {
            return domain("grid corners must be points of R^n, n >= 3");
        }
        if !(cell > 0.0 && cell.is_finite()) {
            return domain(format!("cell side {cell} must be positive"));
        }
        let mut dims = Vec::with_capacity(n);
        let mut hi_adj = Vec::with_capacity(n);
        for k in 0..n {
            let ext = hi[k] - lo[k];
            if !(ext > 0.0) {
                return domain("grid extent must be positive on every axis");
            }
            let d = ((ext / cell) - 1e-9).ceil().max(1.0) as usize;
            dims.push(d);
            hi_adj.push(lo[k] + d as f64 * cell);
        }
        Ok(Self { n, cell, lo, hi: hi_adj, dims })
    }

    /// The full ambient box at the given cell side.
    pub fn ambient(n: usize, cell: f64) -> Result<Self> {
        if n < 3 {
            return domain("n must be >= 3");
        }
        Self::new(n, cell, ambient_lo(n), ambient_hi(n))
    }

    /// Ambient box with the default cell `delta / 2`.
    pub fn for_delta(n: usize, delta: f64) -> Result<Self> {
        Self::ambient(n, delta / 2.0)
    }

    /// Smallest sub-box of the ambient grid (same lattice) containing every
    /// `delta`-tube around `lines`. Fields of these tubes vanish outside it.
    pub fn covering(n: usize, lines: &[LineSeg], delta: f64, cell: f64) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::EmptyFamily);
        }
        let anchor = ambient_lo(n);
        let top = ambient_hi(n);
        let mut mn = vec![f64::INFINITY; n];
        let mut mx = vec![f64::NEG_INFINITY; n];
        for l in lines {
            for p in [l.start(), l.end()] {
                for k in 0..n {
                    mn[k] = mn[k].min(p[k] - delta);
                    mx[k] = mx[k].max(p[k] + delta);
                }
            }
        }
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for k in 0..n {
            let full = ((top[k] - anchor[k]) / cell - 1e-9).ceil();
            let a = ((mn[k] - anchor[k]) / cell).floor().clamp(0.0, full - 1.0);
            let b = ((mx[k] - anchor[k]) / cell).ceil().clamp(a + 1.0, full);
            lo.push(anchor[k] + a * cell);
            hi.push(anchor[k] + b * cell);
        }
        Self::new(n, cell, lo, hi)
    }

    pub fn cell_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell.powi(self.n as i32)
    }

    /// Cells per height layer.
    pub fn layer_len(&self) -> usize {
        self.dims[..self.n - 1].iter().product()
    }

    pub fn layers(&self) -> usize {
        self.dims[self.n - 1]
    }

    pub fn check_budget(&self, budget_cells: u64) -> Result<()> {
        let required = self.cell_count();
        if required > budget_cells {
            return Err(Error::Budget { required, limit: budget_cells });
        }
        Ok(())
    }

    pub fn center(&self, mut idx: usize) -> Point {
        let mut p = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let i = idx % self.dims[k];
            idx /= self.dims[k];
            p.push(self.lo[k] + (i as f64 + 0.5) * self.cell);
        }
        p
    }

    /// Index of the cell containing `p`, if inside the grid.
    pub fn index_of(&self, p: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for k in 0..self.n {
            let f = ((p[k] - self.lo[k]) / self.cell).floor();
            if !(f >= 0.0 && f < self.dims[k] as f64) {
                return None;
            }
            idx += f as usize * stride;
            stride *= self.dims[k];
        }
        Some(idx)
    }

    fn block_layers(&self) -> usize {
        (BLOCK_CELLS / self.layer_len().max(1)).max(1)
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        let step = self.block_layers();
        (0..self.layers())
            .step_by(step)
            .map(|s| s..(s + step).min(self.layers()))
            .collect()
    }
}

/// Precomputed segment data for the membership test.
#[derive(Debug, Clone)]
pub(crate) struct TubeGeom {
    x: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
    d: Vec<f64>,
    dd: f64,
    delta: f64,
    r2: f64,
}

impl TubeGeom {
    pub(crate) fn new(line: &LineSeg, delta: f64) -> Self {
        let a = line.start();
        let d = line.direction();
        let dd = dot(&d, &d);
        Self {
            x: line.x().to_vec(),
            v: line.v().to_vec(),
            a,
            d,
            dd,
            delta,
            r2: delta * delta,
        }
    }

    #[inline]
    pub(crate) fn contains(&self, p: &[f64]) -> bool {
        point_segment_dist2(p, &self.a, &self.d, self.dd) <= self.r2
    }
}

/// Calls `f(global_index, center)` for every cell of `spec` in `layers`
/// whose center lies in the tube.
pub(crate) fn visit_tube<F: FnMut(usize, &[f64])>(
    spec: &GridSpec,
    tg: &TubeGeom,
    layers: Range<usize>,
    mut f: F,
) {
    let n = spec.n;
    let h = n - 1;
    let cell = spec.cell;
    let layer_len = spec.layer_len();
    let mut p = vec![0.0; n];
    let mut imin = vec![0usize; h];
    let mut imax = vec![0usize; h];
    let mut cur = vec![0usize; h];
    let last = layers.end.min(spec.layers());
    'layer: for k in layers.start..last {
        let tc = spec.lo[h] + (k as f64 + 0.5) * cell;
        let s0 = (tc - tg.delta).max(0.0);
        let s1 = (tc + tg.delta).min(1.0);
        if s0 > s1 {
            continue;
        }
        for j in 0..h {
            let e0 = tg.x[j] + tg.v[j] * s0;
            let e1 = tg.x[j] + tg.v[j] * s1;
            let lo_r = e0.min(e1) - tg.delta;
            let hi_r = e0.max(e1) + tg.delta;
            let a = ((lo_r - spec.lo[j]) / cell - 0.5).ceil().max(0.0);
            let b = ((hi_r - spec.lo[j]) / cell - 0.5).floor();
            if b < a || a >= spec.dims[j] as f64 || b < 0.0 {
                continue 'layer;
            }
            imin[j] = a as usize;
            imax[j] = (b as usize).min(spec.dims[j] - 1);
        }
        p[h] = tc;
        cur.copy_from_slice(&imin);
        for j in 1..h {
            p[j] = spec.lo[j] + (cur[j] as f64 + 0.5) * cell;
        }
        let base_layer = k * layer_len;
        loop {
            let mut row = base_layer;
            let mut stride = spec.dims[0];
            for j in 1..h {
                row += cur[j] * stride;
                stride *= spec.dims[j];
            }
            for i0 in imin[0]..=imax[0] {
                p[0] = spec.lo[0] + (i0 as f64 + 0.5) * cell;
                if tg.contains(&p) {
                    f(row + i0, &p);
                }
            }
            // odometer over the remaining horizontal axes
            let mut j = 1;
            loop {
                if j >= h {
                    continue 'layer;
                }
                if cur[j] < imax[j] {
                    cur[j] += 1;
                    p[j] = spec.lo[j] + (cur[j] as f64 + 0.5) * cell;
                    break;
                }
                cur[j] = imin[j];
                p[j] = spec.lo[j] + (cur[j] as f64 + 0.5) * cell;
                j += 1;
            }
        }
    }
}

/// Visits every cell of the tube over the whole grid.
pub(crate) fn visit_tube_all<F: FnMut(usize, &[f64])>(spec: &GridSpec, tg: &TubeGeom, f: F) {
    visit_tube(spec, tg, 0..spec.layers(), f)
}

pub(crate) fn family_geoms(f: &TubeFamily) -> Vec<TubeGeom> {
    f.lines.iter().map(|l| TubeGeom::new(l, f.delta)).collect()
}

/// Streams multiplicity counts block by block. Blocks are filled in parallel
/// waves and handed to `visit` sequentially in layer order.
pub(crate) fn stream_counts<V: FnMut(Range<usize>, &[u32])>(
    spec: &GridSpec,
    tubes: &[TubeGeom],
    mut visit: V,
) {
    let layer_len = spec.layer_len();
    let blocks = spec.blocks();
    let wave = rayon::current_num_threads().max(1);
    for chunk in blocks.chunks(wave) {
        let bufs: Vec<Vec<u32>> = chunk
            .par_iter()
            .map(|r| {
                let base = r.start * layer_len;
                let mut buf = vec![0u32; r.len() * layer_len];
                for tg in tubes {
                    visit_tube(spec, tg, r.clone(), |idx, _| buf[idx - base] += 1);
                }
                buf
            })
            .collect();
        for (r, buf) in chunk.iter().zip(&bufs) {
            visit(r.start * layer_len..r.end * layer_len, buf);
        }
    }
}

/// Distribution of cell multiplicities of `sum_l chi_{T_l}`; `counts[k]` is the
/// number of cells covered by exactly `k` tubes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityHistogram {
    pub counts: Vec<u64>,
    pub cell_volume: f64,
}

impl MultiplicityHistogram {
    fn add(&mut self, k: u32) {
        let k = k as usize;
        if k >= self.counts.len() {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += 1;
    }

    /// `int |sum chi|^p`, summed in increasing multiplicity.
    pub fn power_sum(&self, p: f64) -> f64 {
        let terms: Vec<f64> = self
            .counts
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c as f64 * (k as f64).powf(p))
            .collect();
        pairwise_sum(&terms) * self.cell_volume
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.power_sum(p).powf(1.0 / p)
    }

    pub fn l2_squared(&self) -> f64 {
        self.power_sum(2.0)
    }

    /// Measure of the union of the tubes.
    pub fn support_measure(&self) -> f64 {
        self.counts.iter().skip(1).sum::<u64>() as f64 * self.cell_volume
    }

    pub fn max_multiplicity(&self) -> usize {
        self.counts.iter().rposition(|&c| c > 0).unwrap_or(0)
    }
}

fn check_cell(f: &TubeFamily, spec: &GridSpec) -> Result<()> {
    if spec.cell > f.delta {
        return domain(format!("cell {} exceeds delta {}", spec.cell, f.delta));
    }
    if spec.n != f.n {
        return domain("grid and family dimensions differ");
    }
    Ok(())
}

/// Histogram of the multiplicity field without materialising it.
pub fn multiplicity_histogram(f: &TubeFamily, spec: &GridSpec, budget_cells: u64) -> Result<MultiplicityHistogram> {
    histogram_impl(f, spec, budget_cells, None::<fn(&[f64]) -> bool>)
}

/// As [`multiplicity_histogram`], restricted to cells whose center satisfies `keep`.
pub fn multiplicity_histogram_where<K: Fn(&[f64]) -> bool>(
    f: &TubeFamily,
    spec: &GridSpec,
    budget_cells: u64,
    keep: K,
) -> Result<MultiplicityHistogram> {
    histogram_impl(f, spec, budget_cells, Some(keep))
}

fn histogram_impl<K: Fn(&[f64]) -> bool>(
    f: &TubeFamily,
    spec: &GridSpec,
    budget_cells: u64,
    keep: Option<K>,
) -> Result<MultiplicityHistogram> {
    check_cell(f, spec)?;
    spec.check_budget(budget_cells)?;
    let tubes = family_geoms(f);
    let mut hist = MultiplicityHistogram { counts: vec![0], cell_volume: spec.cell_volume() };
    stream_counts(spec, &tubes, |range, buf| {
        for (off, &c) in buf.iter().enumerate() {
            if c > 0 && keep.as_ref().map_or(true, |k| k(&spec.center(range.start + off))) {
                hist.add(c);
            }
        }
    });
    // zero cells are not tracked individually
    hist.counts[0] = 0;
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec, budget_cells: u64) -> Result<Self> {
        spec.check_budget(budget_cells)?;
        let len = spec.cell_count() as usize;
        Ok(Self { spec, values: vec![0.0; len] })
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() as u64 != spec.cell_count() {
            return domain(format!(
                "value count {} does not match grid size {}",
                values.len(),
                spec.cell_count()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("field values must be finite");
        }
        Ok(Self { spec, values })
    }

    /// Field whose value at each cell is `g(center)`.
    pub fn from_fn(spec: GridSpec, budget_cells: u64, g: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        spec.check_budget(budget_cells)?;
        let len = spec.cell_count() as usize;
        let values: Vec<f64> = (0..len).into_par_iter().map(|i| g(&spec.center(i))).collect();
        Self::from_values(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { spec: self.spec.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    /// 0/1 indicator of the cells where the field is positive.
    pub fn indicator(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            values: self.values.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn is_indicator(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, _)| i)
    }

    /// Measure of `{value > 0}`.
    pub fn support_measure(&self) -> f64 {
        self.occupied().count() as f64 * self.spec.cell_volume()
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return domain(format!("lp_norm needs p >= 1, got {p}"));
        }
        Ok(self.lp_quasi_norm(p))
    }

    /// `(sum |value|^p cellvol)^{1/p}` for any `p > 0`; `p = inf` gives the max.
    pub fn lp_quasi_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        let per_block: Vec<f64> = self
            .values
            .par_chunks(1 << 16)
            .map(|c| c.iter().filter(|v| **v != 0.0).map(|v| v.abs().powf(p)).sum::<f64>())
            .collect();
        (pairwise_sum(&per_block) * self.spec.cell_volume()).powf(1.0 / p)
    }

    /// Number of aligned `s`-cubes (partitioning the ambient box) meeting the
    /// support, for each scale.
    pub fn box_count(&self, scales: &[f64]) -> Result<Vec<(f64, u64)>> {
        let mut counter = BoxCounter::new(&self.spec, scales)?;
        for i in self.occupied() {
            counter.mark(i);
        }
        Ok(counter.finish())
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.spec;
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(s.n as u64).to_le_bytes())?;
        w.write_all(&s.cell.to_le_bytes())?;
        for x in s.lo.iter().chain(&s.hi) {
            w.write_all(&x.to_le_bytes())?;
        }
        for d in &s.dims {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Parse("not a field snapshot".into()));
        }
        let mut b8 = [0u8; 8];
        let mut u64_ = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = u64_(&mut r)? as usize;
        if !(3..=16).contains(&n) {
            return Err(Error::Parse(format!("snapshot dimension {n} out of range")));
        }
        let f64_ = |r: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let cell = f64_(&mut r)?;
        let lo: Vec<f64> = (0..n).map(|_| f64_(&mut r)).collect::<Result<_>>()?;
        let hi: Vec<f64> = (0..n).map(|_| f64_(&mut r)).collect::<Result<_>>()?;
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            dims.push(u64::from_le_bytes(b) as usize);
        }
        let spec = GridSpec::new(n, cell, lo, hi)?;
        if spec.dims != dims {
            return Err(Error::Parse("snapshot dims inconsistent with its extent".into()));
        }
        let len = spec.cell_count() as usize;
        let mut raw = vec![0u8; len * 8];
        r.read_exact(&mut raw)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_values(spec, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_snapshot(std::io::BufReader::new(f))
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"TLFIELD1";

struct BoxCounter {
    dims: Vec<usize>,
    scales: Vec<f64>,
    /// per scale, per axis: fine cell index -> coarse cube index
    maps: Vec<Vec<Vec<usize>>>,
    cdims: Vec<Vec<usize>>,
    bits: Vec<Vec<u64>>,
}

impl BoxCounter {
    fn new(spec: &GridSpec, scales: &[f64]) -> Result<Self> {
        let anchor = ambient_lo(spec.n);
        let top = ambient_hi(spec.n);
        let mut cdims = Vec::new();
        let mut bits = Vec::new();
        let mut maps = Vec::new();
        for &s in scales {
            if s < spec.cell * (1.0 - 1e-9) {
                return domain(format!("scale {s} is finer than the cell {}", spec.cell));
            }
            if is_dyadic_multiple(s, spec.cell).is_none() {
                return domain(format!("scale {s} is not a dyadic multiple of the cell {}", spec.cell));
            }
            let d: Vec<usize> = (0..spec.n)
                .map(|k| ((top[k] - anchor[k]) / s - 1e-9).ceil().max(1.0) as usize)
                .collect();
            let m: Vec<Vec<usize>> = (0..spec.n)
                .map(|k| {
                    (0..spec.dims[k])
                        .map(|i| {
                            let c = spec.lo[k] + (i as f64 + 0.5) * spec.cell;
                            (((c - anchor[k]) / s).floor().max(0.0) as usize).min(d[k] - 1)
                        })
                        .collect()
                })
                .collect();
            let total: usize = d.iter().product();
            bits.push(vec![0u64; total.div_ceil(64)]);
            cdims.push(d);
            maps.push(m);
        }
        Ok(Self { dims: spec.dims.clone(), scales: scales.to_vec(), maps, cdims, bits })
    }

    fn mark(&mut self, idx: usize) {
        for si in 0..self.scales.len() {
            let d = &self.cdims[si];
            let m = &self.maps[si];
            let mut rest = idx;
            let mut cidx = 0usize;
            let mut stride = 1usize;
            for k in 0..self.dims.len() {
                let i = rest % self.dims[k];
                rest /= self.dims[k];
                cidx += m[k][i] * stride;
                stride *= d[k];
            }
            self.bits[si][cidx / 64] |= 1u64 << (cidx % 64);
        }
    }

    fn finish(self) -> Vec<(f64, u64)> {
        self.scales
            .iter()
            .zip(&self.bits)
            .map(|(&s, b)| (s, b.iter().map(|w| w.count_ones() as u64).sum()))
            .collect()
    }
}

/// Box counts of the union of the family's tubes, streamed so that only one
/// wave of blocks is resident at a time.
pub fn union_box_count(f: &TubeFamily, spec: &GridSpec, scales: &[f64], budget_cells: u64) -> Result<Vec<(f64, u64)>> {
    check_cell(f, spec)?;
    spec.check_budget(budget_cells)?;
    let mut counter = BoxCounter::new(spec, scales)?;
    let tubes = family_geoms(f);
    stream_counts(spec, &tubes, |range, buf| {
        for (off, &c) in buf.iter().enumerate() {
            if c > 0 {
                counter.mark(range.start + off);
            }
        }
    });
    Ok(counter.finish())
}

/// Dense multiplicity field: each cell holds the number of tubes containing its center.
pub fn multiplicity_field(f: &TubeFamily, spec: &GridSpec, budget_cells: u64) -> Result<ScalarField> {
    check_cell(f, spec)?;
    let mut field = ScalarField::zeros(spec.clone(), budget_cells)?;
    let tubes = family_geoms(f);
    let layer_len = spec.layer_len();
    let block = spec.block_layers() * layer_len;
    field.values.par_chunks_mut(block).enumerate().for_each(|(b, chunk)| {
        let l0 = b * spec.block_layers();
        let layers = l0..l0 + chunk.len() / layer_len;
        let base = l0 * layer_len;
        for tg in &tubes {
            visit_tube(spec, tg, layers.clone(), |idx, _| chunk[idx - base] += 1.0);
        }
    });
    Ok(field)
}

/// Indicator field of a single tube.
pub fn tube_field(t: &Tube, spec: &GridSpec, budget_cells: u64) -> Result<ScalarField> {
    let mut field = ScalarField::zeros(spec.clone(), budget_cells)?;
    let tg = TubeGeom::new(&t.line, t.delta);
    visit_tube_all(spec, &tg, |idx, _| field.values[idx] = 1.0);
    Ok(field)
}

/// Cells of the tube on `spec`, in increasing index order.
pub fn tube_cells(t: &Tube, spec: &GridSpec) -> Vec<usize> {
    let tg = TubeGeom::new(&t.line, t.delta);
    let mut out = Vec::new();
    visit_tube_all(spec, &tg, |idx, _| out.push(idx));
    out
}

pub fn lp_norm(field: &ScalarField, p: f64) -> Result<f64> {
    field.lp_norm(p)
}

/// Riemann sum of `f` along the segment, arclength-weighted, sampled at the
/// midpoints of `ceil(len / step)` equal pieces.
pub fn xray(f: &ScalarField, l: &LineSeg, step: f64) -> Result<f64> {
    if !(step > 0.0) || step > f.spec.cell * (1.0 + 1e-12) {
        return domain(format!("step {step} must be in (0, cell = {}]", f.spec.cell));
    }
    let len = l.length();
    let pieces = (len / step).ceil().max(1.0) as usize;
    let sum: f64 = (0..pieces)
        .map(|j| {
            let t = (j as f64 + 0.5) / pieces as f64;
            f.spec.index_of(&l.eval(t)).map_or(0.0, |i| f.values[i])
        })
        .sum();
    Ok(sum * len / pieces as f64)
}

/// `delta^{1-n} * int_{T_l} f`, with the integral taken over cells of the tube.
pub fn xray_delta(f: &ScalarField, t: &Tube) -> f64 {
    let tg = TubeGeom::new(&t.line, t.delta);
    let mut sum = 0.0;
    visit_tube_all(&f.spec, &tg, |idx, _| sum += f.values[idx]);
    sum * f.spec.cell_volume() * t.delta.powi(1 - f.spec.n as i32)
}

/// Discretized mixed norm
/// `(d sum_v (d sum_x |X_delta f(l(x, v))|^r)^{q/r})^{1/q}` with `d = delta^{n-1}`,
/// over directions `dirs` and positions `positions`.
pub fn mixed_norm_xray(f: &ScalarField, dirs: &Net, positions: &Net, q: f64, r: f64) -> Result<f64> {
    if !(q >= 1.0 && r >= 1.0) {
        return domain("mixed norm exponents must be >= 1");
    }
    let delta = dirs.delta;
    let n = f.spec.n;
    if dirs.dim() != n - 1 || positions.dim() != n - 1 {
        return domain("nets must live in R^{n-1}");
    }
    let weight = delta.powi(n as i32 - 1);
    // support bounding box, for a quick tube rejection
    let mut smin = vec![f64::INFINITY; n];
    let mut smax = vec![f64::NEG_INFINITY; n];
    for i in f.occupied() {
        let c = f.spec.center(i);
        for k in 0..n {
            smin[k] = smin[k].min(c[k]);
            smax[k] = smax[k].max(c[k]);
        }
    }
    if smin[0] > smax[0] {
        return Ok(0.0);
    }
    let reach = delta + f.spec.cell;
    let per_dir: Vec<f64> = dirs
        .points
        .par_iter()
        .map(|v| {
            let mut inner: Vec<f64> = Vec::new();
            for x in &positions.points {
                let Ok(line) = LineSeg::new(x.clone(), v.clone()) else { continue };
                let (a, b) = (line.start(), line.end());
                let hit = (0..n).all(|k| a[k].min(b[k]) - reach <= smax[k] && a[k].max(b[k]) + reach >= smin[k]);
                if !hit {
                    continue;
                }
                let val = xray_delta(f, &Tube { line, delta }).abs();
                if val > 0.0 {
                    inner.push(val);
                }
            }
            if r.is_infinite() {
                inner.iter().fold(0.0f64, |m, v| m.max(*v))
            } else {
                let s: Vec<f64> = inner.iter().map(|v| v.powf(r)).collect();
                (weight * pairwise_sum(&s)).powf(1.0 / r)
            }
        })
        .collect();
    if q.is_infinite() {
        return Ok(per_dir.iter().fold(0.0f64, |m, v| m.max(*v)));
    }
    let terms: Vec<f64> = per_dir.iter().map(|v| v.powf(q)).collect();
    Ok((weight * pairwise_sum(&terms)).powf(1.0 / q))
}

pub fn box_count(field: &ScalarField, scales: &[f64]) -> Result<Vec<(f64, u64)>> {
    field.box_count(scales)
}

/// Least-squares slope of `log count` against `log(1/scale)`.
pub fn box_dimension(counts: &[(f64, u64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|(s, c)| ((1.0 / s).ln(), (*c as f64).ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    crate::numeric::least_squares_slope(&xs, &ys)
}
