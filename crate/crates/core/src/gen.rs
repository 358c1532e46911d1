//! Seeded tube-family generators.
//!
//! Positions are snapped to the lattice `delta Z^{n-1}` inside the unit ball,
//! so distinct positions are automatically `delta`-separated.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::estimate::parse_rational;
use crate::family::{build_net, lattice_points, snap, NetMode, TubeFamily};
use crate::geom::{dist, norm, LineSeg, Point};
use crate::raster::{ambient_lo, GridSpec, ScalarField, DEFAULT_BUDGET_CELLS};

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta = {delta} outside (0, 1)"));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n < 3 {
        return domain(format!("n = {n} must be >= 3"));
    }
    Ok(())
}

pub fn gen_single(delta: f64, v: &[f64]) -> Result<TubeFamily> {
    gen_single_at(delta, &vec![0.0; v.len()], v)
}

pub fn gen_single_at(delta: f64, x: &[f64], v: &[f64]) -> Result<TubeFamily> {
    check_delta(delta)?;
    let line = LineSeg::new(x.to_vec(), v.to_vec())?;
    TubeFamily::new(line.dim(), delta, 1, vec![line])
}

/// Center of the ambient box, `(0, ..., 0, 1/2)`.
pub fn box_center(n: usize) -> Point {
    let mut c = vec![0.0; n];
    c[n - 1] = 0.5;
    c
}

/// Indicator of the closed `delta`-ball at the box center, on a grid of cell
/// `delta / 2` aligned with the ambient lattice and cropped to the ball.
pub fn gen_ball(n: usize, delta: f64) -> Result<ScalarField> {
    check_n(n)?;
    check_delta(delta)?;
    let cell = delta / 2.0;
    let c = box_center(n);
    let anchor = ambient_lo(n);
    let lo: Point = (0..n).map(|k| anchor[k] + ((c[k] - delta - anchor[k]) / cell).floor() * cell - cell).collect();
    let hi: Point = (0..n).map(|k| anchor[k] + ((c[k] + delta - anchor[k]) / cell).ceil() * cell + cell).collect();
    let spec = GridSpec::new(n, cell, lo, hi)?;
    ScalarField::from_fn(spec, DEFAULT_BUDGET_CELLS, |p| if dist(p, &c) <= delta { 1.0 } else { 0.0 })
}

fn pick<T: Clone>(items: &[T], count: usize, seed: u64) -> Result<Vec<T>> {
    if count > items.len() {
        return Err(Error::Capacity { requested: count, available: items.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(items.choose_multiple(&mut rng, count).cloned().collect())
}

/// `count` tubes through `center` (a point of `R^n` with height in `[0, 1]`).
///
/// Directions come from the lattice of spacing `delta / t` (`t` the center's
/// height, capped to spacing `delta` when `t < delta`), which makes the
/// positions `x = c - v t` a `delta`-lattice as well.
pub fn gen_bush(delta: f64, center: &[f64], count: usize, seed: u64) -> Result<TubeFamily> {
    check_delta(delta)?;
    let n = center.len();
    check_n(n)?;
    if count == 0 {
        return domain("bush needs count >= 1");
    }
    let h = n - 1;
    let t = center[h];
    if !(0.0..=1.0).contains(&t) {
        return domain("bush center height must lie in [0, 1]");
    }
    let ch = &center[..h];
    let spacing = if t >= delta { delta / t } else { delta };
    let candidates: Vec<LineSeg> = lattice_points(h, spacing)
        .into_iter()
        .filter_map(|v| {
            let x: Point = if t >= delta { ch.iter().zip(&v).map(|(c, vi)| c - vi * t).collect() } else { ch.to_vec() };
            LineSeg::new(x, v).ok()
        })
        .collect();
    let lines = pick(&candidates, count, seed)?;
    Ok(TubeFamily::new(n, delta, 1, lines)?.with_seed(seed))
}

/// Bristles through feet spread along `stem`, with `sigma/2 <= |v - v_stem| <= 2 sigma - delta`.
pub fn gen_hairbrush(delta: f64, stem: &LineSeg, sigma: f64, count: usize, seed: u64) -> Result<TubeFamily> {
    check_delta(delta)?;
    if count == 0 {
        return domain("hairbrush needs count >= 1");
    }
    if !(sigma >= delta && sigma <= 1.0) {
        return domain(format!("sigma = {sigma} outside [delta, 1]"));
    }
    let n = stem.dim();
    let h = n - 1;
    let v0 = stem.v();
    let (inner, outer) = (sigma / 2.0, 2.0 * sigma - delta);
    let mut dirs: Vec<Point> = lattice_points(h, delta)
        .into_iter()
        .filter(|v| {
            let d = dist(v, v0);
            d >= inner && d <= outer
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dirs.shuffle(&mut rng);
    let feet = count.min((1.0 / delta).floor() as usize).max(1);
    let mut lines = Vec::with_capacity(count);
    for v in dirs {
        if lines.len() == count {
            break;
        }
        let tj = (lines.len() % feet) as f64 / feet as f64 + 0.5 / feet as f64;
        let x: Point = (0..h).map(|k| stem.x()[k] + (v0[k] - v[k]) * tj).collect();
        let x = snap(&x, delta);
        if let Ok(l) = LineSeg::new(x, v) {
            lines.push(l);
        }
    }
    if lines.len() < count {
        return Err(Error::Capacity { requested: count, available: lines.len() });
    }
    Ok(TubeFamily::new(n, delta, 1, lines)?.with_seed(seed))
}

fn ball_lattice(h: usize, delta: f64) -> Vec<Point> {
    lattice_points(h, delta)
}

/// Directions with `|v_1| <= rho / 2` and `v_k = 0` for `k >= 2`, one random
/// lattice position each.
pub fn gen_slab_family(n: usize, delta: f64, rho: f64, seed: u64) -> Result<TubeFamily> {
    check_n(n)?;
    check_delta(delta)?;
    if !(rho >= delta && rho <= 1.0) {
        return domain(format!("rho = {rho} outside [delta, 1]"));
    }
    let h = n - 1;
    let dirs: Vec<Point> = lattice_points(h, delta)
        .into_iter()
        .filter(|v| v[1].abs() <= rho / 2.0 + 1e-12 && v[2..].iter().all(|c| *c == 0.0))
        .collect();
    let positions = ball_lattice(h, delta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = dirs
        .into_iter()
        .map(|v| {
            let x = positions.choose(&mut rng).expect("lattice contains the origin").clone();
            LineSeg::new(x, v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TubeFamily::new(n, delta, 1, lines)?.with_seed(seed))
}

/// `m` distinct random lattice positions for every direction of the net.
pub fn gen_random(n: usize, delta: f64, m: usize, seed: u64) -> Result<TubeFamily> {
    gen_random_with(n, delta, m, seed, NetMode::Lattice)
}

pub fn gen_random_with(n: usize, delta: f64, m: usize, seed: u64, mode: NetMode) -> Result<TubeFamily> {
    check_n(n)?;
    check_delta(delta)?;
    if m < 1 {
        return domain("m must be >= 1");
    }
    let h = n - 1;
    let dirs = build_net(h, delta, seed, mode)?;
    let positions = ball_lattice(h, delta);
    if m > positions.len() {
        return Err(Error::Capacity { requested: m, available: positions.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut lines = Vec::with_capacity(dirs.len() * m);
    for v in &dirs.points {
        for x in positions.choose_multiple(&mut rng, m) {
            lines.push(LineSeg::new(x.clone(), v.clone())?);
        }
    }
    Ok(TubeFamily::new(n, delta, m, lines)?.with_seed(seed))
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pivot height in `[1/2 - amp, 1/2 + amp]` for one dyadic direction cube.
fn pivot(seed: u64, level: usize, cell: &[i64], amp: f64) -> f64 {
    let mut z = mix(seed ^ (level as u64).wrapping_mul(0x1000_0000_01b3));
    for &c in cell {
        z = mix(z ^ c as u64);
    }
    let u = (z >> 11) as f64 / (1u64 << 53) as f64;
    0.5 + amp * (2.0 * u - 1.0)
}

/// Position for direction `v` under iterated bisection of `[-1, 1]^{n-1}`:
/// the tubes whose directions share a dyadic cube all pass near one point,
/// at that cube's pivot height.
fn sticky_position(v: &[f64], delta: f64, seed: u64, amp: f64) -> Point {
    let h = v.len();
    let mut x = vec![0.0; h];
    let mut centre = vec![0.0; h];
    let mut side = 2.0;
    let mut cell = vec![0i64; h];
    let mut level = 0;
    while side > delta {
        let hk = pivot(seed, level, &cell, amp);
        let half = side / 2.0;
        for k in 0..h {
            let up = v[k] >= centre[k];
            cell[k] = 2 * cell[k] + up as i64;
            let step = if up { half / 2.0 } else { -half / 2.0 };
            centre[k] += step;
            x[k] -= step * hk;
        }
        side = half;
        level += 1;
    }
    let hk = pivot(seed, level, &cell, amp);
    for k in 0..h {
        x[k] -= (v[k] - centre[k]) * hk;
    }
    x
}

/// Lattice offsets ordered by length, then lexicographically.
fn spiral_offsets(h: usize, delta: f64, count: usize) -> Vec<Point> {
    let mut radius = 1i64;
    loop {
        let mut pts: Vec<Vec<i64>> = vec![vec![]];
        for _ in 0..h {
            pts = pts.into_iter().flat_map(|p| (-radius..=radius).map(move |i| [p.clone(), vec![i]].concat())).collect();
        }
        pts.retain(|p| p.iter().map(|i| i * i).sum::<i64>() <= radius * radius);
        if pts.len() >= count {
            pts.sort_by_key(|p| (p.iter().map(|i| i * i).sum::<i64>(), p.clone()));
            return pts.into_iter().take(count).map(|p| p.iter().map(|&i| i as f64 * delta).collect()).collect();
        }
        radius += 1;
    }
}

/// Every direction of the net, positions from the bisection map, `m` per
/// direction via nearby lattice offsets.
pub fn gen_sticky(n: usize, delta: f64, m: usize, seed: u64) -> Result<TubeFamily> {
    gen_sticky_with(n, delta, m, seed, NetMode::Lattice)
}

pub fn gen_sticky_with(n: usize, delta: f64, m: usize, seed: u64, mode: NetMode) -> Result<TubeFamily> {
    check_n(n)?;
    check_delta(delta)?;
    if m < 1 {
        return domain("m must be >= 1");
    }
    let h = n - 1;
    let amp = 0.2f64.min(0.4 / (h as f64).sqrt());
    let dirs = build_net(h, delta, seed, mode)?;
    let offsets = spiral_offsets(h, delta, 4 * m + 8);
    let mut lines = Vec::with_capacity(dirs.len() * m);
    for v in &dirs.points {
        let base = snap(&sticky_position(v, delta, seed, amp), delta);
        let mut placed = 0;
        for o in &offsets {
            if placed == m {
                break;
            }
            let x: Point = base.iter().zip(o).map(|(b, d)| b + d).collect();
            if norm(&x) < 1.0 {
                lines.push(LineSeg::new(x, v.clone())?);
                placed += 1;
            }
        }
        if placed < m {
            return Err(Error::Capacity { requested: m, available: placed });
        }
    }
    Ok(TubeFamily::new(n, delta, m, lines)?.with_seed(seed))
}

/// A parsed generator spec, `name:key=value,...` with vector entries separated by `;`.
///
/// | name | keys |
/// |---|---|
/// | `single` | `v`, `x` (default 0) |
/// | `bush` | `count`, `center` (default box center) |
/// | `hairbrush` | `sigma`, `count`, `x`, `v` (stem, default vertical through 0) |
/// | `slab` | `rho` |
/// | `sticky` | `m` (default 1), `net` = `lattice` or `random` |
/// | `random` | `m` (default 1), `net` |
#[derive(Debug, Clone, PartialEq)]
pub enum GenSpec {
    Single { x: Option<Point>, v: Option<Point> },
    Bush { count: usize, center: Option<Point> },
    Hairbrush { sigma: f64, count: usize, x: Option<Point>, v: Option<Point> },
    Slab { rho: f64 },
    Sticky { m: usize, net: NetMode },
    Random { m: usize, net: NetMode },
}

/// A decimal or a fraction such as `1/4`.
fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    s.parse::<f64>()
        .ok()
        .or_else(|| parse_rational(s).ok().map(|r| *r.numer() as f64 / *r.denom() as f64))
}

fn parse_vec(s: &str) -> Result<Point> {
    s.split(';')
        .map(|c| parse_real(c).ok_or_else(|| Error::Parse(format!("bad vector entry `{c}`"))))
        .collect()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(";")
}

fn fmt_net(m: NetMode) -> &'static str {
    match m {
        NetMode::Lattice => "lattice",
        NetMode::MaximalRandom => "random",
    }
}

impl GenSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for item in rest.split(',').filter(|i| !i.trim().is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got `{item}`")))?;
            kv.insert(k.trim(), v.trim());
        }
        let allowed: &[&str] = match name {
            "single" => &["x", "v"],
            "bush" => &["count", "center"],
            "hairbrush" => &["sigma", "count", "x", "v"],
            "slab" => &["rho"],
            "sticky" | "random" => &["m", "net"],
            _ => return Err(Error::Parse(format!("unknown generator `{name}`"))),
        };
        if let Some(k) = kv.keys().find(|k| !allowed.contains(k)) {
            return Err(Error::Parse(format!("generator `{name}` has no key `{k}`")));
        }
        let num = |k: &str| -> Result<Option<f64>> {
            kv.get(k).map(|v| parse_real(v).ok_or_else(|| Error::Parse(format!("bad value for `{k}`")))).transpose()
        };
        let int = |k: &str| -> Result<Option<usize>> {
            kv.get(k).map(|v| v.parse::<usize>().map_err(|_| Error::Parse(format!("bad value for `{k}`")))).transpose()
        };
        let vec = |k: &str| -> Result<Option<Point>> { kv.get(k).map(|v| parse_vec(v)).transpose() };
        let need = |k: &str| Error::Parse(format!("generator `{name}` needs `{k}`"));
        let net = match kv.get("net").copied() {
            None | Some("lattice") => NetMode::Lattice,
            Some("random") => NetMode::MaximalRandom,
            Some(o) => return Err(Error::Parse(format!("unknown net mode `{o}`"))),
        };
        Ok(match name {
            "single" => GenSpec::Single { x: vec("x")?, v: vec("v")? },
            "bush" => GenSpec::Bush { count: int("count")?.ok_or_else(|| need("count"))?, center: vec("center")? },
            "hairbrush" => GenSpec::Hairbrush {
                sigma: num("sigma")?.ok_or_else(|| need("sigma"))?,
                count: int("count")?.ok_or_else(|| need("count"))?,
                x: vec("x")?,
                v: vec("v")?,
            },
            "slab" => GenSpec::Slab { rho: num("rho")?.ok_or_else(|| need("rho"))? },
            "sticky" => GenSpec::Sticky { m: int("m")?.unwrap_or(1), net },
            _ => GenSpec::Random { m: int("m")?.unwrap_or(1), net },
        })
    }

    pub fn generate(&self, n: usize, delta: f64, seed: u64) -> Result<TubeFamily> {
        check_n(n)?;
        let zero = vec![0.0; n - 1];
        let dim_ok = |p: &Option<Point>, len: usize| -> Result<()> {
            match p {
                Some(p) if p.len() != len => domain(format!("vector {p:?} must have {len} entries")),
                _ => Ok(()),
            }
        };
        match self {
            GenSpec::Single { x, v } => {
                dim_ok(x, n - 1)?;
                dim_ok(v, n - 1)?;
                gen_single_at(delta, x.as_ref().unwrap_or(&zero), v.as_ref().unwrap_or(&zero))
            }
            GenSpec::Bush { count, center } => {
                dim_ok(center, n)?;
                gen_bush(delta, center.as_ref().unwrap_or(&box_center(n)), *count, seed)
            }
            GenSpec::Hairbrush { sigma, count, x, v } => {
                dim_ok(x, n - 1)?;
                dim_ok(v, n - 1)?;
                let stem = LineSeg::new(x.clone().unwrap_or(zero.clone()), v.clone().unwrap_or(zero.clone()))?;
                gen_hairbrush(delta, &stem, *sigma, *count, seed)
            }
            GenSpec::Slab { rho } => gen_slab_family(n, delta, *rho, seed),
            GenSpec::Sticky { m, net } => gen_sticky_with(n, delta, *m, seed, *net),
            GenSpec::Random { m, net } => gen_random_with(n, delta, *m, seed, *net),
        }
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        let name = match self {
            GenSpec::Single { x, v } => {
                if let Some(v) = v {
                    parts.push(format!("v={}", fmt_vec(v)));
                }
                if let Some(x) = x {
                    parts.push(format!("x={}", fmt_vec(x)));
                }
                "single"
            }
            GenSpec::Bush { count, center } => {
                parts.push(format!("count={count}"));
                if let Some(c) = center {
                    parts.push(format!("center={}", fmt_vec(c)));
                }
                "bush"
            }
            GenSpec::Hairbrush { sigma, count, x, v } => {
                parts.push(format!("sigma={sigma}"));
                parts.push(format!("count={count}"));
                if let Some(x) = x {
                    parts.push(format!("x={}", fmt_vec(x)));
                }
                if let Some(v) = v {
                    parts.push(format!("v={}", fmt_vec(v)));
                }
                "hairbrush"
            }
            GenSpec::Slab { rho } => {
                parts.push(format!("rho={rho}"));
                "slab"
            }
            GenSpec::Sticky { m, net } | GenSpec::Random { m, net } => {
                parts.push(format!("m={m}"));
                if *net != NetMode::Lattice {
                    parts.push(format!("net={}", fmt_net(*net)));
                }
                if matches!(self, GenSpec::Sticky { .. }) {
                    "sticky"
                } else {
                    "random"
                }
            }
        };
        if parts.is_empty() {
            write!(f, "{name}")
        } else {
            write!(f, "{name}:{}", parts.join(","))
        }
    }
}
