//! Checks against independently computed reference values.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use tubelab::estimate::{
    ball_scaling_exponent, evaluate, predicted_ball_exponent, rhs_bound, squid_profile, EvalOptions,
};
use tubelab::family::{build_net, validate_family, Net, NetMode, TubeFamily};
use tubelab::gen::{gen_ball, gen_bush, gen_hairbrush, gen_random, gen_single, gen_slab_family, gen_sticky, box_center};
use tubelab::geom::{segment_distance, LineSeg, Tube};
use tubelab::raster::{
    box_dimension, lp_norm, mixed_norm_xray, multiplicity_field, multiplicity_histogram, xray, xray_delta, GridSpec,
    ScalarField, DEFAULT_BUDGET_CELLS,
};
use tubelab::structure::{
    best_slab_search, bilinear_split, cordoba_l2, dyadic_decompose, hairbrush, plate_number, verify_plate, PlateOptions,
    SlabOptions,
};
use tubelab::Error;

const B: u64 = DEFAULT_BUDGET_CELLS;

fn seg(x: &[f64], v: &[f64]) -> LineSeg {
    LineSeg::new(x.to_vec(), v.to_vec()).unwrap()
}

/// Distance from `p` to the segment from `a` to `b`, by clamped projection.
fn seg_dist(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let w: Vec<f64> = p.iter().zip(a).map(|(x, y)| x - y).collect();
    let dd: f64 = d.iter().map(|c| c * c).sum();
    let t = (w.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>() / dd).clamp(0.0, 1.0);
    w.iter().zip(&d).map(|(x, y)| (x - t * y).powi(2)).sum::<f64>().sqrt()
}

/// Cells of `spec` whose centers lie within `delta` of `l`, by brute force.
fn brute_tube_cells(spec: &GridSpec, l: &LineSeg, delta: f64) -> Vec<usize> {
    let (a, b) = (l.start(), l.end());
    (0..spec.cell_count() as usize).filter(|&i| seg_dist(&spec.center(i), &a, &b) <= delta).collect()
}

#[test]
fn rhs_closed_form() {
    let s = squid_profile(3).unwrap();
    // delta^2 |A| = 1, so rhs = 16^{1/5}
    let r = rhs_bound(3, 1.0 / 16.0, 1, 256, 0.0, &s).unwrap();
    assert!((r - 1.741_101_126_592_248).abs() < 1e-12);
    let r16 = rhs_bound(3, 1.0 / 16.0, 16, 256, 0.0, &s).unwrap();
    assert!((r16 / r - 1.741_101_126_592_248).abs() < 1e-12);
}

#[test]
fn single_tube_norm_by_direct_summation() {
    let delta = 1.0 / 32.0;
    let f = gen_single(delta, &[0.3, -0.2]).unwrap();
    let spec = GridSpec::covering(3, &f.lines, delta, delta / 2.0).unwrap();
    let cells = brute_tube_cells(&spec, &f.lines[0], delta);
    let vol = cells.len() as f64 * spec.cell_volume();
    let h = multiplicity_histogram(&f, &spec, B).unwrap();
    assert_eq!(h.counts[1], cells.len() as u64);
    let rep = evaluate(&f, &squid_profile(3).unwrap(), 0.0, &EvalOptions::default()).unwrap();
    assert!((rep.lhs - vol.powf(0.6)).abs() < 1e-12 * rep.lhs);
    assert!(rep.ratio.is_finite() && rep.ratio < 5.0);
    let analytic = PI * delta * delta * f.lines[0].length();
    assert!((vol / analytic - 1.0).abs() < 0.25);
}

#[test]
fn evaluate_rejects_bad_families() {
    let s = squid_profile(3).unwrap();
    let empty = TubeFamily::new(3, 0.1, 1, vec![]).unwrap();
    assert!(matches!(evaluate(&empty, &s, 0.0, &EvalOptions::default()), Err(Error::EmptyFamily)));
    let dup = TubeFamily::new(3, 0.1, 1, vec![seg(&[0.0, 0.0], &[0.2, 0.0]), seg(&[0.5, 0.0], &[0.2, 0.0])]).unwrap();
    assert!(!validate_family(&dup).is_valid());
    assert!(matches!(evaluate(&dup, &s, 0.0, &EvalOptions::default()), Err(Error::InvalidFamily(_))));
}

#[test]
fn ratio_invariant_under_rigid_motions() {
    let delta = 1.0 / 32.0;
    let stem = seg(&[0.0, 0.0], &[0.0, 0.0]);
    let f = gen_hairbrush(delta, &stem, 0.25, 48, 2).unwrap();
    let s = squid_profile(3).unwrap();
    let base = evaluate(&f, &s, 0.0, &EvalOptions::default()).unwrap().ratio;
    let shift = [0.25, -0.125];
    let moved = f.with_lines(
        f.lines.iter().map(|l| seg(&[l.x()[0] + shift[0], l.x()[1] + shift[1]], l.v())).collect(),
    );
    let turned = f.with_lines(f.lines.iter().map(|l| seg(&[-l.x()[1], l.x()[0]], &[-l.v()[1], l.v()[0]])).collect());
    let mirrored = f.with_lines(f.lines.iter().map(|l| seg(&[-l.x()[0], l.x()[1]], &[-l.v()[0], l.v()[1]])).collect());
    for g in [moved, turned, mirrored] {
        let r = evaluate(&g, &s, 0.0, &EvalOptions::default()).unwrap().ratio;
        assert!((r / base - 1.0).abs() < 0.1, "{r} vs {base}");
    }
}

#[test]
fn xray_along_segments() {
    let g = GridSpec::ambient(3, 1.0 / 16.0).unwrap();
    let one = ScalarField::from_fn(g.clone(), B, |_| 1.0).unwrap();
    let lower = ScalarField::from_fn(g, B, |p| if p[2] < 0.5 { 1.0 } else { 0.0 }).unwrap();
    let l = seg(&[0.2, -0.1], &[0.5, 0.3]);
    let step = 1.0 / 64.0;
    let len = (1.0f64 + 0.25 + 0.09).sqrt();
    assert!((xray(&one, &l, step).unwrap() - len).abs() < 1e-12);
    assert!((xray(&lower, &l, step).unwrap() - len / 2.0).abs() <= 2.0 * step);
}

#[test]
fn lp_norm_of_cube_region() {
    let g = GridSpec::ambient(3, 1.0 / 8.0).unwrap();
    // the region [0,1) x [0,1) x [0,1/2) has measure 1/2
    let f = ScalarField::from_fn(g, B, |p| if p[0] >= 0.0 && p[0] < 1.0 && p[1] >= 0.0 && p[1] < 1.0 && p[2] < 0.5 { 1.0 } else { 0.0 })
        .unwrap();
    for p in [1.0, 5.0 / 3.0, 2.0, 7.5] {
        assert!((lp_norm(&f, p).unwrap() - 0.5f64.powf(1.0 / p)).abs() < 1e-12);
    }
}

#[test]
fn box_counts_of_box_cell_and_tube() {
    let g = GridSpec::ambient(3, 1.0 / 32.0).unwrap();
    let scales = [0.5, 0.25, 0.125, 0.0625, 1.0 / 32.0];
    let full = ScalarField::from_fn(g.clone(), B, |_| 1.0).unwrap();
    let counts = full.box_count(&scales).unwrap();
    for (s, c) in &counts {
        assert_eq!(*c as f64, (4.0 / s) * (4.0 / s) * (1.0 / s));
    }
    assert!((box_dimension(&counts).unwrap() - 3.0).abs() < 1e-9);
    let mut one = ScalarField::zeros(g.clone(), B).unwrap();
    one.values_mut()[12345] = 1.0;
    assert!(one.box_count(&scales).unwrap().iter().all(|(_, c)| *c == 1));
    let t = gen_single(1.0 / 256.0, &[0.2, 0.1]).unwrap();
    let tg = GridSpec::covering(3, &t.lines, 1.0 / 256.0, 1.0 / 512.0).unwrap();
    let e = multiplicity_field(&t, &tg, B).unwrap();
    let c = e.box_count(&[0.25, 0.125, 0.0625, 1.0 / 32.0]).unwrap();
    let d = box_dimension(&c).unwrap();
    assert!((d - 1.0).abs() < 0.2, "tube dimension {d}");
}

#[test]
fn ball_mass_and_scaling() {
    let b = gen_ball(3, 1.0 / 16.0).unwrap();
    assert!(b.is_indicator());
    let exact = 4.0 / 3.0 * PI / 4096.0;
    assert!((b.support_measure() / exact - 1.0).abs() < 0.25);
    let s = squid_profile(3).unwrap();
    let fitted = ball_scaling_exponent(3, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], s.q.to_f64(), s.r.to_f64()).unwrap();
    let predicted = predicted_ball_exponent(&s, 3);
    assert!((predicted - 1.2).abs() < 1e-15);
    assert!((fitted - predicted).abs() < 0.15, "fitted {fitted}");
}

#[test]
fn mixed_norm_single_term() {
    let delta = 1.0 / 16.0;
    let b = gen_ball(3, delta).unwrap();
    let v = vec![0.125, 0.0];
    let x = vec![-0.0625, 0.0];
    let dirs = Net { delta, points: vec![v.clone()] };
    let pos = Net { delta, points: vec![x.clone()] };
    let (q, r) = (10.0 / 3.0, 10.0);
    let got = mixed_norm_xray(&b, &dirs, &pos, q, r).unwrap();
    let xd = xray_delta(&b, &Tube::new(seg(&x, &v), delta).unwrap());
    assert!(xd > 0.0);
    let expect = delta.powf(2.0 * (1.0 / q + 1.0 / r)) * xd;
    assert!((got - expect).abs() < 1e-12 * expect);
    let zero = ScalarField::zeros(b.spec().clone(), B).unwrap();
    assert_eq!(mixed_norm_xray(&zero, &dirs, &pos, q, r).unwrap(), 0.0);
}

#[test]
fn grid_refinement_is_stable() {
    let delta = 1.0 / 32.0;
    let s = squid_profile(3).unwrap();
    for f in [gen_single(delta, &[0.3, 0.1]).unwrap(), gen_bush(delta, &box_center(3), 20, 1).unwrap()] {
        let a = evaluate(&f, &s, 0.0, &EvalOptions { cell: Some(delta / 2.0), budget_cells: B }).unwrap().lhs;
        let b = evaluate(&f, &s, 0.0, &EvalOptions { cell: Some(delta / 4.0), budget_cells: B }).unwrap().lhs;
        assert!((a / b - 1.0).abs() < 0.1, "{a} vs {b}");
    }
}

#[test]
fn sticky_union_smaller_than_random() {
    let delta = 1.0 / 32.0;
    let g = GridSpec::for_delta(3, delta).unwrap();
    let sticky = gen_sticky(3, delta, 1, 7).unwrap();
    let random = gen_random(3, delta, 1, 7).unwrap();
    let vs = multiplicity_histogram(&sticky, &g, B).unwrap().support_measure();
    let vr = multiplicity_histogram(&random, &g, B).unwrap().support_measure();
    assert!(vs < 0.8 * vr, "sticky {vs} random {vr}");
}

#[test]
fn generated_families_are_valid() {
    let delta = 1.0 / 16.0;
    let stem = seg(&[0.0, 0.0], &[0.0, 0.0]);
    let fams = [
        gen_single(delta, &[0.5, 0.0]).unwrap(),
        gen_bush(delta, &box_center(3), 64, 3).unwrap(),
        gen_hairbrush(delta, &stem, 0.25, 64, 3).unwrap(),
        gen_slab_family(3, delta, 0.25, 3).unwrap(),
        gen_sticky(3, delta, 1, 3).unwrap(),
        gen_random(3, delta, 4, 3).unwrap(),
    ];
    for f in &fams {
        let r = validate_family(f);
        assert!(r.is_valid(), "{}", r.summary());
    }
}

#[test]
fn hairbrush_feet_spacing() {
    let delta = 1.0 / 16.0;
    let stem = seg(&[0.1, -0.1], &[0.1, 0.2]);
    let k = 40;
    let f = gen_hairbrush(delta, &stem, 0.25, k, 4).unwrap();
    let feet = k.min(16);
    let heights: Vec<f64> = (0..feet).map(|j| (j as f64 + 0.5) / feet as f64).collect();
    let mut used = BTreeSet::new();
    for l in &f.lines {
        // the foot is the candidate height where the bristle passes within delta of the stem axis
        let j = (0..feet)
            .find(|&j| {
                let (p, q) = (l.point_at(heights[j]).unwrap(), stem.point_at(heights[j]).unwrap());
                p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= delta
            })
            .expect("every bristle meets the stem at a foot");
        used.insert(j);
    }
    let hs: Vec<f64> = used.iter().map(|&j| heights[j]).collect();
    assert!(hs.windows(2).all(|w| w[1] - w[0] >= delta - 1e-12));
    assert_eq!(hairbrush(&f, &stem, 0.25, 1).lines, f.lines);
}

#[test]
fn hairbrush_matches_brute_force_predicate() {
    let delta = 1.0 / 8.0;
    let f = gen_random(3, delta, 2, 11).unwrap();
    let l0 = f.lines[17].clone();
    for (sigma, slack) in [(0.25, 1), (0.5, 1), (0.125, 2)] {
        let got = hairbrush(&f, &l0, sigma, slack);
        let window = (slack as f64).exp2();
        let brute: Vec<LineSeg> = f
            .lines
            .iter()
            .filter(|l| {
                // closest approach by dense sampling of both segments
                let mut best = f64::INFINITY;
                for i in 0..=400 {
                    for j in 0..=400 {
                        let (p, q) = (l.point_at(i as f64 / 400.0).unwrap(), l0.point_at(j as f64 / 400.0).unwrap());
                        best = best.min(p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
                    }
                }
                let meets = best.sqrt() <= 2.0 * delta + 2e-3;
                let a = delta + l.v().iter().zip(l0.v()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                meets && a >= sigma / window && a <= sigma * window
            })
            .cloned()
            .collect();
        let strict: Vec<&LineSeg> = brute.iter().filter(|l| segment_distance(l, &l0) <= 2.0 * delta).collect();
        // the sampled distance overshoots by at most the sampling error
        assert_eq!(got.lines.iter().collect::<Vec<_>>(), strict);
        assert!(got.len() <= brute.len());
    }
}

/// Dense-field version of the bilinear quantity for one pair of groups.
fn dense_bilinear(f: &TubeFamily, a: &[LineSeg], b: &[LineSeg], spec: &GridSpec, s: f64) -> f64 {
    let g1 = multiplicity_field(&f.with_lines(a.to_vec()), spec, B).unwrap();
    let g2 = multiplicity_field(&f.with_lines(b.to_vec()), spec, B).unwrap();
    let prod: Vec<f64> = g1.values().iter().zip(g2.values()).map(|(x, y)| x * y).collect();
    ScalarField::from_values(spec.clone(), prod).unwrap().lp_quasi_norm(s).sqrt()
}

#[test]
fn bilinear_matches_exhaustive_pair_scan() {
    let delta = 1.0 / 8.0;
    let f = gen_random(3, delta, 1, 5).unwrap();
    let c0 = 0.5;
    let s = squid_profile(3).unwrap();
    let got = bilinear_split(&f, c0, &s, B).unwrap();
    let side = c0 / (4.0 * 2f64.sqrt());
    let key = |l: &LineSeg| -> Vec<i64> { l.v().iter().map(|c| (c / side).floor() as i64).collect() };
    let mut groups: std::collections::BTreeMap<Vec<i64>, Vec<LineSeg>> = Default::default();
    for l in &f.lines {
        groups.entry(key(l)).or_default().push(l.clone());
    }
    let spec = GridSpec::covering(3, &f.lines, delta, delta / 2.0).unwrap();
    let keys: Vec<&Vec<i64>> = groups.keys().collect();
    let mut best = 0.0f64;
    for i in 0..keys.len() {
        for j in i + 1..keys.len() {
            let ci: Vec<f64> = keys[i].iter().map(|k| (*k as f64 + 0.5) * side).collect();
            let cj: Vec<f64> = keys[j].iter().map(|k| (*k as f64 + 0.5) * side).collect();
            let sep = ci.iter().zip(&cj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if sep >= c0 / 2.0 {
                best = best.max(dense_bilinear(&f, &groups[keys[i]], &groups[keys[j]], &spec, 5.0 / 6.0));
            }
        }
    }
    assert!(best > 0.0);
    assert!((got.norm - best).abs() <= 1e-9 * best, "{} vs {best}", got.norm);
}

/// Exhaustive search over boxes aligned with the frame of a coplanar family.
fn exhaustive_plate(f: &TubeFamily, axes: &[Vec<f64>], centers: &[Vec<f64>]) -> f64 {
    let delta = f.delta;
    let mut best = 0.0f64;
    for c in centers {
        let mut w = delta;
        while w <= 1.0 {
            let half = [2.0, 2.0 * w, 2.0 * delta];
            let inside = |p: &[f64]| {
                axes.iter().zip(half).all(|(a, h)| {
                    let d: f64 = p.iter().zip(c).zip(a).map(|((x, y), z)| (x - y) * z).sum();
                    d.abs() <= h - delta + 1e-12
                })
            };
            let count = f.lines.iter().filter(|l| inside(&l.start()) && inside(&l.end())).count();
            best = best.max(count as f64 / (w / delta));
            w *= 2.0;
        }
    }
    best
}

#[test]
fn plate_pinned_against_exhaustive_search() {
    let delta = 1.0 / 32.0;
    let v = [0.2, 0.0];
    let u = {
        let l = seg(&[0.0, 0.0], &v);
        l.unit_direction()
    };
    let axes = vec![u.clone(), vec![0.0, 1.0, 0.0], vec![-u[2], 0.0, u[0]]];
    for k in 1..=8usize {
        // same direction, offsets along the plate's width axis
        let spread = TubeFamily::new(3, delta, k, (0..k).map(|i| seg(&[0.0, i as f64 * delta], &v)).collect()).unwrap();
        let mid = spread.lines[k / 2].midpoint();
        let centers: Vec<Vec<f64>> = (-64..=64).map(|s| vec![mid[0], s as f64 * delta / 16.0, mid[2]]).collect();
        let brute = exhaustive_plate(&spread, &axes, &centers);
        let got = plate_number(&spread, &PlateOptions::default()).unwrap();
        assert_eq!(got.value, brute, "spread k={k}");
        assert_eq!(verify_plate(&spread, &got), got.value);
        // stacked inside one delta-plate
        let stacked =
            TubeFamily::new(3, delta, k, (0..k).map(|i| seg(&[0.0, (i as f64 - 3.5) * delta / 8.0], &v)).collect()).unwrap();
        let got = plate_number(&stacked, &PlateOptions::default()).unwrap();
        assert_eq!(got.value, k as f64, "stacked k={k}");
    }
}

#[test]
fn plate_never_decreases_under_inclusion() {
    let delta = 1.0 / 16.0;
    let sub = gen_hairbrush(delta, &seg(&[0.0, 0.0], &[0.0, 0.0]), 0.25, 12, 1).unwrap();
    let mut more = sub.lines.clone();
    more.extend(gen_random(3, delta, 1, 4).unwrap().lines.into_iter().take(40));
    let sup = sub.with_lines(more);
    let p1 = plate_number(&sub, &PlateOptions::default()).unwrap();
    let p2 = tubelab::structure::plate_number_seeded(&sup, &[p1.clone()], &PlateOptions::default()).unwrap();
    assert!(p2.value >= p1.value);
}

#[test]
fn dyadic_bins_by_per_cell_recount() {
    let delta = 1.0 / 16.0;
    let f = gen_bush(delta, &box_center(3), 12, 2).unwrap();
    let spec = GridSpec::covering(3, &f.lines, delta, delta / 2.0).unwrap();
    let e = ScalarField::from_fn(spec.clone(), B, |_| 1.0).unwrap();
    let l = &f.lines[0];
    let bins = dyadic_decompose(l, &f, &e).unwrap();
    let mut seen = BTreeSet::new();
    for b in &bins {
        for &i in &b.cells {
            assert!(seen.insert(i));
            let p = spec.center(i);
            let through: Vec<&LineSeg> = f.lines.iter().filter(|m| seg_dist(&p, &m.start(), &m.end()) <= delta).collect();
            assert_eq!(b.mu, (through.len() as u64).next_power_of_two());
            let within = |s: f64| {
                through
                    .iter()
                    .filter(|m| delta + m.v().iter().zip(l.v()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= s * (1.0 + 1e-12))
                    .count()
            };
            assert!(2 * within(b.sigma) >= through.len());
            if b.sigma_level > 0 {
                assert!(2 * within(b.sigma / 2.0) < through.len());
            }
        }
    }
    let c = spec.index_of(&box_center(3)).unwrap();
    let centre_bin = bins.iter().find(|b| b.cells.contains(&c)).unwrap();
    assert_eq!(centre_bin.mu, 16);
    assert_eq!(seen.len(), brute_tube_cells(&spec, l, delta).len());
}

#[test]
fn cordoba_on_bush_and_hairbrush() {
    let delta = 1.0 / 32.0;
    let bush = gen_bush(delta, &box_center(3), 30, 1).unwrap();
    let r = cordoba_l2(&bush, None, B).unwrap();
    assert!(r.measured_l2_sq <= r.incidence_bound * 1.05);
    let brush = gen_hairbrush(delta, &seg(&[0.0, 0.0], &[0.0, 0.0]), 0.25, 64, 1).unwrap();
    let r = cordoba_l2(&brush, None, B).unwrap();
    assert!(r.measured_l2_sq <= r.incidence_bound * 1.05);
    assert!(r.measured_l2_sq <= 10.0 * 5.0 * 64.0 * delta * delta);
}

#[test]
fn best_slab_of_planar_family() {
    let delta = 1.0 / 32.0;
    // every line lies in the plane {x_1 = 0}
    let lines: Vec<LineSeg> = [(-0.5, 0.4), (-0.2, -0.1), (0.1, 0.3), (0.4, -0.5), (0.0, 0.0)]
        .iter()
        .map(|(x, v)| seg(&[*x, 0.0], &[*v, 0.0]))
        .collect();
    let f = TubeFamily::new(3, delta, 1, lines).unwrap();
    let spec = GridSpec::covering(3, &f.lines, delta, delta / 2.0).unwrap();
    let e = multiplicity_field(&f, &spec, B).unwrap().indicator();
    let thetas: Vec<f64> = (0..6).map(|k| delta * (k as f64).exp2()).collect();
    let r = best_slab_search(&e, &thetas, &f, &SlabOptions::default()).unwrap();
    assert_eq!(r.theta, 2.0 * delta);
    assert!((r.mass - e.support_measure()).abs() < 1e-12);
    assert!(r.slab.normal_basis[0][1].abs() > 1.0 - 1e-9);
}

#[test]
fn net_modes_are_separated() {
    for mode in [NetMode::Lattice, NetMode::MaximalRandom] {
        let net = build_net(2, 1.0 / 16.0, 3, mode).unwrap();
        assert!(net.is_valid());
        // a delta-net of the unit disc has on the order of delta^{-2} points
        assert!(net.len() > 300 && net.len() < 1200, "{}", net.len());
    }
}

#[test]
fn two_ends_full_versus_concentrated() {
    use tubelab::family::density_stats;
    use tubelab::structure::{two_ends_check, TwoEndsParams};
    for k in 3..=7 {
        let delta = (-(k as f64)).exp2();
        let l = seg(&[0.1, 0.0], &[0.2, -0.1]);
        let t = Tube::new(l.clone(), delta).unwrap();
        let f = TubeFamily::new(3, delta, 1, vec![l]).unwrap();
        let spec = GridSpec::covering(3, &f.lines, delta, delta / 2.0).unwrap();
        let full = ScalarField::from_fn(spec.clone(), B, |p| if t.contains(p) { 1.0 } else { 0.0 }).unwrap();
        let lam = density_stats(&f, &full).unwrap().lambda;
        assert!(two_ends_check(&t, &full, &TwoEndsParams::default(), lam).unwrap(), "full tube, delta 2^-{k}");
        // all mass inside one ball of radius delta^{1/2} at the bottom end
        let r = delta.sqrt();
        let conc = ScalarField::from_fn(spec, B, |p| if p[2] <= r && t.contains(p) { 1.0 } else { 0.0 }).unwrap();
        let lam = density_stats(&f, &conc).unwrap().lambda;
        let two = TwoEndsParams { n_big: 2, ..Default::default() };
        assert!(!two_ends_check(&t, &conc, &two, lam).unwrap(), "concentrated, delta 2^-{k}");
    }
}
