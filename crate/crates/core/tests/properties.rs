use std::collections::BTreeSet;

use num_rational::Rational64;
use proptest::prelude::*;
use tubelab::estimate::{rhs_bound, squid_profile, Exponent};
use tubelab::family::{density_stats, refine_by_density, validate_family, TubeFamily};
use tubelab::gen::{gen_bush, gen_hairbrush, gen_random, gen_slab_family, gen_sticky, box_center};
use tubelab::geom::{angle, segment_distance, tube_contains, tube_intersection_bound, LineSeg, Tube};
use tubelab::raster::{
    lp_norm, multiplicity_field, multiplicity_histogram, tube_cells, tube_field, GridSpec, ScalarField,
    DEFAULT_BUDGET_CELLS as B,
};
use tubelab::structure::{dyadic_decompose, hairbrush, two_ends_check, TwoEndsParams};

const D: f64 = 1.0 / 8.0;

fn seg(x: &[f64], v: &[f64]) -> LineSeg {
    LineSeg::new(x.to_vec(), v.to_vec()).unwrap()
}

fn inner() -> impl Strategy<Value = Vec<f64>> {
    (0.0..0.69f64, 0.0..std::f64::consts::TAU).prop_map(|(r, a)| vec![r * a.cos(), r * a.sin()])
}

fn line() -> impl Strategy<Value = LineSeg> {
    (inner(), inner()).prop_map(|(x, v)| seg(&x, &v))
}

fn small_family() -> impl Strategy<Value = TubeFamily> {
    (any::<u64>(), 2usize..12).prop_map(|(seed, k)| {
        let f = gen_random(3, D, 1, seed).unwrap();
        let step = f.len() / k;
        f.with_lines(f.lines.iter().step_by(step.max(1)).take(k).cloned().collect())
    })
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn multiplicity_is_sum_of_tubes(f in small_family()) {
        let spec = GridSpec::for_delta(3, D).unwrap();
        let total = multiplicity_field(&f, &spec, B).unwrap();
        let mut sum = vec![0.0; total.values().len()];
        for l in &f.lines {
            let t = tube_field(&Tube::new(l.clone(), D).unwrap(), &spec, B).unwrap();
            for (s, v) in sum.iter_mut().zip(t.values()) {
                *s += v;
            }
        }
        prop_assert_eq!(total.values(), &sum[..]);
    }

    #[test]
    fn disjoint_tubes_add(k in 1usize..6, p in 1.1f64..4.0) {
        let lines: Vec<LineSeg> = (0..k).map(|i| seg(&[-0.6 + 0.3 * i as f64, 0.1], &[0.0, 0.2])).collect();
        let f = TubeFamily::new(3, D, 1, lines.clone()).unwrap();
        let spec = GridSpec::for_delta(3, D).unwrap();
        let whole = multiplicity_histogram(&f, &spec, B).unwrap().power_sum(p);
        let parts: f64 = lines
            .iter()
            .map(|l| multiplicity_histogram(&f.with_lines(vec![l.clone()]), &spec, B).unwrap().power_sum(p))
            .sum();
        prop_assert!((whole - parts).abs() <= 1e-12 * parts);
    }

    #[test]
    fn lp_norm_homogeneous_and_monotone(vals in prop::collection::vec(0.0..5.0f64, 64), extra in prop::collection::vec(0.0..1.0f64, 64), c in 0.01..100.0f64, p in 1.0..8.0f64) {
        let spec = GridSpec::new(3, 0.25, vec![0.0; 3], vec![1.0; 3]).unwrap();
        let f = ScalarField::from_values(spec.clone(), vals.clone()).unwrap();
        let g = ScalarField::from_values(spec, vals.iter().zip(&extra).map(|(a, b)| a + b).collect()).unwrap();
        let nf = lp_norm(&f, p).unwrap();
        prop_assert!((lp_norm(&f.scaled(c), p).unwrap() - c * nf).abs() <= 1e-12 * c * nf.max(1e-300));
        prop_assert!(nf <= lp_norm(&g, p).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn squared_sum_quasi_triangle(f in small_family(), groups in 2usize..4) {
        let pc = squid_profile(3).unwrap().p_conj().to_f64();
        let spec = GridSpec::for_delta(3, D).unwrap();
        let fields: Vec<ScalarField> = (0..groups)
            .map(|g| {
                let part: Vec<LineSeg> = f.lines.iter().skip(g).step_by(groups).cloned().collect();
                if part.is_empty() {
                    ScalarField::zeros(spec.clone(), B).unwrap()
                } else {
                    multiplicity_field(&f.with_lines(part), &spec, B).unwrap()
                }
            })
            .collect();
        let mut sq = vec![0.0; spec.cell_count() as usize];
        for h in &fields {
            for (s, v) in sq.iter_mut().zip(h.values()) {
                *s += v * v;
            }
        }
        let lhs = ScalarField::from_values(spec.clone(), sq).unwrap().lp_quasi_norm(pc / 2.0);
        let rhs: f64 = fields.iter().map(|h| h.lp_quasi_norm(pc).powf(pc)).sum::<f64>().powf(2.0 / pc);
        prop_assert!(lhs <= rhs * (1.0 + 1e-9), "{} > {}", lhs, rhs);
    }

    #[test]
    fn rhs_scales_multiplicatively(k in 0u32..6, size in 1usize..5000, m in 1usize..16) {
        let s = squid_profile(3).unwrap();
        let base = rhs_bound(3, 1.0 / 32.0, m, size, 0.0, &s).unwrap();
        let more = rhs_bound(3, 1.0 / 32.0, m, size << k, 0.0, &s).unwrap();
        let heavier = rhs_bound(3, 1.0 / 32.0, m << k, size, 0.0, &s).unwrap();
        let pk = (k as f64).exp2();
        prop_assert!((more / base - pk.powf(1.0 / s.q_conj().to_f64())).abs() < 1e-9);
        prop_assert!((heavier / base - pk.powf(1.0 / s.q.to_f64() - 1.0 / s.r.to_f64())).abs() < 1e-9);
    }

    #[test]
    fn conjugates_sum_to_one(a in 2i64..1000, b in 1i64..1000) {
        prop_assume!(a > b);
        let p = Exponent::ratio(a, b);
        prop_assert_eq!(p.recip() + p.conjugate().recip(), Rational64::from_integer(1));
    }

    #[test]
    fn dyadic_bins_partition_the_tube(f in small_family(), pick in any::<prop::sample::Index>()) {
        let spec = GridSpec::for_delta(3, D).unwrap();
        let e = multiplicity_field(&f, &spec, B).unwrap().indicator();
        let l = pick.get(&f.lines);
        let bins = dyadic_decompose(l, &f, &e).unwrap();
        let mut seen = BTreeSet::new();
        for b in &bins {
            for &i in &b.cells {
                prop_assert!(seen.insert(i));
            }
        }
        let expect: BTreeSet<usize> =
            tube_cells(&Tube::new(l.clone(), D).unwrap(), &spec).into_iter().filter(|&i| e.values()[i] > 0.0).collect();
        prop_assert_eq!(seen, expect);
    }

    #[test]
    fn hairbrush_subset_and_order_free(seed in any::<u64>(), pick in any::<prop::sample::Index>(), sigma in 0.05..1.0f64, slack in 0u32..3) {
        let f = gen_random(3, D, 1, seed).unwrap();
        let l0 = pick.get(&f.lines).clone();
        let h = hairbrush(&f, &l0, sigma, slack);
        prop_assert!(h.lines.iter().all(|l| f.lines.contains(l)));
        let mut rev = f.lines.clone();
        rev.reverse();
        let hr = hairbrush(&f.with_lines(rev), &l0, sigma, slack);
        let a: BTreeSet<String> = h.lines.iter().map(|l| format!("{l:?}")).collect();
        let b: BTreeSet<String> = hr.lines.iter().map(|l| format!("{l:?}")).collect();
        prop_assert_eq!(a, b);
        let wider = hairbrush(&f, &l0, sigma, slack + 1);
        prop_assert!(h.lines.iter().all(|l| wider.lines.contains(l)));
    }

    #[test]
    fn two_ends_monotone(x in inner(), v in inner(), cut in 0.0..1.0f64, s1 in 0.5..2.0f64, s2 in 0.5..2.0f64, big in 2u32..12) {
        let l = seg(&x, &v);
        let t = Tube::new(l.clone(), D / 2.0).unwrap();
        let f = TubeFamily::new(3, D / 2.0, 1, vec![l]).unwrap();
        let spec = GridSpec::covering(3, &f.lines, D / 2.0, D / 4.0).unwrap();
        let e = ScalarField::from_fn(spec, B, |p| if p[2] <= cut && t.contains(p) { 1.0 } else { 0.0 }).unwrap();
        prop_assume!(e.support_measure() > 0.0);
        let lam = density_stats(&f, &e).unwrap().lambda;
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let at = |slack: f64| two_ends_check(&t, &e, &TwoEndsParams { n_big: big, epsilon: 0.1, slack }, lam).unwrap();
        prop_assert!(!at(lo) || at(hi));
    }

    #[test]
    fn distances_and_angles(a in line(), b in line(), c in line(), u in 0.0..=1.0f64) {
        prop_assert!((segment_distance(&a, &b) - segment_distance(&b, &a)).abs() < 1e-12);
        prop_assert!(angle(&a, &c) <= angle(&a, &b) + angle(&b, &c) + 1e-12);
        prop_assert!(tube_contains(&Tube::new(a.clone(), 1e-9).unwrap(), &a.point_at(u).unwrap()));
        prop_assert!((tube_intersection_bound(&a, &b, D) - tube_intersection_bound(&b, &a, D)).abs() < 1e-15);
        let (near, far) = if angle(&a, &b) <= angle(&a, &c) { (&b, &c) } else { (&c, &b) };
        prop_assert!(tube_intersection_bound(&a, far, D) <= tube_intersection_bound(&a, near, D));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn generators_valid_and_deterministic(seed in any::<u64>(), kind in 0usize..5) {
        let make = |s: u64| match kind {
            0 => gen_bush(D, &box_center(3), 20, s),
            1 => gen_hairbrush(D, &seg(&[0.0, 0.0], &[0.0, 0.0]), 0.5, 20, s),
            2 => gen_slab_family(3, D, 0.5, s),
            3 => gen_sticky(3, D, 2, s),
            _ => gen_random(3, D, 2, s),
        }
        .unwrap();
        let f = make(seed);
        prop_assert!(validate_family(&f).is_valid());
        prop_assert_eq!(f.lines, make(seed).lines);
    }

    #[test]
    fn density_identity_and_refinement(f in small_family(), target in 0.1..1.0f64, tol in 1u32..3) {
        let spec = GridSpec::for_delta(3, D).unwrap();
        let e = ScalarField::from_fn(spec, B, |p| if p[2] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let s = density_stats(&f, &e).unwrap();
        prop_assert!(s.identity_defect() < 0.01);
        if let Ok(once) = refine_by_density(&f, &e, target, tol) {
            let twice = refine_by_density(&once, &e, target, tol).unwrap();
            prop_assert_eq!(once.lines, twice.lines);
        }
    }
}
