use proptest::prelude::*;

use protoglyph::analysis::{difference_map, distance, subtype_variability, Aggregate, Norm};
use protoglyph::filter::{
    filter_prototype, filtering_error, flag, reference_mask, FilterParams, Flag,
};
use protoglyph::GrayImage;

fn image(w: usize, h: usize) -> impl Strategy<Value = GrayImage> {
    prop::collection::vec(0.0f64..=1.0, w * h)
        .prop_map(move |v| GrayImage::from_vec(w, h, v).unwrap())
}

fn triple() -> impl Strategy<Value = (GrayImage, GrayImage, GrayImage)> {
    (1usize..10, 1usize..10).prop_flat_map(|(w, h)| (image(w, h), image(w, h), image(w, h)))
}

fn params() -> impl Strategy<Value = FilterParams> {
    (0.05f64..0.95, 0usize..4, 0.3f64..3.0, 0.05f64..0.95).prop_map(|(t, r, sigma, tp)| {
        FilterParams {
            t,
            dilate_radius: r,
            sigma,
            t_prime: tp,
            ..FilterParams::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn distances_are_metrics((a, b, c) in triple()) {
        for norm in [Norm::L1, Norm::L2] {
            let d = |x: &GrayImage, y: &GrayImage| distance(x, y, norm).unwrap();
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert!(d(&a, &b) >= 0.0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
            if a != b {
                prop_assert!(d(&a, &b) > 0.0);
            }
        }
    }

    #[test]
    fn difference_map_is_antisymmetric((a, b, _) in triple()) {
        let ab = difference_map(&a, &b).unwrap();
        let ba = difference_map(&b, &a).unwrap();
        for (x, y) in ab.signed.iter().zip(&ba.signed) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn mask_shrinks_as_t_rises((r, _, _) in triple(), p in params(), dt in 0.0f64..0.5) {
        let hi = FilterParams { t: (p.t + dt).min(0.99), ..p.clone() };
        let m_lo = reference_mask(&r, &p).unwrap();
        let m_hi = reference_mask(&r, &hi).unwrap();
        for (lo, hi) in m_lo.data().iter().zip(m_hi.data()) {
            prop_assert!(hi <= &(lo + 1e-12));
        }
    }

    #[test]
    fn error_shrinks_as_radius_grows((r, p_img, _) in triple(), p in params()) {
        let wider = FilterParams { dilate_radius: p.dilate_radius + 1, ..p.clone() };
        let e = filtering_error(&reference_mask(&r, &p).unwrap(), &p_img, &p).unwrap();
        let e_wide = filtering_error(&reference_mask(&r, &wider).unwrap(), &p_img, &wider).unwrap();
        prop_assert!(e_wide <= e + 1e-9);
    }

    #[test]
    fn filtered_is_below_mask_and_prototype((r, proto, _) in triple(), p in params()) {
        let m = reference_mask(&r, &p).unwrap();
        let f = filter_prototype(&m, &proto).unwrap();
        for ((f, m), v) in f.data().iter().zip(m.data()).zip(proto.data()) {
            prop_assert!(*f <= m.min(*v) + 1e-15);
        }
    }

    #[test]
    fn flags_are_monotone(a in 0.0f64..60.0, b in 0.0f64..60.0) {
        let p = FilterParams::default();
        let rank = |f: Flag| match f { Flag::Ok => 0, Flag::Warn => 1, Flag::Fail => 2 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(rank(flag(lo, &p)) <= rank(flag(hi, &p)));
    }

    #[test]
    fn variability_ignores_order(imgs in prop::collection::vec(image(4, 4), 2..6), rot in 0usize..6) {
        let mut shuffled = imgs.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        for agg in [Aggregate::Sum, Aggregate::Mean] {
            let a = subtype_variability(&imgs, agg).unwrap();
            let b = subtype_variability(&shuffled, agg).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }
    }

    #[test]
    fn variability_grows_with_spread(
        dev in prop::collection::vec(prop::collection::vec(-0.2f64..0.2, 9), 2..6),
        lambda in 1.05f64..2.0,
    ) {
        let build = |scale: f64| -> Vec<GrayImage> {
            dev.iter()
                .map(|d| GrayImage::from_vec(3, 3, d.iter().map(|v| 0.5 + scale * v).collect()).unwrap())
                .collect()
        };
        let base = subtype_variability(&build(1.0), Aggregate::Sum).unwrap();
        let wide = subtype_variability(&build(lambda), Aggregate::Sum).unwrap();
        prop_assume!(base > 1e-9);
        prop_assert!(wide > base);
        prop_assert!((wide - lambda * base).abs() <= 1e-9);
    }

    #[test]
    fn diagonal_side_survives_contrast_change((p, a, b) in triple(), c in 0.1f64..1.0) {
        let dim = |img: &GrayImage| img.map(|v| v * c);
        for norm in [Norm::L1, Norm::L2] {
            let da = distance(&p, &a, norm).unwrap();
            let db = distance(&p, &b, norm).unwrap();
            prop_assume!((da - db).abs() > 1e-9);
            let da2 = distance(&dim(&p), &dim(&a), norm).unwrap();
            let db2 = distance(&dim(&p), &dim(&b), norm).unwrap();
            prop_assert_eq!(da < db, da2 < db2);
        }
    }
}

#[test]
fn two_point_variability() {
    let imgs = [GrayImage::filled(1, 1, 0.0), GrayImage::filled(1, 1, 1.0)];
    assert_eq!(subtype_variability(&imgs, Aggregate::Sum).unwrap(), 0.5);
    assert!(subtype_variability(&imgs[..1], Aggregate::Sum).is_err());
}
