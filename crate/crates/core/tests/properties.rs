use lutkan::model_gen::{gen_inputs, gen_layer};
use lutkan::{
    compile_layer, Batch, EdgeParams, KnotGrid, OobConfig, QuantConfig, Scheme, Tier, ValueRepr,
};
use proptest::prelude::*;

fn grid() -> impl Strategy<Value = KnotGrid> {
    (
        -2.0..0.0f64,
        prop::collection::vec(0.1..1.0f64, 1..10),
        0usize..5,
    )
        .prop_map(|(start, widths, p)| {
            let mut bp = vec![start];
            for w in widths {
                bp.push(bp[bp.len() - 1] + w);
            }
            KnotGrid::new(bp, p).unwrap()
        })
}

fn edge(coeffs: Vec<f64>) -> EdgeParams {
    EdgeParams {
        coeffs,
        base_scale: 1.0,
        spline_scale: 1.0,
        out_scale: 1.0,
    }
}

proptest! {
    #[test]
    fn spline_is_linear_in_coefficients(g in grid(), a in -3.0..3.0f64, b in -3.0..3.0f64, seed in any::<u64>(), u in 0.0..1.0f64) {
        let r = g.basis_count();
        let c1: Vec<f64> = (0..r).map(|i| ((seed >> (i % 60)) & 7) as f64 - 3.5).collect();
        let c2: Vec<f64> = (0..r).map(|i| (i as f64 * 0.37).sin()).collect();
        let mix: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| a * x + b * y).collect();
        let x = g.lower() + u * (g.upper() - g.lower());
        let lhs = edge(mix).eval_spline(&g, x);
        let rhs = a * edge(c1).eval_spline(&g, x) + b * edge(c2).eval_spline(&g, x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()) * 10.0);
    }

    #[test]
    fn spline_is_continuous_at_breakpoints(g in grid(), coeffs in prop::collection::vec(-1.0..1.0f64, 15)) {
        prop_assume!(g.degree() >= 1);
        let e = edge(coeffs[..g.basis_count()].to_vec());
        for &t in &g.breakpoints()[1..g.segments()] {
            let left = e.eval_spline(&g, t.next_down());
            let right = e.eval_spline(&g, t);
            prop_assert!((left - right).abs() < 1e-9, "jump {} at {t}", left - right);
        }
    }

    #[test]
    fn in_range_outputs_ignore_oob_config(seed in 0u64..1000, l in 2usize..40, asym in any::<bool>(), phi in any::<bool>()) {
        let layer = gen_layer(seed, 3, 2, KnotGrid::uniform(-1.0, 1.0, 5, 3).unwrap());
        let scheme = if asym { Scheme::Asymmetric } else { Scheme::Symmetric };
        let repr = if phi { ValueRepr::Phi } else { ValueRepr::SplineComponent };
        let cfg = QuantConfig::new(l, scheme).with_value_repr(repr);
        let arts: Vec<_> = OobConfig::matrix().into_iter().map(|o| compile_layer(&layer, &cfg, o).unwrap()).collect();
        let xs = gen_inputs(seed, 32, 3, (-0.999, 0.999), true);
        let outs: Vec<_> = arts.iter().map(|a| a.forward_batch(&xs, Tier::Scalar).unwrap().0).collect();
        for o in &outs[1..] {
            prop_assert_eq!(o, &outs[0]);
        }
    }

    #[test]
    fn batch_rows_are_independent(seed in 0u64..1000, n in 1usize..40, rot in 0usize..40) {
        let layer = gen_layer(seed, 4, 3, KnotGrid::uniform(-1.0, 1.0, 6, 2).unwrap());
        let art = compile_layer(&layer, &QuantConfig::new(16, Scheme::Symmetric), OobConfig::default()).unwrap();
        let xs = gen_inputs(seed, n, 4, (-1.5, 1.5), false);
        let rows: Vec<Vec<f64>> = xs.iter_rows().map(<[f64]>::to_vec).collect();
        let mut rotated = rows.clone();
        rotated.rotate_left(rot % n);
        let shifted = Batch::from_rows(&rotated).unwrap();
        for tier in [Tier::Scalar, Tier::Optimized] {
            let (a, _) = art.forward_batch(&xs, tier).unwrap();
            let (b, _) = art.forward_batch(&shifted, tier).unwrap();
            let s = layer.forward_batch(&shifted, tier).unwrap();
            for (i, row) in rotated.iter().enumerate() {
                let src = (i + rot % n) % n;
                prop_assert_eq!(b.row(i), a.row(src));
                let (single, _) = art.forward(row).unwrap();
                prop_assert_eq!(single.as_slice(), b.row(i));
                let want = layer.forward(row).unwrap();
                for (u, v) in s.row(i).iter().zip(&want) {
                    prop_assert!((u - v).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn dequantized_values_stay_near_segment_range(seed in 0u64..1000, l in 2usize..64, asym in any::<bool>()) {
        let layer = gen_layer(seed, 2, 2, KnotGrid::uniform(-1.0, 1.0, 4, 3).unwrap());
        let scheme = if asym { Scheme::Asymmetric } else { Scheme::Symmetric };
        let cfg = QuantConfig::new(l, scheme);
        let table = lutkan::build_float_lut(&layer, &cfg).unwrap();
        let art = compile_layer(&layer, &cfg, OobConfig::default()).unwrap();
        for e in 0..4 {
            for k in 0..4 {
                let seg = table.segment(e, k);
                let lo = seg.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let half = art.scale()[e * 4 + k] as f64 / 2.0 + 1e-12;
                for i in 0..l {
                    let v = art.dequantized(e, k, i);
                    prop_assert!(v >= lo - half && v <= hi + half);
                }
            }
        }
    }
}
