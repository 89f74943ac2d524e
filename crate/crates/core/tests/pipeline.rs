use lutkan::artifact_io::{load_lut_model, load_report, save_lut_model};
use lutkan::metrics::eval_accuracy;
use lutkan::model_gen::{gen_inputs, gen_layer, gen_layer_inputs, gen_sanity_layer};
use lutkan::run::{QuantSection, RunStatus, REPORT_NAME};
use lutkan::spline::{load_model, model_forward, save_model, silu};
use lutkan::{
    compile_layer, compile_model, lut_model_forward, lut_model_forward_batch, run_cell,
    BoundaryMode, Error, KnotGrid, OobConfig, OobPolicy, QuantConfig, RunConfig, RunReport, Scheme,
    SweepConfig, Tier, ValueRepr,
};

fn two_layer_model() -> Vec<lutkan::KanLayerSpec> {
    vec![
        gen_sanity_layer(4),
        gen_layer(5, 8, 3, KnotGrid::uniform(-8.0, 8.0, 8, 3).unwrap()),
    ]
}

#[test]
fn model_file_to_lut_model_and_back() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&two_layer_model(), &model_path).unwrap();
    let layers = load_model(&model_path).unwrap();
    assert_eq!(layers, two_layer_model());

    let arts = compile_model(
        &layers,
        &QuantConfig::new(128, Scheme::Asymmetric),
        OobConfig::default(),
    )
    .unwrap();
    let files = save_lut_model(&arts, dir.path().join("lut")).unwrap();
    assert_eq!(files.len(), 2);
    let arts = load_lut_model(dir.path().join("lut")).unwrap();

    let xs = gen_inputs(1, 64, 10, (-1.0, 1.0), true);
    let (ys, stats) = lut_model_forward_batch(&arts, &xs, Tier::Optimized).unwrap();
    assert_eq!((ys.rows(), ys.cols(), stats.len()), (64, 3, 2));
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for (r, row) in xs.iter_rows().enumerate() {
        let (y, _) = lut_model_forward(&arts, row).unwrap();
        assert_eq!(y, ys.row(r));
        let reference = model_forward(&layers, row).unwrap();
        for (a, b) in y.iter().zip(&reference) {
            worst = worst.max((a - b).abs());
            scale = scale.max(b.abs());
        }
    }
    assert!(
        worst < 1e-3 * scale,
        "max error {worst} against output scale {scale}"
    );
}

#[test]
fn chain_shapes_are_checked() {
    let layers = two_layer_model();
    let arts = compile_model(
        &layers,
        &QuantConfig::new(8, Scheme::Symmetric),
        OobConfig::default(),
    )
    .unwrap();
    let reversed = [arts[1].clone(), arts[0].clone()];
    assert!(matches!(
        lut_model_forward(&reversed, &[0.0; 8]),
        Err(Error::ChainMismatch { index: 1, .. })
    ));
    assert!(matches!(
        lut_model_forward(&[], &[0.0]),
        Err(Error::EmptyChain)
    ));
    assert!(matches!(
        lut_model_forward(&arts, &[0.0; 3]),
        Err(Error::Layer { index: 0, .. })
    ));
}

#[test]
fn zero_spline_masks_only_the_table_branch() {
    let layer = gen_sanity_layer(0);
    let oob = OobConfig::new(BoundaryMode::HalfOpen, OobPolicy::ZeroSpline);
    let cfg = QuantConfig::new(16, Scheme::Symmetric);
    let sc = compile_layer(&layer, &cfg, oob).unwrap();
    let phi = compile_layer(&layer, &cfg.with_value_repr(ValueRepr::Phi), oob).unwrap();
    for x in [1.0, 1.5, -3.0] {
        for e in [0, 17, 79] {
            let s = sc.edge_scalars().unwrap();
            let base = s.out_scale[e] as f64 * (s.base_scale[e] as f64 * silu(x));
            assert_eq!(sc.eval_phi(e, x).unwrap(), base);
            assert_eq!(phi.eval_phi(e, x).unwrap(), 0.0);
        }
    }
}

#[test]
fn unclipped_inputs_report_oob_metrics() {
    let layer = gen_sanity_layer(3);
    let xs = gen_layer_inputs(3, 512, &layer, false);
    let art = compile_layer(
        &layer,
        &QuantConfig::new(32, Scheme::Symmetric),
        OobConfig::default(),
    )
    .unwrap();
    let r = eval_accuracy(&layer, &art, &xs, 3).unwrap();
    assert!(r.oob_any_frac > 0.5);
    assert!(r.mae_oob.unwrap() > r.mae_inrange.unwrap());
    assert_eq!(r.inrange_pairs + r.oob_pairs, 512 * 80);
}

#[test]
fn failed_cell_still_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        quant: QuantSection {
            samples: 1,
            ..QuantSection::default()
        },
        ..RunConfig::default()
    };
    let report = run_cell(&cfg, dir.path()).unwrap();
    assert_eq!(report.status, RunStatus::Error);
    let saved: RunReport = load_report(dir.path().join(REPORT_NAME)).unwrap();
    assert_eq!(saved.error.unwrap().kind, "invalid_config");
    assert!(saved.eval.is_none());
}

#[test]
fn default_sweep_covers_the_grid() {
    let cells = SweepConfig::default().cells();
    assert_eq!(cells.len(), 4 * 2 * 2 * 2 * 5);
    let names: std::collections::BTreeSet<_> = cells.iter().map(|c| c.name.clone()).collect();
    assert_eq!(names.len(), 32);
    assert!(names.contains("L64_asymmetric_half_open_zero_spline"));
}
