use lutkan_demo::{basis_data, edge_curve_data, mae_vs_l_data, MAE_LS};

#[test]
fn edge_curve_tracks_reference_in_range() {
    let d = edge_curve_data(0, 5, 64, "symmetric", "closed", "clip_x", -1.0, 1.0, 201).unwrap();
    assert_eq!(d.len(), 201 * 4);
    for p in d.chunks_exact(4) {
        assert_eq!(p[3], 1.0);
        assert!((p[1] - p[2]).abs() < 0.01, "{p:?}");
    }
    assert_eq!(d[d.len() - 4], 1.0);
}

#[test]
fn edge_curve_marks_oob_and_applies_policy() {
    let clip =
        edge_curve_data(1, 0, 32, "asymmetric", "half_open", "clip_x", -2.0, 2.0, 41).unwrap();
    let zero = edge_curve_data(
        1,
        0,
        32,
        "asymmetric",
        "half_open",
        "zero_spline",
        -2.0,
        2.0,
        41,
    )
    .unwrap();
    let outside: Vec<_> = clip
        .chunks_exact(4)
        .filter(|p| p[3] == 0.0)
        .map(|p| p[0])
        .collect();
    assert!(outside.contains(&-2.0) && outside.contains(&1.0) && outside.contains(&2.0));
    assert!(!outside.contains(&0.0));
    let differs = clip
        .chunks_exact(4)
        .zip(zero.chunks_exact(4))
        .any(|(a, b)| a[3] == 0.0 && a[2] != b[2]);
    assert!(differs);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(edge_curve_data(0, 80, 16, "symmetric", "closed", "clip_x", -1.0, 1.0, 10).is_err());
    let e = edge_curve_data(0, 0, 16, "sym", "closed", "clip_x", -1.0, 1.0, 10).unwrap_err();
    assert!(e.contains("sym"));
    assert!(edge_curve_data(0, 0, 1, "symmetric", "closed", "clip_x", -1.0, 1.0, 10).is_err());
    assert!(basis_data(0, 3, 10).is_err());
}

#[test]
fn mae_falls_with_l() {
    let d = mae_vs_l_data(2, "symmetric", 256).unwrap();
    assert_eq!(d.len(), MAE_LS.len() * 3);
    let maes: Vec<f64> = d.chunks_exact(3).map(|r| r[1]).collect();
    assert!(maes.windows(2).all(|w| w[1] < w[0]), "{maes:?}");
}

#[test]
fn basis_rows_sum_to_one() {
    let points = 50;
    let d = basis_data(4, 2, points).unwrap();
    let rows = d.len() / points - 1;
    assert_eq!(rows, 4 + 2);
    for i in 0..points - 1 {
        let s: f64 = (1..=rows).map(|b| d[b * points + i]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
