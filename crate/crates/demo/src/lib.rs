//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layouts are documented on
//! the plain Rust functions, which are also what the native tests call.

use lutkan::metrics::eval_accuracy;
use lutkan::model_gen::{gen_layer_inputs, gen_sanity_layer, sanity_grid};
use lutkan::{compile_layer, BoundaryMode, KnotGrid, OobConfig, OobPolicy, QuantConfig, Scheme};
use wasm_bindgen::prelude::*;

pub const MAE_LS: [usize; 5] = [8, 16, 32, 64, 128];

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

/// One edge of the seeded sanity layer sampled on `points` evenly spaced x in
/// `[lo, hi]`. Stride 4: `x, reference phi, LUT phi, in_domain (1 or 0)`.
#[allow(clippy::too_many_arguments)]
pub fn edge_curve_data(
    seed: u32,
    edge: usize,
    samples: usize,
    scheme: &str,
    boundary_mode: &str,
    oob_policy: &str,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let layer = gen_sanity_layer(seed as u64);
    if edge >= layer.edge_count() {
        return Err(format!(
            "edge {edge} out of range (layer has {})",
            layer.edge_count()
        ));
    }
    if points < 2 || lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err("need at least two points and lo < hi".into());
    }
    let oob = OobConfig::new(
        parse::<BoundaryMode>(boundary_mode)?,
        parse::<OobPolicy>(oob_policy)?,
    );
    let cfg = QuantConfig::new(samples, parse::<Scheme>(scheme)?);
    let art = compile_layer(&layer, &cfg, oob).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(points * 4);
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let (_, oob_hit) = art.eval_value(edge, x).map_err(|e| e.to_string())?;
        let lut = art.eval_phi(edge, x).map_err(|e| e.to_string())?;
        out.extend([
            x,
            layer.edge_phi(edge, x),
            lut,
            if oob_hit { 0.0 } else { 1.0 },
        ]);
    }
    Ok(out)
}

/// In-range accuracy of the sanity layer for each L in [`MAE_LS`].
/// Stride 3: `L, MAE, MaxAbs`.
pub fn mae_vs_l_data(seed: u32, scheme: &str, num_samples: usize) -> Result<Vec<f64>, String> {
    let scheme = parse::<Scheme>(scheme)?;
    let layer = gen_sanity_layer(seed as u64);
    let xs = gen_layer_inputs(seed as u64, num_samples.max(1), &layer, true);
    let mut out = Vec::with_capacity(MAE_LS.len() * 3);
    for l in MAE_LS {
        let art = compile_layer(&layer, &QuantConfig::new(l, scheme), OobConfig::default())
            .map_err(|e| e.to_string())?;
        let r = eval_accuracy(&layer, &art, &xs, seed as u64).map_err(|e| e.to_string())?;
        out.extend([
            l as f64,
            r.mae_inrange.unwrap_or(f64::NAN),
            r.maxabs_inrange.unwrap_or(f64::NAN),
        ]);
    }
    Ok(out)
}

/// B-spline basis on the sanity domain. The first `points` values are the x
/// grid, followed by one row of `points` values per basis function.
pub fn basis_data(segments: usize, degree: usize, points: usize) -> Result<Vec<f64>, String> {
    let base = sanity_grid();
    let grid = KnotGrid::uniform(base.lower(), base.upper(), segments, degree)
        .map_err(|e| e.to_string())?;
    if points < 2 {
        return Err("need at least two points".into());
    }
    let (lo, hi) = (grid.lower(), grid.upper());
    let xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let r = grid.basis_count();
    let mut out = xs.clone();
    out.resize(points * (r + 1), 0.0);
    for (i, &x) in xs.iter().enumerate() {
        for (b, v) in grid.basis_values(x).into_iter().enumerate() {
            out[(b + 1) * points + i] = v;
        }
    }
    Ok(out)
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn edge_curve(
    seed: u32,
    edge: usize,
    samples: usize,
    scheme: &str,
    boundary_mode: &str,
    oob_policy: &str,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    js(edge_curve_data(
        seed,
        edge,
        samples,
        scheme,
        boundary_mode,
        oob_policy,
        lo,
        hi,
        points,
    ))
}

#[wasm_bindgen]
pub fn mae_vs_l(seed: u32, scheme: &str, num_samples: usize) -> Result<Vec<f64>, JsError> {
    js(mae_vs_l_data(seed, scheme, num_samples))
}

#[wasm_bindgen]
pub fn basis(segments: usize, degree: usize, points: usize) -> Result<Vec<f64>, JsError> {
    js(basis_data(segments, degree, points))
}
