//! Seeded synthetic layers and probe inputs.
//!
//! Generator constants:
//!
//! * PRNG: ChaCha8 (`rand_chacha::ChaCha8Rng`) keyed by `seed_from_u64(seed)`.
//!   Layers draw from stream 0, inputs from stream 1.
//! * Uniform `U[0, 1)`: the top 53 bits of one `u64` scaled by `2^-53`.
//! * Normal: Box-Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`; the sine
//!   branch is discarded so every normal consumes exactly two uniforms.
//! * Sanity layer: `d = 10`, `m = 8`, `K = 8` uniform segments on `[-1, 1]`,
//!   degree 3. Per edge in order `e = 0..80`: 11 coefficients `~ N(0, 0.1)`,
//!   then `base_scale`, `spline_scale`, `out_scale ~ U(0.5, 1.5)`. Every drawn
//!   parameter is rounded to float32.
//! * Inputs: row-major standard normals, optionally clamped to `[t_0, t_K]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::Batch;
use crate::spline::{BaseKind, EdgeParams, KanLayerSpec, KnotGrid};

pub const SANITY_IN_DIM: usize = 10;
pub const SANITY_OUT_DIM: usize = 8;
pub const SANITY_SEGMENTS: usize = 8;
pub const SANITY_DEGREE: usize = 3;
pub const SANITY_DOMAIN: (f64, f64) = (-1.0, 1.0);
pub const COEFF_STD: f64 = 0.1;
pub const SCALAR_RANGE: (f64, f64) = (0.5, 1.5);
pub const CALIBRATION_SAMPLES: usize = 4096;

const LAYER_STREAM: u64 = 0;
const INPUT_STREAM: u64 = 1;

/// Deterministic generator used for layers and inputs.
pub struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Gen { rng }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn f32_round(x: f64) -> f64 {
    x as f32 as f64
}

pub fn sanity_grid() -> KnotGrid {
    KnotGrid::uniform(
        SANITY_DOMAIN.0,
        SANITY_DOMAIN.1,
        SANITY_SEGMENTS,
        SANITY_DEGREE,
    )
    .expect("sanity grid constants are valid")
}

/// Random layer of the given shape on the sanity grid.
pub fn gen_layer(seed: u64, in_dim: usize, out_dim: usize, grid: KnotGrid) -> KanLayerSpec {
    let mut g = Gen::new(seed, LAYER_STREAM);
    let r = grid.basis_count();
    let (lo, hi) = SCALAR_RANGE;
    let edges = (0..in_dim * out_dim)
        .map(|_| {
            let coeffs = (0..r).map(|_| f32_round(COEFF_STD * g.normal())).collect();
            EdgeParams {
                coeffs,
                base_scale: f32_round(g.uniform_in(lo, hi)),
                spline_scale: f32_round(g.uniform_in(lo, hi)),
                out_scale: f32_round(g.uniform_in(lo, hi)),
            }
        })
        .collect();
    KanLayerSpec::new(in_dim, out_dim, grid, edges, BaseKind::Silu)
        .expect("generated layer is consistent")
}

/// The `10 -> 8`, `K = 8`, cubic sanity layer.
pub fn gen_sanity_layer(seed: u64) -> KanLayerSpec {
    gen_layer(seed, SANITY_IN_DIM, SANITY_OUT_DIM, sanity_grid())
}

/// `n x d` standard normals; with `clip` each coordinate is clamped to `[lo, hi]`.
pub fn gen_inputs(seed: u64, n: usize, d: usize, domain: (f64, f64), clip: bool) -> Batch {
    let mut g = Gen::new(seed, INPUT_STREAM);
    let data = (0..n * d)
        .map(|_| {
            let z = g.normal();
            if clip {
                z.clamp(domain.0, domain.1)
            } else {
                z
            }
        })
        .collect();
    Batch::new(n, d, data).expect("shape matches data length")
}

/// Probe inputs for a layer, clamped to its knot domain when `clip` is set.
pub fn gen_layer_inputs(seed: u64, n: usize, layer: &KanLayerSpec, clip: bool) -> Batch {
    let grid = layer.grid();
    gen_inputs(seed, n, layer.in_dim(), (grid.lower(), grid.upper()), clip)
}
