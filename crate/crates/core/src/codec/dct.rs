//! Orthonormal 8x8 DCT-II and its inverse, double precision.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// cos((2x+1) u pi / 16) scaled by the orthonormal 1-D factor c(u)/2.
fn basis() -> &'static [[f64; 8]; 8] {
    static TABLE: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0.0; 8]; 8];
        for (u, row) in t.iter_mut().enumerate() {
            let c = if u == 0 { (0.5f64).sqrt() } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5 * c * (((2 * x + 1) as f64) * u as f64 * PI / 16.0).cos();
            }
        }
        t
    })
}

/// Forward 2-D DCT of a row-major 8x8 sample block.
pub fn forward(samples: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut rows = [0.0f64; 64];
    for y in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for x in 0..8 {
                acc += b[u][x] * samples[y * 8 + x];
            }
            rows[y * 8 + u] = acc;
        }
    }
    let mut out = [0.0f64; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += b[v][y] * rows[y * 8 + u];
            }
            out[v * 8 + u] = acc;
        }
    }
    out
}

/// Inverse 2-D DCT back to row-major samples.
pub fn inverse(coeffs: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut rows = [0.0f64; 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut acc = 0.0;
            for u in 0..8 {
                acc += b[u][x] * coeffs[v * 8 + u];
            }
            rows[v * 8 + x] = acc;
        }
    }
    let mut out = [0.0f64; 64];
    for x in 0..8 {
        for y in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += b[v][y] * rows[v * 8 + x];
            }
            out[y * 8 + x] = acc;
        }
    }
    out
}
