//! Full-range BT.601 color conversion and chroma resampling.

/// One full-resolution plane per channel, f64 samples.
pub struct Planes {
    pub y: Vec<f64>,
    pub cb: Vec<f64>,
    pub cr: Vec<f64>,
}

pub fn rgb_to_ycbcr(width: usize, height: usize, rgb: &[u8]) -> Planes {
    let n = width * height;
    debug_assert_eq!(rgb.len(), n * 3);
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for px in rgb.chunks_exact(3) {
        let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
        y.push(0.299 * r + 0.587 * g + 0.114 * b);
        cb.push(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
        cr.push(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
    }
    Planes { y, cb, cr }
}

pub fn ycbcr_to_rgb_pixel(y: f64, cb: f64, cr: f64) -> [u8; 3] {
    let r = y + 1.402 * (cr - 128.0);
    let g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0);
    let b = y + 1.772 * (cb - 128.0);
    [clamp_u8(r), clamp_u8(g), clamp_u8(b)]
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Box-average downsample by integer factors, averaging only in-bounds
/// source samples so edges are not biased by padding.
pub fn downsample(
    src: &[f64],
    width: usize,
    height: usize,
    fx: usize,
    fy: usize,
) -> (Vec<f64>, usize, usize) {
    if fx == 1 && fy == 1 {
        return (src.to_vec(), width, height);
    }
    let out_w = width.div_ceil(fx);
    let out_h = height.div_ceil(fy);
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        for ox in 0..out_w {
            let mut sum = 0.0;
            let mut count = 0usize;
            for dy in 0..fy {
                let sy = oy * fy + dy;
                if sy >= height {
                    continue;
                }
                for dx in 0..fx {
                    let sx = ox * fx + dx;
                    if sx >= width {
                        continue;
                    }
                    sum += src[sy * width + sx];
                    count += 1;
                }
            }
            out.push(sum / count as f64);
        }
    }
    (out, out_w, out_h)
}

/// Nearest-neighbor sample fetch for upsampling a subsampled plane.
/// (x, y) are full-resolution coordinates; the plane is (w, h).
pub fn upsample_fetch(
    plane: &[f64],
    w: usize,
    h: usize,
    x: usize,
    y: usize,
    fx: usize,
    fy: usize,
) -> f64 {
    let sx = (x / fx).min(w - 1);
    let sy = (y / fy).min(h - 1);
    plane[sy * w + sx]
}

/// Pad a plane to (padded_w, padded_h) by replicating the last row and column.
pub fn pad_plane(
    src: &[f64],
    width: usize,
    height: usize,
    padded_w: usize,
    padded_h: usize,
) -> Vec<f64> {
    debug_assert!(padded_w >= width && padded_h >= height);
    let mut out = Vec::with_capacity(padded_w * padded_h);
    for y in 0..padded_h {
        let sy = y.min(height - 1);
        for x in 0..padded_w {
            let sx = x.min(width - 1);
            out.push(src[sy * width + sx]);
        }
    }
    out
}
