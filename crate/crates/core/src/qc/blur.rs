//! Separable Gaussian blur with an integer kernel.
//!
//! Each axis uses taps that sum to exactly [`AXIS_SCALE`], with edge
//! replication, so every output sample is an exact integer equal to the
//! blurred value times [`SCALE`]. Adding a constant to an unclamped image
//! therefore adds exactly `constant * SCALE` to every output sample.

/// Per-axis kernel weight total.
pub const AXIS_SCALE: u32 = 1 << 10;
/// Fixed-point scale of blurred samples.
pub const SCALE: u32 = AXIS_SCALE * AXIS_SCALE;

/// Symmetric integer taps for a Gaussian of the given sigma, truncated at
/// `truncate * sigma`. The taps sum to [`AXIS_SCALE`].
pub fn kernel(sigma: f64, truncate: f64) -> Vec<u32> {
    let radius = (truncate * sigma).ceil().max(0.0) as i64;
    if sigma <= 0.0 || radius == 0 {
        return vec![AXIS_SCALE];
    }
    let g: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    let mut taps: Vec<u32> = g
        .iter()
        .map(|v| (v / total * AXIS_SCALE as f64).round() as u32)
        .collect();
    let sum: i64 = taps.iter().map(|&t| t as i64).sum();
    let center = radius as usize;
    taps[center] = (taps[center] as i64 + AXIS_SCALE as i64 - sum) as u32;
    taps
}

/// Blurs an interleaved RGB image. Output samples are scaled by [`SCALE`].
pub fn blur_rgb(data: &[u8], width: u32, height: u32, taps: &[u32]) -> Vec<u32> {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports the enabled feature set.
        return unsafe { blur_rgb_avx2(data, width, height, taps) };
    }
    blur_rgb_generic(data, width, height, taps)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn blur_rgb_avx2(data: &[u8], width: u32, height: u32, taps: &[u32]) -> Vec<u32> {
    blur_rgb_generic(data, width, height, taps)
}

#[inline(always)]
fn blur_rgb_generic(data: &[u8], width: u32, height: u32, taps: &[u32]) -> Vec<u32> {
    let (w, h) = (width as usize, height as usize);
    let r = taps.len() / 2;
    let stride = w * 3;
    let t = |k: usize| taps[r + k];
    // The largest sample is 255 * SCALE < 2^28, so the wrapping ops below
    // never wrap; they only keep overflow checks out of the hot loops.

    let mut out = vec![0u32; w * h * 3];
    let mut vert = vec![0u32; stride];
    let mut padded = vec![0u32; (w + 2 * r) * 3];
    let row = |y: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        &data[y * stride..(y + 1) * stride]
    };
    for y in 0..h {
        // vertical pass on bytes: 16-bit operands, 32-bit products
        let t0 = t(0) as u16 as u32;
        for (d, &p) in vert.iter_mut().zip(row(y as isize)) {
            *d = t0.wrapping_mul(p as u16 as u32);
        }
        for k in 1..=r {
            let tk = t(k) as u16 as u32;
            let (up, down) = (row(y as isize - k as isize), row((y + k) as isize));
            for ((d, &a), &b) in vert.iter_mut().zip(up).zip(down) {
                *d = d.wrapping_add(tk.wrapping_mul(a as u16 as u32 + b as u16 as u32));
            }
        }

        // horizontal pass on interleaved samples with replicated edges
        for (i, p) in padded.chunks_exact_mut(3).enumerate() {
            let x = (i as isize - r as isize).clamp(0, w as isize - 1) as usize;
            p.copy_from_slice(&vert[x * 3..x * 3 + 3]);
        }
        let dst = &mut out[y * stride..(y + 1) * stride];
        let center = &padded[r * 3..r * 3 + stride];
        for (d, &p) in dst.iter_mut().zip(center) {
            *d = t(0).wrapping_mul(p);
        }
        for k in 1..=r {
            let (left, right) = (
                &padded[(r - k) * 3..][..stride],
                &padded[(r + k) * 3..][..stride],
            );
            for ((d, &a), &b) in dst.iter_mut().zip(left).zip(right) {
                *d = d.wrapping_add(t(k).wrapping_mul(a.wrapping_add(b)));
            }
        }
    }
    out
}
