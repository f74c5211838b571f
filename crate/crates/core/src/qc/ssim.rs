//! Structural similarity on luma with a uniform square window.

pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const DYNAMIC_RANGE: f64 = 255.0;

/// ITU-R BT.601 luma of fixed-point blurred RGB, in 8-bit units.
pub fn luma(blurred: &[u32], scale: u32) -> Vec<f64> {
    let denom = 1000.0 * scale as f64;
    blurred
        .chunks_exact(3)
        .map(|p| (299 * p[0] as u64 + 587 * p[1] as u64 + 114 * p[2] as u64) as f64 / denom)
        .collect()
}

/// SSIM of one window from its raw moments over `n` samples.
#[inline]
pub fn ssim_from_sums(n: f64, sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64) -> f64 {
    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    let (mx, my) = (sx / n, sy / n);
    let vx = sxx / n - mx * mx;
    let vy = syy / n - my * my;
    let cov = sxy / n - mx * my;
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean SSIM over every `window x window` window whose pixels are all
/// `valid`. Returns the mean and the number of windows, or `None` when no
/// window qualifies.
pub fn mean_ssim(
    x: &[f64],
    y: &[f64],
    valid: &[bool],
    width: u32,
    height: u32,
    window: usize,
) -> Option<(f64, usize)> {
    let (w, h) = (width as usize, height as usize);
    assert!(x.len() == w * h && y.len() == w * h && valid.len() == w * h);
    if window == 0 || w < window || h < window {
        return None;
    }
    let nw = w - window + 1;
    let area = (window * window) as f64;

    // ring of per-row horizontal window sums, plus their running column total
    let mut ring = vec![[0.0f64; 5]; window * nw];
    let mut ring_holes = vec![0u32; window * nw];
    let mut col = vec![[0.0f64; 5]; nw];
    let mut col_holes = vec![0u32; nw];
    let mut total = 0.0f64;
    let mut count = 0usize;

    for row in 0..h {
        let slot = &mut ring[(row % window) * nw..][..nw];
        let slot_holes = &mut ring_holes[(row % window) * nw..][..nw];
        for x0 in 0..nw {
            for q in 0..5 {
                col[x0][q] -= slot[x0][q];
            }
            col_holes[x0] -= slot_holes[x0];
        }

        let (xr, yr, vr) = (
            &x[row * w..][..w],
            &y[row * w..][..w],
            &valid[row * w..][..w],
        );
        let moments = |i: usize| {
            let (a, b) = (xr[i], yr[i]);
            [a, b, a * a, b * b, a * b]
        };
        let mut s = [0.0f64; 5];
        let mut bad = 0u32;
        for i in 0..window {
            let m = moments(i);
            for q in 0..5 {
                s[q] += m[q];
            }
            bad += (!vr[i]) as u32;
        }
        for x0 in 0..nw {
            if x0 > 0 {
                let (enter, leave) = (moments(x0 + window - 1), moments(x0 - 1));
                for q in 0..5 {
                    s[q] += enter[q] - leave[q];
                }
                bad = bad + (!vr[x0 + window - 1]) as u32 - (!vr[x0 - 1]) as u32;
            }
            slot[x0] = s;
            slot_holes[x0] = bad;
            for q in 0..5 {
                col[x0][q] += s[q];
            }
            col_holes[x0] += bad;
        }

        if row + 1 < window {
            continue;
        }
        for (c, &holes) in col.iter().zip(&col_holes) {
            if holes == 0 {
                total += ssim_from_sums(area, c[0], c[1], c[2], c[3], c[4]);
                count += 1;
            }
        }
    }
    (count > 0).then(|| (total / count as f64, count))
}
