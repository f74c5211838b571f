//! Disk dilation through an exact squared Euclidean distance transform.

const FAR: u32 = u32::MAX / 4;
/// Stand-in for an infinite column distance. Large enough to never win
/// against a real distance, small enough that sums stay exact integers.
const UNREACHED: f64 = 1e12;

/// Squared distance from every pixel to the nearest `true` pixel, or
/// `None` when the plane is empty.
pub fn squared_distance_transform(plane: &[bool], width: u32, height: u32) -> Option<Vec<f64>> {
    let (w, h) = (width as usize, height as usize);
    assert_eq!(plane.len(), w * h);
    if !plane.iter().any(|&p| p) {
        return None;
    }

    // vertical distance to the nearest set pixel in the same column
    let mut g = vec![FAR; w * h];
    for y in 0..h {
        let (prev, cur) = g.split_at_mut(y * w);
        let cur = &mut cur[..w];
        let row = &plane[y * w..(y + 1) * w];
        if y == 0 {
            for x in 0..w {
                cur[x] = if row[x] { 0 } else { FAR };
            }
        } else {
            let above = &prev[(y - 1) * w..];
            for x in 0..w {
                cur[x] = if row[x] {
                    0
                } else {
                    above[x].saturating_add(1).min(FAR)
                };
            }
        }
    }
    for y in (0..h.saturating_sub(1)).rev() {
        let (cur, next) = g.split_at_mut((y + 1) * w);
        let cur = &mut cur[y * w..];
        for x in 0..w {
            cur[x] = cur[x].min(next[x].saturating_add(1));
        }
    }

    // horizontal pass: lower envelope of parabolas per row
    let mut out = vec![0.0f64; w * h];
    let mut f = vec![0.0f64; w];
    let mut v = vec![0usize; w];
    let mut z = vec![0.0f64; w + 1];
    for y in 0..h {
        let grow = &g[y * w..(y + 1) * w];
        let orow = &mut out[y * w..(y + 1) * w];
        if grow.iter().all(|&d| d >= FAR) {
            orow.fill(f64::INFINITY);
            continue;
        }
        for x in 0..w {
            f[x] = if grow[x] >= FAR {
                UNREACHED
            } else {
                (grow[x] as f64).powi(2)
            };
        }
        lower_envelope(&f, orow, &mut v, &mut z);
    }
    Some(out)
}

fn intersection(f: &[f64], q: usize, p: usize) -> f64 {
    let (qf, pf) = (q as f64, p as f64);
    ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
}

fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersection(f, q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersection(f, q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Dilates by the closed disk `{(dx, dy) : dx^2 + dy^2 <= radius^2}`.
pub fn dilate_disk(plane: &[bool], width: u32, height: u32, radius: f64) -> Vec<bool> {
    let (w, h) = (width as usize, height as usize);
    let mut out = vec![false; plane.len()];
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for (y, row) in plane.chunks_exact(w.max(1)).enumerate() {
        if let Some(first) = row.iter().position(|&p| p) {
            let last = row.iter().rposition(|&p| p).unwrap();
            (x0, x1) = (x0.min(first), x1.max(last + 1));
            (y0, y1) = (y0.min(y), y + 1);
        }
    }
    if x1 == 0 {
        return out;
    }
    // pixels further than `reach` from the foreground box on either axis
    // are outside the disk of every foreground pixel
    let reach = radius.max(0.0).floor() as usize + 1;
    let (cx0, cy0) = (x0.saturating_sub(reach), y0.saturating_sub(reach));
    let (cx1, cy1) = ((x1 + reach).min(w), (y1 + reach).min(h));
    let cw = cx1 - cx0;
    let crop: Vec<bool> = (cy0..cy1)
        .flat_map(|y| plane[y * w + cx0..y * w + cx1].iter().copied())
        .collect();
    let dist = squared_distance_transform(&crop, cw as u32, (cy1 - cy0) as u32)
        .expect("crop holds the foreground");
    let r2 = radius * radius;
    for (cy, row) in dist.chunks_exact(cw).enumerate() {
        let dst = &mut out[(cy0 + cy) * w + cx0..][..cw];
        for (o, &d) in dst.iter_mut().zip(row) {
            *o = d <= r2;
        }
    }
    out
}
