//! Exact Euclidean distance transform (Felzenszwalb & Huttenlocher, lower
//! envelope of parabolas, one pass per axis).

use super::{BinaryMask, ScalarField};

/// For every pixel, the Euclidean distance (pixel centres) to the nearest
/// pixel of the opposite class. When the opposite class is absent the
/// distance is the sentinel `width + height`.
pub fn distance_transform(m: &BinaryMask) -> ScalarField {
    let (w, h) = m.dims();
    let to_ones = squared_edt(w, h, |i| m.data()[i] == 1);
    let to_zeros = squared_edt(w, h, |i| m.data()[i] == 0);
    let sentinel = (w + h) as f64;
    let data = (0..w * h)
        .map(|i| {
            let d2 = if m.data()[i] == 1 { to_zeros[i] } else { to_ones[i] };
            if d2.is_finite() {
                d2.sqrt()
            } else {
                sentinel
            }
        })
        .collect();
    ScalarField::new(w, h, data).expect("distances are finite")
}

/// Squared distance to the nearest pixel where `is_feature` holds; infinity if
/// there is none.
pub(crate) fn squared_edt(w: usize, h: usize, is_feature: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..w * h)
        .map(|i| if is_feature(i) { 0.0 } else { f64::INFINITY })
        .collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        transform_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        transform_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    grid
}

fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    // Only finite samples define parabolas.
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[j + 1] < qf {
            j += 1;
        }
        let p = v[j] as f64;
        *out = (qf - p) * (qf - p) + f[v[j]];
    }
}
