//! Direct-loop reference implementations used to cross-check the library.
#![allow(dead_code)]

use colorgan::colorspace::RgbImage;

fn luma_at(img: &RgbImage, y: usize, x: usize) -> f64 {
    let p = img.pixel(y, x);
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

fn luma_plane(img: &RgbImage) -> Vec<Vec<f64>> {
    (0..img.height())
        .map(|y| (0..img.width()).map(|x| luma_at(img, y, x)).collect())
        .collect()
}

pub fn mse(a: &RgbImage, b: &RgbImage) -> f64 {
    let mut s = 0.0;
    let mut n = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..3 {
                let d = a.pixel(y, x)[c] as f64 - b.pixel(y, x)[c] as f64;
                s += d * d;
                n += 1.0;
            }
        }
    }
    s / n
}

pub fn psnr(a: &RgbImage, b: &RgbImage) -> f64 {
    let m = mse(a, b);
    if m == 0.0 {
        99.0
    } else {
        20.0 * 255.0f64.log10() - 10.0 * m.log10()
    }
}

fn gaussian_2d(n: usize, sigma: f64) -> Vec<Vec<f64>> {
    let c = (n - 1) as f64 / 2.0;
    let mut k = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *v = (-r2 / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    for row in k.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    k
}

/// Weighted mean, variances and covariance of one window, two-pass.
fn window_stats(x: &[Vec<f64>], y: &[Vec<f64>], w: &[Vec<f64>], r0: usize, c0: usize) -> [f64; 5] {
    let n = w.len();
    let (mut mx, mut my) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            mx += w[i][j] * x[r0 + i][c0 + j];
            my += w[i][j] * y[r0 + i][c0 + j];
        }
    }
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let dx = x[r0 + i][c0 + j] - mx;
            let dy = y[r0 + i][c0 + j] - my;
            vx += w[i][j] * dx * dx;
            vy += w[i][j] * dy * dy;
            cxy += w[i][j] * dx * dy;
        }
    }
    [mx, my, vx, vy, cxy]
}

pub fn ssim(a: &RgbImage, b: &RgbImage) -> f64 {
    let (x, y) = (luma_plane(a), luma_plane(b));
    let w = gaussian_2d(11, 1.5);
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let (h, wd) = (a.height(), a.width());
    let mut total = 0.0;
    let mut count = 0.0;
    for r in 0..=h - 11 {
        for c in 0..=wd - 11 {
            let [mx, my, vx, vy, cxy] = window_stats(&x, &y, &w, r, c);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    total / count
}

pub fn uqi(a: &RgbImage, b: &RgbImage) -> f64 {
    let (x, y) = (luma_plane(a), luma_plane(b));
    let w = vec![vec![1.0 / 64.0; 8]; 8];
    let (h, wd) = (a.height(), a.width());
    let mut total = 0.0;
    let mut count = 0.0;
    for r in 0..=h - 8 {
        for c in 0..=wd - 8 {
            let [mx, my, vx, vy, cxy] = window_stats(&x, &y, &w, r, c);
            let den = (vx + vy) * (mx * mx + my * my);
            if den == 0.0 {
                continue;
            }
            total += 4.0 * cxy * mx * my / den;
            count += 1.0;
        }
    }
    if count == 0.0 {
        return if x == y { 1.0 } else { 0.0 };
    }
    total / count
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let i = if i < 0 { -i } else { i };
    (if i >= n { 2 * (n - 1) - i } else { i }) as usize
}

/// Same-size 2-D Gaussian smoothing with mirrored borders.
fn smooth(img: &[Vec<f64>], k: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (h, w) = (img.len(), img[0].len());
    let n = k.len();
    let p = (n / 2) as isize;
    let mut out = vec![vec![0.0; w]; h];
    for (y, row) in out.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let yy = reflect(y as isize + i as isize - p, h);
                    let xx = reflect(x as isize + j as isize - p, w);
                    s += k[i][j] * img[yy][xx];
                }
            }
            *v = s;
        }
    }
    out
}

fn product(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x * y).collect())
        .collect()
}

pub fn vif(reference: &RgbImage, distorted: &RgbImage) -> f64 {
    let mut r = luma_plane(reference);
    let mut d = luma_plane(distorted);
    if r == d {
        return 1.0;
    }
    let noise = 2.0;
    let (mut num, mut den) = (0.0, 0.0);
    for scale in 0..4 {
        let n = (1usize << (4 - scale)) + 1;
        let k = gaussian_2d(n, n as f64 / 5.0);
        if scale > 0 {
            let down = |img: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                img.iter()
                    .step_by(2)
                    .map(|row| row.iter().step_by(2).copied().collect())
                    .collect()
            };
            r = down(smooth(&r, &k));
            d = down(smooth(&d, &k));
        }
        let mu_r = smooth(&r, &k);
        let mu_d = smooth(&d, &k);
        let rr = smooth(&product(&r, &r), &k);
        let dd = smooth(&product(&d, &d), &k);
        let rd = smooth(&product(&r, &d), &k);
        for y in 0..r.len() {
            for x in 0..r[0].len() {
                let mut s1 = (rr[y][x] - mu_r[y][x] * mu_r[y][x]).max(0.0);
                let s2 = (dd[y][x] - mu_d[y][x] * mu_d[y][x]).max(0.0);
                let s12 = rd[y][x] - mu_r[y][x] * mu_d[y][x];
                let mut g = s12 / (s1 + 1e-10);
                let mut sv = s2 - g * s12;
                if s1 < 1e-10 {
                    g = 0.0;
                    sv = s2;
                    s1 = 0.0;
                }
                if s2 < 1e-10 {
                    g = 0.0;
                    sv = 0.0;
                }
                if g < 0.0 {
                    sv = s2;
                    g = 0.0;
                }
                sv = sv.max(1e-10);
                num += (1.0 + g * g * s1 / (sv + noise)).log2();
                den += (1.0 + s1 / noise).log2();
            }
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}
