//! sRGB <-> CIELAB conversion under D65, plus the `[-1, 1]` normalisation
//! used for network inputs and targets.
//!
//! Lightness is mapped with `L / 50 - 1`, chroma with `ab / 128`.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Zip};

use crate::error::{Error, Result};

/// D65 reference white in XYZ, `Y` normalised to one.
pub const WHITE_D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];

/// Divisor mapping CIELAB chroma `[-128, 128]` onto `[-1, 1]`.
pub const CHROMA_SCALE: f64 = 128.0;

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.240_454_2, -1.537_138_5, -0.498_531_4],
    [-0.969_266_0, 1.876_010_8, 0.041_556_0],
    [0.055_643_4, -0.204_025_9, 1.057_225_2],
];

// CIE constants in their exact rational form.
const DELTA: f64 = 6.0 / 29.0;
const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

/// An 8-bit sRGB raster, `pixels` laid out as `(height, width, 3)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pixels: Array3<u8>,
}

impl RgbImage {
    pub fn new(pixels: Array3<u8>) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if c != 3 {
            return Err(Error::shape(format!("expected 3 channels, got {c}")));
        }
        if h == 0 || w == 0 {
            return Err(Error::shape(format!("empty raster {h}x{w}")));
        }
        Ok(Self { pixels })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Array3::zeros((height, width, 3));
        for y in 0..height {
            for x in 0..width {
                let p = f(y, x);
                for c in 0..3 {
                    pixels[[y, x, c]] = p[c];
                }
            }
        }
        Self::new(pixels)
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn pixels(&self) -> &Array3<u8> {
        &self.pixels
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        [self.pixels[[y, x, 0]], self.pixels[[y, x, 1]], self.pixels[[y, x, 2]]]
    }

    pub fn into_pixels(self) -> Array3<u8> {
        self.pixels
    }

    /// Row-major interleaved RGB bytes.
    pub fn to_raw(&self) -> Vec<u8> {
        self.pixels.iter().copied().collect()
    }

    pub fn from_raw(height: usize, width: usize, raw: Vec<u8>) -> Result<Self> {
        let pixels = Array3::from_shape_vec((height, width, 3), raw)
            .map_err(|e| Error::shape(format!("raw buffer does not match {height}x{width}x3: {e}")))?;
        Self::new(pixels)
    }
}

/// CIELAB planes. `l` is in `[0, 100]`, `a` and `b` nominally in `[-128, 128]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub l: Array2<f64>,
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl LabImage {
    pub fn new(l: Array2<f64>, a: Array2<f64>, b: Array2<f64>) -> Result<Self> {
        if l.dim() != a.dim() || l.dim() != b.dim() {
            return Err(Error::shape(format!(
                "lab planes differ: L {:?}, a {:?}, b {:?}",
                l.dim(),
                a.dim(),
                b.dim()
            )));
        }
        Ok(Self { l, a, b })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.l.dim()
    }
}

/// Network-facing representation: every value in `[-1, 1]`.
/// `ab` is laid out as `(2, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLab {
    pub l: Array2<f64>,
    pub ab: Array3<f64>,
}

#[inline]
fn srgb_decode(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn srgb_encode(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn srgb_encode_slope(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92
    } else {
        1.055 / 2.4 * c.powf(1.0 / 2.4 - 1.0)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

#[inline]
fn lab_f_inv(u: f64) -> f64 {
    if u > DELTA {
        u * u * u
    } else {
        3.0 * DELTA * DELTA * (u - 4.0 / 29.0)
    }
}

#[inline]
fn lab_f_inv_slope(u: f64) -> f64 {
    if u > DELTA {
        3.0 * u * u
    } else {
        3.0 * DELTA * DELTA
    }
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Converts one 8-bit sRGB pixel to `[L, a, b]`.
pub fn rgb_pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_decode(f64::from(c) / 255.0));
    let xyz = mat_vec(&SRGB_TO_XYZ, lin);
    let fx = lab_f(xyz[0] / WHITE_D65[0]);
    let fy = lab_f(xyz[1] / WHITE_D65[1]);
    let fz = lab_f(xyz[2] / WHITE_D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn lab_to_linear(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        WHITE_D65[0] * lab_f_inv(fx),
        WHITE_D65[1] * lab_f_inv(fy),
        WHITE_D65[2] * lab_f_inv(fz),
    ];
    mat_vec(&XYZ_TO_SRGB, xyz)
}

/// Converts `[L, a, b]` to 8-bit sRGB, clipping out-of-gamut colours.
pub fn lab_pixel_to_rgb(lab: [f64; 3]) -> [u8; 3] {
    lab_to_linear(lab).map(|c| {
        let v = srgb_encode(c).clamp(0.0, 1.0);
        (v * 255.0).round() as u8
    })
}

/// Clip-free Lab to sRGB on normalised inputs. Returns gamma-encoded RGB
/// (nominally `[0, 1]` but unbounded) together with the Jacobian
/// `d rgb[i] / d [l_n, a_n, b_n][j]`.
pub fn normalized_lab_to_rgb_smooth(l_n: f64, a_n: f64, b_n: f64) -> ([f64; 3], [[f64; 3]; 3]) {
    let fy = (50.0 * (l_n + 1.0) + 16.0) / 116.0;
    let fx = fy + CHROMA_SCALE * a_n / 500.0;
    let fz = fy - CHROMA_SCALE * b_n / 200.0;

    let xyz = [
        WHITE_D65[0] * lab_f_inv(fx),
        WHITE_D65[1] * lab_f_inv(fy),
        WHITE_D65[2] * lab_f_inv(fz),
    ];
    let dfy_dl = 50.0 / 116.0;
    let sx = WHITE_D65[0] * lab_f_inv_slope(fx);
    let sy = WHITE_D65[1] * lab_f_inv_slope(fy);
    let sz = WHITE_D65[2] * lab_f_inv_slope(fz);
    // d xyz / d (l_n, a_n, b_n)
    let dxyz = [
        [sx * dfy_dl, sx * CHROMA_SCALE / 500.0, 0.0],
        [sy * dfy_dl, 0.0, 0.0],
        [sz * dfy_dl, 0.0, -sz * CHROMA_SCALE / 200.0],
    ];

    let lin = mat_vec(&XYZ_TO_SRGB, xyz);
    let mut rgb = [0.0; 3];
    let mut jac = [[0.0; 3]; 3];
    for i in 0..3 {
        rgb[i] = srgb_encode(lin[i]);
        let slope = srgb_encode_slope(lin[i]);
        for j in 0..3 {
            let dlin = (0..3).map(|k| XYZ_TO_SRGB[i][k] * dxyz[k][j]).sum::<f64>();
            jac[i][j] = slope * dlin;
        }
    }
    (rgb, jac)
}

pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    let (h, w) = (img.height(), img.width());
    let mut l = Array2::zeros((h, w));
    let mut a = Array2::zeros((h, w));
    let mut b = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let lab = rgb_pixel_to_lab(img.pixel(y, x));
            l[[y, x]] = lab[0];
            a[[y, x]] = lab[1];
            b[[y, x]] = lab[2];
        }
    }
    LabImage { l, a, b }
}

pub fn lab_to_rgb(img: &LabImage) -> RgbImage {
    let (h, w) = img.dim();
    let mut pixels = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let rgb = lab_pixel_to_rgb([img.l[[y, x]], img.a[[y, x]], img.b[[y, x]]]);
            for c in 0..3 {
                pixels[[y, x, c]] = rgb[c];
            }
        }
    }
    RgbImage { pixels }
}

#[inline]
pub fn normalize_lightness(l: f64) -> f64 {
    l / 50.0 - 1.0
}

#[inline]
pub fn denormalize_lightness(l_n: f64) -> f64 {
    (l_n + 1.0) * 50.0
}

pub fn normalize(img: &LabImage) -> NormalizedLab {
    let (h, w) = img.dim();
    let l = img.l.mapv(normalize_lightness);
    let mut ab = Array3::zeros((2, h, w));
    Zip::from(ab.index_axis_mut(ndarray::Axis(0), 0))
        .and(&img.a)
        .for_each(|o, &v| *o = v / CHROMA_SCALE);
    Zip::from(ab.index_axis_mut(ndarray::Axis(0), 1))
        .and(&img.b)
        .for_each(|o, &v| *o = v / CHROMA_SCALE);
    NormalizedLab { l, ab }
}

pub fn denormalize(img: &NormalizedLab) -> LabImage {
    LabImage {
        l: img.l.mapv(denormalize_lightness),
        a: img.ab.index_axis(ndarray::Axis(0), 0).mapv(|v| v * CHROMA_SCALE),
        b: img.ab.index_axis(ndarray::Axis(0), 1).mapv(|v| v * CHROMA_SCALE),
    }
}

/// Pairs raw lightness (`[0, 100]`) with normalised chroma `(2, H, W)` and
/// renders the result as sRGB.
pub fn merge_luminance_chroma(l: ArrayView2<f64>, ab_n: ArrayView3<f64>) -> Result<RgbImage> {
    let (h, w) = l.dim();
    let (c, ah, aw) = ab_n.dim();
    if c != 2 || ah != h || aw != w {
        return Err(Error::shape(format!(
            "lightness is {h}x{w} but chroma is {c}x{ah}x{aw}"
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::shape("empty lightness plane"));
    }
    let lab = LabImage {
        l: l.to_owned(),
        a: ab_n.index_axis(ndarray::Axis(0), 0).mapv(|v| v * CHROMA_SCALE),
        b: ab_n.index_axis(ndarray::Axis(0), 1).mapv(|v| v * CHROMA_SCALE),
    };
    Ok(lab_to_rgb(&lab))
}
