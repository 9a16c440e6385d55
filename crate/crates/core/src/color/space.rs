//! sRGB (D65) to CIELAB conversion with analytic Jacobians.
//!
//! The reference white is the XYZ image of sRGB `(1, 1, 1)`, i.e. the row
//! sums of the conversion matrix, so that encoded white maps to
//! `L* = 100, a* = b* = 0` exactly up to rounding.

use std::sync::LazyLock;

pub type Mat3 = [[f64; 3]; 3];

pub const SRGB_TO_XYZ: Mat3 = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

pub static XYZ_TO_SRGB: LazyLock<Mat3> = LazyLock::new(|| invert3(&SRGB_TO_XYZ));

pub static WHITE: LazyLock<[f64; 3]> = LazyLock::new(|| SRGB_TO_XYZ.map(|row| row.iter().sum()));

const DELTA: f64 = 6.0 / 29.0;

pub fn invert3(m: &Mat3) -> Mat3 {
    let c = |r: usize, k: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
        m[r1][k1] * m[r2][k2] - m[r1][k2] * m[r2][k1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = c(j, i) / det;
        }
    }
    inv
}

pub fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    m.map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2])
}

/// Electro-optical transfer: encoded value to linear light. The linear
/// segment also covers negative inputs.
pub fn srgb_decode(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn srgb_decode_deriv(c: f64) -> f64 {
    if c <= 0.04045 {
        1.0 / 12.92
    } else {
        2.4 / 1.055 * ((c + 0.055) / 1.055).powf(1.4)
    }
}

pub fn srgb_encode(l: f64) -> f64 {
    if l <= 0.0031308 {
        12.92 * l
    } else {
        1.055 * l.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_deriv(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        1.0 / (3.0 * t.cbrt() * t.cbrt())
    } else {
        1.0 / (3.0 * DELTA * DELTA)
    }
}

fn lab_f_inv(f: f64) -> f64 {
    if f > DELTA {
        f * f * f
    } else {
        3.0 * DELTA * DELTA * (f - 4.0 / 29.0)
    }
}

fn lab_from_f(fx: f64, fy: f64, fz: f64) -> [f64; 3] {
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let xyz = mat_vec(&SRGB_TO_XYZ, rgb.map(srgb_decode));
    let w = *WHITE;
    lab_from_f(lab_f(xyz[0] / w[0]), lab_f(xyz[1] / w[1]), lab_f(xyz[2] / w[2]))
}

/// Lab value and `d lab / d rgb` (row per Lab channel).
pub fn srgb_to_lab_jacobian(rgb: [f64; 3]) -> ([f64; 3], Mat3) {
    let lin = rgb.map(srgb_decode);
    let dlin = rgb.map(srgb_decode_deriv);
    let xyz = mat_vec(&SRGB_TO_XYZ, lin);
    let w = *WHITE;
    let t = [xyz[0] / w[0], xyz[1] / w[1], xyz[2] / w[2]];
    let f = t.map(lab_f);
    // d f_i / d rgb_k
    let mut df = [[0.0; 3]; 3];
    for i in 0..3 {
        let s = lab_f_deriv(t[i]) / w[i];
        for k in 0..3 {
            df[i][k] = s * SRGB_TO_XYZ[i][k] * dlin[k];
        }
    }
    let mut jac = [[0.0; 3]; 3];
    for k in 0..3 {
        jac[0][k] = 116.0 * df[1][k];
        jac[1][k] = 500.0 * (df[0][k] - df[1][k]);
        jac[2][k] = 200.0 * (df[1][k] - df[2][k]);
    }
    (lab_from_f(f[0], f[1], f[2]), jac)
}

pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let w = *WHITE;
    let xyz = [w[0] * lab_f_inv(fx), w[1] * lab_f_inv(fy), w[2] * lab_f_inv(fz)];
    mat_vec(&XYZ_TO_SRGB, xyz).map(srgb_encode)
}
