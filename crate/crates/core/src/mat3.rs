//! 3x3 helpers shared by the tensor-valued outputs.

use nalgebra::Matrix3;

pub type M3 = [[f64; 3]; 3];

pub fn to_na(m: &M3) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

pub fn from_na(m: &Matrix3<f64>) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

pub fn identity() -> M3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

pub fn frob(m: &M3) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &M3, b: &M3) -> M3 {
    let mut out = *a;
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] -= b[r][c];
        }
    }
    out
}

pub fn mul(a: &M3, b: &M3) -> M3 {
    from_na(&(to_na(a) * to_na(b)))
}

pub fn transpose(a: &M3) -> M3 {
    from_na(&to_na(a).transpose())
}

/// `(A + A^T) / 2` and `|A - A^T|_F`.
pub fn symmetrise(a: &M3) -> (M3, f64) {
    let t = transpose(a);
    let mut s = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            s[r][c] = 0.5 * (a[r][c] + t[r][c]);
        }
    }
    (s, frob(&sub(a, &t)))
}
