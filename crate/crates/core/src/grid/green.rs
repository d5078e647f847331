use super::{ops, Fft3, Grid, ScalarField, VectorField, VectorLoc};
use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;

/// Cached FFT plan and the symbol of the discrete negative Laplacian,
/// `(4/h^2) sum_i sin^2(pi h m_i)`.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub grid: Grid,
    fft: Fft3,
    lap: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n;
        let s: Vec<f64> = (0..n)
            .map(|i| {
                let t = (std::f64::consts::PI * i as f64 / n as f64).sin();
                4.0 * (n * n) as f64 * t * t
            })
            .collect();
        let mut lap = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            let [i, j, k] = grid.ijk(idx);
            lap[idx] = s[i] + s[j] + s[k];
        }
        Spectral { grid, fft: Fft3::new(n), lap }
    }

    /// Symbol of `-Delta_h` at each Fourier index.
    pub fn laplacian_symbol(&self) -> &[f64] {
        &self.lap
    }

    /// Smallest nonzero symbol value.
    pub fn lambda_min(&self) -> f64 {
        let h = self.grid.h();
        let t = (std::f64::consts::PI * h).sin();
        4.0 * t * t / (h * h)
    }

    /// Apply the Fourier multiplier `f(lambda)` to one or two real fields.
    /// Because `f` depends only on the (even, real) Laplacian symbol, two real
    /// fields can share one complex transform.
    pub fn apply_pair(&self, a: &mut [f64], b: Option<&mut [f64]>, f: impl Fn(f64) -> f64) {
        let mut z: Vec<Complex64> = match &b {
            Some(b) => a.iter().zip(b.iter()).map(|(&x, &y)| Complex64::new(x, y)).collect(),
            None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        };
        self.fft.forward(&mut z);
        for (zi, &l) in z.iter_mut().zip(&self.lap) {
            *zi *= f(l);
        }
        self.fft.inverse(&mut z);
        for (x, zi) in a.iter_mut().zip(&z) {
            *x = zi.re;
        }
        if let Some(b) = b {
            for (y, zi) in b.iter_mut().zip(&z) {
                *y = zi.im;
            }
        }
    }

    /// In place `f <- G * f`: the zero-mean solution of `-Delta_h g = f - mean(f)`.
    pub fn green(&self, f: &mut [f64]) {
        self.apply_pair(f, None, |l| if l == 0.0 { 0.0 } else { 1.0 / l });
    }

    /// `out = grad(G * div w)` on edge slices.
    pub fn hessian_green(&self, w: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let mut d = vec![0.0; self.grid.len()];
        ops::div_edge(n, w, &mut d);
        self.green(&mut d);
        ops::grad_node(n, &d, out);
    }

    /// In place `w <- w + grad(G * div w)`, the orthogonal projection onto
    /// discretely divergence-free edge fields.
    pub fn leray(&self, w: &mut [f64]) {
        let mut g = vec![0.0; w.len()];
        self.hessian_green(w, &mut g);
        for (a, b) in w.iter_mut().zip(&g) {
            *a += b;
        }
    }

    /// Apply `f(lambda)` to each of the three components of an edge field.
    pub fn apply_vector(&self, w: &mut [f64], f: impl Fn(f64) -> f64 + Copy) {
        let m = self.grid.len();
        let (a, rest) = w.split_at_mut(m);
        let (b, c) = rest.split_at_mut(m);
        self.apply_pair(a, Some(b), f);
        self.apply_pair(c, None, f);
    }
}

/// Periodic convolution with the discrete Green function of `-Delta_h`.
pub fn green_convolve(f: &ScalarField) -> Result<ScalarField> {
    let sp = Spectral::new(f.grid);
    let mut out = f.clone();
    sp.green(&mut out.data);
    Ok(out)
}

/// `grad(G * div w)` for an edge field `w`.
pub fn hessian_green_apply(w: &VectorField) -> Result<VectorField> {
    if w.loc != VectorLoc::Edges {
        return Err(Error::Layout("hessian_green_apply acts on edge fields".into()));
    }
    let sp = Spectral::new(w.grid);
    let mut out = VectorField::zeros(w.grid, VectorLoc::Edges);
    sp.hessian_green(&w.data, &mut out.data);
    Ok(out)
}

/// `w + grad(G * div w)`.
pub fn leray_project(w: &VectorField) -> Result<VectorField> {
    let mut out = hessian_green_apply(w)?;
    for (a, b) in out.data.iter_mut().zip(&w.data) {
        *a += b;
    }
    Ok(out)
}
