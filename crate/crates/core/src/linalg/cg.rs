use super::{axpy, dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CgInfo {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi)definite operator. `x` holds the initial guess on entry. The
/// iteration stops when `|b - A x| <= tol |b|` or after `max_iter` steps.
pub fn cg(
    a: &dyn Fn(&[f64], &mut [f64]),
    precond: Option<&dyn Fn(&[f64], &mut [f64])>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgInfo {
    let nb = norm(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; b.len()];
    a(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; b.len()];
    let apply_m = |r: &[f64], z: &mut [f64]| match precond {
        Some(m) => m(r, z),
        None => z.copy_from_slice(r),
    };
    apply_m(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; b.len()];
    let mut rel = norm(&r) / nb;
    let mut it = 0;
    while rel > tol && it < max_iter {
        a(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        it += 1;
        rel = norm(&r) / nb;
        if rel <= tol {
            break;
        }
        // refresh the recursive residual now and then
        if it % 200 == 0 {
            a(x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
        }
        apply_m(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    // report the true residual
    a(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let rel = norm(&r) / nb;
    CgInfo { iterations: it, rel_residual: rel, converged: rel <= tol * 10.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        // tridiagonal 1-D Laplacian plus identity
        let n = 50;
        let op = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 3.0 * x[i] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let info = cg(&op, None, &b, &mut x, 1e-12, 500);
        assert!(info.converged);
        let mut ax = vec![0.0; n];
        op(&x, &mut ax);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }
}
