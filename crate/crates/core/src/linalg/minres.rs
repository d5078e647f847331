use super::{dot, norm, CgInfo};

/// Preconditioned MINRES for symmetric, possibly indefinite systems. The
/// preconditioner must be symmetric positive definite. `x` holds the
/// initial guess on entry; the returned residual is the true one.
pub fn minres(
    a: &dyn Fn(&[f64], &mut [f64]),
    precond: Option<&dyn Fn(&[f64], &mut [f64])>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgInfo {
    let len = b.len();
    let apply_m = |r: &[f64], z: &mut [f64]| match precond {
        Some(m) => m(r, z),
        None => z.copy_from_slice(r),
    };
    let nb = norm(b).max(f64::MIN_POSITIVE);
    let mut r1 = vec![0.0; len];
    a(x, &mut r1);
    for (ri, bi) in r1.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut y = vec![0.0; len];
    apply_m(&r1, &mut y);
    let beta1 = dot(&r1, &y).max(0.0).sqrt();
    let mut it = 0;
    if beta1 > 0.0 {
        let mut r2 = r1.clone();
        let (mut oldb, mut beta) = (0.0f64, beta1);
        let (mut dbar, mut epsln, mut phibar) = (0.0f64, 0.0f64, beta1);
        let (mut cs, mut sn) = (-1.0f64, 0.0f64);
        let mut w = vec![0.0; len];
        let mut w2 = vec![0.0; len];
        let mut v = vec![0.0; len];
        while it < max_iter {
            it += 1;
            let s = 1.0 / beta;
            for (vi, yi) in v.iter_mut().zip(&y) {
                *vi = s * yi;
            }
            a(&v, &mut y);
            if it >= 2 {
                let f = beta / oldb;
                for (yi, ri) in y.iter_mut().zip(&r1) {
                    *yi -= f * ri;
                }
            }
            let alfa = dot(&v, &y);
            let f = alfa / beta;
            for (yi, ri) in y.iter_mut().zip(&r2) {
                *yi -= f * ri;
            }
            std::mem::swap(&mut r1, &mut r2);
            r2.copy_from_slice(&y);
            apply_m(&r2, &mut y);
            oldb = beta;
            beta = dot(&r2, &y).max(0.0).sqrt();
            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;
            let denom = 1.0 / gamma;
            for i in 0..len {
                let w1 = w2[i];
                w2[i] = w[i];
                w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
                x[i] += phi * w[i];
            }
            if phibar <= tol * beta1 * 0.1 || beta == 0.0 {
                break;
            }
        }
    }
    a(x, &mut r1);
    for (ri, bi) in r1.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let rel = norm(&r1) / nb;
    CgInfo { iterations: it, rel_residual: rel, converged: rel <= tol }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_indefinite_diagonal_system() {
        let d: Vec<f64> = (0..40).map(|i| i as f64 - 12.5).collect();
        let op = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = d[i] * x[i];
            }
        };
        let b = vec![1.0; 40];
        let mut x = vec![0.0; 40];
        let info = minres(&op, None, &b, &mut x, 1e-12, 200);
        assert!(info.converged, "{info:?}");
        for i in 0..40 {
            assert!((x[i] - 1.0 / d[i]).abs() < 1e-9);
        }
    }
}
