use super::dense::{combine, gram, sym_eig};
use super::{axpy, dot, norm, random_vec};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Op<'a> = &'a dyn Fn(&[f64], &mut [f64]);

/// Pencil `A x = lambda B x` restricted to the range of an orthogonal
/// projector. `B = None` means the identity.
pub struct EigProblem<'a> {
    pub dim: usize,
    pub a: Op<'a>,
    pub b: Option<Op<'a>>,
    pub project: Option<&'a dyn Fn(&mut [f64])>,
    pub precond: Option<Op<'a>>,
}

#[derive(Debug, Clone)]
pub struct EigOptions {
    /// Number of wanted (smallest) eigenpairs.
    pub nev: usize,
    /// Block size, at least `nev`.
    pub block: usize,
    /// Relative residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct EigResult {
    pub values: Vec<f64>,
    /// `B`-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl EigProblem<'_> {
    fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        match self.b {
            Some(b) => b(x, y),
            None => y.copy_from_slice(x),
        }
    }

    fn images(&self, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut ax = Vec::with_capacity(xs.len());
        let mut bx = Vec::with_capacity(xs.len());
        for x in xs {
            let mut y = vec![0.0; self.dim];
            (self.a)(x, &mut y);
            ax.push(y);
            let mut y = vec![0.0; self.dim];
            self.apply_b(x, &mut y);
            bx.push(y);
        }
        (ax, bx)
    }

    fn proj(&self, x: &mut [f64]) {
        if let Some(p) = self.project {
            p(x);
        }
    }
}

/// `B`-orthonormalise `v` (with images `bv`) by eigendecomposition of the
/// Gram matrix, dropping numerically dependent directions.
fn svqb(v: &[Vec<f64>], bv: &[Vec<f64>]) -> DMatrix<f64> {
    let g = gram(v, bv);
    let k = g.nrows();
    let d: Vec<f64> = (0..k).map(|i| g[(i, i)].max(f64::MIN_POSITIVE).sqrt().recip()).collect();
    let gs = DMatrix::from_fn(k, k, |i, j| g[(i, j)] * d[i] * d[j]);
    let (vals, vecs) = sym_eig(gs);
    let vmax = vals.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..k).filter(|&i| vals[i] > 1e-12 * vmax).collect();
    DMatrix::from_fn(k, keep.len(), |i, j| d[i] * vecs[(i, keep[j])] / vals[keep[j]].sqrt())
}

/// Locally optimal block preconditioned conjugate gradients for the
/// smallest eigenpairs of a symmetric pencil.
pub fn lobpcg(prob: &EigProblem, opts: &EigOptions, x0: Option<Vec<Vec<f64>>>) -> Result<EigResult> {
    let bs = opts.block.max(opts.nev);
    if bs == 0 || bs > prob.dim {
        return Err(Error::Solver(format!("block size {bs} incompatible with dimension {}", prob.dim)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = x0.unwrap_or_default();
    x.truncate(bs);
    while x.len() < bs {
        x.push(random_vec(prob.dim, &mut rng));
    }
    for xi in x.iter_mut() {
        prob.proj(xi);
    }
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut ap: Vec<Vec<f64>> = Vec::new();
    let mut bp: Vec<Vec<f64>> = Vec::new();
    let mut residuals = vec![f64::INFINITY; bs];
    let mut values = vec![0.0; bs];

    for iter in 0..=opts.max_iter {
        // B-orthonormalise X and do Rayleigh-Ritz on span(X).
        let (_, bx) = prob.images(&x);
        let z = svqb(&x, &bx);
        if z.ncols() < bs {
            // lost rank: refill with random directions
            x = combine(&x, &z);
            while x.len() < bs {
                let mut r = random_vec(prob.dim, &mut rng);
                prob.proj(&mut r);
                x.push(r);
            }
            continue;
        }
        x = combine(&x, &z);
        let (ax, _) = prob.images(&x);
        let h = gram(&x, &ax);
        let (vals, y) = sym_eig(h);
        x = combine(&x, &y);
        let (ax, bx) = prob.images(&x);
        values.copy_from_slice(&vals[..bs]);

        let mut r: Vec<Vec<f64>> = Vec::with_capacity(bs);
        let mut active = Vec::new();
        for i in 0..bs {
            let mut ri = ax[i].clone();
            axpy(-values[i], &bx[i], &mut ri);
            prob.proj(&mut ri);
            let scale = norm(&ax[i]) + values[i].abs() * norm(&bx[i]);
            residuals[i] = norm(&ri) / scale.max(f64::MIN_POSITIVE);
            if residuals[i] > opts.tol {
                active.push(i);
            }
            r.push(ri);
        }
        if residuals[..opts.nev].iter().all(|&res| res <= opts.tol) {
            return Ok(EigResult {
                values: values[..opts.nev].to_vec(),
                vectors: x[..opts.nev].to_vec(),
                residuals: residuals[..opts.nev].to_vec(),
                iterations: iter,
            });
        }
        if iter == opts.max_iter {
            break;
        }

        // preconditioned residuals of the active columns
        let mut w: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| {
                let mut wi = vec![0.0; prob.dim];
                match prob.precond {
                    Some(t) => t(&r[i], &mut wi),
                    None => wi.copy_from_slice(&r[i]),
                }
                prob.proj(&mut wi);
                wi
            })
            .collect();
        // B-orthogonalise W and P against X (twice for stability)
        for _ in 0..2 {
            for wi in w.iter_mut() {
                for (xj, bxj) in x.iter().zip(&bx) {
                    let c = dot(bxj, wi);
                    axpy(-c, xj, wi);
                }
            }
            for k in 0..p.len() {
                for j in 0..bs {
                    let c = dot(&bx[j], &p[k]);
                    axpy(-c, &x[j], &mut p[k]);
                    axpy(-c, &ax[j], &mut ap[k]);
                    axpy(-c, &bx[j], &mut bp[k]);
                }
            }
        }
        let mut q: Vec<Vec<f64>> = w;
        q.append(&mut p);
        let (mut aq, mut bq) = prob.images(&q);
        for _ in 0..2 {
            let z = svqb(&q, &bq);
            q = combine(&q, &z);
            let imgs = prob.images(&q);
            aq = imgs.0;
            bq = imgs.1;
        }
        // Rayleigh-Ritz on [X, Q]
        let nq = q.len();
        let mut s = x.clone();
        s.extend(q.iter().cloned());
        let mut as_ = ax.clone();
        as_.extend(aq.iter().cloned());
        let h = gram(&s, &as_);
        let (_, y) = sym_eig(h);
        let ysel = y.columns(0, bs).into_owned();
        let yq = ysel.rows(bs, nq).into_owned();
        x = combine(&s, &ysel);
        p = combine(&q, &yq);
        ap = combine(&aq, &yq);
        bp = combine(&bq, &yq);
    }
    Err(Error::NotConverged(format!(
        "lobpcg: {} iterations, worst residual {:e}",
        opts.max_iter,
        residuals[..opts.nev].iter().cloned().fold(0.0, f64::max)
    )))
}
