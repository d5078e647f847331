//! Unit-cell corrector problem for `A^hom`, the dual stiff-inclusion problem
//! and the rotation-symmetry checks on 3x3 tensors.

use crate::error::{Error, Result};
use crate::geometry::{build_indicator, IndicatorField, MaterialCell, Rotation};
use crate::grid::{ops, Grid, ScalarField, ScalarLoc, Spectral, VectorField, VectorLoc};
use crate::linalg::{cg, random_vec, remove_block_means, CgInfo};
use crate::mat3::{self, M3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct CellOptions {
    pub tol: f64,
    /// Defaults to `10 n^3`.
    pub max_iter: Option<usize>,
    /// Random initial guess for the corrector CG (gauge tests).
    pub init_seed: Option<u64>,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions { tol: 1e-10, max_iter: None, init_seed: None }
    }
}

/// Precomputed weights shared by the corrector and stiff solves.
#[derive(Debug, Clone)]
pub struct CellDiscretisation {
    pub grid: Grid,
    pub indicator: IndicatorField,
    /// `chi1 eps1^{-1}` on faces; interface faces carry the mean of the two
    /// adjacent cells.
    pub face_weight: Vec<f64>,
    /// Divergence penalty `gamma = mean(eps1^{-1})`.
    pub gamma: f64,
    /// `eps1` on edges not joining two slaved nodes, zero otherwise.
    pub edge_weight: Vec<f64>,
    /// Nodes touching an inclusion cell; their values are slaved to `-xi . y`.
    pub slaved: Vec<bool>,
    spectral: Spectral,
}

impl CellDiscretisation {
    pub fn new(cell: &MaterialCell) -> Result<Self> {
        let indicator = build_indicator(cell)?;
        let grid = cell.grid();
        let m = grid.len();
        let theta = indicator.matrix_fraction(cell.smoothing);
        let mut face_weight = vec![0.0; 3 * m];
        for c in 0..3 {
            for idx in 0..m {
                let [a, b] = grid.face_cells(c, idx);
                let frac = 0.5 * (theta[a] + theta[b]);
                if frac > 0.0 {
                    face_weight[c * m + idx] = frac * cell.inv_eps1(grid.face_pos(c, idx));
                }
            }
        }
        let gamma = (0..m).map(|i| cell.inv_eps1(grid.cell_pos(i))).sum::<f64>() / m as f64;
        let slaved: Vec<bool> = (0..m).map(|i| grid.node_cells(i).iter().any(|&c| indicator.chi0[c])).collect();
        let mut edge_weight = vec![0.0; 3 * m];
        for c in 0..3 {
            for idx in 0..m {
                if !(slaved[idx] && slaved[grid.edge_end(c, idx)]) {
                    edge_weight[c * m + idx] = cell.eps1.sample(grid.edge_pos(c, idx));
                }
            }
        }
        Ok(CellDiscretisation { grid, indicator, face_weight, gamma, edge_weight, slaved, spectral: Spectral::new(grid) })
    }

    /// `curl_face(W curl_edge u) - gamma grad div u`.
    fn corrector_op(&self, u: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let mut tmp = vec![0.0; u.len()];
        ops::curl_w_curl(n, &self.face_weight, u, &mut tmp, out);
        let mut d = vec![0.0; self.grid.len()];
        ops::div_edge(n, u, &mut d);
        ops::grad_node(n, &d, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o -= self.gamma * t;
        }
    }

    fn corrector_precond(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        remove_block_means(z, 3);
        let wbar = self.face_weight.iter().sum::<f64>() / self.face_weight.len() as f64;
        let s = 0.5 * (wbar + self.gamma);
        self.spectral.apply_vector(z, |l| if l == 0.0 { 0.0 } else { 1.0 / (s * l) });
    }

    fn objective_and_flux(&self, u: &[f64], xi: [f64; 3]) -> (f64, [f64; 3], Vec<f64>) {
        let m = self.grid.len();
        let mut f = vec![0.0; 3 * m];
        ops::curl_edge(self.grid.n, u, &mut f);
        for c in 0..3 {
            for v in &mut f[c * m..(c + 1) * m] {
                *v += xi[c];
            }
        }
        let vol = self.grid.vol();
        let mut obj = 0.0;
        let mut flux = [0.0; 3];
        for c in 0..3 {
            for idx in 0..m {
                let w = self.face_weight[c * m + idx];
                let v = f[c * m + idx];
                obj += w * v * v;
                flux[c] += w * v;
            }
        }
        (obj * vol, flux.map(|x| x * vol), f)
    }
}

/// Minimiser of the discrete `F_xi` for one direction.
#[derive(Debug, Clone)]
pub struct Corrector {
    pub xi: [f64; 3],
    pub field: VectorField,
    /// `curl N + xi` on faces.
    pub total_curl: VectorField,
    /// `F_xi(N)`.
    pub objective: f64,
    /// `int_Q1 eps1^{-1} (curl N + xi)`.
    pub flux: [f64; 3],
    pub info: CgInfo,
    pub gauge_penalty: f64,
}

pub fn solve_corrector_with(disc: &CellDiscretisation, xi: [f64; 3], opts: &CellOptions) -> Result<Corrector> {
    let g = disc.grid;
    let m = g.len();
    let n = g.n;
    let w_xi: Vec<f64> = (0..3 * m).map(|i| disc.face_weight[i] * xi[i / m]).collect();
    let mut rhs = vec![0.0; 3 * m];
    ops::curl_face(n, &w_xi, &mut rhs);
    for v in rhs.iter_mut() {
        *v = -*v;
    }
    let mut x = match opts.init_seed {
        Some(s) => random_vec(3 * m, &mut ChaCha8Rng::seed_from_u64(s)),
        None => vec![0.0; 3 * m],
    };
    remove_block_means(&mut x, 3);
    let max_iter = opts.max_iter.unwrap_or(10 * m);
    let op = |u: &[f64], out: &mut [f64]| disc.corrector_op(u, out);
    let pc = |r: &[f64], z: &mut [f64]| disc.corrector_precond(r, z);
    let info = if rhs.iter().all(|&v| v == 0.0) && opts.init_seed.is_none() {
        CgInfo { iterations: 0, rel_residual: 0.0, converged: true }
    } else {
        cg(&op, Some(&pc), &rhs, &mut x, opts.tol, max_iter)
    };
    if !info.converged {
        return Err(Error::NotConverged(format!(
            "corrector CG for xi = {xi:?}: relative residual {:e} after {} iterations",
            info.rel_residual, info.iterations
        )));
    }
    let (objective, flux, f) = disc.objective_and_flux(&x, xi);
    Ok(Corrector {
        xi,
        field: VectorField { grid: g, loc: VectorLoc::Edges, data: x },
        total_curl: VectorField { grid: g, loc: VectorLoc::Faces, data: f },
        objective,
        flux,
        info,
        gauge_penalty: disc.gamma,
    })
}

/// Solve the corrector problem for one direction `xi`.
pub fn solve_corrector(cell: &MaterialCell, xi: [f64; 3], opts: &CellOptions) -> Result<Corrector> {
    let disc = CellDiscretisation::new(cell)?;
    solve_corrector_with(&disc, xi, opts)
}

/// Minimiser of the discrete stiff-inclusion problem for one direction.
#[derive(Debug, Clone)]
pub struct StiffSolution {
    pub xi: [f64; 3],
    /// `u` on nodes, including the slaved values `-xi . y`.
    pub field: ScalarField,
    /// `grad u + xi` on edges.
    pub total_grad: VectorField,
    pub value: f64,
    pub info: CgInfo,
}

pub fn solve_stiff_scalar_with(disc: &CellDiscretisation, xi: [f64; 3], opts: &CellOptions) -> Result<StiffSolution> {
    let g = disc.grid;
    let m = g.len();
    let n = g.n;
    let free: Vec<f64> = disc.slaved.iter().map(|&s| if s { 0.0 } else { 1.0 }).collect();
    let mut u_s = vec![0.0; m];
    for i in 0..m {
        if disc.slaved[i] {
            let y = g.node_pos(i);
            u_s[i] = -(xi[0] * y[0] + xi[1] * y[1] + xi[2] * y[2]);
        }
    }
    let mut g0 = vec![0.0; 3 * m];
    ops::grad_node(n, &u_s, &mut g0);
    for (i, v) in g0.iter_mut().enumerate() {
        *v = (*v + xi[i / m]) * disc.edge_weight[i];
    }
    let mut rhs = vec![0.0; m];
    ops::div_edge(n, &g0, &mut rhs);
    for (r, f) in rhs.iter_mut().zip(&free) {
        *r *= f;
    }
    let op = |u: &[f64], out: &mut [f64]| {
        let mut um: Vec<f64> = u.iter().zip(&free).map(|(a, b)| a * b).collect();
        let mut t = vec![0.0; 3 * m];
        ops::grad_node(n, &um, &mut t);
        for (ti, w) in t.iter_mut().zip(&disc.edge_weight) {
            *ti *= w;
        }
        ops::div_edge(n, &t, &mut um);
        for ((o, v), f) in out.iter_mut().zip(&um).zip(&free) {
            *o = -v * f;
        }
    };
    let wbar = disc.edge_weight.iter().sum::<f64>() / (3 * m) as f64;
    let lmin = disc.spectral.lambda_min();
    let pc = |r: &[f64], z: &mut [f64]| {
        for ((zi, ri), f) in z.iter_mut().zip(r).zip(&free) {
            *zi = ri * f;
        }
        disc.spectral.apply_pair(z, None, |l| 1.0 / (wbar * l.max(lmin)));
        for (zi, f) in z.iter_mut().zip(&free) {
            *zi *= f;
        }
    };
    let mut x = vec![0.0; m];
    let max_iter = opts.max_iter.unwrap_or(10 * m);
    let info = if rhs.iter().all(|&v| v == 0.0) {
        CgInfo { iterations: 0, rel_residual: 0.0, converged: true }
    } else {
        cg(&op, Some(&pc), &rhs, &mut x, opts.tol, max_iter)
    };
    if !info.converged {
        return Err(Error::NotConverged(format!(
            "stiff CG for xi = {xi:?}: relative residual {:e} after {} iterations",
            info.rel_residual, info.iterations
        )));
    }
    let u: Vec<f64> = (0..m).map(|i| x[i] * free[i] + u_s[i]).collect();
    let mut tg = vec![0.0; 3 * m];
    ops::grad_node(n, &u, &mut tg);
    for (i, v) in tg.iter_mut().enumerate() {
        *v += xi[i / m];
    }
    let value = tg.iter().zip(&disc.edge_weight).map(|(t, w)| w * t * t).sum::<f64>() * g.vol();
    Ok(StiffSolution {
        xi,
        field: ScalarField { grid: g, loc: ScalarLoc::Nodes, data: u },
        total_grad: VectorField { grid: g, loc: VectorLoc::Edges, data: tg },
        value,
        info,
    })
}

/// Solve the stiff-inclusion scalar problem for one direction `xi`.
pub fn solve_stiff_scalar(cell: &MaterialCell, xi: [f64; 3], opts: &CellOptions) -> Result<StiffSolution> {
    let disc = CellDiscretisation::new(cell)?;
    solve_stiff_scalar_with(&disc, xi, opts)
}

/// `A^hom`, optionally with its stiff-inclusion dual.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveTensor {
    /// Symmetrised `A^hom`.
    pub a: M3,
    /// `|A - A^T|_F` before symmetrisation.
    pub asymmetry: f64,
    /// `F_{e_j}(N_{e_j})`, to be compared with the diagonal of `a`.
    pub objectives: [f64; 3],
    pub a_iterations: [usize; 3],
    pub a_residuals: [f64; 3],
    pub stiff: Option<M3>,
    pub stiff_iterations: Option<[usize; 3]>,
    /// `|A stiff - I|_F`.
    pub product_residual: Option<f64>,
}

const E: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Correctors for `e_1, e_2, e_3` (solved concurrently).
pub fn correctors(disc: &CellDiscretisation, opts: &CellOptions) -> Result<Vec<Corrector>> {
    E.par_iter().map(|&xi| solve_corrector_with(disc, xi, opts)).collect()
}

fn tensor_from_correctors(cs: &[Corrector]) -> EffectiveTensor {
    let mut a = [[0.0; 3]; 3];
    for (j, c) in cs.iter().enumerate() {
        for i in 0..3 {
            a[i][j] = c.flux[i];
        }
    }
    let (a, asymmetry) = mat3::symmetrise(&a);
    EffectiveTensor {
        a,
        asymmetry,
        objectives: [0, 1, 2].map(|j| cs[j].objective),
        a_iterations: [0, 1, 2].map(|j| cs[j].info.iterations),
        a_residuals: [0, 1, 2].map(|j| cs[j].info.rel_residual),
        stiff: None,
        stiff_iterations: None,
        product_residual: None,
    }
}

/// Assemble `A^hom` from the three corrector solves.
pub fn assemble_a_hom(cell: &MaterialCell, opts: &CellOptions) -> Result<EffectiveTensor> {
    let disc = CellDiscretisation::new(cell)?;
    let cs = correctors(&disc, opts)?;
    check_tensor(tensor_from_correctors(&cs))
}

fn check_tensor(t: EffectiveTensor) -> Result<EffectiveTensor> {
    let norm = mat3::frob(&t.a);
    if t.asymmetry > 1e-6 * norm {
        return Err(Error::Asymmetric(t.asymmetry / norm));
    }
    Ok(t)
}

/// `A^hom`, `eps^hom_stiff` and the duality residual `|A stiff - I|_F`.
pub fn effective_tensor(cell: &MaterialCell, opts: &CellOptions) -> Result<EffectiveTensor> {
    let disc = CellDiscretisation::new(cell)?;
    let (cs, ss) = rayon::join(
        || correctors(&disc, opts),
        || E.par_iter().map(|&xi| solve_stiff_scalar_with(&disc, xi, opts)).collect::<Result<Vec<_>>>(),
    );
    let mut t = check_tensor(tensor_from_correctors(&cs?))?;
    let ss = ss?;
    let m = disc.grid.len();
    let mut stiff = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            stiff[i][j] = (0..3 * m)
                .map(|e| disc.edge_weight[e] * ss[i].total_grad.data[e] * ss[j].total_grad.data[e])
                .sum::<f64>()
                * disc.grid.vol();
        }
    }
    let (stiff, _) = mat3::symmetrise(&stiff);
    t.product_residual = Some(mat3::frob(&mat3::sub(&mat3::mul(&t.a, &stiff), &mat3::identity())));
    t.stiff = Some(stiff);
    t.stiff_iterations = Some([0, 1, 2].map(|j| ss[j].info.iterations));
    Ok(t)
}

/// One row of a symmetry report.
#[derive(Debug, Clone, Serialize)]
pub struct SymmetryCheck {
    pub tag: String,
    /// `|M - sigma^T M sigma|_F / |M|_F`.
    pub conjugation_error: f64,
    /// Largest off-pattern entry (or diagonal mismatch) relative to `|M|_F`.
    pub pattern_error: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    pub checks: Vec<SymmetryCheck>,
    pub ok: bool,
}

/// Verify the zero/equality pattern implied by each declared rotation: a
/// half turn about `x_k` kills the off-diagonal entries of row and column
/// `k`; a quarter turn also equates the two transverse diagonal entries.
pub fn check_symmetry(m: &M3, tags: &[Rotation], tol: f64) -> SymmetryReport {
    let norm = mat3::frob(m).max(f64::MIN_POSITIVE);
    let mn = mat3::to_na(m);
    let checks: Vec<SymmetryCheck> = tags
        .iter()
        .map(|rot| {
            let s = mat3::to_na(&rot.matrix());
            let conj = s.transpose() * mn * s;
            let conjugation_error = (conj - mn).norm() / norm;
            let k = rot.axis;
            let (a, b) = ((k + 1) % 3, (k + 2) % 3);
            let mut pattern: f64 = [m[k][a], m[k][b], m[a][k], m[b][k]].iter().fold(0.0, |x, y| x.max(y.abs()));
            if rot.quarter_turns % 2 == 1 {
                pattern = pattern.max((m[a][a] - m[b][b]).abs()).max(m[a][b].abs()).max(m[b][a].abs());
            }
            let pattern_error = pattern / norm;
            SymmetryCheck {
                tag: rot.to_string(),
                conjugation_error,
                pattern_error,
                ok: conjugation_error <= tol && pattern_error <= tol,
            }
        })
        .collect();
    let ok = checks.iter().all(|c| c.ok);
    SymmetryReport { checks, ok }
}
