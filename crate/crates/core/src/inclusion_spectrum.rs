//! Resonances of the non-local curl-curl problem on the inclusion.
//!
//! Unknowns are edge values on edges whose four neighbouring cells all lie in
//! `Q0`. The pencil is `A = C^T W0 C` against `B = P` (the Leray projection),
//! both restricted to those edges. Gradients of node functions supported on
//! nodes strictly inside `Q0` lie in both kernels and are projected out.

use crate::error::{Error, Result};
use crate::geometry::{build_indicator, MaterialCell};
use crate::grid::{ops, Grid, Spectral, VectorField, VectorLoc};
use crate::linalg::dense::{generalized_sym_eig, operator_matrix, sym_eig};
use crate::linalg::{cg, dot, lobpcg, norm, EigOptions, EigProblem};
use nalgebra::{DMatrix, Matrix3xX};
use serde::Serialize;
use std::path::Path;

/// Restricted operators of the inclusion problem.
#[derive(Debug, Clone)]
pub struct InclusionOperators {
    pub grid: Grid,
    /// Global edge indices (`c * n^3 + idx`) of the degrees of freedom.
    pub dof: Vec<usize>,
    /// Nodes whose eight cells are all in `Q0`.
    pub interior: Vec<usize>,
    /// `eps0^{-1}` on faces between two inclusion cells, zero elsewhere.
    pub face_weight: Vec<f64>,
    /// Penalty used to make `A + gamma Gr Gr^T` definite.
    pub gamma: f64,
    spectral: Spectral,
}

impl InclusionOperators {
    pub fn new(cell: &MaterialCell) -> Result<Self> {
        let ind = build_indicator(cell)?;
        if ind.count() == 0 {
            return Err(Error::Geometry("inclusion is empty".into()));
        }
        let grid = cell.grid();
        let m = grid.len();
        let mut dof = Vec::new();
        let mut face_weight = vec![0.0; 3 * m];
        for c in 0..3 {
            for idx in 0..m {
                if grid.edge_cells(c, idx).iter().all(|&k| ind.chi0[k]) {
                    dof.push(c * m + idx);
                }
                let [a, b] = grid.face_cells(c, idx);
                if ind.chi0[a] && ind.chi0[b] {
                    face_weight[c * m + idx] = cell.inv_eps0(grid.face_pos(c, idx));
                }
            }
        }
        if dof.is_empty() {
            return Err(Error::Geometry("inclusion has no interior edges at this resolution".into()));
        }
        let interior: Vec<usize> = (0..m).filter(|&i| grid.node_cells(i).iter().all(|&k| ind.chi0[k])).collect();
        let nz: Vec<f64> = face_weight.iter().copied().filter(|&w| w > 0.0).collect();
        let gamma = nz.iter().sum::<f64>() / nz.len().max(1) as f64;
        Ok(InclusionOperators { grid, dof, interior, face_weight, gamma, spectral: Spectral::new(grid) })
    }

    pub fn dim(&self) -> usize {
        self.dof.len()
    }

    /// Dimension of the complement of the gradient subspace.
    pub fn complement_dim(&self) -> usize {
        self.dof.len() - self.interior.len()
    }

    /// Zero-extend a restricted vector to a full edge field.
    pub fn extend(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; 3 * self.grid.len()];
        for (&g, &v) in self.dof.iter().zip(x) {
            full[g] = v;
        }
        full
    }

    pub fn restrict(&self, full: &[f64], out: &mut [f64]) {
        for (o, &g) in out.iter_mut().zip(&self.dof) {
            *o = full[g];
        }
    }

    pub fn apply_a(&self, x: &[f64], y: &mut [f64]) {
        let full = self.extend(x);
        let mut tmp = vec![0.0; full.len()];
        let mut out = vec![0.0; full.len()];
        ops::curl_w_curl(self.grid.n, &self.face_weight, &full, &mut tmp, &mut out);
        self.restrict(&out, y);
    }

    pub fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        let mut full = self.extend(x);
        self.spectral.leray(&mut full);
        self.restrict(&full, y);
    }

    /// `Gr q`: gradient of an interior-node function.
    pub fn grad_interior(&self, q: &[f64], y: &mut [f64]) {
        let mut p = vec![0.0; self.grid.len()];
        for (&i, &v) in self.interior.iter().zip(q) {
            p[i] = v;
        }
        let mut full = vec![0.0; 3 * self.grid.len()];
        ops::grad_node(self.grid.n, &p, &mut full);
        self.restrict(&full, y);
    }

    /// `Gr^T x`.
    pub fn grad_interior_t(&self, x: &[f64], q: &mut [f64]) {
        let full = self.extend(x);
        let mut d = vec![0.0; self.grid.len()];
        ops::div_edge(self.grid.n, &full, &mut d);
        for (o, &i) in q.iter_mut().zip(&self.interior) {
            *o = -d[i];
        }
    }

    /// Euclidean projection onto the orthogonal complement of `range Gr`.
    pub fn project(&self, x: &mut [f64]) {
        if self.interior.is_empty() {
            return;
        }
        let ni = self.interior.len();
        let mut rhs = vec![0.0; ni];
        self.grad_interior_t(x, &mut rhs);
        if norm(&rhs) == 0.0 {
            return;
        }
        let lap = |q: &[f64], out: &mut [f64]| {
            let mut t = vec![0.0; self.dim()];
            self.grad_interior(q, &mut t);
            self.grad_interior_t(&t, out);
        };
        let mut q = vec![0.0; ni];
        cg(&lap, None, &rhs, &mut q, 1e-14, 20 * ni + 100);
        let mut t = vec![0.0; self.dim()];
        self.grad_interior(&q, &mut t);
        for (a, b) in x.iter_mut().zip(&t) {
            *a -= b;
        }
    }

    /// `A + gamma Gr Gr^T`, definite on the whole restricted space.
    pub fn apply_a_penalised(&self, x: &[f64], y: &mut [f64]) {
        self.apply_a(x, y);
        let mut q = vec![0.0; self.interior.len()];
        self.grad_interior_t(x, &mut q);
        let mut t = vec![0.0; self.dim()];
        self.grad_interior(&q, &mut t);
        for (a, b) in y.iter_mut().zip(&t) {
            *a += self.gamma * b;
        }
    }

    /// `B + gamma Gr Gr^T`, scaled so that both terms are comparable.
    pub fn apply_b_penalised(&self, x: &[f64], y: &mut [f64]) {
        self.apply_b(x, y);
        let h2 = self.grid.h().powi(2);
        let mut q = vec![0.0; self.interior.len()];
        self.grad_interior_t(x, &mut q);
        let mut t = vec![0.0; self.dim()];
        self.grad_interior(&q, &mut t);
        for (a, b) in y.iter_mut().zip(&t) {
            *a += h2 * b;
        }
    }

    /// Orthonormal basis (columns) of the complement of `range Gr`.
    pub fn complement_basis(&self) -> DMatrix<f64> {
        let d = self.dim();
        let ni = self.interior.len();
        let mut gr = DMatrix::zeros(d, ni);
        let mut e = vec![0.0; ni];
        let mut col = vec![0.0; d];
        for j in 0..ni {
            e[j] = 1.0;
            self.grad_interior(&e, &mut col);
            gr.set_column(j, &nalgebra::DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        let (_, vecs) = sym_eig(&gr * gr.transpose());
        vecs.columns(0, d - ni).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Dense below `DENSE_LIMIT` complement dimensions, iterative above.
    Auto,
    Dense,
    Iterative,
}

pub const DENSE_LIMIT: usize = 1200;

/// Extra pairs computed beyond `k`; covers clusters of multiplicity up to
/// `CLUSTER_PAD + 1`.
const CLUSTER_PAD: usize = 4;

#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    /// Requested count; the last degenerate cluster is completed, so up to
    /// `k + 4` modes may be returned.
    pub k: usize,
    pub tol: f64,
    pub method: EigenMethod,
    pub seed: u64,
    /// Absolute threshold on `|b^k|` for zero-mean modes.
    pub zero_mean_tol: f64,
    /// Relative width of a degenerate cluster.
    pub cluster_tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { k: 20, tol: 1e-9, method: EigenMethod::Auto, seed: 0, zero_mean_tol: 1e-8, cluster_tol: 1e-6 }
    }
}

/// Lowest resonances with `B`-orthonormal fields, normalised so that
/// `h^3 phi^T B phi = 1`, i.e. `|r^k|_{L^2} = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct ResonanceSpectrum {
    pub grid: Grid,
    pub alphas: Vec<f64>,
    #[serde(skip)]
    pub phis: Vec<VectorField>,
    pub moments: Vec<[f64; 3]>,
    pub zero_mean_flags: Vec<bool>,
    /// Index groups of numerically equal `alpha`.
    pub degenerate_clusters: Vec<Vec<usize>>,
    /// Relative eigen-residuals `|A phi - alpha B phi| / (|A phi| + alpha |B phi|)`.
    pub residuals: Vec<f64>,
    pub method: EigenMethod,
    pub dof: usize,
    pub complement_dim: usize,
}

impl ResonanceSpectrum {
    /// `r^k = phi^k + grad G div phi^k`.
    pub fn r_field(&self, k: usize) -> VectorField {
        let mut r = self.phis[k].clone();
        Spectral::new(self.grid).leray(&mut r.data);
        r
    }

    /// `sum_k b^k (b^k)^T` over the computed modes.
    pub fn moment_sum(&self) -> [[f64; 3]; 3] {
        let mut s = [[0.0; 3]; 3];
        for b in &self.moments {
            for i in 0..3 {
                for j in 0..3 {
                    s[i][j] += b[i] * b[j];
                }
            }
        }
        s
    }

    /// `phi^k` as little-endian `f64` (edge order, x then y then z
    /// components) and the JSON header describing the layout.
    pub fn field_dump(&self, bin_name: &str) -> (Vec<u8>, serde_json::Value) {
        let mut bytes = Vec::with_capacity(8 * self.phis.len() * 3 * self.grid.len());
        for phi in &self.phis {
            for v in &phi.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = serde_json::json!({
            "file": bin_name,
            "dtype": "f64le",
            "layout": "mode, component (x, y, z), edge index i + n*(j + n*k)",
            "normalisation": "h^3 phi^T B phi = 1",
            "n": self.grid.n,
            "modes": self.phis.len(),
            "values_per_mode": 3 * self.grid.len(),
            "alphas": self.alphas,
        });
        (bytes, header)
    }

    /// Write [`Self::field_dump`] to `stem.bin` and `stem.json`.
    pub fn dump_fields(&self, stem: &Path) -> Result<()> {
        let bin = stem.with_extension("bin");
        let name = bin.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (bytes, header) = self.field_dump(&name);
        std::fs::write(&bin, bytes)?;
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&header).unwrap())?;
        Ok(())
    }
}

/// Explicit matrices of `A` and `B` on the restricted space.
pub fn assemble_operators(ops: &InclusionOperators) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = ops.dim();
    let a = operator_matrix(d, &|x, y| ops.apply_a(x, y));
    let b = operator_matrix(d, &|x, y| ops.apply_b(x, y));
    (a, b)
}

fn dense_pairs(ops: &InclusionOperators, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let z = ops.complement_basis();
    let (a, b) = assemble_operators(ops);
    let ac = z.transpose() * &a * &z;
    let bc = z.transpose() * &b * &z;
    let (vals, y) = generalized_sym_eig(&ac, &bc)?;
    let x = &z * y;
    let vecs = (0..k).map(|j| x.column(j).iter().copied().collect()).collect();
    Ok((vals[..k].to_vec(), vecs))
}

fn iterative_pairs(ops: &InclusionOperators, k: usize, opts: &SpectrumOptions) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = ops.dim();
    let a = |x: &[f64], y: &mut [f64]| ops.apply_a(x, y);
    let b = |x: &[f64], y: &mut [f64]| ops.apply_b(x, y);
    let proj = |x: &mut [f64]| ops.project(x);
    // (A + gamma Gr Gr^T)^{-1} acts as A^{-1} on the complement
    let pen = |x: &[f64], y: &mut [f64]| ops.apply_a_penalised(x, y);
    let pc = |r: &[f64], z: &mut [f64]| {
        z.iter_mut().for_each(|v| *v = 0.0);
        cg(&pen, None, r, z, 1e-3, 400);
    };
    let block = (k + 6.max(k / 2)).min(ops.complement_dim());
    let prob = EigProblem { dim: d, a: &a, b: Some(&b), project: Some(&proj), precond: Some(&pc) };
    let eo = EigOptions { nev: k, block, tol: opts.tol, max_iter: 500, seed: opts.seed };
    let res = lobpcg(&prob, &eo, None)?;
    Ok((res.values, res.vectors))
}

/// Group sorted values whose relative spread is within `tol`.
pub fn clusters(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (v - values[c[0]]).abs() <= tol * v.abs().max(values[c[0]].abs()) => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

pub fn solve_resonances_with(ops: &InclusionOperators, opts: &SpectrumOptions) -> Result<ResonanceSpectrum> {
    if opts.k == 0 {
        return Err(Error::Config("resonance count must be at least 1".into()));
    }
    let cd = ops.complement_dim();
    if opts.k > cd {
        return Err(Error::Solver(format!("requested {} resonances but only {} are available", opts.k, cd)));
    }
    let method = match opts.method {
        EigenMethod::Auto if cd <= DENSE_LIMIT => EigenMethod::Dense,
        EigenMethod::Auto => EigenMethod::Iterative,
        // a block eigensolver cannot resolve the whole space
        EigenMethod::Iterative if 2 * opts.k > cd => EigenMethod::Dense,
        m => m,
    };
    // compute a few extra pairs so that a degenerate cluster straddling
    // index k is returned whole
    let k_eff = (opts.k + CLUSTER_PAD).min(cd);
    let (mut alphas, mut vecs) = match method {
        EigenMethod::Dense => dense_pairs(ops, k_eff)?,
        _ => iterative_pairs(ops, k_eff, opts)?,
    };
    let keep = clusters(&alphas, opts.cluster_tol)
        .into_iter()
        .filter(|c| c[0] < opts.k)
        .map(|c| c[c.len() - 1] + 1)
        .max()
        .unwrap_or(opts.k);
    alphas.truncate(keep);
    vecs.truncate(keep);
    if let Some(&a0) = alphas.first() {
        if a0 <= 0.0 {
            return Err(Error::Solver(format!("non-positive resonance {a0:e} after deflation")));
        }
    }
    let grid = ops.grid;
    let vol = grid.vol();
    let d = ops.dim();
    // normalise h^3 phi^T B phi = 1
    let mut bx = vec![0.0; d];
    for v in vecs.iter_mut() {
        ops.apply_b(v, &mut bx);
        let s = (vol * dot(v, &bx)).sqrt().recip();
        v.iter_mut().for_each(|x| *x *= s);
    }
    let m = grid.len();
    let moment = |v: &[f64]| {
        let mut b = [0.0; 3];
        for (&g, &x) in ops.dof.iter().zip(v) {
            b[g / m] += x;
        }
        b.map(|s| s * vol)
    };
    let groups = clusters(&alphas, opts.cluster_tol);
    // inside each cluster rotate so that moments are mutually orthogonal
    for g in &groups {
        if g.len() < 2 {
            continue;
        }
        let bm = Matrix3xX::from_fn(g.len(), |r, c| moment(&vecs[g[c]])[r]);
        let gram = bm.transpose() * &bm;
        let (_, q) = sym_eig(gram);
        // descending moment energy first
        let cols: Vec<usize> = (0..g.len()).rev().collect();
        let q = DMatrix::from_fn(g.len(), g.len(), |r, c| q[(r, cols[c])]);
        let old: Vec<Vec<f64>> = g.iter().map(|&i| vecs[i].clone()).collect();
        for (c, &i) in g.iter().enumerate() {
            let mut v = vec![0.0; d];
            for (r, o) in old.iter().enumerate() {
                crate::linalg::axpy(q[(r, c)], o, &mut v);
            }
            vecs[i] = v;
        }
    }
    let mut residuals = Vec::with_capacity(vecs.len());
    let mut ax = vec![0.0; d];
    for (v, &al) in vecs.iter().zip(&alphas) {
        ops.apply_a(v, &mut ax);
        ops.apply_b(v, &mut bx);
        let r: Vec<f64> = ax.iter().zip(&bx).map(|(a, b)| a - al * b).collect();
        residuals.push(norm(&r) / (norm(&ax) + al * norm(&bx)).max(f64::MIN_POSITIVE));
    }
    let moments: Vec<[f64; 3]> = vecs.iter().map(|v| moment(v)).collect();
    let zero_mean_flags = moments.iter().map(|b| norm(b) <= opts.zero_mean_tol).collect();
    let phis = vecs
        .iter()
        .map(|v| VectorField { grid, loc: VectorLoc::Edges, data: ops.extend(v) })
        .collect();
    Ok(ResonanceSpectrum {
        grid,
        alphas,
        phis,
        moments,
        zero_mean_flags,
        degenerate_clusters: groups,
        residuals,
        method,
        dof: d,
        complement_dim: cd,
    })
}

/// The `k` lowest inclusion resonances of `cell`.
pub fn solve_resonances(cell: &MaterialCell, k: usize) -> Result<ResonanceSpectrum> {
    let ops = InclusionOperators::new(cell)?;
    solve_resonances_with(&ops, &SpectrumOptions { k, ..Default::default() })
}

/// Indices of modes whose mean `int_Q r^k = int_Q0 phi^k` has norm at most `tol`.
pub fn classify_zero_mean(spec: &ResonanceSpectrum, tol: f64) -> Vec<usize> {
    spec.moments.iter().enumerate().filter(|(_, b)| norm(&b[..]) <= tol).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Permittivity, Shape};
    use crate::linalg::random_vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn boxed(n: usize, half: f64, eps0: f64) -> MaterialCell {
        MaterialCell::new(
            n,
            Shape::Box { center: [0.5; 3], half: [half; 3] },
            Permittivity::Constant(eps0),
            Permittivity::Constant(1.0),
        )
    }

    #[test]
    fn box_counts() {
        let ops = InclusionOperators::new(&boxed(8, 0.25, 1.0)).unwrap();
        assert_eq!(ops.dim(), 108);
        assert_eq!(ops.interior.len(), 27);
        assert_eq!(ops.complement_dim(), 81);
    }

    #[test]
    fn empty_inclusion_is_rejected() {
        let cell = MaterialCell::new(8, Shape::Empty, Permittivity::Constant(1.0), Permittivity::Constant(1.0));
        assert!(matches!(InclusionOperators::new(&cell), Err(Error::Geometry(_))));
    }

    #[test]
    fn gradients_are_in_both_kernels() {
        let ops = InclusionOperators::new(&boxed(16, 0.25, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_vec(ops.interior.len(), &mut rng);
        let mut g = vec![0.0; ops.dim()];
        ops.grad_interior(&q, &mut g);
        let mut y = vec![0.0; ops.dim()];
        ops.apply_a(&g, &mut y);
        assert!(norm(&y) <= 1e-12 * norm(&g) * 4.0 / ops.grid.h().powi(2));
        ops.apply_b(&g, &mut y);
        assert!(norm(&y) <= 1e-12 * norm(&g));
        let mut p = g.clone();
        ops.project(&mut p);
        assert!(norm(&p) <= 1e-10 * norm(&g));
    }

    #[test]
    fn operators_are_symmetric() {
        let ops = InclusionOperators::new(&boxed(16, 0.25, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = ops.dim();
        let (u, v) = (random_vec(d, &mut rng), random_vec(d, &mut rng));
        let (mut au, mut av) = (vec![0.0; d], vec![0.0; d]);
        ops.apply_a(&u, &mut au);
        ops.apply_a(&v, &mut av);
        let s = norm(&au) * norm(&v);
        assert!((dot(&au, &v) - dot(&u, &av)).abs() <= 1e-12 * s);
        ops.apply_b(&u, &mut au);
        ops.apply_b(&v, &mut av);
        let s = norm(&au) * norm(&v);
        assert!((dot(&au, &v) - dot(&u, &av)).abs() <= 1e-12 * s);
    }

    #[test]
    fn iterative_matches_dense() {
        let ops = InclusionOperators::new(&boxed(8, 0.25, 1.0)).unwrap();
        let base = SpectrumOptions { k: 10, ..Default::default() };
        let dense = solve_resonances_with(&ops, &SpectrumOptions { method: EigenMethod::Dense, ..base.clone() }).unwrap();
        let it = solve_resonances_with(&ops, &SpectrumOptions { method: EigenMethod::Iterative, ..base }).unwrap();
        for (a, b) in dense.alphas.iter().zip(&it.alphas) {
            assert!(*a > 0.0);
            assert!((a - b).abs() <= 1e-8 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn fields_are_b_orthonormal_and_deflated() {
        let ops = InclusionOperators::new(&boxed(8, 0.25, 1.0)).unwrap();
        let spec = solve_resonances_with(&ops, &SpectrumOptions { k: 12, ..Default::default() }).unwrap();
        let sp = Spectral::new(ops.grid);
        let rs: Vec<Vec<f64>> = (0..12).map(|k| spec.r_field(k).data).collect();
        let vol = ops.grid.vol();
        for i in 0..12 {
            for j in 0..12 {
                let g = vol * dot(&rs[i], &rs[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8, "gram {i} {j} = {g}");
            }
            let mut d = vec![0.0; ops.grid.len()];
            ops::div_edge(ops.grid.n, &rs[i], &mut d);
            assert!(norm(&d) * ops.grid.h() < 1e-10 * norm(&rs[i]));
            let mut phi = vec![0.0; ops.dim()];
            ops.restrict(&spec.phis[i].data, &mut phi);
            let mut p = phi.clone();
            ops.project(&mut p);
            let diff: Vec<f64> = p.iter().zip(&phi).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) <= 1e-8 * norm(&phi));
            // Rayleigh quotient
            let (mut a, mut b) = (vec![0.0; ops.dim()], vec![0.0; ops.dim()]);
            ops.apply_a(&phi, &mut a);
            ops.apply_b(&phi, &mut b);
            let rq = dot(&a, &phi) / dot(&b, &phi);
            assert!((rq - spec.alphas[i]).abs() <= 1e-10 * spec.alphas[i]);
        }
        let _ = sp;
    }

    #[test]
    fn cubic_box_has_triple_dipole_with_spanning_moments() {
        let spec = solve_resonances(&boxed(8, 0.25, 1.0), 10).unwrap();
        let dip = spec
            .degenerate_clusters
            .iter()
            .find(|c| c.iter().any(|&k| norm(&spec.moments[k]) > 1e-6))
            .unwrap()
            .clone();
        assert_eq!(dip.len(), 3);
        let a = spec.alphas[dip[0]];
        for &k in &dip {
            assert!((spec.alphas[k] - a).abs() <= 1e-6 * a);
        }
        let b = nalgebra::Matrix3::from_fn(|r, c| spec.moments[dip[c]][r]);
        assert!(b.determinant().abs() > 1e-6 * b.norm().powi(3));
        for &k in &dip {
            assert!(!spec.zero_mean_flags[k]);
        }
    }

    #[test]
    fn odd_modes_are_zero_mean() {
        let spec = solve_resonances(&boxed(8, 0.25, 1.0), 10).unwrap();
        let zm = classify_zero_mean(&spec, 1e-8);
        assert!(!zm.is_empty());
        for &k in &zm {
            assert!(spec.zero_mean_flags[k]);
        }
        assert!(zm.len() < spec.alphas.len());
    }

    #[test]
    fn scaling_eps0_scales_alphas() {
        let s1 = solve_resonances(&boxed(8, 0.25, 1.0), 8).unwrap();
        let s3 = solve_resonances(&boxed(8, 0.25, 3.0), 8).unwrap();
        for (a, b) in s1.alphas.iter().zip(&s3.alphas) {
            assert!((a / 3.0 - b).abs() <= 1e-10 * a);
        }
        let e1: f64 = s1.moment_sum().iter().flatten().map(|x| x.abs()).sum();
        let e3: f64 = s3.moment_sum().iter().flatten().map(|x| x.abs()).sum();
        assert!((e1 - e3).abs() <= 1e-8 * e1.max(1e-300));
    }

    #[test]
    fn too_many_modes_is_an_error() {
        let ops = InclusionOperators::new(&boxed(8, 0.25, 1.0)).unwrap();
        let r = solve_resonances_with(&ops, &SpectrumOptions { k: 82, ..Default::default() });
        assert!(matches!(r, Err(Error::Solver(_))));
    }
}
