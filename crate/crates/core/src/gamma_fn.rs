//! The dispersion function `Gamma(omega)`: truncated resonance series, direct
//! resolvent solves, definiteness labels and rotation checks.

use crate::cell_problem::{check_symmetry, SymmetryReport};
use crate::error::{Error, Result};
use crate::geometry::MaterialCell;
use crate::grid::{Spectral, VectorField, VectorLoc};
use crate::inclusion_spectrum::{clusters, InclusionOperators, ResonanceSpectrum};
use crate::linalg::{cg, dense::sym_eig3, dot, minres, CgInfo};
use crate::mat3::{self, M3};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// A resonance with nonzero cluster residue.
#[derive(Debug, Clone, Serialize)]
pub struct Pole {
    pub alpha: f64,
    /// Indices of the modes in the cluster.
    pub modes: Vec<usize>,
    /// `sum b b^T` over the cluster.
    pub weight: M3,
}

impl Pole {
    /// Residue of `Gamma` in `omega^2` at the pole, `alpha^2 sum b b^T`.
    pub fn residue(&self) -> M3 {
        self.weight.map(|r| r.map(|x| x * self.alpha * self.alpha))
    }
}

#[derive(Debug, Clone)]
pub struct GammaEvaluator {
    pub alphas: Vec<f64>,
    pub moments: Vec<[f64; 3]>,
    pub poles: Vec<Pole>,
    /// Indices of zero-mean modes (flat bands, excluded from `poles`).
    pub flat: Vec<usize>,
    /// Absolute guard `|omega^2 - alpha| >= guard` around every pole.
    pub guard: f64,
    /// `sum b b^T` over the whole discrete spectrum, when operators are known.
    pub total_moment: Option<M3>,
    pub spectrum: Option<Arc<ResonanceSpectrum>>,
    ops: Option<Arc<InclusionOperators>>,
}

/// Relative pole guard.
pub const POLE_GUARD: f64 = 1e-6;

fn outer_sum(bs: &[[f64; 3]], idx: &[usize]) -> M3 {
    let mut s = [[0.0; 3]; 3];
    for &k in idx {
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] += bs[k][i] * bs[k][j];
            }
        }
    }
    s
}

impl GammaEvaluator {
    /// Evaluator from bare resonance data; `gamma_direct` is unavailable.
    pub fn from_moments(alphas: Vec<f64>, moments: Vec<[f64; 3]>, zero_mean_tol: f64) -> Result<Self> {
        if alphas.len() != moments.len() {
            return Err(Error::Config("alphas and moments differ in length".into()));
        }
        if alphas.windows(2).any(|w| w[1] < w[0]) || alphas.first().is_some_and(|&a| a <= 0.0) {
            return Err(Error::Config("resonances must be positive and sorted".into()));
        }
        let groups = clusters(&alphas, 1e-6);
        let mut poles = Vec::new();
        let mut flat = Vec::new();
        for g in groups {
            let weight = outer_sum(&moments, &g);
            let zero: Vec<usize> = g.iter().copied().filter(|&k| dot(&moments[k], &moments[k]).sqrt() <= zero_mean_tol).collect();
            flat.extend(&zero);
            if zero.len() < g.len() {
                poles.push(Pole { alpha: alphas[g[0]], modes: g, weight });
            }
        }
        let guard = POLE_GUARD * alphas.first().copied().unwrap_or(1.0);
        Ok(GammaEvaluator { alphas, moments, poles, flat, guard, total_moment: None, spectrum: None, ops: None })
    }

    /// Evaluator backed by a computed spectrum and its operators.
    pub fn new(spectrum: ResonanceSpectrum, ops: InclusionOperators, zero_mean_tol: f64) -> Result<Self> {
        let mut ev = Self::from_moments(spectrum.alphas.clone(), spectrum.moments.clone(), zero_mean_tol)?;
        ev.ops = Some(Arc::new(ops));
        ev.total_moment = Some(ev.completeness_moment()?);
        ev.spectrum = Some(Arc::new(spectrum));
        Ok(ev)
    }

    pub fn operators(&self) -> Option<&InclusionOperators> {
        self.ops.as_deref()
    }

    fn require_ops(&self) -> Result<&InclusionOperators> {
        self.ops.as_deref().ok_or_else(|| Error::Config("direct evaluation needs the inclusion operators".into()))
    }

    /// `Pi 1_j`: the constant field `e_j` on the inclusion edges, projected
    /// off the gradient subspace.
    fn loads(ops: &InclusionOperators) -> [Vec<f64>; 3] {
        let m = ops.grid.len();
        [0, 1, 2].map(|j| {
            let mut v: Vec<f64> = ops.dof.iter().map(|&g| if g / m == j { 1.0 } else { 0.0 }).collect();
            ops.project(&mut v);
            v
        })
    }

    /// `h^3 (Pi 1)^T B^{-1} (Pi 1)`, the moment sum over all discrete modes.
    fn completeness_moment(&self) -> Result<M3> {
        let ops = self.require_ops()?;
        let loads = Self::loads(ops);
        let op = |x: &[f64], y: &mut [f64]| ops.apply_b_penalised(x, y);
        let sols: Vec<Vec<f64>> = loads
            .par_iter()
            .map(|b| {
                let mut x = vec![0.0; b.len()];
                let info = cg(&op, None, b, &mut x, 1e-12, 20 * b.len() + 100);
                if info.converged {
                    Ok(x)
                } else {
                    Err(Error::NotConverged(format!("mass solve: residual {:e}", info.rel_residual)))
                }
            })
            .collect::<Result<_>>()?;
        let vol = ops.grid.vol();
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] = vol * dot(&loads[i], &sols[j]);
            }
        }
        Ok(mat3::symmetrise(&t).0)
    }

    /// Error if `omega^2` is within the guard of a pole.
    pub fn check_guard(&self, omega: f64) -> Result<()> {
        let w2 = omega * omega;
        for p in &self.poles {
            if (w2 - p.alpha).abs() < self.guard {
                return Err(Error::PoleGuard { omega_sq: w2, alpha: p.alpha, guard: self.guard });
            }
        }
        Ok(())
    }

    /// Nearest pole `alpha` to `omega^2`.
    pub fn nearest_pole(&self, omega: f64) -> Option<f64> {
        let w2 = omega * omega;
        self.poles.iter().map(|p| p.alpha).min_by(|a, b| (a - w2).abs().total_cmp(&(b - w2).abs()))
    }

    /// `omega^2 I + omega^4 sum_k b^k (b^k)^T / (alpha_k - omega^2)`.
    pub fn gamma_series(&self, omega: f64) -> Result<M3> {
        self.check_guard(omega)?;
        let w2 = omega * omega;
        let mut g = [[0.0; 3]; 3];
        for (i, row) in g.iter_mut().enumerate() {
            row[i] = w2;
        }
        for p in &self.poles {
            let s = w2 * w2 / (p.alpha - w2);
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] += s * p.weight[i][j];
                }
            }
        }
        Ok(g)
    }

    /// Bound on the truncation error of `gamma_series` (Frobenius), using
    /// the completeness sum and `alpha_K` as a lower bound for `alpha_{K+1}`.
    pub fn tail_bound(&self, omega: f64) -> Option<f64> {
        let total = self.total_moment?;
        let w2 = omega * omega;
        let last = *self.alphas.last()?;
        if w2 >= last {
            return None;
        }
        let kept = outer_sum(&self.moments, &(0..self.moments.len()).collect::<Vec<_>>());
        let tail: f64 = (0..3).map(|i| total[i][i] - kept[i][i]).sum::<f64>().max(0.0);
        Some(w2 * w2 * tail / (last - w2))
    }

    /// Resolvent evaluation: solve `(A + gamma Gr Gr^T - omega^2 B) c_j = Pi 1_j`
    /// and set `Gamma_ij = omega^2 (delta_ij + omega^2 h^3 1_i . c_j)`.
    pub fn gamma_direct(&self, omega: f64) -> Result<DirectGamma> {
        let ops = self.require_ops()?;
        let w2 = omega * omega;
        for &a in &self.alphas {
            if (w2 - a).abs() < self.guard {
                return Err(Error::PoleGuard { omega_sq: w2, alpha: a, guard: self.guard });
            }
        }
        let loads = Self::loads(ops);
        let d = ops.dim();
        let op = |x: &[f64], y: &mut [f64]| {
            ops.apply_a_penalised(x, y);
            let mut b = vec![0.0; d];
            ops.apply_b(x, &mut b);
            for (yi, bi) in y.iter_mut().zip(&b) {
                *yi -= w2 * bi;
            }
        };
        let solved: Vec<(Vec<f64>, CgInfo)> = loads
            .par_iter()
            .map(|b| {
                let mut x = vec![0.0; d];
                let info = minres(&op, None, b, &mut x, 1e-12, 50 * d + 200);
                (x, info)
            })
            .collect();
        if let Some((_, info)) = solved.iter().find(|(_, i)| !i.converged) {
            let alpha = self.alphas.iter().copied().min_by(|a, b| (a - w2).abs().total_cmp(&(b - w2).abs()));
            return Err(Error::NotConverged(format!(
                "resolvent MINRES at omega^2 = {w2}: residual {:e} after {} iterations (nearest resonance {alpha:?})",
                info.rel_residual, info.iterations
            )));
        }
        let vol = ops.grid.vol();
        let mut moment = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                moment[i][j] = vol * dot(&loads[i], &solved[j].0);
            }
        }
        let mut g = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] = w2 * ((i == j) as u8 as f64 + w2 * moment[i][j]);
            }
        }
        let asymmetry = mat3::symmetrise(&g).1 / mat3::frob(&g).max(f64::MIN_POSITIVE);
        let info = [0, 1, 2].map(|j| solved[j].1);
        let coeffs = solved.into_iter().map(|(x, _)| x).collect();
        Ok(DirectGamma { omega, gamma: g, moment, asymmetry, coeffs, info })
    }

    /// Fields `B^j = c_j + grad G div c_j` on the full grid.
    pub fn b_fields(&self, direct: &DirectGamma) -> Result<[VectorField; 3]> {
        let ops = self.require_ops()?;
        let sp = Spectral::new(ops.grid);
        Ok([0, 1, 2].map(|j| {
            let mut data = ops.extend(&direct.coeffs[j]);
            sp.leray(&mut data);
            VectorField { grid: ops.grid, loc: VectorLoc::Edges, data }
        }))
    }
}

/// Result of a resolvent evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct DirectGamma {
    pub omega: f64,
    pub gamma: M3,
    /// `int_Q B^j_i`.
    pub moment: M3,
    /// `|Gamma - Gamma^T|_F / |Gamma|_F`.
    pub asymmetry: f64,
    #[serde(skip)]
    pub coeffs: Vec<Vec<f64>>,
    pub info: [CgInfo; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
    Singular,
}

impl std::fmt::Display for Definiteness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Definiteness::PositiveDefinite => "positive_definite",
            Definiteness::NegativeDefinite => "negative_definite",
            Definiteness::Indefinite => "indefinite",
            Definiteness::Singular => "singular",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DefinitenessReport {
    pub label: Definiteness,
    /// Some eigenvalue lies in `[-tol, tol]`.
    pub singular: bool,
    /// Ascending eigenvalues.
    pub eigenvalues: [f64; 3],
    /// Matching eigenvectors (columns).
    pub eigenvectors: M3,
}

/// Classify a symmetric 3x3 matrix by eigenvalue signs; `|lambda| <= tol`
/// counts as zero.
pub fn definiteness(g: &M3, tol: f64) -> Result<DefinitenessReport> {
    let (_, asym) = mat3::symmetrise(g);
    if asym > 1e-8 * mat3::frob(g).max(f64::MIN_POSITIVE) {
        return Err(Error::Asymmetric(asym));
    }
    let (vals, vecs) = sym_eig3(&mat3::to_na(g));
    let pos = vals.iter().filter(|&&v| v > tol).count();
    let neg = vals.iter().filter(|&&v| v < -tol).count();
    let singular = pos + neg < 3;
    let label = match (pos, neg) {
        (3, 0) => Definiteness::PositiveDefinite,
        (0, 3) => Definiteness::NegativeDefinite,
        (p, q) if p > 0 && q > 0 => Definiteness::Indefinite,
        _ => Definiteness::Singular,
    };
    Ok(DefinitenessReport { label, singular, eigenvalues: vals, eigenvectors: mat3::from_na(&vecs) })
}

/// Symmetry pattern of `Gamma` at each sample.
#[derive(Debug, Clone, Serialize)]
pub struct GammaSymmetry {
    pub omega: f64,
    pub gamma: M3,
    pub report: SymmetryReport,
}

/// Check the zero/equality pattern implied by the cell's declared rotations
/// at each sample frequency (series evaluation).
pub fn check_gamma_symmetry(ev: &GammaEvaluator, cell: &MaterialCell, omegas: &[f64], tol: f64) -> Result<Vec<GammaSymmetry>> {
    omegas
        .iter()
        .map(|&omega| {
            let gamma = ev.gamma_series(omega)?;
            let report = check_symmetry(&gamma, &cell.symmetry_tags, tol);
            Ok(GammaSymmetry { omega, gamma, report })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Permittivity, Rotation, Shape};
    use crate::inclusion_spectrum::{solve_resonances_with, EigenMethod, SpectrumOptions};

    fn boxed(half: [f64; 3]) -> MaterialCell {
        MaterialCell::new(8, Shape::Box { center: [0.5; 3], half }, Permittivity::Constant(1.0), Permittivity::Constant(1.0))
    }

    fn evaluator(cell: &MaterialCell, k: Option<usize>) -> GammaEvaluator {
        let ops = InclusionOperators::new(cell).unwrap();
        let k = k.unwrap_or(ops.complement_dim());
        let spec = solve_resonances_with(&ops, &SpectrumOptions { k, method: EigenMethod::Dense, ..Default::default() }).unwrap();
        GammaEvaluator::new(spec, ops, 1e-8).unwrap()
    }

    fn max_abs(m: &M3) -> f64 {
        m.iter().flatten().fold(0.0, |a, b| a.max(b.abs()))
    }

    #[test]
    fn vanishes_at_zero() {
        let ev = GammaEvaluator::from_moments(vec![1.0, 2.0], vec![[1.0, 0.0, 0.0], [0.0, 0.5, 0.0]], 1e-8).unwrap();
        assert_eq!(ev.gamma_series(0.0).unwrap(), [[0.0; 3]; 3]);
    }

    #[test]
    fn zero_moments_give_omega_squared_identity() {
        let ev = GammaEvaluator::from_moments(vec![1.0, 2.0], vec![[0.0; 3]; 2], 1e-8).unwrap();
        assert!(ev.poles.is_empty());
        assert_eq!(ev.flat, vec![0, 1]);
        let g = ev.gamma_series(3.0).unwrap();
        assert!(max_abs(&mat3::sub(&g, &mat3::identity().map(|r| r.map(|x| 9.0 * x)))) < 1e-14);
    }

    #[test]
    fn sign_flips_across_first_pole() {
        let b = [0.3, -0.2, 0.1];
        let ev = GammaEvaluator::from_moments(vec![4.0, 9.0], vec![b, [0.0, 0.1, 0.0]], 1e-8).unwrap();
        let quad = |w2: f64| {
            let g = ev.gamma_series(w2.sqrt()).unwrap();
            let gb: f64 = (0..3).map(|i| (0..3).map(|j| b[i] * g[i][j] * b[j]).sum::<f64>()).sum();
            gb - w2 * dot(&b, &b)
        };
        assert!(quad(4.0 * (1.0 - 1e-3)) > 0.0);
        assert!(quad(4.0 * (1.0 + 1e-3)) < 0.0);
        assert!(matches!(ev.gamma_series(2.0), Err(Error::PoleGuard { .. })));
    }

    #[test]
    fn direct_matches_full_series() {
        let ev = evaluator(&boxed([0.25; 3]), None);
        let a1 = ev.poles[0].alpha;
        for w2 in [0.3 * a1, 0.9 * a1, 1.2 * a1, 2.1 * a1] {
            let s = ev.gamma_series(w2.sqrt()).unwrap();
            let d = ev.gamma_direct(w2.sqrt()).unwrap();
            let scale = max_abs(&s);
            assert!(max_abs(&mat3::sub(&s, &d.gamma)) <= 1e-8 * scale, "w2 = {w2}");
            assert!(d.asymmetry <= 1e-10);
        }
    }

    #[test]
    fn completeness_matches_full_moment_sum() {
        let ev = evaluator(&boxed([0.25; 3]), None);
        let kept = outer_sum(&ev.moments, &(0..ev.moments.len()).collect::<Vec<_>>());
        let total = ev.total_moment.unwrap();
        assert!(max_abs(&mat3::sub(&kept, &total)) <= 1e-10 * max_abs(&total));
    }

    #[test]
    fn truncation_error_is_within_tail_bound() {
        let ev = evaluator(&boxed([0.25; 3]), Some(20));
        let w = (0.5 * ev.alphas[0]).sqrt();
        let s = ev.gamma_series(w).unwrap();
        let d = ev.gamma_direct(w).unwrap();
        assert!(mat3::frob(&mat3::sub(&s, &d.gamma)) <= ev.tail_bound(w).unwrap() * (1.0 + 1e-6));
    }

    #[test]
    fn small_omega_limit() {
        let ev = evaluator(&boxed([0.25; 3]), None);
        let lead: f64 = ev.poles.iter().map(|p| p.weight[0][0] / p.alpha).sum();
        let a1 = ev.poles[0].alpha;
        for t in [1e-3, 1e-2, 0.1] {
            let w2 = t * t * a1;
            let g = ev.gamma_direct(w2.sqrt()).unwrap().gamma;
            let dev = g[0][0] / w2 - 1.0;
            // Gamma / omega^2 - I = omega^2 sum b b^T / alpha + O(omega^4)
            assert!((dev / w2 - lead).abs() <= 2.0 * t * t * lead, "t = {t}");
        }
    }

    #[test]
    fn residues_are_positive_semidefinite() {
        let ev = evaluator(&boxed([0.25; 3]), Some(20));
        for p in &ev.poles {
            let r = definiteness(&p.residue(), 1e-12 * mat3::frob(&p.residue())).unwrap();
            assert!(r.eigenvalues[0] >= -1e-12 * mat3::frob(&p.residue()));
        }
    }

    #[test]
    fn definiteness_labels() {
        let d = |v: [f64; 3]| [[v[0], 0.0, 0.0], [0.0, v[1], 0.0], [0.0, 0.0, v[2]]];
        assert_eq!(definiteness(&d([1.0, 1.0, 1.0]), 1e-12).unwrap().label, Definiteness::PositiveDefinite);
        assert_eq!(definiteness(&d([-1.0, -2.0, -3.0]), 1e-12).unwrap().label, Definiteness::NegativeDefinite);
        let r = definiteness(&d([1.0, -1.0, 0.0]), 1e-12).unwrap();
        assert_eq!(r.label, Definiteness::Indefinite);
        assert!(r.singular);
        let bad = [[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(definiteness(&bad, 1e-12), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn cubic_box_gamma_is_scalar() {
        let cell = boxed([0.25; 3]).with_symmetry(&[Rotation::quarter_turn(0), Rotation::quarter_turn(1), Rotation::quarter_turn(2)]);
        let ev = evaluator(&cell, Some(20));
        let a1 = ev.poles[0].alpha;
        let ws: Vec<f64> = [0.5, 1.5, 2.5].iter().map(|t: &f64| (t * a1).sqrt()).collect();
        for s in check_gamma_symmetry(&ev, &cell, &ws, 1e-6).unwrap() {
            assert!(s.report.ok, "{:?}", s.report);
        }
    }

    #[test]
    fn half_turn_box_gamma_is_diagonal() {
        let cell = MaterialCell::new(
            16,
            Shape::Box { center: [0.5; 3], half: [0.25, 0.1875, 0.125] },
            Permittivity::Constant(1.0),
            Permittivity::Constant(1.0),
        )
        .with_symmetry(&[Rotation::half_turn(0), Rotation::half_turn(1), Rotation::half_turn(2)]);
        let ev = evaluator(&cell, Some(12));
        let w = (0.5 * ev.poles[0].alpha).sqrt();
        let s = &check_gamma_symmetry(&ev, &cell, &[w], 1e-6).unwrap()[0];
        assert!(s.report.ok);
        let g = s.gamma;
        assert!((g[0][0] - g[1][1]).abs() > 1e-6 * g[0][0]);
        let q = check_symmetry(&g, &[Rotation::quarter_turn(2)], 1e-6);
        assert!(!q.ok);
    }
}
