//! Macroscopic dispersion relation `M(m) u = Gamma(omega) u`: mode frames,
//! root finding per wave vector, regime labels, two-scale eigenfunctions and
//! band tables.

use crate::error::{Error, Result};
use crate::gamma_fn::{definiteness, GammaEvaluator};
use crate::grid::{ops, VectorField, VectorLoc};
use crate::linalg::dense::sym_eig3;
use crate::linalg::norm;
use crate::mat3::{self, M3};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

const FOUR_PI2: f64 = 4.0 * PI * PI;

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn matvec(m: &M3, v: &[f64; 3]) -> [f64; 3] {
    [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
}

fn to_f(m: [i64; 3]) -> [f64; 3] {
    m.map(|x| x as f64)
}

/// `4 pi^2 (e_l x v) . A (e_p x v)` for a real vector `v`.
pub fn mobility_real(a: &M3, v: [f64; 3]) -> M3 {
    let e = mat3::identity();
    let c: Vec<[f64; 3]> = (0..3).map(|l| cross(e[l], v)).collect();
    let mut out = [[0.0; 3]; 3];
    for l in 0..3 {
        let ac = matvec(a, &c[l]);
        for p in 0..3 {
            out[p][l] = FOUR_PI2 * dot3(&c[p], &ac);
        }
    }
    mat3::symmetrise(&out).0
}

/// `M(m)` for an integer wave vector.
pub fn mobility_matrix(a: &M3, m: [i64; 3]) -> Result<M3> {
    if m == [0, 0, 0] {
        return Err(Error::Config("wave vector m must be nonzero".into()));
    }
    Ok(mobility_real(a, to_f(m)))
}

/// Roots of `lambda^2 - lambda((a2+a3)t1^2 + (a1+a3)t2^2 + (a1+a2)t3^2)
/// + (a1 a2 t3^2 + a2 a3 t1^2 + a1 a3 t2^2) = 0` for a unit vector `t`,
/// ascending. The `a_i` here already include the factor `4 pi^2`.
pub fn characteristic_roots(a: [f64; 3], t: [f64; 3]) -> [f64; 2] {
    let t2 = t.map(|x| x * x);
    let b = (a[1] + a[2]) * t2[0] + (a[0] + a[2]) * t2[1] + (a[0] + a[1]) * t2[2];
    let c = a[0] * a[1] * t2[2] + a[1] * a[2] * t2[0] + a[0] * a[2] * t2[1];
    let disc = (b * b - 4.0 * c).max(0.0).sqrt();
    // stable quadratic formula
    let q = 0.5 * (b + disc);
    let (r1, r2) = (c / q, q);
    if r1 <= r2 {
        [r1, r2]
    } else {
        [r2, r1]
    }
}

/// Eigen-frame of `M(m~)`: `M(m~) = C'^T Lambda' C'` with rows of `C'` equal
/// to `e~1, e~2, m~`.
#[derive(Debug, Clone, Serialize)]
pub struct ModeFrame {
    pub m: [i64; 3],
    pub m_norm: f64,
    pub mt: [f64; 3],
    /// Positive eigenvalues of `M(m~)`, ascending.
    pub lambda: [f64; 2],
    pub e: [[f64; 3]; 2],
    pub c_prime: M3,
    pub lambda_prime: M3,
}

impl ModeFrame {
    /// `C`, the first two rows of `C'`.
    pub fn c(&self) -> [[f64; 3]; 2] {
        self.e
    }

    /// `|m|^2 M(m~) = M(m)`.
    pub fn mobility(&self) -> M3 {
        let mut out = [[0.0; 3]; 3];
        let s = self.m_norm * self.m_norm;
        for (k, ek) in self.e.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] += s * self.lambda[k] * ek[i] * ek[j];
                }
            }
        }
        out
    }

    /// Coordinates `(u~, alpha)` of `u` with `u = C^T u~ + alpha m~`.
    pub fn coordinates(&self, u: &[f64; 3]) -> ([f64; 2], f64) {
        ([dot3(&self.e[0], u), dot3(&self.e[1], u)], dot3(&self.mt, u))
    }
}

pub fn mode_frame(a: &M3, m: [i64; 3]) -> Result<ModeFrame> {
    if m == [0, 0, 0] {
        return Err(Error::Config("wave vector m must be nonzero".into()));
    }
    let mf = to_f(m);
    let m_norm = norm(&mf);
    let mt = mf.map(|x| x / m_norm);
    let mm = mobility_real(a, mt);
    let (vals, vecs) = sym_eig3(&mat3::to_na(&mm));
    // re-orthonormalise the transverse pair against m~
    let t = Vector3::from(mt);
    let mut e = [[0.0; 3]; 2];
    let mut prev: Option<Vector3<f64>> = None;
    for (k, col) in [1usize, 2].into_iter().enumerate() {
        let mut v: Vector3<f64> = vecs.column(col).into_owned();
        v -= t * t.dot(&v);
        if let Some(p) = prev {
            v -= p * p.dot(&v);
        }
        v /= v.norm();
        prev = Some(v);
        e[k] = [v[0], v[1], v[2]];
    }
    let lambda = [vals[1], vals[2]];
    let c_prime = [e[0], e[1], mt];
    let lambda_prime = [[lambda[0], 0.0, 0.0], [0.0, lambda[1], 0.0], [0.0, 0.0, 0.0]];
    Ok(ModeFrame { m, m_norm, mt, lambda, e, c_prime, lambda_prime })
}

/// Closed-form transverse pair for an isotropic tensor: `e2, e3` when
/// `|m~_1| = 1`, otherwise the normalised `e1 x m~` and `(e1 x m~) x m~`.
pub fn isotropic_frame(mt: [f64; 3]) -> [[f64; 3]; 2] {
    let s = (1.0 - mt[0] * mt[0]).max(0.0).sqrt();
    if s < 1e-14 {
        return [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let a = cross([1.0, 0.0, 0.0], mt).map(|x| x / s);
    let b = cross(a, mt);
    [a, b]
}

/// Root-scan parameters.
#[derive(Debug, Clone, Serialize)]
pub struct ScanOptions {
    /// Uniform samples per inter-pole interval.
    pub samples: usize,
    /// Refinement factor for the subinterval next to a pole.
    pub refine: usize,
    /// Relative singular-value threshold for multiplicity.
    pub null_tol: f64,
    /// Relative distance below which two roots are merged.
    pub merge_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { samples: 64, refine: 8, null_tol: 1e-8, merge_tol: 1e-9 }
    }
}

/// A frequency with a nontrivial solution of `M(m) u = Gamma(omega) u`.
#[derive(Debug, Clone, Serialize)]
pub struct Root {
    pub omega: f64,
    pub multiplicity: usize,
    /// Orthonormal basis of solutions (real; any complex phase is allowed).
    pub uhat: Vec<[f64; 3]>,
    /// `(u~, alpha)` of each basis vector in the frame.
    pub coords: Vec<([f64; 2], f64)>,
    /// `max |M u - Gamma u| / |u|` over the basis.
    pub residual: f64,
    /// `max |Gamma u . m|` over the basis.
    pub solvability: f64,
    /// `|det(M - Gamma)| / |M - Gamma|_2^3`.
    pub det_normalised: f64,
    /// Within ten guard widths of a pole.
    pub uncertain: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchResult {
    pub roots: Vec<Root>,
    /// Sign changes whose bracket had no numerical null space.
    pub discarded: Vec<f64>,
    /// The window reaches past the last computed resonance, so the series
    /// truncation is not controlled there.
    pub truncation_warning: bool,
}

fn system(frame: &ModeFrame, ev: &GammaEvaluator, omega: f64) -> Result<M3> {
    let g = ev.gamma_series(omega)?;
    Ok(mat3::sub(&frame.mobility(), &g))
}

fn sorted_eigs(s: &M3) -> [f64; 3] {
    sym_eig3(&mat3::to_na(s)).0
}

/// Inter-pole segments of `(lo, hi)` in `omega`, each with flags telling
/// whether its ends touch a pole guard.
fn segments(ev: &GammaEvaluator, lo: f64, hi: f64) -> Vec<(f64, f64, bool, bool)> {
    let (lo2, hi2) = (lo * lo, hi * hi);
    let mut cuts: Vec<(f64, bool)> = vec![(lo2, false)];
    for p in &ev.poles {
        if p.alpha > lo2 && p.alpha < hi2 {
            cuts.push((p.alpha, true));
        }
    }
    cuts.push((hi2, false));
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (a, pa) = w[0];
        let (b, pb) = w[1];
        // slightly wider than the guard so that sqrt round-off stays outside
        let g = ev.guard * (1.0 + 1e-6);
        let a = if pa { a + g } else { a.max(g) };
        let b = if pb { b - g } else { b };
        if b > a {
            out.push((a.max(0.0).sqrt(), b.sqrt(), pa, pb));
        }
    }
    out
}

fn sample_points(a: f64, b: f64, pa: bool, pb: bool, opts: &ScanOptions) -> Vec<f64> {
    let n = opts.samples.max(2);
    let step = (b - a) / n as f64;
    let mut pts: Vec<f64> = (0..=n).map(|i| a + step * i as f64).collect();
    // geometric refinement towards a pole, where Gamma diverges
    let r = opts.samples * opts.refine;
    for (end, dir, on) in [(a, 1.0, pa), (b, -1.0, pb)] {
        if !on {
            continue;
        }
        let d0 = (end * 1e-12).max(f64::MIN_POSITIVE);
        for i in 1..r {
            let d = d0 * (step / d0).powf(i as f64 / r as f64);
            pts.push(end + dir * d);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

fn analyse_root(frame: &ModeFrame, ev: &GammaEvaluator, omega: f64, opts: &ScanOptions) -> Result<Root> {
    let s = system(frame, ev, omega)?;
    let g = ev.gamma_series(omega)?;
    let (vals, vecs) = sym_eig3(&mat3::to_na(&s));
    let snorm = vals.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let null: Vec<usize> = (0..3).filter(|&i| vals[i].abs() <= opts.null_tol * snorm).collect();
    let uhat: Vec<[f64; 3]> = null.iter().map(|&i| [vecs[(0, i)], vecs[(1, i)], vecs[(2, i)]]).collect();
    let mut residual: f64 = 0.0;
    let mut solvability: f64 = 0.0;
    let mf = to_f(frame.m);
    for u in &uhat {
        let r = matvec(&s, u);
        residual = residual.max(norm(&r));
        solvability = solvability.max(dot3(&matvec(&g, u), &mf).abs());
    }
    let det = mat3::to_na(&s).determinant();
    let uncertain = ev.poles.iter().any(|p| (omega * omega - p.alpha).abs() < 10.0 * ev.guard);
    Ok(Root {
        omega,
        multiplicity: uhat.len(),
        coords: uhat.iter().map(|u| frame.coordinates(u)).collect(),
        uhat,
        residual,
        solvability,
        det_normalised: det.abs() / snorm.powi(3),
        uncertain,
    })
}

/// All roots of `det(|m|^2 Lambda' - C' Gamma C'^T)` in `window`, found by
/// tracking sign changes of each eigenvalue of `M(m) - Gamma(omega)`.
pub fn solve_branch(frame: &ModeFrame, ev: &GammaEvaluator, window: (f64, f64), opts: &ScanOptions) -> Result<BranchResult> {
    let (lo, hi) = window;
    if !(hi > lo && lo >= 0.0) {
        return Err(Error::Config(format!("invalid frequency window ({lo}, {hi})")));
    }
    let mut cands: Vec<f64> = Vec::new();
    for (a, b, pa, pb) in segments(ev, lo, hi) {
        let pts = sample_points(a, b, pa, pb, opts);
        let eigs: Vec<[f64; 3]> = pts.iter().map(|&w| system(frame, ev, w).map(|s| sorted_eigs(&s))).collect::<Result<_>>()?;
        for i in 0..pts.len() - 1 {
            for e in 0..3 {
                let (fa, fb) = (eigs[i][e], eigs[i + 1][e]);
                if fa == 0.0 {
                    cands.push(pts[i]);
                } else if fa * fb < 0.0 {
                    let f = |w: f64| system(frame, ev, w).map(|s| sorted_eigs(&s)[e]).unwrap_or(f64::NAN);
                    cands.push(bisect(&f, pts[i], pts[i + 1], fa));
                }
            }
        }
        if let Some(last) = eigs.last() {
            if last.contains(&0.0) {
                cands.push(*pts.last().unwrap());
            }
        }
    }
    cands.retain(|&w| w > 0.0);
    cands.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::new();
    for w in cands {
        match merged.last() {
            Some(&p) if (w - p).abs() <= opts.merge_tol * w => {}
            _ => merged.push(w),
        }
    }
    let mut roots = Vec::new();
    let mut discarded = Vec::new();
    for w in merged {
        let r = analyse_root(frame, ev, w, opts)?;
        if r.multiplicity == 0 {
            log::debug!("discarding spurious root at omega = {w} for m = {:?}", frame.m);
            discarded.push(w);
        } else {
            roots.push(r);
        }
    }
    let truncation_warning = ev.alphas.last().is_some_and(|&a| hi * hi > a);
    Ok(BranchResult { roots, discarded, truncation_warning })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FullBand,
    WeakGap,
    FullGap,
    ResonanceFlatBand,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::FullBand => "full_band",
            Regime::WeakGap => "weak_gap",
            Regime::FullGap => "full_gap",
            Regime::ResonanceFlatBand => "resonance_flat_band",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub omega: f64,
    pub regime: Regime,
    /// Eigenvalues of `Gamma(omega)` (empty on a flat band).
    pub eigenvalues: Vec<f64>,
    /// Orthonormal basis of the nonnegative eigenspace of `Gamma` (weak gaps).
    pub propagating: Vec<[f64; 3]>,
    /// Zero-mean mode index on a flat band.
    pub mode: Option<usize>,
}

/// Relative tolerance separating zero from negative eigenvalues of `Gamma`.
pub const REGIME_TOL: f64 = 1e-12;

pub fn classify_frequency(ev: &GammaEvaluator, omega: f64) -> Result<RegimeReport> {
    let w2 = omega * omega;
    if let Some(&k) = ev.flat.iter().find(|&&k| (ev.alphas[k] - w2).abs() <= ev.guard) {
        return Ok(RegimeReport { omega, regime: Regime::ResonanceFlatBand, eigenvalues: vec![], propagating: vec![], mode: Some(k) });
    }
    let g = ev.gamma_series(omega)?;
    let tol = REGIME_TOL * mat3::frob(&g);
    let d = definiteness(&g, tol)?;
    let nonneg: Vec<usize> = (0..3).filter(|&i| d.eigenvalues[i] >= -tol).collect();
    let regime = match nonneg.len() {
        3 => Regime::FullBand,
        0 => Regime::FullGap,
        _ => Regime::WeakGap,
    };
    let propagating = if regime == Regime::WeakGap {
        nonneg.iter().map(|&i| [0, 1, 2].map(|r| d.eigenvectors[r][i])).collect()
    } else {
        vec![]
    };
    Ok(RegimeReport { omega, regime, eigenvalues: d.eigenvalues.to_vec(), propagating, mode: None })
}

/// Two-scale profile `(I + omega^2 B(y)) u^` of a validated root; the full
/// field is `exp(2 pi i m.x)` times the profile.
#[derive(Debug, Clone)]
pub struct TwoScaleField {
    pub m: [i64; 3],
    pub omega: f64,
    pub uhat: [f64; 3],
    pub profile: VectorField,
    /// `|div_y profile| / |profile|` (discrete, edge norm).
    pub div_residual: f64,
    /// Relative residual of the inclusion equation for `z`, modulo gradients.
    pub cell_residual: f64,
}

/// Relative tolerance on `|M u - Gamma u|` for a root to count as validated.
pub const VALIDATION_TOL: f64 = 1e-6;

pub fn reconstruct_eigenfunction(frame: &ModeFrame, ev: &GammaEvaluator, omega: f64, uhat: [f64; 3]) -> Result<TwoScaleField> {
    let s = system(frame, ev, omega)?;
    let un = norm(&uhat);
    let r = norm(&matvec(&s, &uhat));
    let scale = mat3::frob(&s).max(mat3::frob(&frame.mobility()));
    if un == 0.0 || r > VALIDATION_TOL * scale * un {
        return Err(Error::Solver(format!("(omega = {omega}, u = {uhat:?}) is not a validated root: residual {r:e}")));
    }
    let ops_ = ev.operators().ok_or_else(|| Error::Config("reconstruction needs the inclusion operators".into()))?;
    let direct = ev.gamma_direct(omega)?;
    let bf = ev.b_fields(&direct)?;
    let grid = ops_.grid;
    let m = grid.len();
    let w2 = omega * omega;
    let mut data = vec![0.0; 3 * m];
    for (i, v) in data.iter_mut().enumerate() {
        *v = uhat[i / m] + w2 * (0..3).map(|j| uhat[j] * bf[j].data[i]).sum::<f64>();
    }
    let mut d = vec![0.0; m];
    ops::div_edge(grid.n, &data, &mut d);
    let div_residual = norm(&d) * grid.h() / norm(&data).max(f64::MIN_POSITIVE);
    // inclusion equation: A z = omega^2 Pi R(profile), z = omega^2 sum u_j c_j
    let dim = ops_.dim();
    let z: Vec<f64> = (0..dim).map(|i| w2 * (0..3).map(|j| uhat[j] * direct.coeffs[j][i]).sum::<f64>()).collect();
    let mut az = vec![0.0; dim];
    ops_.apply_a(&z, &mut az);
    let mut rp = vec![0.0; dim];
    ops_.restrict(&data, &mut rp);
    ops_.project(&mut rp);
    let diff: Vec<f64> = az.iter().zip(&rp).map(|(a, p)| a - w2 * p).collect();
    let cell_residual = norm(&diff) / (w2 * norm(&rp)).max(f64::MIN_POSITIVE);
    Ok(TwoScaleField {
        m: frame.m,
        omega,
        uhat,
        profile: VectorField { grid, loc: VectorLoc::Edges, data },
        div_residual,
        cell_residual,
    })
}

/// Profile `r^k(y)` of a flat-band eigenfunction `w(x) r^k(y)`.
pub fn flat_band_profile(ev: &GammaEvaluator, k: usize) -> Result<VectorField> {
    let spec = ev.spectrum.as_ref().ok_or_else(|| Error::Config("flat-band profile needs the computed spectrum".into()))?;
    if !ev.flat.contains(&k) {
        return Err(Error::Config(format!("mode {k} does not have zero mean")));
    }
    Ok(spec.r_field(k))
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersionRow {
    /// `None` for a flat band (every `m`).
    pub m: Option<[i64; 3]>,
    pub branch: usize,
    pub omega: f64,
    pub multiplicity: usize,
    pub uhat: Vec<[f64; 3]>,
    pub regime: Regime,
    pub propagating: Vec<[f64; 3]>,
    pub residual: f64,
    pub solvability: f64,
    pub det_normalised: f64,
    pub uncertain: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersionTable {
    pub rows: Vec<DispersionRow>,
    pub m_max: i64,
    pub omega_max: f64,
    /// `omega_max < 0.9 sqrt(alpha_K)`.
    pub truncation_ok: bool,
    pub discarded: usize,
}

/// Integer vectors with `|m|_inf <= m_max`, one of each `+-m` pair (first
/// nonzero component positive), since `M(-m) = M(m)`.
pub fn canonical_wave_vectors(m_max: i64) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for k in -m_max..=m_max {
        for j in -m_max..=m_max {
            for i in -m_max..=m_max {
                let m = [i, j, k];
                if let Some(&first) = m.iter().find(|&&x| x != 0) {
                    if first > 0 {
                        out.push(m);
                    }
                }
            }
        }
    }
    out
}

pub fn band_structure(a: &M3, ev: &GammaEvaluator, m_max: i64, omega_max: f64, opts: &ScanOptions) -> Result<DispersionTable> {
    let ms = canonical_wave_vectors(m_max);
    let per_m: Vec<(Vec<DispersionRow>, usize)> = ms
        .par_iter()
        .map(|&m| {
            let frame = mode_frame(a, m)?;
            let br = solve_branch(&frame, ev, (0.0, omega_max), opts)?;
            let rows = br
                .roots
                .into_iter()
                .enumerate()
                .map(|(b, r)| {
                    let reg = classify_frequency(ev, r.omega)?;
                    Ok(DispersionRow {
                        m: Some(m),
                        branch: b,
                        omega: r.omega,
                        multiplicity: r.multiplicity,
                        uhat: r.uhat,
                        regime: reg.regime,
                        propagating: reg.propagating,
                        residual: r.residual,
                        solvability: r.solvability,
                        det_normalised: r.det_normalised,
                        uncertain: r.uncertain,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((rows, br.discarded.len()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut discarded = 0;
    for (r, d) in per_m {
        rows.extend(r);
        discarded += d;
    }
    for (b, &k) in ev.flat.iter().enumerate() {
        let w = ev.alphas[k].sqrt();
        if w <= omega_max {
            rows.push(DispersionRow {
                m: None,
                branch: b,
                omega: w,
                multiplicity: 0,
                uhat: vec![],
                regime: Regime::ResonanceFlatBand,
                propagating: vec![],
                residual: 0.0,
                solvability: 0.0,
                det_normalised: 0.0,
                uncertain: false,
            });
        }
    }
    rows.sort_by(|x, y| x.omega.total_cmp(&y.omega).then_with(|| x.m.cmp(&y.m)));
    let truncation_ok = ev.alphas.last().is_some_and(|&a| omega_max < 0.9 * a.sqrt());
    Ok(DispersionTable { rows, m_max, omega_max, truncation_ok, discarded })
}

/// A maximal run of equally labelled samples.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeWindow {
    pub regime: Regime,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    /// Propagating subspace at the middle sample of a weak-gap window.
    pub propagating: Vec<[f64; 3]>,
}

/// Classify `samples` equispaced frequencies in `(0, omega_max]` (skipping
/// pole guards) and merge equal neighbours into windows.
pub fn regime_windows(ev: &GammaEvaluator, omega_max: f64, samples: usize) -> Result<Vec<RegimeWindow>> {
    let reports: Vec<RegimeReport> = (1..=samples)
        .into_par_iter()
        .filter_map(|i| {
            let w = omega_max * i as f64 / samples as f64;
            match classify_frequency(ev, w) {
                Err(Error::PoleGuard { .. }) => None,
                r => Some(r),
            }
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<(RegimeWindow, Vec<usize>)> = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let regime = if r.regime == Regime::ResonanceFlatBand { Regime::FullBand } else { r.regime };
        match out.last_mut() {
            Some((w, idx)) if w.regime == regime && !crosses_pole(ev, w.hi, r.omega) => {
                w.hi = r.omega;
                w.samples += 1;
                idx.push(i);
            }
            _ => out.push((RegimeWindow { regime, lo: r.omega, hi: r.omega, samples: 1, propagating: vec![] }, vec![i])),
        }
    }
    Ok(out
        .into_iter()
        .map(|(mut w, idx)| {
            if w.regime == Regime::WeakGap {
                w.propagating = reports[idx[idx.len() / 2]].propagating.clone();
            }
            w
        })
        .collect())
}

fn crosses_pole(ev: &GammaEvaluator, a: f64, b: f64) -> bool {
    ev.poles.iter().any(|p| p.alpha > a * a && p.alpha < b * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    fn diag(a: [f64; 3]) -> M3 {
        [[a[0], 0.0, 0.0], [0.0, a[1], 0.0], [0.0, 0.0, a[2]]]
    }

    /// `Gamma = diag(beta1, beta2, beta2)`: one pole along `e1` at `a1`, a
    /// double pole across `e2, e3` at `a2`.
    fn cylinder_like(a1: f64, a2: f64) -> GammaEvaluator {
        GammaEvaluator::from_moments(
            vec![a1, a2, a2],
            vec![[0.3, 0.0, 0.0], [0.0, 0.25, 0.0], [0.0, 0.0, 0.25]],
            1e-8,
        )
        .unwrap()
    }

    fn isotropic(a: f64) -> GammaEvaluator {
        GammaEvaluator::from_moments(
            vec![a, a, a, 2.5 * a],
            vec![[0.3, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.3], [0.0; 3]],
            1e-8,
        )
        .unwrap()
    }

    fn beta(ev: &GammaEvaluator, w: f64, i: usize) -> f64 {
        ev.gamma_series(w).unwrap()[i][i]
    }

    fn scalar_roots(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, poles: &[f64]) -> Vec<f64> {
        let n = 20000;
        let mut out = Vec::new();
        let mut prev = (lo, f(lo));
        for i in 1..=n {
            let w = lo + (hi - lo) * i as f64 / n as f64;
            let v = f(w);
            let pole_between = poles.iter().any(|&p| p > prev.0 * prev.0 && p < w * w);
            if prev.1 * v < 0.0 && !pole_between {
                out.push(bisect(f, prev.0, w, prev.1));
            }
            prev = (w, v);
        }
        out
    }

    #[test]
    fn isotropic_mobility() {
        let a = 0.7;
        let m = mobility_matrix(&diag([a; 3]), [1, 0, 0]).unwrap();
        let want = diag([0.0, FOUR_PI2 * a, FOUR_PI2 * a]);
        assert!(mat3::frob(&mat3::sub(&m, &want)) < 1e-12);
        let m = [2, -1, 3];
        let mm = mobility_matrix(&diag([a; 3]), m).unwrap();
        assert!(norm(&matvec(&mm, &to_f(m))) < 1e-12);
        let v = cross(to_f(m), [1.0, 0.0, 0.0]);
        let mv = matvec(&mm, &v);
        let s = FOUR_PI2 * a * 14.0;
        assert!((0..3).all(|i| (mv[i] - s * v[i]).abs() < 1e-10 * s));
        assert!(mobility_matrix(&diag([a; 3]), [0, 0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn characteristic_roots_match_numeric(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
                                              a1 in 0.1f64..2.0, a2 in 0.1f64..2.0, a3 in 0.1f64..2.0) {
            let n = (x * x + y * y + z * z).sqrt();
            prop_assume!(n > 1e-3);
            let t = [x / n, y / n, z / n];
            let a = [a1, a2, a3];
            let mm = mobility_real(&diag(a), t);
            let (vals, _) = sym_eig3(&mat3::to_na(&mm));
            let r = characteristic_roots(a.map(|v| FOUR_PI2 * v), t);
            let s = vals[2];
            prop_assert!(vals[0].abs() < 1e-12 * s);
            prop_assert!((vals[1] - r[0]).abs() < 1e-12 * s);
            prop_assert!((vals[2] - r[1]).abs() < 1e-12 * s);
        }

        #[test]
        fn frame_is_orthonormal(i in -3i64..=3, j in -3i64..=3, k in -3i64..=3,
                                a1 in 0.1f64..2.0, a2 in 0.1f64..2.0, a3 in 0.1f64..2.0) {
            prop_assume!([i, j, k] != [0, 0, 0]);
            let a = diag([a1, a2, a3]);
            let f = mode_frame(&a, [i, j, k]).unwrap();
            let c = mat3::to_na(&f.c_prime);
            prop_assert!((c * c.transpose() - Matrix3::identity()).norm() < 1e-12);
            let mm = mobility_matrix(&a, [i, j, k]).unwrap();
            prop_assert!(norm(&matvec(&mm, &to_f([i, j, k]))) < 1e-12 * mat3::frob(&mm));
            prop_assert!(mat3::frob(&mat3::sub(&f.mobility(), &mm)) < 1e-12 * mat3::frob(&mm));
        }
    }

    #[test]
    fn isotropic_frame_spans_transverse_plane() {
        let a = diag([0.6; 3]);
        for m in [[1, 0, 0], [1, 2, 0], [0, 1, 1], [2, -1, 3]] {
            let f = mode_frame(&a, m).unwrap();
            assert!((f.lambda[0] - FOUR_PI2 * 0.6).abs() < 1e-12 && (f.lambda[1] - FOUR_PI2 * 0.6).abs() < 1e-12);
            let cf = isotropic_frame(f.mt);
            let proj = |e: &[[f64; 3]; 2]| Matrix3::from_fn(|r, c| e[0][r] * e[0][c] + e[1][r] * e[1][c]);
            assert!((proj(&cf) - proj(&f.e)).norm() < 1e-12);
        }
    }

    #[test]
    fn uniaxial_special_directions() {
        let (a, b) = (0.4, 0.9);
        let t = diag([a, b, b]);
        let f = mode_frame(&t, [1, 0, 0]).unwrap();
        assert!((f.lambda[0] - FOUR_PI2 * b).abs() < 1e-12 && (f.lambda[1] - FOUR_PI2 * b).abs() < 1e-12);
        let f = mode_frame(&t, [0, 1, 2]).unwrap();
        assert!((f.lambda[0] - FOUR_PI2 * a).abs() < 1e-12);
        assert!((f.lambda[1] - FOUR_PI2 * b).abs() < 1e-12);
        let e1 = cross([1.0, 0.0, 0.0], f.mt);
        assert!((dot3(&f.e[0], &e1).abs() - norm(&e1)).abs() < 1e-12);
    }

    #[test]
    fn isotropic_roots_are_transverse_pairs_and_longitudinal_zeros() {
        let a = 0.05;
        let ev = isotropic(40.0);
        let t = diag([a; 3]);
        let m = [1, 1, 0];
        let frame = mode_frame(&t, m).unwrap();
        let hi = (90.0f64).sqrt();
        let br = solve_branch(&frame, &ev, (0.0, hi), &ScanOptions::default()).unwrap();
        let target = FOUR_PI2 * a * 2.0;
        let poles = [40.0];
        let trans = scalar_roots(&|w| beta(&ev, w, 0) - target, 1e-3, hi, &poles);
        let longi = scalar_roots(&|w| beta(&ev, w, 0), 1e-3, hi, &poles);
        assert_eq!(br.roots.len(), trans.len() + longi.len(), "{:?}", br.roots.iter().map(|r| r.omega).collect::<Vec<_>>());
        for w in &trans {
            let r = br.roots.iter().find(|r| (r.omega - w).abs() < 1e-9 * w).unwrap();
            assert_eq!(r.multiplicity, 2);
            for (_, alpha) in &r.coords {
                assert!(alpha.abs() < 1e-8);
            }
        }
        for w in &longi {
            let r = br.roots.iter().find(|r| (r.omega - w).abs() < 1e-9 * w).unwrap();
            assert_eq!(r.multiplicity, 1);
            assert!((r.coords[0].1.abs() - 1.0).abs() < 1e-8);
        }
        for r in &br.roots {
            assert!(r.residual <= 1e-8 && r.solvability <= 1e-8 && r.det_normalised <= 1e-10);
        }
    }

    #[test]
    fn axial_wave_has_no_transverse_roots_where_beta2_negative() {
        // beta1 vanishes at 28/0.91, inside the window (30, 32) where beta2 < 0
        let ev = cylinder_like(28.0, 30.0);
        let frame = mode_frame(&diag([0.05, 0.08, 0.08]), [1, 0, 0]).unwrap();
        let hi = (60.0f64).sqrt();
        let br = solve_branch(&frame, &ev, (0.0, hi), &ScanOptions::default()).unwrap();
        assert!(!br.roots.is_empty());
        for r in &br.roots {
            if beta(&ev, r.omega, 1) < 0.0 {
                // only longitudinal solutions, at zeros of beta1
                assert_eq!(r.multiplicity, 1);
                assert!((r.coords[0].1.abs() - 1.0).abs() < 1e-8);
                assert!(beta(&ev, r.omega, 0).abs() < 1e-6 * r.omega * r.omega);
            }
        }
        assert!(br.roots.iter().any(|r| beta(&ev, r.omega, 1) < 0.0));
    }

    #[test]
    fn no_roots_where_gamma_is_negative_definite() {
        let ev = isotropic(40.0);
        let t = diag([0.05; 3]);
        for m in canonical_wave_vectors(2) {
            let frame = mode_frame(&t, m).unwrap();
            let br = solve_branch(&frame, &ev, (1.0, 12.0), &ScanOptions::default()).unwrap();
            for r in &br.roots {
                assert_ne!(classify_frequency(&ev, r.omega).unwrap().regime, Regime::FullGap);
            }
        }
    }

    #[test]
    fn regimes() {
        let ev = cylinder_like(30.0, 50.0);
        assert_eq!(classify_frequency(&ev, 1e-3).unwrap().regime, Regime::FullBand);
        let w = (31.0f64).sqrt();
        let r = classify_frequency(&ev, w).unwrap();
        assert_eq!(r.regime, Regime::WeakGap);
        assert_eq!(r.propagating.len(), 2);
        assert!(r.propagating.iter().all(|v| v[0].abs() < 1e-12));
        let windows = regime_windows(&ev, 10.0, 2048).unwrap();
        assert!(windows.iter().any(|w| w.regime == Regime::WeakGap));
        let iso = regime_windows(&isotropic(40.0), 10.0, 2048).unwrap();
        assert!(iso.iter().all(|w| w.regime != Regime::WeakGap));
        assert!(iso.iter().any(|w| w.regime == Regime::FullGap));
        let flat = isotropic(40.0);
        let r = classify_frequency(&flat, 100.0f64.sqrt()).unwrap();
        assert_eq!(r.regime, Regime::ResonanceFlatBand);
        assert_eq!(r.mode, Some(3));
    }

    #[test]
    fn empty_inclusion_gives_homogeneous_maxwell_bands() {
        let ev = GammaEvaluator::from_moments(vec![1e4], vec![[0.0; 3]], 1e-8).unwrap();
        let t = mat3::identity();
        let table = band_structure(&t, &ev, 1, 10.0, &ScanOptions::default()).unwrap();
        let mut ws: Vec<(f64, usize)> = table.rows.iter().filter(|r| r.m.is_some()).map(|r| (r.omega, r.multiplicity)).collect();
        ws.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(!ws.is_empty());
        for (w, mult) in ws {
            let m2 = (w / (2.0 * PI)).powi(2);
            assert!((m2 - m2.round()).abs() < 1e-9, "{w}");
            assert_eq!(mult, 2);
        }
    }

    #[test]
    fn reconstructed_profile_is_solenoidal_and_solves_cell_equation() {
        use crate::cell_problem::{assemble_a_hom, CellOptions};
        use crate::geometry::{MaterialCell, Permittivity, Shape};
        use crate::inclusion_spectrum::{solve_resonances_with, EigenMethod, InclusionOperators, SpectrumOptions};
        let cell = MaterialCell::new(
            8,
            Shape::Box { center: [0.5; 3], half: [0.25; 3] },
            Permittivity::Constant(1.0),
            Permittivity::Constant(1.0),
        );
        let a = assemble_a_hom(&cell, &CellOptions::default()).unwrap().a;
        let ops_ = InclusionOperators::new(&cell).unwrap();
        let k = ops_.complement_dim();
        let spec = solve_resonances_with(&ops_, &SpectrumOptions { k, method: EigenMethod::Dense, ..Default::default() }).unwrap();
        let ev = GammaEvaluator::new(spec, ops_, 1e-8).unwrap();
        let frame = mode_frame(&a, [1, 0, 0]).unwrap();
        let hi = (1.5 * ev.poles[0].alpha).sqrt();
        let br = solve_branch(&frame, &ev, (0.0, hi), &ScanOptions::default()).unwrap();
        assert!(!br.roots.is_empty());
        for r in &br.roots {
            let tf = reconstruct_eigenfunction(&frame, &ev, r.omega, r.uhat[0]).unwrap();
            assert!(tf.div_residual < 1e-10, "{}", tf.div_residual);
            assert!(tf.cell_residual < 1e-6, "{}", tf.cell_residual);
        }
        assert!(reconstruct_eigenfunction(&frame, &ev, 0.5 * br.roots[0].omega, br.roots[0].uhat[0]).is_err());
        // small omega: profile tends to the constant u
        let w = 1e-3;
        let u = [0.0, 1.0, 0.0];
        let d = ev.gamma_direct(w).unwrap();
        let bf = ev.b_fields(&d).unwrap();
        let dev = w * w * bf[1].data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(dev < 1e-5 * norm(&u));
    }
}
