//! Periodic Yee grid on the unit cube.
//!
//! Node `(i,j,k)` sits at `h(i,j,k)`. The x-edge with index `(i,j,k)` joins
//! nodes `(i,j,k)` and `(i+1,j,k)`; the x-face with index `(i,j,k)` has
//! normal `e_1` and separates cells `(i-1,j,k)` and `(i,j,k)`. Cell `(i,j,k)`
//! is centred at `h(i+1/2,j+1/2,k+1/2)`. Vector fields store the three
//! components back to back, each in `i`-fastest order.

mod fft;
mod green;
pub mod ops;

pub use fft::Fft3;
pub use green::{green_convolve, hessian_green_apply, leray_project, Spectral};

use crate::error::{Error, Result};

/// Uniform periodic grid with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    pub n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Self {
        Grid { n }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of points of one scalar layout, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Quadrature weight of one grid entity, `h^3`.
    pub fn vol(&self) -> f64 {
        self.h().powi(3)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    /// Index with periodic wrap for signed offsets.
    #[inline]
    pub fn idx_wrap(&self, i: isize, j: isize, k: isize) -> usize {
        let n = self.n as isize;
        self.idx(i.rem_euclid(n) as usize, j.rem_euclid(n) as usize, k.rem_euclid(n) as usize)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    pub fn node_pos(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.ijk(idx);
        let h = self.h();
        [i as f64 * h, j as f64 * h, k as f64 * h]
    }

    pub fn cell_pos(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.ijk(idx);
        let h = self.h();
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h]
    }

    /// Midpoint of the edge of direction `c` with index `idx`.
    pub fn edge_pos(&self, c: usize, idx: usize) -> [f64; 3] {
        let mut p = self.node_pos(idx);
        p[c] += 0.5 * self.h();
        p
    }

    /// Midpoint of the face with normal `c` and index `idx`.
    pub fn face_pos(&self, c: usize, idx: usize) -> [f64; 3] {
        let mut p = self.cell_pos(idx);
        p[c] -= 0.5 * self.h();
        p
    }

    /// The two cells separated by face `(c, idx)`.
    pub fn face_cells(&self, c: usize, idx: usize) -> [usize; 2] {
        let [i, j, k] = self.ijk(idx);
        let mut o = [i as isize, j as isize, k as isize];
        o[c] -= 1;
        [self.idx_wrap(o[0], o[1], o[2]), idx]
    }

    /// The four cells sharing edge `(c, idx)`.
    pub fn edge_cells(&self, c: usize, idx: usize) -> [usize; 4] {
        let [i, j, k] = self.ijk(idx);
        let (a, b) = ((c + 1) % 3, (c + 2) % 3);
        let base = [i as isize, j as isize, k as isize];
        let mut out = [0; 4];
        for (t, (da, db)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            let mut o = base;
            o[a] -= da;
            o[b] -= db;
            out[t] = self.idx_wrap(o[0], o[1], o[2]);
        }
        out
    }

    /// The eight cells sharing node `idx`.
    pub fn node_cells(&self, idx: usize) -> [usize; 8] {
        let [i, j, k] = self.ijk(idx);
        let mut out = [0; 8];
        for t in 0..8 {
            out[t] = self.idx_wrap(
                i as isize - (t & 1) as isize,
                j as isize - ((t >> 1) & 1) as isize,
                k as isize - ((t >> 2) & 1) as isize,
            );
        }
        out
    }

    /// End node of edge `(c, idx)` (the start node has index `idx`).
    pub fn edge_end(&self, c: usize, idx: usize) -> usize {
        let [i, j, k] = self.ijk(idx);
        let mut o = [i as isize, j as isize, k as isize];
        o[c] += 1;
        self.idx_wrap(o[0], o[1], o[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarLoc {
    Nodes,
    Cells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorLoc {
    Edges,
    Faces,
}

/// Scalar grid function on nodes or cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub loc: ScalarLoc,
    pub data: Vec<f64>,
}

/// Vector grid function on edges or faces, components stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub loc: VectorLoc,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid, loc: ScalarLoc) -> Self {
        ScalarField { grid, loc, data: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, loc: ScalarLoc, f: impl Fn([f64; 3]) -> f64) -> Self {
        let data = (0..grid.len())
            .map(|i| match loc {
                ScalarLoc::Nodes => f(grid.node_pos(i)),
                ScalarLoc::Cells => f(grid.cell_pos(i)),
            })
            .collect();
        ScalarField { grid, loc, data }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    fn expect(&self, loc: ScalarLoc) -> Result<()> {
        if self.loc != loc || self.data.len() != self.grid.len() {
            return Err(Error::Layout(format!("expected scalar on {loc:?}, got {:?}", self.loc)));
        }
        Ok(())
    }
}

impl VectorField {
    pub fn zeros(grid: Grid, loc: VectorLoc) -> Self {
        VectorField { grid, loc, data: vec![0.0; 3 * grid.len()] }
    }

    pub fn from_fn(grid: Grid, loc: VectorLoc, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let m = grid.len();
        let mut data = vec![0.0; 3 * m];
        for c in 0..3 {
            for i in 0..m {
                let p = match loc {
                    VectorLoc::Edges => grid.edge_pos(c, i),
                    VectorLoc::Faces => grid.face_pos(c, i),
                };
                data[c * m + i] = f(p)[c];
            }
        }
        VectorField { grid, loc, data }
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let m = self.grid.len();
        &self.data[c * m..(c + 1) * m]
    }

    /// Discrete integral of each component, `h^3 * sum`.
    pub fn integral(&self) -> [f64; 3] {
        let v = self.grid.vol();
        [0, 1, 2].map(|c| self.comp(c).iter().sum::<f64>() * v)
    }

    fn expect(&self, loc: VectorLoc) -> Result<()> {
        if self.loc != loc || self.data.len() != 3 * self.grid.len() {
            return Err(Error::Layout(format!("expected vector on {loc:?}, got {:?}", self.loc)));
        }
        Ok(())
    }
}

/// Discrete gradient, nodes to edges.
pub fn grad_node(p: &ScalarField) -> Result<VectorField> {
    p.expect(ScalarLoc::Nodes)?;
    let mut out = VectorField::zeros(p.grid, VectorLoc::Edges);
    ops::grad_node(p.grid.n, &p.data, &mut out.data);
    Ok(out)
}

/// Discrete curl, edges to faces.
pub fn curl_edge(u: &VectorField) -> Result<VectorField> {
    u.expect(VectorLoc::Edges)?;
    let mut out = VectorField::zeros(u.grid, VectorLoc::Faces);
    ops::curl_edge(u.grid.n, &u.data, &mut out.data);
    Ok(out)
}

/// Discrete curl, faces to edges; the transpose of [`curl_edge`].
pub fn curl_face(v: &VectorField) -> Result<VectorField> {
    v.expect(VectorLoc::Faces)?;
    let mut out = VectorField::zeros(v.grid, VectorLoc::Edges);
    ops::curl_face(v.grid.n, &v.data, &mut out.data);
    Ok(out)
}

/// Discrete divergence, faces to cells.
pub fn div_face(v: &VectorField) -> Result<ScalarField> {
    v.expect(VectorLoc::Faces)?;
    let mut out = ScalarField::zeros(v.grid, ScalarLoc::Cells);
    ops::div_face(v.grid.n, &v.data, &mut out.data);
    Ok(out)
}

/// Discrete divergence, edges to nodes; equals `-grad_node^T`.
pub fn div_edge(u: &VectorField) -> Result<ScalarField> {
    u.expect(VectorLoc::Edges)?;
    let mut out = ScalarField::zeros(u.grid, ScalarLoc::Nodes);
    ops::div_edge(u.grid.n, &u.data, &mut out.data);
    Ok(out)
}

/// Shift a field by whole grid steps (periodic translation).
pub fn translate(data: &[f64], grid: Grid, ncomp: usize, s: [isize; 3]) -> Vec<f64> {
    let m = grid.len();
    let mut out = vec![0.0; data.len()];
    for c in 0..ncomp {
        for idx in 0..m {
            let [i, j, k] = grid.ijk(idx);
            let t = grid.idx_wrap(i as isize + s[0], j as isize + s[1], k as isize + s[2]);
            out[c * m + t] = data[c * m + idx];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm, random_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rand_vec_field(g: Grid, loc: VectorLoc, rng: &mut ChaCha8Rng) -> VectorField {
        VectorField { grid: g, loc, data: random_vec(3 * g.len(), rng) }
    }

    fn rand_scalar(g: Grid, loc: ScalarLoc, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField { grid: g, loc, data: random_vec(g.len(), rng) }
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn constant_fields_have_zero_curl_and_gradient() {
        let g = Grid::new(8);
        let u = VectorField::from_fn(g, VectorLoc::Edges, |_| [1.0, -2.0, 0.5]);
        assert!(max_abs(&curl_edge(&u).unwrap().data) < 1e-12);
        let p = ScalarField::from_fn(g, ScalarLoc::Nodes, |_| 3.0);
        assert!(max_abs(&grad_node(&p).unwrap().data) < 1e-12);
    }

    #[test]
    fn exact_identities_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [8, 16] {
            let g = Grid::new(n);
            let scale = (n * n) as f64;
            for _ in 0..10 {
                let u = rand_vec_field(g, VectorLoc::Edges, &mut rng);
                let dc = div_face(&curl_edge(&u).unwrap()).unwrap();
                assert!(max_abs(&dc.data) <= 1e-12 * scale);
                let p = rand_scalar(g, ScalarLoc::Nodes, &mut rng);
                let cg = curl_edge(&grad_node(&p).unwrap()).unwrap();
                assert!(max_abs(&cg.data) <= 1e-12 * scale);
                let v = rand_vec_field(g, VectorLoc::Faces, &mut rng);
                let lhs = dot(&curl_edge(&u).unwrap().data, &v.data);
                let rhs = dot(&u.data, &curl_face(&v).unwrap().data);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0) * n as f64);
                // div_edge = -grad_node^T
                let lhs = dot(&grad_node(&p).unwrap().data, &u.data);
                let rhs = -dot(&p.data, &div_edge(&u).unwrap().data);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0) * n as f64);
            }
        }
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let g = Grid::new(8);
        let f = VectorField::zeros(g, VectorLoc::Faces);
        assert!(matches!(curl_edge(&f), Err(Error::Layout(_))));
        let e = VectorField::zeros(g, VectorLoc::Edges);
        assert!(matches!(div_face(&e), Err(Error::Layout(_))));
        let c = ScalarField::zeros(g, ScalarLoc::Cells);
        assert!(matches!(grad_node(&c), Err(Error::Layout(_))));
    }

    #[test]
    fn plane_wave_curl_is_second_order() {
        // u = e_2 cos(2 pi x_1), curl u = -2 pi sin(2 pi x_1) e_3
        let err = |n: usize| {
            let g = Grid::new(n);
            let u = VectorField::from_fn(g, VectorLoc::Edges, |p| [0.0, (2.0 * PI * p[0]).cos(), 0.0]);
            let c = curl_edge(&u).unwrap();
            let exact = VectorField::from_fn(g, VectorLoc::Faces, |p| [0.0, 0.0, -2.0 * PI * (2.0 * PI * p[0]).sin()]);
            let d: Vec<f64> = c.data.iter().zip(&exact.data).map(|(a, b)| a - b).collect();
            max_abs(&d)
        };
        // oracle: the discrete curl is the exact one times sinc(pi h)
        let oracle = |n: usize| {
            let x = PI / n as f64;
            let peak = (0..n).map(|i| (2.0 * PI * (i as f64 + 0.5) / n as f64).sin().abs()).fold(0.0, f64::max);
            2.0 * PI * (1.0 - x.sin() / x) * peak
        };
        for n in [16, 32] {
            assert!((err(n) - oracle(n)).abs() < 1e-12, "{n}");
        }
        let ratio = err(16) / err(32);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn laplacian_of_sine_matches_symbol() {
        let g = Grid::new(8);
        let p = ScalarField::from_fn(g, ScalarLoc::Nodes, |x| (2.0 * PI * x[0]).sin());
        let lap = div_edge(&grad_node(&p).unwrap()).unwrap();
        let sym = 4.0 * 64.0 * (PI / 8.0).sin().powi(2);
        for (l, v) in lap.data.iter().zip(&p.data) {
            assert!((l + sym * v).abs() < 1e-12);
        }
    }

    #[test]
    fn green_solve_identities() {
        let g = Grid::new(8);
        let one = ScalarField::from_fn(g, ScalarLoc::Nodes, |_| 1.0);
        assert!(max_abs(&green_convolve(&one).unwrap().data) < 1e-14);
        let c = ScalarField::from_fn(g, ScalarLoc::Nodes, |x| (2.0 * PI * x[0]).cos());
        let gc = green_convolve(&c).unwrap();
        let l1 = 4.0 * 64.0 * (PI / 8.0).sin().powi(2);
        for (a, b) in gc.data.iter().zip(&c.data) {
            assert!((a - b / l1).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [8, 16] {
            let g = Grid::new(n);
            for _ in 0..10 {
                let f = rand_scalar(g, ScalarLoc::Nodes, &mut rng);
                let u = green_convolve(&f).unwrap();
                assert!(u.mean().abs() < 1e-14);
                let lap = div_edge(&grad_node(&u).unwrap()).unwrap();
                let mean = f.mean();
                let worst = lap.data.iter().zip(&f.data).map(|(l, v)| (-l - (v - mean)).abs()).fold(0.0, f64::max);
                assert!(worst < 1e-12, "{worst}");
            }
        }
    }

    #[test]
    fn leray_map_kills_gradients_and_keeps_solenoidal_fields() {
        let g = Grid::new(8);
        let p = ScalarField::from_fn(g, ScalarLoc::Nodes, |x| (2.0 * PI * (x[0] + 2.0 * x[2])).sin());
        let w = grad_node(&p).unwrap();
        let r = leray_project(&w).unwrap();
        assert!(max_abs(&r.data) < 1e-12 * max_abs(&w.data));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = rand_vec_field(g, VectorLoc::Faces, &mut rng);
        let s = curl_face(&v).unwrap();
        let h = hessian_green_apply(&s).unwrap();
        assert!(max_abs(&h.data) < 1e-12 * max_abs(&s.data));
    }

    #[test]
    fn translation_commutes_with_operators() {
        let g = Grid::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = rand_vec_field(g, VectorLoc::Edges, &mut rng);
        let s = [3, -2, 5];
        let shifted = VectorField { data: translate(&u.data, g, 3, s), ..u.clone() };
        let a = translate(&curl_edge(&u).unwrap().data, g, 3, s);
        let b = curl_edge(&shifted).unwrap().data;
        assert_eq!(a, b);
        let a = translate(&hessian_green_apply(&u).unwrap().data, g, 3, s);
        let b = hessian_green_apply(&shifted).unwrap().data;
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm(&d) < 1e-12 * norm(&a));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn leray_map_is_a_divergence_free_projection(seed in 0u64..10_000, mask_frac in 0.1f64..0.9) {
            let g = Grid::new(8);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = rand_vec_field(g, VectorLoc::Edges, &mut rng);
            // restrict to a pseudo-random subset, standing in for a Q0 mask
            let keep = random_vec(w.data.len(), &mut rng);
            for (x, k) in w.data.iter_mut().zip(&keep) {
                if (k + 1.0) * 0.5 > mask_frac { *x = 0.0; }
            }
            let r = leray_project(&w).unwrap();
            let d = div_edge(&r).unwrap();
            proptest::prop_assert!(max_abs(&d.data) < 1e-12 * 64.0 * max_abs(&w.data).max(1e-300));
            let rr = leray_project(&r).unwrap();
            let diff: Vec<f64> = rr.data.iter().zip(&r.data).map(|(a, b)| a - b).collect();
            proptest::prop_assert!(norm(&diff) <= 1e-12 * norm(&r.data).max(1e-300));
            // orthogonal to gradients
            let q = rand_scalar(g, ScalarLoc::Nodes, &mut rng);
            let gq = grad_node(&q).unwrap();
            proptest::prop_assert!(dot(&r.data, &gq.data).abs() < 1e-10 * norm(&r.data) * norm(&gq.data));
        }
    }
}
