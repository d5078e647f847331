//! The periodic unit cell `Q = [0,1)^3`, its inclusion `Q0` and the
//! permittivity samplers, rasterised onto cell centres.

use crate::error::{Error, Result};
use crate::grid::{Grid, Spectral};
use evalexpr::{ContextWithMutableVariables, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

const CENTRE: [f64; 3] = [0.5, 0.5, 0.5];
const TIE: f64 = 1e-12;

/// Inclusion shapes. `Empty` gives a homogeneous cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Empty,
    Ball { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half: [f64; 3] },
    /// `axis` is 0, 1 or 2.
    Cylinder { axis: usize, center: [f64; 3], radius: f64, half_height: f64 },
}

impl Shape {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Shape::Empty => false,
            Shape::Ball { center, radius } => {
                let d2: f64 = (0..3).map(|i| (p[i] - center[i]).powi(2)).sum();
                d2 <= radius * radius * (1.0 + TIE)
            }
            Shape::Box { center, half } => (0..3).all(|i| (p[i] - center[i]).abs() <= half[i] * (1.0 + TIE)),
            Shape::Cylinder { axis, center, radius, half_height } => {
                let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                let r2 = (p[a] - center[a]).powi(2) + (p[b] - center[b]).powi(2);
                r2 <= radius * radius * (1.0 + TIE) && (p[*axis] - center[*axis]).abs() <= half_height * (1.0 + TIE)
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`, `None` for the empty shape.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let ext = match self {
            Shape::Empty => return None,
            Shape::Ball { radius, .. } => [*radius; 3],
            Shape::Box { half, .. } => *half,
            Shape::Cylinder { axis, radius, half_height, .. } => {
                let mut e = [*radius; 3];
                e[*axis] = *half_height;
                e
            }
        };
        let c = self.center();
        Some(([0, 1, 2].map(|i| c[i] - ext[i]), [0, 1, 2].map(|i| c[i] + ext[i])))
    }

    fn center(&self) -> [f64; 3] {
        match self {
            Shape::Empty => CENTRE,
            Shape::Ball { center, .. } | Shape::Box { center, .. } | Shape::Cylinder { center, .. } => *center,
        }
    }

    fn rotated(&self, rot: Rotation) -> Shape {
        match self {
            Shape::Empty => Shape::Empty,
            Shape::Ball { center, radius } => Shape::Ball { center: rot.apply(*center), radius: *radius },
            Shape::Box { center, half } => Shape::Box { center: rot.apply(*center), half: rot.permute_extent(*half) },
            Shape::Cylinder { axis, center, radius, half_height } => Shape::Cylinder {
                axis: rot.map_axis(*axis),
                center: rot.apply(*center),
                radius: *radius,
                half_height: *half_height,
            },
        }
    }
}

/// Rotation about the cell centre by `quarter_turns * pi/2` around
/// coordinate axis `axis` (0, 1 or 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rotation {
    pub axis: usize,
    pub quarter_turns: u8,
}

impl Rotation {
    pub fn half_turn(axis: usize) -> Self {
        Rotation { axis, quarter_turns: 2 }
    }

    pub fn quarter_turn(axis: usize) -> Self {
        Rotation { axis, quarter_turns: 1 }
    }

    /// Parse tags such as `"pi:1"` or `"pi/2:3"` (axes numbered from 1).
    pub fn parse(tag: &str) -> Result<Self> {
        let (ang, ax) = tag
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("symmetry tag '{tag}' must look like 'pi:1' or 'pi/2:3'")))?;
        let axis: usize = ax
            .trim()
            .parse()
            .ok()
            .filter(|a| (1..=3).contains(a))
            .ok_or_else(|| Error::Config(format!("bad axis in symmetry tag '{tag}'")))?;
        let quarter_turns = match ang.trim() {
            "pi" => 2,
            "pi/2" => 1,
            _ => return Err(Error::Config(format!("bad angle in symmetry tag '{tag}'"))),
        };
        Ok(Rotation { axis: axis - 1, quarter_turns })
    }

    /// 3x3 orthogonal matrix `sigma`.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (c, e) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].iter().enumerate() {
            let v = self.apply_vec(*e);
            for r in 0..3 {
                m[r][c] = v[r];
            }
        }
        m
    }

    /// Rotate a direction vector.
    pub fn apply_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let (a, b) = ((self.axis + 1) % 3, (self.axis + 2) % 3);
        let mut out = v;
        for _ in 0..self.quarter_turns % 4 {
            let (va, vb) = (out[a], out[b]);
            out[a] = -vb;
            out[b] = va;
        }
        out
    }

    /// Rotate a point about the cell centre.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.apply_vec([p[0] - CENTRE[0], p[1] - CENTRE[1], p[2] - CENTRE[2]]);
        [v[0] + CENTRE[0], v[1] + CENTRE[1], v[2] + CENTRE[2]]
    }

    pub fn inverse(&self) -> Rotation {
        Rotation { axis: self.axis, quarter_turns: (4 - self.quarter_turns % 4) % 4 }
    }

    fn map_axis(&self, axis: usize) -> usize {
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let v = self.apply_vec(e);
        (0..3).max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs())).unwrap()
    }

    fn permute_extent(&self, ext: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, e) in ext.iter().enumerate() {
            out[self.map_axis(i)] = *e;
        }
        out
    }
}

impl fmt::Display for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ang = if self.quarter_turns % 2 == 0 { "pi" } else { "pi/2" };
        write!(f, "{ang}:{}", self.axis + 1)
    }
}

/// Scalar permittivity sampler: a constant or an expression in `x, y, z`.
#[derive(Clone)]
pub enum Permittivity {
    Constant(f64),
    Expr { source: String, tree: Arc<Node>, frame: Vec<Rotation> },
}

impl fmt::Debug for Permittivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Permittivity::Constant(c) => write!(f, "Constant({c})"),
            Permittivity::Expr { source, frame, .. } => write!(f, "Expr({source:?}, {frame:?})"),
        }
    }
}

impl PartialEq for Permittivity {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Permittivity::Constant(a), Permittivity::Constant(b)) => a == b,
            (Permittivity::Expr { source: a, frame: fa, .. }, Permittivity::Expr { source: b, frame: fb, .. }) => {
                a == b && fa == fb
            }
            _ => false,
        }
    }
}

impl Permittivity {
    pub fn expr(source: &str) -> Result<Self> {
        let tree = evalexpr::build_operator_tree(source)
            .map_err(|e| Error::Config(format!("permittivity expression '{source}': {e}")))?;
        let p = Permittivity::Expr { source: source.to_string(), tree: Arc::new(tree), frame: Vec::new() };
        p.try_sample(CENTRE)?;
        Ok(p)
    }

    pub fn sample(&self, p: [f64; 3]) -> f64 {
        self.try_sample(p).unwrap_or(f64::NAN)
    }

    fn try_sample(&self, p: [f64; 3]) -> Result<f64> {
        match self {
            Permittivity::Constant(c) => Ok(*c),
            Permittivity::Expr { source, tree, frame } => {
                // undo the accumulated rotations: eps'(y) = eps(sigma^{-1} y)
                let mut q = p;
                for r in frame.iter().rev() {
                    q = r.inverse().apply(q);
                }
                let mut ctx = HashMapContext::new();
                for (name, v) in ["x", "y", "z"].iter().zip(q) {
                    ctx.set_value((*name).into(), Value::Float(v))
                        .map_err(|e| Error::Config(e.to_string()))?;
                }
                tree.eval_number_with_context(&ctx)
                    .map_err(|e| Error::Config(format!("permittivity expression '{source}': {e}")))
            }
        }
    }

    fn rotated(&self, rot: Rotation) -> Self {
        match self {
            Permittivity::Constant(c) => Permittivity::Constant(*c),
            Permittivity::Expr { source, tree, frame } => {
                let mut frame = frame.clone();
                frame.push(rot);
                Permittivity::Expr { source: source.clone(), tree: tree.clone(), frame }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Permittivity::Constant(_))
    }
}

/// Unit cell description.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialCell {
    pub n: usize,
    pub shape: Shape,
    pub eps0: Permittivity,
    pub eps1: Permittivity,
    pub symmetry_tags: Vec<Rotation>,
    /// Gaussian smoothing radius applied to the matrix fraction used in the
    /// cell-problem weights; zero keeps the sharp staircase.
    pub smoothing: f64,
}

impl MaterialCell {
    pub fn new(n: usize, shape: Shape, eps0: Permittivity, eps1: Permittivity) -> Self {
        MaterialCell { n, shape, eps0, eps1, symmetry_tags: Vec::new(), smoothing: 0.0 }
    }

    pub fn with_symmetry(mut self, tags: &[Rotation]) -> Self {
        self.symmetry_tags = tags.to_vec();
        self
    }

    pub fn with_resolution(&self, n: usize) -> Self {
        MaterialCell { n, ..self.clone() }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.n)
    }

    /// `1/eps0` at a point.
    pub fn inv_eps0(&self, p: [f64; 3]) -> f64 {
        1.0 / self.eps0.sample(p)
    }

    pub fn inv_eps1(&self, p: [f64; 3]) -> f64 {
        1.0 / self.eps1.sample(p)
    }
}

/// Cell-centred inclusion indicator `chi0`; `chi1 = 1 - chi0`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub grid: Grid,
    pub chi0: Vec<bool>,
}

impl IndicatorField {
    pub fn chi1(&self, cell: usize) -> f64 {
        if self.chi0[cell] {
            0.0
        } else {
            1.0
        }
    }

    /// `sum chi0 * h^3`.
    pub fn volume(&self) -> f64 {
        self.chi0.iter().filter(|&&b| b).count() as f64 * self.grid.vol()
    }

    pub fn count(&self) -> usize {
        self.chi0.iter().filter(|&&b| b).count()
    }

    /// Matrix fraction per cell: `chi1`, or `chi1` convolved with a periodic
    /// Gaussian of standard deviation `radius`.
    pub fn matrix_fraction(&self, radius: f64) -> Vec<f64> {
        let mut f: Vec<f64> = (0..self.grid.len()).map(|i| self.chi1(i)).collect();
        if radius > 0.0 {
            let sp = Spectral::new(self.grid);
            // heat kernel exp(-t lambda) with t = radius^2 / 2
            let t = 0.5 * radius * radius;
            sp.apply_pair(&mut f, None, |l| (-t * l).exp());
            for v in f.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
        f
    }
}

/// Check the cell's shape and samplers against the grid.
pub fn validate_cell(cell: &MaterialCell) -> Result<()> {
    if cell.n < 8 {
        return Err(Error::Geometry(format!("resolution {} below the minimum of 8", cell.n)));
    }
    let h = 1.0 / cell.n as f64;
    if let Some((lo, hi)) = cell.shape.bounds() {
        let gap = (0..3).map(|i| lo[i].min(1.0 - hi[i])).fold(f64::INFINITY, f64::min);
        if gap < 2.0 * h - 1e-12 {
            return Err(Error::Geometry(format!(
                "inclusion {:?} lies within {gap:.4} of the cell boundary (need at least 2 cells = {:.4})",
                cell.shape,
                2.0 * h
            )));
        }
    }
    if cell.smoothing < 0.0 || !cell.smoothing.is_finite() {
        return Err(Error::Geometry("smoothing radius must be finite and nonnegative".into()));
    }
    for (name, eps) in [("eps0", &cell.eps0), ("eps1", &cell.eps1)] {
        let g = cell.grid();
        for idx in (0..g.len()).step_by(7.max(g.len() / 512)) {
            let v = eps.try_sample(g.cell_pos(idx))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Geometry(format!("{name} = {v} at {:?} is not positive", g.cell_pos(idx))));
            }
        }
    }
    Ok(())
}

/// Rasterise the inclusion: a cell is inside iff its centre is.
pub fn build_indicator(cell: &MaterialCell) -> Result<IndicatorField> {
    validate_cell(cell)?;
    let grid = cell.grid();
    let chi0 = (0..grid.len()).map(|i| cell.shape.contains(grid.cell_pos(i))).collect();
    Ok(IndicatorField { grid, chi0 })
}

/// Conjugate the cell by a rotation about its centre.
pub fn rotate_cell(cell: &MaterialCell, rot: Rotation) -> Result<MaterialCell> {
    if rot.axis > 2 || !matches!(rot.quarter_turns, 1 | 2) {
        return Err(Error::Geometry(format!("unsupported rotation {rot:?}")));
    }
    Ok(MaterialCell {
        n: cell.n,
        shape: cell.shape.rotated(rot),
        eps0: cell.eps0.rotated(rot),
        eps1: cell.eps1.rotated(rot),
        symmetry_tags: cell.symmetry_tags.clone(),
        smoothing: cell.smoothing,
    })
}

/// Permutation of cell indices induced by a rotation: `out[idx]` is the
/// index of the cell that `idx` is carried to.
pub fn rotate_cell_index(grid: Grid, rot: Rotation) -> Vec<usize> {
    let n = grid.n as isize;
    (0..grid.len())
        .map(|idx| {
            let p = grid.cell_pos(idx);
            let q = rot.apply(p);
            let c = [0, 1, 2].map(|i| ((q[i] * n as f64 - 0.5).round() as isize).rem_euclid(n));
            grid.idx(c[0] as usize, c[1] as usize, c[2] as usize)
        })
        .collect()
}
