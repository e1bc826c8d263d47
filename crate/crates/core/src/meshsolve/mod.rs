//! Monotone wide-stencil solver for `F(D²u) = f` on uniform square grids, manufactured
//! problems, and the comparison of `F_μ` solutions against recession solutions.

mod experiment;
mod solve;
mod stencil;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::io::{csv_table, fmt_num};

pub use experiment::{
    approximation_experiment, manufactured_problem, mms_convergence, ApproxResult, ManufacturedCase,
    ManufacturedProblem, MmsRow, MmsStudy,
};
pub use solve::{discrete_operator, residual_sup, solve_dirichlet, SolveOptions, SolveResult};
pub use stencil::{directional_second_difference, hessian_eigen_estimates, Stencil};

pub const DEFAULT_STENCIL_K: usize = 8;

/// `n` interior points per axis on `[a, b]²`, spacing `h = (b − a)/(n + 1)`, plus a one-node
/// boundary ring. Node `(i, j)` sits at `(a + i·h, a + j·h)` for `0 ≤ i, j ≤ n + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub stencil_k: usize,
}

impl GridSpec {
    pub fn new(n: usize, a: f64, b: f64, stencil_k: usize) -> Result<Self> {
        if n < 8 {
            return Err(LabError::InvalidParameter(format!("grid needs n >= 8, got {n}")));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(LabError::InvalidParameter(format!("empty domain [{a}, {b}]")));
        }
        if stencil_k < 2 {
            return Err(LabError::InvalidParameter(format!("stencil needs K >= 2 direction pairs, got {stencil_k}")));
        }
        Ok(Self { n, a, b, stencil_k })
    }

    /// Grid with spacing `h` exactly when `(b − a)/h` is an integer.
    pub fn with_spacing(h: f64, a: f64, b: f64) -> Result<Self> {
        let cells = ((b - a) / h).round();
        if !(cells >= 9.0) || ((b - a) / cells - h).abs() > 1e-12 * h {
            return Err(LabError::InvalidParameter(format!("spacing {h} does not divide [{a}, {b}]")));
        }
        Self::new(cells as usize - 1, a, b, DEFAULT_STENCIL_K)
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / (self.n + 1) as f64
    }

    /// Nodes per axis including the ring.
    pub fn side(&self) -> usize {
        self.n + 2
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.side() + i
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i == self.n + 1 {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coord(i), self.coord(j)]
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        (1..=self.n).contains(&i) && (1..=self.n).contains(&j)
    }

    /// `θ_m = mπ/(2K)` for `m = 0..2K`: the `K` pairs `(θ_k, θ_k + π/2)`.
    pub fn directions(&self) -> Vec<f64> {
        (0..2 * self.stencil_k)
            .map(|m| m as f64 * std::f64::consts::PI / (2 * self.stencil_k) as f64)
            .collect()
    }
}

/// Node values including the boundary ring, row-major in `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Self {
        let side = grid.side();
        let values = (0..grid.len()).map(|k| f(grid.point(k % side, k / side))).collect();
        Self { grid, values }
    }

    /// Ring values from `f`, interior zero.
    pub fn boundary_from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.side() {
            for i in 0..grid.side() {
                if !grid.is_interior(i, j) {
                    out.values[grid.index(i, j)] = f(grid.point(i, j));
                }
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn interior(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.grid.n;
        (1..=n).flat_map(move |j| (1..=n).map(move |i| (i, j, self.get(i, j))))
    }

    pub fn interior_sup(&self) -> f64 {
        self.interior().fold(0.0, |m, (_, _, v)| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Rotation by 90° counterclockwise about the domain centre: new `(i, j)` takes old
    /// `(j, N − i)`.
    pub fn rotate90(&self) -> Self {
        let last = self.grid.n + 1;
        let mut out = Self::zeros(self.grid);
        for j in 0..=last {
            for i in 0..=last {
                out.set(i, j, self.get(j, last - i));
            }
        }
        out
    }

    /// Sup of `|self − other|` over interior nodes inside `[lo, hi]²`.
    pub fn sup_diff_on(&self, other: &Self, lo: f64, hi: f64) -> Result<f64> {
        if self.grid != other.grid {
            return Err(LabError::InvalidParameter("fields live on different grids".into()));
        }
        let eps = 1e-12 * (self.grid.b - self.grid.a);
        Ok(self
            .interior()
            .filter(|&(i, j, _)| {
                let [x, y] = self.grid.point(i, j);
                x >= lo - eps && x <= hi + eps && y >= lo - eps && y <= hi + eps
            })
            .fold(0.0, |m, (i, j, v)| m.max((v - other.get(i, j)).abs())))
    }

    /// Columns `x1,x2,value`, one row per node including the ring.
    pub fn to_csv(&self) -> String {
        let g = self.grid;
        let rows: Vec<Vec<String>> = (0..g.len())
            .map(|k| {
                let [x, y] = g.point(k % g.side(), k / g.side());
                vec![fmt_num(x), fmt_num(y), fmt_num(self.values[k])]
            })
            .collect();
        csv_table(&["x1", "x2", "value"], &rows)
    }
}

/// Named Dirichlet data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum BoundaryProfile {
    Zero,
    /// `a1·x1 + a2·x2 + c`.
    Affine { a1: f64, a2: f64, c: f64 },
    TraceOfCase { case: ManufacturedCase },
}

impl BoundaryProfile {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Affine { a1, a2, c } => a1 * x[0] + a2 * x[1] + c,
            Self::TraceOfCase { case } => case.exact(x),
        }
    }

    pub fn field(&self, grid: GridSpec) -> ScalarField {
        ScalarField::boundary_from_fn(grid, |x| self.value(x))
    }
}
