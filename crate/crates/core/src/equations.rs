//! Discretization of integral and differential equations into linear
//! systems, and their solution on the tiled loop.
//!
//! - Fredholm equations of the second kind use the midpoint rectangle rule
//!   on the same nodes in `t` and `s`: `(I − h·K)·f = c`.
//! - Linear 2nd-order ODEs `y″ + p·y′ + q·y = r` use central differences on
//!   `n` interior nodes with Dirichlet ends folded into the right-hand side.
//! - The Poisson equation `Δu = f` on the unit square uses the 5-point
//!   stencil with homogeneous Dirichlet boundary.

use serde::{Deserialize, Serialize};

use crate::block::{
    assemble, block_invert, block_multiply, encoding_exponent, pad, pad_and_partition, partition,
    BlockConfig, PadMode,
};
use crate::error::{Error, Result};
use crate::functions::{Fn1, Fn2, Named1, Named2};
use crate::linalg::{dense_solve, vector_accuracy_percent, ColumnVector, Matrix};
use crate::rng::StreamKey;

/// Uniform 1-D grid on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
    points: Vec<f64>,
}

impl Grid1D {
    fn check(a: f64, b: f64, n: usize) -> Result<()> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidConfig(format!("need a < b, got [{a}, {b}]")));
        }
        if n < 2 {
            return Err(Error::InvalidConfig(format!("need n >= 2, got {n}")));
        }
        Ok(())
    }

    /// Midpoints of `n` equal subintervals; `h = (b − a)/n`.
    pub fn midpoints(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::check(a, b, n)?;
        let h = (b - a) / n as f64;
        let points = (0..n).map(|i| a + (i as f64 + 0.5) * h).collect();
        Ok(Self { a, b, n, h, points })
    }

    /// `n` interior nodes of `n + 1` equal subintervals; `h = (b − a)/(n + 1)`.
    pub fn interior(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::check(a, b, n)?;
        let h = (b - a) / (n + 1) as f64;
        let points = (1..=n).map(|i| a + i as f64 * h).collect();
        Ok(Self { a, b, n, h, points })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Interior nodes of the unit square, `n` per side, spacing `1/(n + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    n: usize,
    h: f64,
}

impl Grid2D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("need n >= 2, got {n}")));
        }
        Ok(Self {
            n,
            h: 1.0 / (n + 1) as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn unknowns(&self) -> usize {
        self.n * self.n
    }

    /// Row of node `(i, j)`, both 0-based; `i` runs along `x` fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        ((i + 1) as f64 * self.h, (j + 1) as f64 * self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Fredholm,
    Ode,
    Poisson,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: Matrix,
    pub rhs: ColumnVector,
    pub provenance: Provenance,
}

impl LinearSystem {
    pub fn new(matrix: Matrix, rhs: ColumnVector, provenance: Provenance) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() != rhs.len() {
            return Err(Error::ShapeMismatch {
                op: "linear_system",
                left: matrix.shape(),
                right: (rhs.len(), 1),
            });
        }
        Ok(Self {
            matrix,
            rhs,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn dense_solution(&self) -> Result<ColumnVector> {
        dense_solve(&self.matrix, &self.rhs)
    }
}

/// `f(tᵢ) = c(tᵢ) + h·Σⱼ K(tᵢ, sⱼ)·f(sⱼ)` on midpoints.
pub fn assemble_fredholm(
    kernel: impl Fn(f64, f64) -> f64,
    input: impl Fn(f64) -> f64,
    grid: &Grid1D,
) -> LinearSystem {
    let t = grid.points();
    let n = grid.n();
    let matrix = Matrix::from_fn(n, n, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - grid.h() * kernel(t[i], t[j])
    });
    let rhs = ColumnVector::new(t.iter().map(|&ti| input(ti)).collect()).expect("finite input");
    LinearSystem {
        matrix,
        rhs,
        provenance: Provenance::Fredholm,
    }
}

/// Dirichlet data for [`assemble_ode`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Central differences for `y″ + p(x)·y′ + q(x)·y = r(x)` on `n` interior
/// nodes.
pub fn assemble_ode(
    p: impl Fn(f64) -> f64,
    q: impl Fn(f64) -> f64,
    r: impl Fn(f64) -> f64,
    bc: Boundary,
    n: usize,
) -> Result<LinearSystem> {
    let grid = Grid1D::interior(bc.x0, bc.x1, n)?;
    let h = grid.h();
    let mut matrix = Matrix::zeros(n, n);
    let mut rhs = Vec::with_capacity(n);
    for (i, &x) in grid.points().iter().enumerate() {
        let (pi, qi) = (p(x), q(x));
        let sub = 1.0 / (h * h) - pi / (2.0 * h);
        let sup = 1.0 / (h * h) + pi / (2.0 * h);
        matrix[(i, i)] = -2.0 / (h * h) + qi;
        let mut b = r(x);
        if i > 0 {
            matrix[(i, i - 1)] = sub;
        } else {
            b -= sub * bc.y0;
        }
        if i + 1 < n {
            matrix[(i, i + 1)] = sup;
        } else {
            b -= sup * bc.y1;
        }
        rhs.push(b);
    }
    LinearSystem::new(matrix, ColumnVector::new(rhs)?, Provenance::Ode)
}

/// 5-point Laplacian `Δu = f` on the unit square, zero boundary values.
pub fn assemble_poisson(source: impl Fn(f64, f64) -> f64, n: usize) -> Result<LinearSystem> {
    let grid = Grid2D::new(n)?;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let dim = grid.unknowns();
    let mut matrix = Matrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    for j in 0..n {
        for i in 0..n {
            let row = grid.index(i, j);
            matrix[(row, row)] = -4.0 * inv_h2;
            if i > 0 {
                matrix[(row, grid.index(i - 1, j))] = inv_h2;
            }
            if i + 1 < n {
                matrix[(row, grid.index(i + 1, j))] = inv_h2;
            }
            if j > 0 {
                matrix[(row, grid.index(i, j - 1))] = inv_h2;
            }
            if j + 1 < n {
                matrix[(row, grid.index(i, j + 1))] = inv_h2;
            }
            let (x, y) = grid.node(i, j);
            rhs[row] = source(x, y);
        }
    }
    LinearSystem::new(matrix, ColumnVector::new(rhs)?, Provenance::Poisson)
}

/// Fredholm equation of the second kind, as read from a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FredholmProblem {
    pub kernel: Fn2,
    pub input: Fn1,
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl FredholmProblem {
    /// `K(t, s) = 0.3·t·s`, `c(t) = t` on `[−1, 1]`.
    pub fn example(n: usize) -> Self {
        Self {
            kernel: Fn2::SeparablePoly {
                scale: 0.3,
                x: vec![0.0, 1.0],
                y: vec![0.0, 1.0],
            },
            input: Fn1::named(Named1::Identity),
            a: -1.0,
            b: 1.0,
            n,
        }
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::midpoints(self.a, self.b, self.n)
    }

    pub fn assemble(&self) -> Result<LinearSystem> {
        let grid = self.grid()?;
        Ok(assemble_fredholm(
            |t, s| self.kernel.eval(t, s),
            |t| self.input.eval(t),
            &grid,
        ))
    }
}

/// Linear 2nd-order boundary-value problem, as read from a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeProblem {
    pub p: Fn1,
    pub q: Fn1,
    pub r: Fn1,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub n: usize,
}

impl OdeProblem {
    /// `y″ + y = 0`, `y(0) = 0`, `y(1) = sin 1`; exact solution `sin x`.
    pub fn example(n: usize) -> Self {
        Self {
            p: Fn1::constant(0.0),
            q: Fn1::constant(1.0),
            r: Fn1::constant(0.0),
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1f64.sin(),
            n,
        }
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::interior(self.x0, self.x1, self.n)
    }

    pub fn assemble(&self) -> Result<LinearSystem> {
        assemble_ode(
            |x| self.p.eval(x),
            |x| self.q.eval(x),
            |x| self.r.eval(x),
            Boundary {
                x0: self.x0,
                x1: self.x1,
                y0: self.y0,
                y1: self.y1,
            },
            self.n,
        )
    }
}

/// Poisson problem on the unit square, as read from a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonProblem {
    pub source: Fn2,
    pub n: usize,
}

impl PoissonProblem {
    /// `Δu = sin(πx)·sin(πy)`.
    pub fn example(n: usize) -> Self {
        Self {
            source: Fn2::named(Named2::SinPiProduct),
            n,
        }
    }

    pub fn assemble(&self) -> Result<LinearSystem> {
        assemble_poisson(|x, y| self.source.eval(x, y), self.n)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub values: ColumnVector,
    /// Accuracy against a dense digital solve, when diagnostics are on.
    pub accuracy: Option<f64>,
    /// `‖A·R − I‖_F` of the (scaled, padded) inverse.
    pub inverse_residual: f64,
    /// Circulations of every base-case column solve.
    pub circulations: Vec<usize>,
}

/// Solves `A·u = f` by block inversion followed by a block product.
///
/// Both sides are multiplied by `±2⁻ᵉ` first: the power of two brings the
/// entries into the encodable range and the sign puts the spectrum of a
/// negative-definite stencil on the side Richardson iteration converges on.
/// The solution itself is unchanged by that scaling.
pub fn solve_system(
    sys: &LinearSystem,
    cfg: &BlockConfig,
    key: StreamKey,
    diagnostics: bool,
) -> Result<Solution> {
    let n = sys.dim();
    let trace: f64 = (0..n).map(|i| sys.matrix[(i, i)]).sum();
    let sign = if trace < 0.0 { -1.0 } else { 1.0 };
    let e = encoding_exponent(sys.matrix.max_abs());
    let factor = sign * (-e as f64).exp2();
    let a = sys.matrix.scale(factor);
    let f = sys.rhs.scale(factor);

    let grid = pad_and_partition(&a, PadMode::Identity);
    let inv = block_invert(&grid, cfg, key.child(0))?;
    let rhs_matrix = pad(&Matrix::new(n, 1, f.as_slice().to_vec())?, PadMode::Zero);
    let product = block_multiply(
        &inv.inverse,
        &partition(&rhs_matrix)?,
        &cfg.loop_cfg,
        key.child(1),
    )?;
    let values = ColumnVector::new(assemble(&product).column(0).as_slice()[..n].to_vec())?;

    // a zero reference solution has no relative accuracy
    let accuracy = if diagnostics {
        match vector_accuracy_percent(&values, &sys.dense_solution()?) {
            Ok(a) => Some(a),
            Err(Error::ZeroReference) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(Solution {
        values,
        accuracy,
        inverse_residual: inv.residual,
        circulations: inv.circulations,
    })
}
