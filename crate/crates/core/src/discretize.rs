//! Central-difference discretization of `u_t + b . grad u - eps lap u = f`
//! on the unit square with Dirichlet data, stabilized by artificial
//! viscosity on all scales and anti-diffusion on large scales:
//!
//! ```text
//! u' + b . grad_h u - (eps + eps0) lap_h u + eps0 K^T lap_h K u = g
//! ```
//!
//! where `K` is either `q` nearest-neighbour averages or the orthogonal
//! projection onto the bilinear functions of the mesh with width `2h`.
//! This is the system `u' + Au + Bu - Cu = g` with `A = (eps + eps0)(-lap_h)`,
//! `B = b . grad_h` and `C = eps0 K (-lap_h) K`.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::csv::{fmt_num, CsvTable};
use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::system::{validate_structure, Forcing, OdeSystem, SkewField, StructureReport, DEFAULT_STRUCTURE_TOL};

/// Uniform grid of `m x m` interior nodes on `[0,1]^2`, `h = 1/(m+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    m: usize,
}

impl Grid2D {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::UnsupportedGrid("need at least one interior node".into()));
        }
        Ok(Grid2D { m })
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn h(&self) -> f64 {
        1.0 / (self.m + 1) as f64
    }
    pub fn unknowns(&self) -> usize {
        self.m * self.m
    }
    /// Lexicographic index `j m + i`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.m + i
    }
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.h();
        ((i + 1) as f64 * h, (j + 1) as f64 * h)
    }

    /// Interior neighbours of `(i, j)` paired with the direction they lie in.
    fn neighbours(&self, i: usize, j: usize) -> impl Iterator<Item = (Direction, Option<(usize, usize)>)> {
        let m = self.m;
        [
            (Direction::East, (i + 1 < m).then(|| (i + 1, j))),
            (Direction::West, (i > 0).then(|| (i - 1, j))),
            (Direction::North, (j + 1 < m).then(|| (i, j + 1))),
            (Direction::South, (j > 0).then(|| (i, j - 1))),
        ]
        .into_iter()
    }

    /// Coordinates of the boundary point next to `(i, j)` in direction `d`.
    fn boundary_point(&self, i: usize, j: usize, d: Direction) -> (f64, f64) {
        let h = self.h();
        let (x, y) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
        match d {
            Direction::East => (x + h, y),
            Direction::West => (x - h, y),
            Direction::North => (x, y + h),
            Direction::South => (x, y - h),
        }
    }

    /// The boundary points reached by a five-point stencil (the ring without
    /// its corners), counter-clockwise from the south edge.
    pub fn boundary_points(&self) -> Vec<(f64, f64)> {
        let m = self.m;
        let h = self.h();
        let mut pts = Vec::with_capacity(4 * m);
        for i in 1..=m {
            pts.push((i as f64 * h, 0.0));
        }
        for j in 1..=m {
            pts.push((1.0, j as f64 * h));
        }
        for i in (1..=m).rev() {
            pts.push((i as f64 * h, 1.0));
        }
        for j in (1..=m).rev() {
            pts.push((0.0, j as f64 * h));
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    East,
    West,
    North,
    South,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AntiDiffusion {
    /// `K = S^q`, `S` the nearest-neighbour average.
    Averaging { q: u32 },
    /// `K = P_H`, orthogonal projection onto the coarse bilinear space.
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeParams {
    /// Advection angle in radians.
    pub theta: f64,
    pub epsilon: f64,
    pub epsilon0: f64,
    pub mode: AntiDiffusion,
}

impl PdeParams {
    pub fn b_field(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.epsilon0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon0 must be nonnegative, got {}",
                self.epsilon0
            )));
        }
        if let AntiDiffusion::Averaging { q: 0 } = self.mode {
            return Err(Error::InvalidParameter("averaging repetitions must be positive".into()));
        }
        Ok(())
    }

    /// Dirichlet data: 1 strictly north of the line through the centre with
    /// direction `b`, 0 on or south of it.
    pub fn boundary_value(&self, x: f64, y: f64) -> f64 {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        if (x - 0.5) * (-s) + (y - 0.5) * c > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

fn csr(n_rows: usize, n_cols: usize, entries: Vec<(usize, usize, f64)>) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n_rows, n_cols);
    for (i, j, v) in entries {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

/// Central differences `b_x (u_E - u_W)/2h + b_y (u_N - u_S)/2h` with the
/// boundary neighbours dropped. Skew-symmetric entry by entry.
pub fn assemble_convection(grid: &Grid2D, b_field: (f64, f64)) -> CsrMatrix<f64> {
    let m = grid.m;
    let half = 0.5 / grid.h();
    let (cx, cy) = (b_field.0 * half, b_field.1 * half);
    let mut e = Vec::with_capacity(4 * grid.unknowns());
    for j in 0..m {
        for i in 0..m {
            let p = grid.index(i, j);
            if cx != 0.0 && i + 1 < m {
                let q = grid.index(i + 1, j);
                e.push((p, q, cx));
                e.push((q, p, -cx));
            }
            if cy != 0.0 && j + 1 < m {
                let q = grid.index(i, j + 1);
                e.push((p, q, cy));
                e.push((q, p, -cy));
            }
        }
    }
    csr(grid.unknowns(), grid.unknowns(), e)
}

/// `coef * (-lap_h)`, the five-point Dirichlet Laplacian.
pub fn assemble_diffusion(grid: &Grid2D, coef: f64) -> CsrMatrix<f64> {
    let h2 = grid.h() * grid.h();
    let diag = coef * 4.0 / h2;
    let off = -coef / h2;
    let mut e = Vec::with_capacity(5 * grid.unknowns());
    for j in 0..grid.m {
        for i in 0..grid.m {
            let p = grid.index(i, j);
            e.push((p, p, diag));
            for (_, nb) in grid.neighbours(i, j) {
                if let Some((a, b)) = nb {
                    e.push((p, grid.index(a, b), off));
                }
            }
        }
    }
    csr(grid.unknowns(), grid.unknowns(), e)
}

/// `(4 u_ij + u_E + u_W + u_N + u_S) / 8` with missing neighbours taken as 0.
pub fn averaging_operator(grid: &Grid2D) -> CsrMatrix<f64> {
    let mut e = Vec::with_capacity(5 * grid.unknowns());
    for j in 0..grid.m {
        for i in 0..grid.m {
            let p = grid.index(i, j);
            e.push((p, p, 0.5));
            for (_, nb) in grid.neighbours(i, j) {
                if let Some((a, b)) = nb {
                    e.push((p, grid.index(a, b), 0.125));
                }
            }
        }
    }
    csr(grid.unknowns(), grid.unknowns(), e)
}

/// Orthogonal projector onto the bilinear interpolants of the mesh with
/// width `H = 2h`, kept in factored form `Pi G^{-1} Pi^T` where `Pi` is the
/// bilinear prolongation and `G = Pi^T Pi`.
#[derive(Debug, Clone)]
pub struct CoarseProjection {
    prolongation: CsrMatrix<f64>,
    restriction: CsrMatrix<f64>,
    gram_inverse: DMatrix<f64>,
}

impl CoarseProjection {
    pub fn new(grid: &Grid2D) -> Result<Self> {
        let m = grid.m;
        if !(m + 1).is_multiple_of(2) || m < 3 {
            return Err(Error::UnsupportedGrid(format!(
                "coarse projection needs an even number of cells and at least one coarse node, got m + 1 = {}",
                m + 1
            )));
        }
        let mc = (m - 1) / 2;
        // 1D weight of coarse node I (fine position 2(I+1)) at fine index i (position i+1)
        let w = |i: usize, ci: usize| -> f64 {
            let d = (i as i64 + 1) - 2 * (ci as i64 + 1);
            match d.abs() {
                0 => 1.0,
                1 => 0.5,
                _ => 0.0,
            }
        };
        let mut e = Vec::new();
        for cj in 0..mc {
            for ci in 0..mc {
                let col = cj * mc + ci;
                let (x0, y0) = (2 * ci + 1, 2 * cj + 1);
                for j in y0 - 1..=y0 + 1 {
                    for i in x0 - 1..=x0 + 1 {
                        let v = w(i, ci) * w(j, cj);
                        if v != 0.0 {
                            e.push((grid.index(i, j), col, v));
                        }
                    }
                }
            }
        }
        let prolongation = csr(grid.unknowns(), mc * mc, e);
        let restriction = prolongation.transpose();
        let pd = Operator::Sparse(prolongation.clone()).to_dense();
        let gram = pd.transpose() * &pd;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::UnsupportedGrid("coarse Gram matrix is not positive definite".into()))?;
        let inv = chol.inverse();
        let gram_inverse = (&inv + inv.transpose()) * 0.5;
        Ok(CoarseProjection {
            prolongation,
            restriction,
            gram_inverse,
        })
    }

    pub fn coarse_unknowns(&self) -> usize {
        self.prolongation.ncols()
    }

    pub fn prolongation(&self) -> &CsrMatrix<f64> {
        &self.prolongation
    }

    /// Full-weighting restriction `Pi^T / 4`.
    pub fn full_weighting(&self) -> CsrMatrix<f64> {
        &self.restriction * 0.25
    }

    /// The factors `[Pi, G^{-1}, Pi^T]`.
    pub fn factors(&self) -> Vec<Operator> {
        vec![
            Operator::Sparse(self.prolongation.clone()),
            Operator::Dense(self.gram_inverse.clone()),
            Operator::Sparse(self.restriction.clone()),
        ]
    }

    pub fn operator(&self) -> Operator {
        Operator::product(1.0, self.factors()).expect("projection factors chain")
    }
}

/// `P_H` as an operator.
pub fn projection_operator(grid: &Grid2D) -> Result<Operator> {
    Ok(CoarseProjection::new(grid)?.operator())
}

/// `C = eps0 K (-lap_h) K`, applied through its sparse factors.
pub fn assemble_antidiffusion(grid: &Grid2D, params: &PdeParams) -> Result<Operator> {
    params.validate()?;
    let n = grid.unknowns();
    if params.epsilon0 == 0.0 {
        return Ok(Operator::Zero(n));
    }
    let lap = Operator::Sparse(assemble_diffusion(grid, 1.0));
    let smoother: Vec<Operator> = match params.mode {
        AntiDiffusion::Averaging { q } => {
            let s = Operator::Sparse(averaging_operator(grid));
            vec![s; q as usize]
        }
        AntiDiffusion::Projection => CoarseProjection::new(grid)?.factors(),
    };
    let mut factors = smoother.clone();
    factors.push(lap);
    factors.extend(smoother);
    Operator::product(params.epsilon0, factors)
}

/// Boundary data folded into the forcing: every stencil term that touches a
/// boundary value moves to the right-hand side.
pub fn lift_boundary(grid: &Grid2D, params: &PdeParams) -> Result<DVector<f64>> {
    params.validate()?;
    let m = grid.m;
    let h = grid.h();
    let h2 = h * h;
    let (bx, by) = params.b_field();
    let diff = params.epsilon + params.epsilon0;
    let mut g = DVector::zeros(grid.unknowns());
    for j in 0..m {
        for i in 0..m {
            let p = grid.index(i, j);
            for (d, nb) in grid.neighbours(i, j) {
                if nb.is_some() {
                    continue;
                }
                let (x, y) = grid.boundary_point(i, j, d);
                let phi = params.boundary_value(x, y);
                if phi == 0.0 {
                    continue;
                }
                // -(eps+eps0) lap_h puts -coef/h^2 on the neighbour
                g[p] += diff * phi / h2;
                // b . grad_h puts +-b/(2h) on the neighbour
                g[p] -= match d {
                    Direction::East => bx,
                    Direction::West => -bx,
                    Direction::North => by,
                    Direction::South => -by,
                } * phi
                    / (2.0 * h);
            }
        }
    }
    if let (AntiDiffusion::Averaging { q }, true) = (params.mode, params.epsilon0 > 0.0) {
        g += averaging_boundary_term(grid, params, q) * params.epsilon0;
    }
    Ok(g)
}

/// Constant part of `S^q (-lap_h) S^q` when the field carries the Dirichlet
/// ring: the inner averages and the Laplacian see the boundary values, the
/// outer averages act on `lap_h` of the field, which is taken as zero on the
/// boundary.
fn averaging_boundary_term(grid: &Grid2D, params: &PdeParams, q: u32) -> DVector<f64> {
    let m = grid.m;
    let h = grid.h();
    let w = m + 2;
    let mut field = vec![0.0; w * w];
    for j in 0..w {
        for i in 0..w {
            if i == 0 || j == 0 || i == m + 1 || j == m + 1 {
                field[j * w + i] = params.boundary_value(i as f64 * h, j as f64 * h);
            }
        }
    }
    let average_interior = |f: &[f64]| -> Vec<f64> {
        let mut out = f.to_vec();
        for j in 1..=m {
            for i in 1..=m {
                let c = j * w + i;
                out[c] = (4.0 * f[c] + f[c + 1] + f[c - 1] + f[c + w] + f[c - w]) / 8.0;
            }
        }
        out
    };
    for _ in 0..q {
        field = average_interior(&field);
    }
    let mut lap = vec![0.0; w * w];
    for j in 1..=m {
        for i in 1..=m {
            let c = j * w + i;
            lap[c] = (4.0 * field[c] - field[c + 1] - field[c - 1] - field[c + w] - field[c - w]) / (h * h);
        }
    }
    for _ in 0..q {
        lap = average_interior(&lap);
    }
    DVector::from_fn(grid.unknowns(), |p, _| {
        let (i, j) = (p % m, p / m);
        lap[(j + 1) * w + (i + 1)]
    })
}

/// The assembled pieces of the discrete problem.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub a: CsrMatrix<f64>,
    pub b: CsrMatrix<f64>,
    pub c: Operator,
    pub g_lift: DVector<f64>,
    pub averaging: CsrMatrix<f64>,
    pub projection: Option<CoarseProjection>,
}

#[derive(Debug, Clone)]
pub struct AssembledProblem {
    pub grid: Grid2D,
    pub params: PdeParams,
    pub operators: DiscreteOperators,
    pub system: OdeSystem,
    /// Present when the structure was checked during assembly.
    pub report: Option<StructureReport>,
}

/// Assembles the system with `u0 = 0` and the lifted boundary data as the
/// (time-independent) forcing, then checks its structure. A failed check is
/// reported, not raised.
pub fn assemble_system(grid: &Grid2D, params: &PdeParams) -> Result<AssembledProblem> {
    let mut p = assemble_system_unchecked(grid, params)?;
    let probes = [p.system.initial_state().clone()];
    p.report = Some(validate_structure(&p.system, DEFAULT_STRUCTURE_TOL, &probes)?);
    Ok(p)
}

/// [`assemble_system`] without the eigenvalue-based structure check.
pub fn assemble_system_unchecked(grid: &Grid2D, params: &PdeParams) -> Result<AssembledProblem> {
    params.validate()?;
    let a = assemble_diffusion(grid, params.epsilon + params.epsilon0);
    let b = assemble_convection(grid, params.b_field());
    let c = assemble_antidiffusion(grid, params)?;
    let g_lift = lift_boundary(grid, params)?;
    let projection = match params.mode {
        AntiDiffusion::Projection => Some(CoarseProjection::new(grid)?),
        AntiDiffusion::Averaging { .. } => None,
    };
    if !is_exactly_skew(&b) || !is_exactly_symmetric(&a) {
        return Err(Error::Structure("stencil assembly lost exact (skew-)symmetry".into()));
    }
    let system = OdeSystem::new(
        Operator::Sparse(a.clone()),
        c.clone(),
        SkewField::Constant(Operator::Sparse(b.clone())),
        Forcing::Constant(g_lift.clone()),
        DVector::zeros(grid.unknowns()),
    )?;
    Ok(AssembledProblem {
        grid: *grid,
        params: *params,
        operators: DiscreteOperators {
            a,
            b,
            c,
            g_lift,
            averaging: averaging_operator(grid),
            projection,
        },
        system,
        report: None,
    })
}

pub fn is_exactly_skew(m: &CsrMatrix<f64>) -> bool {
    let t = m.transpose();
    let neg = &t * -1.0;
    same_entries(m, &neg)
}

pub fn is_exactly_symmetric(m: &CsrMatrix<f64>) -> bool {
    same_entries(m, &m.transpose())
}

fn same_entries(a: &CsrMatrix<f64>, b: &CsrMatrix<f64>) -> bool {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return false;
    }
    a.row_iter().zip(b.row_iter()).all(|(ra, rb)| {
        let ea: Vec<(usize, f64)> = ra
            .col_indices()
            .iter()
            .copied()
            .zip(ra.values().iter().copied())
            .filter(|e| e.1 != 0.0)
            .collect();
        let eb: Vec<(usize, f64)> = rb
            .col_indices()
            .iter()
            .copied()
            .zip(rb.values().iter().copied())
            .filter(|e| e.1 != 0.0)
            .collect();
        ea == eb
    })
}

/// Grid snapshot `i,j,x,y,u` in lexicographic order.
pub fn grid_snapshot(grid: &Grid2D, u: &DVector<f64>, preamble: Option<&str>) -> Result<CsvTable> {
    crate::error::check_dim("grid snapshot", grid.unknowns(), u.len())?;
    let mut t = CsvTable::new();
    if let Some(p) = preamble {
        t.comment(p);
    }
    t.header(&["i", "j", "x", "y", "u"]);
    for j in 0..grid.m {
        for i in 0..grid.m {
            let (x, y) = grid.coords(i, j);
            t.row([
                i.to_string(),
                j.to_string(),
                fmt_num(x),
                fmt_num(y),
                fmt_num(u[grid.index(i, j)]),
            ]);
        }
    }
    Ok(t)
}
