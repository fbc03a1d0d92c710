//! Canonical LMI-constrained linear programs over box-bounded variables, a
//! complex-to-real embedding, and a deterministic interior-point solve.
//!
//! A problem is
//! ```text
//!   minimize  f' x
//!   s.t.      A0_b + sum_i x_i A_{b,i}  >= 0   (PSD, per block b)
//!             g_r' x >= h_r                    (linear rows)
//!             lo <= x <= hi                    (entries may be infinite)
//! ```
//! with all block matrices real symmetric.

mod solver;

pub use solver::{solve, solve_with, SolverOptions};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use nalgebra::{DMatrix, DVector};

/// One variable's symmetric coefficient inside an LMI block, stored as
/// upper-triangle entries `(r, c, v)` with `r <= c`; off-diagonal entries set
/// the mirrored position too.
#[derive(Debug, Clone)]
pub struct LmiTerm {
    pub var: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

/// One LMI block `A0 + sum_i x_i A_i >= 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub a0: DMatrix<f64>,
    pub terms: Vec<LmiTerm>,
}

impl LmiBlock {
    /// Builds a block from a near-symmetric constant part. Asymmetry up to
    /// 1e-10 (relative) is symmetrized away; anything larger is rejected.
    pub fn new(a0: DMatrix<f64>) -> Result<Self> {
        let a0 = symmetrize_guard(a0, "LMI constant part")?;
        Ok(Self {
            a0,
            terms: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    /// Adds a variable's coefficient given as a dense symmetric matrix.
    pub fn push_dense_term(&mut self, var: usize, coeff: &DMatrix<f64>) -> Result<()> {
        if coeff.nrows() != self.dim() || coeff.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(
                "LMI term dimension differs from block".into(),
            ));
        }
        let coeff = symmetrize_guard(coeff.clone(), "LMI term")?;
        let mut entries = Vec::new();
        for r in 0..coeff.nrows() {
            for c in r..coeff.ncols() {
                if coeff[(r, c)] != 0.0 {
                    entries.push((r, c, coeff[(r, c)]));
                }
            }
        }
        self.terms.push(LmiTerm { var, entries });
        Ok(())
    }

    /// Adds a variable's coefficient given as sparse upper-triangle entries.
    pub fn push_entries(&mut self, var: usize, entries: Vec<(usize, usize, f64)>) -> Result<()> {
        let d = self.dim();
        for &(r, c, _) in &entries {
            if r > c || c >= d {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) invalid for block of size {d}"
                )));
            }
        }
        self.terms.push(LmiTerm { var, entries });
        Ok(())
    }

    /// Evaluates `A0 + sum_i x_i A_i`.
    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.a0.clone();
        for term in &self.terms {
            let xv = x[term.var];
            if xv == 0.0 {
                continue;
            }
            for &(r, c, v) in &term.entries {
                s[(r, c)] += xv * v;
                if r != c {
                    s[(c, r)] += xv * v;
                }
            }
        }
        s
    }
}

fn symmetrize_guard(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("{what} is not square")));
    }
    let dev = (&m - m.transpose()).norm() / (1.0 + m.norm());
    if dev > 1e-10 {
        return Err(Error::NotHermitian(format!(
            "{what}: asymmetry {dev:.3e} exceeds 1e-10"
        )));
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// Linear inequality `sum coeffs_i x_i >= rhs`.
#[derive(Debug, Clone)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub linear_rows: Vec<LinearRow>,
}

impl SdpProblem {
    /// Problem with the given objective and box bounds and no constraints yet.
    pub fn new(objective: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let n = objective.len();
        if lower.len() != n || upper.len() != n {
            return Err(Error::DimensionMismatch(
                "objective and bounds lengths differ".into(),
            ));
        }
        for i in 0..n {
            if lower[i].is_nan() || upper[i].is_nan() {
                return Err(Error::BadParameter("NaN bound".into()));
            }
            if lower[i].is_finite() && upper[i].is_finite() && lower[i] >= upper[i] {
                return Err(Error::BadParameter(format!(
                    "degenerate box for variable {i}: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self {
            num_vars: n,
            objective,
            blocks: Vec::new(),
            lower,
            upper,
            linear_rows: Vec::new(),
        })
    }

    pub fn add_block(&mut self, block: LmiBlock) -> Result<()> {
        for term in &block.terms {
            if term.var >= self.num_vars {
                return Err(Error::DimensionMismatch(format!(
                    "LMI term references variable {} of {}",
                    term.var, self.num_vars
                )));
            }
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn add_linear_row(&mut self, row: LinearRow) -> Result<()> {
        for &(i, _) in &row.coeffs {
            if i >= self.num_vars {
                return Err(Error::DimensionMismatch(format!(
                    "linear row references variable {i} of {}",
                    self.num_vars
                )));
            }
        }
        self.linear_rows.push(row);
        Ok(())
    }

    /// Worst constraint violation of `x`: positive values mean infeasibility,
    /// negative values mean margin. Uses eigenvalue and residual checks only.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for b in &self.blocks {
            let s = b.eval(x);
            let sym = (&s + s.transpose()) * 0.5;
            worst = worst.max(-sym.symmetric_eigenvalues().min());
        }
        for row in &self.linear_rows {
            let val: f64 = row.coeffs.iter().map(|&(i, g)| g * x[i]).sum();
            worst = worst.max(row.rhs - val);
        }
        for i in 0..self.num_vars {
            if self.lower[i].is_finite() {
                worst = worst.max(self.lower[i] - x[i]);
            }
            if self.upper[i].is_finite() {
                worst = worst.max(x[i] - self.upper[i]);
            }
        }
        if worst == f64::NEG_INFINITY {
            0.0
        } else {
            worst
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    /// Worst constraint violation (negative means strict margin).
    pub max_violation: f64,
    /// Absolute duality-gap bound from the barrier certificate.
    pub duality_gap: f64,
    pub newton_iterations: usize,
}

/// Real embedding `[[Re, -Im], [Im, Re]]` of a Hermitian matrix. The embedded
/// matrix is symmetric, PSD iff the input is, and carries each eigenvalue of
/// the input with doubled multiplicity.
pub fn embed_hermitian(h: &CMat) -> Result<DMatrix<f64>> {
    crate::linalg::check_hermitian(h, 1e-10, "embed_hermitian input")?;
    let d = h.nrows();
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for r in 0..d {
        for c in 0..d {
            let z = h[(r, c)];
            out[(r, c)] = z.re;
            out[(d + r, d + c)] = z.re;
            out[(r, d + c)] = -z.im;
            out[(d + r, c)] = z.im;
        }
    }
    Ok(out)
}
