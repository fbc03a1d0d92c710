//! Deterministic primal log-barrier path-following solver.
//!
//! Phase I minimizes an infeasibility scalar `s` over the same constraint set
//! relaxed by `s * I`; phase II follows the central path of the original
//! problem, multiplying the path parameter until the barrier duality-gap
//! certificate (`nu / t`) meets the requested relative tolerance.

use super::{SdpProblem, SdpSolution, SolveStatus};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative duality-gap target.
    pub gap_tol: f64,
    /// Feasibility tolerance used by the infeasibility decision.
    pub feas_tol: f64,
    /// Newton-step budget per phase.
    pub max_newton: usize,
    /// Path-parameter growth factor.
    pub barrier_growth: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-7,
            feas_tol: 1e-6,
            max_newton: 200,
            barrier_growth: 20.0,
        }
    }
}

pub fn solve(problem: &SdpProblem) -> Result<SdpSolution> {
    solve_with(problem, &SolverOptions::default())
}

struct Dir {
    r: usize,
    c: usize,
    v: f64,
}

struct PTerm {
    var: usize,
    dirs: Vec<Dir>,
}

struct PBlock {
    dim: usize,
    a0: DMatrix<f64>,
    terms: Vec<PTerm>,
}

struct PRow {
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
}

struct Prepared {
    n: usize,
    blocks: Vec<PBlock>,
    rows: Vec<PRow>,
    nu: f64,
}

fn prepare(problem: &SdpProblem) -> Prepared {
    let mut blocks = Vec::with_capacity(problem.blocks.len());
    for b in &problem.blocks {
        let terms = b
            .terms
            .iter()
            .map(|t| {
                let mut dirs = Vec::with_capacity(2 * t.entries.len());
                for &(r, c, v) in &t.entries {
                    dirs.push(Dir { r, c, v });
                    if r != c {
                        dirs.push(Dir { r: c, c: r, v });
                    }
                }
                PTerm { var: t.var, dirs }
            })
            .collect();
        blocks.push(PBlock {
            dim: b.dim(),
            a0: b.a0.clone(),
            terms,
        });
    }
    let mut rows: Vec<PRow> = problem
        .linear_rows
        .iter()
        .map(|r| PRow {
            coeffs: r.coeffs.clone(),
            rhs: r.rhs,
        })
        .collect();
    for i in 0..problem.num_vars {
        if problem.lower[i].is_finite() {
            rows.push(PRow {
                coeffs: vec![(i, 1.0)],
                rhs: problem.lower[i],
            });
        }
        if problem.upper[i].is_finite() {
            rows.push(PRow {
                coeffs: vec![(i, -1.0)],
                rhs: -problem.upper[i],
            });
        }
    }
    let nu = blocks.iter().map(|b| b.dim as f64).sum::<f64>() + rows.len() as f64;
    Prepared {
        n: problem.num_vars,
        blocks,
        rows,
        nu,
    }
}

fn eval_block(b: &PBlock, x: &DVector<f64>) -> DMatrix<f64> {
    let mut s = b.a0.clone();
    for term in &b.terms {
        let xv = x[term.var];
        if xv == 0.0 {
            continue;
        }
        for d in &term.dirs {
            s[(d.r, d.c)] += xv * d.v;
        }
    }
    s
}

fn row_value(row: &PRow, x: &DVector<f64>) -> f64 {
    row.coeffs.iter().map(|&(i, g)| g * x[i]).sum::<f64>() - row.rhs
}

/// Barrier value at `x`, or `None` outside the strict interior.
fn barrier(prep: &Prepared, x: &DVector<f64>) -> Option<f64> {
    let mut phi = 0.0;
    for row in &prep.rows {
        let d = row_value(row, x);
        if d <= 0.0 {
            return None;
        }
        phi -= d.ln();
    }
    for b in &prep.blocks {
        let s = eval_block(b, x);
        let chol = nalgebra::Cholesky::new(s)?;
        let l = chol.l_dirty();
        let mut logdet = 0.0;
        for i in 0..b.dim {
            let d = l[(i, i)];
            if !(d > 0.0) {
                return None;
            }
            logdet += d.ln();
        }
        phi -= 2.0 * logdet;
    }
    Some(phi)
}

/// Gradient and Hessian of `t f' x + phi(x)` at an interior point.
fn newton_system(
    prep: &Prepared,
    f: &DVector<f64>,
    t: f64,
    x: &DVector<f64>,
) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let n = prep.n;
    let mut g = f * t;
    let mut h = DMatrix::zeros(n, n);
    for row in &prep.rows {
        let d = row_value(row, x);
        if d <= 0.0 {
            return None;
        }
        for &(i, gi) in &row.coeffs {
            g[i] -= gi / d;
            for &(j, gj) in &row.coeffs {
                h[(i, j)] += gi * gj / (d * d);
            }
        }
    }
    for b in &prep.blocks {
        let s = eval_block(b, x);
        let chol = nalgebra::Cholesky::new(s)?;
        let sinv = chol.inverse();
        for term in &b.terms {
            let mut tr = 0.0;
            for d in &term.dirs {
                tr += d.v * sinv[(d.c, d.r)];
            }
            g[term.var] -= tr;
        }
        for (ai, ta) in b.terms.iter().enumerate() {
            for tb in &b.terms[ai..] {
                let mut hv = 0.0;
                for da in &ta.dirs {
                    for db in &tb.dirs {
                        hv += da.v * db.v * sinv[(da.c, db.r)] * sinv[(db.c, da.r)];
                    }
                }
                let (va, vb) = (ta.var, tb.var);
                if va == vb {
                    h[(va, va)] += if std::ptr::eq(ta, tb) { hv } else { 2.0 * hv };
                } else {
                    h[(va, vb)] += hv;
                    h[(vb, va)] += hv;
                }
            }
        }
    }
    Some((h, g))
}

enum CenterOutcome {
    Converged,
    Budget,
    Stalled,
    Early,
}

fn center(
    prep: &Prepared,
    f: &DVector<f64>,
    t: f64,
    x: &mut DVector<f64>,
    budget: &mut usize,
    newton_used: &mut usize,
    early: Option<&dyn Fn(&DVector<f64>) -> bool>,
) -> CenterOutcome {
    const DECREMENT_TOL: f64 = 1e-9;
    const MAX_CENTER_STEPS: usize = 60;
    for _ in 0..MAX_CENTER_STEPS {
        if *budget == 0 {
            return CenterOutcome::Budget;
        }
        let Some((h, g)) = newton_system(prep, f, t, x) else {
            return CenterOutcome::Stalled;
        };
        let delta = match solve_newton(&h, &g) {
            Some(d) => d,
            None => return CenterOutcome::Stalled,
        };
        let decrement = -g.dot(&delta);
        if decrement <= DECREMENT_TOL * 2.0 {
            return CenterOutcome::Converged;
        }
        *budget -= 1;
        *newton_used += 1;

        let psi0 = t * f.dot(x) + barrier(prep, x).expect("iterate left the interior");
        let slope = g.dot(&delta);
        let mut sigma = 1.0;
        let mut accepted = false;
        while sigma >= 1e-13 {
            let cand = &*x + &delta * sigma;
            if let Some(phi) = barrier(prep, &cand) {
                let psi = t * f.dot(&cand) + phi;
                if psi <= psi0 + 0.01 * sigma * slope {
                    *x = cand;
                    accepted = true;
                    break;
                }
            }
            sigma *= 0.5;
        }
        if !accepted {
            return CenterOutcome::Stalled;
        }
        if let Some(early_fn) = early {
            if early_fn(x) {
                return CenterOutcome::Early;
            }
        }
    }
    CenterOutcome::Converged
}

fn solve_newton(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let max_diag = (0..n).map(|i| h[(i, i)].abs()).fold(0.0f64, f64::max);
    let mut ridge = 0.0;
    for attempt in 0..5 {
        let mut m = h.clone();
        if ridge > 0.0 {
            for i in 0..n {
                m[(i, i)] += ridge;
            }
        }
        if let Some(chol) = nalgebra::Cholesky::new(m) {
            return Some(chol.solve(&(-g)));
        }
        ridge = if attempt == 0 {
            1e-12 * (1.0 + max_diag)
        } else {
            ridge * 100.0
        };
    }
    None
}

fn initial_point(problem: &SdpProblem) -> DVector<f64> {
    DVector::from_fn(problem.num_vars, |i, _| {
        let (lo, hi) = (problem.lower[i], problem.upper[i]);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        }
    })
}

fn problem_scale(prep: &Prepared) -> f64 {
    let mut scale = 1.0f64;
    for b in &prep.blocks {
        scale = scale.max(b.a0.amax());
    }
    for r in &prep.rows {
        scale = scale.max(r.rhs.abs());
    }
    scale
}

/// Phase I state: the original variables plus one infeasibility scalar.
fn augment(prep: &Prepared, s_lo: f64, s_hi: f64) -> Prepared {
    let n = prep.n;
    let blocks = prep
        .blocks
        .iter()
        .map(|b| {
            let mut terms: Vec<PTerm> = b
                .terms
                .iter()
                .map(|t| PTerm {
                    var: t.var,
                    dirs: t.dirs.iter().map(|d| Dir { r: d.r, c: d.c, v: d.v }).collect(),
                })
                .collect();
            terms.push(PTerm {
                var: n,
                dirs: (0..b.dim).map(|k| Dir { r: k, c: k, v: 1.0 }).collect(),
            });
            PBlock {
                dim: b.dim,
                a0: b.a0.clone(),
                terms,
            }
        })
        .collect();
    let mut rows: Vec<PRow> = prep
        .rows
        .iter()
        .map(|r| {
            // Box rows (single unit coefficient) stay exact; general rows are
            // relaxed by s like the LMI blocks.
            let is_box = r.coeffs.len() == 1 && r.coeffs[0].1.abs() == 1.0;
            let mut coeffs = r.coeffs.clone();
            if !is_box {
                coeffs.push((n, 1.0));
            }
            PRow { coeffs, rhs: r.rhs }
        })
        .collect();
    rows.push(PRow {
        coeffs: vec![(n, 1.0)],
        rhs: s_lo,
    });
    rows.push(PRow {
        coeffs: vec![(n, -1.0)],
        rhs: -s_hi,
    });
    let nu = prep.nu + 2.0;
    Prepared { n: n + 1, blocks, rows, nu }
}

pub fn solve_with(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    let prep = prepare(problem);
    if prep.nu == 0.0 {
        if problem.objective.iter().all(|&c| c == 0.0) {
            let x = initial_point(problem);
            return Ok(SdpSolution {
                objective_value: 0.0,
                max_violation: problem.max_violation(&x),
                x,
                status: SolveStatus::Optimal,
                duality_gap: 0.0,
                newton_iterations: 0,
            });
        }
        return Err(Error::BadParameter(
            "unconstrained problem with a nonzero objective is unbounded".into(),
        ));
    }

    let mut newton_used = 0usize;
    let x0 = initial_point(problem);
    let x_start = if barrier(&prep, &x0).is_some() {
        Some(x0.clone())
    } else {
        match phase_one(&prep, problem, &x0, opts, &mut newton_used)? {
            PhaseOne::Interior(x) => Some(x),
            PhaseOne::Verdict(sol) => return Ok(sol),
        }
    };
    let mut x = x_start.expect("interior point available");

    let scale = problem_scale(&prep);
    let mut t = 1.0 / scale.max(1.0);
    let mut budget = opts.max_newton;
    let mut status = SolveStatus::MaxIter;
    let mut gap = f64::INFINITY;
    loop {
        let outcome = center(
            &prep,
            &problem.objective,
            t,
            &mut x,
            &mut budget,
            &mut newton_used,
            None,
        );
        gap = prep.nu / t;
        let obj = problem.objective.dot(&x);
        let reached = gap <= opts.gap_tol * (1.0 + obj.abs());
        match outcome {
            CenterOutcome::Converged if reached => {
                status = SolveStatus::Optimal;
                break;
            }
            CenterOutcome::Converged => {}
            CenterOutcome::Budget | CenterOutcome::Stalled | CenterOutcome::Early => {
                status = if reached {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::MaxIter
                };
                break;
            }
        }
        if t > 1e18 {
            status = SolveStatus::MaxIter;
            break;
        }
        t *= opts.barrier_growth;
    }

    let objective_value = problem.objective.dot(&x);
    Ok(SdpSolution {
        max_violation: problem.max_violation(&x),
        x,
        objective_value,
        status,
        duality_gap: gap,
        newton_iterations: newton_used,
    })
}

enum PhaseOne {
    Interior(DVector<f64>),
    Verdict(SdpSolution),
}

fn phase_one(
    prep: &Prepared,
    problem: &SdpProblem,
    x0: &DVector<f64>,
    opts: &SolverOptions,
    newton_used: &mut usize,
) -> Result<PhaseOne> {
    let scale = problem_scale(prep);
    let mut needed = 0.0f64;
    for b in &prep.blocks {
        let s = eval_block(b, x0);
        let sym = (&s + s.transpose()) * 0.5;
        needed = needed.max(-sym.symmetric_eigenvalues().min());
    }
    for r in &prep.rows {
        let is_box = r.coeffs.len() == 1 && r.coeffs[0].1.abs() == 1.0;
        if !is_box {
            needed = needed.max(-row_value(r, x0));
        }
    }
    let mut s0 = needed * 1.05 + 0.01 * scale + 1e-6;
    let s_hi = s0 * 2.0 + scale;
    let s_lo = -(scale + 1.0);
    let aug = augment(prep, s_lo, s_hi);
    let n = prep.n;

    let mut x = DVector::zeros(n + 1);
    x.rows_mut(0, n).copy_from(x0);
    x[n] = s0;
    for _ in 0..60 {
        if barrier(&aug, &x).is_some() {
            break;
        }
        s0 = s0 * 2.0 + 1.0;
        x[n] = s0;
    }
    if barrier(&aug, &x).is_none() {
        return Err(Error::SolverFailure(
            "could not initialize the feasibility phase".into(),
        ));
    }

    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let exit_margin = 1e-6 * scale;
    let early = move |y: &DVector<f64>| y[n] < -exit_margin;

    let mut t = 1.0;
    let mut budget = opts.max_newton;
    loop {
        let outcome = center(&aug, &f, t, &mut x, &mut budget, newton_used, Some(&early));
        if x[n] < -exit_margin {
            return Ok(PhaseOne::Interior(x.rows(0, n).into_owned()));
        }
        let gap = aug.nu / t;
        let resolved = gap <= 0.1 * opts.feas_tol;
        match outcome {
            CenterOutcome::Early => unreachable!("early exit returns above"),
            CenterOutcome::Converged if resolved => break,
            CenterOutcome::Converged => {}
            CenterOutcome::Budget | CenterOutcome::Stalled => break,
        }
        if t > 1e18 {
            break;
        }
        t *= opts.barrier_growth;
    }

    let s_final = x[n];
    let x_part = x.rows(0, n).into_owned();
    let status = if s_final > opts.feas_tol {
        SolveStatus::Infeasible
    } else {
        // Feasibility boundary: no strict interior was found, so no optimality
        // certificate is possible. Report the best iterate.
        SolveStatus::MaxIter
    };
    Ok(PhaseOne::Verdict(SdpSolution {
        objective_value: problem.objective.dot(&x_part),
        max_violation: problem.max_violation(&x_part),
        x: x_part,
        status,
        duality_gap: f64::INFINITY,
        newton_iterations: *newton_used,
    }))
}
