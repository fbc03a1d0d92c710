//! Reference methods: weighted sparse MVDR, radius-based MVDR, and
//! utility-based greedy sensor addition.

use crate::beamform::{SelectionVector, SubsetEvaluator};
use crate::error::{Error, Result};
use crate::greedy::{expand_candidates, initial_candidates};
use crate::linalg::{self, CMat, CVec};
use crate::scene::{CostVector, Scene, SpectralModel};
use crate::trace::{Phase, SelectionTrace, TraceRecord};
use nalgebra::DVector;
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub enum SparseRelaxation {
    L1,
    /// Reweighted l1 rounds approximating the sum-of-logarithms surrogate.
    LogSum { rounds: usize },
}

#[derive(Debug, Clone)]
pub struct SparseBeamformerConfig {
    /// Sparsity regularizer.
    pub mu: f64,
    /// Magnitude threshold for activating a sensor.
    pub epsilon: f64,
    pub relaxation: SparseRelaxation,
    pub max_iter: usize,
    /// Relative subgradient-inclusion residual target.
    pub kkt_tol: f64,
}

impl SparseBeamformerConfig {
    pub fn new(mu: f64) -> Self {
        Self {
            mu,
            epsilon: 1e-5,
            relaxation: SparseRelaxation::L1,
            max_iter: 5000,
            kkt_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparseMvdrResult {
    /// Solved beamformer over all microphones.
    pub weights: CVec,
    pub selection: SelectionVector,
    pub cost: f64,
    /// Noise power of the thresholded beamformer as-is.
    pub noise_power_thresholded: f64,
    /// Noise power of the exact MVDR re-derived on the selected support.
    pub noise_power_mvdr: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Distance of the subgradient inclusion `2 R w + xi + s a` from zero, with
/// `s` projecting out the distortionless constraint direction and `xi` free
/// inside the weighted-l1 subdifferential on the zero set. Relative to the
/// smooth-gradient magnitude.
pub fn sparse_kkt_residual(w: &CVec, r_nn: &CMat, a: &CVec, l1_weights: &DVector<f64>) -> f64 {
    let m = w.len();
    let g = r_nn * w * Complex64::new(2.0, 0.0);
    let a_norm2 = a.norm_squared();
    let mut xi = CVec::zeros(m);
    for i in 0..m {
        if w[i].norm() > 0.0 {
            xi[i] = Complex64::from_polar(l1_weights[i], w[i].arg());
        }
    }
    let mut s = Complex64::new(0.0, 0.0);
    for _ in 0..20 {
        let v = &g + &xi;
        s = -a.dotc(&v) / Complex64::new(a_norm2, 0.0);
        for i in 0..m {
            if w[i].norm() == 0.0 {
                let ideal = -(g[i] + s * a[i]);
                let mag = ideal.norm();
                xi[i] = if mag <= l1_weights[i] {
                    ideal
                } else {
                    ideal * Complex64::new(l1_weights[i] / mag, 0.0)
                };
            }
        }
    }
    let residual = (&g + &xi + a * s).norm();
    residual / (1.0 + g.norm())
}

/// ADMM for `min_w w^H R w + sum_i l1_weights_i |w_i|` s.t. `w^H a = 1`.
/// The x-update solves the constrained quadratic exactly through a cached
/// Cholesky factor; the penalty adapts by residual balancing.
fn weighted_l1_mvdr(
    r_nn: &CMat,
    a: &CVec,
    l1_weights: &DVector<f64>,
    max_iter: usize,
    kkt_tol: f64,
) -> Result<(CVec, f64, usize)> {
    let m = a.len();
    if l1_weights.iter().all(|&w| w == 0.0) {
        // No sparsity term: the classical closed form.
        let z = linalg::chol_solve(r_nn, a, "noise covariance")?;
        let w = &z * Complex64::new(1.0 / a.dotc(&z).re, 0.0);
        let kkt = sparse_kkt_residual(&w, r_nn, a, l1_weights);
        return Ok((w, kkt, 0));
    }

    let mut rho = 2.0 * r_nn.trace().re / m as f64;
    let factor = |rho: f64| -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
        let k = r_nn * Complex64::new(2.0, 0.0)
            + CMat::identity(m, m) * Complex64::new(rho, 0.0);
        nalgebra::Cholesky::new(k)
            .ok_or_else(|| Error::NotPositiveDefinite("ADMM system matrix".into()))
    };
    let mut chol = factor(rho)?;
    let mut t_vec = chol.solve(a);
    let mut at = a.dotc(&t_vec).re;

    let mut x = CVec::zeros(m);
    let mut z = CVec::zeros(m);
    let mut u = CVec::zeros(m);
    let mut best: Option<(CVec, f64)> = None;

    for iter in 1..=max_iter {
        // x-update: constrained quadratic minimization.
        let rhs = (&z - &u) * Complex64::new(rho, 0.0);
        let q = chol.solve(&rhs);
        let s = (a.dotc(&q) - Complex64::new(1.0, 0.0)) / Complex64::new(at, 0.0);
        x = &q - &t_vec * s;

        // z-update: complex soft threshold.
        let z_old = z.clone();
        let xu = &x + &u;
        z = CVec::from_fn(m, |i, _| {
            let v = xu[i];
            let kappa = l1_weights[i] / rho;
            let mag = v.norm();
            if mag <= kappa {
                Complex64::new(0.0, 0.0)
            } else {
                v * Complex64::new(1.0 - kappa / mag, 0.0)
            }
        });
        u += &x - &z;

        if iter % 10 == 0 || iter == max_iter {
            let denom = a.dotc(&z);
            let candidate = if denom.norm() > 0.5 {
                &z * (Complex64::new(1.0, 0.0) / denom)
            } else {
                x.clone()
            };
            let kkt = sparse_kkt_residual(&candidate, r_nn, a, l1_weights);
            if best.as_ref().map_or(true, |(_, b)| kkt < *b) {
                best = Some((candidate.clone(), kkt));
            }
            if kkt <= kkt_tol {
                return Ok((candidate, kkt, iter));
            }

            // Residual balancing.
            let primal = (&x - &z).norm();
            let dual = rho * (&z - &z_old).norm();
            if primal > 10.0 * dual {
                rho *= 2.0;
            } else if dual > 10.0 * primal {
                rho *= 0.5;
            } else {
                continue;
            }
            chol = factor(rho)?;
            t_vec = chol.solve(a);
            at = a.dotc(&t_vec).re;
        }
    }
    let (w, kkt) = best.expect("at least one KKT evaluation");
    Ok((w, kkt, max_iter))
}

/// Weighted sparse MVDR beamformer: minimizes output noise power plus a
/// transmission-cost-weighted l1 penalty, then thresholds `|w_i| >= epsilon`.
pub fn sparse_mvdr(
    model: &SpectralModel,
    costs: &CostVector,
    config: &SparseBeamformerConfig,
) -> Result<SparseMvdrResult> {
    if config.mu < 0.0 {
        return Err(Error::BadParameter(format!(
            "mu must be nonnegative, got {}",
            config.mu
        )));
    }
    let m = model.mic_count();
    let a = &model.steering;
    let r = &model.r_nn;
    let base_weights = DVector::from_fn(m, |i, _| config.mu * costs.c[i]);

    let (weights, kkt, iterations) = match config.relaxation {
        SparseRelaxation::L1 => {
            weighted_l1_mvdr(r, a, &base_weights, config.max_iter, config.kkt_tol)?
        }
        SparseRelaxation::LogSum { rounds } => {
            let mut out = weighted_l1_mvdr(r, a, &base_weights, config.max_iter, config.kkt_tol)?;
            for _ in 0..rounds {
                let scale = out.0.iter().map(|w| w.norm()).fold(0.0f64, f64::max);
                let delta = 1e-3 * scale + 1e-12;
                let rew = DVector::from_fn(m, |i, _| {
                    config.mu * costs.c[i] / (out.0[i].norm() + delta)
                });
                out = weighted_l1_mvdr(r, a, &rew, config.max_iter, config.kkt_tol)?;
            }
            out
        }
    };

    let selected: Vec<usize> = (0..m)
        .filter(|&i| weights[i].norm() >= config.epsilon)
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    let thresholded = CVec::from_fn(m, |i, _| {
        if weights[i].norm() >= config.epsilon {
            weights[i]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let noise_power_thresholded = thresholded.dotc(&(r * &thresholded)).re;
    let eval = SubsetEvaluator::new(r, a)?;
    let noise_power_mvdr = 1.0 / eval.quad(&selected)?;

    Ok(SparseMvdrResult {
        weights,
        selection: SelectionVector::from_indices(m, &selected)?,
        cost: costs.subset_cost(&selected),
        noise_power_thresholded,
        noise_power_mvdr,
        kkt_residual: kkt,
        iterations,
    })
}

/// Selects every microphone within `gamma` meters of the fusion center and
/// runs MVDR on that support.
pub fn radius_select(
    scene: &Scene,
    model: &SpectralModel,
    gamma: f64,
) -> Result<(SelectionVector, f64, f64)> {
    if !(gamma > 0.0) {
        return Err(Error::BadParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let idx: Vec<usize> = scene
        .mic_positions
        .iter()
        .enumerate()
        .filter(|(_, &p)| {
            let dx = p[0] - scene.fc_position[0];
            let dy = p[1] - scene.fc_position[1];
            (dx * dx + dy * dy).sqrt() <= gamma
        })
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyRadius);
    }
    let costs = scene.transmission_costs()?;
    let eval = SubsetEvaluator::new(&model.r_nn, &model.steering)?;
    let noise_power = 1.0 / eval.quad(&idx)?;
    Ok((
        SelectionVector::from_indices(model.mic_count(), &idx)?,
        costs.subset_cost(&idx),
        noise_power,
    ))
}

/// Utility-based greedy sensor addition: per iteration, add the candidate with
/// the largest noise-power gain per unit transmission cost until the budget
/// `c_t` is spent. Candidate gains are computed by bordered extensions of one
/// Cholesky factor per iteration.
pub fn utility_greedy(
    scene: &Scene,
    model: &SpectralModel,
    costs: &CostVector,
    c_t: f64,
    z0: [f64; 2],
    r0: f64,
) -> Result<(SelectionVector, SelectionTrace)> {
    if !(c_t > 0.0) {
        return Err(Error::BadParameter(format!(
            "cost budget must be positive, got {c_t}"
        )));
    }
    let m = model.mic_count();
    let eval = SubsetEvaluator::new(&model.r_nn, &model.steering)?;
    let mut s1 = initial_candidates(scene, z0, r0)?;
    let mut s2: Vec<usize> = Vec::new();
    let mut trace = SelectionTrace::new();
    let mut iteration = 0;

    loop {
        iteration += 1;
        let pool: Vec<usize> = s1
            .iter()
            .copied()
            .filter(|i| s2.binary_search(i).is_err())
            .collect();
        if pool.is_empty() {
            let expanded = expand_candidates(scene, &s2, r0)?;
            if expanded == s1 {
                break; // nothing reachable is left
            }
            s1 = expanded;
            continue;
        }

        let factor = eval.factor(&s2)?;
        let k = s2.len() as u64;
        let mut ops = 0u64;
        let np_s2 = if s2.is_empty() {
            f64::INFINITY
        } else {
            1.0 / factor.quad
        };
        let mut best: Option<(f64, usize)> = None;
        for &j in &pool {
            let quad_j = eval.extended_quad(&factor, j)?;
            ops += k * k + 2 * k + 1;
            // Gain of the output noise power; against the empty set the
            // ranking uses 1/np({j}), which orders identically.
            let gain = if s2.is_empty() {
                quad_j
            } else {
                (np_s2 - 1.0 / quad_j).max(0.0)
            };
            let c = costs.c[j];
            let utility = if c > 0.0 {
                gain / c
            } else if gain > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let better = match best {
                None => true,
                Some((bu, bj)) => utility > bu || (utility == bu && j < bj),
            };
            if better {
                best = Some((utility, j));
            }
        }
        let (_, j) = best.expect("pool is nonempty");
        let pos = s2.binary_search(&j).unwrap_err();
        s2.insert(pos, j);

        let quad = eval.quad(&s2)?;
        let cost = costs.subset_cost(&s2);
        trace.push(TraceRecord {
            iteration,
            phase: Phase::Utility,
            s1_size: s1.len(),
            s2_size: s2.len(),
            cost,
            noise_power: 1.0 / quad,
            solve_ops: ops,
        });
        if cost >= c_t {
            break;
        }
        s1 = expand_candidates(scene, &s2, r0)?;
        if iteration > 4 * m {
            break; // cannot happen: one sensor joins per recorded iteration
        }
    }

    Ok((SelectionVector::from_indices(m, &s2)?, trace))
}
