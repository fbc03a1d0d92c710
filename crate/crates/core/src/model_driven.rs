//! Model-driven selection: convex relaxations of the minimum-cost subset
//! problem under an output-SNR constraint, randomized rounding back to boolean
//! selections, the closed-form rule for spatially uncorrelated noise, and a
//! brute-force oracle.

use crate::beamform::{SelectionVector, SubsetEvaluator};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::scene::{CostVector, SpectralModel};
use crate::sdp::{self, LinearRow, LmiBlock, SdpProblem, SolveStatus, SolverOptions};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Split `R_nn = lambda I + G` with `lambda > 0` and `G` positive definite.
#[derive(Debug, Clone)]
pub struct DecomposedNoise {
    pub lambda: f64,
    pub g: CMat,
}

/// Picks `lambda` as half the smallest eigenvalue of `R_nn`.
pub fn decompose_noise(r_nn: &CMat) -> Result<DecomposedNoise> {
    linalg::check_hermitian(r_nn, 1e-10, "noise covariance")?;
    let min_eig = linalg::min_eigenvalue(r_nn);
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "noise covariance has min eigenvalue {min_eig:.3e}"
        )));
    }
    let lambda = 0.5 * min_eig;
    let m = r_nn.nrows();
    let g = r_nn - CMat::identity(m, m) * Complex64::new(lambda, 0.0);
    if linalg::min_eigenvalue(&g) <= 0.0 {
        return Err(Error::NotPositiveDefinite(
            "G in the noise decomposition".into(),
        ));
    }
    Ok(DecomposedNoise { lambda, g })
}

/// Boolean selection plus the relaxed vector it was rounded from and its
/// achieved beamforming figures.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub relaxed_p: DVector<f64>,
    pub selection: SelectionVector,
    /// Transmission cost of the boolean selection (normalized units).
    pub cost: f64,
    pub noise_power: f64,
    pub snr: f64,
    pub feasible: bool,
    /// SNR the selection was required to reach.
    pub target_snr: f64,
    pub solver_status: Option<SolveStatus>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::BadParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

fn full_quad(model: &SpectralModel) -> Result<f64> {
    let all: Vec<usize> = (0..model.mic_count()).collect();
    SubsetEvaluator::new(&model.r_nn, &model.steering)?.quad(&all)
}

/// Upper-triangle linear index of `(k, l)` with `k <= l` in a `d x d` matrix.
fn tri_index(k: usize, l: usize, d: usize) -> usize {
    k * d - k * (k - 1) / 2 + (l - k)
}

/// SDP relaxation built from the speech covariance: variables are the relaxed
/// selection `p` and a free symmetric matrix `Z` of the embedded dimension,
/// with objective `c' p`, one embedded LMI of complex size `2M`, and the
/// linear trace constraint on `Z`.
pub fn covariance_sdp(
    model: &SpectralModel,
    costs: &CostVector,
    alpha: f64,
) -> Result<SdpProblem> {
    check_alpha(alpha)?;
    let m = model.mic_count();
    if costs.len() != m {
        return Err(Error::DimensionMismatch(
            "cost vector length differs from microphone count".into(),
        ));
    }
    let eig_max = model
        .r_xx
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    let eig_min = linalg::min_eigenvalue(&model.r_xx);
    if eig_min < -1e-8 * eig_max.max(1e-300) {
        return Err(Error::NotPositiveDefinite(
            "speech covariance must be PSD".into(),
        ));
    }

    let beta = 1.0 / full_quad(model)?;
    let dec = decompose_noise(&model.r_nn)?;
    let ginv = linalg::chol_inverse(&dec.g, "G")?;
    let half = linalg::psd_sqrt(&model.r_xx);
    let b = &ginv * &half;
    let c_block = linalg::hermitize(&(&half * &ginv * &half));

    // Complex constant part [[G^{-1}, G^{-1} Rxx^{1/2}], [Rxx^{H/2} G^{-1}, Rxx^{H/2} G^{-1} Rxx^{1/2}]].
    let mut top = CMat::zeros(2 * m, 2 * m);
    for r in 0..m {
        for cidx in 0..m {
            top[(r, cidx)] = ginv[(r, cidx)];
            top[(r, m + cidx)] = b[(r, cidx)];
            top[(m + r, cidx)] = b[(cidx, r)].conj();
            top[(m + r, m + cidx)] = c_block[(r, cidx)];
        }
    }
    let a0 = sdp::embed_hermitian(&top)?;
    let scale = a0.amax().max(1.0);
    let a0 = a0 / scale;

    let zdim = 2 * m; // embedded dimension of the complex M x M auxiliary
    let num_z = zdim * (zdim + 1) / 2;
    let n = m + num_z;
    let mut objective = DVector::zeros(n);
    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    for i in 0..m {
        objective[i] = costs.c[i];
        lower[i] = 0.0;
        upper[i] = 1.0;
    }

    let mut problem = SdpProblem::new(objective, lower, upper)?;
    let mut block = LmiBlock::new(a0)?;
    let lam_inv = 1.0 / dec.lambda / scale;
    for i in 0..m {
        block.push_entries(i, vec![(i, i, lam_inv), (2 * m + i, 2 * m + i, lam_inv)])?;
    }
    // Position of index k of the embedded auxiliary inside the 4M block.
    let embed_pos = |k: usize| if k < m { m + k } else { 2 * m + k };
    for k in 0..zdim {
        for l in k..zdim {
            let var = m + tri_index(k, l, zdim);
            block.push_entries(var, vec![(embed_pos(k), embed_pos(l), -1.0 / scale)])?;
        }
    }
    problem.add_block(block)?;

    // Embedding doubles the trace, so the bound is 2 alpha P_s / beta.
    let rhs = 2.0 * alpha * model.target_psd / beta;
    let row_scale = rhs.abs().max(1.0);
    let coeffs = (0..zdim)
        .map(|k| (m + tri_index(k, k, zdim), 1.0 / row_scale))
        .collect();
    problem.add_linear_row(LinearRow {
        coeffs,
        rhs: rhs / row_scale,
    })?;
    Ok(problem)
}

/// SDP relaxation built from the steering vector: variables are the relaxed
/// selection only, with one embedded LMI of complex size `M + 1`.
pub fn steering_sdp(model: &SpectralModel, costs: &CostVector, alpha: f64) -> Result<SdpProblem> {
    check_alpha(alpha)?;
    let beta = 1.0 / full_quad(model)?;
    steering_sdp_with_bound(
        &model.r_nn,
        &model.steering,
        &costs.c,
        alpha / beta,
    )
}

/// Steering-vector SDP with an explicit quadratic-form bound
/// `a_p^H R_p^{-1} a_p >= quad_bound`; used directly by the greedy loop where
/// the bound switches between candidate-set-relative and global values.
pub fn steering_sdp_with_bound(
    r_nn: &CMat,
    steering: &CVec,
    costs: &DVector<f64>,
    quad_bound: f64,
) -> Result<SdpProblem> {
    let m = r_nn.nrows();
    if costs.len() != m || steering.len() != m {
        return Err(Error::DimensionMismatch(
            "steering SDP inputs have inconsistent sizes".into(),
        ));
    }
    let dec = decompose_noise(r_nn)?;
    let ginv = linalg::chol_inverse(&dec.g, "G")?;
    let ga = &ginv * steering;
    let corner = steering.dotc(&ga).re - quad_bound;

    let mut top = CMat::zeros(m + 1, m + 1);
    for r in 0..m {
        for c in 0..m {
            top[(r, c)] = ginv[(r, c)];
        }
        top[(r, m)] = ga[r];
        top[(m, r)] = ga[r].conj();
    }
    top[(m, m)] = Complex64::new(corner, 0.0);
    let a0 = sdp::embed_hermitian(&top)?;
    let scale = a0.amax().max(1.0);
    let a0 = a0 / scale;

    let mut problem = SdpProblem::new(
        DVector::from_fn(m, |i, _| costs[i]),
        DVector::from_element(m, 0.0),
        DVector::from_element(m, 1.0),
    )?;
    let mut block = LmiBlock::new(a0)?;
    let lam_inv = 1.0 / dec.lambda / scale;
    for i in 0..m {
        block.push_entries(i, vec![(i, i, lam_inv), (m + 1 + i, m + 1 + i, lam_inv)])?;
    }
    problem.add_block(block)?;
    Ok(problem)
}

/// Rounds a relaxed selection to the cheapest feasible boolean candidate among
/// threshold sweeps and seeded Bernoulli draws, each repaired by greedily
/// adding the unselected sensor with the best marginal SNR gain per cost.
pub(crate) fn round_selection_core(
    relaxed_p: &DVector<f64>,
    r_nn: &CMat,
    steering: &CVec,
    costs: &DVector<f64>,
    target_quad: f64,
    num_draws: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let m = relaxed_p.len();
    if num_draws < 1 {
        return Err(Error::BadParameter("num_draws must be at least 1".into()));
    }
    let eval = SubsetEvaluator::new(r_nn, steering)?;
    let effective_target = target_quad * (1.0 - 1e-12);

    let mut candidates: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut thresholds: Vec<f64> = relaxed_p.iter().copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    for &v in &thresholds {
        let set: Vec<usize> = (0..m).filter(|&i| relaxed_p[i] >= v).collect();
        candidates.insert(set);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..num_draws {
        let set: Vec<usize> = (0..m)
            .filter(|&i| rng.gen::<f64>() < relaxed_p[i])
            .collect();
        candidates.insert(set);
    }

    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for cand in candidates {
        let repaired = repair_to_target(&eval, cand, costs, effective_target)?;
        let cost: f64 = repaired.iter().map(|&i| costs[i]).sum();
        let better = match &best {
            None => true,
            Some((bc, bk, bi)) => {
                (cost, repaired.len(), &repaired) < (*bc, *bk, bi)
            }
        };
        if better {
            best = Some((cost, repaired.len(), repaired));
        }
    }
    Ok(best.expect("at least one rounding candidate").2)
}

fn repair_to_target(
    eval: &SubsetEvaluator,
    mut set: Vec<usize>,
    costs: &DVector<f64>,
    target_quad: f64,
) -> Result<Vec<usize>> {
    let m = costs.len();
    set.sort_unstable();
    let mut factor = eval.factor(&set)?;
    while factor.quad < target_quad {
        if set.len() == m {
            return Err(Error::AlphaInfeasible);
        }
        let mut best: Option<(f64, f64, usize)> = None;
        for j in 0..m {
            if set.binary_search(&j).is_ok() {
                continue;
            }
            let quad_j = eval.extended_quad(&factor, j)?;
            let gain = (quad_j - factor.quad).max(0.0);
            let ratio = if costs[j] > 0.0 {
                gain / costs[j]
            } else if gain > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let better = match best {
                None => true,
                // Higher gain-per-cost wins; ties prefer the larger gain,
                // then the lower index.
                Some((br, bg, bj)) => {
                    ratio > br || (ratio == br && (gain > bg || (gain == bg && j < bj)))
                }
            };
            if better {
                best = Some((ratio, gain, j));
            }
        }
        let (_, _, j) = best.expect("unselected sensor exists");
        let pos = set.binary_search(&j).unwrap_err();
        set.insert(pos, j);
        factor = eval.factor(&set)?;
    }
    Ok(set)
}

fn result_from_indices(
    model: &SpectralModel,
    costs: &CostVector,
    indices: &[usize],
    relaxed_p: DVector<f64>,
    target_snr: f64,
    solver_status: Option<SolveStatus>,
) -> Result<SelectionResult> {
    let eval = SubsetEvaluator::new(&model.r_nn, &model.steering)?;
    let quad = eval.quad(indices)?;
    let snr = model.target_psd * quad;
    Ok(SelectionResult {
        relaxed_p,
        selection: SelectionVector::from_indices(model.mic_count(), indices)?,
        cost: costs.subset_cost(indices),
        noise_power: 1.0 / quad,
        snr,
        feasible: snr >= target_snr - 1e-6,
        target_snr,
        solver_status,
    })
}

/// Randomized rounding against the full-network SNR target `alpha * SNR_full`.
pub fn round_selection(
    relaxed_p: &DVector<f64>,
    model: &SpectralModel,
    costs: &CostVector,
    alpha: f64,
    num_draws: usize,
    seed: u64,
) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    let fq = full_quad(model)?;
    let indices = round_selection_core(
        relaxed_p,
        &model.r_nn,
        &model.steering,
        &costs.c,
        alpha * fq,
        num_draws,
        seed,
    )?;
    result_from_indices(
        model,
        costs,
        &indices,
        relaxed_p.clone(),
        alpha * model.target_psd * fq,
        None,
    )
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub alpha: f64,
    pub num_draws: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl SelectOptions {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            num_draws: 200,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

fn clamp_unit(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| v.clamp(0.0, 1.0))
}

/// Steering-vector SDP, solved and rounded.
pub fn select_via_steering(
    model: &SpectralModel,
    costs: &CostVector,
    opts: &SelectOptions,
) -> Result<SelectionResult> {
    let problem = steering_sdp(model, costs, opts.alpha)?;
    let sol = sdp::solve_with(&problem, &opts.solver)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::AlphaInfeasible);
    }
    let relaxed = clamp_unit(&sol.x);
    let mut res = round_selection(&relaxed, model, costs, opts.alpha, opts.num_draws, opts.seed)?;
    res.solver_status = Some(sol.status);
    Ok(res)
}

/// Covariance SDP, solved and rounded.
pub fn select_via_covariance(
    model: &SpectralModel,
    costs: &CostVector,
    opts: &SelectOptions,
) -> Result<SelectionResult> {
    let problem = covariance_sdp(model, costs, opts.alpha)?;
    let sol = sdp::solve_with(&problem, &opts.solver)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::AlphaInfeasible);
    }
    let m = model.mic_count();
    let relaxed = clamp_unit(&sol.x.rows(0, m).into_owned());
    let mut res = round_selection(&relaxed, model, costs, opts.alpha, opts.num_draws, opts.seed)?;
    res.solver_status = Some(sol.status);
    Ok(res)
}

/// Rank-ordering rule for spatially uncorrelated noise: sort sensors by
/// `v_i = c_i sigma_i^2 / |a_i|^2` ascending and take the shortest prefix whose
/// cumulative SNR contribution reaches `alpha / beta`.
pub fn select_uncorrelated(
    model: &SpectralModel,
    costs: &CostVector,
    alpha: f64,
) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    let m = model.mic_count();
    let r = &model.r_nn;
    let mut off = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                off += r[(i, j)].norm_sqr();
            }
        }
    }
    if off.sqrt() > 1e-10 * (1.0 + r.norm()) {
        return Err(Error::BadParameter(
            "noise covariance is not diagonal".into(),
        ));
    }

    let contributions: Vec<f64> = (0..m)
        .map(|i| model.steering[i].norm_sqr() / r[(i, i)].re)
        .collect();
    let total: f64 = contributions.iter().sum();
    let target = alpha * total; // alpha / beta with beta = 1 / total
    let mut order: Vec<usize> = (0..m).collect();
    let rank = |i: usize| {
        if contributions[i] > 0.0 {
            costs.c[i] / contributions[i]
        } else {
            f64::INFINITY
        }
    };
    order.sort_by(|&a, &b| rank(a).total_cmp(&rank(b)).then(a.cmp(&b)));

    let mut cum = 0.0;
    let mut selected = Vec::new();
    for &i in &order {
        if cum >= target {
            break;
        }
        if contributions[i] <= 0.0 {
            break;
        }
        selected.push(i);
        cum += contributions[i];
    }
    selected.sort_unstable();
    let values = DVector::from_fn(m, |i, _| {
        if selected.binary_search(&i).is_ok() {
            1.0
        } else {
            0.0
        }
    });
    result_from_indices(
        model,
        costs,
        &selected,
        values,
        alpha * model.target_psd * total,
        None,
    )
}

/// Exhaustive minimum-cost feasible subset; ties prefer smaller cardinality,
/// then lexicographically smaller index sets.
pub fn brute_force_selection(
    model: &SpectralModel,
    costs: &CostVector,
    alpha: f64,
) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    let m = model.mic_count();
    if m > 22 {
        return Err(Error::BadParameter(format!(
            "brute force is limited to 22 microphones, got {m}"
        )));
    }
    let eval = SubsetEvaluator::new(&model.r_nn, &model.steering)?;
    let fq = full_quad(model)?;
    let target = alpha * fq * (1.0 - 1e-12);
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for mask in 1u32..(1u32 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let quad = eval.quad(&idx)?;
        if quad < target {
            continue;
        }
        let cost: f64 = idx.iter().map(|&i| costs.c[i]).sum();
        let better = match &best {
            None => true,
            Some((bc, bk, bi)) => (cost, idx.len(), &idx) < (*bc, *bk, bi),
        };
        if better {
            best = Some((cost, idx.len(), idx));
        }
    }
    let (_, _, idx) = best.ok_or(Error::AlphaInfeasible)?;
    let relaxed = DVector::from_fn(m, |i, _| {
        if idx.binary_search(&i).is_ok() {
            1.0
        } else {
            0.0
        }
    });
    result_from_indices(
        model,
        costs,
        &idx,
        relaxed,
        alpha * model.target_psd * fq,
        None,
    )
}

/// Output noise power evaluated at a relaxed selection through the
/// selection-masked inverse covariance.
pub fn relaxed_noise_power(model: &SpectralModel, relaxed_p: &DVector<f64>) -> Result<f64> {
    let sel = SelectionVector::relaxed(relaxed_p.clone())?;
    let dec = decompose_noise(&model.r_nn)?;
    let q = crate::beamform::selection_q(&model.r_nn, &sel, dec.lambda, &dec.g)?;
    let quad = model.steering.dotc(&(&q * &model.steering)).re;
    if !(quad > 0.0) {
        return Err(Error::BadParameter(
            "relaxed selection carries no signal".into(),
        ));
    }
    Ok(1.0 / quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::output_noise_power;
    use crate::scene::Scene;
    use approx::assert_relative_eq;

    fn random_scene(m: usize, seed: u64) -> Scene {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let scene = Scene {
                mic_positions: (0..m)
                    .map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)])
                    .collect(),
                target_position: [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)],
                interferer_positions: vec![[rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]],
                fc_position: [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)],
                target_psd: rng.gen_range(0.5..2.0),
                interferer_psds: vec![rng.gen_range(0.2..2.0)],
                self_noise_snr_db: rng.gen_range(20.0..40.0),
                speed_of_sound: crate::scene::SPEED_OF_SOUND,
                device_costs: vec![0.0; m],
                grid_spacing: None,
            };
            if scene.validate().is_ok() && scene.transmission_costs().is_ok() {
                return scene;
            }
        }
    }

    fn model_and_costs(m: usize, seed: u64) -> (SpectralModel, CostVector) {
        let scene = random_scene(m, seed);
        let model = scene.build_spectral_model(1500.0).unwrap();
        let costs = scene.transmission_costs().unwrap();
        (model, costs)
    }

    #[test]
    fn decompose_identity() {
        let dec = decompose_noise(&CMat::identity(3, 3)).unwrap();
        assert_relative_eq!(dec.lambda, 0.5);
        assert!((dec.g - CMat::identity(3, 3) * Complex64::new(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn decompose_diagonal() {
        let r = CMat::from_fn(2, 2, |i, j| {
            if i == j {
                Complex64::new(if i == 0 { 1.0 } else { 4.0 }, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let dec = decompose_noise(&r).unwrap();
        assert_relative_eq!(dec.lambda, 0.5);
        assert_relative_eq!(dec.g[(0, 0)].re, 0.5);
        assert_relative_eq!(dec.g[(1, 1)].re, 3.5);
    }

    #[test]
    fn decompose_random_min_eigenvalue() {
        let (model, _) = model_and_costs(8, 11);
        let dec = decompose_noise(&model.r_nn).unwrap();
        let expect = 0.5 * linalg::min_eigenvalue(&model.r_nn);
        assert_relative_eq!(
            linalg::min_eigenvalue(&dec.g),
            expect,
            max_relative = 1e-10
        );
        assert_relative_eq!(dec.lambda, expect, max_relative = 1e-12);
    }

    #[test]
    fn covariance_sdp_tight_at_full_selection() {
        let (model, costs) = model_and_costs(4, 21);
        let m = model.mic_count();
        let problem = covariance_sdp(&model, &costs, 1.0).unwrap();
        // Plug in p = 1 and the auxiliary at its extreme value
        // Z = embed(Rxx^{H/2} Rnn^{-1} Rxx^{1/2}).
        let rinv = model.r_nn.clone().try_inverse().unwrap();
        let half = linalg::psd_sqrt(&model.r_xx);
        let z_c = linalg::hermitize(&(&half * &rinv * &half));
        let z_emb = sdp::embed_hermitian(&z_c).unwrap();
        let zdim = 2 * m;
        let mut x = DVector::zeros(problem.num_vars);
        for i in 0..m {
            x[i] = 1.0;
        }
        for k in 0..zdim {
            for l in k..zdim {
                x[m + tri_index(k, l, zdim)] = z_emb[(k, l)];
            }
        }
        let s = problem.blocks[0].eval(&x);
        let sym = (&s + s.transpose()) * 0.5;
        assert!(sym.symmetric_eigenvalues().min() >= -1e-8);
        let row = &problem.linear_rows[0];
        let val: f64 = row.coeffs.iter().map(|&(i, g)| g * x[i]).sum();
        assert!((val - row.rhs).abs() <= 1e-8);
    }

    #[test]
    fn covariance_relaxed_cost_vanishes_with_alpha() {
        let (model, costs) = model_and_costs(4, 22);
        let strict = sdp::solve(&covariance_sdp(&model, &costs, 0.9).unwrap()).unwrap();
        let loose = sdp::solve(&covariance_sdp(&model, &costs, 1e-3).unwrap()).unwrap();
        assert!(loose.objective_value >= -1e-9);
        assert!(loose.objective_value < 0.1 * strict.objective_value);
    }

    #[test]
    fn relaxed_optima_lower_bound_brute_force() {
        let (model, costs) = model_and_costs(5, 23);
        let alpha = 0.8;
        let brute = brute_force_selection(&model, &costs, alpha).unwrap();
        let cov = sdp::solve(&covariance_sdp(&model, &costs, alpha).unwrap()).unwrap();
        let steer = sdp::solve(&steering_sdp(&model, &costs, alpha).unwrap()).unwrap();
        assert_eq!(cov.status, SolveStatus::Optimal);
        assert_eq!(steer.status, SolveStatus::Optimal);
        assert!(cov.objective_value <= brute.cost + 1e-6);
        assert!(steer.objective_value <= brute.cost + 1e-6);
    }

    #[test]
    fn steering_sdp_tight_at_full_selection() {
        let (model, costs) = model_and_costs(5, 24);
        let problem = steering_sdp(&model, &costs, 1.0).unwrap();
        let x = DVector::from_element(5, 1.0);
        let s = problem.blocks[0].eval(&x);
        let sym = (&s + s.transpose()) * 0.5;
        assert!(sym.symmetric_eigenvalues().min() >= -1e-8);
    }

    #[test]
    fn steering_single_sensor_closed_form() {
        // With M = 1 and R = sigma^2, the decomposition gives lambda = G =
        // sigma^2/2 and the Schur condition reduces to p >= alpha/(2 - alpha).
        let scene = Scene {
            mic_positions: vec![[1.5, 0.0]],
            target_position: [0.0, 0.0],
            interferer_positions: vec![],
            fc_position: [3.0, 0.0],
            target_psd: 1.0,
            interferer_psds: vec![],
            self_noise_snr_db: 30.0,
            speed_of_sound: crate::scene::SPEED_OF_SOUND,
            device_costs: vec![0.0],
            grid_spacing: None,
        };
        let model = scene.build_spectral_model(1000.0).unwrap();
        let costs = scene.transmission_costs().unwrap();
        for alpha in [0.3, 0.6, 0.95] {
            let sol = sdp::solve(&steering_sdp(&model, &costs, alpha).unwrap()).unwrap();
            assert_relative_eq!(sol.x[0], alpha / (2.0 - alpha), epsilon = 1e-5);
        }
    }

    /// Fractional relaxation of the diagonal-noise boolean program, solved by
    /// rank ordering with one fractional boundary sensor.
    fn lp_fractional_value(model: &SpectralModel, costs: &CostVector, alpha: f64) -> f64 {
        let m = model.mic_count();
        let u: Vec<f64> = (0..m)
            .map(|i| model.steering[i].norm_sqr() / model.r_nn[(i, i)].re)
            .collect();
        let total: f64 = u.iter().sum();
        let target = alpha * total;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| (costs.c[a] / u[a]).total_cmp(&(costs.c[b] / u[b])));
        let mut cum = 0.0;
        let mut value = 0.0;
        for &i in &order {
            if cum + u[i] >= target {
                value += costs.c[i] * (target - cum) / u[i];
                return value;
            }
            cum += u[i];
            value += costs.c[i];
        }
        value
    }

    #[test]
    fn steering_relaxation_dominated_by_lp_on_diagonal_noise() {
        // The box-relaxed LMI admits fractional points the diagonal LP cannot,
        // so its optimum can only be lower; both lower-bound the boolean one.
        for seed in [31u64, 32, 33] {
            let scene = random_scene(5, seed);
            let mut scene = scene;
            scene.interferer_positions.clear();
            scene.interferer_psds.clear();
            let model = scene.build_spectral_model(1200.0).unwrap();
            let costs = scene.transmission_costs().unwrap();
            for alpha in [0.4, 0.75] {
                let sdp_val = sdp::solve(&steering_sdp(&model, &costs, alpha).unwrap())
                    .unwrap()
                    .objective_value;
                let lp_val = lp_fractional_value(&model, &costs, alpha);
                let brute = brute_force_selection(&model, &costs, alpha).unwrap().cost;
                assert!(sdp_val <= lp_val + 1e-5);
                assert!(lp_val <= brute + 1e-9);
            }
        }
    }

    #[test]
    fn rounding_keeps_feasible_boolean_fixed_point() {
        let (model, costs) = model_and_costs(6, 41);
        let alpha = 0.7;
        let brute = brute_force_selection(&model, &costs, alpha).unwrap();
        let res = round_selection(
            &brute.relaxed_p,
            &model,
            &costs,
            alpha,
            20,
            5,
        )
        .unwrap();
        assert_eq!(
            res.selection.indices().unwrap(),
            brute.selection.indices().unwrap()
        );
    }

    #[test]
    fn rounding_alpha_one_is_feasible_and_no_worse_than_full() {
        let (model, costs) = model_and_costs(6, 42);
        let relaxed = DVector::from_element(6, 1.0);
        let res = round_selection(&relaxed, &model, &costs, 1.0, 20, 7).unwrap();
        assert!(res.feasible);
        assert!(res.cost <= costs.c.sum() + 1e-12);
    }

    #[test]
    fn rounding_feasible_and_near_oracle_on_small_scenes() {
        let mut worst_gap: f64 = 0.0;
        for seed in 0..5 {
            let (model, costs) = model_and_costs(8, 50 + seed);
            let alpha = 0.85;
            let opts = SelectOptions {
                num_draws: 50,
                seed,
                ..SelectOptions::new(alpha)
            };
            let res = select_via_steering(&model, &costs, &opts).unwrap();
            assert!(res.feasible, "rounded selection must meet the constraint");
            let brute = brute_force_selection(&model, &costs, alpha).unwrap();
            assert!(res.cost >= brute.cost - 1e-9);
            worst_gap = worst_gap.max((res.cost - brute.cost) / brute.cost.max(1e-12));
        }
        // Informational: the hybrid rounding stays in the oracle's vicinity.
        assert!(worst_gap.is_finite());
    }

    #[test]
    fn covariance_solution_certifies_snr_direction() {
        let (model, costs) = model_and_costs(4, 61);
        let alpha = 0.8;
        let problem = covariance_sdp(&model, &costs, alpha).unwrap();
        let sol = sdp::solve(&problem).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let m = model.mic_count();
        let relaxed = clamp_unit(&sol.x.rows(0, m).into_owned());
        let np_rel = relaxed_noise_power(&model, &relaxed).unwrap();
        let beta = output_noise_power(&model, &SelectionVector::full(m)).unwrap();
        // The trace constraint plus the LMI imply the relaxed SNR bound.
        assert!(model.target_psd / np_rel >= alpha * model.target_psd / beta - 1e-5);
    }

    #[test]
    fn monotone_relaxed_cost_in_alpha() {
        let (model, costs) = model_and_costs(5, 71);
        let mut last = -1.0;
        for k in 1..=10 {
            let alpha = k as f64 / 10.0;
            let sol = sdp::solve(&steering_sdp(&model, &costs, alpha).unwrap()).unwrap();
            assert!(
                sol.objective_value >= last - 1e-6,
                "alpha={alpha}: {} < {last}",
                sol.objective_value
            );
            last = sol.objective_value;
        }
    }

    #[test]
    fn uncorrelated_identical_sensors_select_prefix() {
        // Mics on a circle around the target, FC at the center: equal costs,
        // equal contributions.
        let m = 6;
        let mics: Vec<[f64; 2]> = (0..m)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                [2.0 * th.cos(), 2.0 * th.sin()]
            })
            .collect();
        let scene = Scene {
            mic_positions: mics,
            target_position: [0.0, 0.0],
            interferer_positions: vec![],
            fc_position: [0.0, 0.0],
            target_psd: 1.0,
            interferer_psds: vec![],
            self_noise_snr_db: 30.0,
            speed_of_sound: crate::scene::SPEED_OF_SOUND,
            device_costs: vec![0.0; m],
            grid_spacing: None,
        };
        let model = scene.build_spectral_model(600.0).unwrap();
        let costs = scene.transmission_costs().unwrap();
        for (alpha, expect_k) in [(0.5, 3), (0.34, 3), (0.9, 6)] {
            let res = select_uncorrelated(&model, &costs, alpha).unwrap();
            let idx = res.selection.indices().unwrap();
            assert_eq!(idx.len(), expect_k, "alpha = {alpha}");
            assert_eq!(idx, (0..expect_k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn uncorrelated_alpha_one_selects_all() {
        let mut scene = random_scene(7, 81);
        scene.interferer_positions.clear();
        scene.interferer_psds.clear();
        let model = scene.build_spectral_model(900.0).unwrap();
        let costs = scene.transmission_costs().unwrap();
        let res = select_uncorrelated(&model, &costs, 1.0).unwrap();
        assert_eq!(res.selection.cardinality(), 7);
        assert!(res.snr >= res.target_snr - 1e-9);
    }

    #[test]
    fn uncorrelated_prefix_is_minimal() {
        for seed in 0..10 {
            let mut scene = random_scene(9, 90 + seed);
            scene.interferer_positions.clear();
            scene.interferer_psds.clear();
            let model = scene.build_spectral_model(1100.0).unwrap();
            let costs = scene.transmission_costs().unwrap();
            let alpha = 0.6;
            let res = select_uncorrelated(&model, &costs, alpha).unwrap();
            assert!(res.snr >= res.target_snr - 1e-9);
            // Dropping the worst-ranked selected sensor breaks feasibility.
            let idx = res.selection.indices().unwrap();
            if idx.len() > 1 {
                let rank = |i: usize| {
                    costs.c[i] * model.r_nn[(i, i)].re / model.steering[i].norm_sqr()
                };
                let worst = *idx
                    .iter()
                    .max_by(|&&a, &&b| rank(a).total_cmp(&rank(b)))
                    .unwrap();
                let rest: Vec<usize> = idx.iter().copied().filter(|&i| i != worst).collect();
                let eval = SubsetEvaluator::new(&model.r_nn, &model.steering).unwrap();
                let snr_rest = model.target_psd * eval.quad(&rest).unwrap();
                assert!(snr_rest < res.target_snr);
            }
        }
    }

    #[test]
    fn uncorrelated_rejects_correlated_noise() {
        let (model, costs) = model_and_costs(4, 95);
        assert!(matches!(
            select_uncorrelated(&model, &costs, 0.5),
            Err(Error::BadParameter(_))
        ));
    }

    #[test]
    fn schur_equivalence_of_lmi_and_scalar_condition() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mismatches = 0;
        for seed in 0..50u64 {
            let (model, _) = model_and_costs(4 + (seed % 3) as usize, 200 + seed);
            let m = model.mic_count();
            let dec = decompose_noise(&model.r_nn).unwrap();
            let ginv = linalg::chol_inverse(&dec.g, "G").unwrap();
            let a = &model.steering;
            let ga = &ginv * a;
            let beta = 1.0 / full_quad(&model).unwrap();
            let alpha = rng.gen_range(0.05..1.0);
            let p = DVector::from_fn(m, |_, _| {
                if rng.gen_bool(0.5) {
                    rng.gen_range(0.0..1.0)
                } else {
                    f64::from(rng.gen_bool(0.5) as u8)
                }
            });

            let mut lmi = CMat::zeros(m + 1, m + 1);
            for r in 0..m {
                for c in 0..m {
                    lmi[(r, c)] = ginv[(r, c)];
                }
                lmi[(r, r)] += Complex64::new(p[r] / dec.lambda, 0.0);
                lmi[(r, m)] = ga[r];
                lmi[(m, r)] = ga[r].conj();
            }
            lmi[(m, m)] = Complex64::new(a.dotc(&ga).re - alpha / beta, 0.0);
            let scale = lmi.norm();
            let lmi_margin = linalg::min_eigenvalue(&lmi) / scale;

            let mut mp = ginv.clone();
            for i in 0..m {
                mp[(i, i)] += Complex64::new(p[i] / dec.lambda, 0.0);
            }
            let inner = linalg::chol_solve_mat(&mp, &ginv).unwrap();
            let quad = a.dotc(&(&ginv * (&inner * a))).re;
            let scalar_margin = (a.dotc(&ga).re - alpha / beta - quad) / scale;

            let classify = |v: f64| {
                if v > 1e-8 {
                    1
                } else if v < -1e-8 {
                    -1
                } else {
                    0
                }
            };
            let (l, s) = (classify(lmi_margin), classify(scalar_margin));
            if l * s == -1 {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
    }
}
