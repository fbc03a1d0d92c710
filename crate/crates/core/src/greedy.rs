//! Data-driven two-phase greedy selection: grow a candidate set through
//! transmission-range neighborhoods, solve the steering-vector SDP restricted
//! to the candidate set under a candidate-set-relative noise-power bound, then
//! switch to the full-network bound once the candidate set stops growing.

use crate::beamform::SubsetEvaluator;
use crate::error::{Error, Result};
use crate::model_driven::{round_selection_core, steering_sdp_with_bound, SelectionResult};
use crate::scene::{CostVector, Scene, SpectralModel};
use crate::sdp::{self, SolveStatus, SolverOptions};
use crate::trace::{Phase, SelectionTrace, TraceRecord};
use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct GreedyOptions {
    pub alpha: f64,
    /// Initial spatial point the candidate set grows from.
    pub z0: [f64; 2],
    /// Transmission range for neighborhood expansion (meters).
    pub r0: f64,
    pub max_iter: usize,
    /// Rounding draws per iteration; the restricted subproblems are small.
    pub rounding_draws: usize,
    pub seed: u64,
    /// Stop after the local phase (nonstandard variant; the result is then
    /// only guaranteed against the candidate-set-relative bound).
    pub local_only: bool,
    pub solver: SolverOptions,
}

impl GreedyOptions {
    pub fn new(alpha: f64, z0: [f64; 2], r0: f64) -> Self {
        Self {
            alpha,
            z0,
            r0,
            max_iter: 200,
            rounding_draws: 50,
            seed: 0,
            local_only: false,
            solver: SolverOptions::default(),
        }
    }
}

/// Microphones within `r0` of `z0`.
pub fn initial_candidates(scene: &Scene, z0: [f64; 2], r0: f64) -> Result<Vec<usize>> {
    if !(r0 > 0.0) {
        return Err(Error::BadParameter(format!(
            "transmission range must be positive, got {r0}"
        )));
    }
    let set: Vec<usize> = scene
        .mic_positions
        .iter()
        .enumerate()
        .filter(|(_, &p)| {
            let dx = p[0] - z0[0];
            let dy = p[1] - z0[1];
            (dx * dx + dy * dy).sqrt() <= r0
        })
        .map(|(i, _)| i)
        .collect();
    if set.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(set)
}

/// `s2` plus every microphone within `r0` of any member of `s2`.
pub fn expand_candidates(scene: &Scene, s2: &[usize], r0: f64) -> Result<Vec<usize>> {
    if s2.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut out: Vec<usize> = scene
        .mic_positions
        .iter()
        .enumerate()
        .filter(|(i, &p)| {
            s2.contains(i)
                || s2.iter().any(|&j| {
                    let q = scene.mic_positions[j];
                    let dx = p[0] - q[0];
                    let dy = p[1] - q[1];
                    (dx * dx + dy * dy).sqrt() <= r0
                })
        })
        .map(|(i, _)| i)
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Default transmission range: the grid spacing for grid layouts, otherwise
/// the random-geometric-graph connectivity radius scaled by the array extent.
pub fn default_transmission_range(scene: &Scene) -> f64 {
    if let Some(s) = scene.grid_spacing {
        return s;
    }
    let m = scene.mic_count().max(2) as f64;
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &scene.mic_positions {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let extent = (max_x - min_x).max(max_y - min_y).max(1e-9);
    ((2.0 * m).ln() / m).sqrt() * extent
}

struct GreedyRunner<'a> {
    model: &'a SpectralModel,
    costs: &'a CostVector,
    opts: &'a GreedyOptions,
    snr_full: f64,
    quad_full: f64,
    trace: SelectionTrace,
    iteration: usize,
    last_status: SolveStatus,
}

impl<'a> GreedyRunner<'a> {
    fn evaluator(&self) -> Result<SubsetEvaluator<'a>> {
        SubsetEvaluator::new(&self.model.r_nn, &self.model.steering)
    }

    fn bump_iteration(&mut self) -> Result<()> {
        self.iteration += 1;
        if self.iteration > self.opts.max_iter {
            return Err(Error::IterationLimit {
                iterations: self.iteration - 1,
                trace: Box::new(std::mem::take(&mut self.trace)),
            });
        }
        Ok(())
    }

    /// Solves the restricted steering SDP with the given quadratic bound and
    /// rounds within the candidate set; returns global indices.
    fn solve_restricted(
        &mut self,
        s1: &[usize],
        quad_bound: f64,
    ) -> Result<(Vec<usize>, DVector<f64>)> {
        let restricted = self.model.restrict(s1);
        let costs_sub = self.costs.restrict(s1);
        let problem =
            steering_sdp_with_bound(&restricted.r_nn, &restricted.steering, &costs_sub, quad_bound)?;
        let sol = sdp::solve_with(&problem, &self.opts.solver)?;
        self.last_status = sol.status;
        let relaxed_local = sol.x.map(|v| v.clamp(0.0, 1.0));
        let local_sel = round_selection_core(
            &relaxed_local,
            &restricted.r_nn,
            &restricted.steering,
            &costs_sub,
            quad_bound,
            self.opts.rounding_draws,
            self.opts.seed.wrapping_add(self.iteration as u64),
        )?;
        let global: Vec<usize> = local_sel.iter().map(|&k| s1[k]).collect();
        let mut relaxed_global = DVector::zeros(self.model.mic_count());
        for (k, &gi) in s1.iter().enumerate() {
            relaxed_global[gi] = relaxed_local[k];
        }
        Ok((global, relaxed_global))
    }

    fn record(&mut self, phase: Phase, s1: &[usize], s2: &[usize], ops: u64) -> Result<()> {
        let eval = self.evaluator()?;
        let quad = eval.quad(s2)?;
        self.trace.push(TraceRecord {
            iteration: self.iteration,
            phase,
            s1_size: s1.len(),
            s2_size: s2.len(),
            cost: self.costs.subset_cost(s2),
            noise_power: 1.0 / quad,
            solve_ops: ops,
        });
        Ok(())
    }
}

fn cube(n: usize) -> u64 {
    let n = n as u64;
    n * n * n
}

/// Runs both greedy phases from the given initial candidate set.
fn run_from(
    scene: &Scene,
    model: &SpectralModel,
    costs: &CostVector,
    opts: &GreedyOptions,
    mut s1: Vec<usize>,
) -> Result<(SelectionResult, SelectionTrace)> {
    if !(opts.alpha > 0.0 && opts.alpha <= 1.0) {
        return Err(Error::BadParameter(format!(
            "alpha must lie in (0, 1], got {}",
            opts.alpha
        )));
    }
    if opts.max_iter < 1 {
        return Err(Error::BadParameter("max_iter must be at least 1".into()));
    }
    let eval = SubsetEvaluator::new(&model.r_nn, &model.steering)?;
    let all: Vec<usize> = (0..model.mic_count()).collect();
    let quad_full = eval.quad(&all)?;
    let mut runner = GreedyRunner {
        model,
        costs,
        opts,
        snr_full: model.target_psd * quad_full,
        quad_full,
        trace: SelectionTrace::new(),
        iteration: 0,
        last_status: SolveStatus::Optimal,
    };

    // Local phase: bound relative to the current candidate set.
    let mut s2: Vec<usize>;
    let mut relaxed: DVector<f64>;
    loop {
        runner.bump_iteration()?;
        let eval = runner.evaluator()?;
        let quad_s1 = eval.quad(&s1)?;
        let (sel, rel) = runner.solve_restricted(&s1, runner.opts.alpha * quad_s1)?;
        s2 = sel;
        relaxed = rel;
        runner.record(Phase::Local, &s1, &s2, cube(s1.len()))?;
        let s1_new = expand_candidates(scene, &s2, opts.r0)?;
        if s1_new == s1 {
            break;
        }
        s1 = s1_new;
    }

    if !opts.local_only {
        // Global phase: the bound references the full network.
        let target_quad = opts.alpha * runner.quad_full;
        loop {
            runner.bump_iteration()?;
            let eval = runner.evaluator()?;
            let quad_s1 = eval.quad(&s1)?;
            if quad_s1 < target_quad * (1.0 - 1e-12) {
                // The candidate set cannot meet the global bound yet: keep
                // everything and expand.
                s2 = s1.clone();
                runner.record(Phase::Global, &s1, &s2, cube(s1.len()))?;
                let s1_new = expand_candidates(scene, &s2, opts.r0)?;
                if s1_new == s1 {
                    return Err(Error::CandidatesExhausted);
                }
                s1 = s1_new;
                continue;
            }
            let (sel, rel) = runner.solve_restricted(&s1, target_quad)?;
            s2 = sel;
            relaxed = rel;
            runner.record(Phase::Global, &s1, &s2, cube(s1.len()))?;
            let s1_new = expand_candidates(scene, &s2, opts.r0)?;
            if s1_new == s1 {
                break;
            }
            s1 = s1_new;
        }
    }

    let quad = runner.evaluator()?.quad(&s2)?;
    let snr = model.target_psd * quad;
    let target_snr = opts.alpha * runner.snr_full;
    let values = DVector::from_fn(model.mic_count(), |i, _| {
        if s2.binary_search(&i).is_ok() {
            1.0
        } else {
            0.0
        }
    });
    let result = SelectionResult {
        relaxed_p: relaxed,
        selection: crate::beamform::SelectionVector::relaxed(values)?,
        cost: costs.subset_cost(&s2),
        noise_power: 1.0 / quad,
        snr,
        feasible: snr >= target_snr - 1e-6,
        target_snr,
        solver_status: Some(runner.last_status),
    };
    Ok((result, runner.trace))
}

/// Two-phase greedy selection started from the neighborhood of `z0`.
pub fn greedy_select(
    scene: &Scene,
    model: &SpectralModel,
    costs: &CostVector,
    opts: &GreedyOptions,
) -> Result<(SelectionResult, SelectionTrace)> {
    let s1 = initial_candidates(scene, opts.z0, opts.r0)?;
    run_from(scene, model, costs, opts, s1)
}

/// Greedy re-run seeded with a previously selected set, for scenes whose
/// fusion center (and hence cost vector) moved.
pub fn warm_restart(
    prev: &SelectionResult,
    scene: &Scene,
    model: &SpectralModel,
    costs: &CostVector,
    opts: &GreedyOptions,
) -> Result<(SelectionResult, SelectionTrace)> {
    let prev_indices = prev.selection.indices()?;
    if prev_indices.is_empty() {
        return Err(Error::EmptySelection);
    }
    let s1 = expand_candidates(scene, &prev_indices, opts.r0)?;
    run_from(scene, model, costs, opts, s1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::{output_noise_power, SelectionVector};
    use crate::scene::Scene;

    fn grid_index(scene: &Scene, pos: [f64; 2]) -> usize {
        scene
            .mic_positions
            .iter()
            .position(|&p| (p[0] - pos[0]).abs() < 1e-9 && (p[1] - pos[1]).abs() < 1e-9)
            .unwrap()
    }

    #[test]
    fn initial_candidates_interior_node_neighborhood() {
        let scene = Scene::desk_scale(); // 7x7, 2 m spacing
        let z0 = [6.0, 6.0]; // central node
        let set = initial_candidates(&scene, z0, 2.0).unwrap();
        assert_eq!(set.len(), 5); // node plus its 4-neighborhood
        let center = grid_index(&scene, z0);
        assert!(set.contains(&center));
        for p in [[4.0, 6.0], [8.0, 6.0], [6.0, 4.0], [6.0, 8.0]] {
            assert!(set.contains(&grid_index(&scene, p)));
        }
    }

    #[test]
    fn initial_candidates_room_diagonal_takes_all() {
        let scene = Scene::desk_scale();
        let diag = (2.0f64 * 12.0 * 12.0).sqrt();
        let set = initial_candidates(&scene, [0.0, 0.0], diag).unwrap();
        assert_eq!(set.len(), scene.mic_count());
    }

    #[test]
    fn initial_candidates_connectivity_radius_matches_filter() {
        // 49 nodes on a unit-square grid, range sqrt(log(2M)/M).
        let doc = r#"{
            "grid": {"nx": 7, "ny": 7, "width_m": 1.0, "height_m": 1.0},
            "target": [0.31, 0.77],
            "fc": [0.5, 0.1]
        }"#;
        let scene = Scene::from_json_str(doc).unwrap();
        let m = scene.mic_count() as f64;
        let r0 = ((2.0 * m).ln() / m).sqrt();
        let z0 = [0.5, 0.5];
        let set = initial_candidates(&scene, z0, r0).unwrap();
        let expect: Vec<usize> = scene
            .mic_positions
            .iter()
            .enumerate()
            .filter(|(_, p)| ((p[0] - z0[0]).powi(2) + (p[1] - z0[1]).powi(2)).sqrt() <= r0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(set, expect);
        assert!(!set.is_empty());
    }

    #[test]
    fn initial_candidates_empty_errors() {
        let scene = Scene::desk_scale();
        assert!(matches!(
            initial_candidates(&scene, [-100.0, -100.0], 1.0),
            Err(Error::EmptyCandidates)
        ));
    }

    #[test]
    fn expand_single_interior_node() {
        let scene = Scene::desk_scale();
        let center = grid_index(&scene, [6.0, 6.0]);
        let set = expand_candidates(&scene, &[center], 2.0).unwrap();
        assert_eq!(set.len(), 5);
    }

    #[test]
    fn expand_full_network_is_fixed_point() {
        let scene = Scene::desk_scale();
        let all: Vec<usize> = (0..scene.mic_count()).collect();
        let set = expand_candidates(&scene, &all, 2.0).unwrap();
        assert_eq!(set, all);
    }

    #[test]
    fn expand_two_adjacent_nodes_unions_neighborhoods() {
        let scene = Scene::desk_scale();
        let a = grid_index(&scene, [6.0, 6.0]);
        let b = grid_index(&scene, [8.0, 6.0]);
        let set = expand_candidates(&scene, &[a, b], 2.0).unwrap();
        let expect: Vec<usize> = scene
            .mic_positions
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                [[6.0, 6.0], [8.0, 6.0]].iter().any(|q| {
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() <= 2.0
                })
            })
            .map(|(i, _)| i)
            .collect();
        assert_eq!(set, expect);
    }

    #[test]
    fn default_range_prefers_grid_spacing() {
        let scene = Scene::desk_scale();
        assert_eq!(default_transmission_range(&scene), 2.0);
        let mut free = scene.clone();
        free.grid_spacing = None;
        let m = free.mic_count() as f64;
        let expect = ((2.0 * m).ln() / m).sqrt() * 12.0;
        assert!((default_transmission_range(&free) - expect).abs() < 1e-12);
    }

    #[test]
    fn greedy_trace_invariants_and_global_feasibility() {
        let scene = Scene::desk_scale();
        let model = scene.build_spectral_model(2.0 * std::f64::consts::PI * 500.0).unwrap();
        let costs = scene.transmission_costs().unwrap();
        let opts = GreedyOptions::new(0.8, [9.0, 3.0], 2.0);
        let (res, trace) = greedy_select(&scene, &model, &costs, &opts).unwrap();
        assert!(res.feasible);
        let beta = output_noise_power(&model, &SelectionVector::full(scene.mic_count())).unwrap();
        assert!(res.noise_power <= beta / opts.alpha + 1e-6 * beta);

        // Iterations strictly increase; s2 within s1; s1 monotone in the local phase.
        let mut last_iter = 0;
        let mut last_local_s1 = 0;
        let mut seen_global = false;
        for r in &trace.records {
            assert!(r.iteration > last_iter);
            last_iter = r.iteration;
            assert!(r.s2_size <= r.s1_size);
            match r.phase {
                Phase::Local => {
                    assert!(!seen_global, "local records precede global ones");
                    assert!(r.s1_size >= last_local_s1);
                    last_local_s1 = r.s1_size;
                }
                Phase::Global => seen_global = true,
                Phase::Utility => unreachable!(),
            }
        }
        assert!(seen_global);
    }

    #[test]
    fn greedy_single_sensor_scene_converges_fast() {
        // Generous alpha: the nearest sensor alone satisfies the constraint.
        let scene = Scene::desk_scale();
        let model = scene.build_spectral_model(2.0 * std::f64::consts::PI * 500.0).unwrap();
        let costs = scene.transmission_costs().unwrap();
        // Find the sensor whose single-sensor SNR already beats alpha*SNR_full.
        let eval = SubsetEvaluator::new(&model.r_nn, &model.steering).unwrap();
        let all: Vec<usize> = (0..scene.mic_count()).collect();
        let full = eval.quad(&all).unwrap();
        let best = (0..scene.mic_count())
            .max_by(|&a, &b| {
                eval.quad(&[a]).unwrap().total_cmp(&eval.quad(&[b]).unwrap())
            })
            .unwrap();
        let alpha = 0.9 * eval.quad(&[best]).unwrap() / full;
        let opts = GreedyOptions::new(alpha, scene.mic_positions[best], 2.0);
        let (res, trace) = greedy_select(&scene, &model, &costs, &opts).unwrap();
        assert_eq!(res.selection.cardinality(), 1);
        let local_iters = trace
            .records
            .iter()
            .filter(|r| r.phase == Phase::Local)
            .count();
        assert!(local_iters <= 2);
    }

    #[test]
    fn warm_restart_with_unmoved_fc_is_quick_fixed_point() {
        let scene = Scene::desk_scale();
        let model = scene.build_spectral_model(2.0 * std::f64::consts::PI * 500.0).unwrap();
        let costs = scene.transmission_costs().unwrap();
        let opts = GreedyOptions::new(0.8, [9.0, 3.0], 2.0);
        let (res, _) = greedy_select(&scene, &model, &costs, &opts).unwrap();
        let (res2, trace2) = warm_restart(&res, &scene, &model, &costs, &opts).unwrap();
        assert!(trace2.len() <= 2);
        assert!((res2.noise_power - res.noise_power).abs() <= 1e-9 * res.noise_power);
    }
}
