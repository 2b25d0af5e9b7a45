//! Cyclic proximal-gradient (PALM) solver and the constrained least-squares
//! abundance solver used for initialization.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{diff_frobenius_sq, frobenius_sq, spectral_norm, Matrix};
use crate::model::{
    eval_smooth, grad_block, lipschitz_block, Block, ConstraintSet, FactorState, ProblemSpec,
};

/// Absolute slack tolerated on the objective between two sweeps.
pub const DESCENT_SLACK: f64 = 1e-9;

const GAP_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Step-size safety factor; steps are `1 / (alpha L)`. Must exceed 1.
    pub alpha: f64,
    /// Threshold on the relative objective gap between two sweeps.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Log the objective every `trace_every` sweeps; 0 disables logging.
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 2.0,
            rel_tol: 1e-4,
            max_iters: 10_000,
            trace_every: 0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: FactorState,
    /// Objective at the starting point followed by one value per sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Seconds spent in the solve loop.
    pub wall_time: f64,
}

impl SolveResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// One proximal-gradient step on `block`, all other blocks held fixed.
pub fn palm_step(
    spec: &ProblemSpec,
    st: &FactorState,
    block: Block,
    alpha: f64,
) -> Result<FactorState> {
    let mut next = st.clone();
    update_block(spec, &mut next, block, alpha, 0)?;
    Ok(next)
}

fn update_block(
    spec: &ProblemSpec,
    st: &mut FactorState,
    block: Block,
    alpha: f64,
    iteration: usize,
) -> Result<()> {
    let lipschitz = lipschitz_block(spec, st, block)?;
    let grad = grad_block(spec, st, block)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { block, iteration });
    }
    let x = st.block_mut(block);
    x.scaled_add(-1.0 / (alpha * lipschitz), &grad);
    spec.constraint_set(block).project_inplace(x);
    Ok(())
}

/// Runs PALM from a feasible starting point.
pub fn solve(spec: &ProblemSpec, st0: &FactorState, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_with_observer(spec, st0, cfg, |_, _, _| {})
}

/// Like [`solve`], calling `observer(iteration, state, objective)` after every sweep.
pub fn solve_with_observer<F>(
    spec: &ProblemSpec,
    st0: &FactorState,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<SolveResult>
where
    F: FnMut(usize, &FactorState, f64),
{
    cfg.validate()?;
    spec.validate()?;
    spec.check_feasible(st0)?;

    let start = Instant::now();
    let mut st = st0.clone();
    let mut previous = eval_smooth(spec, &st)?;
    let mut trace = vec![previous];
    let blocks = spec.variant.active_blocks();
    let mut converged = blocks.is_empty();
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        for &block in blocks {
            update_block(spec, &mut st, block, cfg.alpha, iterations)?;
        }
        let current = eval_smooth(spec, &st)?;
        if !current.is_finite() || current > previous + DESCENT_SLACK {
            return Err(Error::ObjectiveIncrease {
                iteration: iterations,
                previous,
                current,
            });
        }
        trace.push(current);
        observer(iterations, &st, current);
        if cfg.trace_every > 0 && iterations % cfg.trace_every == 0 {
            log::info!("{} sweep {iterations}: objective {current:.6e}", spec.variant);
        }
        let gap = (current - previous).abs() / previous.abs().max(GAP_FLOOR);
        converged = gap < cfg.rel_tol;
        previous = current;
    }

    Ok(SolveResult {
        state: st,
        objective_trace: trace,
        iterations,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

const FCLS_REL_TOL: f64 = 1e-8;
const FCLS_MAX_ITERS: usize = 50_000;

/// Fully constrained least squares: `min ||Y - M A||_F^2` over `A` with
/// columns on the simplex.
pub fn solve_fcls(y: &Matrix, m: &Matrix) -> Result<Matrix> {
    constrained_least_squares(y, m, ConstraintSet::SimplexColumns)
}

/// Accelerated projected gradient on `min ||Y - M A||_F^2, A in C` with the
/// exact modulus `||M^T M||` and gradient-based restart.
pub fn constrained_least_squares(y: &Matrix, m: &Matrix, set: ConstraintSet) -> Result<Matrix> {
    if y.nrows() != m.nrows() {
        return Err(Error::dims(
            "Y",
            "M",
            format!("row counts differ: {} vs {}", y.nrows(), m.nrows()),
        ));
    }
    if m.ncols() == 0 {
        return Err(Error::InvalidArgument("M has no columns".into()));
    }
    let r = m.ncols();
    let p = y.ncols();
    let gram = m.t().dot(m);
    let corr = m.t().dot(y);
    let lipschitz = spectral_norm(&gram, 1e-9)?;
    let mut x = Matrix::from_elem((r, p), 1.0 / r as f64);
    if lipschitz == 0.0 {
        return Ok(x);
    }
    let step = 1.0 / lipschitz;

    let mut extrapolated = x.clone();
    let mut momentum = 1.0f64;
    for _ in 0..FCLS_MAX_ITERS {
        let grad = gram.dot(&extrapolated) - &corr;
        let mut next = extrapolated.clone();
        next.scaled_add(-step, &grad);
        set.project_inplace(&mut next);

        let change = diff_frobenius_sq(next.view(), x.view()).sqrt();
        let scale = frobenius_sq(&next).sqrt().max(f64::MIN_POSITIVE);

        // Restart when the step points against the momentum direction.
        let restart = (&extrapolated - &next)
            .iter()
            .zip(next.iter().zip(x.iter()))
            .map(|(a, (n, o))| a * (n - o))
            .sum::<f64>()
            > 0.0;
        let next_momentum = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt())
        };
        let beta = if restart { 0.0 } else { (momentum - 1.0) / next_momentum };
        extrapolated = &next + &((&next - &x) * beta);
        momentum = next_momentum;
        x = next;
        if restart {
            extrapolated.assign(&x);
        }
        if change <= FCLS_REL_TOL * scale {
            break;
        }
    }
    set.project_inplace(&mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::project_simplex_columns;
    use crate::model::{Constraint, Ranks, Variant, Weights};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_shape_fn((r, c), |_| rng.random_range(0.0..1.0))
    }

    fn rand_simplex(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        let mut m = rand_mat(rng, r, c);
        for mut col in m.columns_mut() {
            let s = col.sum();
            col /= s;
        }
        m
    }

    fn random_state(rng: &mut ChaCha8Rng, spec: &ProblemSpec) -> FactorState {
        let mut st = FactorState::empty();
        for b in Block::ALL {
            if let Some((r, c)) = spec.block_shape(b) {
                *st.block_mut(b) = match spec.constraint_set(b) {
                    ConstraintSet::SimplexColumns => rand_simplex(rng, r, c),
                    ConstraintSet::NonNegative => rand_mat(rng, r, c),
                };
            }
        }
        st
    }

    fn spec_for(rng: &mut ChaCha8Rng, variant: Variant) -> ProblemSpec {
        let y = rand_mat(rng, 12, 30);
        let s = rand_mat(rng, 9, 30);
        ProblemSpec::new(
            y,
            Some(s),
            Ranks::new(3, 4, 5),
            Weights::new(1.0, 1.0, 1.0, 0.1),
            variant,
            Constraint::AbundanceSimplex,
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad_alpha = SolverConfig {
            alpha: 1.0,
            ..Default::default()
        };
        assert!(bad_alpha.validate().is_err());
        let bad_tol = SolverConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(bad_tol.validate().is_err());
    }

    #[test]
    fn step_at_stationary_point_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut spec = spec_for(&mut rng, Variant::Nmf);
        let st = random_state(&mut rng, &spec);
        spec.y = st.m.dot(&st.a);
        for b in [Block::M, Block::A] {
            let next = palm_step(&spec, &st, b, 2.0).unwrap();
            assert_eq!(next, st);
        }
    }

    #[test]
    fn step_with_zero_weights_leaves_a_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut spec = spec_for(&mut rng, Variant::Sp2u);
        spec.weights.lambda0 = 0.0;
        spec.weights.lambda2 = 0.0;
        let st = random_state(&mut rng, &spec);
        let next = palm_step(&spec, &st, Block::A, 2.0).unwrap();
        assert_eq!(next.a, st.a);
    }

    #[test]
    fn single_steps_do_not_increase_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for variant in [Variant::Sp2u, Variant::Nmf, Variant::NSp2u, Variant::CSpu] {
            let spec = spec_for(&mut rng, variant);
            let mut st = random_state(&mut rng, &spec);
            for &b in variant.active_blocks() {
                let before = eval_smooth(&spec, &st).unwrap();
                st = palm_step(&spec, &st, b, 2.0).unwrap();
                let after = eval_smooth(&spec, &st).unwrap();
                assert!(after <= before + 1e-12, "{variant} {b}: {before} -> {after}");
                assert!(spec.constraint_set(b).violation(st.block(b)) < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_point_converges_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut spec = spec_for(&mut rng, Variant::Nmf);
        let st = random_state(&mut rng, &spec);
        spec.y = st.m.dot(&st.a);
        let res = solve(&spec, &st, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 2);
        assert!(res.final_objective() < 1e-20);
    }

    #[test]
    fn solve_rejects_infeasible_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = spec_for(&mut rng, Variant::Nmf);
        let mut st = random_state(&mut rng, &spec);
        st.a *= 2.0;
        assert!(matches!(
            solve(&spec, &st, &SolverConfig::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn trace_is_monotone_and_states_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for variant in [Variant::Sp2u, Variant::Nmf, Variant::NSp2u, Variant::CSpu] {
            let spec = spec_for(&mut rng, variant);
            let st = random_state(&mut rng, &spec);
            let cfg = SolverConfig {
                max_iters: 200,
                ..Default::default()
            };
            let mut worst: f64 = 0.0;
            let res = solve_with_observer(&spec, &st, &cfg, |_, s, _| {
                worst = worst.max(spec.feasibility_violation(s));
            })
            .unwrap();
            assert!(worst < 1e-12);
            for w in res.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + DESCENT_SLACK);
            }
        }
    }

    #[test]
    fn cspu_without_coupling_reproduces_nmf_iterates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cspu = spec_for(&mut rng, Variant::CSpu);
        cspu.weights.lambda2 = 0.0;
        cspu.weights.lambda_z = 0.0;
        let st = random_state(&mut rng, &cspu);
        let mut nmf = cspu.clone();
        nmf.variant = Variant::Nmf;
        let mut nmf_st = st.clone();
        nmf_st.b = Matrix::zeros((0, 0));
        nmf_st.z = Matrix::zeros((0, 0));
        let cfg = SolverConfig {
            max_iters: 50,
            rel_tol: 1e-12,
            ..Default::default()
        };
        let a = solve(&cspu, &st, &cfg).unwrap();
        let b = solve(&nmf, &nmf_st, &cfg).unwrap();
        assert_eq!(a.state.m, b.state.m);
        assert_eq!(a.state.a, b.state.a);
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn fcls_recovers_planted_abundances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for r in 2..=5 {
            let m = rand_mat(&mut rng, 20, r);
            let a = rand_simplex(&mut rng, r, 50);
            let y = m.dot(&a);
            let est = solve_fcls(&y, &m).unwrap();
            let err = est.iter().zip(a.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "r = {r}: {err}");
        }
    }

    #[test]
    fn fcls_single_endmember_is_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = rand_mat(&mut rng, 6, 1);
        let y = rand_mat(&mut rng, 6, 10);
        let a = solve_fcls(&y, &m).unwrap();
        assert!(a.iter().all(|&v| v == 1.0));
    }

    /// Brute-force minimizer over a simplex grid of the given resolution.
    fn grid_oracle(y: &[f64], m: &Matrix, steps: usize) -> Vec<f64> {
        let r = m.ncols();
        let mut best = (f64::INFINITY, vec![0.0; r]);
        let mut visit = |a: Vec<f64>| {
            let res: f64 = (0..m.nrows())
                .map(|i| {
                    let fit: f64 = (0..r).map(|j| m[[i, j]] * a[j]).sum();
                    (y[i] - fit).powi(2)
                })
                .sum();
            if res < best.0 {
                best = (res, a);
            }
        };
        let h = 1.0 / steps as f64;
        for i in 0..=steps {
            if r == 2 {
                visit(vec![i as f64 * h, 1.0 - i as f64 * h]);
                continue;
            }
            for j in 0..=steps - i {
                let (a0, a1) = (i as f64 * h, j as f64 * h);
                visit(vec![a0, a1, (1.0 - a0 - a1).max(0.0)]);
            }
        }
        best.1
    }

    #[test]
    fn fcls_vertex_pixel_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for r in [2, 3] {
            let m = rand_mat(&mut rng, 8, r);
            let y = m.column(0).to_owned().insert_axis(ndarray::Axis(1));
            let a = solve_fcls(&y, &m).unwrap();
            let oracle = grid_oracle(y.as_slice().unwrap(), &m, 1000);
            for j in 0..r {
                let expect = if j == 0 { 1.0 } else { 0.0 };
                assert!((a[[j, 0]] - expect).abs() < 1e-6);
                assert!((a[[j, 0]] - oracle[j]).abs() <= 1e-3 + 1e-9);
            }
        }
        // Off-vertex pixel against the grid oracle.
        let m = rand_mat(&mut rng, 8, 3);
        let y = Matrix::from_shape_fn((8, 1), |_| rng.random_range(0.0..1.0));
        let a = solve_fcls(&y, &m).unwrap();
        let oracle = grid_oracle(y.as_slice().unwrap(), &m, 1000);
        let fit = |v: &[f64]| -> f64 {
            (0..8)
                .map(|i| (y[[i, 0]] - (0..3).map(|j| m[[i, j]] * v[j]).sum::<f64>()).powi(2))
                .sum()
        };
        assert!(fit(&a.column(0).to_vec()) <= fit(&oracle) + 1e-12);
        let proj = project_simplex_columns(&a);
        assert_eq!(proj, a);
    }
}
