//! Filter evaluation on truncated inputs, the derivative recursion, and
//! the input/state forgetting experiments.
//!
//! The filter of a contracting reservoir map is evaluated on a window
//! either by a single forward pass from an initial state (washout) or by
//! Picard sweeps of the whole-window map; both converge to the same
//! window-restricted solution, and the reported truncation bound covers
//! the distance to the semi-infinite filter.

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::certify::Certificate;
use crate::error::Error;
use crate::reservoir::{ReservoirSystem, SamplingSpec};
use crate::seqspace::{norm, NormSpec, WeightingSequence, Window};
use crate::Result;

/// Default truncation depth; for contraction constants up to 0.9 the
/// truncation factor c^T underflows double precision comfortably.
pub const DEFAULT_DEPTH: usize = 200;

/// Default Picard tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Evaluation strategy for [`eval_filter`].
#[derive(Debug, Clone)]
pub enum EvalMode {
    /// One forward pass over the window starting from `x_init`.
    ForwardWashout { x_init: DVector<f64> },
    /// Whole-window fixed-point sweeps with the oldest predecessor pinned
    /// at `x_init`.
    Picard { x_init: DVector<f64>, max_iter: usize, tol: f64 },
}

/// States (and outputs) of the filter on a window.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub states: Window,
    pub outputs: Option<Window>,
    /// A-priori bound on the gap to the semi-infinite filter at time 0,
    /// `C * L_Fx^T`; `None` when no analytic contraction constant below
    /// one is available.
    pub truncation_error_bound: Option<f64>,
    pub iterations: usize,
    /// Max recursion residual over the window, oldest state checked
    /// against the configured initial state.
    pub residual: f64,
    /// Weighted norms of consecutive Picard sweep differences; empty for
    /// the forward mode.
    pub sweep_gaps: Vec<f64>,
    pub x_init: DVector<f64>,
}

/// Gap trace of a forgetting experiment with its certified envelope.
#[derive(Debug, Clone)]
pub struct ForgettingReport {
    pub gaps: Vec<f64>,
    pub envelope: Option<Vec<f64>>,
    pub violations: usize,
}

fn count_violations(gaps: &[f64], envelope: &[f64]) -> usize {
    gaps.iter()
        .zip(envelope)
        .filter(|(g, e)| **g > **e * (1.0 + 1e-9) + 1e-300)
        .count()
}

/// Runs the reservoir flow over a forward-indexed window: row `i` of `z`
/// is the input at step `i + 1` and the returned window holds the states
/// after each step.
pub fn run_flow(sys: &ReservoirSystem, z: &Window, x0: &DVector<f64>) -> Result<Window> {
    if z.dim() != sys.input_dim() {
        return Err(Error::DimensionMismatch { expected: sys.input_dim(), got: z.dim() });
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch { expected: sys.state_dim(), got: x0.len() });
    }
    let mut states = DMatrix::zeros(z.depth(), sys.state_dim());
    let mut x = x0.clone();
    for i in 0..z.depth() {
        x = sys.apply(&x, &z.values().row(i).transpose())?;
        states.row_mut(i).copy_from(&x.transpose());
    }
    Window::new(states)
}

fn washout_bound(sys: &ReservoirSystem, z: &Window, x_init: &DVector<f64>) -> Result<Option<f64>> {
    // SAS constants are sampled lower bounds on L_Fx, which cannot
    // certify a truncation bound; skip the grid entirely.
    if matches!(
        sys.family(),
        crate::reservoir::Family::TrigSas { .. } | crate::reservoir::Family::RegularSas { .. }
    ) {
        return Ok(None);
    }
    let constants = match sys.constants(&SamplingSpec::default()) {
        Ok(k) => k,
        Err(_) => return Ok(None),
    };
    if constants.provenance != crate::reservoir::ConstProvenance::Analytic {
        return Ok(None);
    }
    if !(constants.l_fx < 1.0) {
        return Ok(None);
    }
    let diameter = if sys.compact_image() {
        2.0 * (sys.state_dim() as f64).sqrt()
    } else {
        let oldest = z.at(-(z.depth() as i64) + 1);
        (x_init - sys.apply(x_init, &oldest)?).norm() / (1.0 - constants.l_fx)
    };
    Ok(Some(diameter * constants.l_fx.powi(z.depth() as i32)))
}

/// Evaluates the reservoir filter on a window. `ForwardWashout` needs
/// `L_Fx < 1` for its truncation bound to mean anything; `Picard` sweeps
/// contract in the weighted norm with factor `L_Fx * L_w` per sweep and
/// converge exactly within `depth` sweeps regardless.
pub fn eval_filter(
    sys: &ReservoirSystem,
    z: &Window,
    w: &WeightingSequence,
    mode: &EvalMode,
) -> Result<FilterResult> {
    if z.dim() != sys.input_dim() {
        return Err(Error::DimensionMismatch { expected: sys.input_dim(), got: z.dim() });
    }
    let depth = z.depth();
    let spec = NormSpec::Weighted(w.clone());
    match mode {
        EvalMode::ForwardWashout { x_init } => {
            let states = run_flow(sys, z, x_init)?;
            finish(sys, z, states, x_init.clone(), 1, Vec::new())
        }
        EvalMode::Picard { x_init, max_iter, tol } => {
            if x_init.len() != sys.state_dim() {
                return Err(Error::DimensionMismatch {
                    expected: sys.state_dim(),
                    got: x_init.len(),
                });
            }
            let mut current =
                Window::new(DMatrix::from_fn(depth, sys.state_dim(), |_, j| x_init[j]))?;
            let mut sweep_gaps = Vec::new();
            for sweep in 1..=*max_iter {
                let mut next = DMatrix::zeros(depth, sys.state_dim());
                for i in 0..depth {
                    let pred = if i == 0 {
                        x_init.clone()
                    } else {
                        current.values().row(i - 1).transpose()
                    };
                    let new = sys.apply(&pred, &z.values().row(i).transpose())?;
                    next.row_mut(i).copy_from(&new.transpose());
                }
                let next = Window::new(next)?;
                let gap = norm(&next.sub(&current)?, &spec)?;
                sweep_gaps.push(gap);
                current = next;
                if gap < *tol {
                    let residual = window_residual(sys, &current, z, x_init)?;
                    if residual <= *tol {
                        return finish(sys, z, current, x_init.clone(), sweep, sweep_gaps);
                    }
                }
            }
            let residual = window_residual(sys, &current, z, x_init)?;
            Err(Error::NoConvergence { residual, iterations: *max_iter })
        }
    }
}

fn window_residual(
    sys: &ReservoirSystem,
    states: &Window,
    z: &Window,
    x_init: &DVector<f64>,
) -> Result<f64> {
    let depth = states.depth();
    let mut residual: f64 = 0.0;
    for i in 0..depth {
        let pred = if i == 0 { x_init.clone() } else { states.values().row(i - 1).transpose() };
        let expected = sys.apply(&pred, &z.values().row(i).transpose())?;
        residual = residual.max((states.values().row(i).transpose() - expected).norm());
    }
    Ok(residual)
}

fn finish(
    sys: &ReservoirSystem,
    z: &Window,
    states: Window,
    x_init: DVector<f64>,
    iterations: usize,
    sweep_gaps: Vec<f64>,
) -> Result<FilterResult> {
    let residual = window_residual(sys, &states, z, &x_init)?;
    let outputs = match sys.readout() {
        Some(r) => {
            let mut out = DMatrix::zeros(states.depth(), r.output_dim());
            for i in 0..states.depth() {
                let y = crate::reservoir::readout_apply(r, &states.values().row(i).transpose())?;
                out.row_mut(i).copy_from(&y.transpose());
            }
            Some(Window::new(out)?)
        }
        None => None,
    };
    let truncation_error_bound = washout_bound(sys, z, &x_init)?;
    Ok(FilterResult {
        states,
        outputs,
        truncation_error_bound,
        iterations,
        residual,
        sweep_gaps,
        x_init,
    })
}

/// Directional derivative of the filter along the input direction `u`,
/// from the recursion `v_t =ature D_xF(x_{t-1}, z_t) v_{t-1} + D_zF(x_{t-1},
/// z_t) u_t` with `v` vanishing before the window.
pub fn directional_derivative(
    sys: &ReservoirSystem,
    flow: &FilterResult,
    z: &Window,
    u: &Window,
) -> Result<Window> {
    if flow.states.depth() != z.depth() || flow.states.dim() != sys.state_dim() {
        return Err(Error::StaleState);
    }
    if u.depth() != z.depth() || u.dim() != z.dim() {
        return Err(Error::DimensionMismatch { expected: z.dim(), got: u.dim() });
    }
    let depth = z.depth();
    let mut out = DMatrix::zeros(depth, sys.state_dim());
    let mut v = DVector::zeros(sys.state_dim());
    for i in 0..depth {
        let pred = if i == 0 {
            flow.x_init.clone()
        } else {
            flow.states.values().row(i - 1).transpose()
        };
        let zi = z.values().row(i).transpose();
        let jx = sys.jacobian_x(&pred, &zi)?;
        let jz = sys.jacobian_z(&pred, &zi)?;
        v = &jx * v + jz * u.values().row(i).transpose();
        out.row_mut(i).copy_from(&v.transpose());
    }
    Window::new(out)
}

/// Norms of the partial derivatives of the reservoir functional with
/// respect to each input component at lags `0..=depth`: entry `(t, i)` is
/// the Euclidean norm of the time-0 response to a unit impulse at lag
/// `-t`, component `i`. Impulses use unit magnitude; the certified
/// envelope scales with `w_{-t}` instead.
pub fn functional_partials(
    sys: &ReservoirSystem,
    flow: &FilterResult,
    z: &Window,
    depth: usize,
) -> Result<DMatrix<f64>> {
    if depth >= z.depth() {
        return Err(Error::DepthExceeded { depth: z.depth(), requested: depth });
    }
    let n = sys.input_dim();
    let mut out = DMatrix::zeros(depth + 1, n);
    for lag in 0..=depth {
        for comp in 0..n {
            let mut impulse = DMatrix::zeros(z.depth(), n);
            let row = z.depth() - 1 - lag;
            impulse[(row, comp)] = 1.0;
            let v = directional_derivative(sys, flow, z, &Window::new(impulse)?)?;
            out[(lag, comp)] = v.at(0).norm();
        }
    }
    Ok(out)
}

/// Measures how two past windows `u`, `v` are forgotten along a common
/// future `z_future`: both runs wash out from the same initial state,
/// continue through the future rows, and the report carries the gaps
/// `g_t` for `t = 1..=len(z_future)`. A certified contraction certificate
/// supplies the envelope `L_{U^F} * D_w^t * |u - v|_w`.
pub fn input_forgetting_experiment(
    sys: &ReservoirSystem,
    u: &Window,
    v: &Window,
    z_future: &Window,
    w: &WeightingSequence,
    certificate: Option<&Certificate>,
) -> Result<ForgettingReport> {
    if u.depth() != v.depth() || u.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), got: v.dim() });
    }
    let x_init = DVector::zeros(sys.state_dim());
    let run = |past: &Window| -> Result<Vec<DVector<f64>>> {
        let mut x = x_init.clone();
        for i in 0..past.depth() {
            x = sys.apply(&x, &past.values().row(i).transpose())?;
        }
        let mut states = Vec::with_capacity(z_future.depth());
        for i in 0..z_future.depth() {
            x = sys.apply(&x, &z_future.values().row(i).transpose())?;
            states.push(x.clone());
        }
        Ok(states)
    };
    let a = run(u)?;
    let b = run(v)?;
    let gaps: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).collect();

    let envelope = match certificate {
        None => None,
        Some(cert) => {
            if !cert.is_certified() {
                return Err(Error::CertificateRequired);
            }
            let lipschitz =
                cert.implied.filter_lipschitz.ok_or(Error::CertificateRequired)?;
            let d_w = w.decay_ratios(64.max(u.depth()))?.d_w;
            let gap_w = norm(&u.sub(v)?, &NormSpec::Weighted(w.clone()))?;
            Some(
                (1..=z_future.depth())
                    .map(|t| lipschitz * d_w.powi(t as i32) * gap_w)
                    .collect::<Vec<f64>>(),
            )
        }
    };
    let violations = envelope.as_ref().map_or(0, |env| count_violations(&gaps, env));
    Ok(ForgettingReport { gaps, envelope, violations })
}

/// Measures how two initial states are forgotten along a common
/// forward-indexed input, with the contraction envelope
/// `c^{t-1} * |F(x0, z_1) - F(x0bar, z_1)|` when `L_Fx < 1` is analytic.
pub fn state_forgetting_experiment(
    sys: &ReservoirSystem,
    z: &Window,
    x0: &DVector<f64>,
    x0_bar: &DVector<f64>,
) -> Result<ForgettingReport> {
    let flow_a = run_flow(sys, z, x0)?;
    let flow_b = run_flow(sys, z, x0_bar)?;
    let gaps: Vec<f64> = (0..z.depth())
        .map(|i| (flow_a.values().row(i) - flow_b.values().row(i)).norm())
        .collect();

    let envelope = match sys.constants(&SamplingSpec::default()) {
        Ok(k)
            if k.l_fx < 1.0
                && k.provenance == crate::reservoir::ConstProvenance::Analytic =>
        {
            let first = gaps.first().copied().unwrap_or(0.0);
            Some(
                (0..z.depth())
                    .map(|i| k.l_fx.powi(i as i32) * first)
                    .collect::<Vec<f64>>(),
            )
        }
        _ => None,
    };
    let violations = envelope.as_ref().map_or(0, |env| count_violations(&gaps, env));
    Ok(ForgettingReport { gaps, envelope, violations })
}

/// Convenience: forward evaluation with a zero initial state.
pub fn eval_forward_zero(
    sys: &ReservoirSystem,
    z: &Window,
    w: &WeightingSequence,
) -> Result<FilterResult> {
    let mode = EvalMode::ForwardWashout { x_init: DVector::zeros(sys.state_dim()) };
    eval_filter(sys, z, w, &mode)
}

impl ForgettingReport {
    /// Largest measured gap.
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().fold(0.0, |acc, g| acc.max(*g))
    }
}

/// Builds the window obtained by perturbing `z` at one lag/component by
/// `delta`; useful for causality checks and finite differences.
pub fn perturb(z: &Window, lag: usize, comp: usize, delta: f64) -> Result<Window> {
    if lag >= z.depth() {
        return Err(Error::DepthExceeded { depth: z.depth(), requested: lag });
    }
    if comp >= z.dim() {
        return Err(Error::DimensionMismatch { expected: z.dim(), got: comp });
    }
    let mut values = z.values().clone();
    let row = z.depth() - 1 - lag;
    values[(row, comp)] += delta;
    if !values[(row, comp)].is_finite() {
        return Err(Error::InvalidInput(String::from("perturbation made an entry non-finite")));
    }
    Window::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::certify_contraction;
    use crate::reservoir::Squashing;
    use crate::rng::SplitMix64;
    use crate::seqspace::shift;
    use approx::assert_relative_eq;

    fn geo(l: f64) -> WeightingSequence {
        WeightingSequence::geometric(l).unwrap()
    }

    fn scalar_linear(a: f64, c: f64) -> ReservoirSystem {
        ReservoirSystem::linear(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, c),
            None,
        )
        .unwrap()
    }

    fn scalar_esn(a: f64, c: f64, sigma: Squashing) -> ReservoirSystem {
        ReservoirSystem::esn(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, c),
            DVector::zeros(1),
            sigma,
            None,
        )
        .unwrap()
    }

    fn random_window(rng: &mut SplitMix64, depth: usize, dim: usize, scale: f64) -> Window {
        Window::new(DMatrix::from_fn(depth, dim, |_, _| rng.uniform_in(-scale, scale))).unwrap()
    }

    #[test]
    fn memoryless_flow_echoes_inputs() {
        let sys = scalar_linear(0.0, 1.0);
        let z = Window::scalar(&[1.0, -2.0, 3.0]).unwrap();
        let states = run_flow(&sys, &z, &DVector::zeros(1)).unwrap();
        assert_eq!(states, z);
    }

    #[test]
    fn scalar_linear_flow_matches_geometric_sum() {
        // x_t = 2 (1 - 0.5^t) for constant unit input from rest.
        let sys = scalar_linear(0.5, 1.0);
        let depth = 12;
        let z = Window::constant(&DVector::from_element(1, 1.0), depth).unwrap();
        let states = run_flow(&sys, &z, &DVector::zeros(1)).unwrap();
        for i in 0..depth {
            let t = (i + 1) as i32;
            assert_relative_eq!(
                states.values()[(i, 0)],
                2.0 * (1.0 - 0.5f64.powi(t)),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn bistable_esn_flow_converges_to_the_outer_fixed_point() {
        let sys = scalar_esn(2.0, 1.0, Squashing::AlgebraicSigmoid);
        let z = Window::zeros(80, 1).unwrap();
        let states = run_flow(&sys, &z, &DVector::from_element(1, 0.9)).unwrap();
        let last = states.values()[(79, 0)];
        assert_relative_eq!(last, 3.0f64.sqrt() / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn both_modes_agree_for_memoryless_systems() {
        let sys = scalar_linear(0.0, 1.0);
        let z = Window::scalar(&[0.3, -0.7, 1.1, 0.2]).unwrap();
        let w = geo(0.5);
        let fwd = eval_filter(
            &sys,
            &z,
            &w,
            &EvalMode::ForwardWashout { x_init: DVector::zeros(1) },
        )
        .unwrap();
        let pic = eval_filter(
            &sys,
            &z,
            &w,
            &EvalMode::Picard { x_init: DVector::zeros(1), max_iter: 50, tol: 1e-12 },
        )
        .unwrap();
        assert_eq!(fwd.states, z);
        assert_eq!(pic.states, z);
        assert_eq!(fwd.truncation_error_bound, Some(0.0));
        assert!(fwd.residual == 0.0 && pic.residual <= 1e-12);
    }

    #[test]
    fn picard_sweeps_contract_at_the_certified_rate() {
        let sys = scalar_linear(0.5, 1.0);
        let w = geo(0.9);
        let cert = certify_contraction(&sys, &w, &SamplingSpec::default()).unwrap();
        let mut rng = SplitMix64::new(2);
        let z = random_window(&mut rng, 40, 1, 1.0);
        let res = eval_filter(
            &sys,
            &z,
            &w,
            &EvalMode::Picard { x_init: DVector::zeros(1), max_iter: 200, tol: 1e-12 },
        )
        .unwrap();
        for pair in res.sweep_gaps.windows(2) {
            if pair[0] > 1e-13 {
                assert!(pair[1] / pair[0] <= cert.lhs_value + 1e-9);
            }
        }
    }

    #[test]
    fn picard_reports_nonconvergence() {
        let sys = scalar_linear(0.5, 1.0);
        let z = Window::constant(&DVector::from_element(1, 1.0), 30).unwrap();
        let err = eval_filter(
            &sys,
            &z,
            &geo(0.9),
            &EvalMode::Picard { x_init: DVector::zeros(1), max_iter: 2, tol: 1e-15 },
        );
        assert!(matches!(err, Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn washout_forgets_the_initial_state_at_the_contraction_rate() {
        let mut rng = SplitMix64::new(7);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.uniform_in(-0.28, 0.28));
        let sys = ReservoirSystem::esn(
            a,
            DMatrix::from_fn(3, 1, |_, _| rng.uniform_in(-1.0, 1.0)),
            DVector::zeros(3),
            Squashing::Tanh,
            None,
        )
        .unwrap();
        let k = sys.constants(&SamplingSpec::default()).unwrap();
        assert!(k.l_fx < 1.0);
        let depth = 60;
        let z = random_window(&mut rng, depth, 1, 1.0);
        let w = geo(0.5);
        let from_zero = eval_filter(
            &sys,
            &z,
            &w,
            &EvalMode::ForwardWashout { x_init: DVector::zeros(3) },
        )
        .unwrap();
        let from_ones = eval_filter(
            &sys,
            &z,
            &w,
            &EvalMode::ForwardWashout { x_init: DVector::from_element(3, 1.0) },
        )
        .unwrap();
        let gap = (from_zero.states.at(0) - from_ones.states.at(0)).norm();
        assert!(gap <= k.l_fx.powi(depth as i32 - 1) * 3.0f64.sqrt() * 2.0);
    }

    #[test]
    fn zero_direction_has_zero_derivative() {
        let sys = scalar_esn(0.4, 1.0, Squashing::Tanh);
        let z = Window::scalar(&[0.1, 0.4, -0.2]).unwrap();
        let w = geo(0.5);
        let flow = eval_forward_zero(&sys, &z, &w).unwrap();
        let u = Window::zeros(3, 1).unwrap();
        let v = directional_derivative(&sys, &flow, &z, &u).unwrap();
        assert_eq!(v, Window::zeros(3, 1).unwrap());
    }

    #[test]
    fn linear_filter_is_its_own_derivative() {
        let mut rng = SplitMix64::new(21);
        let a = DMatrix::from_fn(2, 2, |_, _| rng.uniform_in(-0.4, 0.4));
        let c = DMatrix::from_fn(2, 1, |_, _| rng.uniform_in(-1.0, 1.0));
        let sys = ReservoirSystem::linear(a, c, None).unwrap();
        let w = geo(0.5);
        let z = random_window(&mut rng, 20, 1, 1.0);
        let u = random_window(&mut rng, 20, 1, 1.0);
        let flow = eval_forward_zero(&sys, &z, &w).unwrap();
        let v = directional_derivative(&sys, &flow, &z, &u).unwrap();
        let direct = eval_forward_zero(&sys, &u, &w).unwrap();
        let gap = norm(&v.sub(&direct.states).unwrap(), &NormSpec::Weighted(w)).unwrap();
        assert!(gap < 1e-12);
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = SplitMix64::new(33);
        let sys = scalar_esn(0.5, 1.0, Squashing::Tanh);
        let w = geo(0.5);
        let spec = NormSpec::Weighted(w.clone());
        for _ in 0..5 {
            let z = random_window(&mut rng, 25, 1, 1.0);
            let u = random_window(&mut rng, 25, 1, 1.0);
            let flow = eval_forward_zero(&sys, &z, &w).unwrap();
            let v = directional_derivative(&sys, &flow, &z, &u).unwrap();

            let eps = 1e-5;
            let plus = Window::new(z.values() + u.values() * eps).unwrap();
            let minus = Window::new(z.values() - u.values() * eps).unwrap();
            let fp = eval_forward_zero(&sys, &plus, &w).unwrap();
            let fm = eval_forward_zero(&sys, &minus, &w).unwrap();
            let fd = Window::new((fp.states.values() - fm.states.values()) / (2.0 * eps)).unwrap();
            let err = norm(&v.sub(&fd).unwrap(), &spec).unwrap();
            let scale = norm(&v, &spec).unwrap().max(1e-12);
            assert!(err / scale <= 1e-6, "relative derivative error {}", err / scale);
        }
    }

    #[test]
    fn memoryless_partials_live_at_lag_zero() {
        let sys = scalar_linear(0.0, 1.0);
        let w = geo(0.5);
        let z = Window::scalar(&[0.2, 0.4, 0.6, 0.8]).unwrap();
        let flow = eval_forward_zero(&sys, &z, &w).unwrap();
        let partials = functional_partials(&sys, &flow, &z, 3).unwrap();
        assert_relative_eq!(partials[(0, 0)], 1.0);
        for lag in 1..=3 {
            assert_eq!(partials[(lag, 0)], 0.0);
        }
    }

    #[test]
    fn linear_partials_are_matrix_power_columns() {
        let mut rng = SplitMix64::new(40);
        let a = DMatrix::from_fn(2, 2, |_, _| rng.uniform_in(-0.4, 0.4));
        let c = DMatrix::from_fn(2, 1, |_, _| rng.uniform_in(-1.0, 1.0));
        let sys = ReservoirSystem::linear(a.clone(), c.clone(), None).unwrap();
        let w = geo(0.5);
        let z = random_window(&mut rng, 16, 1, 1.0);
        let flow = eval_forward_zero(&sys, &z, &w).unwrap();
        let partials = functional_partials(&sys, &flow, &z, 6).unwrap();
        let mut power = DMatrix::identity(2, 2);
        for lag in 0..=6usize {
            let expected = (&power * &c).column(0).norm();
            assert_relative_eq!(partials[(lag, 0)], expected, max_relative = 1e-10);
            power = &power * &a;
        }
    }

    #[test]
    fn identical_pasts_produce_zero_gaps() {
        let sys = scalar_esn(0.4, 1.0, Squashing::Tanh);
        let mut rng = SplitMix64::new(50);
        let u = random_window(&mut rng, 10, 1, 1.0);
        let zf = random_window(&mut rng, 15, 1, 1.0);
        let report = input_forgetting_experiment(&sys, &u, &u, &zf, &geo(0.5), None).unwrap();
        assert!(report.gaps.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn linear_input_forgetting_matches_the_explicit_functional() {
        // Gap between pasts u = 1 and v = 0 decays as 0.5^t * sum 0.5^j.
        let sys = scalar_linear(0.5, 1.0);
        let depth = 20;
        let u = Window::constant(&DVector::from_element(1, 1.0), depth).unwrap();
        let v = Window::zeros(depth, 1).unwrap();
        let mut rng = SplitMix64::new(51);
        let zf = random_window(&mut rng, 12, 1, 1.0);
        let report = input_forgetting_experiment(&sys, &u, &v, &zf, &geo(0.9), None).unwrap();
        // Brute-force oracle: gap at future step t is sum_{j >= t} of
        // 0.5^j * (u - v)_{t-j} over the finite past window.
        for (idx, gap) in report.gaps.iter().enumerate() {
            let t = idx + 1;
            let mut oracle = 0.0;
            for j in t..(t + depth) {
                oracle += 0.5f64.powi(j as i32);
            }
            assert_relative_eq!(*gap, oracle, max_relative = 1e-10);
        }
    }

    #[test]
    fn certified_envelope_dominates_input_forgetting() {
        let mut rng = SplitMix64::new(52);
        let sys = scalar_esn(0.45, 1.2, Squashing::Tanh);
        let w = geo(0.6);
        let cert = certify_contraction(&sys, &w, &SamplingSpec::default()).unwrap();
        assert!(cert.is_certified());
        for _ in 0..10 {
            let u = random_window(&mut rng, 15, 1, 2.0);
            let v = random_window(&mut rng, 15, 1, 2.0);
            let zf = random_window(&mut rng, 25, 1, 2.0);
            let report =
                input_forgetting_experiment(&sys, &u, &v, &zf, &w, Some(&cert)).unwrap();
            assert_eq!(report.violations, 0);
        }
    }

    #[test]
    fn envelope_requires_certified_certificate() {
        let sys = scalar_esn(0.9, 1.0, Squashing::Tanh);
        let w = geo(0.5);
        let cert = certify_contraction(&sys, &w, &SamplingSpec::default()).unwrap();
        assert!(!cert.is_certified());
        let z = Window::zeros(4, 1).unwrap();
        let err = input_forgetting_experiment(&sys, &z, &z, &z, &w, Some(&cert));
        assert!(matches!(err, Err(Error::CertificateRequired)));
    }

    #[test]
    fn equal_initial_states_never_separate() {
        let sys = scalar_esn(0.7, 1.0, Squashing::Tanh);
        let mut rng = SplitMix64::new(53);
        let z = random_window(&mut rng, 12, 1, 1.0);
        let x0 = DVector::from_element(1, 0.3);
        let report = state_forgetting_experiment(&sys, &z, &x0, &x0).unwrap();
        assert!(report.gaps.iter().all(|g| *g == 0.0));
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn linear_state_gap_decays_exactly_geometrically() {
        let sys = scalar_linear(0.5, 1.0);
        let mut rng = SplitMix64::new(54);
        let z = random_window(&mut rng, 15, 1, 1.0);
        let x0 = DVector::from_element(1, 2.0);
        let x1 = DVector::from_element(1, -1.0);
        let report = state_forgetting_experiment(&sys, &z, &x0, &x1).unwrap();
        for (i, gap) in report.gaps.iter().enumerate() {
            assert_relative_eq!(*gap, 0.5f64.powi(i as i32 + 1) * 3.0, max_relative = 1e-12);
        }
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn esn_state_forgetting_respects_the_envelope() {
        let mut rng = SplitMix64::new(55);
        let a = DMatrix::from_fn(2, 2, |_, _| rng.uniform_in(-0.5, 0.5));
        let scale = 0.8 / crate::linalg::spectral_norm(&a).max(1e-9);
        let sys = ReservoirSystem::esn(
            a * scale,
            DMatrix::from_fn(2, 1, |_, _| rng.uniform_in(-1.0, 1.0)),
            DVector::zeros(2),
            Squashing::Tanh,
            None,
        )
        .unwrap();
        for _ in 0..10 {
            let z = random_window(&mut rng, 30, 1, 2.0);
            let x0 = rng.uniform_vector(2, -1.0, 1.0);
            let x1 = rng.uniform_vector(2, -1.0, 1.0);
            let report = state_forgetting_experiment(&sys, &z, &x0, &x1).unwrap();
            assert!(report.envelope.is_some());
            assert_eq!(report.violations, 0);
        }
    }

    #[test]
    fn causality_perturbation_only_affects_later_states() {
        let mut rng = SplitMix64::new(56);
        let sys = scalar_esn(0.5, 1.0, Squashing::Tanh);
        let w = geo(0.5);
        let z = random_window(&mut rng, 12, 1, 1.0);
        let base = eval_forward_zero(&sys, &z, &w).unwrap();
        let lag = 5usize;
        let bumped = perturb(&z, lag, 0, 0.37).unwrap();
        let after = eval_forward_zero(&sys, &bumped, &w).unwrap();
        for t in 0..z.depth() {
            let row_lag = z.depth() - 1 - t;
            let diff =
                (base.states.values().row(t) - after.states.values().row(t)).norm();
            if row_lag > lag {
                assert_eq!(diff, 0.0, "state changed before the perturbation");
            }
        }
        let perturbed_row = z.depth() - 1 - lag;
        let diff =
            (base.states.values().row(perturbed_row) - after.states.values().row(perturbed_row))
                .norm();
        assert!(diff > 0.0);
    }

    #[test]
    fn filter_commutes_with_delay_up_to_truncation() {
        let mut rng = SplitMix64::new(57);
        let sys = scalar_esn(0.4, 1.0, Squashing::Tanh);
        let w = geo(0.5);
        let depth = 60;
        let z = random_window(&mut rng, depth, 1, 1.0);
        let base = eval_forward_zero(&sys, &z, &w).unwrap();
        let delayed = shift(&z, 1).unwrap();
        let shifted = eval_forward_zero(&sys, &delayed, &w).unwrap();
        // The delayed run sees the same inputs one slot later, so its
        // state at time -1 matches the original at time 0 up to the
        // truncation introduced by dropping the oldest row.
        let gap = (shifted.states.at(-1) - base.states.at(0)).norm();
        let bound = base.truncation_error_bound.unwrap() + shifted.truncation_error_bound.unwrap();
        assert!(gap <= bound.max(1e-12), "gap {gap} above truncation bound {bound}");
    }

    #[test]
    fn picard_and_washout_agree_within_their_error_bounds() {
        let mut rng = SplitMix64::new(59);
        for trial in 0..10 {
            let sys = scalar_esn(rng.uniform_in(0.1, 0.8), 1.0, Squashing::Tanh);
            let w = geo(0.9);
            let z = random_window(&mut rng, 50, 1, 1.0);
            let fwd = eval_filter(
                &sys,
                &z,
                &w,
                &EvalMode::ForwardWashout { x_init: DVector::zeros(1) },
            )
            .unwrap();
            let pic = eval_filter(
                &sys,
                &z,
                &w,
                &EvalMode::Picard { x_init: DVector::zeros(1), max_iter: 80, tol: 1e-12 },
            )
            .unwrap();
            let gap = (fwd.states.at(0) - pic.states.at(0)).norm();
            let budget = fwd.truncation_error_bound.unwrap()
                + pic.truncation_error_bound.unwrap()
                + 1e-11;
            assert!(gap <= budget, "trial {trial}: modes disagree by {gap}");
        }
    }

    #[test]
    fn lipschitz_dominance_for_certified_systems() {
        let mut rng = SplitMix64::new(58);
        let sys = scalar_esn(0.45, 1.0, Squashing::Tanh);
        let w = geo(0.6);
        let cert = certify_contraction(&sys, &w, &SamplingSpec::default()).unwrap();
        let lip = cert.implied.filter_lipschitz.unwrap();
        let spec = NormSpec::Weighted(w.clone());
        for _ in 0..20 {
            let z1 = random_window(&mut rng, 30, 1, 2.0);
            let z2 = random_window(&mut rng, 30, 1, 2.0);
            let f1 = eval_forward_zero(&sys, &z1, &w).unwrap();
            let f2 = eval_forward_zero(&sys, &z2, &w).unwrap();
            let lhs = norm(&f1.states.sub(&f2.states).unwrap(), &spec).unwrap();
            let rhs = lip * norm(&z1.sub(&z2).unwrap(), &spec).unwrap()
                + 2.0 * f1.truncation_error_bound.unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-9));
        }
    }
}
