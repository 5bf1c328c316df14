//! Volterra kernel extraction, finite series evaluation, and the
//! certified truncation bound.
//!
//! Kernels are taken around a constant base input for scalar-input
//! systems: exactly for nilpotent linear reservoirs with polynomial
//! readouts, where the finite series reproduces the filter, and by
//! central finite differences for general smooth contracting systems.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::evaluate::{eval_filter, EvalMode};
use crate::linalg::spectral_norm;
use crate::reservoir::{PolynomialMap, Readout, ReservoirSystem, SamplingSpec};
use crate::seqspace::{norm, NormSpec, WeightingSequence, Window};
use crate::Result;

/// Numerical nilpotency threshold.
const NILPOTENT_TOL: f64 = 1e-12;

/// How a kernel set was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelProvenance {
    /// Exact kernels of a nilpotent linear reservoir with polynomial
    /// readout; `index` is the nilpotency index.
    ExactNilpotent { index: usize },
    /// Central finite differences of the filter output; `step` is the
    /// base step of the highest order.
    FiniteDifference { order: usize, step: f64 },
}

/// Dense symmetric kernels `g_j` over lag tuples in `{-memory, ..., 0}^j`
/// for `j = 1..=order`, with the base point and base output value of the
/// expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraKernelSet {
    order: usize,
    memory: usize,
    base_point: Window,
    base_value: DVector<f64>,
    output_dim: usize,
    /// `kernels[j - 1]` is the flattened order-`j` array: lag tuple
    /// `(m_1, ..., m_j)` lives at flat index
    /// `sum_i (m_i + memory) * (memory + 1)^(j - 1 - i)`, each entry an
    /// `output_dim` vector.
    kernels: Vec<Vec<DVector<f64>>>,
    provenance: KernelProvenance,
}

impl VolterraKernelSet {
    /// Rebuilds a kernel set from its raw parts, validating the array
    /// shapes; the inverse of serializing the dense representation.
    pub fn from_parts(
        order: usize,
        memory: usize,
        base_point: Window,
        base_value: DVector<f64>,
        output_dim: usize,
        kernels: Vec<Vec<DVector<f64>>>,
        provenance: KernelProvenance,
    ) -> Result<Self> {
        if order == 0 || kernels.len() != order {
            return Err(Error::InvalidInput(String::from(
                "kernel set needs one array per order 1..=order",
            )));
        }
        if base_point.dim() != 1 || !base_point.is_constant() {
            return Err(Error::InvalidBasePoint);
        }
        if base_value.len() != output_dim {
            return Err(Error::DimensionMismatch { expected: output_dim, got: base_value.len() });
        }
        let base = memory + 1;
        for (j, array) in kernels.iter().enumerate() {
            if array.len() != base.pow(j as u32 + 1) {
                return Err(Error::InvalidInput(String::from("kernel array length mismatch")));
            }
            if array.iter().any(|v| v.len() != output_dim) {
                return Err(Error::InvalidInput(String::from("kernel entry dimension mismatch")));
            }
        }
        Ok(Self { order, memory, base_point, base_value, output_dim, kernels, provenance })
    }

    /// Raw flattened order-`j` array (see the field docs for the index
    /// map).
    pub fn kernel_array(&self, j: usize) -> Result<&[DVector<f64>]> {
        if j == 0 || j > self.order {
            return Err(Error::InvalidInput(String::from("kernel order out of range")));
        }
        Ok(&self.kernels[j - 1])
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn base_point(&self) -> &Window {
        &self.base_point
    }

    pub fn base_value(&self) -> &DVector<f64> {
        &self.base_value
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn provenance(&self) -> KernelProvenance {
        self.provenance
    }

    fn flat_index(&self, lags: &[i64]) -> usize {
        let base = self.memory + 1;
        let mut idx = 0usize;
        for &m in lags {
            debug_assert!((-(self.memory as i64)..=0).contains(&m));
            idx = idx * base + (m + self.memory as i64) as usize;
        }
        idx
    }

    /// Kernel value `g_j(m_1, ..., m_j)`; the length of `lags` selects
    /// the order.
    pub fn get(&self, lags: &[i64]) -> Result<&DVector<f64>> {
        let j = lags.len();
        if j == 0 || j > self.order {
            return Err(Error::InvalidInput(String::from("kernel order out of range")));
        }
        if lags.iter().any(|m| *m > 0 || (-*m) as usize > self.memory) {
            return Err(Error::DepthExceeded {
                depth: self.memory,
                requested: lags.iter().map(|m| m.unsigned_abs() as usize).max().unwrap_or(0),
            });
        }
        Ok(&self.kernels[j - 1][self.flat_index(lags)])
    }

    /// Largest violation of permutation symmetry across all kernels.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 1..=self.order {
            let mut lags = vec![0i64; j];
            loop {
                let value = &self.kernels[j - 1][self.flat_index(&lags)];
                let mut sorted = lags.clone();
                sorted.sort_unstable();
                let canon = &self.kernels[j - 1][self.flat_index(&sorted)];
                worst = worst.max((value - canon).norm());
                if !next_tuple(&mut lags, self.memory) {
                    break;
                }
            }
        }
        worst
    }
}

fn next_tuple(lags: &mut [i64], memory: usize) -> bool {
    for i in (0..lags.len()).rev() {
        if lags[i] > -(memory as i64) {
            lags[i] -= 1;
            for lag in lags.iter_mut().skip(i + 1) {
                *lag = 0;
            }
            return true;
        }
    }
    false
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Smallest `p <= n` with `||A^p|| < tol`, if any.
fn nilpotency_index(a: &DMatrix<f64>) -> Option<usize> {
    let n = a.nrows();
    let mut power = a.clone();
    for p in 1..=n {
        if spectral_norm(&power) < NILPOTENT_TOL {
            return Some(p);
        }
        power = &power * a;
    }
    None
}

/// Exact Volterra kernels of a nilpotent linear reservoir with polynomial
/// readout around the zero base input. The impulse response of the state
/// functional at lag `m` is `A^{-m} c`, and the kernels are the exact
/// multilinear derivatives of the readout at zero applied to those
/// responses; memory is the nilpotency index minus one and the order is
/// the readout degree.
pub fn extract_exact(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    h: &PolynomialMap,
) -> Result<VolterraKernelSet> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(String::from("A must be square")));
    }
    if c.nrows() != a.nrows() || c.ncols() != 1 {
        return Err(Error::InvalidInput(String::from(
            "kernel extraction needs a scalar-input system (c is N x 1)",
        )));
    }
    if h.input_dim() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: h.input_dim() });
    }
    let index = nilpotency_index(a).ok_or(Error::NotNilpotent)?;
    let memory = index - 1;
    let order = (h.degree() as usize).max(1);
    let n = a.nrows();
    let d = h.output_dim();

    // Impulse responses r_m = A^{-m} c for m = 0, -1, ..., -memory.
    let mut responses = Vec::with_capacity(memory + 1);
    let mut power_c = DVector::from_column_slice(c.column(0).as_slice());
    responses.push(power_c.clone());
    for _ in 0..memory {
        power_c = a * power_c;
        responses.push(power_c.clone());
    }
    let response = |m: i64| &responses[(-m) as usize];

    // Partial-derivative table: alpha -> coeff * alpha! summed over the
    // degree-j monomials of h, keyed by exponent vector.
    let partial = |touch_counts: &[u32]| -> DVector<f64> {
        let mut out = DVector::zeros(d);
        for term in h.terms() {
            if term.exponents == touch_counts {
                let alpha_fact: f64 =
                    term.exponents.iter().map(|&e| factorial(e as usize)).product();
                out += &term.coeff * alpha_fact;
            }
        }
        out
    };

    let base = memory + 1;
    let mut kernels = Vec::with_capacity(order);
    for j in 1..=order {
        let len = base.pow(j as u32);
        let mut array = vec![DVector::zeros(d); len];
        let mut lags = vec![0i64; j];
        loop {
            // g_j(m) = (1/j!) sum over coordinate tuples of the exact
            // mixed partial times the impulse-response products.
            let mut value = DVector::zeros(d);
            let mut coords = vec![0usize; j];
            loop {
                let mut counts = vec![0u32; n];
                for &i in &coords {
                    counts[i] += 1;
                }
                let p = partial(&counts);
                if p.iter().any(|v| *v != 0.0) {
                    let mut weight = 1.0;
                    for (slot, &i) in coords.iter().enumerate() {
                        weight *= response(lags[slot])[i];
                    }
                    value += p * weight;
                }
                // Advance the coordinate tuple.
                let mut done = true;
                for slot in (0..j).rev() {
                    if coords[slot] + 1 < n {
                        coords[slot] += 1;
                        for c in coords.iter_mut().skip(slot + 1) {
                            *c = 0;
                        }
                        done = false;
                        break;
                    }
                }
                if done {
                    break;
                }
            }
            let mut idx = 0usize;
            for &m in &lags {
                idx = idx * base + (m + memory as i64) as usize;
            }
            array[idx] = value / factorial(j);
            if !next_tuple(&mut lags, memory) {
                break;
            }
        }
        kernels.push(array);
    }

    // Base output through the filter itself, which is exact here.
    let readout = Readout::Polynomial(h.clone());
    let sys = ReservoirSystem::linear(a.clone(), c.clone(), Some(readout))?;
    let depth = (memory + 2).max(8);
    let zero = Window::zeros(depth, 1)?;
    let w = WeightingSequence::geometric(0.5)?;
    let result = eval_filter(
        &sys,
        &zero,
        &w,
        &EvalMode::Picard {
            x_init: DVector::zeros(n),
            max_iter: depth + 4,
            tol: 1e-12,
        },
    )?;
    let base_value = result.outputs.as_ref().expect("readout attached").at(0);

    Ok(VolterraKernelSet {
        order,
        memory,
        base_point: Window::zeros(memory + 1, 1)?,
        base_value,
        output_dim: d,
        kernels,
        provenance: KernelProvenance::ExactNilpotent { index },
    })
}

/// Central-difference stencil for the `alpha`-th derivative, as pairs of
/// (offset, coefficient); the divisor is `h^alpha`.
fn stencil(alpha: u32) -> &'static [(i32, f64)] {
    match alpha {
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => unreachable!("orders above 3 are rejected before stencil lookup"),
    }
}

/// Finite-difference Volterra kernels of a certified scalar-input system
/// around a constant base window. Orders above 3 are rejected because
/// stencil noise dominates. The default step for order `j` is
/// `eps^(1/(j+2))`, the usual central-difference balance; `step`
/// overrides it for every order.
pub fn extract_fd(
    sys: &ReservoirSystem,
    base: &Window,
    order: usize,
    memory: usize,
    step: Option<f64>,
) -> Result<VolterraKernelSet> {
    if sys.input_dim() != 1 {
        return Err(Error::InvalidInput(String::from(
            "kernel extraction needs a scalar-input system",
        )));
    }
    if order == 0 {
        return Err(Error::InvalidInput(String::from("order must be >= 1")));
    }
    if order > 3 {
        return Err(Error::Unsupported(String::from(
            "finite-difference extraction is capped at order 3",
        )));
    }
    if base.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: base.dim() });
    }
    if !base.is_constant() {
        return Err(Error::InvalidBasePoint);
    }
    let constants = sys.constants(&SamplingSpec::default())?;
    if !(constants.l_fx < 1.0) {
        return Err(Error::CertificateRequired);
    }

    let z0 = base.at(0)[0];
    // Fixed point of x -> F(x, z0); running the constant base from it
    // leaves no washout error in the stencil evaluations.
    let mut x_star = DVector::zeros(sys.state_dim());
    for _ in 0..20_000 {
        let next = sys.apply(&x_star, &DVector::from_element(1, z0))?;
        let gap = (&next - &x_star).norm();
        x_star = next;
        if gap < 1e-15 * (1.0 + x_star.norm()) {
            break;
        }
    }

    let washout = 8usize;
    let depth = memory + 1 + washout;
    // Time-0 output of the filter for a perturbation over the last
    // `memory + 1` lags.
    let functional = |pert: &[f64]| -> Result<DVector<f64>> {
        let mut x = x_star.clone();
        for i in 0..depth {
            let lag = depth - 1 - i;
            let mut value = z0;
            if lag <= memory {
                value += pert[memory - lag];
            }
            x = sys.apply(&x, &DVector::from_element(1, value))?;
        }
        match sys.readout() {
            Some(r) => crate::reservoir::readout_apply(r, &x),
            None => Ok(x),
        }
    };

    let d = sys.output_dim();
    let base_len = memory + 1;
    let mut kernels: Vec<Vec<DVector<f64>>> = Vec::with_capacity(order);
    let mut top_step = 0.0;
    for j in 1..=order {
        let h = step.unwrap_or_else(|| f64::EPSILON.powf(1.0 / (j as f64 + 2.0)));
        top_step = h;
        let len = base_len.pow(j as u32);
        let mut array = vec![DVector::zeros(d); len];
        let mut lags = vec![0i64; j];
        loop {
            let mut sorted = lags.clone();
            sorted.sort_unstable();
            let mut idx = 0usize;
            for &m in &lags {
                idx = idx * base_len + (m + memory as i64) as usize;
            }
            if sorted == lags {
                // Distinct lags with multiplicities; tensor product of
                // one-dimensional stencils.
                let mut distinct: Vec<(i64, u32)> = Vec::new();
                for &m in &sorted {
                    match distinct.last_mut() {
                        Some((lag, count)) if *lag == m => *count += 1,
                        _ => distinct.push((m, 1)),
                    }
                }
                let mut acc = DVector::zeros(d);
                let mut cursor = vec![0usize; distinct.len()];
                loop {
                    let mut coeff = 1.0;
                    let mut pert = vec![0.0; memory + 1];
                    for (slot, &(lag, alpha)) in distinct.iter().enumerate() {
                        let (offset, c) = stencil(alpha)[cursor[slot]];
                        coeff *= c;
                        pert[(lag + memory as i64) as usize] += offset as f64 * h;
                    }
                    if coeff != 0.0 {
                        acc += functional(&pert)? * coeff;
                    }
                    let mut done = true;
                    for slot in (0..distinct.len()).rev() {
                        if cursor[slot] + 1 < stencil(distinct[slot].1).len() {
                            cursor[slot] += 1;
                            for c in cursor.iter_mut().skip(slot + 1) {
                                *c = 0;
                            }
                            done = false;
                            break;
                        }
                    }
                    if done {
                        break;
                    }
                }
                array[idx] = acc / (h.powi(j as i32) * factorial(j));
            }
            if !next_tuple(&mut lags, memory) {
                break;
            }
        }
        // Symmetrize: copy each canonical (sorted) tuple onto its
        // permutations.
        let mut lags = vec![0i64; j];
        loop {
            let mut sorted = lags.clone();
            sorted.sort_unstable();
            if sorted != lags {
                let mut src = 0usize;
                let mut dst = 0usize;
                for (&m_sorted, &m) in sorted.iter().zip(&lags) {
                    src = src * base_len + (m_sorted + memory as i64) as usize;
                    dst = dst * base_len + (m + memory as i64) as usize;
                }
                array[dst] = array[src].clone();
            }
            if !next_tuple(&mut lags, memory) {
                break;
            }
        }
        kernels.push(array);
    }

    let w = WeightingSequence::geometric(0.5)?;
    let base_window = Window::constant(&DVector::from_element(1, z0), depth)?;
    let result = eval_filter(
        &sys_clone_for_eval(sys),
        &base_window,
        &w,
        &EvalMode::Picard { x_init: x_star.clone(), max_iter: depth + 4, tol: 1e-12 },
    )?;
    let base_value = match &result.outputs {
        Some(out) => out.at(0),
        None => result.states.at(0),
    };

    Ok(VolterraKernelSet {
        order,
        memory,
        base_point: Window::constant(&DVector::from_element(1, z0), memory + 1)?,
        base_value,
        output_dim: d,
        kernels,
        provenance: KernelProvenance::FiniteDifference { order, step: top_step },
    })
}

fn sys_clone_for_eval(sys: &ReservoirSystem) -> ReservoirSystem {
    sys.clone()
}

/// Evaluates the finite Volterra series at time 0 of a window:
/// `base + sum_j sum_m g_j(m) prod_i (z_{m_i} - z0_{m_i})`.
pub fn eval_series(kernels: &VolterraKernelSet, z: &Window) -> Result<DVector<f64>> {
    if z.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: z.dim() });
    }
    if z.depth() < kernels.memory + 1 {
        return Err(Error::DepthExceeded { depth: z.depth(), requested: kernels.memory + 1 });
    }
    let memory = kernels.memory;
    let z0 = kernels.base_point.at(0)[0];
    let deltas: Vec<f64> =
        (0..=memory as i64).map(|lag| z.at(-lag)[0] - z0).collect();

    let mut out = kernels.base_value.clone();
    let base_len = memory + 1;
    for j in 1..=kernels.order {
        let array = &kernels.kernels[j - 1];
        let mut lags = vec![0i64; j];
        loop {
            let mut idx = 0usize;
            let mut weight = 1.0;
            for &m in &lags {
                idx = idx * base_len + (m + memory as i64) as usize;
                weight *= deltas[(-m) as usize];
            }
            if weight != 0.0 {
                out += &array[idx] * weight;
            }
            if !next_tuple(&mut lags, memory) {
                break;
            }
        }
    }
    Ok(out)
}

/// Certified truncation bound for cutting the series after order `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraBound {
    /// Codomain ball radius.
    pub l: f64,
    /// Domain ball radius.
    pub m: f64,
    /// Truncation order.
    pub p: usize,
    /// `|z|_w / M`.
    pub norm_ratio: f64,
    /// Bound at each window time, oldest first.
    pub per_time: Vec<f64>,
    /// Bound on the weighted norm of the whole remainder.
    pub w_norm_bound: f64,
}

/// Truncation bound `(L / w_{-t}) (1 - |z|_w / M)^{-1} (|z|_w / M)^{p+1}`
/// per window time, plus its weighted-norm form.
pub fn truncation_bound(
    l: f64,
    m: f64,
    w: &WeightingSequence,
    z: &Window,
    p: usize,
) -> Result<VolterraBound> {
    if !(l > 0.0) || !(m > 0.0) {
        return Err(Error::InvalidInput(String::from("ball radii must be positive")));
    }
    if p == 0 {
        return Err(Error::InvalidInput(String::from("truncation order must be >= 1")));
    }
    let z_norm = norm(z, &NormSpec::Weighted(w.clone()))?;
    let ratio = z_norm / m;
    if ratio >= 1.0 {
        return Err(Error::OutsideDomain { norm: z_norm, radius: m });
    }
    let geometric = (1.0 - ratio).recip() * ratio.powi(p as i32 + 1);
    let per_time = (0..z.depth())
        .map(|i| {
            let lag = z.depth() - 1 - i;
            l / w.weight(lag) * geometric
        })
        .collect();
    Ok(VolterraBound { l, m, p, norm_ratio: ratio, per_time, w_norm_bound: l * geometric })
}

/// Outcome of the bound-check experiment on one radius fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckRow {
    pub rho: f64,
    pub max_error: f64,
    pub min_bound: f64,
    pub violations: usize,
}

/// Report of [`bound_check_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckReport {
    pub rows: Vec<BoundCheckRow>,
    pub slack: f64,
}

impl BoundCheckReport {
    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }
}

/// Samples windows at weighted distance `rho * M` from the base point for
/// `rho` in `{0.1, ..., 0.9}`, measures the gap between the filter and
/// the truncated series at time 0, and compares it against the
/// truncation bound with `slack` covering finite-difference kernel
/// error.
pub fn bound_check_experiment(
    sys: &ReservoirSystem,
    kernels: &VolterraKernelSet,
    w: &WeightingSequence,
    trials: usize,
    m: f64,
    l: f64,
    slack: f64,
    seed: u64,
) -> Result<BoundCheckReport> {
    if trials == 0 {
        return Err(Error::InvalidInput(String::from("trials must be >= 1")));
    }
    if sys.input_dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: sys.input_dim() });
    }
    let memory = kernels.memory();
    let z0 = kernels.base_point().at(0)[0];
    let washout = 24usize;
    let depth = memory + 1 + washout;
    let mut rng = crate::rng::SplitMix64::new(seed);
    let spec = NormSpec::Weighted(w.clone());

    let mut rows = Vec::new();
    for step in 1..=9usize {
        let rho = step as f64 / 10.0;
        let mut max_error: f64 = 0.0;
        let mut min_bound = f64::INFINITY;
        let mut violations = 0usize;
        for _ in 0..trials {
            // Perturbation over the modeled lags, scaled to the target
            // weighted norm.
            let mut pert = DMatrix::zeros(depth, 1);
            for lag in 0..=memory {
                pert[(depth - 1 - lag, 0)] = rng.normal();
            }
            let pert_w = Window::new(pert.clone())?;
            let current = norm(&pert_w, &spec)?;
            if current < 1e-300 {
                continue;
            }
            let target = rho * m * rng.uniform_in(0.5, 1.0);
            let pert = pert * (target / current);

            let mut z_values = DMatrix::from_element(depth, 1, z0);
            z_values += &pert;
            let z = Window::new(z_values)?;

            let mode = EvalMode::Picard {
                x_init: DVector::zeros(sys.state_dim()),
                max_iter: depth + 8,
                tol: 1e-12,
            };
            let filtered = eval_filter(sys, &z, w, &mode)?;
            let filter_out = match &filtered.outputs {
                Some(out) => out.at(0),
                None => filtered.states.at(0),
            };
            let series_out = eval_series(kernels, &z)?;
            let error = (filter_out - series_out).norm();

            let bound =
                truncation_bound(l, m, w, &Window::new(pert)?, kernels.order())?;
            let bound_at_zero = *bound.per_time.last().expect("non-empty window");
            max_error = max_error.max(error);
            min_bound = min_bound.min(bound_at_zero);
            if error > bound_at_zero + slack {
                violations += 1;
            }
        }
        rows.push(BoundCheckRow { rho, max_error, min_bound, violations });
    }
    Ok(BoundCheckReport { rows, slack })
}
