//! Weighting sequences, weighted norms on truncated sequences, decay
//! ratios, and the shift/projection operators with their operator norms.
//!
//! A weighting sequence is a strictly decreasing `w: N -> (0, 1]` with
//! `w_0 = 1` and zero limit. A window is the finite truncation
//! `(z_{-T+1}, ..., z_0)` of a left semi-infinite sequence; everything
//! before the window is treated as zero, which matches the canonical
//! zero-padding choice for time delays on semi-infinite sequences.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::rng::SplitMix64;
use crate::Result;

/// Weighting-sequence families.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightingKind {
    /// `w_t = lambda^t` with `0 < lambda < 1`.
    Geometric { lambda: f64 },
    /// `w_t = 1 / (1 + t d)` with `d > 0`.
    Harmonic { d: f64 },
    /// `w_t = exp(-t^2)`; its inverse decay ratio is infinite.
    GaussianExp,
    /// Finite table continued geometrically with the last observed ratio.
    Custom { table: Vec<f64>, tail_ratio: f64 },
}

/// A weighting sequence together with cached decay ratios where known.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightingSequence {
    kind: WeightingKind,
}

/// How a pair of decay ratios was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioProvenance {
    /// Closed-form values for the analytic families.
    Analytic,
    /// Sup of consecutive ratios over a finite horizon: a lower bound.
    TableSup,
}

/// Decay ratio `D_w = sup w_{t+1}/w_t` and inverse decay ratio
/// `L_w = sup w_t/w_{t+1}` (`f64::INFINITY` when unbounded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRatios {
    pub d_w: f64,
    pub l_w: f64,
    pub provenance: RatioProvenance,
}

impl WeightingSequence {
    pub fn geometric(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidWeighting(format!(
                "geometric ratio must lie in (0, 1), got {lambda}"
            )));
        }
        Ok(Self { kind: WeightingKind::Geometric { lambda } })
    }

    pub fn harmonic(d: f64) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidWeighting(format!(
                "harmonic step must be positive, got {d}"
            )));
        }
        Ok(Self { kind: WeightingKind::Harmonic { d } })
    }

    pub fn gaussian_exp() -> Self {
        Self { kind: WeightingKind::GaussianExp }
    }

    /// Builds a custom sequence from a finite table. The tail continues
    /// geometrically with the last observed consecutive ratio, which keeps
    /// the sequence strictly decreasing and its inverse decay ratio finite
    /// whenever the table suggests it.
    pub fn custom(table: Vec<f64>) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::InvalidWeighting(String::from(
                "custom table needs at least two entries to fix the tail ratio",
            )));
        }
        if (table[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeighting(format!(
                "w_0 must equal 1, got {}",
                table[0]
            )));
        }
        for pair in table.windows(2) {
            if !pair[1].is_finite() || pair[1] <= 0.0 || pair[1] >= pair[0] {
                return Err(Error::InvalidWeighting(format!(
                    "table must be strictly decreasing and positive: {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        let last = table.len() - 1;
        let tail_ratio = table[last] / table[last - 1];
        Ok(Self { kind: WeightingKind::Custom { table, tail_ratio } })
    }

    /// Custom sequence with an explicit geometric tail ratio.
    pub fn custom_with_tail(table: Vec<f64>, tail_ratio: f64) -> Result<Self> {
        let mut seq = Self::custom(table)?;
        if !(tail_ratio > 0.0 && tail_ratio < 1.0) {
            return Err(Error::InvalidWeighting(format!(
                "tail ratio must lie in (0, 1), got {tail_ratio}"
            )));
        }
        if let WeightingKind::Custom { tail_ratio: r, .. } = &mut seq.kind {
            *r = tail_ratio;
        }
        Ok(seq)
    }

    pub fn kind(&self) -> &WeightingKind {
        &self.kind
    }

    /// Evaluates `w_t`.
    pub fn weight(&self, t: usize) -> f64 {
        match &self.kind {
            WeightingKind::Geometric { lambda } => lambda.powi(t as i32),
            WeightingKind::Harmonic { d } => 1.0 / (1.0 + t as f64 * d),
            WeightingKind::GaussianExp => (-((t as f64) * (t as f64))).exp(),
            WeightingKind::Custom { table, tail_ratio } => {
                if t < table.len() {
                    table[t]
                } else {
                    table[table.len() - 1] * tail_ratio.powi((t + 1 - table.len()) as i32)
                }
            }
        }
    }

    /// The sequence `w^a` evaluated exactly for geometric weights and as a
    /// table over `horizon` entries otherwise.
    pub fn power(&self, a: f64, horizon: usize) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidWeighting(format!(
                "power exponent must be positive, got {a}"
            )));
        }
        match &self.kind {
            WeightingKind::Geometric { lambda } => Self::geometric(lambda.powf(a)),
            _ => {
                let table: Vec<f64> =
                    (0..horizon.max(2)).map(|t| self.weight(t).powf(a)).collect();
                Self::custom(table)
            }
        }
    }

    /// Decay ratio and inverse decay ratio. Analytic families return exact
    /// values; custom tables return the sup of consecutive ratios over
    /// `{0, ..., horizon}`, a lower bound on the true sup.
    pub fn decay_ratios(&self, horizon: usize) -> Result<DecayRatios> {
        if horizon < 2 {
            return Err(Error::InvalidInput(String::from("ratio horizon must be >= 2")));
        }
        let ratios = match &self.kind {
            WeightingKind::Geometric { lambda } => DecayRatios {
                d_w: *lambda,
                l_w: 1.0 / lambda,
                provenance: RatioProvenance::Analytic,
            },
            WeightingKind::Harmonic { d } => DecayRatios {
                d_w: 1.0,
                l_w: 1.0 + d,
                provenance: RatioProvenance::Analytic,
            },
            WeightingKind::GaussianExp => DecayRatios {
                d_w: (-1.0f64).exp(),
                l_w: f64::INFINITY,
                provenance: RatioProvenance::Analytic,
            },
            WeightingKind::Custom { .. } => {
                let mut d_w: f64 = 0.0;
                let mut l_w: f64 = 1.0;
                for t in 0..horizon {
                    let r = self.weight(t + 1) / self.weight(t);
                    if !r.is_finite() || r <= 0.0 || r >= 1.0 {
                        return Err(Error::InvalidWeighting(format!(
                            "non-monotone ratio {r} at index {t}"
                        )));
                    }
                    d_w = d_w.max(r);
                    l_w = l_w.max(1.0 / r);
                }
                DecayRatios { d_w, l_w, provenance: RatioProvenance::TableSup }
            }
        };
        debug_assert!(ratios.d_w > 0.0 && ratios.d_w <= 1.0);
        debug_assert!(ratios.l_w > 1.0);
        debug_assert!(ratios.l_w * ratios.d_w >= 1.0 - 1e-12);
        Ok(ratios)
    }

    /// Decay ratios adapted to the p-weighted norm: the `1/p`-th power of
    /// the plain ratios.
    pub fn decay_ratios_p(&self, p: f64, horizon: usize) -> Result<DecayRatios> {
        if !(p >= 1.0) {
            return Err(Error::InvalidInput(format!("p must be >= 1, got {p}")));
        }
        let base = self.decay_ratios(horizon)?;
        Ok(DecayRatios {
            d_w: base.d_w.powf(1.0 / p),
            l_w: if base.l_w.is_finite() { base.l_w.powf(1.0 / p) } else { f64::INFINITY },
            provenance: base.provenance,
        })
    }
}

/// Norm choices on truncated sequences.
#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec {
    /// `sup_t |z_t|`.
    Sup,
    /// `sup_t |z_t| w_{-t}`.
    Weighted(WeightingSequence),
    /// `(sum_t |z_t|^p w_{-t})^{1/p}` with `p >= 1`.
    PWeighted(f64, WeightingSequence),
}

/// Finite truncation of a left semi-infinite sequence. Row `T-1+t` holds
/// the entry at time `t` for `t` in `{-T+1, ..., 0}`; rows are stored
/// oldest first. Entries before the window are treated as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    values: DMatrix<f64>,
}

impl Window {
    /// Builds a window from a `T x n` matrix, oldest row first.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(String::from("window must be non-empty")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(String::from("window has non-finite entries")));
        }
        Ok(Self { values })
    }

    /// Window of rows given oldest first.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidInput(String::from("window must be non-empty")));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(String::from("ragged window rows")));
        }
        Self::new(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
    }

    /// Scalar window from a slice, oldest first.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_fn(values.len(), 1, |i, _| values[i]))
    }

    /// Constant window repeating `value` for `depth` steps.
    pub fn constant(value: &DVector<f64>, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidInput(String::from("window depth must be positive")));
        }
        Self::new(DMatrix::from_fn(depth, value.len(), |_, j| value[j]))
    }

    /// All-zero window.
    pub fn zeros(depth: usize, dim: usize) -> Result<Self> {
        if depth == 0 || dim == 0 {
            return Err(Error::InvalidInput(String::from("window must be non-empty")));
        }
        Ok(Self { values: DMatrix::zeros(depth, dim) })
    }

    pub fn depth(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    /// Entry at time `t` in `{-T+1, ..., 0}`.
    pub fn at(&self, t: i64) -> DVector<f64> {
        let row = self.row_index(t).expect("time index outside window");
        self.values.row(row).transpose()
    }

    /// Entry at time `t`, zero for `t <= -T` (the implicit zero tail).
    pub fn at_or_zero(&self, t: i64) -> DVector<f64> {
        match self.row_index(t) {
            Some(row) => self.values.row(row).transpose(),
            None => DVector::zeros(self.dim()),
        }
    }

    fn row_index(&self, t: i64) -> Option<usize> {
        let depth = self.depth() as i64;
        if t > 0 || t <= -depth {
            None
        } else {
            Some((depth - 1 + t) as usize)
        }
    }

    /// True when every row equals the last one.
    pub fn is_constant(&self) -> bool {
        let last = self.values.row(self.depth() - 1);
        (0..self.depth()).all(|i| {
            self.values
                .row(i)
                .iter()
                .zip(last.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-15 * (1.0 + b.abs()))
        })
    }

    /// Elementwise difference; windows must agree in shape.
    pub fn sub(&self, other: &Window) -> Result<Window> {
        if self.depth() != other.depth() || self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.depth() * self.dim(),
                got: other.depth() * other.dim(),
            });
        }
        Window::new(&self.values - &other.values)
    }
}

/// Weighted, sup, or p-weighted norm of a window (over the finite window
/// only; the zero tail contributes nothing).
pub fn norm(z: &Window, spec: &NormSpec) -> Result<f64> {
    if z.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(String::from("window has non-finite entries")));
    }
    let depth = z.depth();
    let row_norm = |i: usize| z.values().row(i).norm();
    let value = match spec {
        NormSpec::Sup => (0..depth).map(row_norm).fold(0.0, f64::max),
        NormSpec::Weighted(w) => (0..depth)
            .map(|i| {
                let lag = (depth - 1 - i) as usize; // -t for row i
                row_norm(i) * w.weight(lag)
            })
            .fold(0.0, f64::max),
        NormSpec::PWeighted(p, w) => {
            if !(*p >= 1.0) {
                return Err(Error::InvalidInput(format!("p must be >= 1, got {p}")));
            }
            let sum: f64 = (0..depth)
                .map(|i| {
                    let lag = (depth - 1 - i) as usize;
                    row_norm(i).powf(*p) * w.weight(lag)
                })
                .sum();
            sum.powf(1.0 / *p)
        }
    };
    Ok(value)
}

/// Time delay restricted to a window. Positive `tau` appends `tau` zero
/// rows at the recent end and drops the oldest rows; negative `tau` drops
/// the most recent rows and zero-fills the oldest. Depth is preserved.
pub fn shift(z: &Window, tau: i64) -> Result<Window> {
    let depth = z.depth() as i64;
    if tau.unsigned_abs() as i64 >= depth {
        return Err(Error::DepthExceeded {
            depth: z.depth(),
            requested: tau.unsigned_abs() as usize,
        });
    }
    let mut out = DMatrix::zeros(z.depth(), z.dim());
    for t in (-depth + 1)..=0 {
        let src = t + tau;
        if src >= -depth + 1 && src <= 0 {
            let dst_row = (depth - 1 + t) as usize;
            let src_row = (depth - 1 + src) as usize;
            out.row_mut(dst_row).copy_from(&z.values().row(src_row));
        }
    }
    Window::new(out)
}

/// Operators whose norms the estimator knows analytically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    /// Projection onto the entry at time `t <= 0`.
    Projection(i64),
    /// Windowed time delay by `tau` as in [`shift`].
    Shift(i64),
}

/// Analytic operator-norm value attached to an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticNorm {
    Exact(f64),
    UpperBound(f64),
    Infinite,
}

impl AnalyticNorm {
    pub fn value(&self) -> f64 {
        match self {
            AnalyticNorm::Exact(v) | AnalyticNorm::UpperBound(v) => *v,
            AnalyticNorm::Infinite => f64::INFINITY,
        }
    }
}

/// Result of a Monte-Carlo operator-norm estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorNormEstimate {
    pub empirical: f64,
    pub analytic: AnalyticNorm,
}

/// Estimates `sup |op(z)| / |z|` over random windows plus the analytic
/// witness vectors, and reports the corresponding analytic value. Random
/// windows have entries `z_t = u_t / w_{-t}` with `u_t` uniform on the
/// unit sphere scaled by `Uniform(0, 1]`, which spans the weighted unit
/// ball instead of concentrating at recent indices.
pub fn operator_norm_estimate(
    op: OpKind,
    spec: &NormSpec,
    trials: usize,
    depth: usize,
    dim: usize,
    seed: u64,
) -> Result<OperatorNormEstimate> {
    if trials == 0 {
        return Err(Error::InvalidInput(String::from("trials must be >= 1")));
    }
    if depth < 2 {
        return Err(Error::InvalidInput(String::from("estimation depth must be >= 2")));
    }
    if let OpKind::Projection(t) = op {
        if t > 0 || (-t) as usize >= depth {
            return Err(Error::DepthExceeded { depth, requested: t.unsigned_abs() as usize });
        }
    }
    if let OpKind::Shift(tau) = op {
        if tau.unsigned_abs() as usize >= depth {
            return Err(Error::DepthExceeded { depth, requested: tau.unsigned_abs() as usize });
        }
    }

    let analytic = analytic_norm(op, spec, depth)?;
    let scale = |lag: usize| -> f64 {
        match spec {
            NormSpec::Sup => 1.0,
            NormSpec::Weighted(w) => 1.0 / w.weight(lag),
            NormSpec::PWeighted(p, w) => 1.0 / w.weight(lag).powf(1.0 / p),
        }
    };

    let mut rng = SplitMix64::new(seed);
    let mut best: f64 = 0.0;
    let mut consider = |z: &Window| -> Result<()> {
        let denom = norm(z, spec)?;
        if denom > 1e-300 {
            let image = match op {
                OpKind::Projection(t) => z.at(t).norm(),
                OpKind::Shift(tau) => norm(&shift(z, tau)?, spec)?,
            };
            best = best.max(image / denom);
        }
        Ok(())
    };

    // Witnesses: impulses scaled to unit weighted norm at every slot, plus
    // the full profile z_t = v / w_{-t}. The impulse at slot t attains the
    // projection norm exactly and sweeps the shift ratios.
    for slot in 0..depth {
        let mut m = DMatrix::zeros(depth, dim);
        let lag = depth - 1 - slot;
        m[(slot, 0)] = scale(lag);
        consider(&Window::new(m)?)?;
    }
    {
        let mut m = DMatrix::zeros(depth, dim);
        for slot in 0..depth {
            let lag = depth - 1 - slot;
            m[(slot, 0)] = scale(lag);
        }
        consider(&Window::new(m)?)?;
    }

    for _ in 0..trials {
        let mut m = DMatrix::zeros(depth, dim);
        for slot in 0..depth {
            let lag = depth - 1 - slot;
            let dir = rng.unit_sphere(dim);
            let r = rng.uniform_open_closed();
            let row = dir * (r * scale(lag));
            m.row_mut(slot).copy_from(&row.transpose());
        }
        consider(&Window::new(m)?)?;
    }

    Ok(OperatorNormEstimate { empirical: best, analytic })
}

fn analytic_norm(op: OpKind, spec: &NormSpec, depth: usize) -> Result<AnalyticNorm> {
    let horizon = depth.max(8);
    Ok(match spec {
        NormSpec::Sup => AnalyticNorm::Exact(1.0),
        NormSpec::Weighted(w) => {
            let ratios = w.decay_ratios(horizon)?;
            op_norm_from_ratios(op, w, 1.0, &ratios)
        }
        NormSpec::PWeighted(p, w) => {
            let ratios = w.decay_ratios_p(*p, horizon)?;
            op_norm_from_ratios(op, w, 1.0 / p, &ratios)
        }
    })
}

fn op_norm_from_ratios(
    op: OpKind,
    w: &WeightingSequence,
    weight_exp: f64,
    ratios: &DecayRatios,
) -> AnalyticNorm {
    match op {
        OpKind::Projection(t) => {
            AnalyticNorm::Exact(1.0 / w.weight((-t) as usize).powf(weight_exp))
        }
        OpKind::Shift(0) => AnalyticNorm::Exact(1.0),
        OpKind::Shift(-1) => {
            if ratios.l_w.is_finite() {
                AnalyticNorm::Exact(ratios.l_w)
            } else {
                AnalyticNorm::Infinite
            }
        }
        OpKind::Shift(1) => AnalyticNorm::Exact(ratios.d_w),
        OpKind::Shift(tau) if tau < 0 => {
            if ratios.l_w.is_finite() {
                AnalyticNorm::UpperBound(ratios.l_w.powi((-tau) as i32))
            } else {
                AnalyticNorm::Infinite
            }
        }
        OpKind::Shift(tau) => AnalyticNorm::UpperBound(ratios.d_w.powi(tau as i32)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geo(l: f64) -> WeightingSequence {
        WeightingSequence::geometric(l).unwrap()
    }

    #[test]
    fn weighted_norm_of_constant_window_is_dominated_by_w0() {
        let z = Window::scalar(&[1.0, 1.0, 1.0]).unwrap();
        let n = norm(&z, &NormSpec::Weighted(geo(0.5))).unwrap();
        assert_relative_eq!(n, 1.0);
    }

    #[test]
    fn zero_window_has_zero_norm() {
        let z = Window::zeros(4, 2).unwrap();
        for spec in [
            NormSpec::Sup,
            NormSpec::Weighted(geo(0.5)),
            NormSpec::PWeighted(2.0, geo(0.5)),
        ] {
            assert_eq!(norm(&z, &spec).unwrap(), 0.0);
        }
    }

    #[test]
    fn hand_evaluated_weighted_and_p_weighted_norms() {
        // z_{-2} = 4, z_{-1} = 2, z_0 = 1 with geometric(0.5) weights.
        let z = Window::scalar(&[4.0, 2.0, 1.0]).unwrap();
        let w = geo(0.5);
        let weighted = norm(&z, &NormSpec::Weighted(w.clone())).unwrap();
        assert_relative_eq!(weighted, 1.0);
        let p1 = norm(&z, &NormSpec::PWeighted(1.0, w)).unwrap();
        assert_relative_eq!(p1, 3.0);
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(matches!(Window::new(m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn decay_ratios_match_closed_forms() {
        let g = geo(0.5).decay_ratios(16).unwrap();
        assert_relative_eq!(g.d_w, 0.5, max_relative = 1e-15);
        assert_relative_eq!(g.l_w, 2.0, max_relative = 1e-15);

        let h = WeightingSequence::harmonic(1.0).unwrap().decay_ratios(16).unwrap();
        assert_relative_eq!(h.d_w, 1.0, max_relative = 1e-15);
        assert_relative_eq!(h.l_w, 2.0, max_relative = 1e-15);

        let gauss = WeightingSequence::gaussian_exp().decay_ratios(16).unwrap();
        assert_relative_eq!(gauss.d_w, (-1.0f64).exp(), max_relative = 1e-15);
        assert!(gauss.l_w.is_infinite());
    }

    #[test]
    fn empirical_ratio_sup_never_exceeds_analytic() {
        for w in [geo(0.5), WeightingSequence::harmonic(2.0).unwrap()] {
            let analytic = w.decay_ratios(64).unwrap();
            let mut d_sup: f64 = 0.0;
            let mut l_sup: f64 = 0.0;
            for t in 0..64 {
                let r = w.weight(t + 1) / w.weight(t);
                d_sup = d_sup.max(r);
                l_sup = l_sup.max(1.0 / r);
            }
            assert!(d_sup <= analytic.d_w * (1.0 + 1e-12));
            assert!(l_sup <= analytic.l_w * (1.0 + 1e-12));
        }
    }

    #[test]
    fn p_ratios_are_roots_of_plain_ratios() {
        let r = geo(0.25).decay_ratios_p(2.0, 8).unwrap();
        assert_relative_eq!(r.d_w, 0.5, max_relative = 1e-15);
        assert_relative_eq!(r.l_w, 2.0, max_relative = 1e-15);

        let h = WeightingSequence::harmonic(3.0).unwrap().decay_ratios_p(2.0, 8).unwrap();
        assert_relative_eq!(h.d_w, 1.0, max_relative = 1e-15);
        assert_relative_eq!(h.l_w, 2.0, max_relative = 1e-15);

        // p = 1 coincides with the plain ratios.
        let w = WeightingSequence::harmonic(0.7).unwrap();
        let plain = w.decay_ratios(8).unwrap();
        let p1 = w.decay_ratios_p(1.0, 8).unwrap();
        assert_relative_eq!(plain.d_w, p1.d_w, max_relative = 1e-15);
        assert_relative_eq!(plain.l_w, p1.l_w, max_relative = 1e-15);
    }

    #[test]
    fn non_monotone_custom_table_is_rejected() {
        let err = WeightingSequence::custom(alloc::vec![1.0, 0.5, 0.6]);
        assert!(matches!(err, Err(Error::InvalidWeighting(_))));
    }

    #[test]
    fn custom_tail_continues_geometrically() {
        let w = WeightingSequence::custom(alloc::vec![1.0, 0.5, 0.2]).unwrap();
        // Last observed ratio is 0.4.
        assert_relative_eq!(w.weight(3), 0.08, max_relative = 1e-12);
        assert_relative_eq!(w.weight(4), 0.032, max_relative = 1e-12);
        let r = w.decay_ratios(16).unwrap();
        assert_eq!(r.provenance, RatioProvenance::TableSup);
        assert_relative_eq!(r.d_w, 0.5, max_relative = 1e-12);
        assert_relative_eq!(r.l_w, 2.5, max_relative = 1e-12);
    }

    #[test]
    fn shift_matches_zero_padding_definition() {
        let z = Window::scalar(&[1.0, 2.0, 3.0]).unwrap();
        let fwd = shift(&z, 1).unwrap();
        assert_eq!(fwd, Window::scalar(&[2.0, 3.0, 0.0]).unwrap());
        let id = shift(&z, 0).unwrap();
        assert_eq!(id, z);
        let back = shift(&z, -1).unwrap();
        assert_eq!(back, Window::scalar(&[0.0, 1.0, 2.0]).unwrap());
    }

    #[test]
    fn shift_then_counter_shift_zeroes_the_oldest_entry() {
        // T_t o T_{-t} = Id on the semi-infinite space; truncation only
        // loses the oldest entry.
        let z = Window::scalar(&[1.0, 2.0, 3.0]).unwrap();
        let round = shift(&shift(&z, 1).unwrap(), -1).unwrap();
        assert_eq!(round, Window::scalar(&[0.0, 2.0, 3.0]).unwrap());
    }

    #[test]
    fn shift_beyond_depth_errors() {
        let z = Window::scalar(&[1.0, 2.0]).unwrap();
        assert!(matches!(shift(&z, 2), Err(Error::DepthExceeded { .. })));
        assert!(matches!(shift(&z, -2), Err(Error::DepthExceeded { .. })));
    }

    #[test]
    fn projection_norm_estimate_is_exact_via_witness() {
        let spec = NormSpec::Weighted(geo(0.5));
        let est = operator_norm_estimate(OpKind::Projection(-2), &spec, 16, 12, 1, 9).unwrap();
        assert_relative_eq!(est.analytic.value(), 4.0, max_relative = 1e-15);
        assert_relative_eq!(est.empirical, 4.0, max_relative = 1e-9);
    }

    #[test]
    fn delay_norm_estimates_hit_decay_ratios() {
        let spec = NormSpec::Weighted(geo(0.5));
        let t1 = operator_norm_estimate(OpKind::Shift(-1), &spec, 16, 12, 1, 10).unwrap();
        assert_relative_eq!(t1.analytic.value(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(t1.empirical, 2.0, max_relative = 1e-9);

        let tm1 = operator_norm_estimate(OpKind::Shift(1), &spec, 16, 12, 1, 11).unwrap();
        assert_relative_eq!(tm1.analytic.value(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(tm1.empirical, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn projection_at_zero_has_unit_norm() {
        for spec in [
            NormSpec::Weighted(geo(0.7)),
            NormSpec::PWeighted(2.0, geo(0.7)),
            NormSpec::Sup,
        ] {
            let est = operator_norm_estimate(OpKind::Projection(0), &spec, 8, 8, 2, 12).unwrap();
            assert_relative_eq!(est.analytic.value(), 1.0, max_relative = 1e-15);
            assert!(est.empirical <= 1.0 + 1e-9);
            assert!(est.empirical >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn p_weighted_projection_norm() {
        let spec = NormSpec::PWeighted(2.0, geo(0.25));
        let est = operator_norm_estimate(OpKind::Projection(-1), &spec, 16, 8, 1, 13).unwrap();
        // 1 / w_1^{1/2} = 1 / 0.25^{1/2} = 2.
        assert_relative_eq!(est.analytic.value(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(est.empirical, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn estimates_never_exceed_analytic_values() {
        let specs = [
            NormSpec::Weighted(geo(0.5)),
            NormSpec::Weighted(WeightingSequence::harmonic(1.5).unwrap()),
            NormSpec::PWeighted(3.0, geo(0.5)),
        ];
        let ops = [
            OpKind::Projection(0),
            OpKind::Projection(-3),
            OpKind::Shift(-1),
            OpKind::Shift(1),
            OpKind::Shift(2),
            OpKind::Shift(-2),
        ];
        for spec in &specs {
            for (i, op) in ops.iter().enumerate() {
                let est =
                    operator_norm_estimate(*op, spec, 64, 10, 2, 100 + i as u64).unwrap();
                assert!(
                    est.empirical <= est.analytic.value() * (1.0 + 1e-9),
                    "{op:?} exceeded analytic bound: {} > {}",
                    est.empirical,
                    est.analytic.value()
                );
            }
        }
    }
}
