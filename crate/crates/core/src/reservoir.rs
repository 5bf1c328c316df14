//! Concrete reservoir-map families with analytic Jacobians, readout maps,
//! and the derivative-bound constants used by the certificates.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::linalg::{block_norm, spectral_norm};
use crate::rng::lattice;
use crate::Result;

type StateFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type JacFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type VecFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type VecJacFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Squashing nonlinearity applied componentwise by echo state networks.
#[derive(Clone)]
pub enum Squashing {
    Tanh,
    /// `x / sqrt(1 + x^2)`; convenient because fixed points and Jacobians
    /// have algebraic expressions.
    AlgebraicSigmoid,
    Custom {
        f: ScalarFn,
        df: ScalarFn,
        lipschitz: f64,
        bounded_image: bool,
    },
}

impl core::fmt::Debug for Squashing {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Squashing::Tanh => write!(f, "Tanh"),
            Squashing::AlgebraicSigmoid => write!(f, "AlgebraicSigmoid"),
            Squashing::Custom { lipschitz, .. } => {
                write!(f, "Custom {{ lipschitz: {lipschitz} }}")
            }
        }
    }
}

impl Squashing {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Squashing::Tanh => x.tanh(),
            Squashing::AlgebraicSigmoid => x / (1.0 + x * x).sqrt(),
            Squashing::Custom { f, .. } => f(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Squashing::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Squashing::AlgebraicSigmoid => (1.0 + x * x).powf(-1.5),
            Squashing::Custom { df, .. } => df(x),
        }
    }

    /// `L_sigma = sup |sigma'|`; equals 1 for both built-in squashings.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Squashing::Tanh | Squashing::AlgebraicSigmoid => 1.0,
            Squashing::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn bounded_image(&self) -> bool {
        match self {
            Squashing::Tanh | Squashing::AlgebraicSigmoid => true,
            Squashing::Custom { bounded_image, .. } => *bounded_image,
        }
    }
}

/// One monomial `coeff * x^exponents` of a vector-valued polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialTerm {
    pub coeff: DVector<f64>,
    pub exponents: Vec<u32>,
}

/// Vector-valued multivariate polynomial `R^n -> R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    input_dim: usize,
    output_dim: usize,
    terms: Vec<MonomialTerm>,
}

impl PolynomialMap {
    pub fn new(input_dim: usize, output_dim: usize, terms: Vec<MonomialTerm>) -> Result<Self> {
        for term in &terms {
            if term.coeff.len() != output_dim {
                return Err(Error::DimensionMismatch {
                    expected: output_dim,
                    got: term.coeff.len(),
                });
            }
            if term.exponents.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: input_dim,
                    got: term.exponents.len(),
                });
            }
        }
        Ok(Self { input_dim, output_dim, terms })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn terms(&self) -> &[MonomialTerm] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let mut out = DVector::zeros(self.output_dim);
        for term in &self.terms {
            out += &term.coeff * monomial(x, &term.exponents);
        }
        Ok(out)
    }

    /// Exact Jacobian from the monomial partials.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let mut jac = DMatrix::zeros(self.output_dim, self.input_dim);
        for term in &self.terms {
            for l in 0..self.input_dim {
                let e = term.exponents[l];
                if e == 0 {
                    continue;
                }
                let mut partial = e as f64 * x[l].powi(e as i32 - 1);
                for (i, &ei) in term.exponents.iter().enumerate() {
                    if i != l {
                        partial *= x[i].powi(ei as i32);
                    }
                }
                for r in 0..self.output_dim {
                    jac[(r, l)] += term.coeff[r] * partial;
                }
            }
        }
        Ok(jac)
    }
}

fn monomial(x: &DVector<f64>, exponents: &[u32]) -> f64 {
    exponents
        .iter()
        .enumerate()
        .map(|(i, &e)| x[i].powi(e as i32))
        .product()
}

/// Readout map applied to reservoir states.
#[derive(Clone)]
pub enum Readout {
    LinearMap(DMatrix<f64>),
    Polynomial(PolynomialMap),
    Custom {
        h: VecFn,
        dh: VecJacFn,
        /// `sup ||Dh||`, required finite for differentiability of the
        /// full system.
        c_h: f64,
        output_dim: usize,
    },
}

impl core::fmt::Debug for Readout {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Readout::LinearMap(w) => write!(f, "LinearMap({}x{})", w.nrows(), w.ncols()),
            Readout::Polynomial(p) => {
                write!(f, "Polynomial(deg {}, {} terms)", p.degree(), p.terms().len())
            }
            Readout::Custom { c_h, output_dim, .. } => {
                write!(f, "Custom {{ c_h: {c_h}, output_dim: {output_dim} }}")
            }
        }
    }
}

impl Readout {
    pub fn output_dim(&self) -> usize {
        match self {
            Readout::LinearMap(w) => w.nrows(),
            Readout::Polynomial(p) => p.output_dim(),
            Readout::Custom { output_dim, .. } => *output_dim,
        }
    }

    pub fn state_dim(&self) -> Option<usize> {
        match self {
            Readout::LinearMap(w) => Some(w.ncols()),
            Readout::Polynomial(p) => Some(p.input_dim()),
            Readout::Custom { .. } => None,
        }
    }
}

/// Evaluates the readout at a state.
pub fn readout_apply(r: &Readout, x: &DVector<f64>) -> Result<DVector<f64>> {
    match r {
        Readout::LinearMap(w) => {
            if w.ncols() != x.len() {
                return Err(Error::DimensionMismatch { expected: w.ncols(), got: x.len() });
            }
            Ok(w * x)
        }
        Readout::Polynomial(p) => p.eval(x),
        Readout::Custom { h, .. } => Ok(h(x)),
    }
}

/// Jacobian of the readout at a state.
pub fn readout_jacobian(r: &Readout, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    match r {
        Readout::LinearMap(w) => {
            if w.ncols() != x.len() {
                return Err(Error::DimensionMismatch { expected: w.ncols(), got: x.len() });
            }
            Ok(w.clone())
        }
        Readout::Polynomial(p) => p.jacobian(x),
        Readout::Custom { dh, .. } => Ok(dh(x)),
    }
}

/// One trigonometric term `a cos(u . z) + b sin(v . z)` with matrix
/// coefficients (the `p` polynomial of a trigonometric SAS).
#[derive(Debug, Clone, PartialEq)]
pub struct TrigMatrixTerm {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

/// One trigonometric term with vector coefficients (the `q` polynomial).
#[derive(Debug, Clone, PartialEq)]
pub struct TrigVectorTerm {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

/// Matrix-valued polynomial `p(z) = sum_i A_i z^{e_i}` of a regular SAS.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPoly {
    pub terms: Vec<(DMatrix<f64>, Vec<u32>)>,
}

/// Vector-valued polynomial `q(z) = sum_i b_i z^{e_i}` of a regular SAS.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPoly {
    pub terms: Vec<(DVector<f64>, Vec<u32>)>,
}

/// Reservoir-map families.
#[derive(Clone)]
pub enum Family {
    /// `F(x, z) = A x + C z`.
    Linear { a: DMatrix<f64>, c: DMatrix<f64> },
    /// `F(x, z) = sigma(A x + C z + zeta)` componentwise.
    Esn {
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        zeta: DVector<f64>,
        sigma: Squashing,
    },
    /// `F(x, z) = p(z) x + q(z)` with trigonometric polynomials.
    TrigSas { p: Vec<TrigMatrixTerm>, q: Vec<TrigVectorTerm> },
    /// `F(x, z) = p(z) x + q(z)` with ordinary polynomials; the input
    /// domain must be bounded for the constants to be finite.
    RegularSas { p: MatrixPoly, q: VectorPoly, m_dom: f64 },
    /// User-supplied map with optional analytic Jacobians.
    Custom {
        f: StateFn,
        dx: Option<JacFn>,
        dz: Option<JacFn>,
        constants: Option<SystemConstants>,
        compact_image: bool,
    },
}

impl core::fmt::Debug for Family {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Family::Linear { .. } => write!(f, "Linear"),
            Family::Esn { sigma, .. } => write!(f, "Esn({sigma:?})"),
            Family::TrigSas { .. } => write!(f, "TrigSas"),
            Family::RegularSas { m_dom, .. } => write!(f, "RegularSas {{ m_dom: {m_dom} }}"),
            Family::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// How a constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstProvenance {
    /// Closed form; valid as a certificate input.
    Analytic,
    /// Sup over a sampling grid; a lower bound on the true sup, so it can
    /// suggest but never certify.
    SampledLowerBound,
}

/// Global derivative bounds of a reservoir map: `L_F = sup ||DF||`,
/// `L_Fx = sup ||D_x F||`, `L_Fz = sup ||D_z F||`, plus the SAS-specific
/// `M_p = sup ||p(z)||` and `M_q = sup ||q(z)||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConstants {
    pub l_f: f64,
    pub l_fx: f64,
    pub l_fz: f64,
    pub m_p: Option<f64>,
    pub m_q: Option<f64>,
    pub provenance: ConstProvenance,
}

/// Sampling grid for constants that have no closed form. The grid is a
/// rank-1 lattice over the box `[-x_radius, x_radius]^N x [-z_radius,
/// z_radius]^n`; for regular SAS the z part is clipped into the ball of
/// radius `m_dom`. Results are explicitly lower bounds on the true sup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingSpec {
    pub points: usize,
    pub x_radius: f64,
    pub z_radius: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self { points: 4096, x_radius: 1.0, z_radius: 1.0 }
    }
}

/// A reservoir map together with its dimensions and optional readout.
#[derive(Debug, Clone)]
pub struct ReservoirSystem {
    family: Family,
    state_dim: usize,
    input_dim: usize,
    readout: Option<Readout>,
}

impl ReservoirSystem {
    pub fn linear(a: DMatrix<f64>, c: DMatrix<f64>, readout: Option<Readout>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidInput(String::from("A must be square")));
        }
        if c.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: c.nrows() });
        }
        let (state_dim, input_dim) = (a.nrows(), c.ncols());
        let sys = Self { family: Family::Linear { a, c }, state_dim, input_dim, readout };
        sys.check_readout()?;
        Ok(sys)
    }

    pub fn esn(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        zeta: DVector<f64>,
        sigma: Squashing,
        readout: Option<Readout>,
    ) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidInput(String::from("A must be square")));
        }
        if c.nrows() != a.nrows() || zeta.len() != a.nrows() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: c.nrows() });
        }
        let (state_dim, input_dim) = (a.nrows(), c.ncols());
        let sys =
            Self { family: Family::Esn { a, c, zeta, sigma }, state_dim, input_dim, readout };
        sys.check_readout()?;
        Ok(sys)
    }

    pub fn trig_sas(
        state_dim: usize,
        input_dim: usize,
        p: Vec<TrigMatrixTerm>,
        q: Vec<TrigVectorTerm>,
        readout: Option<Readout>,
    ) -> Result<Self> {
        for term in &p {
            if term.a.nrows() != state_dim
                || term.a.ncols() != state_dim
                || term.b.nrows() != state_dim
                || term.b.ncols() != state_dim
            {
                return Err(Error::DimensionMismatch {
                    expected: state_dim,
                    got: term.a.nrows(),
                });
            }
            if term.u.len() != input_dim || term.v.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: input_dim,
                    got: term.u.len(),
                });
            }
        }
        for term in &q {
            if term.a.len() != state_dim || term.b.len() != state_dim {
                return Err(Error::DimensionMismatch {
                    expected: state_dim,
                    got: term.a.len(),
                });
            }
            if term.u.len() != input_dim || term.v.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: input_dim,
                    got: term.u.len(),
                });
            }
        }
        let sys = Self { family: Family::TrigSas { p, q }, state_dim, input_dim, readout };
        sys.check_readout()?;
        Ok(sys)
    }

    pub fn regular_sas(
        state_dim: usize,
        input_dim: usize,
        p: MatrixPoly,
        q: VectorPoly,
        m_dom: f64,
        readout: Option<Readout>,
    ) -> Result<Self> {
        if !m_dom.is_finite() || m_dom <= 0.0 {
            return Err(Error::UnboundedDomain);
        }
        for (m, e) in &p.terms {
            if m.nrows() != state_dim || m.ncols() != state_dim || e.len() != input_dim {
                return Err(Error::DimensionMismatch { expected: state_dim, got: m.nrows() });
            }
        }
        for (v, e) in &q.terms {
            if v.len() != state_dim || e.len() != input_dim {
                return Err(Error::DimensionMismatch { expected: state_dim, got: v.len() });
            }
        }
        let sys =
            Self { family: Family::RegularSas { p, q, m_dom }, state_dim, input_dim, readout };
        sys.check_readout()?;
        Ok(sys)
    }

    pub fn custom(
        state_dim: usize,
        input_dim: usize,
        f: StateFn,
        dx: Option<JacFn>,
        dz: Option<JacFn>,
        constants: Option<SystemConstants>,
        compact_image: bool,
        readout: Option<Readout>,
    ) -> Result<Self> {
        let sys = Self {
            family: Family::Custom { f, dx, dz, constants, compact_image },
            state_dim,
            input_dim,
            readout,
        };
        sys.check_readout()?;
        Ok(sys)
    }

    fn check_readout(&self) -> Result<()> {
        if let Some(r) = &self.readout {
            if let Some(n) = r.state_dim() {
                if n != self.state_dim {
                    return Err(Error::DimensionMismatch { expected: self.state_dim, got: n });
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn readout(&self) -> Option<&Readout> {
        self.readout.as_ref()
    }

    /// Output dimension: readout target when present, state otherwise.
    pub fn output_dim(&self) -> usize {
        self.readout.as_ref().map_or(self.state_dim, |r| r.output_dim())
    }

    /// Whether the map's image sits in a compact set (squashed ESNs map
    /// into `[-1, 1]^N`).
    pub fn compact_image(&self) -> bool {
        match &self.family {
            Family::Esn { sigma, .. } => sigma.bounded_image(),
            Family::Custom { compact_image, .. } => *compact_image,
            _ => false,
        }
    }

    fn check_dims(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch { expected: self.state_dim, got: x.len() });
        }
        if z.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: z.len() });
        }
        Ok(())
    }

    /// One step of the reservoir recursion, `F(x, z)`.
    pub fn apply(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x, z)?;
        Ok(match &self.family {
            Family::Linear { a, c } => a * x + c * z,
            Family::Esn { a, c, zeta, sigma } => {
                let u = a * x + c * z + zeta;
                u.map(|v| sigma.apply(v))
            }
            Family::TrigSas { p, q } => {
                trig_matrix_eval(p, z, self.state_dim) * x + trig_vector_eval(q, z, self.state_dim)
            }
            Family::RegularSas { p, q, .. } => {
                poly_matrix_eval(p, z, self.state_dim) * x + poly_vector_eval(q, z, self.state_dim)
            }
            Family::Custom { f, .. } => {
                let out = f(x, z);
                if out.len() != self.state_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.state_dim,
                        got: out.len(),
                    });
                }
                out
            }
        })
    }

    /// `D_x F(x, z)` as an `N x N` matrix.
    pub fn jacobian_x(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dims(x, z)?;
        Ok(match &self.family {
            Family::Linear { a, .. } => a.clone(),
            Family::Esn { a, c, zeta, sigma } => {
                let u = a * x + c * z + zeta;
                scale_rows(a, &u.map(|v| sigma.derivative(v)))
            }
            Family::TrigSas { p, .. } => trig_matrix_eval(p, z, self.state_dim),
            Family::RegularSas { p, .. } => poly_matrix_eval(p, z, self.state_dim),
            Family::Custom { dx, .. } => match dx {
                Some(j) => j(x, z),
                None => {
                    return Err(Error::Unsupported(String::from(
                        "custom reservoir lacks an analytic state Jacobian",
                    )))
                }
            },
        })
    }

    /// `D_z F(x, z)` as an `N x n` matrix.
    pub fn jacobian_z(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dims(x, z)?;
        Ok(match &self.family {
            Family::Linear { c, .. } => c.clone(),
            Family::Esn { a, c, zeta, sigma } => {
                let u = a * x + c * z + zeta;
                scale_rows(c, &u.map(|v| sigma.derivative(v)))
            }
            Family::TrigSas { p, q } => {
                let mut jac = DMatrix::zeros(self.state_dim, self.input_dim);
                for l in 0..self.input_dim {
                    let mut col = DVector::zeros(self.state_dim);
                    for term in p {
                        let cu = (term.u.dot(z)).sin();
                        let cv = (term.v.dot(z)).cos();
                        col += (&term.a * x) * (-cu * term.u[l]);
                        col += (&term.b * x) * (cv * term.v[l]);
                    }
                    for term in q {
                        let cu = (term.u.dot(z)).sin();
                        let cv = (term.v.dot(z)).cos();
                        col += &term.a * (-cu * term.u[l]);
                        col += &term.b * (cv * term.v[l]);
                    }
                    jac.set_column(l, &col);
                }
                jac
            }
            Family::RegularSas { p, q, .. } => {
                let mut jac = DMatrix::zeros(self.state_dim, self.input_dim);
                for l in 0..self.input_dim {
                    let mut col = DVector::zeros(self.state_dim);
                    for (m, e) in &p.terms {
                        let d = monomial_partial(z, e, l);
                        if d != 0.0 {
                            col += (m * x) * d;
                        }
                    }
                    for (v, e) in &q.terms {
                        let d = monomial_partial(z, e, l);
                        if d != 0.0 {
                            col += v * d;
                        }
                    }
                    jac.set_column(l, &col);
                }
                jac
            }
            Family::Custom { dz, .. } => match dz {
                Some(j) => j(x, z),
                None => {
                    return Err(Error::Unsupported(String::from(
                        "custom reservoir lacks an analytic input Jacobian",
                    )))
                }
            },
        })
    }

    /// Derivative-bound constants. Linear and ESN families have closed
    /// forms (the ESN values are the standard `L_sigma`-scaled upper
    /// bounds, which are valid certificate inputs); SAS families are
    /// sampled over the grid and flagged as lower bounds.
    pub fn constants(&self, sampling: &SamplingSpec) -> Result<SystemConstants> {
        match &self.family {
            Family::Linear { a, c } => Ok(SystemConstants {
                l_f: block_norm(a, c),
                l_fx: spectral_norm(a),
                l_fz: spectral_norm(c),
                m_p: None,
                m_q: None,
                provenance: ConstProvenance::Analytic,
            }),
            Family::Esn { a, c, sigma, .. } => {
                let ls = sigma.lipschitz();
                Ok(SystemConstants {
                    l_f: ls * block_norm(a, c),
                    l_fx: ls * spectral_norm(a),
                    l_fz: ls * spectral_norm(c),
                    m_p: None,
                    m_q: None,
                    provenance: ConstProvenance::Analytic,
                })
            }
            Family::TrigSas { p, q } => {
                self.sampled_constants(sampling, sampling.z_radius, false, |z| {
                    (
                        trig_matrix_eval(p, z, self.state_dim),
                        trig_vector_eval(q, z, self.state_dim),
                    )
                })
            }
            Family::RegularSas { p, q, m_dom } => {
                self.sampled_constants(sampling, *m_dom, true, |z| {
                    (
                        poly_matrix_eval(p, z, self.state_dim),
                        poly_vector_eval(q, z, self.state_dim),
                    )
                })
            }
            Family::Custom { constants, .. } => constants.ok_or_else(|| {
                Error::Unsupported(String::from("custom reservoir carries no constants"))
            }),
        }
    }

    fn sampled_constants(
        &self,
        sampling: &SamplingSpec,
        z_radius: f64,
        clip_to_ball: bool,
        pq: impl Fn(&DVector<f64>) -> (DMatrix<f64>, DVector<f64>),
    ) -> Result<SystemConstants> {
        let (n_x, n_z) = (self.state_dim, self.input_dim);
        let pts = lattice(n_x + n_z, sampling.points.max(1));
        let mut m_p: f64 = 0.0;
        let mut m_q: f64 = 0.0;
        let mut l_fz: f64 = 0.0;
        let mut l_f: f64 = 0.0;
        for pt in pts {
            let x = DVector::from_fn(n_x, |i, _| (2.0 * pt[i] - 1.0) * sampling.x_radius);
            let mut z = DVector::from_fn(n_z, |i, _| (2.0 * pt[n_x + i] - 1.0) * z_radius);
            if clip_to_ball {
                let zn = z.norm();
                if zn > z_radius {
                    z *= z_radius / zn;
                }
            }
            let (pz, qz) = pq(&z);
            m_p = m_p.max(spectral_norm(&pz));
            m_q = m_q.max(qz.norm());
            let jz = self.jacobian_z(&x, &z)?;
            l_fz = l_fz.max(spectral_norm(&jz));
            l_f = l_f.max(block_norm(&pz, &jz));
        }
        Ok(SystemConstants {
            l_f,
            l_fx: m_p,
            l_fz,
            m_p: Some(m_p),
            m_q: Some(m_q),
            provenance: ConstProvenance::SampledLowerBound,
        })
    }
}

fn scale_rows(m: &DMatrix<f64>, scales: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, row) in out.row_iter_mut().enumerate() {
        for v in row.into_iter() {
            *v *= scales[i];
        }
    }
    out
}

fn trig_matrix_eval(terms: &[TrigMatrixTerm], z: &DVector<f64>, dim: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim, dim);
    for term in terms {
        out += &term.a * (term.u.dot(z)).cos() + &term.b * (term.v.dot(z)).sin();
    }
    out
}

fn trig_vector_eval(terms: &[TrigVectorTerm], z: &DVector<f64>, dim: usize) -> DVector<f64> {
    let mut out = DVector::zeros(dim);
    for term in terms {
        out += &term.a * (term.u.dot(z)).cos() + &term.b * (term.v.dot(z)).sin();
    }
    out
}

fn poly_matrix_eval(p: &MatrixPoly, z: &DVector<f64>, dim: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim, dim);
    for (m, e) in &p.terms {
        out += m * monomial(z, e);
    }
    out
}

fn poly_vector_eval(q: &VectorPoly, z: &DVector<f64>, dim: usize) -> DVector<f64> {
    let mut out = DVector::zeros(dim);
    for (v, e) in &q.terms {
        out += v * monomial(z, e);
    }
    out
}

fn monomial_partial(z: &DVector<f64>, exponents: &[u32], l: usize) -> f64 {
    let e = exponents[l];
    if e == 0 {
        return 0.0;
    }
    let mut d = e as f64 * z[l].powi(e as i32 - 1);
    for (i, &ei) in exponents.iter().enumerate() {
        if i != l {
            d *= z[i].powi(ei as i32);
        }
    }
    d
}
