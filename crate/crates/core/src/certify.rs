//! ESP/FMP certificates for (system, weighting sequence) pairs, derived
//! Lipschitz and forgetting bounds, and the derivative-decay diagnostic.
//!
//! All conditions here are sufficient, not necessary: a `NotCertified`
//! verdict never claims that the echo state or fading memory property
//! fails, only that this condition cannot establish it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::Error;
use crate::linalg::spectral_norm;
use crate::reservoir::{ConstProvenance, Family, ReservoirSystem, SamplingSpec};
use crate::seqspace::{WeightingSequence, Window};
use crate::Result;

/// Horizon used when a weighting sequence needs a ratio scan.
const RATIO_HORIZON: usize = 64;

/// Consecutive term-ratio decreases required before the linear-series
/// certificate trusts a geometric tail; transient growth of the powers of
/// a non-normal matrix must not abort certification.
const SUSTAINED_RATIOS: usize = 5;

/// Numerical nilpotency threshold on the spectral norm of a matrix power.
const NILPOTENT_TOL: f64 = 1e-12;

/// Which sufficient condition a certificate evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionKind {
    /// `L_Fx * L_w < 1` for a generic contraction.
    ContractionTimesLw,
    /// `L_Fx * L_{w,p} < 1` on the p-weighted space.
    ContractionTimesLwp(f64),
    /// `sum_j ||A^j|| / w_j < infinity` for linear reservoirs.
    LinearSeries,
    /// `||A|| L_sigma L_w < 1` for echo state networks.
    EsnProduct,
    /// `M_p L_w < 1` for state-affine systems.
    SasProduct,
    /// `L_Fx(x0, z0) L_w < 1` around a known solution.
    LocalPersistence,
    /// Compact-image contraction: ESP for every input.
    CompactTargetEsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    NotCertified,
    /// The condition value looks good but rests on sampled lower-bound
    /// constants, which cannot certify a sup condition.
    Inconclusive,
}

/// Bounds implied by a certified condition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImpliedBounds {
    /// Lipschitz constant of the reservoir filter, `L_Fz / (1 - lhs)`.
    pub filter_lipschitz: Option<f64>,
    /// Scale of the differential forgetting sequence `w^F_t = scale * w_t`.
    pub forgetting_sequence_scale: Option<f64>,
}

/// Verdict record for one sufficient condition on an (F, w) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub condition: ConditionKind,
    pub lhs_value: f64,
    pub verdict: Verdict,
    pub implied: ImpliedBounds,
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

fn ratio_horizon(w: &WeightingSequence) -> usize {
    match w.kind() {
        crate::seqspace::WeightingKind::Custom { table, .. } => {
            RATIO_HORIZON.max(table.len() + 2)
        }
        _ => RATIO_HORIZON,
    }
}

fn tail_rule_note(w: &WeightingSequence, notes: &mut Vec<String>) {
    if matches!(w.kind(), crate::seqspace::WeightingKind::Custom { .. }) {
        notes.push(String::from(
            "verdict depends on the geometric tail continuation of the custom weighting table",
        ));
    }
}

fn product_condition(
    condition: ConditionKind,
    l_fx: f64,
    l_fz: f64,
    l_w: f64,
    provenance: ConstProvenance,
    w: &WeightingSequence,
) -> Certificate {
    let mut notes = Vec::new();
    tail_rule_note(w, &mut notes);
    if !l_w.is_finite() {
        notes.push(String::from("inverse decay ratio infinite"));
        notes.push(String::from("condition not met; ESP/FMP may still hold"));
        return Certificate {
            condition,
            lhs_value: f64::INFINITY,
            verdict: Verdict::NotCertified,
            implied: ImpliedBounds::default(),
            notes,
        };
    }
    let lhs = l_fx * l_w;
    let (verdict, implied) = if lhs < 1.0 {
        match provenance {
            ConstProvenance::Analytic => {
                notes.push(String::from("constants: analytic"));
                let scale = l_fz / (1.0 - lhs);
                (
                    Verdict::Certified,
                    ImpliedBounds {
                        filter_lipschitz: Some(scale),
                        forgetting_sequence_scale: Some(scale),
                    },
                )
            }
            ConstProvenance::SampledLowerBound => {
                notes.push(String::from(
                    "constants are sampled lower bounds; condition likely, unverified",
                ));
                (Verdict::Inconclusive, ImpliedBounds::default())
            }
        }
    } else {
        notes.push(String::from("condition not met; ESP/FMP may still hold"));
        (Verdict::NotCertified, ImpliedBounds::default())
    };
    Certificate { condition, lhs_value: lhs, verdict, implied, notes }
}

fn contraction_condition_kind(sys: &ReservoirSystem) -> ConditionKind {
    match sys.family() {
        Family::Esn { .. } => ConditionKind::EsnProduct,
        Family::TrigSas { .. } | Family::RegularSas { .. } => ConditionKind::SasProduct,
        _ => ConditionKind::ContractionTimesLw,
    }
}

/// Certifies the ESP and FMP of `sys` with respect to `w` through the
/// product condition `L_Fx * L_w < 1`; a certified verdict also carries
/// the filter Lipschitz constant `L_Fz / (1 - L_Fx L_w)`.
pub fn certify_contraction(
    sys: &ReservoirSystem,
    w: &WeightingSequence,
    sampling: &SamplingSpec,
) -> Result<Certificate> {
    let constants = sys.constants(sampling)?;
    let ratios = w.decay_ratios(ratio_horizon(w))?;
    Ok(product_condition(
        contraction_condition_kind(sys),
        constants.l_fx,
        constants.l_fz,
        ratios.l_w,
        constants.provenance,
        w,
    ))
}

/// The `cL_{w,p} < 1` variant, certifying the filter on the p-weighted
/// sequence space.
pub fn certify_contraction_p(
    sys: &ReservoirSystem,
    w: &WeightingSequence,
    p: f64,
    sampling: &SamplingSpec,
) -> Result<Certificate> {
    let constants = sys.constants(sampling)?;
    let ratios = w.decay_ratios_p(p, ratio_horizon(w))?;
    Ok(product_condition(
        ConditionKind::ContractionTimesLwp(p),
        constants.l_fx,
        constants.l_fz,
        ratios.l_w,
        constants.provenance,
        w,
    ))
}

/// Certifies the linear-reservoir series condition
/// `sum_j ||A^j|| / w_j < infinity`, which is strictly weaker than the
/// product condition `||A|| L_w < 1`: harmonic weightings certify systems
/// the product condition rejects. Finiteness is certified either through
/// exact nilpotency or through a sustained geometric decay of the terms.
pub fn certify_linear_series(
    a: &DMatrix<f64>,
    w: &WeightingSequence,
    terms: usize,
) -> Result<Certificate> {
    if terms == 0 {
        return Err(Error::InvalidInput(String::from("terms must be >= 1")));
    }
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(String::from("A must be square")));
    }
    let mut notes = Vec::new();
    tail_rule_note(w, &mut notes);
    notes.push(String::from(
        "series condition is strictly weaker than the product condition ||A|| L_w < 1",
    ));

    let n = a.nrows();
    let mut power = DMatrix::identity(n, n);
    let mut term_values = Vec::with_capacity(terms + 1);
    let mut partial_sum = 0.0;
    let mut nilpotent_at = None;
    for j in 0..=terms {
        let norm_aj = spectral_norm(&power);
        if norm_aj < NILPOTENT_TOL && j <= n {
            nilpotent_at = Some(j);
            break;
        }
        let term = norm_aj / w.weight(j);
        term_values.push(term);
        partial_sum += term;
        power = &power * a;
    }

    if let Some(p) = nilpotent_at {
        notes.push(format!("A is nilpotent of index {p}; the sum is exact and finite"));
        return Ok(Certificate {
            condition: ConditionKind::LinearSeries,
            lhs_value: partial_sum,
            verdict: Verdict::Certified,
            implied: ImpliedBounds::default(),
            notes,
        });
    }

    // Longest suffix of strictly contracting term ratios.
    let mut suffix = 0usize;
    let mut suffix_ratio: f64 = 0.0;
    for j in (1..term_values.len()).rev() {
        let r = term_values[j] / term_values[j - 1];
        if r < 1.0 {
            suffix += 1;
            suffix_ratio = suffix_ratio.max(r);
        } else {
            break;
        }
    }

    if suffix >= SUSTAINED_RATIOS {
        let last = *term_values.last().unwrap();
        let tail_bound = last * suffix_ratio / (1.0 - suffix_ratio);
        notes.push(format!(
            "geometric tail detected over the last {suffix} ratios (max ratio {suffix_ratio})"
        ));
        Ok(Certificate {
            condition: ConditionKind::LinearSeries,
            lhs_value: partial_sum + tail_bound,
            verdict: Verdict::Certified,
            implied: ImpliedBounds::default(),
            notes,
        })
    } else {
        notes.push(format!("no convergent tail detected within {terms} terms"));
        Ok(Certificate {
            condition: ConditionKind::LinearSeries,
            lhs_value: partial_sum,
            verdict: Verdict::Inconclusive,
            implied: ImpliedBounds::default(),
            notes,
        })
    }
}

/// Maximum residual of the reservoir recursion along a windowed
/// trajectory, comparing each state against the image of its predecessor.
pub fn trajectory_residual(sys: &ReservoirSystem, x: &Window, z: &Window) -> Result<f64> {
    if x.depth() != z.depth() {
        return Err(Error::DimensionMismatch { expected: x.depth(), got: z.depth() });
    }
    let depth = x.depth() as i64;
    let mut residual: f64 = 0.0;
    for t in (-depth + 2)..=0 {
        let predicted = sys.apply(&x.at(t - 1), &z.at(t))?;
        residual = residual.max((x.at(t) - predicted).norm());
    }
    Ok(residual)
}

/// Whether the family guarantees a finite global derivative bound `L_F`,
/// which local persistence assumes. Trigonometric SAS qualify only when
/// `p` is constant; the input Jacobian otherwise grows linearly in the
/// state.
fn global_lf_finite(sys: &ReservoirSystem) -> bool {
    match sys.family() {
        Family::Linear { .. } | Family::Esn { .. } => true,
        Family::TrigSas { p, .. } => p
            .iter()
            .all(|term| term.u.iter().all(|v| *v == 0.0) && term.v.iter().all(|v| *v == 0.0)),
        Family::RegularSas { .. } => false,
        Family::Custom { constants, .. } => {
            constants.map(|k| k.l_f.is_finite()).unwrap_or(false)
        }
    }
}

/// Certifies local persistence of the ESP/FMP around a known solution
/// `(x0, z0)` of the reservoir recursion: the window-restricted
/// `sup_t ||D_x F(x0_{t-1}, z0_t)||` times `L_w` must be below one. For
/// constant solutions this sup is exact.
pub fn certify_local_persistence(
    sys: &ReservoirSystem,
    w: &WeightingSequence,
    x0: &Window,
    z0: &Window,
) -> Result<Certificate> {
    let residual = trajectory_residual(sys, x0, z0)?;
    if residual > 1e-9 {
        return Err(Error::NotASolution { residual });
    }
    let ratios = w.decay_ratios(ratio_horizon(w))?;
    let depth = x0.depth() as i64;
    let mut l_fx_local: f64 = 0.0;
    let mut l_fz_local: f64 = 0.0;
    for t in (-depth + 2)..=0 {
        let jx = sys.jacobian_x(&x0.at(t - 1), &z0.at(t))?;
        let jz = sys.jacobian_z(&x0.at(t - 1), &z0.at(t))?;
        l_fx_local = l_fx_local.max(spectral_norm(&jx));
        l_fz_local = l_fz_local.max(spectral_norm(&jz));
    }

    let mut notes = Vec::new();
    tail_rule_note(w, &mut notes);
    notes.push(format!("solution residual {residual:e}"));
    if !ratios.l_w.is_finite() {
        notes.push(String::from("inverse decay ratio infinite"));
        notes.push(String::from("condition not met; ESP/FMP may still hold"));
        return Ok(Certificate {
            condition: ConditionKind::LocalPersistence,
            lhs_value: f64::INFINITY,
            verdict: Verdict::NotCertified,
            implied: ImpliedBounds::default(),
            notes,
        });
    }

    let lhs = l_fx_local * ratios.l_w;
    let (verdict, implied) = if lhs >= 1.0 {
        notes.push(String::from("condition not met; ESP/FMP may still hold"));
        (Verdict::NotCertified, ImpliedBounds::default())
    } else if !global_lf_finite(sys) {
        notes.push(String::from(
            "persistence needs a finite global derivative bound, unavailable for this family",
        ));
        (Verdict::Inconclusive, ImpliedBounds::default())
    } else {
        let scale = l_fz_local / (1.0 - lhs);
        notes.push(String::from("local derivative bound from the window-restricted sup"));
        (
            Verdict::Certified,
            ImpliedBounds {
                filter_lipschitz: Some(scale),
                forgetting_sequence_scale: Some(scale),
            },
        )
    };
    Ok(Certificate {
        condition: ConditionKind::LocalPersistence,
        lhs_value: lhs,
        verdict,
        implied,
        notes,
    })
}

/// Compact-target ESP: a contraction whose image sits in a compact set
/// has the echo state property for every input, independently of any
/// weighting sequence. The FMP additionally holds for weightings with
/// `L_Fx L_w < 1`.
pub fn compact_target_esp(sys: &ReservoirSystem, sampling: &SamplingSpec) -> Result<Certificate> {
    if !sys.compact_image() {
        return Err(Error::Unsupported(String::from(
            "compact-target ESP needs a family with compact image",
        )));
    }
    let constants = sys.constants(sampling)?;
    let mut notes = Vec::new();
    let verdict = if constants.l_fx < 1.0 {
        match constants.provenance {
            ConstProvenance::Analytic => {
                notes.push(String::from("ESP certified for every input sequence"));
                notes.push(String::from(
                    "FMP additionally holds for weightings with L_Fx * L_w < 1",
                ));
                Verdict::Certified
            }
            ConstProvenance::SampledLowerBound => {
                notes.push(String::from(
                    "constants are sampled lower bounds; condition likely, unverified",
                ));
                Verdict::Inconclusive
            }
        }
    } else {
        notes.push(String::from("condition not met; ESP may still hold"));
        Verdict::NotCertified
    };
    Ok(Certificate {
        condition: ConditionKind::CompactTargetEsp,
        lhs_value: constants.l_fx,
        verdict,
        implied: ImpliedBounds::default(),
        notes,
    })
}

/// Differential forgetting envelope `w^F_t = L_Fz / (1 - L_Fx L_w) * w_t`
/// for `t = 0..=horizon`; every partial derivative of the reservoir
/// functional at lag `t` is bounded by `w^F_{-t}`.
pub fn differential_forgetting_bound(
    sys: &ReservoirSystem,
    w: &WeightingSequence,
    horizon: usize,
    sampling: &SamplingSpec,
) -> Result<Vec<f64>> {
    let cert = certify_contraction(sys, w, sampling)?;
    if !cert.is_certified() {
        return Err(Error::CertificateRequired);
    }
    let scale = cert
        .implied
        .forgetting_sequence_scale
        .expect("certified contraction always carries the forgetting scale");
    Ok((0..=horizon).map(|t| scale * w.weight(t)).collect())
}

/// Diagnostic for the necessary differentiability condition: the norms of
/// the backward Jacobian products along a checked solution, divided by
/// `w_k`. Differentiability at the input requires these values to tend to
/// zero; growth falsifies it.
pub fn derivative_decay_diagnostic(
    sys: &ReservoirSystem,
    w: &WeightingSequence,
    x: &Window,
    z: &Window,
    k_max: usize,
) -> Result<Vec<f64>> {
    if k_max >= x.depth() {
        return Err(Error::DepthExceeded { depth: x.depth(), requested: k_max });
    }
    let residual = trajectory_residual(sys, x, z)?;
    if residual > 1e-9 {
        return Err(Error::NotASolution { residual });
    }
    let mut product = DMatrix::identity(sys.state_dim(), sys.state_dim());
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max as i64 {
        let jac = sys.jacobian_x(&x.at(-k), &z.at(-k + 1))?;
        product = &product * &jac;
        out.push(spectral_norm(&product) / w.weight(k as usize));
    }
    Ok(out)
}
