//! On-disk formats: system and weighting JSON, window CSV, certificate
//! and kernel-set JSON. Matrices are row-major; windows are one CSV row
//! per time step, oldest first.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use rescert_core::certify::{Certificate, ConditionKind, Verdict};
use rescert_core::reservoir::{
    MatrixPoly, MonomialTerm, PolynomialMap, Readout, ReservoirSystem, Squashing, TrigMatrixTerm,
    TrigVectorTerm, VectorPoly,
};
use rescert_core::seqspace::{WeightingSequence, Window};
use rescert_core::volterra::{KernelProvenance, VolterraKernelSet};

/// Float wrapper that keeps infinities representable in JSON ("inf"),
/// with lossless round-tripping for finite values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtFloat(pub f64);

impl Serialize for ExtFloat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for ExtFloat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtFloat(v)),
            Raw::Str(s) => match s.as_str() {
                "inf" => Ok(ExtFloat(f64::INFINITY)),
                "-inf" => Ok(ExtFloat(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("not a float: {other}"))),
            },
        }
    }
}

// ---------------------------------------------------------------------
// Weighting sequences

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightingDto {
    Geometric { lambda: f64 },
    Harmonic { d: f64 },
    GaussianExp,
    Custom {
        table: Vec<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        tail_ratio: Option<f64>,
    },
}

impl WeightingDto {
    pub fn to_core(&self) -> Result<WeightingSequence> {
        Ok(match self {
            WeightingDto::Geometric { lambda } => WeightingSequence::geometric(*lambda)?,
            WeightingDto::Harmonic { d } => WeightingSequence::harmonic(*d)?,
            WeightingDto::GaussianExp => WeightingSequence::gaussian_exp(),
            WeightingDto::Custom { table, tail_ratio } => match tail_ratio {
                Some(r) => WeightingSequence::custom_with_tail(table.clone(), *r)?,
                None => WeightingSequence::custom(table.clone())?,
            },
        })
    }

}

/// Parses a weighting given either as an inline JSON object or as a path
/// to a JSON file.
pub fn parse_weighting(spec: &str) -> Result<WeightingSequence> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        fs::read_to_string(spec).with_context(|| format!("reading weighting file {spec}"))?
    };
    let dto: WeightingDto = serde_json::from_str(&text)
        .with_context(|| "parsing weighting JSON (expected e.g. {\"kind\":\"geometric\",\"lambda\":0.5})")?;
    dto.to_core()
}

// ---------------------------------------------------------------------
// Reservoir systems

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReadoutDto {
    Linear {
        #[serde(rename = "W")]
        w: Vec<Vec<f64>>,
    },
    Polynomial {
        input_dim: usize,
        output_dim: usize,
        terms: Vec<PolyTermDto>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyTermDto {
    pub coeff: Vec<f64>,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrigTermDto {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrigVecTermDto {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixPolyTermDto {
    pub coeff: Vec<Vec<f64>>,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemDto {
    Linear {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        readout: Option<ReadoutDto>,
    },
    Esn {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        zeta: Vec<f64>,
        sigma: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        readout: Option<ReadoutDto>,
    },
    TrigSas {
        state_dim: usize,
        input_dim: usize,
        p: Vec<TrigTermDto>,
        q: Vec<TrigVecTermDto>,
        #[serde(skip_serializing_if = "Option::is_none")]
        readout: Option<ReadoutDto>,
    },
    RegularSas {
        state_dim: usize,
        input_dim: usize,
        m_dom: f64,
        p: Vec<MatrixPolyTermDto>,
        q: Vec<PolyTermDto>,
        #[serde(skip_serializing_if = "Option::is_none")]
        readout: Option<ReadoutDto>,
    },
}

pub const SUPPORTED_FAMILIES: &str = "linear, esn, trig-sas, regular-sas";

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        bail!("{what}: matrix must be non-empty");
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        bail!("{what}: ragged matrix rows");
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}


fn readout_to_core(dto: &ReadoutDto) -> Result<Readout> {
    Ok(match dto {
        ReadoutDto::Linear { w } => Readout::LinearMap(matrix_from_rows(w, "readout W")?),
        ReadoutDto::Polynomial { input_dim, output_dim, terms } => {
            let terms = terms
                .iter()
                .map(|t| MonomialTerm {
                    coeff: DVector::from_vec(t.coeff.clone()),
                    exponents: t.exponents.clone(),
                })
                .collect();
            Readout::Polynomial(PolynomialMap::new(*input_dim, *output_dim, terms)?)
        }
    })
}

fn squashing_from_name(name: &str) -> Result<Squashing> {
    match name {
        "tanh" => Ok(Squashing::Tanh),
        "algebraic-sigmoid" => Ok(Squashing::AlgebraicSigmoid),
        other => bail!("unknown squashing '{other}' (supported: tanh, algebraic-sigmoid)"),
    }
}

impl SystemDto {
    pub fn to_core(&self) -> Result<ReservoirSystem> {
        Ok(match self {
            SystemDto::Linear { a, c, readout } => ReservoirSystem::linear(
                matrix_from_rows(a, "A")?,
                matrix_from_rows(c, "c")?,
                readout.as_ref().map(readout_to_core).transpose()?,
            )?,
            SystemDto::Esn { a, c, zeta, sigma, readout } => ReservoirSystem::esn(
                matrix_from_rows(a, "A")?,
                matrix_from_rows(c, "c")?,
                DVector::from_vec(zeta.clone()),
                squashing_from_name(sigma)?,
                readout.as_ref().map(readout_to_core).transpose()?,
            )?,
            SystemDto::TrigSas { state_dim, input_dim, p, q, readout } => {
                let p_terms = p
                    .iter()
                    .map(|t| {
                        Ok(TrigMatrixTerm {
                            a: matrix_from_rows(&t.a, "p.a")?,
                            b: matrix_from_rows(&t.b, "p.b")?,
                            u: DVector::from_vec(t.u.clone()),
                            v: DVector::from_vec(t.v.clone()),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let q_terms = q
                    .iter()
                    .map(|t| TrigVectorTerm {
                        a: DVector::from_vec(t.a.clone()),
                        b: DVector::from_vec(t.b.clone()),
                        u: DVector::from_vec(t.u.clone()),
                        v: DVector::from_vec(t.v.clone()),
                    })
                    .collect();
                ReservoirSystem::trig_sas(
                    *state_dim,
                    *input_dim,
                    p_terms,
                    q_terms,
                    readout.as_ref().map(readout_to_core).transpose()?,
                )?
            }
            SystemDto::RegularSas { state_dim, input_dim, m_dom, p, q, readout } => {
                let p_poly = MatrixPoly {
                    terms: p
                        .iter()
                        .map(|t| Ok((matrix_from_rows(&t.coeff, "p.coeff")?, t.exponents.clone())))
                        .collect::<Result<Vec<_>>>()?,
                };
                let q_poly = VectorPoly {
                    terms: q
                        .iter()
                        .map(|t| (DVector::from_vec(t.coeff.clone()), t.exponents.clone()))
                        .collect(),
                };
                ReservoirSystem::regular_sas(
                    *state_dim,
                    *input_dim,
                    p_poly,
                    q_poly,
                    *m_dom,
                    readout.as_ref().map(readout_to_core).transpose()?,
                )?
            }
        })
    }

    /// Returns a copy with the state matrix (or `p` coefficients) scaled,
    /// used by parameter sweeps.
    pub fn scale_state_matrix(&self, factor: f64) -> SystemDto {
        let mut out = self.clone();
        match &mut out {
            SystemDto::Linear { a, .. } | SystemDto::Esn { a, .. } => {
                for row in a.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= factor;
                    }
                }
            }
            SystemDto::TrigSas { p, .. } => {
                for term in p.iter_mut() {
                    for row in term.a.iter_mut().chain(term.b.iter_mut()) {
                        for v in row.iter_mut() {
                            *v *= factor;
                        }
                    }
                }
            }
            SystemDto::RegularSas { p, .. } => {
                for term in p.iter_mut() {
                    for row in term.coeff.iter_mut() {
                        for v in row.iter_mut() {
                            *v *= factor;
                        }
                    }
                }
            }
        }
        out
    }

    /// Scales the input-coupling matrix (or `q` coefficients).
    pub fn scale_input_matrix(&self, factor: f64) -> SystemDto {
        let mut out = self.clone();
        match &mut out {
            SystemDto::Linear { c, .. } | SystemDto::Esn { c, .. } => {
                for row in c.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= factor;
                    }
                }
            }
            SystemDto::TrigSas { q, .. } => {
                for term in q.iter_mut() {
                    for v in term.a.iter_mut().chain(term.b.iter_mut()) {
                        *v *= factor;
                    }
                }
            }
            SystemDto::RegularSas { q, .. } => {
                for term in q.iter_mut() {
                    for v in term.coeff.iter_mut() {
                        *v *= factor;
                    }
                }
            }
        }
        out
    }

    /// The linear-family matrices, if this is a linear system.
    pub fn linear_parts(&self) -> Option<(DMatrix<f64>, DMatrix<f64>, Option<&ReadoutDto>)> {
        match self {
            SystemDto::Linear { a, c, readout } => Some((
                matrix_from_rows(a, "A").ok()?,
                matrix_from_rows(c, "c").ok()?,
                readout.as_ref(),
            )),
            _ => None,
        }
    }
}

pub fn load_system(path: &str) -> Result<(SystemDto, ReservoirSystem)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading system file {path}"))?;
    let dto: SystemDto = serde_json::from_str(&text).map_err(|e| {
        anyhow!("parsing system JSON {path}: {e} (supported families: {SUPPORTED_FAMILIES})")
    })?;
    let sys = dto.to_core()?;
    Ok((dto, sys))
}

// ---------------------------------------------------------------------
// Windows (CSV)

/// Window JSON body: rows oldest first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowDto {
    pub values: Vec<Vec<f64>>,
}

/// Reads a window from CSV or, for `.json` paths, from the JSON form.
pub fn read_window(path: &str) -> Result<Window> {
    if path.ends_with(".json") {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading window file {path}"))?;
        let dto: WindowDto = serde_json::from_str(&text)
            .with_context(|| format!("parsing window JSON {path}"))?;
        Ok(Window::from_rows(&dto.values)?)
    } else {
        read_window_csv(path)
    }
}

pub fn read_window_csv(path: &str) -> Result<Window> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening window CSV {path}"))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{path}: reading line {}", line + 1))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().with_context(|| {
                    format!("{path}: line {} field {}: not a float: '{field}'", line + 1, col + 1)
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Window::from_rows(&rows)?)
}


/// Shortest round-trip float formatting (same as the JSON output), so
/// identical runs produce byte-identical files.
pub fn format_float(v: f64) -> String {
    let mut buffer = ryu_format(v);
    if buffer == "-0.0" {
        buffer = "0.0".to_string();
    }
    buffer
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; going through Value keeps the CSV
    // and JSON float grammar identical.
    serde_json::to_string(&v).unwrap_or_else(|_| format!("{v}"))
}

// ---------------------------------------------------------------------
// Certificates

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateDto {
    pub condition: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub lhs_value: ExtFloat,
    pub verdict: String,
    pub filter_lipschitz: Option<f64>,
    pub forgetting_sequence_scale: Option<f64>,
    pub notes: Vec<String>,
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Certified => "certified",
        Verdict::NotCertified => "not-certified",
        Verdict::Inconclusive => "inconclusive",
    }
}

impl CertificateDto {
    pub fn from_core(cert: &Certificate) -> Self {
        let (condition, p) = match cert.condition {
            ConditionKind::ContractionTimesLw => ("contraction-times-lw", None),
            ConditionKind::ContractionTimesLwp(p) => ("contraction-times-lwp", Some(p)),
            ConditionKind::LinearSeries => ("linear-series", None),
            ConditionKind::EsnProduct => ("esn-product", None),
            ConditionKind::SasProduct => ("sas-product", None),
            ConditionKind::LocalPersistence => ("local-persistence", None),
            ConditionKind::CompactTargetEsp => ("compact-target-esp", None),
        };
        CertificateDto {
            condition: condition.to_string(),
            p,
            lhs_value: ExtFloat(cert.lhs_value),
            verdict: verdict_name(cert.verdict).to_string(),
            filter_lipschitz: cert.implied.filter_lipschitz,
            forgetting_sequence_scale: cert.implied.forgetting_sequence_scale,
            notes: cert.notes.clone(),
        }
    }
}

// ---------------------------------------------------------------------
// Volterra kernel sets

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSetDto {
    #[serde(rename = "J")]
    pub order: usize,
    #[serde(rename = "M_mem")]
    pub memory: usize,
    /// Constant base-input value.
    pub base: f64,
    pub base_value: Vec<f64>,
    pub output_dim: usize,
    pub provenance: ProvenanceDto,
    /// Order-j array flattened row-major over lag tuples: tuple
    /// `(m_1, ..., m_j)` lives at index
    /// `sum_i (m_i + M_mem) * (M_mem + 1)^(j - 1 - i)`, entries grouped
    /// per output component.
    pub g: std::collections::BTreeMap<String, Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProvenanceDto {
    ExactNilpotent { index: usize },
    FiniteDifference { order: usize, step: f64 },
}

impl KernelSetDto {
    pub fn from_core(k: &VolterraKernelSet) -> Result<Self> {
        let mut g = std::collections::BTreeMap::new();
        for j in 1..=k.order() {
            let array = k.kernel_array(j)?;
            g.insert(
                j.to_string(),
                array.iter().map(|v| v.iter().copied().collect()).collect(),
            );
        }
        Ok(KernelSetDto {
            order: k.order(),
            memory: k.memory(),
            base: k.base_point().at(0)[0],
            base_value: k.base_value().iter().copied().collect(),
            output_dim: k.output_dim(),
            provenance: match k.provenance() {
                KernelProvenance::ExactNilpotent { index } => {
                    ProvenanceDto::ExactNilpotent { index }
                }
                KernelProvenance::FiniteDifference { order, step } => {
                    ProvenanceDto::FiniteDifference { order, step }
                }
            },
            g,
        })
    }

    pub fn to_core(&self) -> Result<VolterraKernelSet> {
        let mut kernels = Vec::with_capacity(self.order);
        for j in 1..=self.order {
            let array = self
                .g
                .get(&j.to_string())
                .ok_or_else(|| anyhow!("kernel set misses order {j}"))?;
            kernels.push(
                array.iter().map(|v| DVector::from_vec(v.clone())).collect::<Vec<_>>(),
            );
        }
        let base_point = Window::constant(
            &DVector::from_element(1, self.base),
            self.memory + 1,
        )?;
        Ok(VolterraKernelSet::from_parts(
            self.order,
            self.memory,
            base_point,
            DVector::from_vec(self.base_value.clone()),
            self.output_dim,
            kernels,
            match self.provenance {
                ProvenanceDto::ExactNilpotent { index } => {
                    KernelProvenance::ExactNilpotent { index }
                }
                ProvenanceDto::FiniteDifference { order, step } => {
                    KernelProvenance::FiniteDifference { order, step }
                }
            },
        )?)
    }
}

pub fn load_kernels(path: &str) -> Result<VolterraKernelSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading kernel file {path}"))?;
    let dto: KernelSetDto =
        serde_json::from_str(&text).with_context(|| format!("parsing kernel JSON {path}"))?;
    dto.to_core()
}

// ---------------------------------------------------------------------
// Run configuration

/// Defaults shared by the subcommands; any CLI flag overrides its field.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<String>,
    pub weighting: Option<String>,
    pub mode: Option<String>,
    pub tol: Option<f64>,
    #[serde(rename = "T")]
    pub depth: Option<usize>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

pub fn load_config(path: Option<&str>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading config file {p}"))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config JSON {p}"))
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
