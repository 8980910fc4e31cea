//! Experiment configuration: a single TOML file with a `[scenario]` table
//! and one optional table per command.
//!
//! Parsing keeps raw vectors so that validation can name the offending
//! field (`scenario.w[1]`, `scenario.modulus`, ...). Nothing is computed
//! before [`ExperimentConfig::validate`] succeeds.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::code::{m_from_rate, AffineEncoder, DecoderPolicy};
use crate::error::{Error, Result};
use crate::exponents::ExponentOptions;
use crate::field::{exhaust_affine, random_affine, stream_rng, EnumerationCap, FieldMatrix, FieldSpec, FieldVector};
use crate::prob::{Channel, Distribution, NORMALIZATION_TOL};
use crate::region::{RegionOptions, MEMBERSHIP_TOL};
use crate::system::{AdversaryEncoder, AdversaryStrategy};
use crate::verify::VerifyOptions;

/// Default enumeration cap, `2^24` states.
pub const DEFAULT_CAP: u64 = 1 << 24;

/// Where the affine encoder comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source", deny_unknown_fields)]
pub enum EncoderSource {
    /// A uniformly random `(A, b)`; the seed falls back to the top-level one.
    Random { seed: Option<u64> },
    /// `A` as `n` rows of `m` entries, and `b` of length `m`.
    Explicit { matrix: Vec<Vec<u32>>, offset: Vec<u32> },
    /// Every `(A, b)` of the ensemble.
    Exhaustive,
    /// `A = I_n`, `b = 0`.
    Identity,
    /// The all-ones column, `b = 0`.
    Parity,
}

impl Default for EncoderSource {
    fn default() -> Self {
        EncoderSource::Random { seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub modulus: u32,
    pub n: usize,
    /// Output length; alternatively give `rate` in nats per symbol.
    pub m: Option<usize>,
    pub rate: Option<f64>,
    pub p_x: Vec<f64>,
    /// Side channel `W(z|k)`, one row per key symbol.
    pub w: Vec<Vec<f64>>,
    /// Adversary rate `R_A` in nats, used by the exponent commands and as
    /// the default truncation length.
    pub r_a: Option<f64>,
    pub adversary: Option<AdversaryStrategy>,
    #[serde(default)]
    pub encoder: EncoderSource,
    #[serde(default)]
    pub policy: DecoderPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeakageConfig {
    pub etas: Vec<f64>,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        LeakageConfig {
            etas: vec![0.05, 0.1, 0.2, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentConfig {
    /// `R` values swept at the scenario's `R_A`.
    pub rates: Vec<f64>,
    /// Explicit `(R_A, R)` pairs, evaluated after the sweep.
    pub points: Vec<(f64, f64)>,
    /// Also evaluate `F̃`.
    pub tilde: bool,
    pub options: ExponentOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionConfig {
    pub tol: f64,
    /// Membership queries `(R_A, R)`.
    pub points: Vec<(f64, f64)>,
    /// Cells per axis of the inner-bound indicator (0 skips it).
    pub indicator_steps: usize,
    pub options: RegionOptions,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            tol: MEMBERSHIP_TOL,
            points: Vec::new(),
            indicator_steps: 0,
            options: RegionOptions::default(),
        }
    }
}

/// The whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Worker threads (all cores when absent). Results do not depend on it,
    /// so it is left out of the hash and the JSON sidecar.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub cap: Option<u64>,
    pub scenario: ScenarioConfig,
    pub verify: Option<VerifyOptions>,
    pub simulate: Option<SimulateConfig>,
    pub leakage: Option<LeakageConfig>,
    pub exponent: Option<ExponentConfig>,
    pub region: Option<RegionConfig>,
}

/// The validated scenario, ready for computation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: FieldSpec,
    pub n: usize,
    pub m: usize,
    pub p_x: Distribution,
    pub p_k: Distribution,
    pub w: Channel,
    pub r_a: Option<f64>,
    pub adversary: AdversaryEncoder,
    pub policy: DecoderPolicy,
    pub encoders: EncoderSet,
}

/// Encoders selected by the scenario.
#[derive(Debug, Clone)]
pub enum EncoderSet {
    Single(AffineEncoder),
    /// The whole ensemble for `(n, m)`, enumerated lazily.
    Exhaustive,
}

fn check_probs(path: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config(path, "empty probability vector"));
    }
    if let Some((i, p)) = v.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
        return Err(Error::config(format!("{path}[{i}]"), format!("{p} is not a probability")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::config(path, format!("entries sum to {s}, expected 1")));
    }
    Ok(())
}

fn check_positive(path: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite() || *x <= 0.0) {
        Some(i) => Err(Error::config(format!("{path}[{i}]"), format!("{} is not positive", v[i]))),
        None => Ok(()),
    }
}

fn check_rates(path: &str, v: &[(f64, f64)]) -> Result<()> {
    match v.iter().position(|(a, b)| !(a.is_finite() && b.is_finite() && *a >= 0.0 && *b >= 0.0)) {
        Some(i) => Err(Error::config(format!("{path}[{i}]"), "rates must be finite and nonnegative")),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(origin, e.message().to_string() + &span_note(text, &e)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn cap(&self) -> EnumerationCap {
        EnumerationCap(self.cap.unwrap_or(DEFAULT_CAP))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }

    /// Checks every field and builds the scenario. Command tables are
    /// checked too, whether or not the command runs.
    pub fn validate(&self) -> Result<Scenario> {
        if self.cap == Some(0) {
            return Err(Error::config("cap", "must be positive"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be positive"));
        }
        let s = &self.scenario;
        let spec = FieldSpec::new(s.modulus)
            .map_err(|_| Error::config("scenario.modulus", format!("{} is not a prime", s.modulus)))?;
        let q = spec.size();
        if s.n == 0 {
            return Err(Error::config("scenario.n", "must be at least 1"));
        }
        check_probs("scenario.p_x", &s.p_x)?;
        if s.p_x.len() != q {
            return Err(Error::config(
                "scenario.p_x",
                format!("has {} entries, GF({}) has {q} symbols", s.p_x.len(), s.modulus),
            ));
        }
        if s.w.len() != q {
            return Err(Error::config("scenario.w", format!("has {} rows, expected {q}", s.w.len())));
        }
        let zq = s.w[0].len();
        for (i, row) in s.w.iter().enumerate() {
            let path = format!("scenario.w[{i}]");
            if row.len() != zq {
                return Err(Error::config(path, format!("has {} entries, row 0 has {zq}", row.len())));
            }
            check_probs(&path, row)?;
        }
        if let Some(ra) = s.r_a {
            if !ra.is_finite() || ra < 0.0 {
                return Err(Error::config("scenario.r_a", "must be finite and nonnegative"));
            }
        }

        let m = match (&s.encoder, s.m, s.rate) {
            (EncoderSource::Explicit { matrix, .. }, _, _) => matrix.first().map_or(0, Vec::len),
            (EncoderSource::Identity, _, _) => s.n,
            (EncoderSource::Parity, _, _) => 1,
            (_, Some(_), Some(_)) => return Err(Error::config("scenario.rate", "give either m or rate, not both")),
            (_, Some(m), None) => m,
            (_, None, Some(r)) => {
                m_from_rate(s.n, r, spec).map_err(|e| Error::config("scenario.rate", e.to_string()))?
            }
            (_, None, None) => return Err(Error::config("scenario.m", "missing; give m or rate")),
        };
        if m == 0 || m > s.n {
            return Err(Error::config("scenario.m", format!("{m} is outside 1..={}", s.n)));
        }
        if let (Some(declared), EncoderSource::Explicit { .. } | EncoderSource::Identity | EncoderSource::Parity) =
            (s.m, &s.encoder)
        {
            if declared != m {
                return Err(Error::config("scenario.m", format!("{declared} disagrees with the encoder's m = {m}")));
            }
        }

        let encoders = match &s.encoder {
            EncoderSource::Random { seed } => {
                let seed = seed.or(self.seed).ok_or_else(|| {
                    Error::config("scenario.encoder.seed", "a random encoder needs a seed (here or at top level)")
                })?;
                let (a, b) = random_affine(s.n, m, spec, &mut stream_rng(seed, 0))?;
                EncoderSet::Single(AffineEncoder::new(a, b)?)
            }
            EncoderSource::Explicit { matrix, offset } => {
                if matrix.len() != s.n {
                    return Err(Error::config(
                        "scenario.encoder.matrix",
                        format!("has {} rows, expected n = {}", matrix.len(), s.n),
                    ));
                }
                if let Some(i) = matrix.iter().position(|r| r.len() != m) {
                    return Err(Error::config(
                        format!("scenario.encoder.matrix[{i}]"),
                        format!("has {} entries, row 0 has {m}", matrix[i].len()),
                    ));
                }
                let a = FieldMatrix::from_rows(spec, matrix)
                    .map_err(|e| Error::config("scenario.encoder.matrix", e.to_string()))?;
                if offset.len() != m {
                    return Err(Error::config(
                        "scenario.encoder.offset",
                        format!("has {} entries, expected m = {m}", offset.len()),
                    ));
                }
                let b = FieldVector::new(spec, offset.clone())
                    .map_err(|e| Error::config("scenario.encoder.offset", e.to_string()))?;
                EncoderSet::Single(AffineEncoder::new(a, b)?)
            }
            EncoderSource::Exhaustive => {
                exhaust_affine(s.n, m, spec, self.cap()).map_err(|e| match e {
                    Error::CapExceeded { .. } => e,
                    other => Error::config("scenario.encoder", other.to_string()),
                })?;
                EncoderSet::Exhaustive
            }
            EncoderSource::Identity => EncoderSet::Single(AffineEncoder::identity(spec, s.n)?),
            EncoderSource::Parity => EncoderSet::Single(AffineEncoder::parity(spec, s.n)?),
        };

        let strategy = s.adversary.clone().unwrap_or(AdversaryStrategy::Identity);
        let adversary = match (&s.adversary, s.r_a) {
            (None, Some(ra)) => AdversaryEncoder::truncation_for_rate(s.n, zq, ra),
            _ => AdversaryEncoder::new(s.n, zq, strategy),
        }
        .map_err(|e| match e {
            Error::CapExceeded { .. } => e,
            other => Error::config("scenario.adversary", other.to_string()),
        })?;

        if let Some(v) = &self.verify {
            check_positive("verify.etas", &v.etas)?;
            if v.max_n == 0 {
                return Err(Error::config("verify.max_n", "must be at least 1"));
            }
        }
        if let Some(sim) = &self.simulate {
            if sim.trials == 0 {
                return Err(Error::config("simulate.trials", "must be at least 1"));
            }
        }
        if let Some(l) = &self.leakage {
            check_positive("leakage.etas", &l.etas)?;
        }
        if let Some(e) = &self.exponent {
            if let Some(i) = e.rates.iter().position(|r| !r.is_finite() || *r < 0.0) {
                return Err(Error::config(format!("exponent.rates[{i}]"), "must be finite and nonnegative"));
            }
            check_rates("exponent.points", &e.points)?;
            if !e.rates.is_empty() && s.r_a.is_none() {
                return Err(Error::config("scenario.r_a", "a rate sweep needs the adversary rate"));
            }
            if e.options.grid < 2 {
                return Err(Error::config("exponent.options.grid", "needs at least 2 points"));
            }
        }
        if let Some(r) = &self.region {
            check_rates("region.points", &r.points)?;
            if !(r.tol.is_finite() && r.tol >= 0.0) {
                return Err(Error::config("region.tol", "must be finite and nonnegative"));
            }
            if r.options.grid < 2 {
                return Err(Error::config("region.options.grid", "needs at least 2 levels"));
            }
        }

        Ok(Scenario {
            spec,
            n: s.n,
            m,
            p_x: Distribution::new(s.p_x.clone())?,
            p_k: Distribution::uniform(q),
            w: Channel::new(s.w.clone())?,
            r_a: s.r_a,
            adversary,
            policy: s.policy,
            encoders,
        })
    }

    /// Seed for stochastic commands; its absence is a config error.
    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config("seed", format!("`{command}` is stochastic and needs a seed")))
    }
}

fn span_note(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
