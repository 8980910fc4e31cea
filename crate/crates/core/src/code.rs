//! Affine encoders over GF(p), the minimum-entropy decoder and the
//! type-indexed error functionals of the random affine code ensemble.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    digits_to_index, exhaust_affine, index_to_digits, random_affine, stream_rng, EnumerationCap,
    FieldMatrix, FieldSpec, FieldVector,
};
use crate::prob::{divergence, enumerate_types, type_class_size, big_to_f64, Distribution, TypeClass};

/// Slack used when turning a rate into an integer dimension, so that
/// `R = (m/n) ln p` evaluated in floating point still yields `m`.
const RATE_SLACK: f64 = 1e-12;

/// The pair `(A, b)` defining `k ↦ kA ⊕ b`; the linear part alone is `x ↦ xA`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AffineEncoder {
    a: FieldMatrix,
    b: FieldVector,
}

impl AffineEncoder {
    pub fn new(a: FieldMatrix, b: FieldVector) -> Result<Self> {
        if a.spec() != b.spec() {
            return Err(Error::usage("matrix and offset live in different fields"));
        }
        if b.len() != a.cols() {
            return Err(Error::usage(format!(
                "offset has length {} but the matrix has {} columns",
                b.len(),
                a.cols()
            )));
        }
        if a.cols() > a.rows() {
            return Err(Error::usage(format!(
                "encoder must compress: m = {} exceeds n = {}",
                a.cols(),
                a.rows()
            )));
        }
        Ok(AffineEncoder { a, b })
    }

    /// Encoder with zero offset.
    pub fn linear(a: FieldMatrix) -> Result<Self> {
        let b = FieldVector::zeros(a.spec(), a.cols());
        AffineEncoder::new(a, b)
    }

    /// The `n × n` identity encoder with zero offset.
    pub fn identity(spec: FieldSpec, n: usize) -> Result<Self> {
        AffineEncoder::linear(FieldMatrix::identity(spec, n)?)
    }

    /// The single-column all-ones encoder (parity of the block).
    pub fn parity(spec: FieldSpec, n: usize) -> Result<Self> {
        AffineEncoder::linear(FieldMatrix::ones(spec, n, 1)?)
    }

    pub fn spec(&self) -> FieldSpec {
        self.a.spec()
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.a.cols()
    }

    pub fn matrix(&self) -> &FieldMatrix {
        &self.a
    }

    pub fn offset(&self) -> &FieldVector {
        &self.b
    }

    /// `(m/n) ln p`, the rate actually realised by this encoder.
    pub fn rate(&self) -> f64 {
        self.m() as f64 / self.n() as f64 * self.spec().ln_size()
    }

    fn check_input(&self, x: &FieldVector) -> Result<()> {
        if x.spec() != self.spec() || x.len() != self.n() {
            return Err(Error::usage(format!(
                "encoder expects a length-{} vector over GF({}), got length {} over GF({})",
                self.n(),
                self.spec().modulus(),
                x.len(),
                x.spec().modulus()
            )));
        }
        Ok(())
    }

    /// `x A`.
    pub fn encode_linear(&self, x: &FieldVector) -> Result<FieldVector> {
        self.check_input(x)?;
        let mut out = vec![0u32; self.m()];
        self.a.apply_raw(x.entries(), &mut out);
        FieldVector::new(self.spec(), out)
    }

    /// `k A ⊕ b`.
    pub fn encode_affine(&self, k: &FieldVector) -> Result<FieldVector> {
        self.encode_linear(k)?.add(&self.b)
    }

    /// `x A` as a codomain index, on an input given by its index.
    pub(crate) fn linear_index(&self, x: u64, digits: &mut [u32], out: &mut [u32]) -> u64 {
        index_to_digits(self.spec(), x, digits);
        self.a.apply_raw(digits, out);
        digits_to_index(self.spec(), out)
    }

    /// `k A ⊕ b` as a codomain index.
    pub(crate) fn affine_index(&self, k: u64, digits: &mut [u32], out: &mut [u32]) -> u64 {
        let spec = self.spec();
        index_to_digits(spec, k, digits);
        self.a.apply_raw(digits, out);
        for (o, &b) in out.iter_mut().zip(self.b.entries()) {
            *o = spec.add(*o, b);
        }
        digits_to_index(spec, out)
    }

    /// Space-separated text form: `modulus n m`, then `A` row-major, then `b`.
    pub fn to_text(&self) -> String {
        let mut parts = vec![
            self.spec().modulus().to_string(),
            self.n().to_string(),
            self.m().to_string(),
        ];
        parts.extend(self.a.entries().iter().map(|e| e.to_string()));
        parts.extend(self.b.entries().iter().map(|e| e.to_string()));
        parts.join(" ")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let nums: Vec<u64> = text
            .split_whitespace()
            .map(|t| {
                t.parse::<u64>()
                    .map_err(|_| Error::usage(format!("encoder text: `{t}` is not an integer")))
            })
            .collect::<Result<_>>()?;
        if nums.len() < 3 {
            return Err(Error::usage("encoder text needs `modulus n m` header"));
        }
        let spec = FieldSpec::new(
            u32::try_from(nums[0]).map_err(|_| Error::usage("encoder text: modulus too large"))?,
        )?;
        let (n, m) = (nums[1] as usize, nums[2] as usize);
        let body = &nums[3..];
        if body.len() != n * m + m {
            return Err(Error::usage(format!(
                "encoder text: expected {} entries after the header, found {}",
                n * m + m,
                body.len()
            )));
        }
        let to_u32 = |v: &u64| u32::try_from(*v).map_err(|_| Error::usage("encoder entry too large"));
        let a: Vec<u32> = body[..n * m].iter().map(to_u32).collect::<Result<_>>()?;
        let b: Vec<u32> = body[n * m..].iter().map(to_u32).collect::<Result<_>>()?;
        AffineEncoder::new(FieldMatrix::new(spec, n, m, a)?, FieldVector::new(spec, b)?)
    }
}

impl fmt::Display for AffineEncoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// What the decoder outputs when no coset member has strictly minimal
/// empirical entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderPolicy {
    /// Output nothing; the block counts as a decoding failure.
    #[default]
    DeclareError,
    /// Output the lexicographically smallest minimiser.
    Lexicographic,
}

/// `m = ⌊nR / ln p⌋`, rejecting `m = 0` and `m > n`.
pub fn m_from_rate(n: usize, rate: f64, spec: FieldSpec) -> Result<usize> {
    if n == 0 || !rate.is_finite() || rate < 0.0 {
        return Err(Error::usage(format!("invalid block length {n} or rate {rate}")));
    }
    let m = (n as f64 * rate / spec.ln_size() + RATE_SLACK).floor() as usize;
    if m == 0 {
        return Err(Error::usage(format!(
            "rate {rate} gives m = 0 at n = {n}: degenerate encoder"
        )));
    }
    if m > n {
        return Err(Error::usage(format!(
            "rate {rate} exceeds ln {} and would need m = {m} > n = {n}",
            spec.modulus()
        )));
    }
    Ok(m)
}

/// Every length-`n` sequence over GF(p) with its type and the rank of that
/// type's entropy (rank 0 = smallest entropy, equal entropies share a rank).
#[derive(Debug, Clone)]
pub struct SourceSpace {
    spec: FieldSpec,
    n: usize,
    types: Vec<TypeClass>,
    type_rank: Vec<u32>,
    type_of: Vec<u32>,
}

impl SourceSpace {
    pub fn new(spec: FieldSpec, n: usize, cap: EnumerationCap) -> Result<Self> {
        let total = cap.check_power("source block space", spec.modulus() as u64, n as u64)?;
        let q = spec.size();
        let types = enumerate_types(n, q, cap)?;
        let lookup: HashMap<Vec<usize>, u32> = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.counts().to_vec(), i as u32))
            .collect();

        // Larger ∏ c^c means smaller entropy; the comparison is exact.
        let keys: Vec<_> = types.iter().map(|t| t.entropy_order_key()).collect();
        let mut order: Vec<usize> = (0..types.len()).collect();
        order.sort_by(|&i, &j| keys[j].cmp(&keys[i]));
        let mut type_rank = vec![0u32; types.len()];
        let mut rank = 0u32;
        for w in 0..order.len() {
            if w > 0 && keys[order[w]] != keys[order[w - 1]] {
                rank += 1;
            }
            type_rank[order[w]] = rank;
        }

        let mut digits = vec![0u32; n];
        let mut counts = vec![0usize; q];
        let type_of = (0..total)
            .map(|x| {
                index_to_digits(spec, x, &mut digits);
                counts.iter_mut().for_each(|c| *c = 0);
                for &d in &digits {
                    counts[d as usize] += 1;
                }
                lookup[&counts]
            })
            .collect();
        Ok(SourceSpace {
            spec,
            n,
            types,
            type_rank,
            type_of,
        })
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.type_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.type_of.is_empty()
    }

    pub fn types(&self) -> &[TypeClass] {
        &self.types
    }

    /// Index into [`SourceSpace::types`] of the type of sequence `x`.
    pub fn type_index(&self, x: u64) -> usize {
        self.type_of[x as usize] as usize
    }

    pub fn entropy_rank(&self, x: u64) -> u32 {
        self.type_rank[self.type_of[x as usize] as usize]
    }

    pub fn type_position(&self, t: &TypeClass) -> Option<usize> {
        self.types.iter().position(|u| u == t)
    }

    /// `p_X^n(x)` for every sequence, in index order.
    pub fn sequence_probs(&self, p: &Distribution) -> Result<Vec<f64>> {
        if p.len() != self.spec.size() {
            return Err(Error::usage(format!(
                "source distribution has {} symbols, field has {}",
                p.len(),
                self.spec.size()
            )));
        }
        let per_type: Vec<f64> = self
            .types
            .iter()
            .map(|t| {
                t.counts()
                    .iter()
                    .zip(p.probs())
                    .map(|(&c, &px)| if c == 0 { 1.0 } else { px.powi(c as i32) })
                    .product()
            })
            .collect();
        Ok(self.type_of.iter().map(|&t| per_type[t as usize]).collect())
    }
}

/// The minimum-entropy decoder for one encoder, tabulated over every
/// syndrome `xA`.
#[derive(Debug, Clone)]
pub struct MinEntropyDecoder {
    encoder: AffineEncoder,
    policy: DecoderPolicy,
    table: Vec<Option<u64>>,
}

impl MinEntropyDecoder {
    pub fn build(encoder: &AffineEncoder, policy: DecoderPolicy, cap: EnumerationCap) -> Result<Self> {
        let space = SourceSpace::new(encoder.spec(), encoder.n(), cap)?;
        Self::with_space(encoder, policy, &space)
    }

    /// Builds the table reusing a precomputed [`SourceSpace`].
    pub fn with_space(encoder: &AffineEncoder, policy: DecoderPolicy, space: &SourceSpace) -> Result<Self> {
        if space.spec() != encoder.spec() || space.n() != encoder.n() {
            return Err(Error::usage("source space does not match the encoder"));
        }
        let spec = encoder.spec();
        let codomain = spec
            .count(encoder.m())
            .ok_or_else(|| Error::usage("codomain too large"))? as usize;
        // (rank, first index, tied)
        let mut best: Vec<(u32, u64, bool)> = vec![(u32::MAX, 0, false); codomain];
        let mut digits = vec![0u32; encoder.n()];
        let mut out = vec![0u32; encoder.m()];
        for x in 0..space.len() as u64 {
            let s = encoder.linear_index(x, &mut digits, &mut out) as usize;
            let r = space.entropy_rank(x);
            let slot = &mut best[s];
            if r < slot.0 {
                *slot = (r, x, false);
            } else if r == slot.0 {
                slot.2 = true;
            }
        }
        let table = best
            .into_iter()
            .map(|(r, x, tied)| {
                if r == u32::MAX || (tied && policy == DecoderPolicy::DeclareError) {
                    None
                } else {
                    Some(x)
                }
            })
            .collect();
        Ok(MinEntropyDecoder {
            encoder: encoder.clone(),
            policy,
            table,
        })
    }

    pub fn encoder(&self) -> &AffineEncoder {
        &self.encoder
    }

    pub fn policy(&self) -> DecoderPolicy {
        self.policy
    }

    /// Decoded sequence index for a syndrome index.
    pub fn decode_index(&self, syndrome: u64) -> Option<u64> {
        self.table.get(syndrome as usize).copied().flatten()
    }

    pub fn decode(&self, syndrome: &FieldVector) -> Result<Option<FieldVector>> {
        if syndrome.spec() != self.encoder.spec() || syndrome.len() != self.encoder.m() {
            return Err(Error::usage("syndrome does not match the encoder codomain"));
        }
        Ok(self
            .decode_index(syndrome.index())
            .map(|x| FieldVector::from_index(self.encoder.spec(), self.encoder.n(), x)))
    }

    /// `Ξ_x`: 1 when `x` is not recovered from `xA`.
    pub fn error_indicator(&self, x: &FieldVector) -> Result<u8> {
        let s = self.encoder.encode_linear(x)?;
        Ok(u8::from(self.decode_index(s.index()) != Some(x.index())))
    }

    fn error_indicator_index(&self, x: u64, digits: &mut [u32], out: &mut [u32]) -> bool {
        let s = self.encoder.linear_index(x, digits, out);
        self.decode_index(s) != Some(x)
    }

    /// Number of decoding failures in each type class, aligned with
    /// `space.types()`.
    pub fn errors_by_type(&self, space: &SourceSpace) -> Vec<u64> {
        let mut errs = vec![0u64; space.types().len()];
        let mut digits = vec![0u32; self.encoder.n()];
        let mut out = vec![0u32; self.encoder.m()];
        for x in 0..space.len() as u64 {
            if self.error_indicator_index(x, &mut digits, &mut out) {
                errs[space.type_index(x)] += 1;
            }
        }
        errs
    }
}

/// Decodes one syndrome by enumerating its coset directly and comparing
/// empirical entropies exactly. Independent of the tabulated decoder.
pub fn decode_min_entropy(
    encoder: &AffineEncoder,
    syndrome: &FieldVector,
    policy: DecoderPolicy,
    cap: EnumerationCap,
) -> Result<Option<FieldVector>> {
    let coset = crate::field::coset_preimages(encoder.matrix(), syndrome, cap)?;
    let q = encoder.spec().size();
    let mut best: Option<(num_bigint::BigUint, usize, bool)> = None;
    for (i, x) in coset.iter().enumerate() {
        let key = TypeClass::of_sequence(x.entries(), q).entropy_order_key();
        match &mut best {
            None => best = Some((key, i, false)),
            Some((bk, bi, tied)) => {
                if key > *bk {
                    *bk = key;
                    *bi = i;
                    *tied = false;
                } else if key == *bk {
                    *tied = true;
                }
            }
        }
    }
    Ok(match best {
        None => None,
        Some((_, _, true)) if policy == DecoderPolicy::DeclareError => None,
        Some((_, i, _)) => Some(coset[i].clone()),
    })
}

/// `Ξ_t`: the fraction of sequences of type `t` that are decoded wrongly.
pub fn xi_type(decoder: &MinEntropyDecoder, t: &TypeClass, space: &SourceSpace) -> Result<f64> {
    let pos = space
        .type_position(t)
        .ok_or_else(|| Error::usage("type does not belong to this block length and alphabet"))?;
    let errs = decoder.errors_by_type(space)[pos];
    Ok(errs as f64 / big_to_f64(&type_class_size(t)))
}

/// Exact `p_e = Σ_x p_X^n(x) Ξ_x`.
pub fn error_prob_exact(decoder: &MinEntropyDecoder, p_x: &Distribution, space: &SourceSpace) -> Result<f64> {
    let probs = space.sequence_probs(p_x)?;
    let enc = decoder.encoder();
    let mut digits = vec![0u32; enc.n()];
    let mut out = vec![0u32; enc.m()];
    Ok((0..space.len() as u64)
        .filter(|&x| decoder.error_indicator_index(x, &mut digits, &mut out))
        .map(|x| probs[x as usize])
        .sum())
}

/// Exact error probability next to its type-class upper bound
/// `Σ_t Ξ_t e^{-n D(t || p_X)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBound {
    pub exact: f64,
    pub bound: f64,
}

impl ErrorBound {
    pub fn holds(&self, tol: f64) -> bool {
        self.exact <= self.bound + tol
    }
}

pub fn error_prob_type_bound(
    decoder: &MinEntropyDecoder,
    p_x: &Distribution,
    space: &SourceSpace,
) -> Result<ErrorBound> {
    let errs = decoder.errors_by_type(space);
    let n = space.n() as f64;
    let mut bound = 0.0;
    for (t, &e) in space.types().iter().zip(&errs) {
        if e == 0 {
            continue;
        }
        let d = divergence(&t.distribution(), p_x)?;
        let xi = e as f64 / big_to_f64(&type_class_size(t));
        bound += xi * (-n * d).exp();
    }
    let exact = error_prob_exact(decoder, p_x, space)?;
    Ok(ErrorBound { exact, bound })
}

/// How the ensemble average over random affine encoders is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum EnsembleMode {
    /// Every `(A, b)` in the ensemble.
    Exhaustive,
    /// `samples` encoders drawn from stream `k` of `seed` in chunks.
    MonteCarlo { samples: u64, seed: u64 },
}

/// Per-type ensemble average of `Ξ_t` against `e (n+1)^{|X|} e^{-n[R - H(t)]^+}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleTypeBound {
    pub counts: Vec<usize>,
    pub mean: f64,
    /// Half-width of the confidence interval (0 in exhaustive mode).
    pub half_width: f64,
    pub bound: f64,
}

impl EnsembleTypeBound {
    /// True unless the interval lies entirely above the bound.
    pub fn holds(&self) -> bool {
        self.mean - self.half_width <= self.bound
    }
}

/// `e (n+1)^{|X|} e^{-n[R - H(t)]^+}`.
pub fn ensemble_type_bound(t: &TypeClass, rate: f64) -> f64 {
    let n = t.n() as f64;
    let q = t.alphabet_size() as f64;
    let gap = (rate - t.entropy()).max(0.0);
    std::f64::consts::E * (n + 1.0).powf(q) * (-n * gap).exp()
}

/// Number of standard errors in Monte Carlo confidence intervals.
pub const CI_Z: f64 = 3.29;

const MC_CHUNK: u64 = 256;

/// Ensemble average of `Ξ_t` for every type, at rate `rate`, which must
/// satisfy `p^m ≥ e^{nR - 1}`.
pub fn ensemble_error_bound(
    spec: FieldSpec,
    n: usize,
    m: usize,
    rate: f64,
    mode: EnsembleMode,
    policy: DecoderPolicy,
    cap: EnumerationCap,
) -> Result<Vec<EnsembleTypeBound>> {
    if m == 0 || m > n {
        return Err(Error::usage(format!("need 1 <= m <= n, got n = {n}, m = {m}")));
    }
    if (m as f64) * spec.ln_size() < n as f64 * rate - 1.0 - 1e-12 {
        return Err(Error::usage(format!(
            "rate {rate} too large for m = {m}: needs p^m >= e^(nR - 1)"
        )));
    }
    let space = SourceSpace::new(spec, n, cap)?;
    let sizes: Vec<f64> = space.types().iter().map(|t| big_to_f64(&type_class_size(t))).collect();
    let ntypes = sizes.len();

    let per_encoder = |enc: &AffineEncoder| -> Result<Vec<f64>> {
        let dec = MinEntropyDecoder::with_space(enc, policy, &space)?;
        Ok(dec
            .errors_by_type(&space)
            .iter()
            .zip(&sizes)
            .map(|(&e, &s)| e as f64 / s)
            .collect())
    };
    let merge = |mut a: (Vec<f64>, Vec<f64>), b: (Vec<f64>, Vec<f64>)| {
        for i in 0..a.0.len() {
            a.0[i] += b.0[i];
            a.1[i] += b.1[i];
        }
        a
    };
    let zero = || (vec![0.0; ntypes], vec![0.0; ntypes]);

    let (sum, sumsq, count) = match mode {
        EnsembleMode::Exhaustive => {
            let ens = exhaust_affine(n, m, spec, cap)?;
            let (s, q) = (0..ens.len())
                .into_par_iter()
                .map(|i| {
                    let (a, b) = ens.get(i);
                    let xi = per_encoder(&AffineEncoder::new(a, b)?)?;
                    let sq = xi.iter().map(|v| v * v).collect();
                    Ok((xi, sq))
                })
                .try_reduce(zero, |a, b| Ok(merge(a, b)))?;
            (s, q, ens.len())
        }
        EnsembleMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::usage("Monte Carlo mode needs at least one sample"));
            }
            let chunks = samples.div_ceil(MC_CHUNK);
            let (s, q) = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = stream_rng(seed, c);
                    let batch = MC_CHUNK.min(samples - c * MC_CHUNK);
                    let mut acc = zero();
                    for _ in 0..batch {
                        let (a, b) = random_affine(n, m, spec, &mut rng)?;
                        let xi = per_encoder(&AffineEncoder::new(a, b)?)?;
                        for i in 0..ntypes {
                            acc.0[i] += xi[i];
                            acc.1[i] += xi[i] * xi[i];
                        }
                    }
                    Ok(acc)
                })
                .try_reduce(zero, |a, b| Ok(merge(a, b)))?;
            (s, q, samples)
        }
    };

    let nf = count as f64;
    Ok(space
        .types()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mean = sum[i] / nf;
            let half_width = match mode {
                EnsembleMode::Exhaustive => 0.0,
                EnsembleMode::MonteCarlo { .. } => {
                    let var = if count > 1 {
                        ((sumsq[i] - nf * mean * mean) / (nf - 1.0)).max(0.0)
                    } else {
                        0.25
                    };
                    CI_Z * (var / nf).sqrt()
                }
            };
            EnsembleTypeBound {
                counts: t.counts().to_vec(),
                mean,
                half_width,
                bound: ensemble_type_bound(t, rate),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::TypeClass;

    fn gf2() -> FieldSpec {
        FieldSpec::binary()
    }

    fn v(entries: &[u32]) -> FieldVector {
        FieldVector::new(gf2(), entries.to_vec()).unwrap()
    }

    fn cap() -> EnumerationCap {
        EnumerationCap::default()
    }

    fn parity3() -> AffineEncoder {
        AffineEncoder::parity(gf2(), 3).unwrap()
    }

    #[test]
    fn encode_examples() {
        let enc = AffineEncoder::new(FieldMatrix::ones(gf2(), 3, 1).unwrap(), v(&[1])).unwrap();
        assert_eq!(enc.encode_affine(&v(&[1, 0, 0])).unwrap(), v(&[0]));
        assert!(enc.encode_linear(&v(&[0, 0, 0])).unwrap().is_zero());
        assert!(enc.encode_linear(&v(&[0, 0])).is_err());
    }

    #[test]
    fn affine_identity_holds_on_all_pairs() {
        let enc = AffineEncoder::new(FieldMatrix::ones(gf2(), 3, 1).unwrap(), v(&[1])).unwrap();
        for xi in 0..8 {
            for ki in 0..8 {
                let x = FieldVector::from_index(gf2(), 3, xi);
                let k = FieldVector::from_index(gf2(), 3, ki);
                let lhs = enc.encode_affine(&x.add(&k).unwrap()).unwrap();
                let rhs = enc.encode_linear(&x).unwrap().add(&enc.encode_affine(&k).unwrap()).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn rejects_expanding_encoder() {
        let a = FieldMatrix::ones(gf2(), 2, 3).unwrap();
        assert!(AffineEncoder::linear(a).is_err());
    }

    #[test]
    fn text_round_trip() {
        let gf3 = FieldSpec::new(3).unwrap();
        let a = FieldMatrix::new(gf3, 3, 2, vec![0, 1, 2, 2, 1, 0]).unwrap();
        let enc = AffineEncoder::new(a, FieldVector::new(gf3, vec![2, 1]).unwrap()).unwrap();
        assert_eq!(enc.to_text(), "3 3 2 0 1 2 2 1 0 2 1");
        assert_eq!(AffineEncoder::from_text(&enc.to_text()).unwrap(), enc);
        assert!(AffineEncoder::from_text("4 1 1 0 0").is_err());
        assert!(AffineEncoder::from_text("2 2 1 1").is_err());
    }

    #[test]
    fn decoder_examples() {
        let enc = parity3();
        let dec = MinEntropyDecoder::build(&enc, DecoderPolicy::DeclareError, cap()).unwrap();
        assert_eq!(dec.decode(&v(&[0])).unwrap(), Some(v(&[0, 0, 0])));
        assert_eq!(
            decode_min_entropy(&enc, &v(&[0]), DecoderPolicy::DeclareError, cap()).unwrap(),
            Some(v(&[0, 0, 0]))
        );
        // Odd coset {001, 010, 100, 111}: 111 has entropy 0.
        assert_eq!(dec.decode(&v(&[1])).unwrap(), Some(v(&[1, 1, 1])));

        let pair = AffineEncoder::parity(gf2(), 2).unwrap();
        let strict = MinEntropyDecoder::build(&pair, DecoderPolicy::DeclareError, cap()).unwrap();
        assert_eq!(strict.decode(&v(&[1])).unwrap(), None);
        assert_eq!(
            decode_min_entropy(&pair, &v(&[1]), DecoderPolicy::DeclareError, cap()).unwrap(),
            None
        );
        let lex = MinEntropyDecoder::build(&pair, DecoderPolicy::Lexicographic, cap()).unwrap();
        assert_eq!(lex.decode(&v(&[1])).unwrap(), Some(v(&[0, 1])));
    }

    #[test]
    fn identity_decoder_inverts() {
        let gf3 = FieldSpec::new(3).unwrap();
        let enc = AffineEncoder::identity(gf3, 3).unwrap();
        let dec = MinEntropyDecoder::build(&enc, DecoderPolicy::DeclareError, cap()).unwrap();
        for x in 0..27 {
            let xv = FieldVector::from_index(gf3, 3, x);
            assert_eq!(dec.decode(&xv).unwrap(), Some(xv.clone()));
            assert_eq!(dec.error_indicator(&xv).unwrap(), 0);
        }
    }

    #[test]
    fn tabulated_decoder_matches_coset_decoder() {
        let gf3 = FieldSpec::new(3).unwrap();
        let mut rng = stream_rng(11, 0);
        for policy in [DecoderPolicy::DeclareError, DecoderPolicy::Lexicographic] {
            for _ in 0..20 {
                let (a, b) = random_affine(4, 2, gf3, &mut rng).unwrap();
                let enc = AffineEncoder::new(a, b).unwrap();
                let dec = MinEntropyDecoder::build(&enc, policy, cap()).unwrap();
                for s in 0..9 {
                    let sv = FieldVector::from_index(gf3, 2, s);
                    assert_eq!(
                        dec.decode(&sv).unwrap(),
                        decode_min_entropy(&enc, &sv, policy, cap()).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn strict_minimiser_is_recovered() {
        let mut rng = stream_rng(5, 1);
        for _ in 0..30 {
            let (a, b) = random_affine(5, 2, gf2(), &mut rng).unwrap();
            let enc = AffineEncoder::new(a, b).unwrap();
            let dec = MinEntropyDecoder::build(&enc, DecoderPolicy::DeclareError, cap()).unwrap();
            for x in 0..32 {
                let xv = FieldVector::from_index(gf2(), 5, x);
                let s = enc.encode_linear(&xv).unwrap();
                let coset = crate::field::coset_preimages(enc.matrix(), &s, cap()).unwrap();
                let hx = TypeClass::of_sequence(xv.entries(), 2).entropy();
                let strict = coset
                    .iter()
                    .filter(|y| **y != xv)
                    .all(|y| TypeClass::of_sequence(y.entries(), 2).entropy() > hx + 1e-9);
                if strict {
                    assert_eq!(dec.decode(&s).unwrap(), Some(xv));
                }
            }
        }
    }

    #[test]
    fn error_indicator_examples() {
        let enc = parity3();
        let space = SourceSpace::new(gf2(), 3, cap()).unwrap();
        let dec = MinEntropyDecoder::build(&enc, DecoderPolicy::DeclareError, cap()).unwrap();
        assert_eq!(dec.error_indicator(&v(&[0, 1, 1])).unwrap(), 1);
        let all_zero = TypeClass::new(vec![3, 0]).unwrap();
        assert_eq!(xi_type(&dec, &all_zero, &space).unwrap(), 0.0);

        let id = MinEntropyDecoder::build(&AffineEncoder::identity(gf2(), 3).unwrap(), DecoderPolicy::DeclareError, cap()).unwrap();
        for t in space.types() {
            assert_eq!(xi_type(&id, t, &space).unwrap(), 0.0);
        }
    }

    #[test]
    fn parity_error_probabilities() {
        let space = SourceSpace::new(gf2(), 3, cap()).unwrap();
        let dec = MinEntropyDecoder::build(&parity3(), DecoderPolicy::DeclareError, cap()).unwrap();
        // Only 000 and 111 are recovered.
        let uniform = Distribution::uniform(2);
        assert!((error_prob_exact(&dec, &uniform, &space).unwrap() - 0.75).abs() < 1e-15);
        let skew = Distribution::new(vec![0.9, 0.1]).unwrap();
        let expected = 1.0 - 0.9f64.powi(3) - 0.1f64.powi(3);
        assert!((error_prob_exact(&dec, &skew, &space).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.270).abs() < 1e-12);

        let id = MinEntropyDecoder::build(&AffineEncoder::identity(gf2(), 3).unwrap(), DecoderPolicy::DeclareError, cap()).unwrap();
        assert_eq!(error_prob_exact(&id, &skew, &space).unwrap(), 0.0);
    }

    #[test]
    fn type_bound_examples() {
        let space = SourceSpace::new(gf2(), 3, cap()).unwrap();
        let dec = MinEntropyDecoder::build(&parity3(), DecoderPolicy::DeclareError, cap()).unwrap();
        let uniform = Distribution::uniform(2);
        let r = error_prob_type_bound(&dec, &uniform, &space).unwrap();
        // Types (2,1) and (1,2) fail entirely; D(t||uniform) = ln 2 - h(1/3).
        let h = -(1.0f64 / 3.0) * (1.0f64 / 3.0).ln() - (2.0f64 / 3.0) * (2.0f64 / 3.0).ln();
        let expected = 2.0 * (-3.0 * (2f64.ln() - h)).exp();
        assert!((r.bound - expected).abs() < 1e-12);
        assert!(r.holds(0.0));

        let id = MinEntropyDecoder::build(&AffineEncoder::identity(gf2(), 3).unwrap(), DecoderPolicy::DeclareError, cap()).unwrap();
        assert_eq!(error_prob_type_bound(&id, &uniform, &space).unwrap().bound, 0.0);
    }

    #[test]
    fn type_bound_dominates_exact_on_random_encoders() {
        let mut rng = stream_rng(99, 0);
        let p = Distribution::new(vec![0.8, 0.2]).unwrap();
        for i in 0..50 {
            let n = 2 + i % 5;
            let m = 1 + i % n;
            let space = SourceSpace::new(gf2(), n, cap()).unwrap();
            let (a, b) = random_affine(n, m, gf2(), &mut rng).unwrap();
            let dec = MinEntropyDecoder::build(&AffineEncoder::new(a, b).unwrap(), DecoderPolicy::DeclareError, cap()).unwrap();
            assert!(error_prob_type_bound(&dec, &p, &space).unwrap().holds(1e-15));
        }
    }

    #[test]
    fn ensemble_bound_small_cases() {
        let r = ensemble_error_bound(gf2(), 2, 1, 2f64.ln() / 2.0, EnsembleMode::Exhaustive, DecoderPolicy::DeclareError, cap()).unwrap();
        assert_eq!(r.len(), 3);
        let mid = r.iter().find(|t| t.counts == vec![1, 1]).unwrap();
        assert!(mid.holds());
        assert!((mid.bound - std::f64::consts::E * 9.0).abs() < 1e-12);

        let r = ensemble_error_bound(gf2(), 3, 2, 2.0 * 2f64.ln() / 3.0, EnsembleMode::Exhaustive, DecoderPolicy::DeclareError, cap()).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|t| t.holds()));
    }

    #[test]
    fn ensemble_exhaustive_matches_direct_average() {
        let ens = exhaust_affine(2, 1, gf2(), cap()).unwrap();
        let space = SourceSpace::new(gf2(), 2, cap()).unwrap();
        let mut total = [0.0; 3];
        for (a, b) in ens.iter() {
            let dec = MinEntropyDecoder::build(&AffineEncoder::new(a, b).unwrap(), DecoderPolicy::DeclareError, cap()).unwrap();
            for (i, t) in space.types().iter().enumerate() {
                total[i] += xi_type(&dec, t, &space).unwrap() / 8.0;
            }
        }
        let r = ensemble_error_bound(gf2(), 2, 1, 0.3, EnsembleMode::Exhaustive, DecoderPolicy::DeclareError, cap()).unwrap();
        for (i, t) in r.iter().enumerate() {
            assert!((t.mean - total[i]).abs() < 1e-15);
        }
        // The mixed type fails for every encoder: its coset always holds a
        // sequence of equal or lower entropy.
        assert_eq!(r[1].mean, 1.0);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let mode = EnsembleMode::MonteCarlo { samples: 600, seed: 4 };
        let a = ensemble_error_bound(gf2(), 4, 2, 2f64.ln() / 2.0, mode, DecoderPolicy::DeclareError, cap()).unwrap();
        let b = ensemble_error_bound(gf2(), 4, 2, 2f64.ln() / 2.0, mode, DecoderPolicy::DeclareError, cap()).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.half_width > 0.0 || t.mean == 0.0 || t.mean == 1.0));
    }

    #[test]
    fn rate_bookkeeping() {
        let ln2 = 2f64.ln();
        for n in 1..40 {
            for k in 1..=20 {
                let rate = ln2 * k as f64 / 20.0;
                match m_from_rate(n, rate, gf2()) {
                    Ok(m) => {
                        let realised = m as f64 / n as f64 * ln2;
                        assert!(realised <= rate + 1e-12);
                        assert!(realised >= rate - 1.0 / n as f64);
                    }
                    Err(_) => assert!((n as f64 * rate / ln2) < 1.0 + 1e-9),
                }
            }
        }
        assert_eq!(m_from_rate(4, ln2 / 2.0, gf2()).unwrap(), 2);
        assert!(m_from_rate(4, 0.1, gf2()).is_err());
        assert!(m_from_rate(4, 1.0, gf2()).is_err());
    }
}
