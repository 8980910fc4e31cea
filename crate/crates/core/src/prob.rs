//! Distributions, channels and joint laws on finite alphabets, the usual
//! information measures (natural logarithms throughout), and the method of
//! types: type enumeration, exact type-class sizes and type probabilities.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::EnumerationCap;

/// Tolerance on `Σ p = 1`. Inputs outside it are rejected, never renormalized.
pub const NORMALIZATION_TOL: f64 = 1e-12;

fn validate_probs(probs: &[f64], what: &str) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution(format!("{what}: empty alphabet")));
    }
    if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what}: entry {i} = {p} is not a probability"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution(format!("{what}: sums to {sum}, not 1")));
    }
    Ok(())
}

#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// A probability vector on `{0, …, q−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Distribution::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Vec<f64> {
        d.probs
    }
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs, "distribution")?;
        Ok(Distribution { probs })
    }

    pub fn uniform(q: usize) -> Self {
        Distribution {
            probs: vec![1.0 / q as f64; q],
        }
    }

    pub fn point_mass(q: usize, at: usize) -> Self {
        let mut probs = vec![0.0; q];
        probs[at] = 1.0;
        Distribution { probs }
    }

    /// Binary distribution `(1 − p, p)`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Distribution::new(vec![1.0 - p, p])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn p(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn is_uniform(&self, tol: f64) -> bool {
        let u = 1.0 / self.len() as f64;
        self.probs.iter().all(|p| (p - u).abs() <= tol)
    }

    /// `Π_t p(x_t)` for a sequence of symbols.
    pub fn sequence_prob(&self, seq: &[u32]) -> f64 {
        seq.iter().map(|&x| self.probs[x as usize]).product()
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(d: &Distribution) -> f64 {
    -d.probs.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// `D(p || q)` in nats; `+∞` when `p` charges a symbol `q` does not.
pub fn divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::usage("divergence between different alphabets"));
    }
    let mut d = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if a > 0.0 {
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            d += a * (a / b).ln();
        }
    }
    Ok(d.max(0.0))
}

/// `D(p_{A|B} || q_A | p_B) = Σ_b p_B(b) D(p_{A|B}(·|b) || q_A)`.
pub fn conditional_divergence(
    p_a_given_b: &Channel,
    q_a: &Distribution,
    p_b: &Distribution,
) -> Result<f64> {
    if p_a_given_b.inputs() != p_b.len() || p_a_given_b.outputs() != q_a.len() {
        return Err(Error::usage("conditional divergence: inconsistent shapes"));
    }
    let mut total = 0.0;
    for (b, row) in p_a_given_b.rows.iter().enumerate() {
        let w = p_b.p(b);
        if w > 0.0 {
            let d = divergence(row, q_a)?;
            if d.is_infinite() {
                return Ok(f64::INFINITY);
            }
            total += w * d;
        }
    }
    Ok(total)
}

/// A stochastic kernel from an input alphabet to an output alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Channel {
    rows: Vec<Distribution>,
}

impl TryFrom<Vec<Vec<f64>>> for Channel {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Channel::new(v)
    }
}

impl From<Channel> for Vec<Vec<f64>> {
    fn from(c: Channel) -> Self {
        c.rows.into_iter().map(|r| r.probs).collect()
    }
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidDistribution("channel with no rows".into()));
        }
        let width = rows[0].len();
        let mut out = Vec::with_capacity(rows.len());
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != width {
                return Err(Error::InvalidDistribution(format!(
                    "channel row {i} has {} entries, expected {width}",
                    r.len()
                )));
            }
            validate_probs(&r, &format!("channel row {i}"))?;
            out.push(Distribution { probs: r });
        }
        Ok(Channel { rows: out })
    }

    pub fn from_rows(rows: Vec<Distribution>) -> Result<Self> {
        Channel::new(rows.into_iter().map(|d| d.probs).collect())
    }

    /// Binary symmetric channel with crossover probability `eps`.
    pub fn bsc(eps: f64) -> Result<Self> {
        Channel::new(vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]])
    }

    /// Identity channel on `q` symbols.
    pub fn noiseless(q: usize) -> Self {
        Channel {
            rows: (0..q).map(|i| Distribution::point_mass(q, i)).collect(),
        }
    }

    /// Every input produces the same output law: the output is independent
    /// of the input.
    pub fn constant(inputs: usize, output: Distribution) -> Self {
        Channel {
            rows: vec![output; inputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn outputs(&self) -> usize {
        self.rows[0].len()
    }

    #[inline]
    pub fn w(&self, input: usize, output: usize) -> f64 {
        self.rows[input].probs[output]
    }

    pub fn row(&self, input: usize) -> &Distribution {
        &self.rows[input]
    }

    pub fn rows(&self) -> &[Distribution] {
        &self.rows
    }

    /// Output law for input law `p`.
    pub fn output_distribution(&self, p: &Distribution) -> Result<Distribution> {
        if p.len() != self.inputs() {
            return Err(Error::usage("input law does not match the channel"));
        }
        let mut out = vec![0.0; self.outputs()];
        for (x, row) in self.rows.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(&row.probs) {
                *o += p.p(x) * w;
            }
        }
        Ok(Distribution { probs: out })
    }

    /// Joint law of (input, output) with shape `[inputs, outputs]`.
    pub fn joint(&self, p: &Distribution) -> Result<JointDistribution> {
        if p.len() != self.inputs() {
            return Err(Error::usage("input law does not match the channel"));
        }
        let mut table = Vec::with_capacity(self.inputs() * self.outputs());
        for (x, row) in self.rows.iter().enumerate() {
            table.extend(row.probs.iter().map(|w| p.p(x) * w));
        }
        JointDistribution::new(vec![self.inputs(), self.outputs()], table)
    }
}

/// A joint law over several finite alphabets, stored densely in row-major
/// order (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    shape: Vec<usize>,
    table: Vec<f64>,
}

impl JointDistribution {
    pub fn new(shape: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        let size: usize = shape.iter().product();
        if shape.is_empty() || size != table.len() {
            return Err(Error::usage(format!(
                "joint table of length {} does not match shape {shape:?}",
                table.len()
            )));
        }
        validate_probs(&table, "joint distribution")?;
        Ok(JointDistribution { shape, table })
    }

    /// Product law of independent marginals.
    pub fn product(marginals: &[&Distribution]) -> Result<Self> {
        let shape: Vec<usize> = marginals.iter().map(|d| d.len()).collect();
        let mut table = vec![1.0];
        for d in marginals {
            table = table
                .iter()
                .flat_map(|&a| d.probs.iter().map(move |&b| a * b))
                .collect();
        }
        // products of valid laws can drift by a few ulps
        let s: f64 = table.iter().sum();
        if (s - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!("product law sums to {s}")));
        }
        Ok(JointDistribution { shape, table })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.shape[i + 1];
        }
        s
    }

    /// Flat index of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.table[self.flat_index(idx)]
    }

    /// Marginal on the listed axes, in the listed order.
    pub fn marginal(&self, axes: &[usize]) -> Result<JointDistribution> {
        if axes.is_empty() || axes.iter().any(|&a| a >= self.rank()) {
            return Err(Error::usage(format!("bad marginal axes {axes:?}")));
        }
        let strides = self.strides();
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let mut out_strides = vec![1usize; axes.len()];
        for i in (0..axes.len().saturating_sub(1)).rev() {
            out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
        }
        let mut out = vec![0.0; out_shape.iter().product()];
        for (flat, &p) in self.table.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut o = 0;
            for (k, &a) in axes.iter().enumerate() {
                let coord = (flat / strides[a]) % self.shape[a];
                o += coord * out_strides[k];
            }
            out[o] += p;
        }
        Ok(JointDistribution {
            shape: out_shape,
            table: out,
        })
    }

    /// Converts a rank-1 law into a [`Distribution`].
    pub fn to_distribution(&self) -> Result<Distribution> {
        if self.rank() != 1 {
            return Err(Error::usage("only rank-1 joints convert to a distribution"));
        }
        Ok(Distribution {
            probs: self.table.clone(),
        })
    }

    /// Entropy of the whole joint law.
    pub fn entropy(&self) -> f64 {
        -self.table.iter().map(|&p| plogp(p)).sum::<f64>()
    }

    /// `H(axes)`.
    pub fn entropy_of(&self, axes: &[usize]) -> Result<f64> {
        Ok(self.marginal(axes)?.entropy())
    }

    /// `H(a | b)`.
    pub fn conditional_entropy(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        let ab: Vec<usize> = a.iter().chain(b).copied().collect();
        Ok(self.entropy_of(&ab)? - self.entropy_of(b)?)
    }

    /// `I(a; b)`, clamped at 0 against rounding.
    pub fn mutual_information(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        let ab: Vec<usize> = a.iter().chain(b).copied().collect();
        let i = self.entropy_of(a)? + self.entropy_of(b)? - self.entropy_of(&ab)?;
        Ok(i.max(0.0))
    }
}

/// Convenience wrapper over [`JointDistribution::mutual_information`] for a
/// two-axis law.
pub fn mutual_information(joint: &JointDistribution) -> Result<f64> {
    if joint.rank() != 2 {
        return Err(Error::usage("mutual_information expects a two-axis joint"));
    }
    joint.mutual_information(&[0], &[1])
}

/// `H(axis 0 | axis 1)` for a two-axis law.
pub fn conditional_entropy(joint: &JointDistribution) -> Result<f64> {
    if joint.rank() != 2 {
        return Err(Error::usage("conditional_entropy expects a two-axis joint"));
    }
    joint.conditional_entropy(&[0], &[1])
}

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// The empirical type of a length-`n` sequence, kept as integer counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeClass {
    counts: Vec<usize>,
}

impl TypeClass {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::usage("type over an empty alphabet"));
        }
        Ok(TypeClass { counts })
    }

    /// Type of `seq` over an alphabet of size `q`.
    pub fn of_sequence(seq: &[u32], q: usize) -> Self {
        let mut counts = vec![0usize; q];
        for &x in seq {
            counts[x as usize] += 1;
        }
        TypeClass { counts }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn alphabet_size(&self) -> usize {
        self.counts.len()
    }

    /// The type as a probability vector.
    pub fn distribution(&self) -> Distribution {
        let n = self.n() as f64;
        Distribution {
            probs: self.counts.iter().map(|&c| c as f64 / n).collect(),
        }
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.distribution())
    }

    /// `Π_x c_x^{c_x}` as an exact integer. For types with the same `n`,
    /// `H(s) < H(t)` iff `key(s) > key(t)`, since
    /// `n H = n ln n − Σ c ln c`. Comparing keys avoids floating-point ties.
    pub fn entropy_order_key(&self) -> BigUint {
        let mut key = BigUint::one();
        for &c in &self.counts {
            if c > 1 {
                key *= BigUint::from(c).pow(c as u32);
            }
        }
        key
    }
}

/// All types of length-`n` sequences over `q` symbols, first count descending
/// (so binary `n = 2` gives `(2,0), (1,1), (0,2)`).
pub fn enumerate_types(n: usize, q: usize, cap: EnumerationCap) -> Result<Vec<TypeClass>> {
    if q == 0 {
        return Err(Error::usage("alphabet size must be positive"));
    }
    let count = binomial_f64(n + q - 1, q - 1);
    cap.check("type enumeration", count)?;
    let mut out = Vec::with_capacity(count as usize);
    let mut cur = vec![0usize; q];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<TypeClass>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(TypeClass { counts: cur.clone() });
            return;
        }
        for c in (0..=left).rev() {
            cur[pos] = c;
            rec(pos + 1, left - c, cur, out);
        }
    }
    rec(0, n, &mut cur, &mut out);
    debug_assert!(out.len() as f64 <= ((n + 1) as f64).powi(q as i32));
    Ok(out)
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// Exact `|T_t| = n! / Π c_x!`.
pub fn type_class_size(t: &TypeClass) -> BigUint {
    let mut num = factorial(t.n());
    for &c in &t.counts {
        num /= factorial(c);
    }
    num
}

fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Lossy conversion for bound comparisons.
pub fn big_to_f64(v: &BigUint) -> f64 {
    v.to_f64().unwrap_or(f64::INFINITY)
}

/// A type-class size with the entropy bounds
/// `(n+1)^{−|X|} e^{nH} ≤ |T| ≤ e^{nH}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeSizeReport {
    pub size: BigUint,
    pub lower: f64,
    pub upper: f64,
}

impl TypeSizeReport {
    pub fn within_bounds(&self) -> bool {
        let s = big_to_f64(&self.size);
        // relative slack for the exp() rounding only
        s >= self.lower * (1.0 - 1e-12) && s <= self.upper * (1.0 + 1e-12)
    }
}

pub fn type_class_size_report(t: &TypeClass) -> TypeSizeReport {
    let n = t.n() as f64;
    let h = t.entropy();
    let upper = (n * h).exp();
    let lower = upper / (n + 1.0).powi(t.alphabet_size() as i32);
    TypeSizeReport {
        size: type_class_size(t),
        lower,
        upper,
    }
}

/// Exact `p^n(T_t)` next to the bound `e^{−n D(t || p)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeProbBound {
    pub exact: f64,
    pub bound: f64,
}

impl TypeProbBound {
    pub fn holds(&self) -> bool {
        self.exact <= self.bound * (1.0 + 1e-12) + 1e-300
    }
}

pub fn typeclass_prob_bound(t: &TypeClass, p: &Distribution) -> Result<TypeProbBound> {
    if t.alphabet_size() != p.len() {
        return Err(Error::usage("type and distribution use different alphabets"));
    }
    let n = t.n() as f64;
    let per_seq: f64 = t
        .counts
        .iter()
        .zip(p.probs())
        .map(|(&c, &q)| if c == 0 { 1.0 } else { q.powi(c as i32) })
        .product();
    let exact = big_to_f64(&type_class_size(t)) * per_seq;
    let d = divergence(&t.distribution(), p)?;
    let bound = if d.is_infinite() { 0.0 } else { (-n * d).exp() };
    Ok(TypeProbBound { exact, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn entropy_examples() {
        assert!((entropy(&Distribution::uniform(2)) - LN2).abs() < 1e-15);
        assert_eq!(entropy(&Distribution::point_mass(3, 1)), 0.0);
        let d = Distribution::new(vec![0.25, 0.75]).unwrap();
        // -(0.25 ln 0.25 + 0.75 ln 0.75)
        assert!((entropy(&d) - 0.562_335_144_618_5).abs() < 1e-12);
    }

    #[test]
    fn divergence_examples() {
        let p = Distribution::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(divergence(&p, &p).unwrap(), 0.0);
        let one = Distribution::point_mass(2, 0);
        let half = Distribution::uniform(2);
        assert!((divergence(&one, &half).unwrap() - LN2).abs() < 1e-15);
        assert_eq!(divergence(&half, &one).unwrap(), f64::INFINITY);
    }

    #[test]
    fn conditional_divergence_examples() {
        let q = Distribution::new(vec![0.2, 0.8]).unwrap();
        let ch = Channel::constant(3, q.clone());
        let pb = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!(conditional_divergence(&ch, &q, &pb).unwrap().abs() < 1e-15);

        // uniform reference: log q − H(A|B)
        let ch = Channel::new(vec![vec![0.1, 0.6, 0.3], vec![0.5, 0.5, 0.0]]).unwrap();
        let pb = Distribution::new(vec![0.4, 0.6]).unwrap();
        let joint = ch.joint(&pb).unwrap();
        let h_a_given_b = joint.conditional_entropy(&[1], &[0]).unwrap();
        let cd = conditional_divergence(&ch, &Distribution::uniform(3), &pb).unwrap();
        assert!((cd - (3f64.ln() - h_a_given_b)).abs() < 1e-12);

        let ch = Channel::new(vec![vec![1.0, 0.0]]).unwrap();
        let cd = conditional_divergence(&ch, &Distribution::uniform(2), &Distribution::uniform(1)).unwrap();
        assert!((cd - LN2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(Distribution::new(vec![0.5, 0.4]).is_err());
        assert!(Distribution::new(vec![1.5, -0.5]).is_err());
        assert!(Distribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Channel::new(vec![vec![0.9, 0.1], vec![0.5, 0.4]]).is_err());
        assert!(Channel::new(vec![vec![0.9, 0.1], vec![1.0]]).is_err());
    }

    #[test]
    fn type_enumeration_examples() {
        let cap = EnumerationCap::default();
        let t2: Vec<Vec<usize>> = enumerate_types(2, 2, cap)
            .unwrap()
            .iter()
            .map(|t| t.counts().to_vec())
            .collect();
        assert_eq!(t2, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(enumerate_types(4, 2, cap).unwrap().len(), 5);
        assert_eq!(enumerate_types(3, 3, cap).unwrap().len(), 10);
        assert!(enumerate_types(30, 10, EnumerationCap(1000)).is_err());
    }

    #[test]
    fn type_class_size_examples() {
        assert_eq!(type_class_size(&TypeClass::new(vec![2, 2]).unwrap()), BigUint::from(6u32));
        assert_eq!(type_class_size(&TypeClass::new(vec![7, 0]).unwrap()), BigUint::from(1u32));
        let t = TypeClass::new(vec![1, 2]).unwrap();
        let r = type_class_size_report(&t);
        assert_eq!(r.size, BigUint::from(3u32));
        // e^{3 h(1/3)} with h(1/3) = 0.636514 nats
        assert!((r.upper - 6.75).abs() < 1e-10);
        assert!(r.within_bounds());
    }

    #[test]
    fn type_prob_examples() {
        let b = typeclass_prob_bound(&TypeClass::new(vec![4, 0]).unwrap(), &Distribution::point_mass(2, 0)).unwrap();
        assert_eq!((b.exact, b.bound), (1.0, 1.0));
        let b = typeclass_prob_bound(&TypeClass::new(vec![1, 1]).unwrap(), &Distribution::uniform(2)).unwrap();
        assert!((b.exact - 0.5).abs() < 1e-15 && (b.bound - 1.0).abs() < 1e-15);
        let b = typeclass_prob_bound(&TypeClass::new(vec![2, 0]).unwrap(), &Distribution::uniform(2)).unwrap();
        assert!((b.exact - 0.25).abs() < 1e-15 && (b.bound - 0.25).abs() < 1e-15);
    }

    #[test]
    fn type_probabilities_sum_to_one_and_obey_bounds() {
        let cap = EnumerationCap::default();
        let laws = [
            Distribution::new(vec![0.3, 0.7]).unwrap(),
            Distribution::new(vec![0.2, 0.5, 0.3]).unwrap(),
            Distribution::new(vec![0.0, 0.4, 0.6]).unwrap(),
        ];
        for p in &laws {
            for n in 1..=10 {
                let mut total = 0.0;
                for t in enumerate_types(n, p.len(), cap).unwrap() {
                    let b = typeclass_prob_bound(&t, p).unwrap();
                    assert!(b.holds(), "{t:?}: {b:?}");
                    assert!(type_class_size_report(&t).within_bounds(), "{t:?}");
                    total += b.exact;
                }
                assert!((total - 1.0).abs() < 1e-12, "n={n} total={total}");
            }
        }
    }

    #[test]
    fn sequence_probability_is_exponential_in_type() {
        let p = Distribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        let seq = [0u32, 2, 2, 1, 0, 2, 1];
        let t = TypeClass::of_sequence(&seq, 3);
        let n = seq.len() as f64;
        let predicted = (-n * (t.entropy() + divergence(&t.distribution(), &p).unwrap())).exp();
        let direct = p.sequence_prob(&seq);
        assert!(((direct - predicted) / direct).abs() < 1e-10);
    }

    #[test]
    fn entropy_key_orders_types() {
        let cap = EnumerationCap::default();
        let types = enumerate_types(7, 3, cap).unwrap();
        for s in &types {
            for t in &types {
                let (hs, ht) = (s.entropy(), t.entropy());
                if (hs - ht).abs() > 1e-9 {
                    assert_eq!(hs < ht, s.entropy_order_key() > t.entropy_order_key());
                }
            }
        }
    }

    #[test]
    fn marginals_of_channel_joint() {
        let p = Distribution::new(vec![0.3, 0.7]).unwrap();
        let w = Channel::bsc(0.1).unwrap();
        let j = w.joint(&p).unwrap();
        let px = j.marginal(&[0]).unwrap().to_distribution().unwrap();
        assert!((px.p(0) - 0.3).abs() < 1e-15);
        let pz = w.output_distribution(&p).unwrap();
        let pz2 = j.marginal(&[1]).unwrap().to_distribution().unwrap();
        assert!((pz.p(1) - pz2.p(1)).abs() < 1e-15);
    }

    fn arb_joint() -> impl Strategy<Value = JointDistribution> {
        (1usize..4, 1usize..4).prop_flat_map(|(a, b)| {
            prop::collection::vec(0.0f64..1.0, a * b).prop_filter_map("nonzero mass", move |w| {
                let s: f64 = w.iter().sum();
                if s <= 0.0 {
                    return None;
                }
                let mut t: Vec<f64> = w.iter().map(|x| x / s).collect();
                let drift: f64 = 1.0 - t.iter().sum::<f64>();
                t[0] += drift;
                JointDistribution::new(vec![a, b], t).ok()
            })
        })
    }

    proptest! {
        #[test]
        fn mutual_information_identity(j in arb_joint()) {
            let i = j.mutual_information(&[0], &[1]).unwrap();
            let direct = j.entropy_of(&[0]).unwrap() + j.entropy_of(&[1]).unwrap() - j.entropy();
            prop_assert!(i >= 0.0);
            prop_assert!((i - direct.max(0.0)).abs() < 1e-10);
            let h_cond = conditional_entropy(&j).unwrap();
            prop_assert!((j.entropy_of(&[0]).unwrap() - h_cond - mutual_information(&j).unwrap()).abs() < 1e-10);
        }
    }
}
