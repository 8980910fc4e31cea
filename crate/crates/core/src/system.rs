//! The full cipher system: source, uniform key, one-time pad, side channel,
//! rate-limited adversary and sink decoder, with exact leakage and the
//! bounds that control it.

use std::collections::HashMap;
use std::hash::Hash;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code::{AffineEncoder, DecoderPolicy, MinEntropyDecoder, SourceSpace};
use crate::error::{Error, Result};
use crate::field::{
    exhaust_affine, index_to_digits, random_affine, stream_rng, EnumerationCap, FieldSpec,
};
use crate::prob::{enumerate_types, Channel, Distribution, JointDistribution};

/// Tolerance used when checking that the key distribution is uniform.
const UNIFORM_TOL: f64 = 1e-12;

fn h_of<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

fn checked_count(base: usize, exp: usize) -> Result<u64> {
    crate::field::checked_pow(base as u64, exp as u64)
        .ok_or_else(|| Error::usage(format!("{base}^{exp} overflows")))
}

/// How the adversary compresses `z^n` into a message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum AdversaryStrategy {
    /// A single message: the adversary learns nothing.
    Constant,
    /// The whole observation `z^n`.
    Identity,
    /// The first `keep` symbols of `z^n`.
    Truncation { keep: usize },
    /// The type of `z^n`.
    TypeQuantizer,
    /// An explicit table indexed by `z^n` (lexicographic index), with the
    /// declared message-set size.
    Table { map: Vec<u64>, codomain: u64 },
}

/// The map `z^n ↦ a` used by the adversary, with its declared codomain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdversaryEncoder {
    n: usize,
    z_size: usize,
    strategy: AdversaryStrategy,
    codomain: u64,
    #[serde(skip)]
    type_lookup: Option<HashMap<Vec<usize>, u64>>,
}

impl AdversaryEncoder {
    pub fn new(n: usize, z_size: usize, strategy: AdversaryStrategy) -> Result<Self> {
        if n == 0 || z_size == 0 {
            return Err(Error::usage("adversary needs n >= 1 and a nonempty output alphabet"));
        }
        let mut type_lookup = None;
        let codomain = match &strategy {
            AdversaryStrategy::Constant => 1,
            AdversaryStrategy::Identity => checked_count(z_size, n)?,
            AdversaryStrategy::Truncation { keep } => {
                if *keep > n {
                    return Err(Error::usage(format!(
                        "truncation keeps {keep} symbols of a length-{n} block"
                    )));
                }
                checked_count(z_size, *keep)?
            }
            AdversaryStrategy::TypeQuantizer => {
                let types = enumerate_types(n, z_size, EnumerationCap(u64::MAX))?;
                let lookup: HashMap<Vec<usize>, u64> = types
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (t.counts().to_vec(), i as u64))
                    .collect();
                let len = lookup.len() as u64;
                type_lookup = Some(lookup);
                len
            }
            AdversaryStrategy::Table { map, codomain } => {
                let expected = checked_count(z_size, n)?;
                if map.len() as u64 != expected {
                    return Err(Error::usage(format!(
                        "adversary table has {} entries, expected |Z|^n = {expected}",
                        map.len()
                    )));
                }
                if let Some(bad) = map.iter().find(|&&a| a >= *codomain) {
                    return Err(Error::usage(format!(
                        "adversary table message {bad} outside the declared codomain of size {codomain}"
                    )));
                }
                *codomain
            }
        };
        Ok(AdversaryEncoder {
            n,
            z_size,
            strategy,
            codomain,
            type_lookup,
        })
    }

    pub fn constant(n: usize, z_size: usize) -> Result<Self> {
        Self::new(n, z_size, AdversaryStrategy::Constant)
    }

    pub fn identity(n: usize, z_size: usize) -> Result<Self> {
        Self::new(n, z_size, AdversaryStrategy::Identity)
    }

    pub fn truncation(n: usize, z_size: usize, keep: usize) -> Result<Self> {
        Self::new(n, z_size, AdversaryStrategy::Truncation { keep })
    }

    /// Truncation keeping `⌊n R_A / ln |Z|⌋` symbols.
    pub fn truncation_for_rate(n: usize, z_size: usize, rate: f64) -> Result<Self> {
        if z_size < 2 {
            return Self::constant(n, z_size);
        }
        let keep = ((n as f64 * rate / (z_size as f64).ln()) + 1e-12).floor().max(0.0) as usize;
        Self::truncation(n, z_size, keep.min(n))
    }

    pub fn type_quantizer(n: usize, z_size: usize) -> Result<Self> {
        Self::new(n, z_size, AdversaryStrategy::TypeQuantizer)
    }

    pub fn table(n: usize, z_size: usize, map: Vec<u64>, codomain: u64) -> Result<Self> {
        Self::new(n, z_size, AdversaryStrategy::Table { map, codomain })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn z_size(&self) -> usize {
        self.z_size
    }

    pub fn strategy(&self) -> &AdversaryStrategy {
        &self.strategy
    }

    pub fn name(&self) -> String {
        match &self.strategy {
            AdversaryStrategy::Constant => "constant".into(),
            AdversaryStrategy::Identity => "identity".into(),
            AdversaryStrategy::Truncation { keep } => format!("truncation-{keep}"),
            AdversaryStrategy::TypeQuantizer => "type-quantizer".into(),
            AdversaryStrategy::Table { .. } => "table".into(),
        }
    }

    /// `|M_A|`, the declared number of messages.
    pub fn codomain_size(&self) -> u64 {
        self.codomain
    }

    /// `(1/n) ln |M_A|`.
    pub fn rate(&self) -> f64 {
        (self.codomain as f64).ln() / self.n as f64
    }

    /// Rejects the adversary unless `|M_A| ≤ e^{n(R_A + ε)}`.
    pub fn check_rate_class(&self, rate: f64, eps: f64) -> Result<()> {
        let limit = self.n as f64 * (rate + eps);
        if (self.codomain as f64).ln() > limit {
            return Err(Error::model(format!(
                "adversary `{}` uses {} messages, more than e^(n(R_A+eps)) = {:.6e} allowed by R_A = {rate}",
                self.name(),
                self.codomain,
                limit.exp()
            )));
        }
        Ok(())
    }

    /// Message sent for the observation with index `z`.
    pub fn message(&self, z: u64) -> u64 {
        match &self.strategy {
            AdversaryStrategy::Constant => 0,
            AdversaryStrategy::Identity => z,
            AdversaryStrategy::Truncation { keep } => {
                z / (self.z_size as u64).pow((self.n - keep) as u32)
            }
            AdversaryStrategy::TypeQuantizer => {
                let mut counts = vec![0usize; self.z_size];
                let mut rest = z;
                for _ in 0..self.n {
                    counts[(rest % self.z_size as u64) as usize] += 1;
                    rest /= self.z_size as u64;
                }
                self.type_lookup.as_ref().expect("type lookup built")[&counts]
            }
            AdversaryStrategy::Table { map, .. } => map[z as usize],
        }
    }
}

/// One fully specified cipher system.
#[derive(Debug, Clone)]
pub struct SystemInstance {
    pub n: usize,
    pub spec: FieldSpec,
    pub p_x: Distribution,
    pub p_k: Distribution,
    pub w: Channel,
    pub encoder: AffineEncoder,
    pub adversary: AdversaryEncoder,
}

impl SystemInstance {
    pub fn new(
        spec: FieldSpec,
        p_x: Distribution,
        p_k: Distribution,
        w: Channel,
        encoder: AffineEncoder,
        adversary: AdversaryEncoder,
    ) -> Result<Self> {
        let q = spec.size();
        if p_x.len() != q {
            return Err(Error::usage(format!(
                "source distribution has {} symbols, field GF({}) has {q}",
                p_x.len(),
                spec.modulus()
            )));
        }
        if p_k.len() != q || !p_k.is_uniform(UNIFORM_TOL) {
            return Err(Error::model("the key distribution must be uniform over the field"));
        }
        if w.inputs() != q {
            return Err(Error::usage(format!(
                "side channel has {} inputs, field has {q} symbols",
                w.inputs()
            )));
        }
        if encoder.spec() != spec {
            return Err(Error::usage("encoder lives in a different field"));
        }
        let n = encoder.n();
        if adversary.n() != n || adversary.z_size() != w.outputs() {
            return Err(Error::usage(format!(
                "adversary expects blocks of {} symbols over {} letters; system has n = {n}, |Z| = {}",
                adversary.n(),
                adversary.z_size(),
                w.outputs()
            )));
        }
        Ok(SystemInstance {
            n,
            spec,
            p_x,
            p_k,
            w,
            encoder,
            adversary,
        })
    }

    pub fn m(&self) -> usize {
        self.encoder.m()
    }

    /// `(m/n) ln p`.
    pub fn rate(&self) -> f64 {
        self.encoder.rate()
    }
}

/// The law of `(M_A, Z^n, K^n)` induced by the key, the side channel and
/// the adversary. It does not depend on the source or the affine encoder.
#[derive(Debug, Clone)]
pub struct KeyLaw {
    pub n: usize,
    pub spec: FieldSpec,
    pub z_size: usize,
    /// `|X|^n`.
    pub nk: usize,
    /// `|Z|^n`.
    pub nz: usize,
    /// `|M_A|` (declared).
    pub nm: usize,
    /// `p(k, z)` indexed `k * nz + z`.
    pub p_kz: Vec<f64>,
    pub p_z: Vec<f64>,
    /// Adversary message for each `z`.
    pub msg: Vec<u64>,
    /// `p(a, k)` indexed `a * nk + k`.
    pub p_ak: Vec<f64>,
    pub p_a: Vec<f64>,
}

impl KeyLaw {
    pub fn new(
        spec: FieldSpec,
        n: usize,
        p_k: &Distribution,
        w: &Channel,
        adversary: &AdversaryEncoder,
        cap: EnumerationCap,
    ) -> Result<Self> {
        let nk = cap.check_power("key space", spec.modulus() as u64, n as u64)? as usize;
        let z_size = w.outputs();
        let nz = cap.check_power("side-channel output space", z_size as u64, n as u64)? as usize;
        cap.check("key/side-channel joint", nk as f64 * nz as f64)?;
        let nm_u64 = adversary.codomain_size();
        cap.check("adversary message space", nm_u64 as f64)?;
        cap.check("adversary/key joint", nm_u64 as f64 * nk as f64)?;
        let nm = nm_u64 as usize;

        let msg: Vec<u64> = (0..nz as u64).map(|z| adversary.message(z)).collect();
        let mut kd = vec![0u32; n];
        let mut zd = vec![0u32; n];
        let zspec_digits = |z: u64, out: &mut [u32]| {
            let mut rest = z;
            for e in out.iter_mut().rev() {
                *e = (rest % z_size as u64) as u32;
                rest /= z_size as u64;
            }
        };
        let mut p_kz = vec![0.0; nk * nz];
        for k in 0..nk {
            index_to_digits(spec, k as u64, &mut kd);
            let pk = p_k.sequence_prob(&kd);
            for z in 0..nz {
                zspec_digits(z as u64, &mut zd);
                let mut pr = pk;
                for (&ki, &zi) in kd.iter().zip(&zd) {
                    pr *= w.w(ki as usize, zi as usize);
                }
                p_kz[k * nz + z] = pr;
            }
        }
        let mut p_z = vec![0.0; nz];
        let mut p_ak = vec![0.0; nm * nk];
        for k in 0..nk {
            for z in 0..nz {
                let pr = p_kz[k * nz + z];
                p_z[z] += pr;
                p_ak[msg[z] as usize * nk + k] += pr;
            }
        }
        let mut p_a = vec![0.0; nm];
        for a in 0..nm {
            p_a[a] = p_ak[a * nk..(a + 1) * nk].iter().sum();
        }
        Ok(KeyLaw {
            n,
            spec,
            z_size,
            nk,
            nz,
            nm,
            p_kz,
            p_z,
            msg,
            p_ak,
            p_a,
        })
    }

    pub fn of_system(sys: &SystemInstance, cap: EnumerationCap) -> Result<Self> {
        KeyLaw::new(sys.spec, sys.n, &sys.p_k, &sys.w, &sys.adversary, cap)
    }

    /// `p(a, z, k)` as a dense table of shape `[|M_A|, |Z|^n, |X|^n]`.
    pub fn joint_mzk(&self) -> Result<JointDistribution> {
        let mut t = vec![0.0; self.nm * self.nz * self.nk];
        for k in 0..self.nk {
            for z in 0..self.nz {
                let a = self.msg[z] as usize;
                t[(a * self.nz + z) * self.nk + k] = self.p_kz[k * self.nz + z];
            }
        }
        JointDistribution::new(vec![self.nm, self.nz, self.nk], t)
    }

    /// `p(a) p(z) p(k)` with the same shape as [`KeyLaw::joint_mzk`].
    pub fn product_of_marginals(&self) -> Result<JointDistribution> {
        let mut p_k = vec![0.0; self.nk];
        for k in 0..self.nk {
            p_k[k] = self.p_kz[k * self.nz..(k + 1) * self.nz].iter().sum();
        }
        let mut t = Vec::with_capacity(self.nm * self.nz * self.nk);
        for &pa in &self.p_a {
            for &pz in &self.p_z {
                for &pk in &p_k {
                    t.push(pa * pz * pk);
                }
            }
        }
        JointDistribution::new(vec![self.nm, self.nz, self.nk], t)
    }

    pub fn z_distribution(&self) -> Result<Distribution> {
        Distribution::new(self.p_z.clone())
    }

    /// `p(k̃, a)` for `k̃ = kA ⊕ b`, indexed `a * p^m + k̃`.
    fn encoded_key_law(&self, encoder: &AffineEncoder) -> Vec<f64> {
        let nkt = self.spec.size().pow(encoder.m() as u32);
        let mut digits = vec![0u32; self.n];
        let mut out = vec![0u32; encoder.m()];
        let kt: Vec<usize> = (0..self.nk as u64)
            .map(|k| encoder.affine_index(k, &mut digits, &mut out) as usize)
            .collect();
        let mut law = vec![0.0; self.nm * nkt];
        for a in 0..self.nm {
            for k in 0..self.nk {
                law[a * nkt + kt[k]] += self.p_ak[a * self.nk + k];
            }
        }
        law
    }
}

/// `p(x̃)` for `x̃ = xA`, over the codomain of the encoder.
fn encoded_source_law(encoder: &AffineEncoder, seq_probs: &[f64]) -> Vec<f64> {
    let nxt = encoder.spec().size().pow(encoder.m() as u32);
    let mut digits = vec![0u32; encoder.n()];
    let mut out = vec![0u32; encoder.m()];
    let mut law = vec![0.0; nxt];
    for (x, &p) in seq_probs.iter().enumerate() {
        law[encoder.linear_index(x as u64, &mut digits, &mut out) as usize] += p;
    }
    law
}

/// Exact leakage and the divergence bound that dominates it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeakageValues {
    /// `I(X^n; C̃^m, M_A)`.
    pub delta: f64,
    /// `D(p_{K̃|M_A} || uniform | p_{M_A}) = m ln p − H(K̃ | M_A)`.
    pub divergence: f64,
}

/// Leakage through `H(C̃, M) − H(K̃, M)`: given `X^n = x` the ciphertext is a
/// shift of `K̃`, and `(K, M_A)` is independent of `X`.
fn leakage_from_parts(law: &KeyLaw, encoder: &AffineEncoder, source_law: &[f64]) -> LeakageValues {
    let q = encoder.spec().size();
    let m = encoder.m();
    let nt = source_law.len();
    let key_law = law.encoded_key_law(encoder);
    let spec = encoder.spec();

    // c̃ = x̃ ⊕ k̃ as an index operation.
    let mut xd = vec![0u32; m];
    let mut kd = vec![0u32; m];
    let mut cd = vec![0u32; m];
    let mut add_table = vec![0usize; nt * nt];
    for x in 0..nt {
        index_to_digits(spec, x as u64, &mut xd);
        for k in 0..nt {
            index_to_digits(spec, k as u64, &mut kd);
            for i in 0..m {
                cd[i] = spec.add(xd[i], kd[i]);
            }
            add_table[x * nt + k] = crate::field::digits_to_index(spec, &cd) as usize;
        }
    }

    let mut h_cm = 0.0;
    let mut cm = vec![0.0; nt];
    for a in 0..law.nm {
        if law.p_a[a] == 0.0 {
            continue;
        }
        let row = &key_law[a * nt..(a + 1) * nt];
        cm.iter_mut().for_each(|v| *v = 0.0);
        for (x, &px) in source_law.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (k, &pk) in row.iter().enumerate() {
                if pk != 0.0 {
                    cm[add_table[x * nt + k]] += px * pk;
                }
            }
        }
        h_cm += h_of(cm.iter().copied());
    }
    let h_km = h_of(key_law.iter().copied());
    let h_m = h_of(law.p_a.iter().copied());
    LeakageValues {
        delta: h_cm - h_km,
        divergence: m as f64 * (q as f64).ln() - (h_km - h_m),
    }
}

/// Sparse exact joint law of `(X^n, K^n, Z^n, M_A, C̃^m)`, one atom per
/// positive-probability outcome.
#[derive(Debug, Clone)]
pub struct SystemJoint {
    pub atoms: Vec<JointAtom>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAtom {
    pub x: u64,
    pub k: u64,
    pub z: u64,
    pub a: u64,
    pub c: u64,
    pub p: f64,
}

/// Coordinates of [`SystemJoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    K,
    Z,
    M,
    C,
}

impl JointAtom {
    fn get(&self, v: Var) -> u64 {
        match v {
            Var::X => self.x,
            Var::K => self.k,
            Var::Z => self.z,
            Var::M => self.a,
            Var::C => self.c,
        }
    }
}

impl SystemJoint {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.p).sum()
    }

    /// Marginal law of the listed coordinates.
    pub fn marginal(&self, vars: &[Var]) -> HashMap<Vec<u64>, f64> {
        let mut out: HashMap<Vec<u64>, f64> = HashMap::new();
        for atom in &self.atoms {
            let key: Vec<u64> = vars.iter().map(|&v| atom.get(v)).collect();
            *out.entry(key).or_insert(0.0) += atom.p;
        }
        out
    }

    pub fn entropy_of(&self, vars: &[Var]) -> f64 {
        entropy_of_map(&self.marginal(vars))
    }

    /// `I(A; B) = H(A) + H(B) − H(A, B)`.
    pub fn mutual_information(&self, a: &[Var], b: &[Var]) -> f64 {
        let ab: Vec<Var> = a.iter().chain(b).copied().collect();
        self.entropy_of(a) + self.entropy_of(b) - self.entropy_of(&ab)
    }
}

fn entropy_of_map<K: Eq + Hash>(m: &HashMap<K, f64>) -> f64 {
    let mut v: Vec<f64> = m.values().copied().collect();
    v.sort_by(f64::total_cmp);
    h_of(v)
}

/// Enumerates the exact joint law of the system.
pub fn build_joint(sys: &SystemInstance, cap: EnumerationCap) -> Result<SystemJoint> {
    let law = KeyLaw::of_system(sys, cap)?;
    let space = SourceSpace::new(sys.spec, sys.n, cap)?;
    cap.check(
        "system joint law",
        space.len() as f64 * law.nk as f64 * law.nz as f64,
    )?;
    let px = space.sequence_probs(&sys.p_x)?;
    let enc = &sys.encoder;
    let mut digits = vec![0u32; sys.n];
    let mut out = vec![0u32; enc.m()];
    let m = enc.m();
    let spec = sys.spec;
    let xt: Vec<u64> = (0..space.len() as u64)
        .map(|x| enc.linear_index(x, &mut digits, &mut out))
        .collect();
    let kt: Vec<u64> = (0..law.nk as u64)
        .map(|k| enc.affine_index(k, &mut digits, &mut out))
        .collect();

    let atoms: Vec<JointAtom> = (0..space.len())
        .into_par_iter()
        .flat_map_iter(|x| {
            let mut xd = vec![0u32; m];
            let mut kd = vec![0u32; m];
            index_to_digits(spec, xt[x], &mut xd);
            let mut local = Vec::new();
            if px[x] == 0.0 {
                return local.into_iter();
            }
            for k in 0..law.nk {
                index_to_digits(spec, kt[k], &mut kd);
                let cd: Vec<u32> = xd.iter().zip(&kd).map(|(&a, &b)| spec.add(a, b)).collect();
                let c = crate::field::digits_to_index(spec, &cd);
                for z in 0..law.nz {
                    let p = px[x] * law.p_kz[k * law.nz + z];
                    if p > 0.0 {
                        local.push(JointAtom {
                            x: x as u64,
                            k: k as u64,
                            z: z as u64,
                            a: law.msg[z],
                            c,
                            p,
                        });
                    }
                }
            }
            local.into_iter()
        })
        .collect();
    Ok(SystemJoint { atoms })
}

/// `Δ = I(X^n; C̃^m, M_A)`, exact.
pub fn leakage_exact(sys: &SystemInstance, cap: EnumerationCap) -> Result<f64> {
    Ok(leakage_values(sys, cap)?.delta)
}

/// Leakage and its divergence bound in one pass.
pub fn leakage_values(sys: &SystemInstance, cap: EnumerationCap) -> Result<LeakageValues> {
    let law = KeyLaw::of_system(sys, cap)?;
    let space = SourceSpace::new(sys.spec, sys.n, cap)?;
    let source = encoded_source_law(&sys.encoder, &space.sequence_probs(&sys.p_x)?);
    Ok(leakage_from_parts(&law, &sys.encoder, &source))
}

/// Leakage computed from the full joint law by marginalisation.
pub fn leakage_from_joint(joint: &SystemJoint) -> f64 {
    joint.mutual_information(&[Var::X], &[Var::C, Var::M])
}

/// `D(p_{K̃|M_A} || uniform | p_{M_A})`.
pub fn leakage_divergence_bound(sys: &SystemInstance, cap: EnumerationCap) -> Result<f64> {
    Ok(leakage_values(sys, cap)?.divergence)
}

/// `Θ(R) = Σ p(a,k) ln[1 + (e^{nR} − 1) p(k|a)]`.
pub fn theta(law: &KeyLaw, rate: f64) -> f64 {
    let g = (law.n as f64 * rate).exp_m1();
    let mut total = 0.0;
    for a in 0..law.nm {
        let pa = law.p_a[a];
        if pa == 0.0 {
            continue;
        }
        for &pak in &law.p_ak[a * law.nk..(a + 1) * law.nk] {
            if pak > 0.0 {
                total += pak * (g * (pak / pa)).ln_1p();
            }
        }
    }
    total
}

/// `℘` next to the bound `nR℘ + e^{-nη}` on `Θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBound {
    pub theta: f64,
    /// `Pr[R ≥ (1/n) ln(1/p(K|M)) − η]`.
    pub wp: f64,
    pub bound: f64,
    /// `(nR)^{-1} Θ ≤ ℘ + e^{-nη}`, checked only when `n ≥ 1/R`.
    pub scaled_holds: Option<bool>,
}

impl TailBound {
    pub fn margin(&self) -> f64 {
        self.bound - self.theta
    }
}

pub fn theta_tail_bound(law: &KeyLaw, rate: f64, eta: f64, tol: f64) -> Result<TailBound> {
    if eta <= 0.0 {
        return Err(Error::usage("eta must be positive"));
    }
    let n = law.n as f64;
    let th = theta(law, rate);
    let wp = wp_event(law, rate, eta);
    let tail = (-n * eta).exp();
    let bound = n * rate * wp + tail;
    let scaled_holds = (n * rate >= 1.0).then(|| th / (n * rate) <= wp + tail + tol);
    Ok(TailBound {
        theta: th,
        wp,
        bound,
        scaled_holds,
    })
}

/// Whether `R ≥ (1/n) ln(1/p(k|a)) − η`.
#[inline]
fn e_event(n: f64, rate: f64, eta: f64, p_k_given_a: f64) -> bool {
    rate >= -p_k_given_a.ln() / n - eta
}

fn wp_event(law: &KeyLaw, rate: f64, eta: f64) -> f64 {
    let n = law.n as f64;
    let mut wp = 0.0;
    for a in 0..law.nm {
        let pa = law.p_a[a];
        if pa == 0.0 {
            continue;
        }
        for &pak in &law.p_ak[a * law.nk..(a + 1) * law.nk] {
            if pak > 0.0 && e_event(n, rate, eta, pak / pa) {
                wp += pak;
            }
        }
    }
    wp
}

/// Probabilities of the events used to bound `℘`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventReport {
    /// `Pr[(1/n) ln(p/q̂) < −η]`.
    pub pr_b_complement: f64,
    /// `Pr[(1/n) ln(p_Z/q_Z) < −η]`.
    pub pr_c_complement: f64,
    /// `Pr[p(z|a) > |M_A| e^{nη} p_Z(z)]`.
    pub pr_d_complement: f64,
    /// `℘ = Pr[E_n]`.
    pub pr_e: f64,
    /// Probability of the four-condition event with `R_A` in the third one.
    pub pr_all: f64,
    /// `Pr[all four] + 3 e^{-nη}`.
    pub wp_tilde: f64,
    /// `e^{-nη}`.
    pub tail: f64,
}

impl EventReport {
    /// Smallest slack among the four inequalities (negative means a violation).
    pub fn worst_margin(&self) -> f64 {
        [
            self.tail - self.pr_b_complement,
            self.tail - self.pr_c_complement,
            self.tail - self.pr_d_complement,
            self.wp_tilde - self.pr_e,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

/// Exact probabilities of the events `B_n, C_n, D_n, E_n` for arbitrary
/// reference laws `q̂` on `(M_A, Z^n, K^n)` and `q_Z` on `Z^n`.
pub fn event_decomposition(
    law: &KeyLaw,
    rate: f64,
    adversary_rate: f64,
    eta: f64,
    q_hat: &JointDistribution,
    q_z: &Distribution,
) -> Result<EventReport> {
    if eta <= 0.0 {
        return Err(Error::usage("eta must be positive"));
    }
    if q_hat.shape() != [law.nm, law.nz, law.nk] {
        return Err(Error::usage(format!(
            "q_hat has shape {:?}, expected [{}, {}, {}]",
            q_hat.shape(),
            law.nm,
            law.nz,
            law.nk
        )));
    }
    if q_z.len() != law.nz {
        return Err(Error::usage(format!(
            "q_Z has {} atoms, expected |Z|^n = {}",
            q_z.len(),
            law.nz
        )));
    }
    let n = law.n as f64;
    let ln_m = (law.nm as f64).ln() / n;
    if ln_m > adversary_rate + 1e-12 {
        return Err(Error::model(format!(
            "adversary rate {ln_m} exceeds R_A = {adversary_rate}"
        )));
    }
    let qh = q_hat.table();
    let mut r = EventReport {
        pr_b_complement: 0.0,
        pr_c_complement: 0.0,
        pr_d_complement: 0.0,
        pr_e: 0.0,
        pr_all: 0.0,
        wp_tilde: 0.0,
        tail: (-n * eta).exp(),
    };
    for k in 0..law.nk {
        for z in 0..law.nz {
            let p = law.p_kz[k * law.nz + z];
            if p == 0.0 {
                continue;
            }
            let a = law.msg[z] as usize;
            let pa = law.p_a[a];
            let pz = law.p_z[z];
            let q = qh[(a * law.nz + z) * law.nk + k];
            let b = (p / q).ln() / n >= -eta;
            let c = (pz / q_z.p(z)).ln() / n >= -eta;
            // a is a function of z, so p(z|a) = p(z)/p(a).
            let pz_given_a = pz / pa;
            let info = (pz_given_a / pz).ln() / n;
            let d = ln_m >= info - eta;
            let d_rate = adversary_rate >= info - eta;
            let pak = law.p_ak[a * law.nk + k];
            let e = e_event(n, rate, eta, pak / pa);
            if !b {
                r.pr_b_complement += p;
            }
            if !c {
                r.pr_c_complement += p;
            }
            if !d {
                r.pr_d_complement += p;
            }
            if e {
                r.pr_e += p;
            }
            if b && c && d_rate && e {
                r.pr_all += p;
            }
        }
    }
    r.wp_tilde = r.pr_all + 3.0 * r.tail;
    Ok(r)
}

/// Leakage summary for one system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    pub delta_exact: f64,
    /// The same quantity from the full joint law, when that was feasible.
    pub delta_joint: Option<f64>,
    pub divergence_bound: f64,
    pub theta_bound: f64,
    pub n: usize,
    pub m: usize,
    pub rate: f64,
    pub adversary_rate: f64,
    pub strategy: String,
}

impl LeakageReport {
    pub fn bound_margin(&self) -> f64 {
        self.divergence_bound - self.delta_exact
    }
}

pub fn leakage_report(sys: &SystemInstance, cap: EnumerationCap) -> Result<LeakageReport> {
    let law = KeyLaw::of_system(sys, cap)?;
    let space = SourceSpace::new(sys.spec, sys.n, cap)?;
    let source = encoded_source_law(&sys.encoder, &space.sequence_probs(&sys.p_x)?);
    let v = leakage_from_parts(&law, &sys.encoder, &source);
    let delta_joint = match build_joint(sys, cap) {
        Ok(j) => Some(leakage_from_joint(&j)),
        Err(Error::CapExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(LeakageReport {
        delta_exact: v.delta,
        delta_joint,
        divergence_bound: v.divergence,
        theta_bound: theta(&law, sys.rate()),
        n: sys.n,
        m: sys.m(),
        rate: sys.rate(),
        adversary_rate: sys.adversary.rate(),
        strategy: sys.adversary.name(),
    })
}

/// Averages over the whole affine ensemble for fixed `(n, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleLeakage {
    pub encoders: u64,
    pub mean_delta: f64,
    pub mean_divergence: f64,
    /// `Θ` at `R = (m/n) ln p`.
    pub theta: f64,
}

/// Exact ensemble averages of the leakage and of its divergence bound over
/// every `(A, b)`.
pub fn ensemble_leakage(
    law: &KeyLaw,
    p_x: &Distribution,
    m: usize,
    cap: EnumerationCap,
) -> Result<EnsembleLeakage> {
    let n = law.n;
    let spec = law.spec;
    let ens = exhaust_affine(n, m, spec, cap)?;
    let space = SourceSpace::new(spec, n, cap)?;
    let probs = space.sequence_probs(p_x)?;
    let (sd, sv) = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let (a, b) = ens.get(i);
            let enc = AffineEncoder::new(a, b)?;
            let v = leakage_from_parts(law, &enc, &encoded_source_law(&enc, &probs));
            Ok((v.delta, v.divergence))
        })
        .try_reduce(|| (0.0, 0.0), |x, y| Ok((x.0 + y.0, x.1 + y.1)))?;
    let count = ens.len() as f64;
    let rate = m as f64 / n as f64 * spec.ln_size();
    Ok(EnsembleLeakage {
        encoders: ens.len(),
        mean_delta: sd / count,
        mean_divergence: sv / count,
        theta: theta(law, rate),
    })
}

/// Best error probability and best leakage found over a set of encoders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleScan {
    pub encoders: u64,
    pub exhaustive: bool,
    pub best_error: f64,
    pub best_error_encoder: String,
    pub best_leakage: f64,
    pub best_leakage_encoder: String,
}

/// Scans every encoder of the ensemble when it fits under `budget`,
/// otherwise `budget` encoders drawn from `seed`. The minima of `p_e` and
/// of `Δ` are tracked separately.
pub fn ensemble_scan(
    law: &KeyLaw,
    p_x: &Distribution,
    m: usize,
    policy: DecoderPolicy,
    budget: u64,
    seed: u64,
    cap: EnumerationCap,
) -> Result<EnsembleScan> {
    let n = law.n;
    let spec = law.spec;
    let space = SourceSpace::new(spec, n, cap)?;
    let probs = space.sequence_probs(p_x)?;
    let full = crate::field::checked_pow(spec.modulus() as u64, (n * m + m) as u64);
    let exhaustive = matches!(full, Some(s) if s <= budget);
    let count = if exhaustive { full.unwrap_or(0) } else { budget };

    let eval = |enc: AffineEncoder| -> Result<(f64, f64, String)> {
        let dec = MinEntropyDecoder::with_space(&enc, policy, &space)?;
        let pe = crate::code::error_prob_exact(&dec, p_x, &space)?;
        let v = leakage_from_parts(law, &enc, &encoded_source_law(&enc, &probs));
        Ok((pe, v.delta, enc.to_text()))
    };
    type Best = (f64, String, f64, String);
    let better = |x: Best, y: Best| -> Best {
        let (e, es) = if (y.0, &y.1) < (x.0, &x.1) { (y.0, y.1) } else { (x.0, x.1) };
        let (d, ds) = if (y.2, &y.3) < (x.2, &x.3) { (y.2, y.3) } else { (x.2, x.3) };
        (e, es, d, ds)
    };
    let init = || (f64::INFINITY, String::new(), f64::INFINITY, String::new());
    const CHUNK: u64 = 1024;
    let chunks = count.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let ens = if exhaustive {
                Some(exhaust_affine(n, m, spec, EnumerationCap(u64::MAX))?)
            } else {
                None
            };
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                let (a, b) = match &ens {
                    Some(e) => e.get(i),
                    None => random_affine(n, m, spec, &mut rng)?,
                };
                let (pe, d, text) = eval(AffineEncoder::new(a, b)?)?;
                acc = better(acc, (pe, text.clone(), d, text));
            }
            Ok(acc)
        })
        .try_reduce(init, |x, y| Ok(better(x, y)))?;
    Ok(EnsembleScan {
        encoders: count,
        exhaustive,
        best_error: best.0,
        best_error_encoder: best.1,
        best_leakage: best.2,
        best_leakage_encoder: best.3,
    })
}

/// Empirical decoding error with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationReport {
    pub trials: u64,
    pub errors: u64,
    pub p_e: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

const WILSON_Z: f64 = 1.959_963_984_540_054;

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

const SIM_CHUNK: u64 = 4096;

/// Runs `trials` independent rounds of the whole pipeline: draw the source
/// block, key and side-channel output, encrypt, let the adversary encode
/// its observation, and decode at the sink. Chunk `c` of the trials uses RNG
/// stream `c`, so the result does not depend on the number of workers.
pub fn simulate(
    sys: &SystemInstance,
    policy: DecoderPolicy,
    trials: u64,
    seed: u64,
    cap: EnumerationCap,
) -> Result<SimulationReport> {
    if trials == 0 {
        return Err(Error::usage("simulate needs at least one trial"));
    }
    let dec = MinEntropyDecoder::build(&sys.encoder, policy, cap)?;
    let weights = |d: &Distribution| {
        WeightedIndex::new(d.probs().to_vec())
            .map_err(|e| Error::InvalidDistribution(format!("cannot sample: {e}")))
    };
    let src = weights(&sys.p_x)?;
    let rows: Vec<WeightedIndex<f64>> = sys.w.rows().iter().map(weights).collect::<Result<_>>()?;
    let n = sys.n;
    let q = sys.spec.size() as u32;
    let zq = sys.w.outputs() as u64;
    let enc = &sys.encoder;
    let spec = sys.spec;
    let chunks = trials.div_ceil(SIM_CHUNK);
    let errors: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let batch = SIM_CHUNK.min(trials - c * SIM_CHUNK);
            let mut x = vec![0u32; n];
            let mut k = vec![0u32; n];
            let mut xt = vec![0u32; enc.m()];
            let mut kt = vec![0u32; enc.m()];
            let mut errs = 0u64;
            for _ in 0..batch {
                let mut z = 0u64;
                for i in 0..n {
                    x[i] = src.sample(&mut rng) as u32;
                    k[i] = rng.gen_range(0..q);
                    z = z * zq + rows[k[i] as usize].sample(&mut rng) as u64;
                }
                let _message = sys.adversary.message(z);
                enc.matrix().apply_raw(&x, &mut xt);
                enc.matrix().apply_raw(&k, &mut kt);
                // Ciphertext c̃ = x̃ ⊕ k̃ ⊕ b; the sink removes k̃ ⊕ b.
                let received: Vec<u32> = xt
                    .iter()
                    .zip(&kt)
                    .zip(enc.offset().entries())
                    .map(|((&a, &kk), &b)| spec.sub(spec.add(spec.add(a, kk), b), spec.add(kk, b)))
                    .collect();
                let s = crate::field::digits_to_index(spec, &received);
                let xi = crate::field::digits_to_index(spec, &x);
                if dec.decode_index(s) != Some(xi) {
                    errs += 1;
                }
            }
            errs
        })
        .sum();
    let (lo, hi) = wilson_interval(errors, trials, WILSON_Z);
    Ok(SimulationReport {
        trials,
        errors,
        p_e: errors as f64 / trials as f64,
        ci_low: lo,
        ci_high: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldMatrix, FieldVector};

    fn gf2() -> FieldSpec {
        FieldSpec::binary()
    }

    fn cap() -> EnumerationCap {
        EnumerationCap::default()
    }

    fn system(
        n: usize,
        p_x: Distribution,
        w: Channel,
        enc: AffineEncoder,
        adv: AdversaryEncoder,
    ) -> SystemInstance {
        let _ = n;
        SystemInstance::new(gf2(), p_x, Distribution::uniform(2), w, enc, adv).unwrap()
    }

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn joint_examples() {
        let sys = system(
            1,
            Distribution::uniform(2),
            Channel::noiseless(2),
            AffineEncoder::identity(gf2(), 1).unwrap(),
            AdversaryEncoder::identity(1, 2).unwrap(),
        );
        let j = build_joint(&sys, cap()).unwrap();
        // z = k, a = z, c = x ⊕ k: one atom per (x, k).
        assert_eq!(j.len(), 4);
        assert!(j.atoms.iter().all(|a| (a.p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn joint_respects_model() {
        let p_x = Distribution::new(vec![0.7, 0.3]).unwrap();
        let sys = system(
            2,
            p_x.clone(),
            Channel::bsc(0.1).unwrap(),
            AffineEncoder::parity(gf2(), 2).unwrap(),
            AdversaryEncoder::identity(2, 2).unwrap(),
        );
        let j = build_joint(&sys, cap()).unwrap();
        assert!((j.total() - 1.0).abs() < 1e-12);
        let mx = j.marginal(&[Var::X]);
        for x in 0..4u64 {
            let xv = FieldVector::from_index(gf2(), 2, x);
            assert!((mx[&vec![x]] - p_x.sequence_prob(xv.entries())).abs() < 1e-15);
        }
        assert!(j.mutual_information(&[Var::X], &[Var::K, Var::Z, Var::M]).abs() < 1e-12);
    }

    #[test]
    fn one_time_pad_is_perfectly_secret() {
        let sys = system(
            3,
            Distribution::new(vec![0.8, 0.2]).unwrap(),
            Channel::bsc(0.1).unwrap(),
            AffineEncoder::identity(gf2(), 3).unwrap(),
            AdversaryEncoder::constant(3, 2).unwrap(),
        );
        let r = leakage_report(&sys, cap()).unwrap();
        assert!(r.delta_exact.abs() < 1e-12);
        assert!(r.divergence_bound.abs() < 1e-12);
        assert!(r.delta_joint.unwrap().abs() < 1e-12);
    }

    #[test]
    fn full_key_leak_reveals_source() {
        let n = 3;
        let sys = system(
            n,
            Distribution::uniform(2),
            Channel::noiseless(2),
            AffineEncoder::identity(gf2(), n).unwrap(),
            AdversaryEncoder::identity(n, 2).unwrap(),
        );
        let r = leakage_report(&sys, cap()).unwrap();
        assert!((r.delta_exact - n as f64 * LN2).abs() < 1e-12);
        assert!((r.delta_joint.unwrap() - n as f64 * LN2).abs() < 1e-12);
    }

    #[test]
    fn parity_leakage_agrees_across_paths() {
        let sys = system(
            2,
            Distribution::new(vec![0.6, 0.4]).unwrap(),
            Channel::bsc(0.1).unwrap(),
            AffineEncoder::parity(gf2(), 2).unwrap(),
            AdversaryEncoder::identity(2, 2).unwrap(),
        );
        let r = leakage_report(&sys, cap()).unwrap();
        assert!((r.delta_exact - r.delta_joint.unwrap()).abs() < 1e-12);
        assert!(r.delta_exact > 0.0);
        assert!(r.delta_exact <= r.divergence_bound + 1e-12);
    }

    #[test]
    fn divergence_bound_examples() {
        let sys = system(
            1,
            Distribution::new(vec![0.3, 0.7]).unwrap(),
            Channel::noiseless(2),
            AffineEncoder::identity(gf2(), 1).unwrap(),
            AdversaryEncoder::identity(1, 2).unwrap(),
        );
        let v = leakage_values(&sys, cap()).unwrap();
        assert!((v.divergence - LN2).abs() < 1e-12);
        // Key known exactly: the leakage is H(X).
        let hx = crate::prob::entropy(&sys.p_x);
        assert!((v.delta - hx).abs() < 1e-12);

        let uniform = system(
            1,
            Distribution::uniform(2),
            Channel::noiseless(2),
            AffineEncoder::identity(gf2(), 1).unwrap(),
            AdversaryEncoder::identity(1, 2).unwrap(),
        );
        let v = leakage_values(&uniform, cap()).unwrap();
        assert!((v.delta - LN2).abs() < 1e-12);
        assert!((v.divergence - LN2).abs() < 1e-12);
    }

    #[test]
    fn theta_examples() {
        let law = |adv: AdversaryEncoder, n: usize, w: Channel| {
            KeyLaw::new(gf2(), n, &Distribution::uniform(2), &w, &adv, cap()).unwrap()
        };
        let c = law(AdversaryEncoder::constant(1, 2).unwrap(), 1, Channel::bsc(0.1).unwrap());
        assert_eq!(theta(&c, 0.0), 0.0);
        assert!((theta(&c, LN2) - 1.5f64.ln()).abs() < 1e-12);
        let full = law(AdversaryEncoder::identity(3, 2).unwrap(), 3, Channel::noiseless(2));
        assert!((theta(&full, 0.4) - 3.0 * 0.4).abs() < 1e-12);
    }

    #[test]
    fn tail_bound_examples() {
        let c = KeyLaw::new(gf2(), 3, &Distribution::uniform(2), &Channel::bsc(0.2).unwrap(), &AdversaryEncoder::constant(3, 2).unwrap(), cap()).unwrap();
        let t = theta_tail_bound(&c, 0.3, 0.1, 1e-12).unwrap();
        assert_eq!(t.wp, 0.0);
        assert!(t.theta <= (-0.3f64).exp());

        let full = KeyLaw::new(gf2(), 3, &Distribution::uniform(2), &Channel::noiseless(2), &AdversaryEncoder::identity(3, 2).unwrap(), cap()).unwrap();
        let t = theta_tail_bound(&full, 0.4, 0.1, 1e-12).unwrap();
        assert_eq!(t.wp, 1.0);
        assert!(t.theta <= t.bound);

        let t = theta_tail_bound(&c, 0.5, 50.0, 1e-12).unwrap();
        assert!((t.bound - 3.0 * 0.5 * t.wp).abs() < 1e-60);
    }

    #[test]
    fn event_decomposition_examples() {
        let law = KeyLaw::new(gf2(), 2, &Distribution::uniform(2), &Channel::bsc(0.1).unwrap(), &AdversaryEncoder::identity(2, 2).unwrap(), cap()).unwrap();
        let eta = 0.1;
        let truth = law.joint_mzk().unwrap();
        let pz = law.z_distribution().unwrap();
        let r = event_decomposition(&law, 0.3, LN2, eta, &truth, &pz).unwrap();
        assert_eq!(r.pr_b_complement, 0.0);
        assert_eq!(r.pr_c_complement, 0.0);
        assert!(r.worst_margin() >= -1e-12);

        let prod = law.product_of_marginals().unwrap();
        let r = event_decomposition(&law, 0.3, LN2, eta, &prod, &Distribution::uniform(4)).unwrap();
        assert!(r.worst_margin() >= -1e-12);

        // An adversary above R_A is rejected.
        assert!(event_decomposition(&law, 0.3, 0.1, eta, &truth, &pz).is_err());
    }

    #[test]
    fn adversary_rate_class() {
        let id = AdversaryEncoder::identity(4, 2).unwrap();
        assert!(id.check_rate_class(LN2, 1e-9).is_ok());
        assert!(id.check_rate_class(0.5, 1e-9).is_err());
        let tr = AdversaryEncoder::truncation_for_rate(4, 2, 0.5).unwrap();
        assert_eq!(tr.codomain_size(), 4);
        assert!(tr.check_rate_class(0.5, 1e-9).is_ok());
        assert_eq!(tr.message(0b1011), 0b10);
        let tq = AdversaryEncoder::type_quantizer(3, 2).unwrap();
        assert_eq!(tq.codomain_size(), 4);
        assert_eq!(tq.message(0b011), tq.message(0b110));
        assert_ne!(tq.message(0b011), tq.message(0b111));
        assert!(AdversaryEncoder::table(1, 2, vec![0, 3], 2).is_err());
    }

    #[test]
    fn simulate_examples() {
        let sys = system(
            3,
            Distribution::uniform(2),
            Channel::bsc(0.1).unwrap(),
            AffineEncoder::identity(gf2(), 3).unwrap(),
            AdversaryEncoder::identity(3, 2).unwrap(),
        );
        let r = simulate(&sys, DecoderPolicy::DeclareError, 5000, 1, cap()).unwrap();
        assert_eq!(r.errors, 0);

        let parity = SystemInstance {
            encoder: AffineEncoder::new(FieldMatrix::ones(gf2(), 3, 1).unwrap(), FieldVector::new(gf2(), vec![1]).unwrap()).unwrap(),
            ..sys
        };
        let a = simulate(&parity, DecoderPolicy::DeclareError, 100_000, 7, cap()).unwrap();
        let b = simulate(&parity, DecoderPolicy::DeclareError, 100_000, 7, cap()).unwrap();
        assert_eq!(a, b);
        // Exact value: only 000 and 111 are recovered, p_e = 6/8.
        assert!((a.p_e - 0.75).abs() < 0.004);
        assert!(a.ci_low < 0.75 && 0.75 < a.ci_high);
    }

    #[test]
    fn ensemble_average_within_theta() {
        let law = KeyLaw::new(gf2(), 3, &Distribution::uniform(2), &Channel::bsc(0.1).unwrap(), &AdversaryEncoder::identity(3, 2).unwrap(), cap()).unwrap();
        let p_x = Distribution::new(vec![0.9, 0.1]).unwrap();
        let e = ensemble_leakage(&law, &p_x, 2, cap()).unwrap();
        assert_eq!(e.encoders, 256);
        assert!(e.mean_delta <= e.mean_divergence + 1e-12);
        assert!(e.mean_divergence <= e.theta + 1e-12);
    }
}
