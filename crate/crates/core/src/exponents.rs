//! Error and secrecy exponents.
//!
//! * `E(R|p_X)`, the error exponent of the universal minimum-entropy code.
//! * The `(μ, α)` family `ω`, `Ω`, `F`, whose inner minimum runs over
//!   auxiliary laws `q = q_U q_{Z|U} p_{K|Z}` with a free `Z` marginal.
//! * The `(μ, λ)` family `ω̃`, `Ω̃`, `F̃`, whose inner minimum runs over
//!   `p_{U|Z}` with the `(Z, K)` law held at the model.
//! * The tilted law `p^(λ)`, the variance constant `ρ`, the function `g`,
//!   the finite-length corrections `δ₁, δ₂` and a numerical check suite for
//!   the structural properties of these functionals.
//!
//! Inner minimisations are nonconvex and solved by deterministic multistart
//! pattern search; outer suprema by grid plus golden-section refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{golden_max, golden_min, multistart, pattern_search, Blocks, SearchOptions};
use crate::prob::{entropy, Channel, Distribution, JointDistribution};

/// Tolerance of the Markov and family-membership checks on auxiliary laws.
pub const MARKOV_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Error exponent
// ---------------------------------------------------------------------------

/// Value and minimiser of `E(R|p_X)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorExponent {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub evaluations: u64,
}

fn e_objective(rate: f64, p: &[f64], pbar: &[f64]) -> f64 {
    let mut h = 0.0;
    let mut d = 0.0;
    for (&a, &b) in pbar.iter().zip(p) {
        if a > 0.0 {
            h -= a * a.ln();
            if b == 0.0 {
                return f64::INFINITY;
            }
            d += a * (a / b).ln();
        }
    }
    (rate - h).max(0.0) + d
}

/// `E(R|p_X) = min_{p̄} [R − H(p̄)]⁺ + D(p̄ || p_X)`.
///
/// The objective is convex but not smooth, so it is solved through the
/// saddle form `max_{ρ∈[0,1]} min_{p̄} D(p̄||p_X) + ρ(R − H(p̄))`: the inner
/// problem is smooth and convex (pattern search from `p_X`), the outer one
/// concave (golden section).
pub fn error_exponent_e(rate: f64, p_x: &Distribution) -> Result<ErrorExponent> {
    if !(rate >= 0.0) {
        return Err(Error::usage(format!("rate must be nonnegative, got {rate}")));
    }
    let p = p_x.probs();
    let blocks = Blocks(vec![p.len()]);
    let mut evals = 0u64;
    let mut inner = |rho: f64| {
        let f = |x: &[f64]| {
            let mut v = 0.0;
            for (&a, &b) in x.iter().zip(p) {
                if a > 0.0 {
                    if b == 0.0 {
                        return f64::INFINITY;
                    }
                    v += a * (a / b).ln() + rho * a * a.ln();
                }
            }
            v + rho * rate
        };
        let r = pattern_search(&f, &blocks, p, 0.1, 1e-10);
        evals += r.evaluations;
        r
    };
    let (rho, best) = golden_max(|t| inner(t).value, 0.0, 1.0, 60);
    let r = inner(rho);
    let value = best.max(0.0);
    Ok(ErrorExponent {
        value,
        argmin: r.x,
        evaluations: evals,
    })
}

/// `E(R|p_X)` for a binary source by golden-section search over `p̄ = (1−t, t)`;
/// the objective is convex in `t`.
pub fn error_exponent_binary(rate: f64, p_x: &Distribution) -> Result<f64> {
    if p_x.len() != 2 {
        return Err(Error::usage("binary reduction needs a two-symbol source"));
    }
    let p = p_x.probs();
    let (_, v) = golden_min(|t| e_objective(rate, p, &[1.0 - t, t]), 0.0, 1.0, 200);
    Ok(v.min(e_objective(rate, p, p)))
}

// ---------------------------------------------------------------------------
// Model and auxiliary laws
// ---------------------------------------------------------------------------

/// The key law and side channel, with `Z` restricted to its support.
#[derive(Debug, Clone)]
pub struct SideInfoModel {
    p_k: Distribution,
    w: Channel,
    /// Output symbols with `p_Z(z) > 0`.
    support: Vec<usize>,
    /// `p_Z` on the support.
    p_z: Vec<f64>,
    /// `p_{K|Z}(k|z)` on the support, row-major.
    p_k_given_z: Vec<f64>,
}

impl SideInfoModel {
    pub fn new(p_k: Distribution, w: Channel) -> Result<Self> {
        if w.inputs() != p_k.len() {
            return Err(Error::usage(format!(
                "side channel has {} inputs but the key has {} symbols",
                w.inputs(),
                p_k.len()
            )));
        }
        let full = w.output_distribution(&p_k)?;
        let support: Vec<usize> = (0..w.outputs()).filter(|&z| full.p(z) > 0.0).collect();
        let p_z: Vec<f64> = support.iter().map(|&z| full.p(z)).collect();
        let nk = p_k.len();
        let mut p_k_given_z = Vec::with_capacity(support.len() * nk);
        for (i, &z) in support.iter().enumerate() {
            for k in 0..nk {
                p_k_given_z.push(p_k.p(k) * w.w(k, z) / p_z[i]);
            }
        }
        Ok(SideInfoModel {
            p_k,
            w,
            support,
            p_z,
            p_k_given_z,
        })
    }

    pub fn p_k(&self) -> &Distribution {
        &self.p_k
    }

    pub fn w(&self) -> &Channel {
        &self.w
    }

    /// Size of the support of `p_Z`.
    pub fn nz(&self) -> usize {
        self.support.len()
    }

    pub fn nk(&self) -> usize {
        self.p_k.len()
    }

    /// Full output alphabet size `|Z|`.
    pub fn z_alphabet(&self) -> usize {
        self.w.outputs()
    }

    /// Output symbols with positive probability.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn p_z(&self) -> &[f64] {
        &self.p_z
    }

    pub fn p_z_full(&self) -> Result<Distribution> {
        self.w.output_distribution(&self.p_k)
    }

    pub fn p_k_given_z(&self, zi: usize, k: usize) -> f64 {
        self.p_k_given_z[zi * self.nk() + k]
    }

    pub fn h_k(&self) -> f64 {
        entropy(&self.p_k)
    }

    pub fn h_z(&self) -> f64 {
        self.p_z.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
    }

    pub fn h_k_given_z(&self) -> f64 {
        let nk = self.nk();
        let mut h = 0.0;
        for (i, &pz) in self.p_z.iter().enumerate() {
            for k in 0..nk {
                let c = self.p_k_given_z[i * nk + k];
                if c > 0.0 {
                    h -= pz * c * c.ln();
                }
            }
        }
        h
    }

    /// Expands a joint `r(u, z)` on the support into an [`AuxJoint`] on the
    /// full alphabets.
    pub fn aux_from_uz(&self, r_uz: &[f64], nu: usize) -> Result<AuxJoint> {
        let nzf = self.z_alphabet();
        let nk = self.nk();
        let mut t = vec![0.0; nu * nzf * nk];
        for u in 0..nu {
            for (i, &z) in self.support.iter().enumerate() {
                let r = r_uz[u * self.nz() + i];
                for k in 0..nk {
                    t[(u * nzf + z) * nk + k] = r * self.p_k_given_z(i, k);
                }
            }
        }
        AuxJoint::new(nu, nzf, nk, t)
    }

    /// `r(u, z) = p_Z(z) p_{U|Z}(u|z)` from channel rows on the support.
    pub(crate) fn uz_from_rows(&self, rows: &[f64], nu: usize) -> Vec<f64> {
        let nz = self.nz();
        let mut r = vec![0.0; nu * nz];
        for z in 0..nz {
            for u in 0..nu {
                r[u * nz + z] = self.p_z[z] * rows[z * nu + u];
            }
        }
        r
    }

    /// The law in the shared-marginal family induced by the channel
    /// `p_{U|Z}` given on the support.
    pub fn aux_from_rows(&self, rows: &[f64], nu: usize) -> Result<AuxJoint> {
        self.aux_from_uz(&self.uz_from_rows(rows, nu), nu)
    }
}

/// A joint law of `(U, Z, K)` stored as a dense `u, z, k` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxJoint {
    pub nu: usize,
    pub nz: usize,
    pub nk: usize,
    pub table: Vec<f64>,
}

impl AuxJoint {
    /// Validates normalisation and the Markov chain `U ↔ Z ↔ K`.
    pub fn new(nu: usize, nz: usize, nk: usize, table: Vec<f64>) -> Result<Self> {
        JointDistribution::new(vec![nu, nz, nk], table.clone())?;
        let a = AuxJoint { nu, nz, nk, table };
        a.check_markov()?;
        Ok(a)
    }

    #[inline]
    pub fn get(&self, u: usize, z: usize, k: usize) -> f64 {
        self.table[(u * self.nz + z) * self.nk + k]
    }

    pub fn q_uz(&self, u: usize, z: usize) -> f64 {
        (0..self.nk).map(|k| self.get(u, z, k)).sum()
    }

    pub fn q_u(&self) -> Vec<f64> {
        (0..self.nu)
            .map(|u| (0..self.nz).map(|z| self.q_uz(u, z)).sum())
            .collect()
    }

    pub fn q_z(&self) -> Vec<f64> {
        (0..self.nz)
            .map(|z| (0..self.nu).map(|u| self.q_uz(u, z)).sum())
            .collect()
    }

    pub fn q_zk(&self, z: usize, k: usize) -> f64 {
        (0..self.nu).map(|u| self.get(u, z, k)).sum()
    }

    /// `q(k|u)` for every `(u, k)`, row-major.
    pub fn q_k_given_u(&self) -> Vec<f64> {
        let qu = self.q_u();
        let mut out = vec![0.0; self.nu * self.nk];
        for u in 0..self.nu {
            if qu[u] == 0.0 {
                continue;
            }
            for k in 0..self.nk {
                let s: f64 = (0..self.nz).map(|z| self.get(u, z, k)).sum();
                out[u * self.nk + k] = s / qu[u];
            }
        }
        out
    }

    fn check_markov(&self) -> Result<()> {
        for z in 0..self.nz {
            let qz: f64 = (0..self.nu).map(|u| self.q_uz(u, z)).sum();
            if qz == 0.0 {
                continue;
            }
            for u in 0..self.nu {
                let quz = self.q_uz(u, z);
                for k in 0..self.nk {
                    // q(u,z,k) q(z) = q(u,z) q(z,k) under the chain.
                    let lhs = self.get(u, z, k) * qz;
                    let rhs = quz * self.q_zk(z, k);
                    if (lhs - rhs).abs() > MARKOV_TOL {
                        return Err(Error::model(format!(
                            "U - Z - K Markov chain violated at (u={u}, z={z}, k={k})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks `q_{K|Z} = p_{K|Z}` wherever `q_Z > 0`.
    pub fn check_key_channel(&self, model: &SideInfoModel) -> Result<()> {
        let full = model.p_z_full()?;
        let qz = self.q_z();
        for z in 0..self.nz {
            if qz[z] == 0.0 {
                continue;
            }
            if full.p(z) == 0.0 {
                return Err(Error::model(format!(
                    "auxiliary law charges z = {z}, which the side channel never outputs"
                )));
            }
            for k in 0..self.nk {
                let q = self.q_zk(z, k) / qz[z];
                let p = model.p_k.p(k) * model.w.w(k, z) / full.p(z);
                if (q - p).abs() > MARKOV_TOL {
                    return Err(Error::model(format!(
                        "q(k={k}|z={z}) = {q} differs from the model value {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `I(Z;U)` and `H(K|U)`.
    pub fn rate_pair(&self) -> (f64, f64) {
        let qu = self.q_u();
        let qz = self.q_z();
        let mut i_zu = 0.0;
        for u in 0..self.nu {
            for z in 0..self.nz {
                let r = self.q_uz(u, z);
                if r > 0.0 {
                    i_zu += r * (r / (qu[u] * qz[z])).ln();
                }
            }
        }
        let qku = self.q_k_given_u();
        let mut h = 0.0;
        for u in 0..self.nu {
            for k in 0..self.nk {
                let c = qku[u * self.nk + k];
                if c > 0.0 {
                    h -= qu[u] * c * c.ln();
                }
            }
        }
        (i_zu.max(0.0), h)
    }
}

// ---------------------------------------------------------------------------
// Explicit (table) evaluation
// ---------------------------------------------------------------------------

/// `ω^{(μ,α)}_{q|p_Z}(z,k|u)` for every cell of `q`, `+∞` where a logarithm
/// argument vanishes. Cells with `q = 0` are excluded from every expectation.
pub fn omega_weight(mu: f64, alpha: f64, q: &AuxJoint, p_z: &Distribution) -> Result<Vec<f64>> {
    if p_z.len() != q.nz {
        return Err(Error::usage("p_Z and q disagree on |Z|"));
    }
    let qz = q.q_z();
    for z in 0..q.nz {
        if qz[z] > 0.0 && p_z.p(z) == 0.0 {
            return Err(Error::model(format!(
                "q_Z charges z = {z}, which has zero probability under p_Z"
            )));
        }
    }
    let qu = q.q_u();
    let qku = q.q_k_given_u();
    let (ab, mb) = (1.0 - alpha, 1.0 - mu);
    let mut out = vec![f64::INFINITY; q.table.len()];
    for u in 0..q.nu {
        for z in 0..q.nz {
            let quz = q.q_uz(u, z);
            if quz == 0.0 || p_z.p(z) == 0.0 {
                continue;
            }
            let pz = p_z.p(z);
            let q_z_given_u = quz / qu[u];
            for k in 0..q.nk {
                let cell = &mut out[(u * q.nz + z) * q.nk + k];
                let qk = qku[u * q.nk + k];
                let key_term = if mb == 0.0 { 0.0 } else { mb * (1.0 / qk).ln() };
                *cell = ab * (qz[z] / pz).ln()
                    + alpha * (mu * (q_z_given_u / pz).ln() + key_term);
            }
        }
    }
    Ok(out)
}

/// `−ln E_q[exp(−ω)]` from a weight table.
fn neg_log_expectation(q: &AuxJoint, weights: &[f64], scale: f64) -> f64 {
    let s: f64 = q
        .table
        .iter()
        .zip(weights)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &w)| p * (-scale * w).exp())
        .sum();
    -s.ln()
}

/// `Ω^{(μ,α)}(q|p_Z) = −ln E_q[exp(−ω^{(μ,α)}_{q|p_Z})]`.
pub fn omega_capital(mu: f64, alpha: f64, q: &AuxJoint, p_z: &Distribution) -> Result<f64> {
    let w = omega_weight(mu, alpha, q, p_z)?;
    Ok(neg_log_expectation(q, &w, 1.0))
}

/// The objects of the `(μ, λ)` family at one law `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TildeFamily {
    /// `ω̃^{(μ)}_p(z,k|u)` per cell (`+∞` where undefined).
    pub weights: Vec<f64>,
    /// `Ω̃^{(μ,λ)}(p)`.
    pub value: f64,
    /// `p^{(λ)}` as a `u, z, k` table.
    pub tilted: Vec<f64>,
    /// `E_{p^(λ)}[ω̃]`.
    pub mean: f64,
    /// `Var_{p^(λ)}[ω̃]`.
    pub variance: f64,
}

/// `ω̃^{(μ)}_p = μ ln(p_{Z|U}/p_Z) + μ̄ ln(1/p_{K|U})` per cell.
pub fn omega_tilde_weight(mu: f64, p: &AuxJoint) -> Vec<f64> {
    let qu = p.q_u();
    let qz = p.q_z();
    let qku = p.q_k_given_u();
    let mb = 1.0 - mu;
    let mut out = vec![f64::INFINITY; p.table.len()];
    for u in 0..p.nu {
        for z in 0..p.nz {
            let puz = p.q_uz(u, z);
            if puz == 0.0 {
                continue;
            }
            let info = (puz / qu[u] / qz[z]).ln();
            for k in 0..p.nk {
                let pk = qku[u * p.nk + k];
                let key = if mb == 0.0 { 0.0 } else { mb * (1.0 / pk).ln() };
                out[(u * p.nz + z) * p.nk + k] = mu * info + key;
            }
        }
    }
    out
}

pub fn tilde_family(mu: f64, lambda: f64, p: &AuxJoint) -> Result<TildeFamily> {
    if lambda < 0.0 {
        return Err(Error::usage("lambda must be nonnegative"));
    }
    let weights = omega_tilde_weight(mu, p);
    let mut tilted = vec![0.0; p.table.len()];
    let mut z = 0.0;
    for (i, (&pi, &w)) in p.table.iter().zip(&weights).enumerate() {
        if pi > 0.0 {
            tilted[i] = pi * (-lambda * w).exp();
            z += tilted[i];
        }
    }
    if !(z > 0.0) {
        return Err(Error::model("tilted law has zero normalising constant"));
    }
    tilted.iter_mut().for_each(|t| *t /= z);
    let mut mean = 0.0;
    for (&t, &w) in tilted.iter().zip(&weights) {
        if t > 0.0 {
            mean += t * w;
        }
    }
    let mut variance = 0.0;
    for (&t, &w) in tilted.iter().zip(&weights) {
        if t > 0.0 {
            variance += t * (w - mean) * (w - mean);
        }
    }
    Ok(TildeFamily {
        weights,
        value: -z.ln(),
        tilted,
        mean,
        variance,
    })
}

// ---------------------------------------------------------------------------
// Fast evaluation on the support, used inside the optimiser
// ---------------------------------------------------------------------------

/// Alphabet size up to which [`neg_log_moment`] works on the stack.
const STACK_DIM: usize = 16;

/// `−ln Σ_{u,z} r(u,z) (p_Z/r_Z)^a (p_Z/r_{Z|U})^b Σ_k p(k|z) r(k|u)^c`.
///
/// With `r = q_{UZ}` and `(a, b, c) = (ᾱ, αμ, αμ̄)` this is `Ω^{(μ,α)}(q|p_Z)`;
/// with `r = p_Z p_{U|Z}` and `(a, b, c) = (0, λμ, λμ̄)` it is `Ω̃^{(μ,λ)}(p)`.
fn neg_log_moment(model: &SideInfoModel, r_uz: &[f64], nu: usize, a: f64, b: f64, c: f64) -> f64 {
    let nz = model.nz();
    let nk = model.nk();
    let mut scratch = [0.0f64; 3 * STACK_DIM];
    let mut heap = Vec::new();
    let buf: &mut [f64] = if nu.max(nz).max(nk) <= STACK_DIM {
        &mut scratch
    } else {
        heap.resize(nu + nz + nk, 0.0);
        &mut heap
    };
    let (r_u, rest) = buf.split_at_mut(nu);
    let (r_z, rest) = rest.split_at_mut(nz);
    let rk = &mut rest[..nk];
    for u in 0..nu {
        for z in 0..nz {
            let v = r_uz[u * nz + z];
            r_u[u] += v;
            r_z[z] += v;
        }
    }
    let mut total = 0.0;
    for u in 0..nu {
        if r_u[u] <= 0.0 {
            continue;
        }
        for (k, slot) in rk.iter_mut().enumerate() {
            let mut s = 0.0;
            for z in 0..nz {
                s += r_uz[u * nz + z] * model.p_k_given_z(z, k);
            }
            let cond = s / r_u[u];
            *slot = if c == 0.0 { 1.0 } else { cond.powf(c) };
        }
        for z in 0..nz {
            let r = r_uz[u * nz + z];
            if r <= 0.0 {
                continue;
            }
            let pz = model.p_z[z];
            let mut term = r;
            if a != 0.0 {
                term *= (pz / r_z[z]).powf(a);
            }
            if b != 0.0 {
                term *= (pz * r_u[u] / r).powf(b);
            }
            let mut inner = 0.0;
            for (k, &f) in rk.iter().enumerate() {
                inner += model.p_k_given_z(z, k) * f;
            }
            total += term * inner;
        }
    }
    -total.ln()
}

/// `(I(Z;U), H(K|U))` from `r(u,z)` on the support.
pub(crate) fn rate_pair_uz(model: &SideInfoModel, r_uz: &[f64], nu: usize) -> (f64, f64) {
    let nz = model.nz();
    let nk = model.nk();
    let mut i_zu = 0.0;
    let mut h = 0.0;
    for u in 0..nu {
        let r_u: f64 = (0..nz).map(|z| r_uz[u * nz + z]).sum();
        if r_u <= 0.0 {
            continue;
        }
        for z in 0..nz {
            let r = r_uz[u * nz + z];
            if r > 0.0 {
                i_zu += r * (r / (r_u * model.p_z[z])).ln();
            }
        }
        for k in 0..nk {
            let s: f64 = (0..nz).map(|z| r_uz[u * nz + z] * model.p_k_given_z(z, k)).sum();
            if s > 0.0 {
                h -= s * (s / r_u).ln();
            }
        }
    }
    (i_zu.max(0.0), h.max(0.0))
}

/// `μ I(Z;U) + μ̄ H(K|U)` from `r(u,z)` on the support.
fn info_rate_mix(model: &SideInfoModel, r_uz: &[f64], nu: usize, mu: f64) -> f64 {
    let (i, h) = rate_pair_uz(model, r_uz, nu);
    mu * i + (1.0 - mu) * h
}

/// Which inner minimisation is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `Ω^{(μ,α)}` over `q = q_U q_{Z|U} p_{K|Z}`; the variable is `q_{UZ}`.
    Omega,
    /// `Ω̃^{(μ,λ)}` over `p_{U|Z}` with `p_{ZK}` fixed; the variable is the
    /// channel rows.
    Tilde,
}

fn family_blocks(model: &SideInfoModel, family: Family) -> (Blocks, usize) {
    let nz = model.nz();
    let nu = nz;
    match family {
        Family::Omega => (Blocks(vec![nu * nz]), nu),
        Family::Tilde => (Blocks(vec![nu; nz]), nu),
    }
}

fn family_uz(model: &SideInfoModel, family: Family, x: &[f64], nu: usize) -> Vec<f64> {
    match family {
        Family::Omega => x.to_vec(),
        Family::Tilde => model.uz_from_rows(x, nu),
    }
}

/// Structured starting points for the inner minimisation.
fn structured_starts(model: &SideInfoModel, family: Family) -> Vec<Vec<f64>> {
    let nz = model.nz();
    let nu = nz;
    let pz = model.p_z();
    let mut out = Vec::new();
    match family {
        Family::Omega => {
            let mut diag = vec![0.0; nu * nz];
            for z in 0..nz {
                diag[z * nz + z] = pz[z];
            }
            out.push(diag);
            let mut indep = vec![0.0; nu * nz];
            for u in 0..nu {
                for z in 0..nz {
                    indep[u * nz + z] = pz[z] / nu as f64;
                }
            }
            out.push(indep);
            out.push(vec![1.0 / (nu * nz) as f64; nu * nz]);
            let mut flat_diag = vec![0.0; nu * nz];
            for z in 0..nz {
                flat_diag[z * nz + z] = 1.0 / nz as f64;
            }
            out.push(flat_diag);
            for z in 0..nz {
                let mut corner = vec![0.0; nu * nz];
                corner[z] = 1.0;
                out.push(corner);
            }
        }
        Family::Tilde => {
            let mut ident = vec![0.0; nz * nu];
            for z in 0..nz {
                ident[z * nu + z] = 1.0;
            }
            out.push(ident.clone());
            out.push(vec![1.0 / nu as f64; nz * nu]);
            out.push(
                ident
                    .iter()
                    .map(|v| 0.5 * v + 0.5 / nu as f64)
                    .collect(),
            );
            out.push(
                ident
                    .iter()
                    .map(|v| 0.85 * v + 0.15 / nu as f64)
                    .collect(),
            );
        }
    }
    out
}

/// Minimiser of an inner problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerMin {
    pub value: f64,
    /// The optimiser variable (`q_{UZ}` or `p_{U|Z}` rows, on the support).
    pub x: Vec<f64>,
    /// Refined candidates `(value, x)` from the fine phase, best first.
    #[serde(skip)]
    pub candidates: Vec<(f64, Vec<f64>)>,
    pub evaluations: u64,
    pub starts: usize,
}

/// Exponents `(a, b, c)` of [`neg_log_moment`] for `(μ, s)` in a family.
fn family_exponents(family: Family, mu: f64, s: f64) -> (f64, f64, f64) {
    match family {
        Family::Omega => (1.0 - s, s * mu, s * (1.0 - mu)),
        Family::Tilde => (0.0, s * mu, s * (1.0 - mu)),
    }
}

/// Value of the inner objective at a given optimiser variable.
pub fn family_value(model: &SideInfoModel, family: Family, mu: f64, s: f64, x: &[f64]) -> f64 {
    let (_, nu) = family_blocks(model, family);
    let (a, b, c) = family_exponents(family, mu, s);
    neg_log_moment(model, &family_uz(model, family, x, nu), nu, a, b, c)
}

/// `min Ω^{(μ,α)}(q|p_Z)` (Omega) or `min Ω̃^{(μ,λ)}(p)` (Tilde), with
/// optional warm starts placed ahead of the structured ones.
pub fn inner_min(
    model: &SideInfoModel,
    family: Family,
    mu: f64,
    s: f64,
    warm: &[Vec<f64>],
    opts: &SearchOptions,
) -> InnerMin {
    let (blocks, nu) = family_blocks(model, family);
    let (a, b, c) = family_exponents(family, mu, s);
    let f = |x: &[f64]| neg_log_moment(model, &family_uz(model, family, x, nu), nu, a, b, c);
    let mut starts: Vec<Vec<f64>> = warm.to_vec();
    starts.extend(structured_starts(model, family));
    let r = multistart(&f, &blocks, &starts, opts);
    InnerMin {
        value: r.value,
        x: r.x,
        candidates: r.refined,
        evaluations: r.evaluations,
        starts: r.starts,
    }
}

/// The law in `(U, Z, K)` form for an optimiser variable.
pub fn family_law(model: &SideInfoModel, family: Family, x: &[f64]) -> Result<AuxJoint> {
    let (_, nu) = family_blocks(model, family);
    model.aux_from_uz(&family_uz(model, family, x, nu), nu)
}

/// `Ω^{(μ,α)}(p_K, W)` with its minimiser.
pub fn omega_min(mu: f64, alpha: f64, model: &SideInfoModel, opts: &SearchOptions) -> Result<(f64, AuxJoint)> {
    let r = inner_min(model, Family::Omega, mu, alpha, &[], opts);
    Ok((r.value, family_law(model, Family::Omega, &r.x)?))
}

/// `Ω̃^{(μ,λ)}(p_K, W)` with its minimiser.
pub fn omega_tilde_min(mu: f64, lambda: f64, model: &SideInfoModel, opts: &SearchOptions) -> Result<(f64, AuxJoint)> {
    let r = inner_min(model, Family::Tilde, mu, lambda, &[], opts);
    Ok((r.value, family_law(model, Family::Tilde, &r.x)?))
}

/// `R^{(μ)} = min_p [μ I(Z;U) + μ̄ H(K|U)]` over the shared-marginal family,
/// the slope of `λ ↦ Ω̃^{(μ,λ)}(p_K,W)` at `λ = 0`.
pub fn r_mu(mu: f64, model: &SideInfoModel, opts: &SearchOptions) -> f64 {
    let (blocks, nu) = family_blocks(model, Family::Tilde);
    let f = |x: &[f64]| info_rate_mix(model, &model.uz_from_rows(x, nu), nu, mu);
    multistart(&f, &blocks, &structured_starts(model, Family::Tilde), opts).value
}

// ---------------------------------------------------------------------------
// Outer suprema
// ---------------------------------------------------------------------------

/// Denominator convention of the exponent ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Denominators {
    /// `2 + αμ̄` for `F` and `2 + λ(5 − μ)` for `F̃`.
    #[default]
    AsDefined,
    /// Denominator 1 in both (sensitivity experiments only; not the
    /// exponents themselves).
    UnitSensitivity,
}

/// Rate term in the numerator of the `F̃` ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TildeRate {
    /// `λ(μR_A + R)`, the defining form.
    #[default]
    AsDefined,
    /// `λ(μR_A + μ̄R)`, matching the argument label of `F̃^{(μ,λ)}`
    /// (sensitivity experiments only).
    ConvexCombination,
}

/// Everything that fixes the ratio being maximised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatioForm {
    pub denominators: Denominators,
    pub tilde_rate: TildeRate,
}

impl RatioForm {
    /// Whether this is the form defining the exponents (no sensitivity
    /// variant selected).
    pub fn is_defining(&self) -> bool {
        *self == RatioForm::default()
    }
}

/// Settings of the exponent evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentOptions {
    /// Points per axis of the outer grid.
    pub grid: usize,
    /// Golden-section iterations per refinement sweep (0 disables refinement).
    pub refine_iters: usize,
    /// Upper end of the `λ` range for `F̃`.
    pub lambda_max: f64,
    pub form: RatioForm,
    pub search: SearchOptions,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        ExponentOptions {
            grid: 33,
            refine_iters: 12,
            lambda_max: 4.0,
            form: RatioForm::default(),
            search: SearchOptions::default(),
        }
    }
}

/// Optimiser provenance attached to exponent values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerTrace {
    pub grid: usize,
    pub starts: usize,
    pub refine_starts: usize,
    pub refine_iters: usize,
    pub evaluations: u64,
    pub refined: bool,
}

/// An evaluated exponent with its maximiser and inner minimiser.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentResult {
    pub value: f64,
    pub family: Family,
    pub mu: f64,
    /// `α` for `F`, `λ` for `F̃`.
    pub second: f64,
    /// Inner minimum at the maximiser.
    pub inner_value: f64,
    /// Inner minimiser in optimiser coordinates.
    pub inner_x: Vec<f64>,
    pub r_a: f64,
    pub r: f64,
    pub form: RatioForm,
    pub trace: OptimizerTrace,
}

impl ExponentResult {
    /// Re-evaluates the ratio at the stored maximiser and minimiser.
    pub fn reproduce(&self, model: &SideInfoModel) -> f64 {
        let inner = family_value(model, self.family, self.mu, self.second, &self.inner_x);
        ratio(self.family, self.form, inner, self.mu, self.second, self.r_a, self.r)
    }

    /// The inner minimiser as a `(U, Z, K)` law.
    pub fn inner_law(&self, model: &SideInfoModel) -> Result<AuxJoint> {
        family_law(model, self.family, &self.inner_x)
    }
}

/// `[Ω − α(μR_A + μ̄R)]/(2 + αμ̄)` or `[Ω̃ − λ(μR_A + R)]/(2 + λ(5 − μ))`.
pub fn ratio(family: Family, form: RatioForm, inner: f64, mu: f64, s: f64, r_a: f64, r: f64) -> f64 {
    let (num, d) = match family {
        Family::Omega => (inner - s * (mu * r_a + (1.0 - mu) * r), 2.0 + s * (1.0 - mu)),
        Family::Tilde => {
            let rate = match form.tilde_rate {
                TildeRate::AsDefined => r,
                TildeRate::ConvexCombination => (1.0 - mu) * r,
            };
            (inner - s * (mu * r_a + rate), 2.0 + s * (5.0 - mu))
        }
    };
    match form.denominators {
        Denominators::AsDefined => num / d,
        Denominators::UnitSensitivity => num,
    }
}

/// Inner minima on the outer grid, computed once per `(p_K, W)` and reused
/// for every rate pair.
#[derive(Debug, Clone)]
pub struct ExponentSurface {
    pub family: Family,
    pub grid: usize,
    /// Range of the second parameter (`α ∈ [0,1]`, `λ ∈ [0, λ_max]`).
    pub second_max: f64,
    /// Indexed `i_mu * grid + j`.
    pub values: Vec<f64>,
    pub minimizers: Vec<Vec<f64>>,
    pub evaluations: u64,
    pub starts: usize,
}

impl ExponentSurface {
    pub fn mu_at(&self, i: usize) -> f64 {
        i as f64 / (self.grid - 1) as f64
    }

    pub fn second_at(&self, j: usize) -> f64 {
        self.second_max * j as f64 / (self.grid - 1) as f64
    }

    /// Computes the surface. Rows of constant `μ` run in parallel; within a
    /// row each cell is warm-started from its left neighbour, so the result
    /// does not depend on the number of workers.
    pub fn compute(model: &SideInfoModel, family: Family, opts: &ExponentOptions) -> Result<Self> {
        if opts.grid < 2 {
            return Err(Error::usage("exponent grid needs at least 2 points per axis"));
        }
        let g = opts.grid;
        let second_max = match family {
            Family::Omega => 1.0,
            Family::Tilde => opts.lambda_max,
        };
        let rows: Vec<Vec<InnerMin>> = (0..g)
            .into_par_iter()
            .map(|i| {
                let mu = i as f64 / (g - 1) as f64;
                let mut row: Vec<InnerMin> = Vec::with_capacity(g);
                for j in 0..g {
                    let s = second_max * j as f64 / (g - 1) as f64;
                    let warm: Vec<Vec<f64>> = row.last().map(|r| vec![r.x.clone()]).unwrap_or_default();
                    let search = SearchOptions {
                        seed: opts.search.seed ^ ((i * g + j) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                        ..opts.search
                    };
                    row.push(inner_min(model, family, mu, s, &warm, &search));
                }
                row
            })
            .collect();
        let mut values = Vec::with_capacity(g * g);
        let mut minimizers = Vec::with_capacity(g * g);
        let mut evaluations = 0;
        let mut starts = 0;
        for row in rows {
            for cell in row {
                values.push(cell.value);
                evaluations += cell.evaluations;
                starts = starts.max(cell.starts);
                minimizers.push(cell.x);
            }
        }
        Ok(ExponentSurface {
            family,
            grid: g,
            second_max,
            values,
            minimizers,
            evaluations,
            starts,
        })
    }

    /// `sup_{(μ,s)}` of the ratio at `(R_A, R)`: best grid cell, then
    /// alternating golden-section refinement of `μ` and `s` around it.
    pub fn evaluate(&self, model: &SideInfoModel, r_a: f64, r: f64, opts: &ExponentOptions) -> Result<ExponentResult> {
        if !(r_a >= 0.0 && r >= 0.0) {
            return Err(Error::usage(format!("rates must be nonnegative, got ({r_a}, {r})")));
        }
        let g = self.grid;
        let den = opts.form;
        let mut best = (f64::NEG_INFINITY, 0usize);
        for idx in 0..g * g {
            let (i, j) = (idx / g, idx % g);
            let v = ratio(self.family, den, self.values[idx], self.mu_at(i), self.second_at(j), r_a, r);
            if v > best.0 {
                best = (v, idx);
            }
        }
        let (i, j) = (best.1 / g, best.1 % g);
        let mut state = Candidate {
            value: best.0,
            mu: self.mu_at(i),
            s: self.second_at(j),
            inner: self.values[best.1],
            x: self.minimizers[best.1].clone(),
        };
        let mut evaluations = self.evaluations;
        let refined = opts.refine_iters > 0 && state.value > 0.0;
        if refined {
            let dmu = 1.0 / (g - 1) as f64;
            let ds = self.second_max / (g - 1) as f64;
            let search = SearchOptions {
                starts: opts.search.starts.min(8),
                ..opts.search
            };
            for _ in 0..2 {
                for axis in 0..2 {
                    let (centre, half, upper) = if axis == 0 {
                        (state.mu, dmu, 1.0)
                    } else {
                        (state.s, ds, self.second_max)
                    };
                    let lo = (centre - half).max(0.0);
                    let hi = (centre + half).min(upper);
                    let warm = vec![state.x.clone()];
                    let mut seen: Vec<Candidate> = Vec::new();
                    golden_max(
                        |t| {
                            let (mu, s) = if axis == 0 { (t, state.s) } else { (state.mu, t) };
                            let m = inner_min(model, self.family, mu, s, &warm, &search);
                            evaluations += m.evaluations;
                            let v = ratio(self.family, den, m.value, mu, s, r_a, r);
                            seen.push(Candidate {
                                value: v,
                                mu,
                                s,
                                inner: m.value,
                                x: m.x,
                            });
                            v
                        },
                        lo,
                        hi,
                        opts.refine_iters,
                    );
                    for c in seen {
                        if c.value > state.value {
                            state = c;
                        }
                    }
                }
            }
        }
        Ok(ExponentResult {
            value: state.value,
            family: self.family,
            mu: state.mu,
            second: state.s,
            inner_value: state.inner,
            inner_x: state.x,
            r_a,
            r,
            form: den,
            trace: OptimizerTrace {
                grid: g,
                starts: self.starts,
                refine_starts: opts.search.starts.min(8),
                refine_iters: opts.refine_iters,
                evaluations,
                refined,
            },
        })
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    value: f64,
    mu: f64,
    s: f64,
    inner: f64,
    x: Vec<f64>,
}

/// `F(R_A, R | p_K, W)`.
pub fn f_exponent(r_a: f64, r: f64, model: &SideInfoModel, opts: &ExponentOptions) -> Result<ExponentResult> {
    ExponentSurface::compute(model, Family::Omega, opts)?.evaluate(model, r_a, r, opts)
}

/// `F̃(R_A, R | p_K, W)` with `λ ∈ [0, λ_max]`.
pub fn f_tilde(r_a: f64, r: f64, model: &SideInfoModel, opts: &ExponentOptions) -> Result<ExponentResult> {
    ExponentSurface::compute(model, Family::Tilde, opts)?.evaluate(model, r_a, r, opts)
}

// ---------------------------------------------------------------------------
// ρ, g and the finite-length terms
// ---------------------------------------------------------------------------

/// `ϑ(a) = a + (5/4) a²`.
pub fn vartheta(a: f64) -> f64 {
    a + 1.25 * a * a
}

/// Inverse of [`vartheta`] on `a ≥ 0`: `g(v) = (−2 + 2√(1 + 5v))/5`.
pub fn g_inverse(v: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::usage(format!("g is defined for v >= 0, got {v}")));
    }
    // Rationalised form avoids cancellation for small v.
    Ok(2.0 * v / (1.0 + (1.0 + 5.0 * v).sqrt()))
}

/// Grid sizes of the `ρ` search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RhoOptions {
    pub mu_points: usize,
    pub lambda_points: usize,
    pub nu_points: usize,
    /// Inner candidates within this distance of the minimum count as
    /// minimisers.
    pub minimizer_tol: f64,
}

impl Default for RhoOptions {
    fn default() -> Self {
        RhoOptions {
            mu_points: 11,
            lambda_points: 11,
            nu_points: 11,
            minimizer_tol: 1e-7,
        }
    }
}

/// `ρ` with its maximiser and the inner minima on the `(μ, λ)` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoResult {
    pub rho: f64,
    pub mu: f64,
    pub lambda: f64,
    pub nu: f64,
    /// `(μ, λ, Ω̃^{(μ,λ)}(p_K,W), E_{p*}[ω̃])` for every grid cell.
    pub cells: Vec<(f64, f64, f64, f64)>,
}

/// `ρ = max_{(μ,λ) ∈ [0,1]×[0,1/2]} max_{ν ∈ [0,λ], p minimiser} Var_{p^(ν)}[ω̃_p]`
/// on a grid.
pub fn rho_variance(model: &SideInfoModel, opts: &SearchOptions, rho_opts: &RhoOptions) -> Result<RhoResult> {
    let mp = rho_opts.mu_points.max(2);
    let lp = rho_opts.lambda_points.max(2);
    let np = rho_opts.nu_points.max(2);
    let cells: Vec<(usize, usize)> = (0..mp).flat_map(|i| (0..lp).map(move |j| (i, j))).collect();
    // Per cell: (μ, λ, best variance, its ν, inner value, slope).
    type Cell = (f64, f64, f64, f64, f64, f64);
    let results: Vec<Result<Cell>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mu = i as f64 / (mp - 1) as f64;
            let lambda = 0.5 * j as f64 / (lp - 1) as f64;
            let m = inner_min(model, Family::Tilde, mu, lambda, &[], opts);
            let mut best = (f64::NEG_INFINITY, 0.0);
            let mut slope = f64::INFINITY;
            let mut cands: Vec<&Vec<f64>> = m
                .candidates
                .iter()
                .filter(|(v, _)| *v <= m.value + rho_opts.minimizer_tol)
                .map(|(_, x)| x)
                .collect();
            if cands.is_empty() {
                cands.push(&m.x);
            }
            for x in cands {
                let law = family_law(model, Family::Tilde, x)?;
                slope = slope.min(tilde_family(mu, 0.0, &law)?.mean);
                for t in 0..np {
                    let nu = lambda * t as f64 / (np - 1) as f64;
                    let v = tilde_family(mu, nu, &law)?.variance;
                    if v > best.0 {
                        best = (v, nu);
                    }
                }
            }
            Ok((best.0, mu, lambda, best.1, m.value, slope))
        })
        .collect();
    let mut out = RhoResult {
        rho: f64::NEG_INFINITY,
        mu: 0.0,
        lambda: 0.0,
        nu: 0.0,
        cells: Vec::with_capacity(results.len()),
    };
    for r in results {
        let (v, mu, lambda, nu, val, slope) = r?;
        out.cells.push((mu, lambda, val, slope));
        if v > out.rho {
            out.rho = v;
            out.mu = mu;
            out.lambda = lambda;
            out.nu = nu;
        }
    }
    Ok(out)
}

/// `δ₁ = (1/n) ln[e (n+1)^{2|X|} ((n+1)^{|X|} + 1)]` and
/// `δ₂ = (1/n) ln[5 n R ((n+1)^{|X|} + 1)]`.
pub fn delta_terms(n: usize, alphabet: usize, rate: f64) -> Result<(f64, f64)> {
    if n == 0 || !(rate > 0.0) {
        return Err(Error::usage("delta terms need n >= 1 and R > 0"));
    }
    let nf = n as f64;
    let q = alphabet as f64;
    let lp = (nf + 1.0).ln();
    // ln((n+1)^q + 1) computed stably.
    let l_plus = q * lp + (-q * lp).exp().ln_1p();
    let d1 = (1.0 + 2.0 * q * lp + l_plus) / nf;
    let d2 = ((5.0 * nf * rate).ln() + l_plus) / nf;
    Ok((d1, d2))
}

/// One point of the finite-length curves `e^{−n[E−δ₁]}` and `e^{−n[F−δ₂]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub error_curve: f64,
    pub leakage_curve: f64,
}

impl CurvePoint {
    /// Whether the curves carry information (are below 1).
    pub fn error_informative(&self) -> bool {
        self.error_curve < 1.0
    }

    pub fn leakage_informative(&self) -> bool {
        self.leakage_curve < 1.0
    }
}

pub fn finite_length_curves(ns: &[usize], alphabet: usize, rate: f64, e: f64, f: f64) -> Result<Vec<CurvePoint>> {
    ns.iter()
        .map(|&n| {
            let (d1, d2) = delta_terms(n, alphabet, rate)?;
            let nf = n as f64;
            Ok(CurvePoint {
                n,
                delta1: d1,
                delta2: d2,
                error_curve: (-nf * (e - d1)).exp(),
                leakage_curve: (-nf * (f - d2)).exp(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Structural checks
// ---------------------------------------------------------------------------

/// One named check with its worst margin (nonnegative when it passes).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub worst_margin: f64,
    pub cases: usize,
    pub detail: String,
    /// Reported for comparison only; does not affect the verdict.
    pub informational: bool,
    /// Set when a failure is explained by a documented inconsistency in the
    /// definitions; such failures are reported but do not gate.
    pub known_deviation: Option<String>,
}

impl CheckItem {
    pub fn from_margins(name: &str, margins: &[f64], tol: f64, detail: String) -> Self {
        let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
        CheckItem {
            name: name.to_string(),
            passed: !margins.is_empty() && worst >= -tol,
            worst_margin: worst,
            cases: margins.len(),
            detail,
            informational: false,
            known_deviation: None,
        }
    }

    /// Whether the item blocks an overall pass.
    pub fn gates(&self) -> bool {
        !self.passed && !self.informational && self.known_deviation.is_none()
    }
}

/// Settings of [`exponent_check_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentCheckOptions {
    pub random_cases: usize,
    pub derivative_lambdas: Vec<f64>,
    pub derivative_tol: f64,
    pub concavity_tol: f64,
    pub dominance_tol: f64,
    /// `(R_A, R)` pairs for the `F ≥ F̃` comparison.
    pub rate_grid: Vec<(f64, f64)>,
    pub tau: f64,
    pub exterior_points: usize,
    pub seed: u64,
    pub exponent: ExponentOptions,
    pub rho: RhoOptions,
}

impl Default for ExponentCheckOptions {
    fn default() -> Self {
        ExponentCheckOptions {
            random_cases: 1000,
            derivative_lambdas: vec![0.1, 0.25, 0.4],
            derivative_tol: 1e-4,
            concavity_tol: 1e-8,
            dominance_tol: 1e-3,
            rate_grid: Vec::new(),
            tau: 0.05,
            exterior_points: 10,
            seed: 0,
            exponent: ExponentOptions::default(),
            rho: RhoOptions::default(),
        }
    }
}

/// Random law of the shared-marginal family for the model.
pub fn random_shared_law<R: rand::Rng>(model: &SideInfoModel, rng: &mut R) -> Result<AuxJoint> {
    let (blocks, nu) = family_blocks(model, Family::Tilde);
    model.aux_from_rows(&blocks.random_point(rng), nu)
}

/// Bounds `0 ≤ Ω̃^{(μ,λ)}(p) ≤ μ ln|Z| + μ̄ ln|K|` on random `(p, μ, λ)`.
pub fn check_omega_tilde_bounds(model: &SideInfoModel, cases: usize, seed: u64) -> Result<CheckItem> {
    let mut rng = crate::field::stream_rng(seed, 0);
    let lz = (model.z_alphabet() as f64).ln();
    let lk = (model.nk() as f64).ln();
    let mut margins = Vec::with_capacity(2 * cases);
    for _ in 0..cases {
        let p = random_shared_law(model, &mut rng)?;
        let mu: f64 = rand::Rng::gen(&mut rng);
        let lambda: f64 = rand::Rng::gen(&mut rng);
        let v = tilde_family(mu, lambda, &p)?.value;
        margins.push(v);
        margins.push(mu * lz + (1.0 - mu) * lk - v);
    }
    Ok(CheckItem::from_margins(
        "omega-tilde bounds",
        &margins,
        1e-12,
        format!("{cases} random (p, mu, lambda)"),
    ))
}

/// First and second `λ`-derivatives of `Ω̃` against central differences.
pub fn check_derivatives(
    model: &SideInfoModel,
    laws: &[AuxJoint],
    mus: &[f64],
    lambdas: &[f64],
    tol: f64,
) -> Result<CheckItem> {
    let h1 = 1e-5;
    let h2 = 1e-4;
    let mut margins = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for p in laws {
        for &mu in mus {
            for &l in lambdas {
                let fam = tilde_family(mu, l, p)?;
                let v = |x: f64| tilde_family(mu, x, p).map(|t| t.value);
                let d1 = (v(l + h1)? - v(l - h1)?) / (2.0 * h1);
                let d2 = (v(l + h2)? - 2.0 * fam.value + v(l - h2)?) / (h2 * h2);
                let e1 = (d1 - fam.mean).abs();
                let e2 = (d2 + fam.variance).abs();
                worst.0 = worst.0.max(e1);
                worst.1 = worst.1.max(e2);
                margins.push(tol - e1);
                margins.push(tol - e2);
            }
        }
    }
    let _ = model;
    Ok(CheckItem::from_margins(
        "omega-tilde derivatives",
        &margins,
        0.0,
        format!("max |first-order error| {:.3e}, max |second-order error| {:.3e}", worst.0, worst.1),
    ))
}

/// Second differences of `λ ↦ Ω̃^{(μ,λ)}(p)` on `[0, 1/2]`.
pub fn check_concavity(laws: &[AuxJoint], mus: &[f64], tol: f64) -> Result<CheckItem> {
    let steps = 50;
    let h = 0.5 / steps as f64;
    let mut margins = Vec::new();
    for p in laws {
        for &mu in mus {
            let vals: Vec<f64> = (0..=steps)
                .map(|i| tilde_family(mu, i as f64 * h, p).map(|t| t.value))
                .collect::<Result<_>>()?;
            for w in vals.windows(3) {
                margins.push(tol - (w[0] - 2.0 * w[1] + w[2]));
            }
        }
    }
    Ok(CheckItem::from_margins(
        "omega-tilde concavity",
        &margins,
        0.0,
        format!("second differences with step {h}"),
    ))
}

/// `Ω̃^{(μ,λ)}(p_K,W) ≥ λR^{(μ)} − (λ²/2)ρ` on the `ρ` grid.
pub fn check_quadratic_lower_bound(model: &SideInfoModel, rho: &RhoResult, opts: &SearchOptions) -> Result<CheckItem> {
    let mut margins = Vec::new();
    let mut mus: Vec<f64> = rho.cells.iter().map(|c| c.0).collect();
    mus.dedup();
    let slopes: Vec<(f64, f64)> = mus
        .iter()
        .map(|&mu| {
            // Minimum over the optimiser and over every grid minimiser.
            let from_cells = rho
                .cells
                .iter()
                .filter(|c| c.0 == mu)
                .map(|c| c.3)
                .fold(f64::INFINITY, f64::min);
            (mu, r_mu(mu, model, opts).min(from_cells))
        })
        .collect();
    for &(mu, lambda, val, _) in &rho.cells {
        let slope = slopes.iter().find(|s| s.0 == mu).map(|s| s.1).unwrap_or(0.0);
        margins.push(val - (lambda * slope - 0.5 * lambda * lambda * rho.rho));
    }
    Ok(CheckItem::from_margins(
        "omega-tilde quadratic lower bound",
        &margins,
        1e-8,
        format!("rho = {:.6e}", rho.rho),
    ))
}

/// Why the exterior-positivity check can fail for the defining `F̃`.
pub const TILDE_RATE_NOTE: &str = "with the numerator rate term λ(μR_A + R), Jensen gives \
Ω̃(p_K,W) ≤ λR^(μ), so F̃ > 0 needs R^(μ) > μR_A + R for some μ; this fails at exterior points with \
R above H(K|Z) near the frontier. The μ̄R variant reported alongside satisfies the check.";

/// Full check suite for the structural properties of `F`, `F̃`, `Ω̃`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentCheckReport {
    pub items: Vec<CheckItem>,
    pub rho: f64,
}

impl ExponentCheckReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|i| !i.gates())
    }
}

/// Runs the checks on `(p_K, W)`. The exterior-point check needs the
/// rate-region frontier, which the caller supplies as a function
/// `R_A ↦ min R` on the region.
pub fn exponent_check_suite<B: Fn(f64) -> f64 + Sync>(
    model: &SideInfoModel,
    frontier: B,
    opts: &ExponentCheckOptions,
) -> Result<ExponentCheckReport> {
    let search = &opts.exponent.search;
    let mut items = Vec::new();
    items.push(check_omega_tilde_bounds(model, opts.random_cases, opts.seed)?);

    let mut rng = crate::field::stream_rng(opts.seed, 1);
    let mut laws: Vec<AuxJoint> = (0..4)
        .map(|_| random_shared_law(model, &mut rng))
        .collect::<Result<_>>()?;
    let mus = [0.0, 0.3, 0.7, 1.0];
    for &mu in &[0.3, 0.7] {
        laws.push(omega_tilde_min(mu, 0.25, model, search)?.1);
    }
    items.push(check_derivatives(model, &laws, &mus, &opts.derivative_lambdas, opts.derivative_tol)?);
    items.push(check_concavity(&laws, &mus, opts.concavity_tol)?);

    let rho = rho_variance(model, search, &opts.rho)?;
    items.push(check_quadratic_lower_bound(model, &rho, search)?);

    let f_surface = ExponentSurface::compute(model, Family::Omega, &opts.exponent)?;
    let t_surface = ExponentSurface::compute(model, Family::Tilde, &opts.exponent)?;
    let variant = ExponentOptions {
        form: RatioForm {
            tilde_rate: TildeRate::ConvexCombination,
            ..opts.exponent.form
        },
        ..opts.exponent
    };
    let mut dom = Vec::new();
    let mut dom_variant = Vec::new();
    let mut nonneg = Vec::new();
    for &(ra, r) in &opts.rate_grid {
        let f = f_surface.evaluate(model, ra, r, &opts.exponent)?;
        let ft = t_surface.evaluate(model, ra, r, &opts.exponent)?;
        let fv = t_surface.evaluate(model, ra, r, &variant)?;
        dom.push(f.value - ft.value);
        dom_variant.push(f.value - fv.value);
        nonneg.push(ft.value);
    }
    items.push(CheckItem::from_margins(
        "F dominates F-tilde",
        &dom,
        opts.dominance_tol,
        format!("{} rate pairs", opts.rate_grid.len()),
    ));
    let mut item = CheckItem::from_margins(
        "F dominates F-tilde, convex-combination rate variant",
        &dom_variant,
        opts.dominance_tol,
        format!("{} rate pairs", opts.rate_grid.len()),
    );
    item.informational = true;
    items.push(item);
    items.push(CheckItem::from_margins("F-tilde nonnegative", &nonneg, 1e-12, String::new()));

    let ext = exterior_points(model, &frontier, opts.tau, opts.exterior_points);
    let tau = opts.tau;
    let floor = if rho.rho > 0.0 {
        rho.rho / 4.0 * g_inverse(tau / rho.rho)?.powi(2)
    } else {
        f64::INFINITY
    };
    let in_range = tau < 0.5 * rho.rho;
    for (label, eopts, informational) in [
        ("F-tilde exterior positivity", &opts.exponent, false),
        ("F-tilde exterior positivity, convex-combination rate variant", &variant, true),
    ] {
        let mut pos = Vec::new();
        for &(ra, r) in &ext {
            pos.push(t_surface.evaluate(model, ra, r, eopts)?.value - floor);
        }
        let mut item = CheckItem::from_margins(
            label,
            &pos,
            0.0,
            format!(
                "tau = {tau}, rho = {:.6e}, floor (rho/4) g^2(tau/rho) = {floor:.6e}, tau < rho/2: {in_range}, \
                 points below the floor: {}",
                rho.rho,
                pos.iter().filter(|&&m| m < 0.0).count()
            ),
        );
        item.passed = item.passed && floor > 0.0;
        item.informational = informational;
        if !informational && !item.passed {
            item.known_deviation = Some(TILDE_RATE_NOTE.to_string());
        }
        items.push(item);
    }
    Ok(ExponentCheckReport { items, rho: rho.rho })
}

/// Points `(R_A, R)` with `(R_A, R + τ)` strictly below the frontier.
pub fn exterior_points<B: Fn(f64) -> f64>(model: &SideInfoModel, frontier: &B, tau: f64, count: usize) -> Vec<(f64, f64)> {
    let hz = model.h_z();
    let mut out = Vec::new();
    for i in 0..count.max(1) * 4 {
        if out.len() >= count {
            break;
        }
        let ra = hz * (i as f64 + 0.5) / (count.max(1) * 4) as f64;
        let r = frontier(ra) - tau - 0.02;
        if r > 0.0 {
            out.push((ra, r));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn bsc_model(eps: f64) -> SideInfoModel {
        SideInfoModel::new(Distribution::uniform(2), Channel::bsc(eps).unwrap()).unwrap()
    }

    fn quick() -> ExponentOptions {
        ExponentOptions {
            grid: 9,
            refine_iters: 6,
            search: SearchOptions {
                starts: 8,
                refine: 2,
                ..SearchOptions::default()
            },
            ..ExponentOptions::default()
        }
    }

    /// `max_{ρ∈[0,1]} ρR − (1+ρ) ln Σ p^{1/(1+ρ)}`, the dual form of `E`.
    fn e_dual(rate: f64, p: &[f64]) -> f64 {
        golden_max(
            |r| r * rate - (1.0 + r) * p.iter().filter(|&&x| x > 0.0).map(|x| x.powf(1.0 / (1.0 + r))).sum::<f64>().ln(),
            0.0,
            1.0,
            200,
        )
        .1
        .max(0.0)
    }

    #[test]
    fn error_exponent_examples() {
        let u = Distribution::uniform(2);
        assert!(error_exponent_e(0.5, &u).unwrap().value.abs() < 1e-12);
        assert!((error_exponent_e(1.0, &u).unwrap().value - (1.0 - LN2)).abs() < 1e-9);
        let p = Distribution::new(vec![0.8, 0.2]).unwrap();
        let h = entropy(&p);
        assert!(error_exponent_e(h, &p).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn error_exponent_matches_dual_and_binary_forms() {
        for probs in [vec![0.9, 0.1], vec![0.6, 0.4], vec![0.7, 0.2, 0.1], vec![0.5, 0.3, 0.2]] {
            let p = Distribution::new(probs.clone()).unwrap();
            for i in 0..=12 {
                let rate = 1.2 * i as f64 / 12.0;
                let e = error_exponent_e(rate, &p).unwrap().value;
                assert!((e - e_dual(rate, &probs)).abs() < 1e-7, "{probs:?} R={rate}: {e} vs {}", e_dual(rate, &probs));
                if probs.len() == 2 {
                    let b = error_exponent_binary(rate, &p).unwrap();
                    assert!((e - b).abs() < 1e-9, "{probs:?} R={rate}: {e} vs {b}");
                }
            }
        }
    }

    #[test]
    fn omega_weight_examples() {
        let model = bsc_model(0.1);
        let pz = model.p_z_full().unwrap();
        let indep = model.aux_from_uz(&[0.25, 0.25, 0.25, 0.25], 2).unwrap();
        let w = omega_weight(0.4, 0.0, &indep, &pz).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-15));

        let truth = model.aux_from_uz(&[0.5, 0.0, 0.0, 0.5], 2).unwrap();
        let w = omega_weight(1.0, 1.0, &truth, &pz).unwrap();
        // q_{Z|U} = 1 on the diagonal, p_Z = 1/2.
        assert!((w[0] - LN2).abs() < 1e-15);
        let w = omega_weight(0.0, 1.0, &truth, &pz).unwrap();
        let qku = truth.q_k_given_u();
        assert!((w[0] - (1.0 / qku[0]).ln()).abs() < 1e-15);
        assert!((w[1] - (1.0 / qku[1]).ln()).abs() < 1e-15);
    }

    #[test]
    fn omega_capital_examples() {
        let model = bsc_model(0.1);
        let pz = model.p_z_full().unwrap();
        let indep = model.aux_from_uz(&[0.25, 0.25, 0.25, 0.25], 2).unwrap();
        assert!(omega_capital(0.6, 0.0, &indep, &pz).unwrap().abs() < 1e-15);
        assert!((omega_capital(0.0, 1.0, &indep, &pz).unwrap() - LN2).abs() < 1e-12);
    }

    #[test]
    fn fast_and_table_evaluations_agree() {
        let model = SideInfoModel::new(
            Distribution::uniform(3),
            Channel::new(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1], vec![0.3, 0.3, 0.4]]).unwrap(),
        )
        .unwrap();
        let pz = model.p_z_full().unwrap();
        let mut rng = crate::field::stream_rng(3, 0);
        for _ in 0..50 {
            let x = Blocks(vec![9]).random_point(&mut rng);
            let mu: f64 = rand::Rng::gen(&mut rng);
            let a: f64 = rand::Rng::gen(&mut rng);
            let q = family_law(&model, Family::Omega, &x).unwrap();
            let slow = omega_capital(mu, a, &q, &pz).unwrap();
            assert!((slow - family_value(&model, Family::Omega, mu, a, &x)).abs() < 1e-12);

            let rows = Blocks(vec![3; 3]).random_point(&mut rng);
            let p = family_law(&model, Family::Tilde, &rows).unwrap();
            let slow = tilde_family(mu, 2.0 * a, &p).unwrap().value;
            assert!((slow - family_value(&model, Family::Tilde, mu, 2.0 * a, &rows)).abs() < 1e-12);
        }
    }

    #[test]
    fn omega_min_is_below_random_feasible_points() {
        let model = bsc_model(0.2);
        let pz = model.p_z_full().unwrap();
        let opts = SearchOptions::default();
        let mut rng = crate::field::stream_rng(8, 0);
        for &(mu, a) in &[(0.3, 0.5), (0.8, 1.0), (0.0, 0.7)] {
            let (m, q) = omega_min(mu, a, &model, &opts).unwrap();
            q.check_key_channel(&model).unwrap();
            assert!((omega_capital(mu, a, &q, &pz).unwrap() - m).abs() < 1e-12);
            for _ in 0..100 {
                let x = Blocks(vec![4]).random_point(&mut rng);
                assert!(m <= family_value(&model, Family::Omega, mu, a, &x) + 1e-12);
            }
        }
    }

    #[test]
    fn tilde_family_examples() {
        let model = bsc_model(0.1);
        let p = model.aux_from_rows(&[0.3, 0.7, 0.6, 0.4], 2).unwrap();
        let t = tilde_family(0.4, 0.0, &p).unwrap();
        assert!(t.value.abs() < 1e-15);
        for (a, b) in t.tilted.iter().zip(&p.table) {
            assert!((a - b).abs() < 1e-15);
        }
        let indep = model.aux_from_rows(&[0.5, 0.5, 0.5, 0.5], 2).unwrap();
        for &l in &[0.1, 0.5, 1.0] {
            assert!((tilde_family(0.0, l, &indep).unwrap().value - l * LN2).abs() < 1e-12);
        }
        let t = tilde_family(0.3, 0.7, &p).unwrap();
        assert!((t.tilted.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_law_has_zero_variance() {
        let model = SideInfoModel::new(Distribution::uniform(2), Channel::constant(2, Distribution::point_mass(2, 0))).unwrap();
        let p = model.aux_from_rows(&[1.0], 1).unwrap();
        for &l in &[0.0, 0.2, 0.5] {
            assert!(tilde_family(0.5, l, &p).unwrap().variance.abs() < 1e-15);
        }
    }

    #[test]
    fn g_inverse_round_trip() {
        assert_eq!(g_inverse(0.0).unwrap(), 0.0);
        assert!((g_inverse(2.25).unwrap() - 1.0).abs() < 1e-15);
        for i in 0..=1000 {
            let a = 10.0 * i as f64 / 1000.0;
            assert!((g_inverse(vartheta(a)).unwrap() - a).abs() < 1e-10);
        }
        assert!(g_inverse(-1.0).is_err());
    }

    #[test]
    fn delta_term_examples() {
        let (d1, d2) = delta_terms(10, 2, LN2).unwrap();
        let e1 = (1.0 + (11f64.powi(4) * 122.0).ln()) / 10.0;
        let e2 = (5.0 * 10.0 * LN2 * 122.0).ln() / 10.0;
        assert!((d1 - e1).abs() < 1e-12 && (d1 - 1.5396).abs() < 5e-5);
        assert!((d2 - e2).abs() < 1e-12 && (d2 - 0.83495).abs() < 5e-5);
        let mut prev = f64::INFINITY;
        for n in (10..=100_000).step_by(997) {
            let (d, _) = delta_terms(n, 2, LN2).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn f_exponent_basics() {
        let model = bsc_model(0.1);
        let opts = quick();
        let fs = ExponentSurface::compute(&model, Family::Omega, &opts).unwrap();
        // Deep inside the region.
        let inside = fs.evaluate(&model, LN2, LN2, &opts).unwrap();
        assert!(inside.value.abs() < 1e-3 && inside.value >= 0.0, "{inside:?}");
        // At the origin the exponent is strictly positive.
        let origin = fs.evaluate(&model, 0.0, 0.0, &opts).unwrap();
        assert!(origin.value > 0.01);
        assert!((origin.reproduce(&model) - origin.value).abs() < 1e-8);
        origin.inner_law(&model).unwrap().check_key_channel(&model).unwrap();
        // Monotone in each rate on a coarse grid.
        let mut prev = f64::INFINITY;
        for i in 0..5 {
            let v = fs.evaluate(&model, 0.1 * i as f64, 0.2, &opts).unwrap().value;
            assert!(v <= prev + 1e-6);
            prev = v;
        }
    }

    #[test]
    fn f_tilde_basics() {
        let model = bsc_model(0.1);
        let opts = quick();
        let ts = ExponentSurface::compute(&model, Family::Tilde, &opts).unwrap();
        let inside = ts.evaluate(&model, LN2, LN2, &opts).unwrap();
        assert!(inside.value >= 0.0 && inside.value < 1e-3);
        let r = ts.evaluate(&model, 0.0, 0.1, &opts).unwrap();
        assert!((r.reproduce(&model) - r.value).abs() < 1e-8);
    }

    #[test]
    fn surfaces_are_deterministic() {
        let model = bsc_model(0.25);
        let opts = quick();
        let a = ExponentSurface::compute(&model, Family::Omega, &opts).unwrap();
        let b = ExponentSurface::compute(&model, Family::Omega, &opts).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.minimizers, b.minimizers);
    }

    #[test]
    fn property_checks_on_bsc() {
        let model = bsc_model(0.1);
        assert!(check_omega_tilde_bounds(&model, 200, 1).unwrap().passed);
        let mut rng = crate::field::stream_rng(2, 0);
        let laws: Vec<AuxJoint> = (0..3).map(|_| random_shared_law(&model, &mut rng).unwrap()).collect();
        let d = check_derivatives(&model, &laws, &[0.0, 0.5, 1.0], &[0.1, 0.25, 0.4], 1e-4).unwrap();
        assert!(d.passed, "{d:?}");
        assert!(check_concavity(&laws, &[0.0, 0.5, 1.0], 1e-8).unwrap().passed);
    }
}
