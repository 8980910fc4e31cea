//! Exact verification suites for the finite-length inequalities and for the
//! structural properties of the rate region and the exponents.
//!
//! Every suite returns [`CheckItem`]s carrying the worst margin, so callers
//! can print one line per check and gate on [`CheckItem::gates`].

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::code::{
    ensemble_error_bound, error_prob_type_bound, AffineEncoder, DecoderPolicy, EnsembleMode, MinEntropyDecoder,
    SourceSpace,
};
pub use crate::exponents::CheckItem;
use crate::error::Result;
use crate::field::{
    count_affine_images, count_affine_pair_images, count_linear_collisions, random_affine, stream_rng,
    EnumerationCap, FieldSpec, FieldVector,
};
use crate::optimize::Blocks;
use crate::prob::{enumerate_types, type_class_size_report, typeclass_prob_bound, Channel, Distribution};
use crate::region::{region_structure_check, region_boundary, RegionOptions, MEMBERSHIP_TOL};
use crate::system::{
    ensemble_leakage, event_decomposition, leakage_report, theta_tail_bound, AdversaryEncoder, KeyLaw,
    SystemInstance,
};

/// Largest `p^(nm+m) · |inputs|` a single collision count may enumerate.
pub const COLLISION_WORK: u64 = 1 << 26;

/// Input vectors for the collision counts: all of them when the work fits,
/// otherwise the structured edge cases plus a seeded sample.
fn collision_inputs(spec: FieldSpec, n: usize, per_input: u64, seed: u64, nonzero: bool) -> Vec<FieldVector> {
    let total = spec.count(n).unwrap_or(u64::MAX);
    let budget = (COLLISION_WORK / per_input.max(1)).max(4);
    let first = u64::from(nonzero);
    if total - first <= budget {
        return (first..total)
            .map(|i| FieldVector::from_index(spec, n, i))
            .collect();
    }
    let q = spec.modulus() as u64;
    let mut idx: Vec<u64> = vec![
        1,                  // e_n
        q.pow(n as u32 - 1), // e_1
        (total - 1) / (q - 1), // all ones
        total - 1,          // all p−1
    ];
    let mut rng = stream_rng(seed, n as u64);
    while (idx.len() as u64) < budget {
        let i = rng.gen_range(first..total);
        if !idx.contains(&i) {
            idx.push(i);
        }
    }
    idx.into_iter()
        .map(|i| FieldVector::from_index(spec, n, i))
        .collect()
}

/// Exact collision counts for one `(p, n, m)`, as the largest absolute
/// deviation from `p^(nm−m)` (linear, nonzero differences), `p^(nm)`
/// (affine images) and `p^(nm−m)` (affine pair images). Zero means exact.
pub fn collision_deviation(spec: FieldSpec, n: usize, m: usize, seed: u64, cap: EnumerationCap) -> Result<u64> {
    let p = spec.modulus() as u64;
    let lin_size = p.pow((n * m) as u32);
    let aff_size = lin_size * p.pow(m as u32);
    let want_lin = p.pow((n * m - m) as u32);
    let mut worst = 0u64;

    let diffs = collision_inputs(spec, n, lin_size, seed, true);
    for c in count_linear_collisions(spec, n, m, &diffs, cap)? {
        worst = worst.max(c.abs_diff(want_lin));
    }

    let points = collision_inputs(spec, n, aff_size, seed ^ 1, false);
    for h in count_affine_images(spec, n, m, &points, cap)? {
        for c in h {
            worst = worst.max(c.abs_diff(lin_size));
        }
    }

    let pool = collision_inputs(spec, n, aff_size, seed ^ 2, false);
    let mut pairs = Vec::new();
    let budget = (COLLISION_WORK / aff_size).max(4) as usize;
    'outer: for (i, s) in pool.iter().enumerate() {
        for t in pool.iter().skip(i + 1) {
            if pairs.len() >= budget {
                break 'outer;
            }
            pairs.push((s.clone(), t.clone()));
        }
    }
    for h in count_affine_pair_images(spec, n, m, &pairs, cap)? {
        for c in h {
            worst = worst.max(c.abs_diff(want_lin));
        }
    }
    Ok(worst)
}

/// Collision counts for every `1 ≤ m ≤ n` with `p^(nm+m) ≤ 2^log2_limit`.
pub fn collision_suite(spec: FieldSpec, log2_limit: u32, seed: u64, cap: EnumerationCap) -> Result<CheckItem> {
    let limit = 1u64 << log2_limit;
    let p = spec.modulus() as u64;
    let mut margins = Vec::new();
    let mut cases = Vec::new();
    for n in 1.. {
        if crate::field::checked_pow(p, (n + 1) as u64).is_none_or(|v| v > limit) {
            break;
        }
        for m in 1..=n {
            match crate::field::checked_pow(p, (n * m + m) as u64) {
                Some(v) if v <= limit => {
                    let dev = collision_deviation(spec, n, m, seed, cap)?;
                    margins.push(-(dev as f64));
                    cases.push(format!("({n},{m})"));
                }
                _ => break,
            }
        }
    }
    Ok(CheckItem::from_margins(
        &format!("hash collision counts GF({p})"),
        &margins,
        0.0,
        format!("exact integer counts for (n,m) in {}", cases.join(" ")),
    ))
}

/// Type-class size bounds and the type probability bound for every type of
/// length `n ≤ max_n` over each source alphabet.
pub fn type_bound_suite(max_n: usize, sources: &[Distribution], cap: EnumerationCap) -> Result<CheckItem> {
    let mut margins = Vec::new();
    for p in sources {
        for n in 1..=max_n {
            for t in enumerate_types(n, p.len(), cap)? {
                let r = type_class_size_report(&t);
                let s = crate::prob::big_to_f64(&r.size);
                margins.push(if r.within_bounds() { (r.upper - s).min(s - r.lower) / r.upper } else { -1.0 });
                let b = typeclass_prob_bound(&t, p)?;
                margins.push(b.bound - b.exact);
            }
        }
    }
    Ok(CheckItem::from_margins(
        "type class size and probability bounds",
        &margins,
        1e-12,
        format!("all types up to n = {max_n}"),
    ))
}

/// Exact error probability against its type-class bound, for the identity,
/// parity and seeded random encoders.
pub fn error_bound_suite(
    spec: FieldSpec,
    max_n: usize,
    p_x: &Distribution,
    policy: DecoderPolicy,
    seed: u64,
    cap: EnumerationCap,
) -> Result<CheckItem> {
    let mut margins = Vec::new();
    let mut rng = stream_rng(seed, 7);
    for n in 1..=max_n {
        let space = SourceSpace::new(spec, n, cap)?;
        let mut encs = vec![AffineEncoder::identity(spec, n)?, AffineEncoder::parity(spec, n)?];
        for m in 1..=n {
            let (a, b) = random_affine(n, m, spec, &mut rng)?;
            encs.push(AffineEncoder::new(a, b)?);
        }
        for enc in encs {
            let dec = MinEntropyDecoder::with_space(&enc, policy, &space)?;
            let b = error_prob_type_bound(&dec, p_x, &space)?;
            margins.push(b.bound - b.exact);
        }
    }
    Ok(CheckItem::from_margins(
        "error probability below type bound",
        &margins,
        1e-12,
        format!("n = 1..{max_n}"),
    ))
}

/// The ensemble-average error bound for every type, over all `1 ≤ m ≤ n`.
pub fn ensemble_error_suite(
    spec: FieldSpec,
    ns: &[usize],
    ms: Option<&[usize]>,
    mode: EnsembleMode,
    policy: DecoderPolicy,
    cap: EnumerationCap,
) -> Result<CheckItem> {
    let mut margins = Vec::new();
    for &n in ns {
        let all: Vec<usize> = (1..=n).collect();
        for &m in ms.unwrap_or(&all) {
            let rate = m as f64 / n as f64 * spec.ln_size();
            for b in ensemble_error_bound(spec, n, m, rate, mode, policy, cap)? {
                margins.push(b.bound - (b.mean - b.half_width));
            }
        }
    }
    let label = match mode {
        EnsembleMode::Exhaustive => "exhaustive".to_string(),
        EnsembleMode::MonteCarlo { samples, .. } => format!("{samples} sampled encoders, CI-adjusted"),
    };
    Ok(CheckItem::from_margins(
        "ensemble error bound per type",
        &margins,
        0.0,
        format!("{label}, n in {ns:?}"),
    ))
}

fn random_distribution<R: Rng>(q: usize, rng: &mut R) -> Result<Distribution> {
    let mut v = Blocks(vec![q]).random_point(rng);
    // Renormalise to absorb rounding in the exponential draws.
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    Distribution::new(v)
}

/// A random small system: field GF(2) or GF(3), `n ≤ max_n`, random source,
/// side channel, affine encoder and built-in adversary.
pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize) -> Result<SystemInstance> {
    let spec = FieldSpec::new(*[2u32, 3].choose(rng).expect("nonempty"))?;
    let q = spec.size();
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=n);
    let zq = rng.gen_range(2..=3);
    let p_x = random_distribution(q, rng)?;
    let rows = (0..q)
        .map(|_| random_distribution(zq, rng))
        .collect::<Result<Vec<_>>>()?;
    let w = Channel::from_rows(rows)?;
    let (a, b) = random_affine(n, m, spec, rng)?;
    let adversary = match rng.gen_range(0..4) {
        0 => AdversaryEncoder::constant(n, zq)?,
        1 => AdversaryEncoder::identity(n, zq)?,
        2 => AdversaryEncoder::truncation(n, zq, rng.gen_range(0..=n))?,
        _ => AdversaryEncoder::type_quantizer(n, zq)?,
    };
    SystemInstance::new(spec, p_x, Distribution::uniform(q), w, AffineEncoder::new(a, b)?, adversary)
}

pub fn random_instances(count: usize, max_n: usize, seed: u64) -> Result<Vec<SystemInstance>> {
    let mut rng = stream_rng(seed, 11);
    (0..count).map(|_| random_instance(&mut rng, max_n)).collect()
}

/// Leakage below its divergence bound, and agreement of the two leakage
/// computations.
pub fn leakage_suite(instances: &[SystemInstance], cap: EnumerationCap) -> Result<Vec<CheckItem>> {
    let mut bound = Vec::new();
    let mut dual = Vec::new();
    for sys in instances {
        let r = leakage_report(sys, cap)?;
        bound.push(r.bound_margin());
        if let Some(j) = r.delta_joint {
            dual.push(1e-10 - (j - r.delta_exact).abs());
        }
    }
    Ok(vec![
        CheckItem::from_margins(
            "leakage below divergence bound",
            &bound,
            1e-10,
            format!("{} instances", instances.len()),
        ),
        CheckItem::from_margins(
            "leakage agrees across computation paths",
            &dual,
            0.0,
            format!("{} instances with a full joint", dual.len()),
        ),
    ])
}

/// Ensemble-average leakage over every `(A, b)` against `Θ` at `R = (m/n) ln p`.
pub fn ensemble_theta_suite(
    spec: FieldSpec,
    cases: &[(usize, usize)],
    w: &Channel,
    p_x: &Distribution,
    cap: EnumerationCap,
) -> Result<CheckItem> {
    let mut margins = Vec::new();
    for &(n, m) in cases {
        let adv = AdversaryEncoder::identity(n, w.outputs())?;
        let law = KeyLaw::new(spec, n, &Distribution::uniform(spec.size()), w, &adv, cap)?;
        let e = ensemble_leakage(&law, p_x, m, cap)?;
        margins.push(e.theta - e.mean_delta);
    }
    Ok(CheckItem::from_margins(
        "ensemble leakage below theta",
        &margins,
        1e-10,
        format!("(n, m) in {cases:?}"),
    ))
}

/// The tail bound on `Θ` and the event bounds for every instance and `η`,
/// with `q̂` the true joint or the product of marginals and `q_Z` the true
/// law or uniform.
pub fn tail_event_suite(instances: &[SystemInstance], etas: &[f64], cap: EnumerationCap) -> Result<Vec<CheckItem>> {
    let tol = 1e-10;
    let (mut tail, mut scaled, mut b, mut c, mut d, mut e) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    for sys in instances {
        let law = KeyLaw::of_system(sys, cap)?;
        let rate = sys.rate();
        let ra = sys.adversary.rate();
        let truth = law.joint_mzk()?;
        let product = law.product_of_marginals()?;
        let pz = law.z_distribution()?;
        let uz = Distribution::uniform(pz.len());
        for &eta in etas {
            let t = theta_tail_bound(&law, rate, eta, tol)?;
            tail.push(t.margin());
            if let Some(ok) = t.scaled_holds {
                scaled.push(if ok { 0.0 } else { -1.0 });
            }
            for q_hat in [&truth, &product] {
                for q_z in [&pz, &uz] {
                    let r = event_decomposition(&law, rate, ra, eta, q_hat, q_z)?;
                    b.push(r.tail - r.pr_b_complement);
                    c.push(r.tail - r.pr_c_complement);
                    d.push(r.tail - r.pr_d_complement);
                    e.push(r.wp_tilde - r.pr_e);
                }
            }
        }
    }
    let detail = format!("{} instances, eta in {etas:?}", instances.len());
    Ok(vec![
        CheckItem::from_margins("theta tail bound", &tail, tol, detail.clone()),
        CheckItem::from_margins("scaled theta tail bound", &scaled, 0.0, detail.clone()),
        CheckItem::from_margins("likelihood-ratio event bound", &b, tol, detail.clone()),
        CheckItem::from_margins("side-information event bound", &c, tol, detail.clone()),
        CheckItem::from_margins("message-size event bound", &d, tol, detail.clone()),
        CheckItem::from_margins("four-event probability bound", &e, tol, detail),
    ])
}

/// Structural checks on the frontier for each channel with a uniform key.
pub fn region_suite(channels: &[(String, Channel)], opts: &RegionOptions) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for (name, w) in channels {
        let pk = Distribution::uniform(w.inputs());
        let b = region_boundary(&pk, w, opts)?;
        let r = region_structure_check(&pk, w, &b, MEMBERSHIP_TOL)?;
        let mut item = CheckItem::from_margins(
            &format!("rate region structure, {name}"),
            &[
                MEMBERSHIP_TOL - (r.min_sum - r.h_k).abs(),
                if r.origin_attains_min { 0.0 } else { -1.0 },
                -r.worst_convexity_excess,
                1e-8 - r.witness_error,
            ],
            0.0,
            format!(
                "min(R_A + R) = {:.9}, H(K) = {:.9}, argmin = ({:.6}, {:.6}), convexity violations {}",
                r.min_sum, r.h_k, r.argmin.0, r.argmin.1, r.convexity_violations
            ),
        );
        item.passed = item.passed && r.passed;
        items.push(item);
    }
    Ok(items)
}

/// Scale of the `verify` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Longest block for the type, error and leakage checks.
    pub max_n: usize,
    /// Random systems for the leakage and event checks.
    pub instances: usize,
    pub etas: Vec<f64>,
    /// Collision counts run for `p^(nm+m) ≤ 2^collision_log2_limit`.
    pub collision_log2_limit: u32,
    /// Longest block for the exhaustive ensemble checks.
    pub ensemble_max_n: usize,
    pub region: bool,
    pub exponents: bool,
    pub region_options: RegionOptions,
    pub exponent_checks: crate::exponents::ExponentCheckOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        let mut exponent_checks = crate::exponents::ExponentCheckOptions {
            random_cases: 200,
            exterior_points: 5,
            ..Default::default()
        };
        exponent_checks.exponent.grid = 17;
        exponent_checks.exponent.refine_iters = 8;
        exponent_checks.exponent.search.starts = 16;
        exponent_checks.rho.mu_points = 6;
        exponent_checks.rho.lambda_points = 6;
        VerifyOptions {
            max_n: 4,
            instances: 20,
            etas: vec![0.05, 0.1, 0.2, 0.5],
            collision_log2_limit: 14,
            ensemble_max_n: 3,
            region: true,
            exponents: true,
            region_options: RegionOptions {
                grid: 21,
                ..RegionOptions::default()
            },
            exponent_checks,
        }
    }
}

/// Runs every suite for the given field, source and side channel.
pub fn run_suite(
    spec: FieldSpec,
    p_x: &Distribution,
    w: &Channel,
    policy: DecoderPolicy,
    opts: &VerifyOptions,
    seed: u64,
    cap: EnumerationCap,
) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    items.push(collision_suite(spec, opts.collision_log2_limit, seed, cap)?);
    items.push(type_bound_suite(opts.max_n, std::slice::from_ref(p_x), cap)?);
    items.push(error_bound_suite(spec, opts.max_n, p_x, policy, seed, cap)?);
    let ens_ns: Vec<usize> = (1..=opts.ensemble_max_n).collect();
    items.push(ensemble_error_suite(spec, &ens_ns, None, EnsembleMode::Exhaustive, policy, cap)?);
    let cases: Vec<(usize, usize)> = ens_ns.iter().flat_map(|&n| (1..=n).map(move |m| (n, m))).collect();
    items.push(ensemble_theta_suite(spec, &cases, w, p_x, cap)?);
    let inst = random_instances(opts.instances, opts.max_n, seed)?;
    items.extend(leakage_suite(&inst, cap)?);
    items.extend(tail_event_suite(&inst, &opts.etas, cap)?);
    if opts.region || opts.exponents {
        let pk = Distribution::uniform(spec.size());
        let b = region_boundary(&pk, w, &opts.region_options)?;
        if opts.region {
            items.extend(region_suite(&[("scenario channel".to_string(), w.clone())], &opts.region_options)?);
        }
        if opts.exponents {
            let model = crate::exponents::SideInfoModel::new(pk, w.clone())?;
            let mut p2 = opts.exponent_checks.clone();
            if p2.rate_grid.is_empty() {
                let hz = model.h_z();
                let hk = model.h_k();
                p2.rate_grid = (0..3)
                    .flat_map(|i| (0..3).map(move |j| (hz * i as f64 / 2.0, hk * j as f64 / 2.0)))
                    .collect();
            }
            let rep = crate::exponents::exponent_check_suite(&model, |ra| b.min_rate(ra), &p2)?;
            items.extend(rep.items);
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collision_counts_are_exact_for_small_cases() {
        for p in [2, 3] {
            let spec = FieldSpec::new(p).unwrap();
            let item = collision_suite(spec, 10, 0, EnumerationCap::default()).unwrap();
            assert!(item.passed, "{item:?}");
            assert!(item.cases >= 2);
        }
    }

    #[test]
    fn sampled_inputs_include_edge_cases() {
        let spec = FieldSpec::binary();
        let v = collision_inputs(spec, 12, 1 << 24, 3, true);
        assert_eq!(v.len(), 4);
        assert!(v.iter().all(|x| !x.is_zero()));
        let all = collision_inputs(spec, 3, 8, 3, true);
        assert_eq!(all.len(), 7);
    }

    #[test]
    fn random_instances_are_deterministic_and_valid() {
        let a = random_instances(8, 3, 5).unwrap();
        let b = random_instances(8, 3, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.encoder, y.encoder);
            assert_eq!(x.p_x, y.p_x);
        }
        let items = leakage_suite(&a, EnumerationCap::default()).unwrap();
        assert!(items.iter().all(|i| i.passed), "{items:?}");
        let items = tail_event_suite(&a, &[0.1, 0.5], EnumerationCap::default()).unwrap();
        assert!(items.iter().all(|i| i.passed || i.cases == 0), "{items:?}");
    }
}
