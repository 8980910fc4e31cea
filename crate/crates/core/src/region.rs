//! The one-helper rate region and the regions built from it.
//!
//! `ℛ(p_K, W)` is the union over auxiliaries `U ↔ Z ↔ K` of
//! `{R_A ≥ I(Z;U), R ≥ H(K|U)}`. Its lower-left frontier is traced by the
//! constrained sweep `min H(K|U)` subject to `I(Z;U) ≤ r`. The secure inner
//! bound is `{R ≥ H(X)}` intersected with the closure of the complement of
//! `ℛ`, and the exponent-augmented region attaches `E` and `F` to its points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{error_exponent_e, rate_pair_uz, AuxJoint, ExponentOptions, ExponentSurface, SideInfoModel};
use crate::optimize::{multistart, Blocks, SearchOptions};
use crate::prob::{entropy, Channel, Distribution};

/// Default half-width of the boundary band, in nats.
pub const MEMBERSHIP_TOL: f64 = 1e-3;

/// Tolerance of the frontier convexity check.
pub const CONVEXITY_TOL: f64 = 1e-6;

/// `(I(Z;U), H(K|U))` with the law of `U`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePair {
    pub i_zu: f64,
    pub h_k_given_u: f64,
    pub p_u: Vec<f64>,
}

/// The corner point of `ℛ(p)` for the auxiliary defined by the channel
/// `p_{U|Z}` (Markov by construction).
pub fn region_point(witness: &Channel, p_k: &Distribution, w: &Channel) -> Result<RatePair> {
    if witness.inputs() != w.outputs() {
        return Err(Error::usage(format!(
            "witness has {} inputs but Z has {} symbols",
            witness.inputs(),
            w.outputs()
        )));
    }
    if witness.outputs() > w.outputs() + 1 {
        return Err(Error::usage(format!(
            "|U| = {} exceeds |Z| + 1 = {}",
            witness.outputs(),
            w.outputs() + 1
        )));
    }
    let model = SideInfoModel::new(p_k.clone(), w.clone())?;
    let nu = witness.outputs();
    let rows = support_rows(&model, witness);
    let r_uz = model.uz_from_rows(&rows, nu);
    let (i_zu, h) = rate_pair_uz(&model, &r_uz, nu);
    let nz = model.nz();
    let p_u = (0..nu).map(|u| (0..nz).map(|z| r_uz[u * nz + z]).sum()).collect();
    Ok(RatePair {
        i_zu,
        h_k_given_u: h,
        p_u,
    })
}

/// The corner point for an explicit joint law of `(U, Z, K)`; rejects laws
/// violating `U ↔ Z ↔ K` or disagreeing with the model.
pub fn region_point_from_joint(q: &AuxJoint, p_k: &Distribution, w: &Channel) -> Result<RatePair> {
    let model = SideInfoModel::new(p_k.clone(), w.clone())?;
    let checked = AuxJoint::new(q.nu, q.nz, q.nk, q.table.clone())?;
    checked.check_key_channel(&model)?;
    let pz = model.p_z_full()?;
    let qz = checked.q_z();
    for z in 0..qz.len() {
        if (qz[z] - pz.p(z)).abs() > crate::exponents::MARKOV_TOL {
            return Err(Error::model(format!("q_Z({z}) = {} differs from p_Z({z}) = {}", qz[z], pz.p(z))));
        }
    }
    let (i_zu, h) = checked.rate_pair();
    Ok(RatePair {
        i_zu,
        h_k_given_u: h,
        p_u: checked.q_u(),
    })
}

fn support_rows(model: &SideInfoModel, witness: &Channel) -> Vec<f64> {
    model
        .support()
        .iter()
        .flat_map(|&z| witness.row(z).probs().to_vec())
        .collect()
}

fn witness_channel(model: &SideInfoModel, rows: &[f64], nu: usize) -> Result<Channel> {
    let mut full: Vec<Vec<f64>> = (0..model.z_alphabet())
        .map(|_| {
            let mut r = vec![0.0; nu];
            r[0] = 1.0;
            r
        })
        .collect();
    for (i, &z) in model.support().iter().enumerate() {
        full[z] = rows[i * nu..(i + 1) * nu].to_vec();
    }
    Channel::new(full)
}

/// A frontier point with its witnessing auxiliary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub r_a: f64,
    pub r: f64,
    /// `p_{U|Z}` rows over the full `Z` alphabet.
    pub witness: Vec<Vec<f64>>,
    pub p_u: Vec<f64>,
}

/// Settings of the frontier sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionOptions {
    /// Number of constraint levels `r` in `[0, H(Z)]`.
    pub grid: usize,
    pub search: SearchOptions,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions {
            grid: 41,
            search: SearchOptions {
                starts: 16,
                refine: 3,
                ..SearchOptions::default()
            },
        }
    }
}

/// Pareto frontier of `ℛ(p_K, W)`, sorted by `R_A`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionBoundary {
    pub points: Vec<FrontierPoint>,
    pub grid: usize,
    pub u_size: usize,
    pub h_k: f64,
    pub h_z: f64,
    pub h_k_given_z: f64,
}

/// Mixes every row toward `p_U` until `I(Z;U) ≤ r`; `p_U` is unchanged by
/// the mixing and `I` decreases along it.
fn project_rows(model: &SideInfoModel, rows: &[f64], nu: usize, r: f64) -> Vec<f64> {
    let info = |x: &[f64]| rate_pair_uz(model, &model.uz_from_rows(x, nu), nu).0;
    if info(rows) <= r {
        return rows.to_vec();
    }
    let r_uz = model.uz_from_rows(rows, nu);
    let nz = model.nz();
    let p_u: Vec<f64> = (0..nu).map(|u| (0..nz).map(|z| r_uz[u * nz + z]).sum()).collect();
    let mix = |t: f64| -> Vec<f64> {
        rows.iter()
            .enumerate()
            .map(|(i, &v)| (1.0 - t) * v + t * p_u[i % nu])
            .collect()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if info(&mix(mid)) <= r {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    mix(hi)
}

/// Starting channels for the sweep at level `r`.
fn sweep_starts(model: &SideInfoModel, nu: usize, r: f64) -> Vec<Vec<f64>> {
    let nz = model.nz();
    let hz = model.h_z();
    let mut ident = vec![0.0; nz * nu];
    for z in 0..nz {
        ident[z * nu + z] = 1.0;
    }
    let mut out = vec![ident.clone()];
    // Erasure: U = Z with probability 1 − e, else the spare symbol.
    if hz > 0.0 {
        for e in [1.0 - (r / hz).min(1.0), 0.5 * (1.0 - (r / hz).min(1.0))] {
            let mut x = vec![0.0; nz * nu];
            for z in 0..nz {
                x[z * nu + z] = 1.0 - e;
                x[z * nu + nu - 1] += e;
            }
            out.push(x);
        }
    }
    for d in [0.1, 0.3, 0.6] {
        out.push(ident.iter().map(|v| (1.0 - d) * v + d / nu as f64).collect());
    }
    out.push(vec![1.0 / nu as f64; nz * nu]);
    out
}

/// Traces the frontier by minimising `H(K|U)` subject to `I(Z;U) ≤ r` on a
/// sweep of `r`, with `|U| = |Z| + 1`.
pub fn region_boundary(p_k: &Distribution, w: &Channel, opts: &RegionOptions) -> Result<RegionBoundary> {
    if opts.grid < 2 {
        return Err(Error::usage("region grid needs at least 2 points"));
    }
    let model = SideInfoModel::new(p_k.clone(), w.clone())?;
    let nu = model.z_alphabet() + 1;
    let nz = model.nz();
    let blocks = Blocks(vec![nu; nz]);
    let hz = model.h_z();
    let levels: Vec<f64> = (0..opts.grid).map(|i| hz * i as f64 / (opts.grid - 1) as f64).collect();
    let found: Vec<Result<FrontierPoint>> = levels
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let f = |x: &[f64]| {
                let y = project_rows(&model, x, nu, r);
                rate_pair_uz(&model, &model.uz_from_rows(&y, nu), nu).1
            };
            let search = SearchOptions {
                seed: opts.search.seed.wrapping_add(i as u64),
                ..opts.search
            };
            let res = multistart(&f, &blocks, &sweep_starts(&model, nu, r), &search);
            let rows = project_rows(&model, &res.x, nu, r);
            frontier_point(&model, &rows, nu)
        })
        .collect();
    let mut points = Vec::with_capacity(found.len() + 2);
    // Fixed corners: U constant and U = Z.
    let mut constant = vec![0.0; nz * nu];
    let mut ident = vec![0.0; nz * nu];
    for z in 0..nz {
        constant[z * nu] = 1.0;
        ident[z * nu + z] = 1.0;
    }
    points.push(frontier_point(&model, &constant, nu)?);
    points.push(frontier_point(&model, &ident, nu)?);
    for p in found {
        points.push(p?);
    }
    Ok(RegionBoundary {
        points: pareto_filter(points),
        grid: opts.grid,
        u_size: nu,
        h_k: model.h_k(),
        h_z: hz,
        h_k_given_z: model.h_k_given_z(),
    })
}

fn frontier_point(model: &SideInfoModel, rows: &[f64], nu: usize) -> Result<FrontierPoint> {
    let r_uz = model.uz_from_rows(rows, nu);
    let (i, h) = rate_pair_uz(model, &r_uz, nu);
    let nz = model.nz();
    let witness = witness_channel(model, rows, nu)?;
    Ok(FrontierPoint {
        r_a: i,
        r: h,
        witness: witness.rows().iter().map(|d| d.probs().to_vec()).collect(),
        p_u: (0..nu).map(|u| (0..nz).map(|z| r_uz[u * nz + z]).sum()).collect(),
    })
}

/// Sorts by `R_A` and drops dominated points, leaving `R` strictly
/// decreasing.
fn pareto_filter(mut points: Vec<FrontierPoint>) -> Vec<FrontierPoint> {
    points.sort_by(|a, b| a.r_a.total_cmp(&b.r_a).then(a.r.total_cmp(&b.r)));
    let mut out: Vec<FrontierPoint> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().is_none_or(|q| p.r < q.r) {
            out.push(p);
        }
    }
    out
}

impl RegionBoundary {
    /// Lower convex hull of the frontier points.
    pub fn hull(&self) -> Vec<(f64, f64)> {
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for p in &self.points {
            let c = (p.r_a, p.r);
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                if cross <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(c);
        }
        hull
    }

    /// The smallest `R` of the region at `R_A`, by interpolation on the hull
    /// (`+∞` for `R_A < 0`).
    pub fn min_rate(&self, r_a: f64) -> f64 {
        if r_a < 0.0 {
            return f64::INFINITY;
        }
        let hull = self.hull();
        for w in hull.windows(2) {
            let (a, b) = (w[0], w[1]);
            if r_a <= b.0 {
                let t = if b.0 > a.0 { (r_a - a.0) / (b.0 - a.0) } else { 1.0 };
                return a.1 + t.clamp(0.0, 1.0) * (b.1 - a.1);
            }
        }
        hull.last().map_or(f64::INFINITY, |p| p.1)
    }

    /// Middle points lying above the chord of their neighbours by more than
    /// `tol`, as `(index, excess)`.
    pub fn convexity_violations(&self, tol: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (i, w) in self.points.windows(3).enumerate() {
            let (a, b, c) = (&w[0], &w[1], &w[2]);
            let t = (b.r_a - a.r_a) / (c.r_a - a.r_a);
            let chord = a.r + t * (c.r - a.r);
            if b.r - chord > tol {
                out.push((i + 1, b.r - chord));
            }
        }
        out
    }

    /// Every point re-evaluated from its witness, as the largest deviation.
    pub fn witness_error(&self, p_k: &Distribution, w: &Channel) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for p in &self.points {
            let ch = Channel::new(p.witness.clone())?;
            let v = region_point(&ch, p_k, w)?;
            worst = worst.max((v.i_zu - p.r_a).abs()).max((v.h_k_given_u - p.r).abs());
        }
        Ok(worst)
    }
}

/// Position of a rate pair relative to the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Position {
    Inside,
    Outside,
    Boundary,
}

/// A membership decision with the tolerance that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership {
    pub position: Position,
    /// `R − min_rate(R_A)`; positive inside.
    pub gap: f64,
    pub tol: f64,
}

impl Membership {
    /// Whether the pair belongs to the closed region up to the tolerance.
    pub fn belongs(&self) -> bool {
        self.position != Position::Outside
    }
}

pub fn membership(r_a: f64, r: f64, boundary: &RegionBoundary, tol: f64) -> Membership {
    let gap = if r_a < 0.0 { f64::NEG_INFINITY } else { r - boundary.min_rate(r_a) };
    // Rates live in the nonnegative quadrant, so R_A = 0 is not an edge.
    let position = if gap > tol {
        Position::Inside
    } else if gap < -tol {
        Position::Outside
    } else {
        Position::Boundary
    };
    Membership { position, gap, tol }
}

/// Outcome of the structural checks on a computed frontier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCheckReport {
    pub h_k: f64,
    pub min_sum: f64,
    pub argmin: (f64, f64),
    /// `R_A + R` at the `R_A = 0` end of the frontier.
    pub sum_at_origin: f64,
    pub min_ok: bool,
    pub origin_attains_min: bool,
    pub sum_bound_ok: bool,
    pub convexity_violations: usize,
    pub worst_convexity_excess: f64,
    pub witness_error: f64,
    pub passed: bool,
}

/// Minimum of `R_A + R` over the frontier equals `H(K)` and is attained at
/// `(0, H(K))`; the frontier is convex; witnesses reproduce their points.
pub fn region_structure_check(p_k: &Distribution, w: &Channel, boundary: &RegionBoundary, tol: f64) -> Result<RegionCheckReport> {
    let h_k = entropy(p_k);
    let (mut min_sum, mut argmin) = (f64::INFINITY, (0.0, 0.0));
    for p in &boundary.points {
        if p.r_a + p.r < min_sum {
            min_sum = p.r_a + p.r;
            argmin = (p.r_a, p.r);
        }
    }
    let origin = boundary.points.first().map_or(f64::INFINITY, |p| p.r_a + p.r);
    let viol = boundary.convexity_violations(CONVEXITY_TOL);
    let worst = viol.iter().map(|v| v.1).fold(0.0, f64::max);
    let witness_error = boundary.witness_error(p_k, w)?;
    let min_ok = (min_sum - h_k).abs() <= tol;
    let origin_attains_min = origin - min_sum <= tol && boundary.points.first().is_some_and(|p| p.r_a.abs() <= tol);
    let sum_bound_ok = min_sum >= h_k - tol;
    Ok(RegionCheckReport {
        h_k,
        min_sum,
        argmin,
        sum_at_origin: origin,
        min_ok,
        origin_attains_min,
        sum_bound_ok,
        convexity_violations: viol.len(),
        worst_convexity_excess: worst,
        witness_error,
        passed: min_ok && origin_attains_min && sum_bound_ok && viol.is_empty() && witness_error <= 1e-8,
    })
}

/// `ℛ^(in) = {R ≥ H(X)} ∩ cl[ℛ^c]` as a predicate.
#[derive(Debug, Clone)]
pub struct InnerBound {
    pub h_x: f64,
    pub boundary: RegionBoundary,
    pub tol: f64,
}

/// One cell of the gridded indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndicatorCell {
    pub r_a: f64,
    pub r: f64,
    pub in_region: bool,
    pub in_inner_bound: bool,
}

impl InnerBound {
    pub fn new(p_x: &Distribution, boundary: RegionBoundary, tol: f64) -> Self {
        InnerBound {
            h_x: entropy(p_x),
            boundary,
            tol,
        }
    }

    /// The closure of the complement is everything not strictly inside `ℛ`.
    pub fn contains(&self, r_a: f64, r: f64) -> bool {
        r >= self.h_x && r_a >= 0.0 && membership(r_a, r, &self.boundary, self.tol).position != Position::Inside
    }

    /// Strict interior, with margin `tol` from both constraints.
    pub fn interior(&self, r_a: f64, r: f64) -> bool {
        r > self.h_x + self.tol && r_a >= 0.0 && membership(r_a, r, &self.boundary, self.tol).position == Position::Outside
    }

    /// Indicator on a `steps × steps` grid of `[0, ra_max] × [0, r_max]`.
    pub fn indicator(&self, ra_max: f64, r_max: f64, steps: usize) -> Vec<IndicatorCell> {
        let s = steps.max(2);
        let mut out = Vec::with_capacity(s * s);
        for i in 0..s {
            for j in 0..s {
                let r_a = ra_max * i as f64 / (s - 1) as f64;
                let r = r_max * j as f64 / (s - 1) as f64;
                out.push(IndicatorCell {
                    r_a,
                    r,
                    in_region: membership(r_a, r, &self.boundary, self.tol).belongs(),
                    in_inner_bound: self.contains(r_a, r),
                });
            }
        }
        out
    }
}

/// A point of the inner bound with both exponents attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DPoint {
    pub r_a: f64,
    pub r: f64,
    pub e: f64,
    pub f: f64,
    pub interior: bool,
    /// Re-evaluation reproduces `E` and `F` within `1e-8`.
    pub consistent: bool,
}

/// The points of `𝒟^(in)` with the positivity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DRegion {
    pub points: Vec<DPoint>,
    /// Interior points where `E` or `F` is not positive.
    pub positivity_violations: usize,
    pub inconsistent: usize,
}

/// Attaches `E(R|p_X)` and `F(R_A, R|p_K, W)` to every grid point of the
/// inner bound. Interior points must have both exponents positive.
pub fn d_region_points(
    p_x: &Distribution,
    model: &SideInfoModel,
    inner: &InnerBound,
    surface: &ExponentSurface,
    grid: &[(f64, f64)],
    opts: &ExponentOptions,
) -> Result<DRegion> {
    let mut points = Vec::new();
    let mut violations = 0;
    let mut inconsistent = 0;
    for &(r_a, r) in grid {
        if !inner.contains(r_a, r) {
            continue;
        }
        let e = error_exponent_e(r, p_x)?.value;
        let f = surface.evaluate(model, r_a, r, opts)?;
        let again = error_exponent_e(r, p_x)?.value;
        let consistent = (again - e).abs() <= 1e-8 && (f.reproduce(model) - f.value).abs() <= 1e-8;
        let interior = inner.interior(r_a, r);
        if interior && !(e > 0.0 && f.value > 0.0) {
            violations += 1;
        }
        if !consistent {
            inconsistent += 1;
        }
        points.push(DPoint {
            r_a,
            r,
            e,
            f: f.value,
            interior,
            consistent,
        });
    }
    Ok(DRegion {
        points,
        positivity_violations: violations,
        inconsistent,
    })
}
