//! Derivative-free minimisation over products of probability simplices.
//!
//! The variable is a flat vector split into consecutive blocks, each block a
//! probability vector. The search moves mass between two coordinates of the
//! same block, so every iterate stays feasible without projection or
//! penalties. Step sizes halve when no move improves the objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::stream_rng;

/// Settings of the multistart pattern search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchOptions {
    /// Number of starting points (structured ones first, then random).
    pub starts: usize,
    /// Starts kept for the fine phase.
    pub refine: usize,
    pub initial_step: f64,
    /// Step at which the coarse phase stops.
    pub coarse_step: f64,
    /// Step at which the fine phase stops.
    pub min_step: f64,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            starts: 32,
            refine: 4,
            initial_step: 0.2,
            coarse_step: 1e-3,
            min_step: 1e-9,
            seed: 0,
        }
    }
}

/// Outcome of a minimisation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: u64,
    pub starts: usize,
    /// Every fine-phase result `(value, x)`, best first.
    #[serde(skip)]
    pub refined: Vec<(f64, Vec<f64>)>,
}

/// Sizes of the simplex blocks making up the variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocks(pub Vec<usize>);

impl Blocks {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut at = 0;
        for &b in &self.0 {
            out.push(at..at + b);
            at += b;
        }
        out
    }

    /// Every block uniform.
    pub fn barycenter(&self) -> Vec<f64> {
        self.0
            .iter()
            .flat_map(|&b| std::iter::repeat_n(1.0 / b as f64, b))
            .collect()
    }

    /// Block `i` drawn from a flat Dirichlet law.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.total());
        for &b in &self.0 {
            // Normalised unit exponentials are flat-Dirichlet distributed.
            let draws: Vec<f64> = (0..b).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = draws.iter().sum();
            x.extend(draws.iter().map(|d| d / s));
        }
        x
    }

    /// Renormalises each block (used to clean up user-supplied starts).
    pub fn normalise(&self, x: &mut [f64]) {
        for r in self.ranges() {
            let s: f64 = x[r.clone()].iter().map(|v| v.max(0.0)).sum();
            for v in &mut x[r] {
                *v = if s > 0.0 { v.max(0.0) / s } else { 0.0 };
            }
        }
    }
}

const IMPROVEMENT_EPS: f64 = 1e-15;

/// Compass search with mass-transfer moves from `x0` until the step falls
/// below `min_step`.
pub fn pattern_search<F: Fn(&[f64]) -> f64>(
    f: &F,
    blocks: &Blocks,
    x0: &[f64],
    initial_step: f64,
    min_step: f64,
) -> SearchResult {
    let ranges = blocks.ranges();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evals = 1u64;
    let mut step = initial_step;
    while step >= min_step {
        let mut improved = false;
        for r in &ranges {
            for i in r.clone() {
                for j in r.clone() {
                    if i == j || x[i] <= 0.0 {
                        continue;
                    }
                    let amt = step.min(x[i]);
                    let (xi, xj) = (x[i], x[j]);
                    x[i] = xi - amt;
                    x[j] = xj + (xi - x[i]);
                    let fv = f(&x);
                    evals += 1;
                    // A relative margin keeps rounding noise from counting as
                    // progress.
                    if fv < fx - IMPROVEMENT_EPS * (1.0 + fx.abs()) {
                        fx = fv;
                        improved = true;
                    } else {
                        x[i] = xi;
                        x[j] = xj;
                    }
                }
            }
        }
        if improved {
            // Successful sweeps widen the step so valleys are crossed quickly.
            step = (2.0 * step).min(initial_step.max(step));
        } else {
            step *= 0.5;
            blocks.normalise(&mut x);
            fx = f(&x);
            evals += 1;
        }
    }
    SearchResult {
        x,
        value: fx,
        evaluations: evals,
        starts: 1,
        refined: Vec::new(),
    }
}

/// Deterministic multistart: the given starts, then seeded random ones up to
/// `opts.starts`, each run to `coarse_step`; the best `opts.refine` are run
/// on to `min_step`.
pub fn multistart<F: Fn(&[f64]) -> f64>(
    f: &F,
    blocks: &Blocks,
    structured: &[Vec<f64>],
    opts: &SearchOptions,
) -> SearchResult {
    let mut rng = stream_rng(opts.seed, 0);
    let mut starts: Vec<Vec<f64>> = structured
        .iter()
        .take(opts.starts.max(1))
        .map(|s| {
            let mut s = s.clone();
            blocks.normalise(&mut s);
            s
        })
        .collect();
    while starts.len() < opts.starts.max(1) {
        starts.push(blocks.random_point(&mut rng));
    }
    let mut evals = 0u64;
    let mut coarse: Vec<SearchResult> = starts
        .iter()
        .map(|s| {
            let r = pattern_search(f, blocks, s, opts.initial_step, opts.coarse_step);
            evals += r.evaluations;
            r
        })
        .collect();
    coarse.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut fine: Vec<SearchResult> = coarse
        .iter()
        .take(opts.refine.max(1))
        .map(|c| {
            let r = pattern_search(f, blocks, &c.x, opts.coarse_step, opts.min_step);
            evals += r.evaluations;
            r
        })
        .collect();
    // Stable sort keeps the earliest start among equal values.
    fine.sort_by(|a, b| a.value.total_cmp(&b.value));
    let refined: Vec<(f64, Vec<f64>)> = fine.iter().map(|r| (r.value, r.x.clone())).collect();
    let mut best = fine.swap_remove(0);
    best.evaluations = evals;
    best.starts = starts.len();
    best.refined = refined;
    best
}

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
/// Returns the best point seen, including the end points.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut best = {
        let (fa, fb) = (f(a), f(b));
        if fa >= fb {
            (a, fa)
        } else {
            (b, fb)
        }
    };
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
        for (x, v) in [(c, fc), (d, fd)] {
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    best
}

/// Golden-section minimisation, the mirror of [`golden_max`].
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let (x, v) = golden_max(|t| -f(t), lo, hi, iters);
    (x, -v)
}
