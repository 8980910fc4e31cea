//! Batch command line: one TOML config in, `results.csv`, `results.json` and
//! `report.txt` out.
//!
//! Exit codes: 0 success, 1 invariant violation, 2 config or usage error,
//! 3 enumeration cap exceeded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::code::{error_prob_exact, AffineEncoder, MinEntropyDecoder, SourceSpace};
use crate::config::{EncoderSet, ExperimentConfig, Scenario};
use crate::error::{Error, Result};
use crate::exponents::{error_exponent_e, ExponentResult, ExponentSurface, Family, SideInfoModel};
use crate::field::exhaust_affine;
use crate::region::{membership, region_boundary, region_structure_check, InnerBound};
use crate::system::{
    event_decomposition, leakage_report, simulate, theta_tail_bound, KeyLaw, SystemInstance,
};
use crate::verify::{run_suite, CheckItem};

/// Tolerance for the exact inequalities reported by `leakage`.
const EXACT_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "ampcipher", version, about = "Privacy-amplified cipher under side-channel leakage")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the invariant suite; exits 1 on any violation.
    Verify(RunArgs),
    /// Monte Carlo decoding error next to the exact value.
    Simulate(RunArgs),
    /// Exact leakage, its bounds and the event probabilities.
    Leakage(RunArgs),
    /// Error and secrecy exponents on a rate grid.
    Exponent(RunArgs),
    /// Frontier of the one-helper rate region and membership queries.
    Region(RunArgs),
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; overrides the config.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Show entropies and rates in bits in report.txt (files stay in nats).
    #[arg(long)]
    pub bits: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Verify(_) => "verify",
            Command::Simulate(_) => "simulate",
            Command::Leakage(_) => "leakage",
            Command::Exponent(_) => "exponent",
            Command::Region(_) => "region",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Verify(a)
            | Command::Simulate(a)
            | Command::Leakage(a)
            | Command::Exponent(a)
            | Command::Region(a) => a,
        }
    }
}

/// Tabular and structured output of one command.
#[derive(Debug, Default)]
pub struct Output {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub results: serde_json::Value,
    pub report: String,
    /// An invariant failed; the process exits with 1.
    pub violation: bool,
}

/// Formats a number with 12 significant digits, independent of locale.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{exp}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(";")
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("results serialise")
}

/// Unit conversion for report.txt only.
pub struct Units {
    scale: f64,
    name: &'static str,
}

impl Units {
    pub fn new(bits: bool) -> Self {
        if bits {
            Units {
                scale: 1.0 / std::f64::consts::LN_2,
                name: "bits",
            }
        } else {
            Units { scale: 1.0, name: "nats" }
        }
    }

    pub fn show(&self, x: f64) -> String {
        fmt_num(x * self.scale)
    }
}

/// Parses arguments, runs the command and writes the artifacts. Returns the
/// process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let args = cli.command.args().clone();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(Error::usage("--workers must be positive"));
        }
        cfg.workers = Some(w);
    }
    let scenario = cfg.validate()?;
    if let Some(w) = cfg.workers {
        // A pool built earlier in the same process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let units = Units::new(args.bits);
    let command = cli.command.name();
    let out = match cli.command {
        Command::Verify(_) => cmd_verify(&cfg, &scenario)?,
        Command::Simulate(_) => cmd_simulate(&cfg, &scenario)?,
        Command::Leakage(_) => cmd_leakage(&cfg, &scenario, &units)?,
        Command::Exponent(_) => cmd_exponent(&cfg, &scenario, &units)?,
        Command::Region(_) => cmd_region(&cfg, &scenario, &units)?,
    };
    write_outputs(&args.out, command, &cfg, &out)?;
    print!("{}", out.report);
    Ok(if out.violation { 1 } else { 0 })
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::usage(format!("cannot write {}: {e}", path.display()))
}

fn write_outputs(dir: &Path, command: &str, cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let hash = cfg.hash();

    let csv_path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::usage(format!("{}: {e}", csv_path.display())))?;
    let csv_err = |e: csv::Error| Error::usage(format!("{}: {e}", csv_path.display()));
    let mut header = vec!["config_hash"];
    header.extend(&out.header);
    w.write_record(&header).map_err(csv_err)?;
    for row in &out.rows {
        w.write_record(std::iter::once(hash.as_str()).chain(row.iter().map(String::as_str)))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(&csv_path, e))?;

    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": hash,
        "seed": cfg.seed,
        "config": cfg,
        "results": out.results,
    });
    let json_path = dir.join("results.json");
    let text = serde_json::to_string_pretty(&doc).expect("results serialise") + "\n";
    std::fs::write(&json_path, text).map_err(|e| io_err(&json_path, e))?;

    let report_path = dir.join("report.txt");
    let report = format!("ampcipher {command} (config {hash})\n{}", out.report);
    std::fs::write(&report_path, report).map_err(|e| io_err(&report_path, e))
}

/// The scenario's encoders, enumerating the ensemble when requested.
fn encoders(s: &Scenario, cfg: &ExperimentConfig) -> Result<Vec<AffineEncoder>> {
    match &s.encoders {
        EncoderSet::Single(e) => Ok(vec![e.clone()]),
        EncoderSet::Exhaustive => exhaust_affine(s.n, s.m, s.spec, cfg.cap())?
            .iter()
            .map(|(a, b)| AffineEncoder::new(a, b))
            .collect(),
    }
}

fn instance(s: &Scenario, enc: AffineEncoder) -> Result<SystemInstance> {
    SystemInstance::new(s.spec, s.p_x.clone(), s.p_k.clone(), s.w.clone(), enc, s.adversary.clone())
}

fn status(item: &CheckItem) -> &'static str {
    if item.passed {
        "pass"
    } else if item.informational {
        "info"
    } else if item.known_deviation.is_some() {
        "known-deviation"
    } else {
        "FAIL"
    }
}

pub fn cmd_verify(cfg: &ExperimentConfig, s: &Scenario) -> Result<Output> {
    let opts = cfg.verify.clone().unwrap_or_default();
    let items = run_suite(s.spec, &s.p_x, &s.w, s.policy, &opts, cfg.seed.unwrap_or(0), cfg.cap())?;
    let mut report = String::new();
    let mut rows = Vec::new();
    for it in &items {
        let st = status(it);
        let _ = writeln!(
            report,
            "{st:<16} {:<58} worst margin {:>20}  cases {:>6}  {}",
            it.name,
            fmt_num(it.worst_margin),
            it.cases,
            it.detail
        );
        if let Some(note) = &it.known_deviation {
            let _ = writeln!(report, "{:<16} note: {note}", "");
        }
        rows.push(vec![
            it.name.clone(),
            st.to_string(),
            fmt_num(it.worst_margin),
            it.cases.to_string(),
            it.detail.clone(),
        ]);
    }
    let violation = items.iter().any(CheckItem::gates);
    let _ = writeln!(
        report,
        "{} checks, {} gating failures",
        items.len(),
        items.iter().filter(|i| i.gates()).count()
    );
    Ok(Output {
        header: vec!["check", "status", "worst_margin", "cases", "detail"],
        rows,
        results: json!({ "options": opts, "checks": items }),
        report,
        violation,
    })
}

pub fn cmd_simulate(cfg: &ExperimentConfig, s: &Scenario) -> Result<Output> {
    let seed = cfg.require_seed("simulate")?;
    let trials = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::config("simulate", "missing [simulate] table"))?
        .trials;
    let space = SourceSpace::new(s.spec, s.n, cfg.cap())?;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut report = String::new();
    for (i, enc) in encoders(s, cfg)?.into_iter().enumerate() {
        let sys = instance(s, enc)?;
        let sim = simulate(&sys, s.policy, trials, seed, cfg.cap())?;
        let dec = MinEntropyDecoder::with_space(&sys.encoder, s.policy, &space)?;
        let exact = error_prob_exact(&dec, &s.p_x, &space)?;
        let text = sys.encoder.to_text();
        let _ = writeln!(
            report,
            "encoder {i} [{text}]: p_e ≈ {} ({} / {}), 95% CI [{}, {}], exact {}",
            fmt_num(sim.p_e),
            sim.errors,
            sim.trials,
            fmt_num(sim.ci_low),
            fmt_num(sim.ci_high),
            fmt_num(exact)
        );
        rows.push(vec![
            i.to_string(),
            text.clone(),
            s.n.to_string(),
            sys.m().to_string(),
            fmt_num(sys.rate()),
            sim.trials.to_string(),
            sim.errors.to_string(),
            fmt_num(sim.p_e),
            fmt_num(sim.ci_low),
            fmt_num(sim.ci_high),
            fmt_num(exact),
        ]);
        results.push(json!({ "encoder": text, "simulation": sim, "p_e_exact": exact }));
    }
    Ok(Output {
        header: vec![
            "encoder_index", "encoder", "n", "m", "rate", "trials", "errors", "p_e", "ci_low", "ci_high",
            "p_e_exact",
        ],
        rows,
        results: json!({ "seed": seed, "trials": trials, "policy": s.policy, "encoders": results }),
        report,
        violation: false,
    })
}

pub fn cmd_leakage(cfg: &ExperimentConfig, s: &Scenario, u: &Units) -> Result<Output> {
    let etas = cfg.leakage.clone().unwrap_or_default().etas;
    let law = KeyLaw::new(s.spec, s.n, &s.p_k, &s.w, &s.adversary, cfg.cap())?;
    let truth = law.joint_mzk()?;
    let p_z = law.z_distribution()?;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut report = String::new();
    let mut violation = false;
    for (i, enc) in encoders(s, cfg)?.into_iter().enumerate() {
        let sys = instance(s, enc)?;
        let rep = leakage_report(&sys, cfg.cap())?;
        let text = sys.encoder.to_text();
        violation |= rep.bound_margin() < -EXACT_TOL;
        let _ = writeln!(
            report,
            "encoder {i} [{text}]: leakage {} {}, divergence bound {}, theta {}",
            u.show(rep.delta_exact),
            u.name,
            u.show(rep.divergence_bound),
            u.show(rep.theta_bound)
        );
        let mut per_eta = Vec::new();
        for &eta in &etas {
            let t = theta_tail_bound(&law, sys.rate(), eta, EXACT_TOL)?;
            let ev = event_decomposition(&law, sys.rate(), sys.adversary.rate(), eta, &truth, &p_z)?;
            violation |= t.margin() < -EXACT_TOL || ev.worst_margin() < -EXACT_TOL;
            rows.push(vec![
                i.to_string(),
                text.clone(),
                rep.n.to_string(),
                rep.m.to_string(),
                fmt_num(rep.rate),
                rep.strategy.clone(),
                fmt_num(rep.adversary_rate),
                fmt_num(rep.delta_exact),
                fmt_opt(rep.delta_joint),
                fmt_num(rep.divergence_bound),
                fmt_num(rep.theta_bound),
                fmt_num(eta),
                fmt_num(t.wp),
                fmt_num(t.bound),
                fmt_num(ev.pr_b_complement),
                fmt_num(ev.pr_c_complement),
                fmt_num(ev.pr_d_complement),
                fmt_num(ev.pr_e),
                fmt_num(ev.wp_tilde),
            ]);
            let _ = writeln!(
                report,
                "  eta {}: theta tail bound {} (margin {}), event bound worst margin {}",
                fmt_num(eta),
                fmt_num(t.bound),
                fmt_num(t.margin()),
                fmt_num(ev.worst_margin())
            );
            per_eta.push(json!({ "eta": eta, "tail": t, "events": ev }));
        }
        results.push(json!({ "encoder": text, "leakage": rep, "tail": per_eta }));
    }
    if violation {
        let _ = writeln!(report, "an exact bound was violated");
    }
    Ok(Output {
        header: vec![
            "encoder_index", "encoder", "n", "m", "rate", "adversary", "adversary_rate", "leakage",
            "leakage_joint", "divergence_bound", "theta", "eta", "wp", "theta_tail_bound", "pr_b_complement",
            "pr_c_complement", "pr_d_complement", "pr_e", "wp_tilde",
        ],
        rows,
        results: json!({ "etas": etas, "encoders": results }),
        report,
        violation,
    })
}

fn exponent_cells(r: Option<&ExponentResult>) -> [String; 4] {
    match r {
        Some(r) => [fmt_num(r.value), fmt_num(r.mu), fmt_num(r.second), fmt_num(r.inner_value)],
        None => Default::default(),
    }
}

pub fn cmd_exponent(cfg: &ExperimentConfig, s: &Scenario, u: &Units) -> Result<Output> {
    let ec = cfg
        .exponent
        .clone()
        .ok_or_else(|| Error::config("exponent", "missing [exponent] table"))?;
    let model = SideInfoModel::new(s.p_k.clone(), s.w.clone())?;
    let opts = ec.options;
    let omega = ExponentSurface::compute(&model, Family::Omega, &opts)?;
    let tilde = if ec.tilde {
        Some(ExponentSurface::compute(&model, Family::Tilde, &opts)?)
    } else {
        None
    };
    let mut pairs: Vec<(f64, f64)> = ec.rates.iter().map(|&r| (s.r_a.unwrap_or(0.0), r)).collect();
    pairs.extend(&ec.points);
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut report = String::new();
    for (ra, r) in pairs {
        let e = error_exponent_e(r, &s.p_x)?;
        let f = omega.evaluate(&model, ra, r, &opts)?;
        let ft = tilde.as_ref().map(|t| t.evaluate(&model, ra, r, &opts)).transpose()?;
        let _ = writeln!(
            report,
            "R_A {} R {} ({}): E {}  F {}{}",
            u.show(ra),
            u.show(r),
            u.name,
            fmt_num(e.value),
            fmt_num(f.value),
            ft.as_ref().map(|t| format!("  F~ {}", fmt_num(t.value))).unwrap_or_default()
        );
        let mut row = vec![fmt_num(ra), fmt_num(r), fmt_num(e.value), fmt_vec(&e.argmin)];
        row.extend(exponent_cells(Some(&f)));
        row.extend(exponent_cells(ft.as_ref()));
        rows.push(row);
        results.push(json!({ "r_a": ra, "r": r, "e": e, "f": f, "f_tilde": ft }));
    }
    Ok(Output {
        header: vec![
            "r_a", "r", "e", "e_argmin", "f", "f_mu", "f_alpha", "f_inner", "f_tilde", "f_tilde_mu",
            "f_tilde_lambda", "f_tilde_inner",
        ],
        rows,
        results: json!({ "options": opts, "points": results }),
        report,
        violation: false,
    })
}

pub fn cmd_region(cfg: &ExperimentConfig, s: &Scenario, u: &Units) -> Result<Output> {
    let rc = cfg.region.clone().unwrap_or_default();
    let boundary = region_boundary(&s.p_k, &s.w, &rc.options)?;
    let check = region_structure_check(&s.p_k, &s.w, &boundary, rc.tol)?;
    let mut rows = Vec::new();
    let mut report = String::new();
    let _ = writeln!(
        report,
        "frontier of {} points ({}): H(K) {}, H(Z) {}, H(K|Z) {}",
        boundary.points.len(),
        u.name,
        u.show(boundary.h_k),
        u.show(boundary.h_z),
        u.show(boundary.h_k_given_z)
    );
    for p in &boundary.points {
        rows.push(vec![
            "frontier".into(),
            fmt_num(p.r_a),
            fmt_num(p.r),
            String::new(),
            String::new(),
            String::new(),
        ]);
        let _ = writeln!(report, "  ({}, {})", u.show(p.r_a), u.show(p.r));
    }
    let mut queries = Vec::new();
    for &(ra, r) in &rc.points {
        let m = membership(ra, r, &boundary, rc.tol);
        let pos = serde_json::to_value(m.position).expect("position serialises");
        let pos = pos.as_str().unwrap_or_default().to_string();
        let _ = writeln!(report, "point ({}, {}): {pos}, gap {}", u.show(ra), u.show(r), fmt_num(m.gap));
        rows.push(vec!["query".into(), fmt_num(ra), fmt_num(r), pos, fmt_num(m.gap), String::new()]);
        queries.push(json!({ "r_a": ra, "r": r, "membership": m }));
    }
    let mut cells = Vec::new();
    if rc.indicator_steps > 0 {
        let inner = InnerBound::new(&s.p_x, boundary.clone(), rc.tol);
        cells = inner.indicator(boundary.h_z, boundary.h_k.max(inner.h_x) * 1.25, rc.indicator_steps);
        for c in &cells {
            rows.push(vec![
                "indicator".into(),
                fmt_num(c.r_a),
                fmt_num(c.r),
                if c.in_region { "in-region" } else { "outside" }.into(),
                String::new(),
                u8::from(c.in_inner_bound).to_string(),
            ]);
        }
    }
    let _ = writeln!(
        report,
        "structure: min(R_A + R) {} vs H(K) {}, convexity violations {}, witness error {} -> {}",
        u.show(check.min_sum),
        u.show(check.h_k),
        check.convexity_violations,
        fmt_num(check.witness_error),
        if check.passed { "pass" } else { "FAIL" }
    );
    Ok(Output {
        header: vec!["kind", "r_a", "r", "position", "gap", "inner_bound"],
        rows,
        results: json!({
            "options": rc.options,
            "tol": rc.tol,
            "boundary": to_json(&boundary),
            "structure": check,
            "queries": queries,
            "indicator": cells,
        }),
        report,
        violation: !check.passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_use_twelve_significant_digits() {
        assert_eq!(fmt_num(std::f64::consts::LN_2), "0.69314718056");
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(-3.0), "-3");
        assert_eq!(fmt_num(1.0 / 3.0 * 1e-7), "3.33333333333e-8");
        assert_eq!(fmt_num(123456789012345.0), "1.23456789012e14");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }
}
