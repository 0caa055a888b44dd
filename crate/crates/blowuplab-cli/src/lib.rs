//! Command implementations behind the `blowuplab` binary.

pub mod config;
mod output;

use std::path::{Path, PathBuf};

use serde::Serialize;

use blowuplab::ansatz::{assemble_ansatz, f, zero_coefficients, Ansatz};
use blowuplab::bubble_tree::{classify_all, TreeAnalysis};
use blowuplab::estimate_verifier::{check_estimate, summarize_sweep, EstimateId, EstimateReport, SweepSummary};
use blowuplab::fixed_point::{run_reduction, verify_c0, C0Report, FixedPointResult};
use blowuplab::linear_solver::solve_projected;
use blowuplab::manifold::Field;
use blowuplab::Error;

pub use config::{build_setup, RunConfig, Setup};
pub use output::{round_sig, write_csv, write_json};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{failed} estimate report(s) failed")]
    EstimatesFailed { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Io(_) | CliError::Usage(_) => 1,
            CliError::EstimatesFailed { .. } => 4,
            CliError::Lib(e) => match e {
                Error::Convergence { .. } | Error::Coercivity(_) | Error::NoContraction { .. } => 3,
                Error::EstimateViolation { .. } => 4,
                Error::Resolution { .. } => 5,
                _ => 2,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Command-line overrides shared by every command.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub alphas: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

/// Loads a configuration and applies overrides; returns it with its directory.
pub fn load(config_path: &Path, opts: &RunOptions) -> Result<(RunConfig, PathBuf, PathBuf), CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(a) = &opts.alphas {
        cfg.alphas = a.clone();
    }
    if opts.seed.is_some() {
        cfg.seed = opts.seed;
    }
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = opts.out.clone().or_else(|| cfg.output.as_ref().map(|p| base.join(p))).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    Ok((cfg, base, out))
}

#[derive(Debug, Clone, Serialize)]
struct BubbleOut {
    index: usize,
    mu: f64,
    rate: f64,
    center: Vec<f64>,
    lower: Vec<usize>,
    interaction_radii: Vec<f64>,
    influence_radius: f64,
    higher: Vec<usize>,
    neck_radii: Vec<f64>,
    cluster: Vec<usize>,
    height: usize,
}

#[derive(Debug, Clone, Serialize)]
struct TreeOut {
    alpha: f64,
    r0: f64,
    /// 1-based bubble indices per height, slowest first.
    heights: Vec<Vec<usize>>,
    b0_indicator: bool,
    bubbles: Vec<BubbleOut>,
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn tree_out(t: &TreeAnalysis) -> TreeOut {
    TreeOut {
        alpha: t.alpha,
        r0: t.r0,
        heights: t.heights.iter().map(|h| one_based(h)).collect(),
        b0_indicator: t.b0_indicator,
        bubbles: t
            .bubbles
            .iter()
            .enumerate()
            .map(|(i, b)| BubbleOut {
                index: i + 1,
                mu: b.mu,
                rate: b.rate,
                center: b.center.clone(),
                lower: one_based(&b.lower),
                interaction_radii: b.interaction_radii.clone(),
                influence_radius: b.influence_radius,
                higher: one_based(&b.higher),
                neck_radii: b.neck_radii.clone(),
                cluster: one_based(&b.cluster),
                height: b.height,
            })
            .collect(),
    }
}

fn join_ids(v: &[usize]) -> String {
    v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(";")
}

/// `tree.json` (one record per α) and `tree.csv`
/// (`alpha,bubble,mu,rate,height,influence_radius,lower,higher`).
pub fn cmd_analyze_tree(config_path: &Path, opts: &RunOptions) -> Result<Vec<TreeAnalysis>, CliError> {
    let (cfg, base, out) = load(config_path, opts)?;
    let setup = build_setup(&cfg, &base)?;
    let trees = classify_all(&setup.sequence)?;
    let records: Vec<TreeOut> = trees.iter().map(tree_out).collect();
    write_json(&out.join("tree.json"), &records)?;
    let mut rows = Vec::new();
    for t in &trees {
        for (i, b) in t.bubbles.iter().enumerate() {
            rows.push(vec![
                output::num(t.alpha),
                (i + 1).to_string(),
                output::num(b.mu),
                output::num(b.rate),
                b.height.to_string(),
                output::num(b.influence_radius),
                join_ids(&b.lower),
                join_ids(&b.higher),
            ]);
        }
    }
    write_csv(
        &out.join("tree.csv"),
        &["alpha", "bubble", "mu", "rate", "height", "influence_radius", "lower", "higher"],
        &rows,
    )?;
    Ok(trees)
}

/// Right-hand sides for `solve-linear`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsSpec {
    Zero,
    /// `(Δ+1)Z_{i,j}`, 1-based bubble `i` (0 for the background kernel) and element `j`.
    KernelShift(usize, usize),
    /// `α^{-1}B_i^{2*-1}`, 1-based `i`.
    BubblePower(usize),
    /// `f(𝒲) - Σf(V_i)`.
    CrossTerms,
}

impl std::str::FromStr for RhsSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("invalid rhs spec `{s}`"));
        let idx = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        match s.split_once(':') {
            None if s == "zero" => Ok(RhsSpec::Zero),
            None if s == "cross_terms" => Ok(RhsSpec::CrossTerms),
            Some(("kernel_shift", rest)) => {
                let (i, j) = rest.split_once(',').ok_or_else(bad)?;
                let j = idx(j)?;
                if j == 0 {
                    return Err(bad());
                }
                Ok(RhsSpec::KernelShift(idx(i)?, j))
            }
            Some(("bubble_power", rest)) => match idx(rest)? {
                0 => Err(bad()),
                i => Ok(RhsSpec::BubblePower(i)),
            },
            _ => Err(bad()),
        }
    }
}

fn build_rhs(setup: &Setup, ansatz: &Ansatz, spec: RhsSpec) -> Result<Field, CliError> {
    let m = &setup.manifold;
    let n = ansatz.n;
    Ok(match spec {
        RhsSpec::Zero => m.zeros(),
        RhsSpec::KernelShift(i, j) => {
            let block = ansatz.kernel_lifts.get(i).ok_or(Error::IndexOutOfRange { index: i, len: ansatz.kernel_lifts.len() })?;
            let z = block.get(j - 1).ok_or(Error::IndexOutOfRange { index: j, len: block.len() })?;
            m.helmholtz(z, 1.0)?
        }
        RhsSpec::BubblePower(i) => {
            let b = ansatz.b_fields.get(i - 1).ok_or(Error::IndexOutOfRange { index: i, len: ansatz.b_fields.len() })?;
            let p = (n as f64 + 2.0) / (n as f64 - 2.0);
            b.map(|v| v.powf(p) / ansatz.alpha)
        }
        RhsSpec::CrossTerms => {
            let mut r = ansatz.total.map(|w| f(w, n));
            for v in &ansatz.bubbles {
                r = r.sub(&v.map(|s| f(s, n)));
            }
            r
        }
    })
}

fn ansatz_at(setup: &Setup, tree: &TreeAnalysis) -> Result<Ansatz, CliError> {
    let coeffs = zero_coefficients(&setup.sequence, &setup.background);
    Ok(assemble_ansatz(&setup.manifold, &setup.sequence, tree, &setup.background, &coeffs, None)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearRecord {
    pub alpha: f64,
    pub rhs: String,
    pub phi_max: f64,
    pub h1_norm: f64,
    /// `max |φ|/Σ_{i≥0}B_i`.
    pub weighted_max: f64,
    /// Blocks: background kernel first, then bubbles in order.
    pub multipliers: Vec<Vec<f64>>,
    pub multiplier_sum: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// `linear.json` and `linear.csv`
/// (`alpha,phi_max,h1_norm,weighted_max,multiplier_sum,iterations,residual`).
pub fn cmd_solve_linear(config_path: &Path, rhs: Option<&str>, opts: &RunOptions) -> Result<Vec<LinearRecord>, CliError> {
    let (cfg, base, out) = load(config_path, opts)?;
    let spec_text = rhs.map(str::to_string).or_else(|| cfg.rhs.clone()).unwrap_or_else(|| "zero".into());
    let spec: RhsSpec = spec_text.parse()?;
    let setup = build_setup(&cfg, &base)?;
    let trees = classify_all(&setup.sequence)?;
    let solver = cfg.solver_options();
    let m = &setup.manifold;
    let mut records = Vec::new();
    for t in &trees {
        let ansatz = ansatz_at(&setup, t)?;
        let r = build_rhs(&setup, &ansatz, spec)?;
        let sol = solve_projected(m, &ansatz, &setup.h_alpha(t.alpha), &r, &solver)?;
        let b0 = if ansatz.b0_indicator { 1.0 } else { 0.0 };
        let weighted_max = (0..sol.phi.len())
            .map(|k| sol.phi.values()[k].abs() / (b0 + ansatz.b_fields.iter().map(|b| b.values()[k]).sum::<f64>()))
            .fold(0.0, f64::max);
        records.push(LinearRecord {
            alpha: t.alpha,
            rhs: spec_text.clone(),
            phi_max: sol.phi.max_abs(),
            h1_norm: m.h1_inner(&sol.phi, &sol.phi)?.max(0.0).sqrt(),
            weighted_max,
            multiplier_sum: sol.multiplier_sum(),
            multipliers: sol.multipliers,
            iterations: sol.iterations,
            residual: sol.residual,
        });
    }
    write_json(&out.join("linear.json"), &records)?;
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                output::num(r.alpha),
                output::num(r.phi_max),
                output::num(r.h1_norm),
                output::num(r.weighted_max),
                output::num(r.multiplier_sum),
                r.iterations.to_string(),
                output::num(r.residual),
            ]
        })
        .collect();
    write_csv(
        &out.join("linear.csv"),
        &["alpha", "phi_max", "h1_norm", "weighted_max", "multiplier_sum", "iterations", "residual"],
        &rows,
    )?;
    Ok(records)
}

/// Outcome of the reduction at one α.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionRecord {
    pub alpha: f64,
    pub mu_min: f64,
    pub status: String,
    pub result: Option<FixedPointResult>,
}

fn status_name(e: &Error) -> &'static str {
    match e {
        Error::NoContraction { .. } => "no_contraction",
        Error::Convergence { .. } => "no_convergence",
        Error::Coercivity(_) => "coercivity",
        Error::EstimateViolation { .. } => "estimate_violation",
        Error::Resolution { .. } => "resolution",
        _ => "error",
    }
}

/// Runs the reduction at every α; failures are recorded and the first is returned.
fn reductions(setup: &Setup, cfg: &RunConfig) -> Result<(Vec<ReductionRecord>, Option<Error>), CliError> {
    let trees = classify_all(&setup.sequence)?;
    let fp = cfg.fixed_point_config();
    let m = &setup.manifold;
    let mut records = Vec::new();
    let mut first = None;
    for t in &trees {
        let ansatz = ansatz_at(setup, t)?;
        let h = setup.h_alpha(t.alpha);
        let outcome = blowuplab::linear_solver::check_resolution(m, &ansatz.scales, fp.solver.min_resolved_spacings)
            .and_then(|_| run_reduction(m, &ansatz, &setup.background, &h, t, &fp));
        let mu_min = ansatz.scales.iter().copied().fold(f64::INFINITY, f64::min);
        match outcome {
            Ok(r) => records.push(ReductionRecord { alpha: t.alpha, mu_min, status: "ok".into(), result: Some(r) }),
            Err(e) => {
                records.push(ReductionRecord { alpha: t.alpha, mu_min, status: status_name(&e).into(), result: None });
                first.get_or_insert(e);
            }
        }
    }
    Ok((records, first))
}

const E_COLUMNS: [&str; 8] = ["alpha", "mu_min", "status", "iterations", "star_norm", "h1_norm", "in_S_alpha", "E_alpha"];

fn e_rows(records: &[ReductionRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            let mut row = vec![output::num(r.alpha), output::num(r.mu_min), r.status.clone()];
            match &r.result {
                Some(x) => row.extend([
                    x.picard_iterations.to_string(),
                    output::num(x.star_norm),
                    output::num(x.h1_norm),
                    x.in_s_alpha.to_string(),
                    output::num(x.e_alpha),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
            row
        })
        .collect()
}

/// `reduction.json` (full per-α results) and `reduction.csv`
/// (`alpha,mu_min,status,iterations,star_norm,h1_norm,in_S_alpha,E_alpha`).
pub fn cmd_run_reduction(config_path: &Path, opts: &RunOptions) -> Result<Vec<ReductionRecord>, CliError> {
    let (cfg, base, out) = load(config_path, opts)?;
    let setup = build_setup(&cfg, &base)?;
    let (records, first) = reductions(&setup, &cfg)?;
    write_json(&out.join("reduction.json"), &records)?;
    write_csv(&out.join("reduction.csv"), &E_COLUMNS, &e_rows(&records))?;
    match first {
        Some(e) => Err(e.into()),
        None => Ok(records),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub records: Vec<ReductionRecord>,
    /// Present when every α converged.
    pub c0: Option<C0Report>,
}

/// `e_alpha.csv` (same columns as `reduction.csv`) and `sweep.json` with the
/// C⁰ verdict over the sweep.
pub fn cmd_sweep(config_path: &Path, opts: &RunOptions) -> Result<SweepReport, CliError> {
    let (cfg, base, out) = load(config_path, opts)?;
    let setup = build_setup(&cfg, &base)?;
    let (records, first) = reductions(&setup, &cfg)?;
    let results: Option<Vec<FixedPointResult>> = records.iter().map(|r| r.result.clone()).collect();
    let report = SweepReport { c0: results.map(|r| verify_c0(&r)), records };
    write_csv(&out.join("e_alpha.csv"), &E_COLUMNS, &e_rows(&report.records))?;
    write_json(&out.join("sweep.json"), &report)?;
    match first {
        Some(e) => Err(e.into()),
        None => Ok(report),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub reports: Vec<EstimateReport>,
    pub summaries: Vec<SweepSummary>,
}

/// `verify.json` and `verify.csv`
/// (`alpha,estimate,label,point,lhs,rhs,ratio,normalized`, one row per sample).
pub fn cmd_verify(config_path: &Path, ids: Option<&[String]>, opts: &RunOptions) -> Result<VerifyReport, CliError> {
    let (cfg, base, out) = load(config_path, opts)?;
    let names: Vec<String> = match ids {
        Some(v) if !v.is_empty() => v.to_vec(),
        _ => cfg.verify.estimates.clone(),
    };
    let ids: Vec<EstimateId> = if names.is_empty() {
        EstimateId::ALL.to_vec()
    } else {
        names.iter().map(|s| s.parse::<EstimateId>().map_err(|e| CliError::Usage(e.to_string()))).collect::<Result<_, _>>()?
    };
    let setup = build_setup(&cfg, &base)?;
    let trees = classify_all(&setup.sequence)?;
    let vopts = cfg.verifier_options();
    let m = &setup.manifold;
    let need_ansatz = ids.iter().any(|id| id.needs_ansatz());
    let mut by_id: Vec<Vec<EstimateReport>> = vec![Vec::new(); ids.len()];
    for t in &trees {
        let ansatz = if need_ansatz { Some(ansatz_at(&setup, t)?) } else { None };
        let h = setup.h_alpha(t.alpha);
        for (k, id) in ids.iter().enumerate() {
            by_id[k].push(check_estimate(m, t, ansatz.as_ref(), Some(&h), *id, &vopts)?);
        }
    }
    let summaries = by_id.iter().map(|r| summarize_sweep(r)).collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<EstimateReport> = by_id.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for r in &reports {
        for s in &r.samples {
            rows.push(vec![
                output::num(r.alpha),
                r.estimate_id.to_string(),
                s.label.clone(),
                s.point.iter().map(|&x| output::num(x)).collect::<Vec<_>>().join(";"),
                output::num(s.lhs),
                output::num(s.rhs),
                output::num(s.ratio),
                s.normalized.map(output::num).unwrap_or_default(),
            ]);
        }
    }
    write_csv(&out.join("verify.csv"), &["alpha", "estimate", "label", "point", "lhs", "rhs", "ratio", "normalized"], &rows)?;
    let report = VerifyReport { reports, summaries };
    write_json(&out.join("verify.json"), &report)?;
    let failed = report.reports.iter().filter(|r| !r.pass).count() + report.summaries.iter().filter(|s| !s.stable).count();
    if failed > 0 {
        return Err(CliError::EstimatesFailed { failed });
    }
    Ok(report)
}
