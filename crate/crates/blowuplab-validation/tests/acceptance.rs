//! Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use blowuplab::ansatz::{assemble_ansatz, zero_coefficients, Ansatz, Background};
use blowuplab::bubble_tree::{classify, BubbleSpec, CenterPath, ConfigurationSequence};
use blowuplab::euclidean_bubble::{kelvin_transform, lambda_from_integral, DimensionConstants, Profile};
use blowuplab::linear_solver::{coercivity_certificate, CoercivityOptions};
use blowuplab::manifold::{DiscreteManifold, Field, GreenOptions, Torus};
use blowuplab_cli::{cmd_run_reduction, cmd_solve_linear, cmd_sweep, cmd_verify, CliError, RunOptions};

const MU_SWEEP: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
const APPENDIX: [&str; 7] = ["greenB", "greenBder", "greenBij", "greenBijder", "gradij", "decbulle", "lemtec"];

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../blowuplab-cli/fixtures").join(name)
}

fn opts(out: &Path) -> RunOptions {
    RunOptions { out: Some(out.to_path_buf()), ..RunOptions::default() }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Single standard bubble of scale `mu` at the torus center, `h ≡ 1`, `u_0 ≡ 0`.
fn single_bubble(points: usize, period: f64, mu: f64) -> Result<(DiscreteManifold, Ansatz, Field), String> {
    let m = DiscreteManifold::new(3, points, period).map_err(err)?;
    let torus = Torus::new(3, period).map_err(err)?;
    let spec = BubbleSpec {
        center: CenterPath::Fixed(vec![period / 2.0; 3]),
        scale_constant: mu,
        rate: 0.5,
        profile: Arc::new(Profile::standard_bubble(3).map_err(err)?),
    };
    let config = ConfigurationSequence::new(torus, vec![spec], false, false, vec![1.0], 0.0).map_err(err)?;
    let h = m.constant(1.0);
    let background = Background::new(&m, None, h.clone(), GreenOptions::default()).map_err(err)?;
    let tree = classify(&config, 1.0).map_err(err)?;
    let ansatz = assemble_ansatz(&m, &config, &tree, &background, &zero_coefficients(&config, &background), None)
        .map_err(err)?;
    Ok((m, ansatz, h))
}

fn write_config(dir: &Path, name: &str, text: &str) -> Result<PathBuf, String> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(err)?;
    Ok(path)
}

fn criterion_1() -> Outcome {
    let b = Profile::standard_bubble(3).map_err(err)?;
    let sqrt3 = 3f64.sqrt();
    let lambda = lambda_from_integral(&b, 1e4, 1e-3).map_err(err)?.value;
    let lambda_rel = (lambda - sqrt3).abs() / sqrt3;
    let sobolev = DimensionConstants::new(3).map_err(err)?.sobolev_energy;
    let energy = b.dirichlet_energy().value;
    let energy_rel = (energy - sobolev).abs() / sobolev;
    let kk = kelvin_transform(&kelvin_transform(&b).map_err(err)?).map_err(err)?;
    let kelvin = (0..=200)
        .map(|i| 1e-2 * 1e4f64.powf(i as f64 / 200.0))
        .map(|r| (kk.eval_radial(r) - b.eval_radial(r)).abs())
        .fold(0.0, f64::max);
    let pass = lambda_rel <= 1e-3 && energy_rel <= 1e-3 && kelvin <= 1e-10;
    Ok((pass, format!("lambda rel err {lambda_rel:.2e}, energy rel err {energy_rel:.2e}, Kelvin involution err {kelvin:.2e}")))
}

fn criterion_2() -> Outcome {
    // N = 32 with L = 1.6 resolves μ = 0.05 by one grid spacing.
    let (m, ansatz, h) = single_bubble(32, 1.6, 0.05)?;
    let rep = coercivity_certificate(&m, &ansatz, &h, false, &CoercivityOptions::default()).map_err(err)?;
    let sv = &rep.singular_values;
    if sv.len() < 5 {
        return Err(format!("only {} singular values captured", sv.len()));
    }
    let threshold = 1e-3 * sv[4];
    let below = sv.iter().filter(|&&s| s < threshold).count();
    let gap = sv.iter().filter(|&&s| s < 0.5 * sv[4]).count();
    Ok((
        below == 4,
        format!(
            "{below} singular values below 1e-3*sigma_5 = {threshold:.3e} (need 4); smallest {}; {gap} below sigma_5/2",
            fmt_list(&sv[..5])
        ),
    ))
}

fn criterion_3() -> Outcome {
    // L = 4 keeps the cutoff far from the bubble at μ = 0.2; N = 160 resolves μ = 0.025.
    let devs = MU_SWEEP
        .iter()
        .map(|&mu| single_bubble(160, 4.0, mu).map(|(_, a, _)| a.gram_deviation()))
        .collect::<Result<Vec<f64>, String>>()?;
    let strict = devs.windows(2).all(|w| w[1] < w[0]);
    Ok((strict, format!("Gram deviation over mu {MU_SWEEP:?}: {} (strictly decreasing: {strict})", fmt_list(&devs))))
}

fn criterion_4() -> Outcome {
    let cert = CoercivityOptions { vectors: 12, iterations: 30, ..CoercivityOptions::default() };
    let sigmas = MU_SWEEP
        .iter()
        .map(|&mu| {
            let (m, a, h) = single_bubble(64, 2.0, mu)?;
            coercivity_certificate(&m, &a, &h, true, &cert).map(|r| r.sigma_min).map_err(err)
        })
        .collect::<Result<Vec<f64>, String>>()?;
    let lo = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sigmas.iter().copied().fold(0.0, f64::max);
    let pass = lo > 1e-3 && hi / lo < 4.0;
    Ok((pass, format!("sigma_min over mu {MU_SWEEP:?}: {} (spread {:.3}, limit 4)", fmt_list(&sigmas), hi / lo)))
}

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = write_config(
        dir.path(),
        "linear.json",
        r#"{
  "manifold": {"n": 3, "N": 32, "L": 1.6},
  "bubbles": [{"center": {"fixed": [0.8, 0.8, 0.8]}, "scale_constant": 0.4, "rate": 0.5}],
  "alphas": [8.0, 16.0, 32.0, 64.0],
  "solver": {"min_resolved_spacings": 1.0},
  "rhs": "bubble_power:1"
}"#,
    )?;
    let records = cmd_solve_linear(&cfg, None, &opts(dir.path())).map_err(err)?;
    // sup |φ|/(α^{-1}ΣB) and α Σ|λ|
    let ratios: Vec<f64> = records.iter().map(|r| r.alpha * r.weighted_max).collect();
    let lambdas: Vec<f64> = records.iter().map(|r| r.alpha * r.multiplier_sum).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lambda_max = lambdas.iter().copied().fold(0.0, f64::max);
    let pass = hi / lo < 4.0 && lambda_max <= hi;
    Ok((
        pass,
        format!(
            "weighted ratios {} (spread {:.3}, limit 4); alpha*sum|lambda| {} (budget {hi:.4e})",
            fmt_list(&ratios),
            hi / lo,
            fmt_list(&lambdas)
        ),
    ))
}

fn reduction_sweep(config: &Path) -> Result<(bool, String), String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let report = match cmd_sweep(config, &opts(dir.path())) {
        Ok(r) => Some(r),
        Err(CliError::Lib(_)) => None,
        Err(e) => return Err(err(e)),
    };
    let csv = std::fs::read_to_string(dir.path().join("e_alpha.csv")).map_err(err)?;
    let rows = csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>()).collect::<Vec<_>>();
    let summary: Vec<String> = rows
        .iter()
        .map(|r| format!("mu={} {} it={} inS={} E={}", r[1], r[2], r[3], r[6], r[7]))
        .collect();
    let pass = match &report {
        Some(r) => {
            let all = r.records.iter().filter_map(|x| x.result.as_ref());
            let picard_ok = all.clone().all(|x| {
                x.picard_iterations <= 50 && x.in_s_alpha && x.contraction_factors.iter().all(|&f| f <= 0.9)
            });
            picard_ok && r.c0.as_ref().is_some_and(|c| c.strictly_decreasing && c.halved)
        }
        None => false,
    };
    Ok((pass, summary.join("; ")))
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let base = |bubbles: &str| {
        format!(
            r#"{{
  "manifold": {{"n": 3, "N": 80, "L": 2.0}},
  "bubbles": [{bubbles}],
  "background": {{"u0": "zero", "h": {{"constant": 1.0}}}},
  "alphas": [1.0, 2.0, 4.0, 8.0],
  "solver": {{"min_resolved_spacings": 1.0}},
  "seed": 3
}}"#
        )
    };
    let single = write_config(
        dir.path(),
        "single.json",
        &base(r#"{"center": {"fixed": [1.0, 1.0, 1.0]}, "scale_constant": 0.2, "rate": 1.0}"#),
    )?;
    let pair = write_config(
        dir.path(),
        "pair.json",
        &base(
            r#"{"center": {"fixed": [0.5, 1.0, 1.0]}, "scale_constant": 0.2, "rate": 1.0},
    {"center": {"fixed": [1.5, 1.0, 1.0]}, "scale_constant": 0.2, "rate": 1.0}"#,
        ),
    )?;
    let (p1, s1) = reduction_sweep(&single)?;
    let (p2, s2) = reduction_sweep(&pair)?;
    Ok((p1 && p2, format!("single bubble: {s1} | two bubbles at separation L/2: {s2}")))
}

fn criterion_7() -> Outcome {
    let ids: Vec<String> = APPENDIX.iter().map(|s| s.to_string()).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["tower.json", "separated.json"] {
        let dir = tempfile::tempdir().map_err(err)?;
        let rep = match cmd_verify(&fixture(name), Some(&ids), &opts(dir.path())) {
            Ok(r) => r,
            Err(CliError::EstimatesFailed { failed }) => {
                pass = false;
                parts.push(format!("{name}: {failed} failing reports"));
                continue;
            }
            Err(e) => return Err(err(e)),
        };
        let all_pass = rep.reports.iter().all(|r| r.pass);
        // max/min of the worst ratio along the sweep
        let spreads: Vec<f64> = rep
            .summaries
            .iter()
            .map(|s| {
                let hi = s.worst_ratios.iter().copied().fold(0.0, f64::max);
                let lo = s.worst_ratios.iter().copied().fold(f64::INFINITY, f64::min);
                if hi == 0.0 {
                    1.0
                } else {
                    hi / lo
                }
            })
            .collect();
        let worst = spreads.iter().copied().fold(0.0, f64::max);
        pass &= all_pass && worst <= 10.0;
        parts.push(format!("{name}: all within ceiling {all_pass}, worst constant spread {worst:.3} (limit 10)"));
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let cases = [
        ("zero profile, u0 = 0", r#""zero""#),
        ("zero profile, u0 = 1", r#"{"constant": 1.0}"#),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (label, u0)) in cases.iter().enumerate() {
        let cfg = write_config(
            dir.path(),
            &format!("exact{k}.json"),
            &format!(
                r#"{{
  "manifold": {{"n": 3, "N": 32, "L": 2.0}},
  "bubbles": [{{"center": {{"fixed": [1.0, 1.0, 1.0]}}, "scale_constant": 0.2, "rate": 0.5, "profile": "zero"}}],
  "background": {{"u0": {u0}, "h": {{"constant": 1.0}}}},
  "alphas": [1.0, 2.0],
  "solver": {{"min_resolved_spacings": 1.0}}
}}"#
            ),
        )?;
        let records = cmd_run_reduction(&cfg, &opts(dir.path())).map_err(err)?;
        for r in records {
            let x = r.result.ok_or("missing result")?;
            let phi = x.phi.max_abs();
            let lambda = x.multipliers.iter().flatten().map(|l| l.abs()).fold(0.0, f64::max);
            pass &= phi <= 1e-8 && lambda <= 1e-8 && x.picard_iterations == 1;
            parts.push(format!(
                "{label} alpha={}: |phi| {phi:.1e}, |lambda| {lambda:.1e}, {} iteration(s)",
                r.alpha, x.picard_iterations
            ));
        }
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_9() -> Outcome {
    let runs = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().map_err(err)?;
            cmd_sweep(&fixture("single_bubble.json"), &opts(dir.path())).map_err(err)?;
            let csv = std::fs::read(dir.path().join("e_alpha.csv")).map_err(err)?;
            let json = std::fs::read(dir.path().join("sweep.json")).map_err(err)?;
            Ok((csv, json))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let csv_same = runs[0].0 == runs[1].0;
    let json_same = runs[0].1 == runs[1].1;
    Ok((csv_same && json_same, format!("e_alpha.csv identical {csv_same}, sweep.json identical {json_same}")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("euclidean exactness", criterion_1),
        ("kernel dimension", criterion_2),
        ("almost-orthonormality", criterion_3),
        ("coercivity", criterion_4),
        ("linear estimate", criterion_5),
        ("reduction and C0 error", criterion_6),
        ("estimate oracle suite", criterion_7),
        ("exact-solution sanity", criterion_8),
        ("determinism", criterion_9),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (k, (name, _)) in criteria.iter().enumerate() {
            println!("criterion {} {name}: test", k + 1);
        }
        return ExitCode::SUCCESS;
    }
    let filter: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.iter().any(|f| **f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        failed += usize::from(!pass);
        println!("criterion {id} {name}: {} ({secs:.1}s) {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
