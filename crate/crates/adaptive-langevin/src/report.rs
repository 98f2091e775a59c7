//! Pipeline orchestration behind the command-line tool: run the selected
//! pipelines for every `h`, write CSV/JSON artifacts and a summary.
//!
//! Artifacts in the output directory:
//!
//! | file | content |
//! |---|---|
//! | `config.txt` | every effective field, defaults included |
//! | `wkb.json` | saddle data, closed-form and Taylor residuals |
//! | `wkb.csv` | `h, max_w_over_h2` |
//! | `spectra.csv` | one row per `h`: eigenvalues, residuals, `λ_EK`, ratio |
//! | `convergence.csv` | see [`emit_convergence_table`] |
//! | `witten.csv` | low spectrum of `B` per `h` |
//! | `hypo.json` | algebraic checks and the coercivity probe per `h` |
//! | `hypo.csv` | `h, gamma, nu, alpha, norm_A, coercivity_min, g_h, ratio` |
//! | `sde_times_<h>.csv` | transition-time samples, digest in the header |
//! | `sde.json` | equilibrium moments, transition statistics at two core radii |
//! | `quasimode.csv` | Gram matrix and interaction quantities per `h` |
//! | `acceptance.json` | criterion verdicts (only with `--check`) |
//! | `summary.json` | per-pipeline status, per-`h` rows and checks |

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::acceptance::{self, CriterionResult};
use crate::config::{ExperimentConfig, Pipeline};
use crate::hypo::{aux_checks, build_a, coercivity_functional, default_alpha, default_radius, rough_quasimodes};
use crate::operator::{assemble, build_basis, identity_checks, BasisConfig};
use crate::potential::{double_well, extended_phase, DoubleWellTopology, ExtendedPhase, Potential};
use crate::quasimode::{build_quasimodes, default_params, interaction, CutoffGeometry, QuadratureSpec};
use crate::rates::eyring_kramers_rate;
use crate::sde::{simulate, transition_times, SdeConfig, SdeError};
use crate::spectra::{deflated_smallest_with, witten_gap, SpectralOptions};
use crate::wkb::{build_ell, check_det_identity, max_scaled_residual};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("output directory {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("landscape: {0}")]
    Landscape(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

/// A named pass/fail with the measured value and its limit.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Check {
    Check { name: name.into(), passed: value <= limit, value, limit }
}

fn above(name: impl Into<String>, value: f64, limit: f64) -> Check {
    Check { name: name.into(), passed: value > limit, value, limit }
}

/// Spectral result at one `h`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SpectralRow {
    pub h: f64,
    pub n: usize,
    pub lambda_num: f64,
    pub lambda_num_im: f64,
    pub lambda_residual: f64,
    pub kernel: f64,
    pub kernel_residual: f64,
    pub lambda_ek: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineStatus {
    pub pipeline: Pipeline,
    pub ok: bool,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub version: &'static str,
    pub config: Vec<(String, String)>,
    pub pipelines: Vec<PipelineStatus>,
    pub spectra: Vec<SpectralRow>,
    pub acceptance: Vec<CriterionResult>,
    pub passed: bool,
}

/// Files produced by one pipeline, written after all pipelines finish.
struct Output {
    checks: Vec<Check>,
    files: Vec<(String, String)>,
    rows: Vec<SpectralRow>,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    potential: Potential,
    topo: DoubleWellTopology,
    phase: ExtendedPhase,
}

/// `h, lambda_num, lambda_ek, ratio, ratio_minus_one_over_sqrt_h`, rows in
/// input order.
pub fn emit_convergence_table(rows: &[SpectralRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["h", "lambda_num", "lambda_ek", "ratio", "ratio_minus_one_over_sqrt_h"])?;
    for r in rows {
        w.write_record([
            r.h.to_string(),
            format!("{:e}", r.lambda_num),
            format!("{:e}", r.lambda_ek),
            r.ratio.to_string(),
            ((r.ratio - 1.0) / r.h.sqrt()).to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_string(header: &[&str], rows: &[Vec<String>], comment: Option<&str>) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    let body = String::from_utf8(bytes).expect("csv output is UTF-8");
    Ok(match comment {
        Some(c) => format!("# {c}\n{body}"),
        None => body,
    })
}

fn json<T: Serialize>(x: &T) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(x)? + "\n")
}

fn run_wkb(ctx: &Context) -> Result<Output, String> {
    let eik = build_ell(&ctx.phase, &ctx.topo).map_err(|e| e.to_string())?;
    let (axx, lam, hxx) = eik.closed_form_residuals();
    let (w0, w1) = eik.taylor_residuals();
    let (det, min_eig) = check_det_identity(&eik);
    let scaled: Vec<f64> = ctx.cfg.h.iter().map(|&h| max_scaled_residual(&eik, &ctx.phase, h, 11)).collect();
    let checks = vec![
        at_most("taylor_w0", w0, 1e-9),
        at_most("taylor_w1", w1, 1e-9),
        at_most("det_identity", det, 1e-10),
        above("h_plus_pi_min_eig", min_eig, 0.0),
        at_most("a_xi_xi_minus_mu", axx.abs(), 1e-12),
        at_most("lambda_xi_plus_mu_xi", lam, 1e-10),
        at_most("h_inv_xi_xi_plus_2", hxx.abs(), 1e-10),
    ];
    #[derive(Serialize)]
    struct WkbOut<'a> {
        eikonal: &'a crate::wkb::EikonalData,
        closed_form: [f64; 3],
        taylor: [f64; 2],
        det_identity: f64,
        min_eig: f64,
    }
    let body = json(&WkbOut { eikonal: &eik, closed_form: [axx, lam, hxx], taylor: [w0, w1], det_identity: det, min_eig })
        .map_err(|e| e.to_string())?;
    let rows: Vec<Vec<String>> =
        ctx.cfg.h.iter().zip(&scaled).map(|(h, r)| vec![h.to_string(), r.to_string()]).collect();
    let table = csv_string(&["h", "max_w_over_h2"], &rows, None).map_err(|e| e.to_string())?;
    Ok(Output { checks, files: vec![("wkb.json".into(), body), ("wkb.csv".into(), table)], rows: vec![] })
}

fn basis_config(cfg: &ExperimentConfig, h: f64) -> BasisConfig {
    let d = BasisConfig::new(h);
    let r = &cfg.resolution;
    let mut b = d.clone().with_sizes(r.nx.unwrap_or(d.nx), r.nv.unwrap_or(d.nv), r.ny.unwrap_or(d.ny));
    if let Some(l) = r.l {
        b = b.with_l(l);
    }
    b
}

fn run_spectra(ctx: &Context) -> Result<Output, String> {
    let opts = SpectralOptions { krylov_dim: ctx.cfg.krylov_dim, tol: ctx.cfg.tol, seed: ctx.cfg.seed, ..Default::default() };
    let results: Vec<Result<_, String>> = ctx
        .cfg
        .h
        .par_iter()
        .map(|&h| {
            let basis = build_basis(&ctx.potential, &basis_config(ctx.cfg, h)).map_err(|e| e.to_string())?;
            let asm = assemble(&ctx.phase, &basis);
            let rep = deflated_smallest_with(&asm, 4, &opts).map_err(|e| format!("h = {h}: {e}"))?;
            let gap = witten_gap(&asm, 5).map_err(|e| format!("h = {h}: {e}"))?;
            Ok((rep, gap))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut witten = Vec::new();
    for (rep, gap) in &results {
        let ek = eyring_kramers_rate(&ctx.topo, ctx.cfg.gamma, rep.h).map_err(|e| e.to_string())?;
        let first = rep.first().copied().ok_or_else(|| format!("h = {}: no eigenvalue", rep.h))?;
        checks.push(at_most(format!("kernel_residual[h={}]", rep.h), rep.kernel.residual, 1e-8));
        checks.push(at_most(
            format!("lambda_imag_over_real[h={}]", rep.h),
            first.im.abs() / first.re.abs(),
            acceptance::REAL_TOL,
        ));
        rows.push(SpectralRow {
            h: rep.h,
            n: rep.n,
            lambda_num: first.re,
            lambda_num_im: first.im,
            lambda_residual: first.residual,
            kernel: rep.kernel.re,
            kernel_residual: rep.kernel.residual,
            lambda_ek: ek.lambda,
            ratio: first.re / ek.lambda,
        });
        let mut row = vec![gap.h.to_string(), gap.epsilon.to_string()];
        row.extend(gap.eigenvalues.iter().map(|e| format!("{e:e}")));
        witten.push(row);
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.h.to_string(),
                ctx.cfg.gamma.to_string(),
                ctx.cfg.nu.to_string(),
                r.n.to_string(),
                format!("{:e}", r.lambda_num),
                format!("{:e}", r.lambda_num_im),
                format!("{:e}", r.lambda_residual),
                format!("{:e}", r.kernel),
                format!("{:e}", r.kernel_residual),
                format!("{:e}", r.lambda_ek),
                r.ratio.to_string(),
            ]
        })
        .collect();
    let header = [
        "h", "gamma", "nu", "n", "lambda_re", "lambda_im", "lambda_residual", "kernel", "kernel_residual", "lambda_ek", "ratio",
    ];
    let mut wh = vec!["h", "epsilon"];
    let names: Vec<String> = (0..results.first().map_or(0, |r| r.1.eigenvalues.len())).map(|k| format!("b{k}")).collect();
    wh.extend(names.iter().map(String::as_str));
    let files = vec![
        ("spectra.csv".into(), csv_string(&header, &table, None).map_err(|e| e.to_string())?),
        ("convergence.csv".into(), emit_convergence_table(&rows).map_err(|e| e.to_string())?),
        ("witten.csv".into(), csv_string(&wh, &witten, None).map_err(|e| e.to_string())?),
    ];
    Ok(Output { checks, files, rows })
}

fn run_hypo(ctx: &Context) -> Result<Output, String> {
    let (nx, nv, ny) = acceptance::COERCIVITY_SIZES;
    let mut checks = Vec::new();
    let mut out = Vec::new();
    let mut table = Vec::new();
    for (k, &h) in ctx.cfg.h.iter().enumerate() {
        let basis = build_basis(&ctx.potential, &BasisConfig::new(h).with_sizes(nx, nv, ny)).map_err(|e| e.to_string())?;
        let asm = assemble(&ctx.phase, &basis);
        let alpha = default_alpha(h, ctx.cfg.nu);
        let ident = identity_checks(&asm);
        let aux = aux_checks(&asm, alpha).map_err(|e| e.to_string())?;
        let a = build_a(&asm, alpha).map_err(|e| e.to_string())?;
        let rough = rough_quasimodes(&asm, &ctx.topo, default_radius(&ctx.topo)).map_err(|e| e.to_string())?;
        let coer = coercivity_functional(&asm, &a, &rough, acceptance::COERCIVITY_DELTA0, acceptance::COERCIVITY_TRIALS, ctx.cfg.seed.wrapping_add(k as u64))
            .map_err(|e| e.to_string())?;
        checks.push(at_most(format!("identities[h={h}]"), ident.worst_relative(), acceptance::IDENTITY_TOL));
        checks.push(at_most(format!("a_norm_times_sqrt_alpha[h={h}]"), aux.norm_a / aux.norm_bound, 1.0));
        checks.push(above(format!("coercivity_min[h={h}]"), coer.coercivity_min, 0.0));
        table.push(vec![
            h.to_string(),
            ctx.cfg.gamma.to_string(),
            ctx.cfg.nu.to_string(),
            alpha.to_string(),
            format!("{:e}", coer.norm_a),
            format!("{:e}", coer.coercivity_min),
            format!("{:e}", coer.g_h),
            format!("{:e}", coer.ratio),
        ]);
        out.push(serde_json::json!({ "h": h, "identities": ident, "aux": aux, "rough": rough, "coercivity": coer }));
    }
    let header = ["h", "gamma", "nu", "alpha", "norm_A", "coercivity_min", "g_h", "ratio"];
    let files = vec![
        ("hypo.json".into(), json(&out).map_err(|e| e.to_string())?),
        ("hypo.csv".into(), csv_string(&header, &table, None).map_err(|e| e.to_string())?),
    ];
    Ok(Output { checks, files, rows: vec![] })
}

fn run_sde(ctx: &Context) -> Result<Output, String> {
    let s = &ctx.cfg.sde;
    let mut checks = Vec::new();
    let mut files = Vec::new();
    let mut out = Vec::new();
    for &h in &ctx.cfg.h {
        let mut cfg = SdeConfig::new(ctx.potential.clone(), ctx.cfg.gamma, ctx.cfg.nu, h);
        cfg.dt = s.dt;
        cfg.seed = ctx.cfg.seed;
        cfg.horizon = s.equilibrium_time;
        cfg.trajectories = s.trajectories;
        cfg.burn_in = 0.025 * s.equilibrium_time;
        let eq = simulate(&cfg).map_err(|e| e.to_string())?;
        let m = eq.moments.as_ref().expect("moments");
        checks.push(at_most(format!("var_v_z[h={h}]"), m.var_v.z_score(h), acceptance::Z_MAX));
        checks.push(at_most(format!("var_y_z[h={h}]"), m.var_y.z_score(h), acceptance::Z_MAX));
        cfg.horizon = s.horizon;
        let tr = match transition_times(&cfg, &ctx.topo, s.transitions) {
            Ok(t) => t,
            Err(SdeError::Partial { stats, collected, requested, .. }) => {
                checks.push(Check { name: format!("transitions[h={h}]"), passed: false, value: collected as f64, limit: requested as f64 });
                *stats
            }
            Err(e) => return Err(e.to_string()),
        };
        let t = tr.transitions.as_ref().expect("transition stats");
        let rows: Vec<Vec<String>> = t.times.iter().map(|x| vec![x.to_string()]).collect();
        files.push((format!("sde_times_{h}.csv"), csv_string(&["time"], &rows, Some(&tr.digest)).map_err(|e| e.to_string())?));
        // same seed with a tighter core, to expose the dependence on the core radius
        let mut narrow = cfg.clone();
        narrow.r_core = Some(0.5 * t.r_core_start.min(t.r_core_target));
        let alt = match transition_times(&narrow, &ctx.topo, s.transitions) {
            Ok(t) => t,
            Err(SdeError::Partial { stats, .. }) => *stats,
            Err(e) => return Err(e.to_string()),
        };
        let alt = alt.transitions.expect("transition stats");
        let ek = eyring_kramers_rate(&ctx.topo, ctx.cfg.gamma, h).map_err(|e| e.to_string())?;
        out.push(serde_json::json!({
            "h": h,
            "equilibrium": eq,
            "transitions": {
                "count": t.count,
                "mean": t.mean,
                "standard_error": t.standard_error,
                "r_core_start": t.r_core_start,
                "r_core_target": t.r_core_target,
                "h_over_lambda_ek": h / ek.lambda,
                "euler_fallbacks": tr.euler_fallbacks,
            },
            "narrow_core": {
                "r_core": alt.r_core_start,
                "count": alt.count,
                "mean": alt.mean,
                "standard_error": alt.standard_error,
            },
        }));
    }
    files.push(("sde.json".into(), json(&out).map_err(|e| e.to_string())?));
    Ok(Output { checks, files, rows: vec![] })
}

fn run_quasimode(ctx: &Context) -> Result<Output, String> {
    let eik = build_ell(&ctx.phase, &ctx.topo).map_err(|e| e.to_string())?;
    let (tau, delta) = default_params(&ctx.topo, &eik);
    let geom = CutoffGeometry::new(&ctx.phase, &ctx.topo, &eik, tau, delta).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &h in &ctx.cfg.h {
        let q = build_quasimodes(&ctx.phase, &ctx.topo, &eik, &geom, h).map_err(|e| e.to_string())?;
        let r = interaction(&q, &QuadratureSpec::default()).map_err(|e| e.to_string())?;
        checks.push(at_most(format!("gram_diagonal[h={h}]"), (r.gram[0][0] - 1.0).abs().max((r.gram[1][1] - 1.0).abs()), 1e-8));
        rows.push(vec![
            h.to_string(),
            r.tau.to_string(),
            r.delta.to_string(),
            format!("{:e}", r.gram[0][1]),
            format!("{:e}", r.rayleigh),
            format!("{:e}", r.lambda_ek),
            r.ratio.to_string(),
            format!("{:e}", r.p_norm_ratio),
            r.error_budget.to_string(),
        ]);
    }
    let header = ["h", "tau", "delta", "gram_offdiag", "rayleigh", "lambda_ek", "ratio", "p_norm_ratio", "error_budget"];
    let table = csv_string(&header, &rows, None).map_err(|e| e.to_string())?;
    Ok(Output { checks, files: vec![("quasimode.csv".into(), table)], rows: vec![] })
}

/// Fail early when `dir` cannot be created or written.
pub fn ensure_writable(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").map_err(io_err(dir))?;
    fs::remove_file(&probe).map_err(io_err(dir))
}

/// Run every selected pipeline (and the acceptance suite if asked), write
/// the artifacts and return the summary. A failing pipeline is recorded
/// and does not stop the others.
pub fn run(cfg: &ExperimentConfig, check: bool) -> Result<Summary, ReportError> {
    ensure_writable(&cfg.out)?;
    let potential = cfg.potential.build();
    let topo = double_well(&potential).map_err(|e| ReportError::Landscape(e.to_string()))?;
    let phase = extended_phase(&potential, cfg.gamma, cfg.nu).map_err(|e| ReportError::Landscape(e.to_string()))?;
    let ctx = Context { cfg, potential, topo, phase };
    let write = |name: &str, body: &str| -> Result<(), ReportError> {
        let p = cfg.out.join(name);
        fs::write(&p, body).map_err(io_err(&p))
    };
    write("config.txt", &cfg.to_text())?;

    let outcomes: Vec<(Pipeline, Result<Output, String>)> = cfg
        .pipelines
        .par_iter()
        .map(|&p| {
            let r = match p {
                Pipeline::Wkb => run_wkb(&ctx),
                Pipeline::Spectra => run_spectra(&ctx),
                Pipeline::Hypo => run_hypo(&ctx),
                Pipeline::Sde => run_sde(&ctx),
                Pipeline::Quasimode => run_quasimode(&ctx),
            };
            (p, r)
        })
        .collect();

    let mut statuses = Vec::new();
    let mut spectra = Vec::new();
    for (p, r) in outcomes {
        match r {
            Ok(out) => {
                for (name, body) in &out.files {
                    write(name, body)?;
                }
                spectra.extend(out.rows);
                statuses.push(PipelineStatus {
                    pipeline: p,
                    ok: out.checks.iter().all(|c| c.passed),
                    error: None,
                    artifacts: out.files.into_iter().map(|f| f.0).collect(),
                    checks: out.checks,
                });
            }
            Err(e) => statuses.push(PipelineStatus { pipeline: p, ok: false, error: Some(e), checks: vec![], artifacts: vec![] }),
        }
    }
    let acceptance = if check { acceptance::run_all() } else { Vec::new() };
    if check {
        write("acceptance.json", &json(&acceptance)?)?;
    }
    let passed = statuses.iter().all(|s| s.ok) && acceptance.iter().all(|c| c.passed);
    let summary = Summary {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.echo().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        pipelines: statuses,
        spectra,
        acceptance,
        passed,
    };
    write("summary.json", &json(&summary)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(h: f64, ratio: f64) -> SpectralRow {
        SpectralRow {
            h,
            n: 10,
            lambda_num: ratio * 1e-3,
            lambda_num_im: 0.0,
            lambda_residual: 0.0,
            kernel: 0.0,
            kernel_residual: 0.0,
            lambda_ek: 1e-3,
            ratio,
        }
    }

    #[test]
    fn convergence_table_has_header_and_rows() {
        let t = emit_convergence_table(&[row(0.2, 1.1), row(0.1, 1.05)]).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "h,lambda_num,lambda_ek,ratio,ratio_minus_one_over_sqrt_h");
        let last: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
        assert!((last - 0.05 / 0.1f64.sqrt()).abs() < 1e-12);
        assert!(t.split(',').all(|c| !c.contains("NaN")));
    }

    #[test]
    fn unwritable_directory_fails_before_work() {
        let dir = std::env::temp_dir().join(format!("al-report-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let file = dir.join("plain-file");
        fs::write(&file, "x").unwrap();
        let cfg = ExperimentConfig { out: file.join("sub"), ..Default::default() };
        assert!(matches!(run(&cfg, false), Err(ReportError::Io { .. })));
        fs::remove_dir_all(&dir).unwrap();
    }
}
