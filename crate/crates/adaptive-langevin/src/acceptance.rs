//! The ten acceptance criteria, each reduced to a pass/fail verdict with
//! the numbers behind it. Tolerances and sweeps are pinned here.
//!
//! Criteria 1, 2 and 10 fail for the tilted quartic at the prescribed
//! `h` values; see [`EXPECTED_FAILURES`].

use std::sync::OnceLock;

use serde::Serialize;

use crate::hypo::{
    aux_checks, build_a, coercivity_functional, default_alpha, default_radius, rough_quasimodes,
};
use crate::operator::{assemble, build_basis, identity_checks, BasisConfig, OperatorAssembly};
use crate::potential::{double_well, extended_phase, DoubleWellTopology, ExtendedPhase, Potential};
use crate::quasimode::{build_quasimodes, default_params, interaction, CutoffGeometry, QuadratureSpec};
use crate::rates::{eyring_kramers_rate, mu_of_saddle, rate_g};
use crate::sde::{linear_fit, simulate, transition_times, SdeConfig};
use crate::spectra::{deflated_smallest, witten_gap, SpectralReport, WittenGap};
use crate::wkb::{build_ell, check_det_identity, max_scaled_residual};

pub const GAMMA: f64 = 1.0;
pub const NU: f64 = 1.0;

pub const EK_SWEEP: [f64; 3] = [0.15, 0.10, 0.08];
pub const EK_RATIO_TOL: f64 = 0.15;
/// Allowed max/min spread of a quantity that should be `h`-independent.
pub const SWEEP_FACTOR: f64 = 2.0;
pub const KERNEL_RESIDUAL_TOL: f64 = 1e-8;
/// `|Im λ| ≤ REAL_TOL · |Re λ|` counts as real.
pub const REAL_TOL: f64 = 1e-8;

pub const WKB_SWEEP: [f64; 3] = [1e-1, 3e-2, 1e-2];
pub const WKB_LATTICE: usize = 11;
pub const TAYLOR_TOL: f64 = 1e-9;
pub const DET_TOL: f64 = 1e-10;
pub const MU_TOL: f64 = 1e-12;
pub const LAMBDA_XI_TOL: f64 = 1e-10;
pub const A_XI_TOL: f64 = 1e-12;
pub const H_INV_TOL: f64 = 1e-10;

pub const ALGEBRA_SWEEP: [f64; 2] = [0.2, 0.1];
pub const ALGEBRA_SIZES: (usize, usize, usize) = (41, 6, 6);
pub const IDENTITY_TOL: f64 = 1e-8;
pub const PI_A_TOL: f64 = 1e-10;
pub const PI_Z_PI_TOL: f64 = 1e-12;

pub const COERCIVITY_SWEEP: [f64; 3] = [0.2, 0.1, 0.05];
pub const COERCIVITY_SIZES: (usize, usize, usize) = (65, 8, 8);
pub const COERCIVITY_TRIALS: usize = 1000;
pub const COERCIVITY_DELTA0: f64 = 0.1;

pub const WITTEN_SWEEP: [f64; 3] = [0.2, 0.15, 0.1];

/// Small enough that the `e^{−τ²/2h}` cutoff corrections are below the
/// `O(h)` term being measured.
pub const QUASIMODE_SWEEP: [f64; 3] = [0.005, 0.0035, 0.0025];
pub const P_NORM_EXPONENT_MIN: f64 = 3.5;

pub const SDE_SWEEP: [f64; 3] = [0.25, 0.2, 0.15];
pub const SDE_TRANSITIONS: usize = 8000;
/// Diagnostic only: deeper in the small-`h` regime.
pub const SDE_LOW_SWEEP: [f64; 3] = [0.15, 0.10, 0.08];
pub const SDE_SLOPE_TOL: f64 = 0.10;
pub const SDE_TIME_BAND: (f64, f64) = (0.5, 2.0);
pub const SDE_EQ_H: f64 = 0.2;
pub const SDE_EQ_TRAJECTORIES: usize = 32;
pub const SDE_EQ_TIME: f64 = 2000.0;
pub const Z_MAX: f64 = 3.0;

/// Criteria that do not hold for the tilted quartic at the prescribed
/// parameters, with the reason.
pub const EXPECTED_FAILURES: &[(u8, &str)] = &[
    (
        1,
        "S/h is 1.05 to 2 on this sweep; the back-reaction of the deep well and finite-barrier \
         corrections keep λ_num/λ_EK at 1.24 to 2.5 with a resolution-converged discretization",
    ),
    (
        2,
        "at h = 0.15 the metastable eigenvalue is one of a complex-conjugate pair, so no window \
         can contain it alone",
    ),
    (
        10,
        "on h = 0.25..0.15 the mean time carries an O(h) prefactor correction (0.97 to 1.03 times \
         h/λ_EK) that tilts the three-point slope about 15% above S; the equilibrium moments and \
         the h = 0.2 time pass, and the slope on h = 0.15..0.08 is within 1%",
    ),
];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn expected_failure(&self) -> Option<&'static str> {
        EXPECTED_FAILURES.iter().find(|(id, _)| *id == self.id).map(|(_, why)| *why)
    }

    /// One line: `PASS`/`FAIL`, id, name and the numbers.
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let note = match (self.passed, self.expected_failure()) {
            (false, Some(_)) => " [known failure]",
            _ => "",
        };
        format!("{tag} {:>2} {}{note}: {}", self.id, self.name, self.detail)
    }
}

fn spread(xs: &[f64]) -> f64 {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mn = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    mx / mn
}

fn fmt_list(xs: &[f64]) -> String {
    let body: Vec<String> = xs.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", body.join(", "))
}

struct Landscape {
    potential: Potential,
    topo: DoubleWellTopology,
    phase: ExtendedPhase,
}

fn landscape() -> &'static Landscape {
    static CELL: OnceLock<Landscape> = OnceLock::new();
    CELL.get_or_init(|| {
        let potential = Potential::tilted_quartic();
        let topo = double_well(&potential).expect("tilted quartic is a double well");
        let phase = extended_phase(&potential, GAMMA, NU).expect("positive parameters");
        Landscape { potential, topo, phase }
    })
}

fn assembly(h: f64, sizes: Option<(usize, usize, usize)>) -> Result<OperatorAssembly, String> {
    let l = landscape();
    let mut cfg = BasisConfig::new(h);
    if let Some((nx, nv, ny)) = sizes {
        cfg = cfg.with_sizes(nx, nv, ny);
    }
    let basis = build_basis(&l.potential, &cfg).map_err(|e| e.to_string())?;
    Ok(assemble(&l.phase, &basis))
}

/// Full-resolution spectra on [`EK_SWEEP`], shared by criteria 1 and 2.
pub fn ek_sweep() -> &'static Result<Vec<SpectralReport>, String> {
    static CELL: OnceLock<Result<Vec<SpectralReport>, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        EK_SWEEP
            .iter()
            .map(|&h| deflated_smallest(&assembly(h, None)?, 4).map_err(|e| e.to_string()))
            .collect()
    })
}

fn failed(id: u8, name: &'static str, err: impl std::fmt::Display) -> CriterionResult {
    CriterionResult { id, name, passed: false, detail: format!("error: {err}") }
}

pub fn criterion_1() -> CriterionResult {
    let name = "Eyring-Kramers reproduction";
    let reports = match ek_sweep() {
        Ok(r) => r,
        Err(e) => return failed(1, name, e),
    };
    let topo = &landscape().topo;
    let mut ratios = Vec::new();
    for r in reports {
        let ek = match eyring_kramers_rate(topo, GAMMA, r.h) {
            Ok(ek) => ek.lambda,
            Err(e) => return failed(1, name, e),
        };
        match r.first() {
            Some(e) => ratios.push(e.re / ek),
            None => return failed(1, name, format!("no eigenvalue at h = {}", r.h)),
        }
    }
    let within = ratios.iter().all(|q| (q - 1.0).abs() <= EK_RATIO_TOL);
    let scaled: Vec<f64> = ratios.iter().zip(EK_SWEEP).map(|(q, h)| (q - 1.0) / h.sqrt()).collect();
    let same_sign = scaled.iter().all(|s| *s > 0.0) || scaled.iter().all(|s| *s < 0.0);
    let abs: Vec<f64> = scaled.iter().map(|s| s.abs()).collect();
    let trend = same_sign && spread(&abs) <= SWEEP_FACTOR;
    CriterionResult {
        id: 1,
        name,
        passed: within && trend,
        detail: format!(
            "h={EK_SWEEP:?} ratio={} (tol ±{EK_RATIO_TOL}) (ratio-1)/sqrt(h)={} spread={:.3} (max {SWEEP_FACTOR})",
            fmt_list(&ratios),
            fmt_list(&scaled),
            spread(&abs)
        ),
    }
}

pub fn criterion_2() -> CriterionResult {
    let name = "spectral census";
    let reports = match ek_sweep() {
        Ok(r) => r,
        Err(e) => return failed(2, name, e),
    };
    let coarse = &reports[0];
    let g0 = match rate_g(coarse.h, GAMMA, NU) {
        Ok(g) => g,
        Err(e) => return failed(2, name, e),
    };
    // c₀: geometric mean of the first eigenvalue and the next distinct real
    // part at the coarsest h.
    let first = coarse.eigenvalues[0].re;
    let next = coarse.eigenvalues.iter().map(|e| e.re).find(|&re| re > first * (1.0 + 1e-8));
    let c0 = match next {
        Some(nx) => (first * nx).sqrt() / g0,
        None => return failed(2, name, "no eigenvalue above the first at the coarsest h"),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for r in reports {
        let g = rate_g(r.h, GAMMA, NU).expect("positive h");
        let count = r.count_below(c0 * g);
        let lam = r.eigenvalues[0];
        let real = lam.im.abs() <= REAL_TOL * lam.re.abs();
        let good = count == 2 && r.kernel.residual <= KERNEL_RESIDUAL_TOL && real && lam.re > 0.0;
        ok &= good;
        parts.push(format!(
            "h={}: count={count} kernel_res={:.1e} lambda={:.4e}{:+.1e}i",
            r.h, r.kernel.residual, lam.re, lam.im
        ));
    }
    CriterionResult { id: 2, name, passed: ok, detail: format!("c0={c0:.4}; {}", parts.join("; ")) }
}

pub fn criterion_3() -> CriterionResult {
    let name = "WKB residual order";
    let l = landscape();
    let eik = match build_ell(&l.phase, &l.topo) {
        Ok(e) => e,
        Err(e) => return failed(3, name, e),
    };
    let r: Vec<f64> = WKB_SWEEP.iter().map(|&h| max_scaled_residual(&eik, &l.phase, h, WKB_LATTICE)).collect();
    let (w0, w1) = eik.taylor_residuals();
    let passed = spread(&r) < SWEEP_FACTOR && w0 <= TAYLOR_TOL && w1 <= TAYLOR_TOL;
    CriterionResult {
        id: 3,
        name,
        passed,
        detail: format!(
            "max|w|/h^2={} spread={:.3}; w0 low={w0:.1e} w1 low={w1:.1e} (tol {TAYLOR_TOL:.0e})",
            fmt_list(&r),
            spread(&r)
        ),
    }
}

/// Double-well presets and the `(γ, ν)` pairs their saddles are checked at.
fn configured_saddles() -> Vec<(String, f64, f64)> {
    let mut out = Vec::new();
    for name in ["tilted_quartic", "figure1"] {
        for (g, n) in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.3)] {
            out.push((name.to_string(), g, n));
        }
    }
    out
}

pub fn criterion_4() -> CriterionResult {
    let name = "determinant identity";
    let mut worst: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let saddles = configured_saddles();
    for (pname, g, n) in &saddles {
        let v = Potential::preset(pname).expect("preset");
        let run = || -> Result<(f64, f64), String> {
            let topo = double_well(&v).map_err(|e| e.to_string())?;
            let ph = extended_phase(&v, *g, *n).map_err(|e| e.to_string())?;
            let eik = build_ell(&ph, &topo).map_err(|e| e.to_string())?;
            Ok(check_det_identity(&eik))
        };
        match run() {
            Ok((rel, m)) => {
                worst = worst.max(rel);
                min_eig = min_eig.min(m);
            }
            Err(e) => return failed(4, name, format!("{pname}: {e}")),
        }
    }
    CriterionResult {
        id: 4,
        name,
        passed: worst <= DET_TOL && min_eig > 0.0,
        detail: format!(
            "{} saddles: max rel={worst:.1e} (tol {DET_TOL:.0e}) min eig(H+Pi)={min_eig:.4e}",
            saddles.len()
        ),
    }
}

pub fn criterion_5() -> CriterionResult {
    let name = "closed forms";
    let mu = match mu_of_saddle(1.0, 2.0) {
        Ok(m) => m,
        Err(e) => return failed(5, name, e),
    };
    let (mut axx, mut lam, mut hxx) = (0.0f64, 0.0f64, 0.0f64);
    for (pname, g, n) in configured_saddles() {
        let v = Potential::preset(&pname).expect("preset");
        let res = double_well(&v)
            .map_err(|e| e.to_string())
            .and_then(|t| Ok((t, extended_phase(&v, g, n).map_err(|e| e.to_string())?)))
            .and_then(|(t, ph)| build_ell(&ph, &t).map_err(|e| e.to_string()));
        match res {
            Ok(eik) => {
                let (a, l, h) = eik.closed_form_residuals();
                axx = axx.max(a.abs());
                lam = lam.max(l);
                hxx = hxx.max(h.abs());
            }
            Err(e) => return failed(5, name, format!("{pname}: {e}")),
        }
    }
    let mu_err = (mu - 1.0).abs();
    CriterionResult {
        id: 5,
        name,
        passed: mu_err <= MU_TOL && lam <= LAMBDA_XI_TOL && axx <= A_XI_TOL && hxx <= H_INV_TOL,
        detail: format!(
            "|mu(1,2)-1|={mu_err:.1e} |Lxi+mu xi|={lam:.1e} |Axi.xi-mu|={axx:.1e} |H^-1xi.xi+2|={hxx:.1e}"
        ),
    }
}

pub fn criterion_6() -> CriterionResult {
    let name = "hypocoercivity algebra";
    let (mut ident, mut pzp, mut pi_a, mut norm_excess, mut formula) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY, 0.0f64);
    for h in ALGEBRA_SWEEP {
        let asm = match assembly(h, Some(ALGEBRA_SIZES)) {
            Ok(a) => a,
            Err(e) => return failed(6, name, e),
        };
        let rep = identity_checks(&asm);
        ident = ident.max(rep.worst_relative());
        pzp = pzp.max(rep.pi_z_pi);
        match aux_checks(&asm, default_alpha(h, NU)) {
            Ok(c) => {
                pi_a = pi_a.max(c.pi_left.max(c.pi_right) / c.norm_a);
                norm_excess = norm_excess.max(c.norm_a / c.norm_bound);
                formula = formula.max(c.formula_difference);
            }
            Err(e) => return failed(6, name, e),
        }
    }
    CriterionResult {
        id: 6,
        name,
        passed: ident <= IDENTITY_TOL && pzp <= PI_Z_PI_TOL && pi_a <= PI_A_TOL && norm_excess <= 1.0,
        detail: format!(
            "identities rel={ident:.1e} |PiZPi|={pzp:.1e} |A-PiA|,|APi|={pi_a:.1e} max |A|sqrt(alpha)={norm_excess:.4} two formulas differ by {formula:.1e}"
        ),
    }
}

pub fn criterion_7() -> CriterionResult {
    let name = "coercivity probe";
    let topo = &landscape().topo;
    let mut mins = Vec::new();
    let mut ratios = Vec::new();
    for (k, h) in COERCIVITY_SWEEP.into_iter().enumerate() {
        let run = || -> Result<_, String> {
            let asm = assembly(h, Some(COERCIVITY_SIZES))?;
            let a = build_a(&asm, default_alpha(h, NU)).map_err(|e| e.to_string())?;
            let rough = rough_quasimodes(&asm, topo, default_radius(topo)).map_err(|e| e.to_string())?;
            coercivity_functional(&asm, &a, &rough, COERCIVITY_DELTA0, COERCIVITY_TRIALS, 1 + k as u64)
                .map_err(|e| e.to_string())
        };
        match run() {
            Ok(r) => {
                mins.push(r.coercivity_min);
                ratios.push(r.ratio);
            }
            Err(e) => return failed(7, name, e),
        }
    }
    let positive = mins.iter().all(|&m| m > 0.0);
    let floor = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    CriterionResult {
        id: 7,
        name,
        passed: positive && spread(&ratios) <= SWEEP_FACTOR,
        detail: format!(
            "h={COERCIVITY_SWEEP:?} min form={} ratio to g={} floor={floor:.4} spread={:.3}",
            fmt_list(&mins),
            fmt_list(&ratios),
            spread(&ratios)
        ),
    }
}

pub fn criterion_8() -> CriterionResult {
    let name = "Witten gap";
    let gaps: Result<Vec<WittenGap>, String> = WITTEN_SWEEP
        .iter()
        .map(|&h| witten_gap(&assembly(h, None)?, 5).map_err(|e| e.to_string()))
        .collect();
    let gaps = match gaps {
        Ok(g) => g,
        Err(e) => return failed(8, name, e),
    };
    // λ < e^{−c/h} ⟺ c < −h ln λ: the window for c is
    // [max −h ln λ₃, min −h ln λ₂).
    let lo = gaps.iter().map(|g| -g.h * g.third().ln()).fold(f64::NEG_INFINITY, f64::max);
    let hi = gaps.iter().map(|g| -g.h * g.eigenvalues[1].max(f64::MIN_POSITIVE).ln()).fold(f64::INFINITY, f64::min);
    let c = 0.5 * (lo + hi);
    let counts: Vec<usize> = gaps
        .iter()
        .map(|g| g.eigenvalues.iter().filter(|&&e| e < (-c / g.h).exp()).count())
        .collect();
    let eps: Vec<f64> = gaps.iter().map(|g| g.epsilon).collect();
    let passed = lo < hi && c > 0.0 && counts.iter().all(|&n| n == 2) && spread(&eps) <= SWEEP_FACTOR;
    CriterionResult {
        id: 8,
        name,
        passed,
        detail: format!(
            "h={WITTEN_SWEEP:?} c window=[{lo:.4}, {hi:.4}) c={c:.4} counts={counts:?} eps={} spread={:.3}",
            fmt_list(&eps),
            spread(&eps)
        ),
    }
}

pub fn criterion_9() -> CriterionResult {
    let name = "quasimode interaction";
    let l = landscape();
    let run = || -> Result<Vec<_>, String> {
        let eik = build_ell(&l.phase, &l.topo).map_err(|e| e.to_string())?;
        let (tau, delta) = default_params(&l.topo, &eik);
        let geom = CutoffGeometry::new(&l.phase, &l.topo, &eik, tau, delta).map_err(|e| e.to_string())?;
        QUASIMODE_SWEEP
            .iter()
            .map(|&h| {
                let q = build_quasimodes(&l.phase, &l.topo, &eik, &geom, h).map_err(|e| e.to_string())?;
                interaction(&q, &QuadratureSpec::default()).map_err(|e| e.to_string())
            })
            .collect()
    };
    let reps = match run() {
        Ok(r) => r,
        Err(e) => return failed(9, name, e),
    };
    let scaled: Vec<f64> = reps.iter().map(|r| (r.ratio - 1.0) / r.h).collect();
    let same_sign = scaled.iter().all(|s| *s > 0.0) || scaled.iter().all(|s| *s < 0.0);
    let abs: Vec<f64> = scaled.iter().map(|s| s.abs()).collect();
    let inv_h: Vec<f64> = reps.iter().map(|r| 1.0 / r.h).collect();
    let log_h: Vec<f64> = reps.iter().map(|r| r.h.ln()).collect();
    let log_pn: Vec<f64> = reps.iter().map(|r| r.p_norm_ratio.ln()).collect();
    let (exponent, _) = linear_fit(&log_h, &log_pn);
    let log_gram: Vec<f64> = reps.iter().map(|r| r.gram[0][1].abs().max(f64::MIN_POSITIVE).ln()).collect();
    let (gram_slope, _) = linear_fit(&inv_h, &log_gram);
    let decay = -gram_slope;
    let diag = reps.iter().map(|r| (r.gram[0][0] - 1.0).abs().max((r.gram[1][1] - 1.0).abs())).fold(0.0, f64::max);
    let passed = same_sign && spread(&abs) <= SWEEP_FACTOR && exponent >= P_NORM_EXPONENT_MIN && decay > 0.0 && diag < 1e-8;
    CriterionResult {
        id: 9,
        name,
        passed,
        detail: format!(
            "h={QUASIMODE_SWEEP:?} (ratio-1)/h={} spread={:.3}; |P phi|^2/<P phi,phi> exponent={exponent:.3} (min {P_NORM_EXPONENT_MIN}); gram offdiag={} decay rate={decay:.4} diag err={diag:.1e}",
            fmt_list(&scaled),
            spread(&abs),
            fmt_list(&reps.iter().map(|r| r.gram[0][1]).collect::<Vec<_>>())
        ),
    }
}

pub fn criterion_10() -> CriterionResult {
    let name = "SDE consistency";
    let l = landscape();
    let mut eq = SdeConfig::new(l.potential.clone(), GAMMA, NU, SDE_EQ_H);
    eq.trajectories = SDE_EQ_TRAJECTORIES;
    eq.horizon = SDE_EQ_TIME;
    eq.burn_in = 50.0;
    let moments = match simulate(&eq) {
        Ok(s) => s.moments.expect("simulate fills moments"),
        Err(e) => return failed(10, name, e),
    };
    let (zv, zy) = (moments.var_v.z_score(SDE_EQ_H), moments.var_y.z_score(SDE_EQ_H));
    let mean_times = |sweep: &[f64]| -> Result<Vec<f64>, String> {
        sweep
            .iter()
            .map(|&h| {
                let cfg = SdeConfig::new(l.potential.clone(), GAMMA, NU, h);
                transition_times(&cfg, &l.topo, SDE_TRANSITIONS)
                    .map(|s| s.transitions.expect("transition run").mean)
                    .map_err(|e| e.to_string())
            })
            .collect()
    };
    let slope_of = |sweep: &[f64], means: &[f64]| {
        let inv_h: Vec<f64> = sweep.iter().map(|h| 1.0 / h).collect();
        let logs: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        linear_fit(&inv_h, &logs).0
    };
    let (means, low) = match (mean_times(&SDE_SWEEP), mean_times(&SDE_LOW_SWEEP)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return failed(10, name, e),
    };
    let s = l.topo.barrier;
    let slope = slope_of(&SDE_SWEEP, &means);
    let slope_err = (slope / s - 1.0).abs();
    let low_slope = slope_of(&SDE_LOW_SWEEP, &low);
    let monotone = means.windows(2).all(|w| w[1] > w[0]);
    let k = SDE_SWEEP.iter().position(|&h| h == SDE_EQ_H).expect("h = 0.2 in sweep");
    let ek = eyring_kramers_rate(&l.topo, GAMMA, SDE_EQ_H).expect("rate").lambda;
    // P is h times the conjugated generator, so 1/λ in the clock of P is
    // h/λ in the clock of the SDE.
    let time_ratio = means[k] / (SDE_EQ_H / ek);
    let passed = zv <= Z_MAX
        && zy <= Z_MAX
        && monotone
        && slope_err <= SDE_SLOPE_TOL
        && (SDE_TIME_BAND.0..=SDE_TIME_BAND.1).contains(&time_ratio);
    CriterionResult {
        id: 10,
        name,
        passed,
        detail: format!(
            "Var(v)={:.5}±{:.1e} (z={zv:.2}) Var(y)={:.5}±{:.1e} (z={zy:.2}); mean times h={SDE_SWEEP:?}: {} monotone={monotone}; slope={slope:.4} vs S={s:.4} ({:.1}%, tol {:.0}%) [h={SDE_LOW_SWEEP:?}: slope={low_slope:.4}, {:.1}%]; mean time at h=0.2 / (h/lambda_EK)={time_ratio:.3} [heuristic; ratio to 1/lambda_EK={:.3}]",
            moments.var_v.value,
            moments.var_v.standard_error,
            moments.var_y.value,
            moments.var_y.standard_error,
            fmt_list(&means),
            100.0 * slope_err,
            100.0 * SDE_SLOPE_TOL,
            100.0 * (low_slope / s - 1.0).abs(),
            means[k] * ek
        ),
    }
}

pub fn criterion(id: u8) -> Option<CriterionResult> {
    Some(match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(),
        10 => criterion_10(),
        _ => return None,
    })
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=10).filter_map(criterion).collect()
}
