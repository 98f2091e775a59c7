//! Global quasimodes for the double well: cutoff geometry, the error-function
//! profile `χ_ℓ`, and the interaction quantities computed by quadrature.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::Serialize;
use statrs::function::erf::erf;
use thiserror::Error;

use crate::hypo::plateau;
use crate::potential::{DoubleWellTopology, ExtendedPhase, Point3};
use crate::rates::eyring_kramers_rate;
use crate::wkb::{EikonalData, Poly, WkbError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuasimodeError {
    #[error("cutoff geometry is not admissible: {0}")]
    Geometry(String),
    #[error(transparent)]
    Wkb(#[from] WkbError),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Composite Gauss–Legendre rule on `[a, b]` with panel breaks at `breaks`.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    /// `panels` equal panels with `order` points each.
    pub fn uniform(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let breaks: Vec<f64> = (0..=panels).map(|k| a + (b - a) * k as f64 / panels as f64).collect();
        Self::with_breaks(&breaks, order)
    }

    pub fn with_breaks(breaks: &[f64], order: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(order.max(1)).expect("nonzero"));
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            for &(x, wt) in rule.as_node_weight_pairs() {
                nodes.push(0.5 * ((b - a) * x + b + a));
                weights.push(0.5 * (b - a) * wt);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn gl_breaks(a: f64, b: f64, width: f64) -> Vec<f64> {
    let panels = (((b - a) / width).ceil() as usize).max(1);
    (0..=panels).map(|k| a + (b - a) * k as f64 / panels as f64).collect()
}

/// `∫₀^{ℓ} ζ(r/τ) e^{−r²/2h} dr` for `ℓ ≥ 0`.
fn profile_integral(l: f64, tau: f64, h: f64) -> f64 {
    let flat = l.min(tau);
    let mut out = (PI * h / 2.0).sqrt() * erf(flat / (2.0 * h).sqrt());
    if l > tau {
        let top = l.min(2.0 * tau);
        let rule = CompositeRule::with_breaks(&gl_breaks(tau, top, 0.5 * h.sqrt()), 8);
        out += rule.integrate(|r| plateau(r / tau) * (-r * r / (2.0 * h)).exp());
    }
    out
}

/// `C_h = ½∫ζ(r/τ)e^{−r²/2h}dr`.
pub fn normalization_ch(tau: f64, h: f64) -> f64 {
    profile_integral(2.0 * tau, tau, h)
}

/// `½∫ζ(r)e^{−r²/2h}dr` for an arbitrary even profile supported in
/// `[−support, support]`.
pub fn normalization_with_profile(profile: impl Fn(f64) -> f64, support: f64, h: f64) -> f64 {
    let rule = CompositeRule::with_breaks(&gl_breaks(0.0, support, 0.25 * h.sqrt()), 10);
    rule.integrate(|r| profile(r) * (-r * r / (2.0 * h)).exp())
}

/// `C_h⁻¹∫₀^ℓ ζ(r/τ)e^{−r²/2h}dr`; odd in `ℓ` and `±1` for `|ℓ| ≥ 2τ`.
pub fn chi_of_ell(l: f64, tau: f64, h: f64, ch: f64) -> f64 {
    if l.abs() >= 2.0 * tau {
        return l.signum();
    }
    l.signum() * profile_integral(l.abs(), tau, h) / ch
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// `C_{4τ,4δ}`, the component of the strip around `s`.
    Core,
    /// `E⁺`, containing `m̂`.
    Plus,
    /// `E⁻`, containing `m̲`.
    Minus,
    /// Outside `{f ≤ f(s) + 4δ}`.
    Outside,
}

/// Sublevel-set regions on the `(x, ξ·(X − s))` plane.
#[derive(Debug, Clone, Serialize)]
pub struct CutoffGeometry {
    pub tau: f64,
    pub delta: f64,
    pub f_saddle: f64,
    pub saddle: f64,
    pub xi: [f64; 3],
    pub x_range: (f64, f64),
    pub p_range: (f64, f64),
    pub grid: (usize, usize),
    #[serde(skip)]
    labels: Vec<Region>,
}

impl CutoffGeometry {
    pub fn new(
        phase: &ExtendedPhase,
        topo: &DoubleWellTopology,
        eik: &EikonalData,
        tau: f64,
        delta: f64,
    ) -> Result<Self, QuasimodeError> {
        if !(tau > 0.0 && delta > 0.0) {
            return Err(QuasimodeError::Parameter(format!("tau = {tau}, delta = {delta}")));
        }
        let v = &phase.potential;
        let s = topo.saddle.x;
        let f_s = 0.5 * topo.v_saddle;
        let level = f_s + 4.0 * delta;
        let xi = [eik.xi[0], eik.xi[1], eik.xi[2]];
        if xi[1] == 0.0 {
            return Err(QuasimodeError::Geometry("ξ has no velocity component".into()));
        }
        let (lo, hi) = v.search_box();
        let scan = 4000;
        let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut pr = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=scan {
            let x = lo + (hi - lo) * k as f64 / scan as f64;
            let room = level - 0.5 * v.value(x);
            if room >= 0.0 {
                xr = (xr.0.min(x), xr.1.max(x));
                let half = xi[1].abs() * 2.0 * room.sqrt();
                let c = xi[0] * (x - s);
                pr = (pr.0.min(c - half), pr.1.max(c + half));
            }
        }
        if !xr.0.is_finite() {
            return Err(QuasimodeError::Geometry("empty sublevel set".into()));
        }
        let pad = 0.02 * (xr.1 - xr.0);
        xr = (xr.0 - pad, xr.1 + pad);
        let padp = 0.02 * (pr.1 - pr.0);
        pr = (pr.0 - padp, pr.1 + padp);
        let (nx, np) = (600, 600);
        let mut geom = Self {
            tau,
            delta,
            f_saddle: f_s,
            saddle: s,
            xi,
            x_range: xr,
            p_range: pr,
            grid: (nx, np),
            labels: vec![Region::Outside; nx * np],
        };
        let inside: Vec<bool> = (0..nx * np)
            .map(|k| {
                let (x, p) = geom.cell_center(k % nx, k / nx);
                let vel = (p - xi[0] * (x - s)) / xi[1];
                0.5 * v.value(x) + 0.25 * vel * vel <= level
            })
            .collect();
        let strip = |k: usize| geom.cell_center(k % nx, k / nx).1.abs() <= 4.0 * tau;
        let start = geom.cell_of(s, 0.0);
        if !inside[start] {
            return Err(QuasimodeError::Geometry("saddle cell outside the sublevel set".into()));
        }
        let core = flood(nx, np, start, |k| inside[k] && strip(k));
        let plus_start = geom.cell_of(topo.m_hat.x, xi[0] * (topo.m_hat.x - s));
        if core[plus_start] || !inside[plus_start] {
            return Err(QuasimodeError::Geometry(format!("m̂ is not in E⁺ (4τ = {})", 4.0 * tau)));
        }
        let plus = flood(nx, np, plus_start, |k| inside[k] && !core[k]);
        let minus_start = geom.cell_of(topo.m_under.x, xi[0] * (topo.m_under.x - s));
        if core[minus_start] || plus[minus_start] || !inside[minus_start] {
            return Err(QuasimodeError::Geometry("m̲ is not in E⁻".into()));
        }
        for k in 0..nx * np {
            geom.labels[k] = if !inside[k] {
                Region::Outside
            } else if core[k] {
                Region::Core
            } else if plus[k] {
                Region::Plus
            } else {
                Region::Minus
            };
        }
        Ok(geom)
    }

    fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let (nx, np) = self.grid;
        let x = self.x_range.0 + (i as f64 + 0.5) * (self.x_range.1 - self.x_range.0) / nx as f64;
        let p = self.p_range.0 + (j as f64 + 0.5) * (self.p_range.1 - self.p_range.0) / np as f64;
        (x, p)
    }

    fn cell_index(&self, x: f64, p: f64) -> Option<(usize, usize)> {
        let (nx, np) = self.grid;
        let fi = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0) * nx as f64;
        let fj = (p - self.p_range.0) / (self.p_range.1 - self.p_range.0) * np as f64;
        if fi < 0.0 || fj < 0.0 || fi >= nx as f64 || fj >= np as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    fn cell_of(&self, x: f64, p: f64) -> usize {
        let (i, j) = self.cell_index(x, p).unwrap_or((0, 0));
        j * self.grid.0 + i
    }

    /// `ξ·(X − s)`.
    pub fn coordinate(&self, p: &Point3) -> f64 {
        self.xi[0] * (p[0] - self.saddle) + self.xi[1] * p[1] + self.xi[2] * p[2]
    }

    pub fn region(&self, phase: &ExtendedPhase, p: &Point3) -> Region {
        if phase.f(p) > self.f_saddle + 4.0 * self.delta {
            return Region::Outside;
        }
        let q = self.coordinate(p);
        let Some((i, j)) = self.cell_index(p[0], q) else {
            return Region::Outside;
        };
        let (nx, np) = self.grid;
        // points inside the level set whose cell centre falls outside take
        // the label of the nearest labelled neighbour
        for r in 0..=3usize {
            let mut found = None;
            for dj in -(r as isize)..=(r as isize) {
                for di in -(r as isize)..=(r as isize) {
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    if ii < 0 || jj < 0 || ii >= nx as isize || jj >= np as isize {
                        continue;
                    }
                    let lab = self.labels[jj as usize * nx + ii as usize];
                    if lab != Region::Outside {
                        found = Some(lab);
                    }
                }
            }
            if found.is_some() {
                // the strip test is exact, so only the component is read from the grid
                let lab = found.unwrap_or(Region::Outside);
                if lab == Region::Core && q.abs() > 4.0 * self.tau {
                    return if q > 0.0 { Region::Plus } else { Region::Minus };
                }
                return lab;
            }
        }
        Region::Outside
    }

    /// `θ`: 1 on `{f ≤ f(s) + δ}`, 0 outside `{f ≤ f(s) + 2δ}`.
    pub fn theta(&self, f: f64) -> f64 {
        let t = (f - self.f_saddle - self.delta) / self.delta;
        plateau(1.0 + t.max(0.0))
    }
}

fn flood(nx: usize, np: usize, start: usize, ok: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; nx * np];
    if !ok(start) {
        return seen;
    }
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(k) = queue.pop_front() {
        let (i, j) = (k % nx, k / nx);
        let mut push = |kk: usize| {
            if !seen[kk] && ok(kk) {
                seen[kk] = true;
                queue.push_back(kk);
            }
        };
        if i > 0 {
            push(k - 1);
        }
        if i + 1 < nx {
            push(k + 1);
        }
        if j > 0 {
            push(k - nx);
        }
        if j + 1 < np {
            push(k + nx);
        }
    }
    seen
}

/// Polynomial flattened for fast evaluation.
#[derive(Debug, Clone)]
struct Flat {
    terms: Vec<([usize; 3], f64)>,
}

impl Flat {
    fn new(p: &Poly) -> Self {
        Self { terms: p.terms().map(|(e, &c)| ([e[0] as usize, e[1] as usize, e[2] as usize], c)).collect() }
    }

    fn eval(&self, pw: &[[f64; 8]; 3]) -> f64 {
        self.terms.iter().map(|(e, c)| c * pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2]]).sum()
    }
}

fn powers(u: &Point3) -> [[f64; 8]; 3] {
    let mut out = [[1.0; 8]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for k in 1..8 {
            row[k] = row[k - 1] * u[i];
        }
    }
    out
}

/// Default `(τ, δ)`: `τ = 0.225 · min(|ξ·(m − s)|)` over both minima and
/// `δ = S/8`.
pub fn default_params(topo: &DoubleWellTopology, eik: &EikonalData) -> (f64, f64) {
    let s = topo.saddle.x;
    let reach = (eik.xi[0] * (topo.m_hat.x - s)).abs().min((eik.xi[0] * (topo.m_under.x - s)).abs());
    (0.225 * reach, topo.barrier / 8.0)
}

/// Both quasimodes at one `h`, with everything needed to evaluate them.
#[derive(Debug, Clone)]
pub struct Quasimodes {
    pub h: f64,
    pub ch: f64,
    pub geometry: CutoffGeometry,
    pub phase: ExtendedPhase,
    pub topo: DoubleWellTopology,
    pub eik: EikonalData,
    ell: Flat,
    grad: [Flat; 3],
    dvv: Flat,
}

pub fn build_quasimodes(
    phase: &ExtendedPhase,
    topo: &DoubleWellTopology,
    eik: &EikonalData,
    geometry: &CutoffGeometry,
    h: f64,
) -> Result<Quasimodes, QuasimodeError> {
    if !(h > 0.0) {
        return Err(QuasimodeError::Parameter(format!("h = {h}")));
    }
    let s_point = [topo.saddle.x, 0.0, 0.0];
    if geometry.region(phase, &s_point) != Region::Core {
        return Err(QuasimodeError::Geometry("s is not interior to C".into()));
    }
    let ell = eik.ell(h);
    let g = ell.gradient();
    Ok(Quasimodes {
        h,
        ch: normalization_ch(geometry.tau, h),
        geometry: geometry.clone(),
        phase: phase.clone(),
        topo: topo.clone(),
        eik: eik.clone(),
        dvv: Flat::new(&g[1].deriv(1)),
        grad: [Flat::new(&g[0]), Flat::new(&g[1]), Flat::new(&g[2])],
        ell: Flat::new(&ell),
    })
}

/// Local WKB data at one point.
struct LocalData {
    ell: f64,
    grad: [f64; 3],
    dvv: f64,
}

impl Quasimodes {
    fn local(&self, p: &Point3) -> LocalData {
        let pw = powers(&self.eik.local(p));
        LocalData {
            ell: self.ell.eval(&pw),
            grad: [self.grad[0].eval(&pw), self.grad[1].eval(&pw), self.grad[2].eval(&pw)],
            dvv: self.dvv.eval(&pw),
        }
    }

    pub fn ell(&self, p: &Point3) -> f64 {
        self.ell.eval(&powers(&self.eik.local(p)))
    }

    /// `χ_ℓ(X)`; `None` outside `{f ≤ f(s) + 4δ}`.
    pub fn chi(&self, p: &Point3) -> Option<f64> {
        match self.geometry.region(&self.phase, p) {
            Region::Plus => Some(1.0),
            Region::Minus => Some(-1.0),
            Region::Core => Some(chi_of_ell(self.ell(p), self.geometry.tau, self.h, self.ch)),
            Region::Outside => None,
        }
    }

    /// `ψ_m̲ = 2e^{−(f − f(m̲))/h}`.
    pub fn psi_under(&self, p: &Point3) -> f64 {
        2.0 * (-(self.phase.f(p) - 0.5 * self.topo.v_m_under) / self.h).exp()
    }

    /// `ψ_m̂ = θ(χ_ℓ + 1)e^{−(f − f(m̂))/h}`.
    pub fn psi_hat(&self, p: &Point3) -> f64 {
        let f = self.phase.f(p);
        let theta = self.geometry.theta(f);
        if theta == 0.0 {
            return 0.0;
        }
        match self.chi(p) {
            Some(c) => theta * (c + 1.0) * (-(f - 0.5 * self.topo.v_m_hat) / self.h).exp(),
            None => 0.0,
        }
    }

    /// `w = (±b + 2A∇f)·∇ℓ + ℓA∇ℓ·∇ℓ − h div A∇ℓ`; the minus sign gives the
    /// adjoint residual.
    fn residual(&self, p: &Point3, d: &LocalData, adjoint: bool) -> f64 {
        let b = self.phase.drift(p, self.h);
        let gf = self.phase.grad_f(p);
        let gamma = self.phase.gamma;
        let sg = if adjoint { -1.0 } else { 1.0 };
        let field = [sg * b[0], sg * b[1] + 2.0 * gamma * gf[1], sg * b[2]];
        let transport: f64 = (0..3).map(|i| field[i] * d.grad[i]).sum();
        transport + d.ell * gamma * d.grad[1] * d.grad[1] - self.h * gamma * d.dvv
    }
}

/// Tensor composite Gauss–Legendre over `X = c + L u`, `u ∈ [−W, W]³`.
fn gauss_box<const K: usize>(
    center: &Point3,
    l: &Matrix3<f64>,
    half_width: f64,
    panels: usize,
    order: usize,
    f: impl Fn(&Point3) -> [f64; K],
) -> [f64; K] {
    let rule = CompositeRule::uniform(-half_width, half_width, panels, order);
    let jac = l.determinant().abs();
    let mut acc = [0.0; K];
    for (&a, &wa) in rule.nodes.iter().zip(&rule.weights) {
        for (&b, &wb) in rule.nodes.iter().zip(&rule.weights) {
            for (&c, &wc) in rule.nodes.iter().zip(&rule.weights) {
                let u = Vector3::new(a, b, c);
                let x = l * u;
                let p = [center[0] + x[0], center[1] + x[1], center[2] + x[2]];
                let vals = f(&p);
                let w = wa * wb * wc;
                for k in 0..K {
                    acc[k] += w * vals[k];
                }
            }
        }
    }
    acc.map(|v| v * jac)
}

/// `L` with `L Lᵀ = (h/2) M⁻¹`, so that `e^{−XᵀMX/h} = e^{−|u|²/2}`.
fn gaussian_frame(m: &Matrix3<f64>, h: f64) -> Matrix3<f64> {
    let cov = m.try_inverse().expect("positive definite") * (0.5 * h);
    cov.cholesky().expect("positive definite").l()
}

/// Quadrature settings shared by every integral.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureSpec {
    pub half_width: f64,
    pub panels: usize,
    pub order: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { half_width: 8.0, panels: 16, order: 6 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InteractionReport {
    pub h: f64,
    pub tau: f64,
    pub delta: f64,
    pub ch: f64,
    pub norm_psi_under: f64,
    pub norm_psi_hat: f64,
    /// `‖ψ_m‖ D_m^{1/2} / (2(πh)^{3/4})`.
    pub laplace_under: f64,
    pub laplace_hat: f64,
    pub gram: [[f64; 2]; 2],
    /// `⟨Pφ_m̂, φ_m̂⟩`.
    pub rayleigh: f64,
    pub lambda_ek: f64,
    pub ratio: f64,
    /// `‖Pφ_m̂‖²`.
    pub p_norm_sq: f64,
    /// `‖P*φ_m̂‖²`.
    pub adjoint_norm_sq: f64,
    /// `‖Pφ_m̂‖² / ⟨Pφ_m̂, φ_m̂⟩`.
    pub p_norm_ratio: f64,
    /// Eigenvalues of the 2×2 interaction matrix, ascending.
    pub eigenvalues: [f64; 2],
    /// `(‖Pφ_m̂‖ + ‖P*φ_m̂‖)/√λ̃ + |⟨φ_m̂, φ_m̲⟩|`, the relative size of the
    /// neglected corrections.
    pub error_budget: f64,
    /// Relative size of what the boxes and the `θ` transition leave out:
    /// `e^{−2δ/h}` plus the Gaussian tail outside `|u| ≤ W`.
    pub exterior_relative: f64,
    /// `(A∇ℓ₀·∇ℓ₀)(s) − μ`.
    pub saddle_flux_defect: f64,
}

/// Interaction quantities of the two quasimodes.
pub fn interaction(q: &Quasimodes, spec: &QuadratureSpec) -> Result<InteractionReport, QuasimodeError> {
    let h = q.h;
    let topo = &q.topo;
    let phase = &q.phase;
    let gamma = phase.gamma;
    let (f_under, f_hat, f_s) = (0.5 * topo.v_m_under, 0.5 * topo.v_m_hat, 0.5 * topo.v_saddle);
    let tau = q.geometry.tau;

    // saddle box: weight e^{−2(f + ℓ²/2 − f(s))/h}
    let s_point = [topo.saddle.x, 0.0, 0.0];
    let m_s = q.eik.hess + q.eik.pi_xi;
    let l_s = gaussian_frame(&m_s, h);
    let [pp, pn, pa] = gauss_box::<3>(&s_point, &l_s, spec.half_width, spec.panels, spec.order, |p| {
        let f = phase.f(p);
        let theta = q.geometry.theta(f);
        if theta == 0.0 {
            return [0.0; 3];
        }
        let d = q.local(p);
        let z = plateau(d.ell / tau);
        if z == 0.0 {
            return [0.0; 3];
        }
        let e = (-2.0 * (f + 0.5 * d.ell * d.ell - f_s) / h).exp();
        let w = q.residual(p, &d, false);
        let ws = q.residual(p, &d, true);
        let tz = theta * theta * z * z * e;
        [tz * gamma * d.grad[1] * d.grad[1], tz * w * w, tz * ws * ws]
    });
    let scale = h * h / (q.ch * q.ch) * (-2.0 * (f_s - f_hat) / h).exp();
    let (pp, pn, pa) = (pp * scale, pn * scale, pa * scale);

    // well box for ψ_m̂: weight e^{−2(f − f(m̂))/h}
    let m_point = [topo.m_hat.x, 0.0, 0.0];
    let l_m = gaussian_frame(&phase.hess_f(&m_point), h);
    let gap = (f_hat - f_under) / h;
    let [n_hat, cross] = gauss_box::<2>(&m_point, &l_m, spec.half_width, spec.panels, spec.order, |p| {
        let psi = q.psi_hat(p);
        [psi * psi, psi * 2.0 * (-(phase.f(p) - f_hat) / h - gap).exp()]
    });

    // ψ_m̲: separable, 2πh from (v, y) and a one-dimensional x integral
    let (lo, hi) = phase.potential.search_box();
    let rule = CompositeRule::with_breaks(&gl_breaks(lo, hi, 0.25 * h.sqrt()), 8);
    let x_int = rule.integrate(|x| (-(phase.potential.value(x) - topo.v_m_under) / h).exp());
    let n_under = 4.0 * 2.0 * PI * h * x_int;

    let norm_hat = n_hat.sqrt();
    let norm_under = n_under.sqrt();
    let off = cross / (norm_hat * norm_under);
    let rayleigh = pp / n_hat;
    let ek = eyring_kramers_rate(topo, gamma, h)
        .map_err(|e| QuasimodeError::Parameter(e.to_string()))?;
    let p_norm_sq = pn / n_hat;
    let adjoint_norm_sq = pa / n_hat;
    let laplace = |norm: f64, d: f64| norm * d.sqrt() / (2.0 * (PI * h).powf(0.75));
    let tail = 3.0 * statrs::function::erf::erfc(spec.half_width / 2f64.sqrt());
    let g0 = q.eik.ell0().gradient();
    let flux = gamma * g0[1].eval(&[0.0; 3]).powi(2) - q.eik.mu;
    let mat = Matrix2::new(0.0, 0.0, 0.0, rayleigh);
    let mut eigs = [mat[(0, 0)], mat[(1, 1)]];
    eigs.sort_by(|a, b| a.total_cmp(b));
    Ok(InteractionReport {
        h,
        tau,
        delta: q.geometry.delta,
        ch: q.ch,
        norm_psi_under: norm_under,
        norm_psi_hat: norm_hat,
        laplace_under: laplace(norm_under, topo.d_m_under),
        laplace_hat: laplace(norm_hat, topo.d_m_hat),
        gram: [[1.0, off], [off, 1.0]],
        rayleigh,
        lambda_ek: ek.lambda,
        ratio: rayleigh / ek.lambda,
        p_norm_sq,
        adjoint_norm_sq,
        p_norm_ratio: p_norm_sq / rayleigh,
        eigenvalues: eigs,
        error_budget: (p_norm_sq.sqrt() + adjoint_norm_sq.sqrt()) / rayleigh.sqrt() + off.abs(),
        exterior_relative: (-2.0 * q.geometry.delta / h).exp() + tail,
        saddle_flux_defect: flux,
    })
}

/// Largest jump of `χ_ℓ` across the strip edges `|ξ·(X − s)| = 4τ`, sampled
/// on `n` lines inside `{f ≤ f(s) + 4δ}`.
pub fn chi_boundary_jump(q: &Quasimodes, n: usize) -> f64 {
    let g = &q.geometry;
    let eps = 1e-7;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let x = g.x_range.0 + (g.x_range.1 - g.x_range.0) * (k as f64 + 0.5) / n as f64;
        for edge in [-4.0 * g.tau, 4.0 * g.tau] {
            for y in [0.0, 0.3 * q.h.sqrt()] {
                let at = |p: f64| {
                    let v = (p - g.xi[0] * (x - g.saddle)) / g.xi[1];
                    [x, v, y]
                };
                let (pin, pout) = (at(edge * (1.0 - eps)), at(edge * (1.0 + eps)));
                if q.phase.f(&pin) > g.f_saddle + 4.0 * g.delta || q.phase.f(&pout) > g.f_saddle + 4.0 * g.delta {
                    continue;
                }
                if g.region(&q.phase, &pin) != Region::Core {
                    continue;
                }
                if let (Some(a), Some(b)) = (q.chi(&pin), q.chi(&pout)) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{double_well, extended_phase, Potential};
    use crate::wkb::build_ell;

    fn setup(h: f64) -> Quasimodes {
        let v = Potential::tilted_quartic();
        let phase = extended_phase(&v, 1.0, 1.0).unwrap();
        let topo = double_well(&v).unwrap();
        let eik = build_ell(&phase, &topo).unwrap();
        let (tau, delta) = default_params(&topo, &eik);
        let geom = CutoffGeometry::new(&phase, &topo, &eik, tau, delta).unwrap();
        build_quasimodes(&phase, &topo, &eik, &geom, h).unwrap()
    }

    #[test]
    fn ch_against_gaussian_integrals() {
        for h in [0.01, 0.003, 0.001] {
            let tau = 0.3;
            let ch = normalization_ch(tau, h);
            // high-order oracle of the same integral on a fine uniform rule
            let oracle = CompositeRule::uniform(0.0, 2.0 * tau, 4000, 12)
                .integrate(|r| plateau(r / tau) * (-r * r / (2.0 * h)).exp());
            assert!((ch / oracle - 1.0).abs() < 1e-10, "{ch} {oracle}");
            let dev = (ch * (2.0 / (PI * h)).sqrt() - 1.0).abs();
            assert!(dev <= (-tau * tau / (4.0 * h)).exp(), "{dev}");
        }
        let h: f64 = 0.02;
        let full = normalization_with_profile(|_| 1.0, 40.0 * h.sqrt(), h);
        assert!((full - 0.5 * (2.0 * PI * h).sqrt()).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 1..20 {
            let c = normalization_ch(0.02 * k as f64, 0.01);
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn chi_is_odd_and_saturates() {
        let (tau, h) = (0.25, 0.01);
        let ch = normalization_ch(tau, h);
        assert_eq!(chi_of_ell(0.0, tau, h, ch), 0.0);
        for l in [0.01, 0.1, 0.3, 0.45] {
            assert!((chi_of_ell(l, tau, h, ch) + chi_of_ell(-l, tau, h, ch)).abs() < 1e-15);
        }
        assert_eq!(chi_of_ell(0.6, tau, h, ch), 1.0);
        assert!((chi_of_ell(2.0 * tau - 1e-12, tau, h, ch) - 1.0).abs() < 1e-10);
        let mut prev = -1.0;
        for k in 0..=200 {
            let c = chi_of_ell(-0.6 + 1.2 * k as f64 / 200.0, tau, h, ch);
            assert!((-1.0..=1.0).contains(&c) && c >= prev - 1e-15);
            prev = c;
        }
    }

    #[test]
    fn regions_and_pointwise_values() {
        let q = setup(0.01);
        let t = &q.topo;
        let s = [t.saddle.x, 0.0, 0.0];
        assert_eq!(q.geometry.region(&q.phase, &s), Region::Core);
        // ℓ(s) = hℓ₁,₀, so χ_ℓ vanishes at s only to leading order
        assert_eq!(q.eik.ell0().eval(&[0.0; 3]), 0.0);
        let at_s = chi_of_ell(q.h * q.eik.ell1_0, q.geometry.tau, q.h, q.ch);
        assert_eq!(q.chi(&s), Some(at_s));
        assert!(at_s.abs() < q.h.sqrt());
        let mh = [t.m_hat.x, 0.0, 0.0];
        assert_eq!(q.geometry.region(&q.phase, &mh), Region::Plus);
        assert!((q.psi_hat(&mh) - 2.0).abs() < 1e-12);
        let mu = [t.m_under.x, 0.0, 0.0];
        assert_eq!(q.geometry.region(&q.phase, &mu), Region::Minus);
        assert_eq!(q.psi_hat(&mu), 0.0);
        assert!((q.psi_under(&mu) - 2.0).abs() < 1e-12);
        // flipping the phase flips χ near the saddle
        let flipped = Quasimodes { ell: Flat::new(&q.eik.flipped().ell(q.h)), ..q.clone() };
        let near = [t.saddle.x + 0.02, 0.01, -0.01];
        let (a, b) = (q.chi(&near).unwrap(), flipped.chi(&near).unwrap());
        assert!(a != 0.0 && (a + b).abs() < 1e-14);
        assert!(chi_boundary_jump(&q, 200) < 1e-8);
    }

    #[test]
    fn inadmissible_geometry_is_reported() {
        let v = Potential::tilted_quartic();
        let phase = extended_phase(&v, 1.0, 1.0).unwrap();
        let topo = double_well(&v).unwrap();
        let eik = build_ell(&phase, &topo).unwrap();
        assert!(matches!(
            CutoffGeometry::new(&phase, &topo, &eik, 2.0, topo.barrier / 8.0),
            Err(QuasimodeError::Geometry(_))
        ));
    }

    #[test]
    fn interaction_at_small_h() {
        let q = setup(0.005);
        let rep = interaction(&q, &QuadratureSpec::default()).unwrap();
        assert!(rep.rayleigh > 0.0);
        assert!((rep.ratio - 1.0).abs() < 0.2, "{rep:?}");
        assert!(rep.saddle_flux_defect.abs() < 1e-12);
        assert!((rep.laplace_hat - 1.0).abs() < 0.1 && (rep.laplace_under - 1.0).abs() < 0.1, "{rep:?}");
        assert!(rep.gram[0][1].abs() < 1e-6 && rep.gram[0][1] == rep.gram[1][0]);
        assert_eq!(rep.eigenvalues[0], 0.0);
    }
}
