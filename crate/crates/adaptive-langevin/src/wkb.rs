//! Local WKB phase at the saddle: the eikonal equation is solved to third
//! order and the transport equation to first order, degree by degree, in the
//! space of homogeneous polynomials of `X − s`.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::potential::{CriticalPoint, DoubleWellTopology, ExtendedPhase, Point3};
use crate::rates::mu_of_saddle;

/// Number of phase-space variables `2d + 1` for `d = 1`.
pub const NVARS: usize = 3;

pub type Exponent = [u8; NVARS];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WkbError {
    #[error("critical point at x = {x} has index {index}, expected a saddle (index 1)")]
    Topology { x: f64, index: usize },
    #[error("near-resonant operator on degree-{degree} polynomials (condition number {condition:e})")]
    NearResonant { degree: usize, condition: f64 },
    #[error("monomial {exponent:?} does not have degree {degree}")]
    WrongDegree { exponent: Exponent, degree: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

fn total(e: &Exponent) -> usize {
    e.iter().map(|&k| k as usize).sum()
}

/// Sparse polynomial in `(x, v, y)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly {
    terms: BTreeMap<Exponent, f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial([0; NVARS], c)
    }

    pub fn var(i: usize) -> Self {
        let mut e = [0; NVARS];
        e[i] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn monomial(e: Exponent, c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(e, c);
        p
    }

    /// `Σ cᵢ Xᵢ`.
    pub fn linear(c: &[f64; NVARS]) -> Self {
        let mut p = Self::zero();
        for (i, &ci) in c.iter().enumerate() {
            let mut e = [0; NVARS];
            e[i] = 1;
            p.add_term(e, ci);
        }
        p
    }

    pub fn add_term(&mut self, e: Exponent, c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(e).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.remove(&e);
        }
    }

    pub fn coef(&self, e: &Exponent) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &f64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.terms.keys().map(total).max()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero();
        for (e, c) in &self.terms {
            p.add_term(*e, c * s);
        }
        p
    }

    /// `∂/∂Xᵢ`.
    pub fn deriv(&self, i: usize) -> Self {
        let mut p = Self::zero();
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = *e;
                f[i] -= 1;
                p.add_term(f, c * e[i] as f64);
            }
        }
        p
    }

    pub fn gradient(&self) -> [Poly; NVARS] {
        [self.deriv(0), self.deriv(1), self.deriv(2)]
    }

    /// Homogeneous part of degree `j`.
    pub fn part(&self, j: usize) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| total(e) == j)
                .map(|(e, c)| (*e, *c))
                .collect(),
        }
    }

    /// Terms of degree `≤ k`.
    pub fn truncate(&self, k: usize) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| total(e) <= k)
                .map(|(e, c)| (*e, *c))
                .collect(),
        }
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: &Point3) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32))
            .sum()
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(*e, *c);
        }
        p
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(*e, -c);
        }
        p
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut p = Poly::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                p.add_term(e, ca * cb);
            }
        }
        p
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Serialize for Poly {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.terms.iter())
    }
}

/// Monomials of degree `j` in graded lexicographic order (`x` before `v`
/// before `y`).
pub fn monomial_basis(j: usize) -> Vec<Exponent> {
    let mut out = Vec::new();
    for a in (0..=j).rev() {
        for b in (0..=j - a).rev() {
            out.push([a as u8, b as u8, (j - a - b) as u8]);
        }
    }
    out
}

/// Homogeneous polynomial of a fixed degree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousPolynomial {
    degree: usize,
    poly: Poly,
}

impl HomogeneousPolynomial {
    pub fn zero(degree: usize) -> Self {
        Self { degree, poly: Poly::zero() }
    }

    pub fn new(degree: usize, poly: Poly) -> Result<Self, WkbError> {
        if let Some((e, _)) = poly.terms().find(|(e, _)| total(e) != degree) {
            return Err(WkbError::WrongDegree { exponent: *e, degree });
        }
        Ok(Self { degree, poly })
    }

    pub fn from_coefficients(degree: usize, coefs: &[f64]) -> Self {
        let basis = monomial_basis(degree);
        assert_eq!(basis.len(), coefs.len());
        let mut poly = Poly::zero();
        for (e, c) in basis.iter().zip(coefs) {
            poly.add_term(*e, *c);
        }
        Self { degree, poly }
    }

    /// Coefficients in [`monomial_basis`] order.
    pub fn coefficients(&self) -> Vec<f64> {
        monomial_basis(self.degree).iter().map(|e| self.poly.coef(e)).collect()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nvars(&self) -> usize {
        NVARS
    }

    pub fn as_poly(&self) -> &Poly {
        &self.poly
    }

    pub fn eval(&self, x: &Point3) -> f64 {
        self.poly.eval(x)
    }

    pub fn neg(&self) -> Self {
        Self { degree: self.degree, poly: -&self.poly }
    }
}

/// Matrix of `L = ΥX·∇ + μ` acting on degree-`j` monomials.
pub fn transport_matrix(upsilon: &Matrix3<f64>, mu: f64, j: usize) -> DMatrix<f64> {
    let basis = monomial_basis(j);
    let index: BTreeMap<Exponent, usize> = basis.iter().enumerate().map(|(k, e)| (*e, k)).collect();
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    for (col, e) in basis.iter().enumerate() {
        m[(col, col)] += mu;
        for i in 0..NVARS {
            if e[i] == 0 {
                continue;
            }
            for k in 0..NVARS {
                let u = upsilon[(i, k)];
                if u == 0.0 {
                    continue;
                }
                let mut f = *e;
                f[i] -= 1;
                f[k] += 1;
                m[(index[&f], col)] += u * e[i] as f64;
            }
        }
    }
    m
}

/// Solve `(ΥX·∇ + μ) p = −R` on homogeneous polynomials of `R`'s degree.
pub fn solve_hom_equation(
    upsilon: &Matrix3<f64>,
    mu: f64,
    r: &HomogeneousPolynomial,
) -> Result<HomogeneousPolynomial, WkbError> {
    if !(mu > 0.0) {
        return Err(WkbError::Parameter(format!("mu = {mu} must be positive")));
    }
    let j = r.degree();
    let m = transport_matrix(upsilon, mu, j);
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > 1e12 {
        return Err(WkbError::NearResonant { degree: j, condition });
    }
    let rhs = -DVector::from_vec(r.coefficients());
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or(WkbError::NearResonant { degree: j, condition })?;
    Ok(HomogeneousPolynomial::from_coefficients(j, sol.as_slice()))
}

/// Linearization of the eikonal equation: `(ξ, μ)` with `Λξ = −μξ` and
/// `Aξ·ξ = μ`.
pub fn solve_linear_eikonal(
    phase: &ExtendedPhase,
    saddle: &CriticalPoint,
) -> Result<(Vector3<f64>, f64), WkbError> {
    if saddle.index != 1 || saddle.hessian_eigenvalues.iter().filter(|&&e| e < 0.0).count() != 1 {
        return Err(WkbError::Topology { x: saddle.x, index: saddle.index });
    }
    let eta = -saddle.hessian_eigenvalues[0];
    let gamma = phase.gamma;
    let mu = mu_of_saddle(gamma, eta).map_err(|e| WkbError::Parameter(e.to_string()))?;
    let alpha = -0.5 * (gamma + (gamma * gamma + 4.0 * eta).sqrt());
    let e1 = 1.0_f64;
    let t = (mu / gamma).sqrt() / e1.abs();
    Ok((Vector3::new(t * alpha * e1, t * e1, 0.0), mu))
}

/// Everything the quasimode construction needs from the saddle.
#[derive(Debug, Clone)]
pub struct EikonalData {
    pub saddle: f64,
    pub gamma: f64,
    pub nu: f64,
    pub eta: f64,
    pub mu: f64,
    /// `H = Hess_s f`.
    pub hess: Matrix3<f64>,
    /// `B = db⁰(s)`.
    pub jac: Matrix3<f64>,
    pub diffusion: Matrix3<f64>,
    /// `Λ = 2HA + Bᵀ`.
    pub lambda: Matrix3<f64>,
    /// `Π_ξ = ξξᵀ`.
    pub pi_xi: Matrix3<f64>,
    /// `Υ = Λᵀ + 2AΠ_ξ`.
    pub upsilon: Matrix3<f64>,
    pub xi: Vector3<f64>,
    pub ell0_1: HomogeneousPolynomial,
    pub ell0_2: HomogeneousPolynomial,
    pub ell0_3: HomogeneousPolynomial,
    pub ell1_0: f64,
    pub ell1_1: HomogeneousPolynomial,
    /// True when the raw solution was negated to point `ξ` toward `m̂`.
    pub flipped: bool,
    /// Taylor polynomial of `b⁰ + 2A∇f` at `s` (degree ≤ 3).
    drift: [Poly; NVARS],
}

impl EikonalData {
    /// Local coordinates `X − s`.
    pub fn local(&self, p: &Point3) -> Point3 {
        [p[0] - self.saddle, p[1], p[2]]
    }

    pub fn ell0(&self) -> Poly {
        &(&self.ell0_1.poly + &self.ell0_2.poly) + &self.ell0_3.poly
    }

    pub fn ell1(&self) -> Poly {
        &Poly::constant(self.ell1_0) + &self.ell1_1.poly
    }

    /// `ℓ = ℓ₀ + hℓ₁` as a polynomial in local coordinates.
    pub fn ell(&self, h: f64) -> Poly {
        &self.ell0() + &self.ell1().scale(h)
    }

    /// The same phase with the opposite orientation: every coefficient negated.
    pub fn flipped(&self) -> Self {
        let mut o = self.clone();
        o.xi = -o.xi;
        o.ell0_1 = o.ell0_1.neg();
        o.ell0_2 = o.ell0_2.neg();
        o.ell0_3 = o.ell0_3.neg();
        o.ell1_0 = -o.ell1_0;
        o.ell1_1 = o.ell1_1.neg();
        o.flipped = !o.flipped;
        o
    }

    pub fn drift_taylor(&self) -> &[Poly; NVARS] {
        &self.drift
    }

    /// `w₀ = F·∇ℓ₀ + ℓ₀ A∇ℓ₀·∇ℓ₀` with `F` the Taylor drift, as a polynomial.
    pub fn w0_poly(&self) -> Poly {
        w0_terms(&self.drift, &self.ell0(), self.gamma).iter().fold(Poly::zero(), |a, t| &a + t)
    }

    /// `w₁` as a polynomial.
    pub fn w1_poly(&self) -> Poly {
        w1_terms(&self.drift, &self.ell0(), &self.ell1(), self.gamma, self.nu)
            .iter()
            .fold(Poly::zero(), |a, t| &a + t)
    }

    /// Largest degree-≤3 coefficient of `w₀` and degree-≤1 coefficient of
    /// `w₁`, each relative to the largest coefficient among its summands.
    pub fn taylor_residuals(&self) -> (f64, f64) {
        let rel = |terms: Vec<Poly>, k: usize| {
            let scale = terms.iter().map(|t| t.truncate(k).max_abs_coef()).fold(0.0, f64::max);
            let sum = terms.iter().fold(Poly::zero(), |a, t| &a + t).truncate(k);
            if scale == 0.0 {
                0.0
            } else {
                sum.max_abs_coef() / scale
            }
        };
        (
            rel(w0_terms(&self.drift, &self.ell0(), self.gamma), 3),
            rel(w1_terms(&self.drift, &self.ell0(), &self.ell1(), self.gamma, self.nu), 1),
        )
    }

    /// `Aξ·ξ − μ`, `|Λξ + μξ| / |μξ|`, `H⁻¹ξ·ξ + 2`.
    pub fn closed_form_residuals(&self) -> (f64, f64, f64) {
        let axx = (self.diffusion * self.xi).dot(&self.xi) - self.mu;
        let lam = (self.lambda * self.xi + self.mu * self.xi).norm() / (self.mu * self.xi.norm());
        let hinv = self.hess.try_inverse().expect("Morse saddle");
        let hxx = (hinv * self.xi).dot(&self.xi) + 2.0;
        (axx, lam, hxx)
    }
}

impl Serialize for EikonalData {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows = |m: &Matrix3<f64>| -> Vec<[f64; 3]> {
            (0..3).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect()
        };
        let mut st = s.serialize_struct("EikonalData", 18)?;
        st.serialize_field("saddle", &self.saddle)?;
        st.serialize_field("gamma", &self.gamma)?;
        st.serialize_field("nu", &self.nu)?;
        st.serialize_field("eta", &self.eta)?;
        st.serialize_field("mu", &self.mu)?;
        st.serialize_field("xi", &[self.xi[0], self.xi[1], self.xi[2]])?;
        st.serialize_field("hess", &rows(&self.hess))?;
        st.serialize_field("jac", &rows(&self.jac))?;
        st.serialize_field("diffusion", &rows(&self.diffusion))?;
        st.serialize_field("lambda", &rows(&self.lambda))?;
        st.serialize_field("pi_xi", &rows(&self.pi_xi))?;
        st.serialize_field("upsilon", &rows(&self.upsilon))?;
        st.serialize_field("ell0_1", &self.ell0_1)?;
        st.serialize_field("ell0_2", &self.ell0_2)?;
        st.serialize_field("ell0_3", &self.ell0_3)?;
        st.serialize_field("ell1_0", &self.ell1_0)?;
        st.serialize_field("ell1_1", &self.ell1_1)?;
        st.serialize_field("flipped", &self.flipped)?;
        st.end()
    }
}

/// Taylor polynomial of `F = b⁰ + 2A∇f` at `s` in local coordinates.
fn drift_taylor(phase: &ExtendedPhase, s: f64) -> [Poly; NVARS] {
    let t = phase.potential.taylor(s);
    let (v, y) = (Poly::var(1), Poly::var(2));
    // V'(s + X) = Σ_{k≥1} k t_k X^{k−1}
    let mut dv = Poly::zero();
    for (k, tk) in t.iter().enumerate().skip(1) {
        dv.add_term([(k - 1) as u8, 0, 0], k as f64 * tk);
    }
    let f1 = &(&(-&dv) - &(&(&y * &v).scale(phase.nu))) + &v.scale(phase.gamma);
    let f2 = (&v * &v).scale(phase.nu);
    [Poly::var(1), f1, f2]
}

fn w0_terms(drift: &[Poly; NVARS], l0: &Poly, gamma: f64) -> Vec<Poly> {
    let g = l0.gradient();
    let mut out: Vec<Poly> = (0..NVARS).map(|i| &drift[i] * &g[i]).collect();
    out.push((&(l0 * &g[1]) * &g[1]).scale(gamma));
    out
}

fn w1_terms(drift: &[Poly; NVARS], l0: &Poly, l1: &Poly, gamma: f64, nu: f64) -> Vec<Poly> {
    let g0 = l0.gradient();
    let g1 = l1.gradient();
    let mut out = vec![g0[2].scale(-nu)];
    out.extend((0..NVARS).map(|i| &drift[i] * &g1[i]));
    out.push((&(l1 * &g0[1]) * &g0[1]).scale(gamma));
    out.push((&(l0 * &g0[1]) * &g1[1]).scale(2.0 * gamma));
    out.push(g0[1].deriv(1).scale(-gamma));
    out
}

fn hom(p: Poly, j: usize) -> HomogeneousPolynomial {
    HomogeneousPolynomial::new(j, p.part(j)).expect("degree-filtered")
}

/// Solve the eikonal hierarchy to degree 3 and the transport hierarchy to
/// degree 1 at the saddle of `topo`, oriented so that `ξ` points toward `m̂`.
pub fn build_ell(phase: &ExtendedPhase, topo: &DoubleWellTopology) -> Result<EikonalData, WkbError> {
    let data = build_ell_raw(phase, &topo.saddle)?;
    let s = topo.saddle.x;
    let probe_dx = (topo.m_hat.x - s).signum() / data.eta.sqrt();
    let oriented = data.xi[0] * probe_dx > 0.0;
    Ok(if oriented { data } else { data.flipped() })
}

/// The unoriented solution with `ξ = t(αe₁, e₁, 0)`, `t > 0`.
pub fn build_ell_raw(phase: &ExtendedPhase, saddle: &CriticalPoint) -> Result<EikonalData, WkbError> {
    let (xi, mu) = solve_linear_eikonal(phase, saddle)?;
    let s = saddle.x;
    let sp = [s, 0.0, 0.0];
    let hess = phase.hess_f(&sp);
    let jac = phase.db0(&sp);
    let diffusion = phase.diffusion();
    let lambda = 2.0 * hess * diffusion + jac.transpose();
    let pi_xi = xi * xi.transpose();
    let upsilon = lambda.transpose() + 2.0 * diffusion * pi_xi;
    let drift = drift_taylor(phase, s);
    let gamma = phase.gamma;

    let l01 = Poly::linear(&[xi[0], xi[1], xi[2]]);
    let w = |l0: &Poly| w0_terms(&drift, l0, gamma).iter().fold(Poly::zero(), |a, t| &a + t);

    let r2 = hom(w(&l01), 2);
    let l02 = solve_hom_equation(&upsilon, mu, &r2)?;
    let l0_2 = &l01 + &l02.poly;
    let r3 = hom(w(&l0_2), 3);
    let l03 = solve_hom_equation(&upsilon, mu, &r3)?;
    let l0 = &l0_2 + &l03.poly;

    let b1 = phase.b1();
    let b1_xi = b1[0] * xi[0] + b1[1] * xi[1] + b1[2] * xi[2];
    let div_a_grad = gamma * l02.poly.deriv(1).deriv(1).coef(&[0, 0, 0]);
    let ell1_0 = (div_a_grad - b1_xi) / mu;
    let w1 = w1_terms(&drift, &l0, &Poly::constant(ell1_0), gamma, phase.nu)
        .iter()
        .fold(Poly::zero(), |a, t| &a + t);
    let l11 = solve_hom_equation(&upsilon, mu, &hom(w1, 1))?;

    Ok(EikonalData {
        saddle: s,
        gamma,
        nu: phase.nu,
        eta: -saddle.hessian_eigenvalues[0],
        mu,
        hess,
        jac,
        diffusion,
        lambda,
        pi_xi,
        upsilon,
        xi,
        ell0_1: hom(l01, 1),
        ell0_2: l02,
        ell0_3: l03,
        ell1_0,
        ell1_1: l11,
        flipped: false,
        drift,
    })
}

/// `w = (b + 2A∇f)·∇ℓ + ℓ A∇ℓ·∇ℓ − h div A∇ℓ` at `X`, with the exact drift.
pub fn eval_residual_w(data: &EikonalData, phase: &ExtendedPhase, p: &Point3, h: f64) -> f64 {
    let ell = data.ell(h);
    let u = data.local(p);
    let l = ell.eval(&u);
    let g = ell.gradient();
    let grad = [g[0].eval(&u), g[1].eval(&u), g[2].eval(&u)];
    let lap_v = g[1].deriv(1).eval(&u);
    let b = phase.drift(p, h);
    let gf = phase.grad_f(p);
    let gamma = phase.gamma;
    let field = [b[0], b[1] + 2.0 * gamma * gf[1], b[2]];
    let transport: f64 = (0..NVARS).map(|i| field[i] * grad[i]).sum();
    transport + l * gamma * grad[1] * grad[1] - h * gamma * lap_v
}

/// `max_{|u| ≤ 1} |w(s + √h u)| / h²` over a cubic lattice of `n³` points
/// restricted to the unit ball, plus the six axis poles.
pub fn max_scaled_residual(data: &EikonalData, phase: &ExtendedPhase, h: f64, n: usize) -> f64 {
    let r = h.sqrt();
    let mut best: f64 = 0.0;
    let mut visit = |u: [f64; 3]| {
        let p = [data.saddle + r * u[0], r * u[1], r * u[2]];
        best = best.max(eval_residual_w(data, phase, &p, h).abs());
    };
    let n = n.max(2);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let c = |t: usize| -1.0 + 2.0 * t as f64 / (n - 1) as f64;
                let u = [c(i), c(j), c(k)];
                if u.iter().map(|a| a * a).sum::<f64>() <= 1.0 + 1e-12 {
                    visit(u);
                }
            }
        }
    }
    for axis in 0..3 {
        for sgn in [-1.0, 1.0] {
            let mut u = [0.0; 3];
            u[axis] = sgn;
            visit(u);
        }
    }
    best / (h * h)
}

/// `|det(H + Π_ξ) + det H| / |det H|` and the smallest eigenvalue of `H + Π_ξ`.
pub fn check_det_identity(data: &EikonalData) -> (f64, f64) {
    let m = data.hess + data.pi_xi;
    let dh = data.hess.determinant();
    let rel = (m.determinant() + dh).abs() / dh.abs();
    let min_eig = m.symmetric_eigenvalues().min();
    (rel, min_eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{double_well, extended_phase, Potential};
    use proptest::prelude::*;

    fn saddle_with(eta: f64) -> CriticalPoint {
        CriticalPoint { x: 0.0, index: 1, hessian_eigenvalues: vec![-eta], eta: Some(eta) }
    }

    /// `V = −η x²/2` near 0 with a quartic confinement that does not affect the saddle data.
    fn phase_with(gamma: f64, eta: f64) -> ExtendedPhase {
        let v = Potential::quartic(0.25, 0.0, -eta / 2.0, 0.0);
        extended_phase(&v, gamma, 1.0).unwrap()
    }

    #[test]
    fn linear_eikonal_closed_forms() {
        let (xi, mu) = solve_linear_eikonal(&phase_with(1.0, 2.0), &saddle_with(2.0)).unwrap();
        assert!((mu - 1.0).abs() < 1e-15);
        assert!((xi - Vector3::new(-2.0, 1.0, 0.0)).norm() < 1e-15);
        let (xi, mu) = solve_linear_eikonal(&phase_with(2.0, 3.0), &saddle_with(3.0)).unwrap();
        let t = 0.5f64.sqrt();
        assert!((mu - 1.0).abs() < 1e-15);
        assert!((xi - Vector3::new(-3.0 * t, t, 0.0)).norm() < 1e-15);
        let bad = CriticalPoint { x: 0.0, index: 0, hessian_eigenvalues: vec![1.0], eta: None };
        assert!(matches!(
            solve_linear_eikonal(&phase_with(1.0, 1.0), &bad),
            Err(WkbError::Topology { .. })
        ));
    }

    #[test]
    fn generic_eikonal_matches_dense_eigensolver() {
        let (gamma, eta) = (0.7, 1.3);
        let ph = phase_with(gamma, eta);
        let d = build_ell_raw(&ph, &saddle_with(eta)).unwrap();
        let eig = d.lambda.complex_eigenvalues();
        let neg: Vec<_> = eig.iter().filter(|z| z.re < -1e-12).collect();
        assert_eq!(neg.len(), 1);
        assert!((neg[0].re + d.mu).abs() < 1e-12 && neg[0].im.abs() < 1e-12);
        let r = d.lambda * d.xi + d.mu * d.xi;
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn solve_hom_trivial_cases() {
        let ups = Matrix3::zeros();
        for j in 1..=3 {
            let z = solve_hom_equation(&ups, 1.5, &HomogeneousPolynomial::zero(j)).unwrap();
            assert!(z.as_poly().is_zero());
            let coefs: Vec<f64> = (0..monomial_basis(j).len()).map(|k| k as f64 - 1.3).collect();
            let r = HomogeneousPolynomial::from_coefficients(j, &coefs);
            let p = solve_hom_equation(&ups, 1.5, &r).unwrap();
            for (a, b) in p.coefficients().iter().zip(&coefs) {
                assert!((a + b / 1.5).abs() < 1e-15);
            }
        }
        assert!(matches!(
            solve_hom_equation(&Matrix3::from_diagonal_element(-0.5), 1.0, &HomogeneousPolynomial::zero(2)),
            Err(WkbError::NearResonant { .. })
        ));
    }

    /// Apply `L` by polynomial arithmetic rather than through the matrix.
    fn apply_l(ups: &Matrix3<f64>, mu: f64, p: &Poly) -> Poly {
        let mut out = p.scale(mu);
        for i in 0..3 {
            let ux = Poly::linear(&[ups[(i, 0)], ups[(i, 1)], ups[(i, 2)]]);
            out = &out + &(&ux * &p.deriv(i));
        }
        out
    }

    #[test]
    fn hom_solution_substitutes_back() {
        let d = build_ell_raw(&phase_with(1.0, 2.0), &saddle_with(2.0)).unwrap();
        let r = HomogeneousPolynomial::new(3, Poly::monomial([2, 1, 0], 1.0)).unwrap();
        let p = solve_hom_equation(&d.upsilon, d.mu, &r).unwrap();
        let back = &apply_l(&d.upsilon, d.mu, p.as_poly()) + r.as_poly();
        assert!(back.max_abs_coef() < 1e-12);
    }

    #[test]
    fn transport_operator_spectrum_is_shifted_by_mu() {
        let ph = extended_phase(&Potential::tilted_quartic(), 1.0, 1.0).unwrap();
        let topo = double_well(&ph.potential).unwrap();
        let d = build_ell(&ph, &topo).unwrap();
        assert!(d.upsilon.complex_eigenvalues().iter().all(|z| z.re >= -1e-10));
        for j in 1..=3 {
            let m = transport_matrix(&d.upsilon, d.mu, j);
            for z in m.complex_eigenvalues().iter() {
                assert!(z.re >= d.mu - 1e-10);
            }
        }
    }

    #[test]
    fn tilted_quartic_eikonal_invariants() {
        let v = Potential::tilted_quartic();
        let topo = double_well(&v).unwrap();
        for (gamma, nu) in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.3)] {
            let ph = extended_phase(&v, gamma, nu).unwrap();
            let d = build_ell(&ph, &topo).unwrap();
            let (axx, lam, hxx) = d.closed_form_residuals();
            assert!(axx.abs() < 1e-12 && lam < 1e-10 && hxx.abs() < 1e-10);
            let (w0, w1) = d.taylor_residuals();
            assert!(w0 < 1e-9 && w1 < 1e-9, "{w0} {w1}");
            let (rel, min_eig) = check_det_identity(&d);
            assert!(rel < 1e-10 && min_eig > 0.0);
            let probe = [topo.saddle.x + (topo.m_hat.x - topo.saddle.x).signum() / d.eta.sqrt(), 0.0, 0.0];
            let q = d.local(&probe);
            assert!(d.xi[0] * q[0] > 0.0);
            let g = d.ell0_1.as_poly().gradient();
            for i in 0..3 {
                assert_eq!(g[i].eval(&[0.0; 3]), d.xi[i]);
            }
        }
    }

    #[test]
    fn pi_xi_has_rank_one() {
        let d = build_ell_raw(&phase_with(1.0, 2.0), &saddle_with(2.0)).unwrap();
        let sv = d.pi_xi.singular_values();
        assert_eq!(sv.iter().filter(|&&s| s > 1e-12).count(), 1);
        let (rel, min_eig) = check_det_identity(&d);
        let oracle = (d.hess + d.pi_xi).lu().determinant();
        assert!(rel < 1e-10 && (oracle + d.hess.determinant()).abs() < 1e-12 && min_eig > 0.0);
    }

    #[test]
    fn flip_negates_everything() {
        let ph = extended_phase(&Potential::tilted_quartic(), 1.0, 1.0).unwrap();
        let topo = double_well(&ph.potential).unwrap();
        let d = build_ell(&ph, &topo).unwrap();
        let f = d.flipped();
        assert_eq!(f.flipped, !d.flipped);
        let (a, b) = (d.ell(0.1), f.ell(0.1));
        assert!((&a + &b).is_zero());
        assert_eq!(f.ell1_0, -d.ell1_0);
        let p = [0.2, -0.1, 0.05];
        assert!((eval_residual_w(&d, &ph, &p, 0.1) + eval_residual_w(&f, &ph, &p, 0.1)).abs() < 1e-14);
    }

    #[test]
    fn zero_phase_has_zero_residual() {
        let ph = extended_phase(&Potential::tilted_quartic(), 1.0, 1.0).unwrap();
        let topo = double_well(&ph.potential).unwrap();
        let mut d = build_ell(&ph, &topo).unwrap();
        for p in [&mut d.ell0_1, &mut d.ell0_2, &mut d.ell0_3, &mut d.ell1_1] {
            *p = HomogeneousPolynomial::zero(p.degree());
        }
        d.ell1_0 = 0.0;
        for p in [[0.3, 1.0, -2.0], [-1.0, 0.0, 0.5]] {
            assert_eq!(eval_residual_w(&d, &ph, &p, 0.1), 0.0);
        }
    }

    /// Oracle independent of the polynomial arithmetic: along rays, the exact
    /// `w₀` (h = 0) evaluated with the true drift decays like `ε⁴`.
    #[test]
    fn eikonal_residual_is_fourth_order_along_rays() {
        let v = Potential::tilted_quartic();
        let topo = double_well(&v).unwrap();
        let ph = extended_phase(&v, 1.0, 1.0).unwrap();
        let d = build_ell(&ph, &topo).unwrap();
        let w0 = |p: &Point3| {
            let l0 = d.ell0();
            let u = d.local(p);
            let g = l0.gradient();
            let grad = [g[0].eval(&u), g[1].eval(&u), g[2].eval(&u)];
            let b = ph.b0(p);
            let field = [b[0], b[1] + ph.gamma * p[1], b[2]];
            (0..3).map(|i| field[i] * grad[i]).sum::<f64>() + l0.eval(&u) * ph.gamma * grad[1] * grad[1]
        };
        for dir in [[1.0, 0.0, 0.0], [0.3, -0.8, 0.5], [0.0, 0.6, 0.8]] {
            let at = |e: f64| w0(&[topo.saddle.x + e * dir[0], e * dir[1], e * dir[2]]) / e.powi(4);
            let (a, b) = (at(1e-2), at(5e-3));
            assert!((a - b).abs() <= 0.05 * a.abs().max(b.abs()) + 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn residual_scales_like_h_squared() {
        let v = Potential::tilted_quartic();
        let topo = double_well(&v).unwrap();
        let ph = extended_phase(&v, 1.0, 1.0).unwrap();
        let d = build_ell(&ph, &topo).unwrap();
        let r: Vec<f64> = [1e-1, 3e-2, 1e-2].iter().map(|&h| max_scaled_residual(&d, &ph, h, 11)).collect();
        let ratio = r.iter().cloned().fold(0.0, f64::max) / r.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(ratio < 2.0, "{r:?}");
        let at_s: Vec<f64> = [1e-1, 3e-2, 1e-2]
            .iter()
            .map(|&h| eval_residual_w(&d, &ph, &[topo.saddle.x, 0.0, 0.0], h).abs() / (h * h))
            .collect();
        let spread = at_s.iter().cloned().fold(0.0, f64::max) / at_s.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 2.0, "{at_s:?}");
    }

    proptest! {
        #[test]
        fn homogeneous_scaling(j in 0usize..5, t in -3.0f64..3.0,
                               x in -1.0f64..1.0, v in -1.0f64..1.0, y in -1.0f64..1.0, seed in 0u64..1000) {
            let n = monomial_basis(j).len();
            let coefs: Vec<f64> = (0..n).map(|k| ((seed + 7 * k as u64) % 13) as f64 - 6.0).collect();
            let p = HomogeneousPolynomial::from_coefficients(j, &coefs);
            let a = p.eval(&[t * x, t * v, t * y]);
            let b = t.powi(j as i32) * p.eval(&[x, v, y]);
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            prop_assert!(p.as_poly().terms().all(|(e, _)| total(e) == j));
        }

        #[test]
        fn eval_is_linear(j in 1usize..4, s in -2.0f64..2.0, x in -1.0f64..1.0, v in -1.0f64..1.0) {
            let n = monomial_basis(j).len();
            let a: Vec<f64> = (0..n).map(|k| k as f64 * 0.3 - 1.0).collect();
            let b: Vec<f64> = (0..n).map(|k| 1.0 / (k as f64 + 1.0)).collect();
            let c: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + s * q).collect();
            let pt = [x, v, 0.4];
            let lhs = HomogeneousPolynomial::from_coefficients(j, &c).eval(&pt);
            let rhs = HomogeneousPolynomial::from_coefficients(j, &a).eval(&pt)
                + s * HomogeneousPolynomial::from_coefficients(j, &b).eval(&pt);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
