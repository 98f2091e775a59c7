//! Potentials on the real line, their critical points, the double-well
//! topology and the lifted function `f(x, v, y) = V(x)/2 + (v² + y²)/4`.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix3;
use serde::Serialize;
use thiserror::Error;

/// A point `X = (x, v, y)` of the extended phase space (d = 1).
pub type Point3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("non-Morse critical point at x = {x} (V'' = {curvature:e})")]
    NonMorse { x: f64, curvature: f64 },
    #[error("no critical points found in [{lo}, {hi}]")]
    EmptyLandscape { lo: f64, hi: f64 },
    #[error("search box [{lo}, {hi}] does not confine the landscape (V' must point outward at both ends)")]
    BoxNotConfining { lo: f64, hi: f64 },
    #[error("degenerate wells: |V(m1) - V(m2)| = {gap:e}")]
    DegenerateWells { gap: f64 },
    #[error("not a double well: found {minima} minima and {saddles} saddles")]
    NotDoubleWell { minima: usize, saddles: usize },
    #[error("parameter {name} = {value} must be positive")]
    Parameter { name: &'static str, value: f64 },
    #[error("unknown potential preset `{0}`")]
    UnknownPreset(String),
}

/// Scalar callback used for user-supplied potentials.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    /// `a x⁴ + b x³ + c x² + e x`
    Quartic([f64; 4]),
    /// Value plus optional derivative callbacks `derivs[k] = V^(k+1)`.
    Callback { value: ScalarFn, derivs: Vec<ScalarFn>, scale: f64 },
}

/// A potential `V : ℝ → ℝ` with derivatives up to order four.
#[derive(Clone)]
pub struct Potential {
    kind: Kind,
    search_box: (f64, f64),
    name: String,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("Potential");
        d.field("name", &self.name).field("search_box", &self.search_box);
        if let Kind::Quartic(c) = &self.kind {
            d.field("coefficients", c);
        }
        d.finish()
    }
}

/// Names accepted by [`Potential::preset`].
pub const PRESETS: &[&str] = &["tilted_quartic", "figure1", "symmetric_quartic", "harmonic"];

impl Potential {
    /// `V(x) = a x⁴ + b x³ + c x² + e x`, with a search box from a Cauchy
    /// bound on the roots of `V'`.
    pub fn quartic(a: f64, b: f64, c: f64, e: f64) -> Self {
        let derivative = [4.0 * a, 3.0 * b, 2.0 * c, e];
        let lead_pos = derivative.iter().position(|&q| q != 0.0).unwrap_or(3);
        let lead = derivative[lead_pos];
        let bound = if lead_pos == 3 {
            1.0
        } else {
            1.0 + derivative[lead_pos + 1..]
                .iter()
                .map(|q| (q / lead).abs())
                .fold(0.0, f64::max)
        };
        let r = bound + 0.5;
        Self {
            kind: Kind::Quartic([a, b, c, e]),
            search_box: (-r, r),
            name: format!("quartic({a},{b},{c},{e})"),
        }
    }

    /// Named landscapes.
    ///
    /// * `tilted_quartic`: `x⁴/4 − x²/2 + x/10`
    /// * `figure1`: `8x⁴ − 2x³ − 7x² + x/2`
    /// * `symmetric_quartic`: `x⁴/4 − x²/2`
    /// * `harmonic`: `x²/2`
    pub fn preset(name: &str) -> Result<Self, PotentialError> {
        let mut p = match name {
            "tilted_quartic" => Self::quartic(0.25, 0.0, -0.5, 0.1),
            "figure1" => Self::quartic(8.0, -2.0, -7.0, 0.5),
            "symmetric_quartic" => Self::quartic(0.25, 0.0, -0.5, 0.0),
            "harmonic" => Self::quartic(0.0, 0.0, 0.5, 0.0),
            other => return Err(PotentialError::UnknownPreset(other.to_string())),
        };
        p.name = name.to_string();
        Ok(p)
    }

    pub fn tilted_quartic() -> Self {
        Self::preset("tilted_quartic").expect("built-in preset")
    }

    /// General potential from callbacks. `derivs[k]` is `V^(k+1)`; missing
    /// orders are obtained by fourth-order central differences of the
    /// highest available lower derivative, with step `1e-4 · scale` for
    /// first and second differences (coarser for third and fourth).
    pub fn from_callbacks(
        value: ScalarFn,
        derivs: Vec<ScalarFn>,
        scale: f64,
        search_box: (f64, f64),
    ) -> Self {
        Self {
            kind: Kind::Callback { value, derivs, scale },
            search_box,
            name: "callback".to_string(),
        }
    }

    pub fn with_search_box(mut self, lo: f64, hi: f64) -> Self {
        self.search_box = (lo, hi);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        1
    }

    pub fn search_box(&self) -> (f64, f64) {
        self.search_box
    }

    /// Polynomial coefficients `[a, b, c, e]` for the built-in family.
    pub fn coefficients(&self) -> Option<[f64; 4]> {
        match &self.kind {
            Kind::Quartic(c) => Some(*c),
            Kind::Callback { .. } => None,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    pub fn grad(&self, x: f64) -> f64 {
        self.derivative(x, 1)
    }

    pub fn hess(&self, x: f64) -> f64 {
        self.derivative(x, 2)
    }

    pub fn third(&self, x: f64) -> f64 {
        self.derivative(x, 3)
    }

    pub fn fourth(&self, x: f64) -> f64 {
        self.derivative(x, 4)
    }

    /// `V^(k)(x)` for `k ≤ 4`; zero above (quartic family) or panics for
    /// callbacks beyond order four.
    pub fn derivative(&self, x: f64, k: usize) -> f64 {
        match &self.kind {
            Kind::Quartic([a, b, c, e]) => match k {
                0 => (((a * x + b) * x + c) * x + e) * x,
                1 => ((4.0 * a * x + 3.0 * b) * x + 2.0 * c) * x + e,
                2 => (12.0 * a * x + 6.0 * b) * x + 2.0 * c,
                3 => 24.0 * a * x + 6.0 * b,
                4 => 24.0 * a,
                _ => 0.0,
            },
            Kind::Callback { value, derivs, scale } => {
                assert!(k <= 4, "callback potentials expose derivatives up to order 4");
                if k == 0 {
                    return value(x);
                }
                if let Some(d) = derivs.get(k - 1) {
                    return d(x);
                }
                // Differentiate the highest available lower derivative.
                let base = derivs.len().min(k - 1);
                let g = |t: f64| if base == 0 { value(t) } else { derivs[base - 1](t) };
                central_difference(&g, x, k - base, *scale)
            }
        }
    }

    /// Taylor coefficients `V^(k)(x0)/k!` for `k = 0..=4`.
    pub fn taylor(&self, x0: f64) -> [f64; 5] {
        let mut t = [0.0; 5];
        let mut fact = 1.0;
        for (k, slot) in t.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *slot = self.derivative(x0, k) / fact;
        }
        t
    }
}

/// Fourth-order central difference of order `m ∈ 1..=4`.
fn central_difference(g: &dyn Fn(f64) -> f64, x: f64, m: usize, scale: f64) -> f64 {
    let base = 1e-4 * scale.abs().max(f64::MIN_POSITIVE);
    match m {
        1 => {
            let s = base;
            (g(x - 2.0 * s) - 8.0 * g(x - s) + 8.0 * g(x + s) - g(x + 2.0 * s)) / (12.0 * s)
        }
        2 => {
            let s = base;
            (-g(x - 2.0 * s) + 16.0 * g(x - s) - 30.0 * g(x) + 16.0 * g(x + s) - g(x + 2.0 * s))
                / (12.0 * s * s)
        }
        3 => {
            let s = 10.0 * base;
            (g(x - 3.0 * s) - 8.0 * g(x - 2.0 * s) + 13.0 * g(x - s) - 13.0 * g(x + s)
                + 8.0 * g(x + 2.0 * s)
                - g(x + 3.0 * s))
                / (8.0 * s * s * s)
        }
        4 => {
            let s = 50.0 * base;
            (-g(x - 3.0 * s) + 12.0 * g(x - 2.0 * s) - 39.0 * g(x - s) + 56.0 * g(x)
                - 39.0 * g(x + s)
                + 12.0 * g(x + 2.0 * s)
                - g(x + 3.0 * s))
                / (6.0 * s.powi(4))
        }
        _ => unreachable!("difference order {m}"),
    }
}

/// Non-degenerate critical point of `V`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub x: f64,
    /// Number of negative Hessian eigenvalues.
    pub index: usize,
    pub hessian_eigenvalues: Vec<f64>,
    /// `|λ_min|` for index-one points.
    pub eta: Option<f64>,
}

impl CriticalPoint {
    fn from_root(v: &Potential, x: f64, tol: f64) -> Result<Self, PotentialError> {
        let curvature = v.hess(x);
        if curvature.abs() < tol {
            return Err(PotentialError::NonMorse { x, curvature });
        }
        let index = usize::from(curvature < 0.0);
        Ok(Self {
            x,
            index,
            hessian_eigenvalues: vec![curvature],
            eta: (index == 1).then_some(-curvature),
        })
    }
}

/// Newton search for the roots of `V'` in `search_box`, seeded from 64
/// equispaced points plus every sign change of `V'` on the seed grid.
pub fn find_critical_points(
    v: &Potential,
    search_box: (f64, f64),
    tol: f64,
) -> Result<Vec<CriticalPoint>, PotentialError> {
    let (lo, hi) = search_box;
    if !(v.grad(lo) < 0.0 && v.grad(hi) > 0.0) {
        return Err(PotentialError::BoxNotConfining { lo, hi });
    }
    const SEEDS: usize = 64;
    let seeds: Vec<f64> = (0..SEEDS)
        .map(|i| lo + (hi - lo) * i as f64 / (SEEDS - 1) as f64)
        .collect();

    let mut roots: Vec<f64> = Vec::new();
    let mut push = |x: f64| {
        if !roots.iter().any(|r| (r - x).abs() <= 10.0 * tol) {
            roots.push(x);
        }
    };
    for &s in &seeds {
        if let Some(x) = newton(v, s, lo, hi, tol) {
            push(x);
        }
    }
    for w in seeds.windows(2) {
        let (a, b) = (w[0], w[1]);
        if v.grad(a) * v.grad(b) <= 0.0 {
            if let Some(x) = bracketed_newton(v, a, b, tol) {
                push(x);
            }
        }
    }
    if roots.is_empty() {
        return Err(PotentialError::EmptyLandscape { lo, hi });
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots
        .into_iter()
        .map(|x| CriticalPoint::from_root(v, x, tol))
        .collect()
}

fn newton(v: &Potential, mut x: f64, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    for _ in 0..100 {
        let g = v.grad(x);
        let c = v.hess(x);
        if c == 0.0 || !c.is_finite() {
            return None;
        }
        let step = g / c;
        x -= step;
        if !(lo..=hi).contains(&x) {
            return None;
        }
        if step.abs() <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    polish(v, x, tol)
}

/// Safeguarded Newton inside a sign-change bracket.
fn bracketed_newton(v: &Potential, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut ga = v.grad(a);
    if ga == 0.0 {
        return polish(v, a, tol);
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let g = v.grad(x);
        if g == 0.0 {
            break;
        }
        if g * ga < 0.0 {
            b = x;
        } else {
            a = x;
            ga = g;
        }
        let c = v.hess(x);
        let candidate = x - g / c;
        let next = if c != 0.0 && candidate > a && candidate < b {
            candidate
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
            x = next;
            break;
        }
        x = next;
    }
    polish(v, x, tol)
}

fn polish(v: &Potential, x: f64, tol: f64) -> Option<f64> {
    (v.grad(x).abs() <= tol).then_some(x)
}

/// The two wells and the saddle of a double-well landscape.
#[derive(Debug, Clone, Serialize)]
pub struct DoubleWellTopology {
    /// Global minimum.
    pub m_under: CriticalPoint,
    /// Shallow minimum.
    pub m_hat: CriticalPoint,
    pub saddle: CriticalPoint,
    pub v_m_under: f64,
    pub v_m_hat: f64,
    pub v_saddle: f64,
    /// `S = V(s) − V(m̂)`.
    pub barrier: f64,
    /// `S̃ = f(s) − f(m̂) = S/2`.
    pub barrier_f: f64,
    pub det_hess_m_under: f64,
    pub det_hess_m_hat: f64,
    pub det_hess_saddle: f64,
    /// `D_X = |det Hess f(X)|^{1/2}` at the three points.
    pub d_m_under: f64,
    pub d_m_hat: f64,
    pub d_saddle: f64,
}

impl DoubleWellTopology {
    /// `η = |V''(s)|`.
    pub fn eta(&self) -> f64 {
        self.saddle.eta.expect("saddle has index one")
    }
}

/// `|det Hess f|^{1/2}` at `(x*, 0, 0)`: the Hessian is `diag(V''/2, 1/2, 1/2)`.
fn d_of(curvature: f64) -> f64 {
    (curvature.abs() / 8.0).sqrt()
}

/// Sort critical points into the double-well picture.
pub fn classify_topology(
    points: &[CriticalPoint],
    v: &Potential,
) -> Result<DoubleWellTopology, PotentialError> {
    let minima: Vec<&CriticalPoint> = points.iter().filter(|p| p.index == 0).collect();
    let saddles: Vec<&CriticalPoint> = points.iter().filter(|p| p.index == 1).collect();
    if minima.len() != 2 || saddles.len() != 1 || points.len() != 3 {
        return Err(PotentialError::NotDoubleWell {
            minima: minima.len(),
            saddles: saddles.len(),
        });
    }
    let s = saddles[0].clone();
    let (va, vb) = (v.value(minima[0].x), v.value(minima[1].x));
    let (m_under, m_hat) = if va < vb {
        (minima[0].clone(), minima[1].clone())
    } else {
        (minima[1].clone(), minima[0].clone())
    };
    let v_s = v.value(s.x);
    let v_under = va.min(vb);
    let v_hat = va.max(vb);
    let gap = (va - vb).abs();
    if gap < 1e-8 * (v_s - v_under) {
        return Err(PotentialError::DegenerateWells { gap });
    }
    let det_under = m_under.hessian_eigenvalues[0];
    let det_hat = m_hat.hessian_eigenvalues[0];
    let det_s = s.hessian_eigenvalues[0];
    Ok(DoubleWellTopology {
        barrier: v_s - v_hat,
        barrier_f: 0.5 * (v_s - v_hat),
        v_m_under: v_under,
        v_m_hat: v_hat,
        v_saddle: v_s,
        det_hess_m_under: det_under,
        det_hess_m_hat: det_hat,
        det_hess_saddle: det_s,
        d_m_under: d_of(det_under),
        d_m_hat: d_of(det_hat),
        d_saddle: d_of(det_s),
        m_under,
        m_hat,
        saddle: s,
    })
}

/// Critical points and topology in one call, with the default tolerance.
pub fn double_well(v: &Potential) -> Result<DoubleWellTopology, PotentialError> {
    let points = find_critical_points(v, v.search_box(), 1e-10)?;
    classify_topology(&points, v)
}

/// The lifted function `f`, the drift `b = b⁰ + h b¹`, the diffusion matrix
/// and the scalar `c` of the divergence form of the generator.
#[derive(Debug, Clone)]
pub struct ExtendedPhase {
    pub potential: Potential,
    pub gamma: f64,
    pub nu: f64,
}

/// Validate `(γ, ν)` and build the extended phase.
pub fn extended_phase(v: &Potential, gamma: f64, nu: f64) -> Result<ExtendedPhase, PotentialError> {
    ExtendedPhase::new(v.clone(), gamma, nu)
}

impl ExtendedPhase {
    pub fn new(potential: Potential, gamma: f64, nu: f64) -> Result<Self, PotentialError> {
        if !(gamma > 0.0) {
            return Err(PotentialError::Parameter { name: "gamma", value: gamma });
        }
        if !(nu > 0.0) {
            return Err(PotentialError::Parameter { name: "nu", value: nu });
        }
        Ok(Self { potential, gamma, nu })
    }

    pub fn f(&self, p: &Point3) -> f64 {
        0.5 * self.potential.value(p[0]) + 0.25 * (p[1] * p[1] + p[2] * p[2])
    }

    pub fn grad_f(&self, p: &Point3) -> Point3 {
        [0.5 * self.potential.grad(p[0]), 0.5 * p[1], 0.5 * p[2]]
    }

    pub fn hess_f(&self, p: &Point3) -> Matrix3<f64> {
        Matrix3::from_diagonal(&nalgebra::Vector3::new(
            0.5 * self.potential.hess(p[0]),
            0.5,
            0.5,
        ))
    }

    /// `b⁰ = (v, −V'(x) − ν y v, ν v²)`.
    pub fn b0(&self, p: &Point3) -> Point3 {
        let [x, v, y] = *p;
        [v, -self.potential.grad(x) - self.nu * y * v, self.nu * v * v]
    }

    /// `b¹ = (0, 0, −ν d)`.
    pub fn b1(&self) -> Point3 {
        [0.0, 0.0, -self.nu]
    }

    /// `b = b⁰ + h b¹`.
    pub fn drift(&self, p: &Point3, h: f64) -> Point3 {
        let b0 = self.b0(p);
        [b0[0], b0[1], b0[2] - h * self.nu]
    }

    /// Jacobian `db⁰(X)`.
    pub fn db0(&self, p: &Point3) -> Matrix3<f64> {
        let [x, v, y] = *p;
        let nu = self.nu;
        Matrix3::new(
            0.0, 1.0, 0.0, //
            -self.potential.hess(x), -nu * y, -nu * v, //
            0.0, 2.0 * nu * v, 0.0,
        )
    }

    /// `A = diag(0, γ, 0)`.
    pub fn diffusion(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&nalgebra::Vector3::new(0.0, self.gamma, 0.0))
    }

    /// `c = γ(v²/4 − h/2)`.
    pub fn c(&self, p: &Point3, h: f64) -> f64 {
        self.gamma * (0.25 * p[1] * p[1] - 0.5 * h)
    }

    /// `Hess f` at `(s, 0, 0)`.
    pub fn saddle_hessian(&self, saddle: &CriticalPoint) -> Matrix3<f64> {
        self.hess_f(&[saddle.x, 0.0, 0.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_quartic_roots() {
        let v = Potential::preset("symmetric_quartic").unwrap();
        let pts = find_critical_points(&v, (-2.0, 2.0), 1e-10).unwrap();
        let got: Vec<(f64, usize)> = pts.iter().map(|p| (p.x, p.index)).collect();
        assert_eq!(got.len(), 3);
        for ((x, i), (xe, ie)) in got.iter().zip([(-1.0, 0), (0.0, 1), (1.0, 0)]) {
            assert!((x - xe).abs() < 1e-12);
            assert_eq!(*i, ie);
        }
    }

    /// Oracle: bisection on sign changes of V' over a fine grid.
    fn bisection_roots(v: &Potential, lo: f64, hi: f64) -> Vec<f64> {
        let n = 20_000;
        let mut out = Vec::new();
        for i in 0..n {
            let mut a = lo + (hi - lo) * i as f64 / n as f64;
            let mut b = lo + (hi - lo) * (i + 1) as f64 / n as f64;
            if v.grad(a) * v.grad(b) < 0.0 {
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if v.grad(a) * v.grad(m) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                out.push(0.5 * (a + b));
            }
        }
        out
    }

    #[test]
    fn tilted_quartic_matches_sign_change_oracle() {
        let v = Potential::tilted_quartic();
        let pts = find_critical_points(&v, (-2.0, 2.0), 1e-10).unwrap();
        let oracle = bisection_roots(&v, -2.0, 2.0);
        assert_eq!(pts.len(), oracle.len());
        for (p, r) in pts.iter().zip(&oracle) {
            assert!((p.x - r).abs() < 1e-12, "{} vs {}", p.x, r);
        }
        assert_eq!(pts.iter().map(|p| p.index).collect::<Vec<_>>(), vec![0, 1, 0]);
        assert!((pts[0].x + 1.04).abs() < 0.01);
        assert!((pts[1].x - 0.10).abs() < 0.01);
        assert!((pts[2].x - 0.94).abs() < 0.01);
    }

    #[test]
    fn figure_one_shape_has_two_minima_one_saddle() {
        let v = Potential::preset("figure1").unwrap();
        let pts = find_critical_points(&v, v.search_box(), 1e-10).unwrap();
        assert_eq!(pts.iter().filter(|p| p.index == 0).count(), 2);
        assert_eq!(pts.iter().filter(|p| p.index == 1).count(), 1);
    }

    #[test]
    fn degenerate_and_wrong_census() {
        let v = Potential::preset("symmetric_quartic").unwrap();
        let pts = find_critical_points(&v, (-2.0, 2.0), 1e-10).unwrap();
        assert!(matches!(
            classify_topology(&pts, &v),
            Err(PotentialError::DegenerateWells { .. })
        ));
        let cp = |x: f64, index| CriticalPoint {
            x,
            index,
            hessian_eigenvalues: vec![if index == 0 { 1.0 } else { -1.0 }],
            eta: None,
        };
        for census in [[0, 0, 0], [0, 1, 1]] {
            let pts: Vec<_> = census.iter().enumerate().map(|(i, &k)| cp(i as f64, k)).collect();
            assert!(matches!(
                classify_topology(&pts, &v),
                Err(PotentialError::NotDoubleWell { .. })
            ));
        }
    }

    #[test]
    fn tilted_topology_by_direct_evaluation() {
        let v = Potential::tilted_quartic();
        let topo = double_well(&v).unwrap();
        assert!((topo.m_under.x + 1.04).abs() < 0.01);
        assert!((topo.m_hat.x - 0.94).abs() < 0.01);
        let s_direct = v.value(topo.saddle.x) - v.value(topo.m_hat.x);
        assert!((topo.barrier - s_direct).abs() < 1e-15);
        assert!((2.0 * topo.barrier_f - topo.barrier).abs() < 1e-15);
        assert!(topo.v_m_under < topo.v_m_hat && topo.v_m_hat < topo.v_saddle);
    }

    #[test]
    fn confining_box_is_checked() {
        let v = Potential::tilted_quartic();
        assert!(matches!(
            find_critical_points(&v, (-0.5, 0.5), 1e-10),
            Err(PotentialError::BoxNotConfining { .. })
        ));
    }

    #[test]
    fn extended_phase_closed_forms() {
        let v = Potential::tilted_quartic();
        let topo = double_well(&v).unwrap();
        let ph = extended_phase(&v, 1.0, 2.0).unwrap();
        let m = topo.m_hat.x;
        assert_eq!(ph.f(&[m, 0.0, 0.0]), v.value(m) / 2.0);
        let p = [0.3, -0.7, 1.1];
        let g = ph.grad_f(&p);
        assert_eq!(g, [v.grad(0.3) / 2.0, -0.35, 0.55]);
        let b = ph.b0(&[0.0, 0.4, -0.6]);
        let expect = [0.4, -v.grad(0.0) - 2.0 * (-0.6) * 0.4, 2.0 * 0.16];
        for (bi, ei) in b.iter().zip(expect) {
            assert!((bi - ei).abs() < 1e-15);
        }
        assert!(extended_phase(&v, 0.0, 1.0).is_err());
        assert!(extended_phase(&v, 1.0, -1.0).is_err());
        let hs = ph.saddle_hessian(&topo.saddle);
        assert_eq!(hs[(0, 0)], v.hess(topo.saddle.x) / 2.0);
        assert_eq!((hs[(1, 1)], hs[(2, 2)]), (0.5, 0.5));
    }

    #[test]
    fn lifted_critical_points_keep_their_index() {
        let v = Potential::tilted_quartic();
        let ph = extended_phase(&v, 1.0, 1.0).unwrap();
        for cp in find_critical_points(&v, (-2.0, 2.0), 1e-10).unwrap() {
            let p = [cp.x, 0.0, 0.0];
            assert!(ph.grad_f(&p).iter().all(|g| g.abs() <= 1e-10));
            let eig = ph.hess_f(&p).symmetric_eigenvalues();
            assert_eq!(eig.iter().filter(|&&e| e < 0.0).count(), cp.index);
        }
    }

    #[test]
    fn bt_h_is_antisymmetric_at_the_saddle() {
        let v = Potential::tilted_quartic();
        let topo = double_well(&v).unwrap();
        for nu in [0.5, 1.0, 3.0] {
            let ph = extended_phase(&v, 1.3, nu).unwrap();
            let s = [topo.saddle.x, 0.0, 0.0];
            let m = ph.db0(&s).transpose() * ph.hess_f(&s);
            assert!((m + m.transpose()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn callback_potential_uses_differences() {
        let exact = Potential::tilted_quartic();
        let cb = Potential::from_callbacks(
            Arc::new(|x: f64| x.powi(4) / 4.0 - x * x / 2.0 + 0.1 * x),
            vec![Arc::new(|x: f64| x.powi(3) - x + 0.1)],
            1.0,
            (-2.0, 2.0),
        );
        for x in [-1.3, 0.2, 0.9] {
            assert!((cb.grad(x) - exact.grad(x)).abs() < 1e-14);
            assert!((cb.hess(x) - exact.hess(x)).abs() < 1e-8);
            assert!((cb.third(x) - exact.third(x)).abs() < 1e-5);
            assert!((cb.fourth(x) - exact.fourth(x)).abs() < 1e-3);
        }
        let pts = find_critical_points(&cb, (-2.0, 2.0), 1e-10).unwrap();
        assert_eq!(pts.len(), 3);
    }

    proptest! {
        #[test]
        fn analytic_gradient_matches_differences(x in -2.0f64..2.0, which in 0usize..3) {
            let v = Potential::preset(["tilted_quartic", "figure1", "symmetric_quartic"][which]).unwrap();
            let s = 1e-5;
            let fd = (v.value(x - 2.0 * s) - 8.0 * v.value(x - s) + 8.0 * v.value(x + s)
                - v.value(x + 2.0 * s)) / (12.0 * s);
            let g = v.grad(x);
            prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0));
        }
    }
}
