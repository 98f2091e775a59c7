//! Discrete hypocoercivity: the auxiliary operator `A`, rough quasimodes,
//! the modified quadratic form and the remainder norms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use sprs::{CsMat, TriMat};
use thiserror::Error;

use crate::banded::{bandwidths, BandedLu};
use crate::operator::{csr_to_dense, matvec, matvec_t, norm, transpose, OperatorAssembly};
use crate::potential::DoubleWellTopology;
use crate::rates::rate_g;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypoError {
    #[error("alpha = {0} must be positive")]
    Alpha(f64),
    #[error("linear solve is ill-conditioned: {0}")]
    Conditioning(String),
    #[error("cutoff balls overlap or reach the saddle: r = {r}, limit {limit}")]
    Geometry { r: f64, limit: f64 },
}

/// `A = (hα + h⁻¹(ZΠ_ρ)ᵀ(ZΠ_ρ))⁻¹(ZΠ_ρ)ᵀ`, stored on the `(x, y)` factor as
/// `A = J (hα + B_xy)⁻¹ Jᵀ Zᵀ` with `J` the embedding `e₀` in `v`.
#[derive(Debug, Clone)]
pub struct AuxOperator {
    pub alpha: f64,
    pub h: f64,
    /// `(hα + B_xy)⁻¹`.
    pub m_inv: DMatrix<f64>,
    /// `Jᵀ Zᵀ`, rows indexed by the `(x, y)` factor.
    pub zt_red: CsMat<f64>,
    /// Spectral norm, exact through the reduced form.
    pub norm: f64,
    nv: usize,
    ny: usize,
    n: usize,
}

/// Default `α = min(1, ν²h)`.
pub fn default_alpha(h: f64, nu: f64) -> f64 {
    (nu * nu * h).min(1.0)
}

fn reduced_index(k: usize, nv: usize, ny: usize) -> Option<usize> {
    let (ix, rest) = (k / (nv * ny), k % (nv * ny));
    (rest / ny == 0).then_some(ix * ny + rest % ny)
}

fn restrict_rows(m: &CsMat<f64>, nv: usize, ny: usize) -> CsMat<f64> {
    let nr = m.rows() / nv;
    let mut t = TriMat::new((nr, m.cols()));
    for (i, row) in m.outer_iterator().enumerate() {
        if let Some(r) = reduced_index(i, nv, ny) {
            for (j, &x) in row.iter() {
                t.add_triplet(r, j, x);
            }
        }
    }
    t.to_csr()
}

impl AuxOperator {
    fn embed(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, &x) in r.iter().enumerate() {
            out[(k / self.ny) * self.nv * self.ny + k % self.ny] = x;
        }
        out
    }

    fn extract(&self, u: &[f64]) -> Vec<f64> {
        let red = self.n / self.nv;
        (0..red).map(|k| u[(k / self.ny) * self.nv * self.ny + k % self.ny]).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let r = DVector::from_vec(matvec(&self.zt_red, x));
        self.embed((&self.m_inv * r).as_slice())
    }

    pub fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        let r = DVector::from_vec(self.extract(x));
        let s = self.m_inv.transpose() * r;
        matvec_t(&self.zt_red, s.as_slice())
    }

    /// Dense `N × N` matrix (small resolutions only).
    pub fn dense(&self) -> DMatrix<f64> {
        let zt = csr_to_dense(&self.zt_red);
        let red = &self.m_inv * zt;
        let mut out = DMatrix::zeros(self.n, self.n);
        for k in 0..red.nrows() {
            let row = (k / self.ny) * self.nv * self.ny + k % self.ny;
            out.row_mut(row).copy_from(&red.row(k));
        }
        out
    }
}

/// Build `A` through `(hα + BΠ_ρ)⁻¹(ZΠ_ρ)ᵀ` on `Ran Π_ρ`.
pub fn build_a(asm: &OperatorAssembly, alpha: f64) -> Result<AuxOperator, HypoError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(HypoError::Alpha(alpha));
    }
    let h = asm.h;
    let (nv, ny) = (asm.basis.nv, asm.basis.ny);
    let b = csr_to_dense(&asm.b_xy());
    let m = &b + DMatrix::identity(b.nrows(), b.nrows()) * (h * alpha);
    let eig = SymmetricEigen::new(m);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 || hi / lo > 1e14 {
        return Err(HypoError::Conditioning(format!("eigenvalues of hα + B in [{lo:e}, {hi:e}]")));
    }
    let inv_d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x));
    let m_inv = &eig.eigenvectors * inv_d * eig.eigenvectors.transpose();
    let zt_red = restrict_rows(&transpose(&asm.z), nv, ny);
    // ‖A‖² = λ_max(M⁻¹ (JᵀZᵀZJ) M⁻¹)
    let zz = &zt_red * &transpose(&zt_red);
    let g = &m_inv * csr_to_dense(&zz) * &m_inv;
    let g = (&g + g.transpose()) * 0.5;
    let norm = SymmetricEigen::new(g).eigenvalues.max().max(0.0).sqrt();
    Ok(AuxOperator { alpha, h, m_inv, zt_red, norm, nv, ny, n: asm.n() })
}

/// `A` from the defining formula with a full-space banded solve.
pub fn build_a_direct(asm: &OperatorAssembly, alpha: f64) -> Result<DMatrix<f64>, HypoError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(HypoError::Alpha(alpha));
    }
    let h = asm.h;
    let zpi = &asm.z * &asm.pi_rho;
    let zpit = transpose(&zpi);
    let gram = &zpit * &zpi;
    let n = asm.n();
    let (kl, ku) = bandwidths(&gram);
    let gram = crate::operator::scale(&gram, 1.0 / h);
    let lu = BandedLu::factor(&gram, kl, ku, h * alpha)
        .map_err(|e| HypoError::Conditioning(e.to_string()))?;
    let rhs = csr_to_dense(&zpit);
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let col: Vec<f64> = rhs.column(j).iter().cloned().collect();
        if col.iter().all(|&x| x == 0.0) {
            continue;
        }
        out.column_mut(j).copy_from_slice(&lu.solve(&col));
    }
    Ok(out)
}

/// Algebraic checks on `A`.
#[derive(Debug, Clone, Serialize)]
pub struct AuxChecks {
    pub alpha: f64,
    pub norm_a: f64,
    pub norm_bound: f64,
    /// `‖A_reduced − A_direct‖ / ‖A_direct‖` (Frobenius).
    pub formula_difference: f64,
    /// `‖Π_ρA − A‖_F`.
    pub pi_left: f64,
    /// `‖AΠ_ρ‖_F`.
    pub pi_right: f64,
}

pub fn aux_checks(asm: &OperatorAssembly, alpha: f64) -> Result<AuxChecks, HypoError> {
    let a = build_a(asm, alpha)?;
    let dense = a.dense();
    let direct = build_a_direct(asm, alpha)?;
    let pi = csr_to_dense(&asm.pi_rho);
    let diff = (&dense - &direct).norm() / direct.norm().max(f64::MIN_POSITIVE);
    Ok(AuxChecks {
        alpha,
        norm_a: a.norm,
        norm_bound: 1.0 / alpha.sqrt(),
        formula_difference: diff,
        pi_left: (&pi * &direct - &direct).norm(),
        pi_right: (&direct * &pi).norm(),
    })
}

/// `f_m = χ_m(x) e^{−(f − f(m))/h}` for each minimum, normalized.
#[derive(Debug, Clone, Serialize)]
pub struct RoughQuasimodeSpace {
    pub r: f64,
    pub minima: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    /// `inf_{supp ∇χ_m} (f − f(m))`.
    pub c_m: Vec<f64>,
    /// `‖P f_m‖`.
    pub p_norms: Vec<f64>,
    pub overlap: f64,
}

/// Even plateau profile: 1 on `[−1, 1]`, 0 outside `[−2, 2]`, quintic
/// smoothstep in between.
pub fn plateau(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let s = 2.0 - a;
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Default radius `0.6 · min_m |m − s|`.
pub fn default_radius(topo: &DoubleWellTopology) -> f64 {
    0.6 * (topo.m_under.x - topo.saddle.x).abs().min((topo.m_hat.x - topo.saddle.x).abs())
}

pub fn rough_quasimodes(
    asm: &OperatorAssembly,
    topo: &DoubleWellTopology,
    r: f64,
) -> Result<RoughQuasimodeSpace, HypoError> {
    let (m1, m2, s) = (topo.m_under.x, topo.m_hat.x, topo.saddle.x);
    let limit = (m1 - s).abs().min((m2 - s).abs()).min(0.5 * (m1 - m2).abs());
    if !(r > 0.0 && r < limit) {
        return Err(HypoError::Geometry { r, limit });
    }
    let basis = &asm.basis;
    let mut vectors = Vec::new();
    let mut c_m = Vec::new();
    let mut p_norms = Vec::new();
    for (m, vm) in [(m1, topo.v_m_under), (m2, topo.v_m_hat)] {
        let mut u = vec![0.0; basis.n()];
        let mut cm = f64::INFINITY;
        for (ix, &x) in basis.x.iter().enumerate() {
            let t = (x - m).abs() / (0.5 * r);
            let chi = plateau(t);
            if (1.0..2.0).contains(&t) {
                cm = cm.min(0.5 * (asm.v_grid[ix] - vm));
            }
            u[basis.flat(ix, 0, 0)] = chi * (-(asm.v_grid[ix] - vm) / (2.0 * asm.h)).exp();
        }
        let nu = norm(&u);
        u.iter_mut().for_each(|x| *x /= nu);
        p_norms.push(norm(&matvec(&asm.p, &u)));
        c_m.push(cm);
        vectors.push(u);
    }
    let overlap = vectors[0].iter().zip(&vectors[1]).map(|(a, b)| a * b).sum::<f64>().abs();
    Ok(RoughQuasimodeSpace { r, minima: vec![m1, m2], vectors, c_m, p_norms, overlap })
}

impl RoughQuasimodeSpace {
    /// Orthogonal projection onto `F_h^⊥`.
    pub fn project_out(&self, u: &mut [f64]) {
        for f in &self.vectors {
            let c: f64 = u.iter().zip(f).map(|(a, b)| a * b).sum();
            u.iter_mut().zip(f).for_each(|(a, b)| *a -= c * b);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub h: f64,
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub delta0: f64,
    pub delta: f64,
    pub g_h: f64,
    pub norm_a: f64,
    pub random_trials: usize,
    pub min_random: f64,
    pub min_structured: f64,
    /// Minimum over all trials.
    pub coercivity_min: f64,
    /// `coercivity_min / g(h)`.
    pub ratio: f64,
}

/// `Re⟨Pu, (1 + δ(A + Aᵀ))u⟩ / ‖u‖²`.
pub fn modified_form(asm: &OperatorAssembly, a: &AuxOperator, delta: f64, u: &[f64]) -> f64 {
    let pu = matvec(&asm.p, u);
    let au = a.apply(u);
    let atu = a.apply_t(u);
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    (dot(&pu, u) + delta * (dot(&pu, &au) + dot(&pu, &atu))) / dot(u, u)
}

/// Structured trial vectors: `Π_ρ`-pure low modes of `B` above the second and
/// `(1 − Π_ρ)`-pure first velocity excitations.
fn structured_trials(asm: &OperatorAssembly, rough: &RoughQuasimodeSpace, count: usize) -> Vec<Vec<f64>> {
    let b = &asm.basis;
    let eig = SymmetricEigen::new(csr_to_dense(&asm.b_xy()));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut out = Vec::new();
    for &k in order.iter().skip(2).take(count) {
        let col = eig.eigenvectors.column(k);
        let mut pure = vec![0.0; b.n()];
        let mut excited = vec![0.0; b.n()];
        for (r, &c) in col.iter().enumerate() {
            let (ix, iy) = (r / b.ny, r % b.ny);
            pure[b.flat(ix, 0, iy)] = c;
            excited[b.flat(ix, 1, iy)] = c;
        }
        rough.project_out(&mut pure);
        out.push(pure);
        out.push(excited);
    }
    out
}

/// Random and structured probe of the modified form on `F_h^⊥`.
pub fn coercivity_functional(
    asm: &OperatorAssembly,
    a: &AuxOperator,
    rough: &RoughQuasimodeSpace,
    delta0: f64,
    trials: usize,
    seed: u64,
) -> Result<CoercivityReport, HypoError> {
    let g = rate_g(asm.h, asm.gamma, asm.nu).map_err(|e| HypoError::Conditioning(e.to_string()))?;
    let delta = delta0 * g / asm.h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = asm.n();
    let mut min_random = f64::INFINITY;
    for _ in 0..trials {
        let mut u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        rough.project_out(&mut u);
        min_random = min_random.min(modified_form(asm, a, delta, &u));
    }
    let min_structured = structured_trials(asm, rough, 4)
        .iter()
        .map(|u| modified_form(asm, a, delta, u))
        .fold(f64::INFINITY, f64::min);
    let coercivity_min = min_random.min(min_structured);
    Ok(CoercivityReport {
        h: asm.h,
        gamma: asm.gamma,
        nu: asm.nu,
        alpha: a.alpha,
        delta0,
        delta,
        g_h: g,
        norm_a: a.norm,
        random_trials: trials,
        min_random,
        min_structured,
        coercivity_min,
        ratio: coercivity_min / g,
    })
}

fn power_norm(apply: &dyn Fn(&[f64]) -> Vec<f64>, apply_t: &dyn Fn(&[f64]) -> Vec<f64>, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut sigma = 0.0;
    for _ in 0..300 {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|a| *a /= nx);
        let y = apply(&x);
        let s = norm(&y);
        let done = (s - sigma).abs() <= 1e-10 * s;
        sigma = s;
        x = apply_t(&y);
        if done {
            break;
        }
    }
    sigma
}

/// Operator norms of the three remainder terms and their scaled constants.
#[derive(Debug, Clone, Serialize)]
pub struct RemainderBounds {
    pub h: f64,
    pub alpha: f64,
    /// `‖Π_ρ A Z (1 − Π_ρ)‖`.
    pub azq: f64,
    /// `‖Π_ρ A O (1 − Π_ρ)‖`.
    pub aoq: f64,
    /// `‖(1 − Π_ρ)(Π_ρZ)ᵀA(1 − Π_ρ)‖`.
    pub zta: f64,
    /// `azq / h`.
    pub c_azq: f64,
    /// `aoq / (α^{−1/2} h)`.
    pub c_aoq: f64,
    /// `zta / h`.
    pub c_zta: f64,
}

pub fn remainder_bounds(asm: &OperatorAssembly, a: &AuxOperator) -> RemainderBounds {
    let n = asm.n();
    let q = |x: &[f64]| -> Vec<f64> {
        let p = asm.apply_pi(x);
        x.iter().zip(&p).map(|(a, b)| a - b).collect()
    };
    let pi = |x: &[f64]| asm.apply_pi(x);
    let azq = power_norm(
        &|x| pi(&a.apply(&matvec(&asm.z, &q(x)))),
        &|y| q(&matvec_t(&asm.z, &a.apply_t(&pi(y)))),
        n,
    );
    let aoq = power_norm(
        &|x| pi(&a.apply(&matvec(&asm.o, &q(x)))),
        &|y| q(&matvec_t(&asm.o, &a.apply_t(&pi(y)))),
        n,
    );
    // (Π_ρZ)ᵀ = Zᵀ Π_ρ
    let zta = power_norm(
        &|x| q(&matvec_t(&asm.z, &pi(&a.apply(&q(x))))),
        &|y| q(&a.apply_t(&pi(&matvec(&asm.z, &q(y))))),
        n,
    );
    let h = asm.h;
    RemainderBounds {
        h,
        alpha: a.alpha,
        azq,
        aoq,
        zta,
        c_azq: azq / h,
        c_aoq: aoq * a.alpha.sqrt() / h,
        c_zta: zta / h,
    }
}

/// Smallest eigenvalue of the symmetric part of `AZΠ_ρ` on
/// `Ran Π_ρ ∩ F_h^⊥`, divided by `h`.
pub fn azpi_lower_constant(asm: &OperatorAssembly, a: &AuxOperator, rough: &RoughQuasimodeSpace) -> f64 {
    let red = a.m_inv.nrows();
    // on Ran Π_ρ, AZΠ_ρ = M⁻¹ (JᵀZᵀZJ)
    let zz = csr_to_dense(&(&a.zt_red * &transpose(&a.zt_red)));
    let k = &a.m_inv * zz;
    let s = (&k + k.transpose()) * 0.5;
    // orthonormal basis of the complement of the reduced f_m
    let fs: Vec<DVector<f64>> = rough.vectors.iter().map(|f| DVector::from_vec(a.extract(f))).collect();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for f in fs {
        let mut w = f.clone();
        for b in &basis {
            w -= b * b.dot(&w);
        }
        let nw = w.norm();
        if nw > 1e-12 {
            basis.push(w / nw);
        }
    }
    let proj = DMatrix::identity(red, red)
        - basis.iter().fold(DMatrix::zeros(red, red), |acc, b| acc + b * b.transpose());
    let ps = &proj * s * &proj;
    let eig = SymmetricEigen::new((&ps + ps.transpose()) * 0.5);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|x, y| x.total_cmp(y));
    // the complement drops `basis.len()` directions, which show up as zeros
    let mut nz = vals.into_iter();
    let mut skipped = 0;
    let mut out = f64::INFINITY;
    for v in nz.by_ref() {
        if skipped < basis.len() && v.abs() < 1e-12 {
            skipped += 1;
            continue;
        }
        out = v;
        break;
    }
    out / asm.h
}
