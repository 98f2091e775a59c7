//! Tensor discretization of `P = H₀ + νY + γO` for `d = 1`: fourth-order
//! finite differences in `x`, `√h`-scaled Hermite modes in `v` and `y`.
//!
//! Flat index of `(ix, iv, iy)` is `ix·(N_v·N_y) + iv·N_y + iy`.

use std::fmt::Write as _;
use std::ops::{Add, Mul};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use sprs::{kronecker_product, CsMat, TriMat};
use thiserror::Error;

use crate::potential::{find_critical_points, ExtendedPhase, Potential};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("domain too small: e^(-f/h) at x = ±{l} is only e^(-{exponent:.2}) below its maximum (need e^(-32.24))")]
    DomainTooSmall { l: f64, exponent: f64 },
    #[error("invalid basis parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CooError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing header line")]
    MissingHeader,
    #[error("header declares {declared} entries, found {found}")]
    Count { declared: usize, found: usize },
    #[error("line {line}: index ({row}, {col}) outside a {rows}x{cols} matrix")]
    OutOfRange { line: usize, row: usize, col: usize, rows: usize, cols: usize },
    #[error("line {line}: non-finite value")]
    NonFinite { line: usize },
    #[error("declared size {rows}x{cols} with {nnz} entries is too large")]
    TooLarge { rows: usize, cols: usize, nnz: usize },
}

/// `ln(1e14)`: the required decay of the kernel at the x-boundary.
pub const BOUNDARY_DECAY: f64 = 14.0 * std::f64::consts::LN_10;

/// Resolution request. `l = None` picks `2.5 ×` the outermost minimum and
/// enlarges it (keeping the grid spacing) until the boundary check passes;
/// an explicit `l` is used as given.
#[derive(Debug, Clone, Serialize)]
pub struct BasisConfig {
    pub h: f64,
    pub l: Option<f64>,
    pub nx: usize,
    pub nv: usize,
    pub ny: usize,
}

impl BasisConfig {
    pub fn new(h: f64) -> Self {
        Self { h, l: None, nx: 129, nv: 16, ny: 16 }
    }

    pub fn with_sizes(mut self, nx: usize, nv: usize, ny: usize) -> Self {
        self.nx = nx;
        self.nv = nv;
        self.ny = ny;
        self
    }

    pub fn with_l(mut self, l: f64) -> Self {
        self.l = Some(l);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BasisDescriptor {
    pub h: f64,
    pub l: f64,
    pub nx: usize,
    pub nv: usize,
    pub ny: usize,
    pub dx: f64,
    pub x: Vec<f64>,
    /// `(V(±L) − min V)/(2h)`, the smaller of the two ends.
    pub boundary_exponent: f64,
}

impl BasisDescriptor {
    pub fn n(&self) -> usize {
        self.nx * self.nv * self.ny
    }

    pub fn flat(&self, ix: usize, iv: usize, iy: usize) -> usize {
        (ix * self.nv + iv) * self.ny + iy
    }

    pub fn tensor(&self, k: usize) -> (usize, usize, usize) {
        let iy = k % self.ny;
        let r = k / self.ny;
        (r / self.nv, r % self.nv, iy)
    }

    /// Half-bandwidth of the assembled operators in flat ordering.
    pub fn bandwidth(&self) -> usize {
        2 * self.nv * self.ny
    }
}

fn boundary_exponent(v: &Potential, l: f64, nx: usize, h: f64) -> f64 {
    let vmin = (0..nx)
        .map(|i| v.value(-l + 2.0 * l * i as f64 / (nx - 1) as f64))
        .fold(f64::INFINITY, f64::min);
    (v.value(-l).min(v.value(l)) - vmin) / (2.0 * h)
}

/// Grid and Hermite sizes, with the kernel-decay check at `x = ±L`.
pub fn build_basis(v: &Potential, cfg: &BasisConfig) -> Result<BasisDescriptor, OperatorError> {
    let h = cfg.h;
    if !(h > 0.0) {
        return Err(OperatorError::Parameter(format!("h = {h} must be positive")));
    }
    if cfg.nx < 5 {
        return Err(OperatorError::Parameter(format!("nx = {} must be at least 5", cfg.nx)));
    }
    if cfg.nv < 4 || cfg.ny < 4 {
        return Err(OperatorError::Parameter(format!(
            "nv = {}, ny = {}: Hermite counts must be at least 4",
            cfg.nv, cfg.ny
        )));
    }
    let (l, nx) = match cfg.l {
        Some(l) => {
            if !(l > 0.0) {
                return Err(OperatorError::Parameter(format!("L = {l} must be positive")));
            }
            (l, cfg.nx)
        }
        None => {
            let outer = find_critical_points(v, v.search_box(), 1e-10)
                .map(|pts| {
                    pts.iter()
                        .filter(|p| p.index == 0)
                        .map(|p| p.x.abs())
                        .fold(0.0, f64::max)
                })
                .unwrap_or(1.0)
                .max(1.0);
            let l0 = 2.5 * outer;
            let dx0 = 2.0 * l0 / (cfg.nx - 1) as f64;
            let mut l = l0;
            let mut nx = cfg.nx;
            while boundary_exponent(v, l, nx, h) <= BOUNDARY_DECAY && l < 100.0 * l0 {
                l *= 1.02;
                nx = (2.0 * l / dx0).ceil() as usize + 1;
            }
            (l, nx)
        }
    };
    let exponent = boundary_exponent(v, l, nx, h);
    if exponent <= BOUNDARY_DECAY {
        return Err(OperatorError::DomainTooSmall { l, exponent });
    }
    let dx = 2.0 * l / (nx - 1) as f64;
    Ok(BasisDescriptor {
        h,
        l,
        nx,
        nv: cfg.nv,
        ny: cfg.ny,
        dx,
        x: (0..nx).map(|i| -l + dx * i as f64).collect(),
        boundary_exponent: exponent,
    })
}

/// Ladder operators of the `√h`-scaled oscillator, built on a padded basis
/// and truncated so that products of up to four factors are exact.
struct Hermite {
    n: usize,
    h: f64,
    a: DMatrix<f64>,
}

const PAD: usize = 4;

impl Hermite {
    fn new(n: usize, h: f64) -> Self {
        let m = n + PAD;
        let mut a = DMatrix::zeros(m, m);
        for k in 1..m {
            a[(k - 1, k)] = (k as f64).sqrt();
        }
        Self { n, h, a }
    }

    fn id(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n + PAD, self.n + PAD)
    }

    /// Multiplication by the coordinate, `√h(a + a†)`.
    fn pos(&self) -> DMatrix<f64> {
        (&self.a + self.a.transpose()) * self.h.sqrt()
    }

    /// `h∂`, `√h(a − a†)/2`.
    fn hder(&self) -> DMatrix<f64> {
        (&self.a - self.a.transpose()) * (0.5 * self.h.sqrt())
    }

    /// Twisted derivative `h∂ + (·)/2 = √h a`.
    fn delta(&self) -> DMatrix<f64> {
        &self.a * self.h.sqrt()
    }

    fn number(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_fn(self.n + PAD, |k, _| self.h * k as f64))
    }

    fn cut(&self, m: &DMatrix<f64>) -> CsMat<f64> {
        dense_to_csr(&m.view((0, 0), (self.n, self.n)).into_owned())
    }
}

pub(crate) fn dense_to_csr(m: &DMatrix<f64>) -> CsMat<f64> {
    let mut t = TriMat::new((m.nrows(), m.ncols()));
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let x = m[(i, j)];
            if x != 0.0 {
                t.add_triplet(i, j, x);
            }
        }
    }
    t.to_csr()
}

pub fn csr_to_dense(m: &CsMat<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.rows(), m.cols());
    for (i, row) in m.outer_iterator().enumerate() {
        for (j, &x) in row.iter() {
            d[(i, j)] += x;
        }
    }
    d
}

pub(crate) fn diag_csr(d: &[f64]) -> CsMat<f64> {
    let mut t = TriMat::new((d.len(), d.len()));
    for (i, &x) in d.iter().enumerate() {
        if x != 0.0 {
            t.add_triplet(i, i, x);
        }
    }
    t.to_csr()
}

pub(crate) fn eye(n: usize) -> CsMat<f64> {
    CsMat::eye(n)
}

pub(crate) fn kron3(a: &CsMat<f64>, b: &CsMat<f64>, c: &CsMat<f64>) -> CsMat<f64> {
    let ab: CsMat<f64> = kronecker_product(a.view(), b.view());
    kronecker_product(ab.view(), c.view())
}

pub(crate) fn scale(m: &CsMat<f64>, s: f64) -> CsMat<f64> {
    m.map(|x| x * s)
}

pub(crate) fn transpose(m: &CsMat<f64>) -> CsMat<f64> {
    m.transpose_view().to_csr()
}

pub(crate) fn frobenius(m: &CsMat<f64>) -> f64 {
    m.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖_F / ‖b‖_F` (absolute when `b = 0`).
pub fn relative_difference(a: &CsMat<f64>, b: &CsMat<f64>) -> f64 {
    let d = frobenius(&(a - b));
    let nb = frobenius(b);
    if nb == 0.0 {
        d
    } else {
        d / nb
    }
}

/// `y = M x` for real `M` and real or complex `x`.
pub fn matvec<T>(m: &CsMat<f64>, x: &[T]) -> Vec<T>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    assert_eq!(m.cols(), x.len());
    m.outer_iterator()
        .map(|row| row.iter().fold(T::default(), |acc, (j, &a)| acc + x[j] * a))
        .collect()
}

/// `y = Mᵀ x`.
pub fn matvec_t<T>(m: &CsMat<f64>, x: &[T]) -> Vec<T>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    assert_eq!(m.rows(), x.len());
    let mut y = vec![T::default(); m.cols()];
    for (i, row) in m.outer_iterator().enumerate() {
        for (j, &a) in row.iter() {
            y[j] = y[j] + x[i] * a;
        }
    }
    y
}

/// Skew fourth-order first-derivative stencil (zero extension at the ends).
fn first_difference(nx: usize, dx: f64) -> CsMat<f64> {
    let mut t = TriMat::new((nx, nx));
    let c1 = 8.0 / (12.0 * dx);
    let c2 = -1.0 / (12.0 * dx);
    for i in 0..nx {
        for (off, c) in [(1usize, c1), (2, c2)] {
            if i + off < nx {
                t.add_triplet(i, i + off, c);
            }
            if i >= off {
                t.add_triplet(i, i - off, -c);
            }
        }
    }
    t.to_csr()
}

/// Fourth-order second-derivative stencil (zero extension at the ends).
fn second_difference(nx: usize, dx: f64) -> CsMat<f64> {
    let mut t = TriMat::new((nx, nx));
    let s = 1.0 / (12.0 * dx * dx);
    for i in 0..nx {
        t.add_triplet(i, i, -30.0 * s);
        for (off, c) in [(1usize, 16.0 * s), (2, -s)] {
            if i + off < nx {
                t.add_triplet(i, i + off, c);
            }
            if i >= off {
                t.add_triplet(i, i - off, c);
            }
        }
    }
    t.to_csr()
}

/// One-dimensional factors shared by the assembly and the identity checks.
#[derive(Debug, Clone)]
pub struct Factors {
    /// `h∂_x` on the grid.
    pub hdx: CsMat<f64>,
    /// `δ_x = h∂_x + V'/2` on the grid.
    pub delta_x: CsMat<f64>,
    pub vprime: Vec<f64>,
    pub vsecond: Vec<f64>,
    /// Velocity-factor matrices: `v`, `v²`, `h∂_v`, `δ_v`, `(h∂_v)∘v`,
    /// `(v² − h)²`, `v(v² − h)`.
    pub v: CsMat<f64>,
    pub v2: CsMat<f64>,
    pub hdv: CsMat<f64>,
    pub delta_v: CsMat<f64>,
    pub hdv_v: CsMat<f64>,
    pub v2mh_sq: CsMat<f64>,
    pub v_v2mh: CsMat<f64>,
    /// Thermostat-factor matrices: `y`, `h∂_y`, `δ_y`, `δ_yδ_y`, `yδ_y`.
    pub y: CsMat<f64>,
    pub hdy: CsMat<f64>,
    pub delta_y: CsMat<f64>,
    pub delta_y_sq: CsMat<f64>,
    pub y_delta_y: CsMat<f64>,
    pub number_v: Vec<f64>,
    pub number_y: Vec<f64>,
}

impl Factors {
    fn new(v: &Potential, basis: &BasisDescriptor) -> Self {
        let h = basis.h;
        let hdx = scale(&first_difference(basis.nx, basis.dx), h);
        let vprime: Vec<f64> = basis.x.iter().map(|&x| v.grad(x)).collect();
        let vsecond: Vec<f64> = basis.x.iter().map(|&x| v.hess(x)).collect();
        let half: Vec<f64> = vprime.iter().map(|g| 0.5 * g).collect();
        let delta_x = &hdx + &diag_csr(&half);

        let hv = Hermite::new(basis.nv, h);
        let (pv, dv) = (hv.pos(), hv.hder());
        let v2 = &pv * &pv;
        let v2mh = &v2 - hv.id() * h;
        let hy = Hermite::new(basis.ny, h);
        let (py, dly) = (hy.pos(), hy.delta());
        Self {
            v: hv.cut(&pv),
            v2: hv.cut(&v2),
            hdv: hv.cut(&dv),
            delta_v: hv.cut(&hv.delta()),
            hdv_v: hv.cut(&(&dv * &pv)),
            v2mh_sq: hv.cut(&(&v2mh * &v2mh)),
            v_v2mh: hv.cut(&(&pv * &v2mh)),
            y: hy.cut(&py),
            hdy: hy.cut(&hy.hder()),
            delta_y: hy.cut(&dly),
            delta_y_sq: hy.cut(&(&dly * &dly)),
            y_delta_y: hy.cut(&(&py * &dly)),
            number_v: (0..basis.nv).map(|k| hv.number()[(k, k)]).collect(),
            number_y: (0..basis.ny).map(|k| hy.number()[(k, k)]).collect(),
            hdx,
            delta_x,
            vprime,
            vsecond,
        }
    }
}

/// All discretized operators at one `(h, γ, ν)`.
#[derive(Debug, Clone)]
pub struct OperatorAssembly {
    pub basis: BasisDescriptor,
    pub gamma: f64,
    pub nu: f64,
    pub h: f64,
    pub p: CsMat<f64>,
    pub h0: CsMat<f64>,
    pub y: CsMat<f64>,
    pub o: CsMat<f64>,
    pub z: CsMat<f64>,
    pub pi_rho: CsMat<f64>,
    /// `Δ_{V/2} = δ_xᵀδ_x` lifted to the full space.
    pub witten: CsMat<f64>,
    pub n_y: CsMat<f64>,
    /// `B = Δ_{V/2} + 2ν²hN_y` lifted to the full space.
    pub b: CsMat<f64>,
    pub delta_x: CsMat<f64>,
    pub delta_v: CsMat<f64>,
    pub delta_y: CsMat<f64>,
    pub factors: Factors,
    /// Values of `V` on the grid.
    pub v_grid: Vec<f64>,
}

/// Assemble every operator of the discretization.
pub fn assemble(phase: &ExtendedPhase, basis: &BasisDescriptor) -> OperatorAssembly {
    let h = basis.h;
    let (gamma, nu) = (phase.gamma, phase.nu);
    let f = Factors::new(&phase.potential, basis);
    let (ix, iv, iy) = (eye(basis.nx), eye(basis.nv), eye(basis.ny));

    let h0 = &kron3(&f.hdx, &f.v, &iy) - &kron3(&diag_csr(&f.vprime), &f.hdv, &iy);
    let yv = &(&kronecker_product(f.v2.view(), f.hdy.view())
        - &kronecker_product(f.hdv_v.view(), f.y.view()))
        + &(&scale(&kronecker_product(iv.view(), f.hdy.view()), -h)
            + &scale(&kronecker_product(iv.view(), f.y.view()), 0.5 * h));
    let y: CsMat<f64> = kronecker_product(ix.view(), yv.view());
    let o = kron3(&ix, &diag_csr(&f.number_v), &iy);
    let z = &h0 + &scale(&y, nu);
    let p = &z + &scale(&o, gamma);

    let mut e0 = TriMat::new((basis.nv, basis.nv));
    e0.add_triplet(0, 0, 1.0);
    let pi_rho = kron3(&ix, &e0.to_csr(), &iy);

    let lap = &transpose(&f.delta_x) * &f.delta_x;
    let witten = kron3(&lap, &iv, &iy);
    let n_y = kron3(&ix, &iv, &diag_csr(&f.number_y));
    let b = &witten + &scale(&n_y, 2.0 * nu * nu * h);

    OperatorAssembly {
        delta_x: kron3(&f.delta_x, &iv, &iy),
        delta_v: kron3(&ix, &f.delta_v, &iy),
        delta_y: kron3(&ix, &iv, &f.delta_y),
        v_grid: basis.x.iter().map(|&x| phase.potential.value(x)).collect(),
        basis: basis.clone(),
        gamma,
        nu,
        h,
        p,
        h0,
        y,
        o,
        z,
        pi_rho,
        witten,
        n_y,
        b,
        factors: f,
    }
}

impl OperatorAssembly {
    pub fn n(&self) -> usize {
        self.basis.n()
    }

    /// `Δ_{V/2}` on the grid from the direct formula
    /// `−h²∂² + V'²/4 − hV''/2`.
    pub fn witten_direct(&self) -> CsMat<f64> {
        let h = self.h;
        let d2 = scale(&second_difference(self.basis.nx, self.basis.dx), -h * h);
        let pot: Vec<f64> = self
            .factors
            .vprime
            .iter()
            .zip(&self.factors.vsecond)
            .map(|(g, c)| 0.25 * g * g - 0.5 * h * c)
            .collect();
        &d2 + &diag_csr(&pot)
    }

    /// `B` restricted to the `(x, y)` factor.
    pub fn b_xy(&self) -> CsMat<f64> {
        let lap = &transpose(&self.factors.delta_x) * &self.factors.delta_x;
        let ny = diag_csr(&self.factors.number_y);
        &kronecker_product(lap.view(), eye(self.basis.ny).view())
            + &scale(
                &kronecker_product(eye(self.basis.nx).view(), ny.view()),
                2.0 * self.nu * self.nu * self.h,
            )
    }

    /// `Π_ρ u`: keep only the `v`-ground-state component.
    pub fn apply_pi<T: Copy + Default>(&self, u: &[T]) -> Vec<T> {
        let (nv, ny) = (self.basis.nv, self.basis.ny);
        u.iter()
            .enumerate()
            .map(|(k, &x)| if (k / ny) % nv == 0 { x } else { T::default() })
            .collect()
    }
}

/// Normalized discretization of `e^{−f/h}`: `e^{−(V − min V)/2h} ⊗ e₀ ⊗ e₀`.
pub fn kernel_vector(asm: &OperatorAssembly) -> Vec<f64> {
    let b = &asm.basis;
    let vmin = asm.v_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut k = vec![0.0; b.n()];
    for (ix, &vx) in asm.v_grid.iter().enumerate() {
        k[b.flat(ix, 0, 0)] = (-(vx - vmin) / (2.0 * b.h)).exp();
    }
    let nrm = norm(&k);
    k.iter_mut().for_each(|x| *x /= nrm);
    k
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn norm_c(x: &[Complex64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative Frobenius errors of the algebraic identities of the
/// discretization.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    /// `P − (H₀ + νY + γO)`.
    pub p_split: f64,
    pub pi_idempotent: f64,
    pub pi_symmetric: f64,
    /// `‖OΠ_ρ‖_F` (absolute).
    pub o_pi: f64,
    /// `‖Π_ρZΠ_ρ‖_F` (absolute).
    pub pi_z_pi: f64,
    pub o_factored: f64,
    pub n_y_factored: f64,
    pub h0_skew: f64,
    pub y_skew: f64,
    /// `(ZΠ_ρ)ᵀ(ZΠ_ρ)` against `hBΠ_ρ`.
    pub zpi_square: f64,
    pub prod1: f64,
    pub prod2: f64,
    pub prod3: f64,
    pub prod4: f64,
}

impl IdentityReport {
    pub fn worst_relative(&self) -> f64 {
        [
            self.p_split,
            self.pi_idempotent,
            self.pi_symmetric,
            self.o_factored,
            self.n_y_factored,
            self.zpi_square,
            self.prod1,
            self.prod2,
            self.prod3,
            self.prod4,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn identity_checks(asm: &OperatorAssembly) -> IdentityReport {
    let f = &asm.factors;
    let (h, nu) = (asm.h, asm.nu);
    let b = &asm.basis;
    let (ix, iv, iy) = (eye(b.nx), eye(b.nv), eye(b.ny));
    let pi = &asm.pi_rho;

    let p_split = relative_difference(
        &asm.p,
        &(&(&asm.h0 + &scale(&asm.y, nu)) + &scale(&asm.o, asm.gamma)),
    );
    let pi_idempotent = relative_difference(&(pi * pi), pi);
    let pi_symmetric = relative_difference(&transpose(pi), pi);
    let o_pi = frobenius(&(&asm.o * pi));
    let pi_z_pi = frobenius(&(&(pi * &asm.z) * pi));
    let o_factored = relative_difference(&(&transpose(&asm.delta_v) * &asm.delta_v), &asm.o);
    let n_y_factored = relative_difference(&(&transpose(&asm.delta_y) * &asm.delta_y), &asm.n_y);
    let h0_skew = relative_difference(&transpose(&asm.h0), &scale(&asm.h0, -1.0));
    let y_skew = relative_difference(&transpose(&asm.y), &scale(&asm.y, -1.0));

    let zpi = &asm.z * pi;
    let zpi_square = relative_difference(&(&transpose(&zpi) * &zpi), &(&scale(&asm.b, h) * pi));

    let dxdx = &f.delta_x * &f.delta_x;
    let vp_dx = &diag_csr(&f.vprime) * &f.delta_x;
    let h0pi = &asm.h0 * pi;
    let ypi = &asm.y * pi;
    let h0t = transpose(&asm.h0);
    let yt = transpose(&asm.y);

    let rhs1 = &(&scale(&kron3(&dxdx, &f.v2, &iy), -1.0) + &scale(&kron3(&vp_dx, &iv, &iy), h)) * pi;
    let prod1 = relative_difference(&(&h0t * &h0pi), &rhs1);

    let rhs2 = &(&scale(&kron3(&ix, &f.v2mh_sq, &f.delta_y_sq), -1.0)
        + &scale(&kron3(&ix, &f.v2, &f.y_delta_y), 2.0 * h))
        * pi;
    let prod2 = relative_difference(&(&yt * &ypi), &rhs2);

    let rhs3 = &(&scale(&kron3(&f.delta_x, &f.v_v2mh, &f.delta_y), -1.0)
        + &scale(&kron3(&diag_csr(&f.vprime), &f.v, &f.delta_y), 2.0 * h))
        * pi;
    let prod3 = relative_difference(&(&h0t * &ypi), &rhs3);

    let rhs4 = &(&scale(&kron3(&f.delta_x, &f.v_v2mh, &f.delta_y), -1.0)
        + &scale(&kron3(&f.delta_x, &f.v, &f.y), h))
        * pi;
    let prod4 = relative_difference(&(&yt * &h0pi), &rhs4);

    IdentityReport {
        p_split,
        pi_idempotent,
        pi_symmetric,
        o_pi,
        pi_z_pi,
        o_factored,
        n_y_factored,
        h0_skew,
        y_skew,
        zpi_square,
        prod1,
        prod2,
        prod3,
        prod4,
    }
}

/// Coordinate-list text: a header `rows cols nnz` then one `row col value`
/// line per stored entry (0-based). Lines starting with `%` or `#` are
/// comments.
pub fn export_coo(m: &CsMat<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "% adaptive-langevin coordinate matrix, 0-based indices");
    let _ = writeln!(s, "{} {} {}", m.rows(), m.cols(), m.nnz());
    for (i, row) in m.outer_iterator().enumerate() {
        for (j, &x) in row.iter() {
            let _ = writeln!(s, "{i} {j} {x:e}");
        }
    }
    s
}

/// Parse the format written by [`export_coo`]. Duplicate entries are summed.
pub fn parse_coo(text: &str) -> Result<CsMat<f64>, CooError> {
    const MAX_DIM: usize = 1 << 24;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%') && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(CooError::MissingHeader)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(CooError::Syntax { line: hline, msg: "header must be `rows cols nnz`".into() });
    }
    let parse_usize = |s: &str, line: usize| {
        s.parse::<usize>()
            .map_err(|e| CooError::Syntax { line, msg: format!("`{s}`: {e}") })
    };
    let rows = parse_usize(fields[0], hline)?;
    let cols = parse_usize(fields[1], hline)?;
    let nnz = parse_usize(fields[2], hline)?;
    if rows > MAX_DIM || cols > MAX_DIM || nnz > MAX_DIM {
        return Err(CooError::TooLarge { rows, cols, nnz });
    }
    let mut t = TriMat::with_capacity((rows, cols), nnz.min(1 << 16));
    let mut found = 0usize;
    for (line, l) in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(CooError::Syntax { line, msg: "entry must be `row col value`".into() });
        }
        let i = parse_usize(f[0], line)?;
        let j = parse_usize(f[1], line)?;
        let x: f64 = f[2]
            .parse()
            .map_err(|e| CooError::Syntax { line, msg: format!("`{}`: {e}", f[2]) })?;
        if i >= rows || j >= cols {
            return Err(CooError::OutOfRange { line, row: i, col: j, rows, cols });
        }
        if !x.is_finite() {
            return Err(CooError::NonFinite { line });
        }
        found += 1;
        if found > nnz {
            return Err(CooError::Count { declared: nnz, found });
        }
        t.add_triplet(i, j, x);
    }
    if found != nnz {
        return Err(CooError::Count { declared: nnz, found });
    }
    Ok(t.to_csr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{extended_phase, Potential};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(h: f64, nx: usize, nv: usize, ny: usize) -> OperatorAssembly {
        let v = Potential::tilted_quartic();
        let ph = extended_phase(&v, 1.0, 1.0).unwrap();
        let basis = build_basis(&v, &BasisConfig::new(h).with_sizes(nx, nv, ny)).unwrap();
        assemble(&ph, &basis)
    }

    #[test]
    fn default_basis_size() {
        let v = Potential::tilted_quartic();
        let b = build_basis(&v, &BasisConfig::new(0.1).with_l(2.5)).unwrap();
        assert_eq!(b.n(), 33024);
        assert_eq!(b.bandwidth(), 512);
    }

    #[test]
    fn small_domain_is_rejected() {
        let v = Potential::preset("symmetric_quartic").unwrap();
        assert!(matches!(
            build_basis(&v, &BasisConfig::new(0.1).with_l(1.0)),
            Err(OperatorError::DomainTooSmall { .. })
        ));
        let auto = build_basis(&Potential::tilted_quartic(), &BasisConfig::new(0.15)).unwrap();
        assert!(auto.boundary_exponent > BOUNDARY_DECAY);
        assert!(auto.l > 2.6);
    }

    #[test]
    fn index_round_trip() {
        let v = Potential::tilted_quartic();
        let b = build_basis(&v, &BasisConfig::new(0.1).with_sizes(17, 5, 6)).unwrap();
        for k in 0..b.n() {
            let (i, j, l) = b.tensor(k);
            assert_eq!(b.flat(i, j, l), k);
        }
    }

    #[test]
    fn o_is_number_operator_and_pi_is_ground_state() {
        let asm = small(0.1, 21, 6, 5);
        let b = &asm.basis;
        let od = asm.o.diag();
        for k in 0..b.n() {
            let (_, iv, _) = b.tensor(k);
            assert!((od.get(k).copied().unwrap_or(0.0) - 0.1 * iv as f64).abs() < 1e-15);
        }
        assert_eq!(asm.o.nnz(), b.n() - b.nx * b.ny);
        let pd = csr_to_dense(&asm.pi_rho);
        for k in 0..b.n() {
            let (_, iv, _) = b.tensor(k);
            assert_eq!(pd[(k, k)], if iv == 0 { 1.0 } else { 0.0 });
        }
        assert_eq!(asm.pi_rho.nnz(), b.nx * b.ny);
    }

    #[test]
    fn velocity_moments_on_ground_state() {
        for h in [0.2, 0.1, 0.05] {
            let asm = small(h, 21, 6, 5);
            let v = kron3(&eye(asm.basis.nx), &asm.factors.v, &eye(5));
            let pvp = &(&asm.pi_rho * &v) * &asm.pi_rho;
            assert!(frobenius(&pvp) < 1e-12);
            // ‖vΠ_ρ‖ = √h exactly: v e₀ = √h e₁
            let vp = csr_to_dense(&(&v * &asm.pi_rho));
            let s = vp.singular_values().max();
            assert!((s / h.sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn algebraic_identities_hold() {
        for (h, nu) in [(0.1, 1.0), (0.2, 0.7)] {
            let v = Potential::tilted_quartic();
            let ph = extended_phase(&v, 1.3, nu).unwrap();
            let basis = build_basis(&v, &BasisConfig::new(h).with_sizes(33, 8, 8)).unwrap();
            let asm = assemble(&ph, &basis);
            let r = identity_checks(&asm);
            assert!(r.worst_relative() < 1e-8, "{r:?}");
            assert!(r.o_pi < 1e-12 && r.pi_z_pi < 1e-12);
            assert!(r.h0_skew < 1e-14 && r.y_skew < 1e-14);
            assert!(r.pi_idempotent == 0.0 && r.pi_symmetric == 0.0);
        }
    }

    #[test]
    fn witten_factorization_matches_direct_formula() {
        // the two discretizations of Δ_{V/2} agree up to O(dx⁴) in the interior
        let mut errs = Vec::new();
        for nx in [65, 129, 257] {
            let asm = small(0.2, nx, 4, 4);
            let f = &asm.factors;
            let fact = &transpose(&f.delta_x) * &f.delta_x;
            let direct = asm.witten_direct();
            let k = kernel_vector(&asm);
            let kx: Vec<f64> = (0..asm.basis.nx).map(|i| k[asm.basis.flat(i, 0, 0)]).collect();
            let a = matvec(&fact, &kx);
            let b = matvec(&direct, &kx);
            let d: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
            errs.push(norm(&d) / norm(&kx));
        }
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
        assert!(errs[2] < 1e-4, "{errs:?}");
    }

    #[test]
    fn kernel_vector_properties() {
        let asm = small(0.1, 65, 6, 6);
        let k = kernel_vector(&asm);
        assert!((norm(&k) - 1.0).abs() < 1e-14);
        let pk = asm.apply_pi(&k);
        assert!((pk.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(norm(&matvec(&asm.o, &k)) == 0.0);
        assert!(norm(&matvec(&asm.y, &k)) < 1e-15);
    }

    #[test]
    fn kernel_defect_plateaus_under_refinement() {
        // Hermite factors are exact on the kernel; only the x-grid matters.
        let mut defects = Vec::new();
        for nx in [129, 257, 513, 1025] {
            let asm = small(0.1, nx, 4, 4);
            let k = kernel_vector(&asm);
            defects.push(norm(&matvec(&asm.p, &k)));
        }
        for w in defects.windows(2) {
            assert!(w[1] < w[0] / 8.0, "{defects:?}");
        }
        assert!(*defects.last().unwrap() <= 1e-6, "{defects:?}");
    }

    #[test]
    fn accretive_on_random_vectors() {
        let asm = small(0.1, 33, 6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let u: Vec<f64> = (0..asm.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pu = matvec(&asm.p, &u);
            let q: f64 = pu.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!(q >= -1e-10 * norm(&u).powi(2));
        }
    }

    #[test]
    fn coo_round_trip_and_errors() {
        let asm = small(0.2, 9, 4, 4);
        let text = export_coo(&asm.p);
        let back = parse_coo(&text).unwrap();
        assert!(relative_difference(&back, &asm.p) < 1e-15);
        assert_eq!(parse_coo(""), Err(CooError::MissingHeader));
        assert!(matches!(parse_coo("2 2 1\n0 0 1.0\n1 1 2.0\n"), Err(CooError::Count { .. })));
        assert!(matches!(parse_coo("2 2 1\n5 0 1.0\n"), Err(CooError::OutOfRange { .. })));
        assert!(matches!(parse_coo("2 2 1\n0 0 NaN\n"), Err(CooError::NonFinite { .. })));
        assert!(matches!(parse_coo("2 2\n"), Err(CooError::Syntax { .. })));
        assert!(matches!(parse_coo("2 2 2\n0 0 1.0\n"), Err(CooError::Count { .. })));
    }

    proptest! {
        #[test]
        fn coo_parser_never_panics(s in "\\PC{0,200}") {
            let _ = parse_coo(&s);
        }

        #[test]
        fn interior_skew_symmetry(seed in 0u64..500) {
            let asm = small(0.15, 25, 5, 5);
            let b = &asm.basis;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..b.n())
                .map(|k| {
                    let (ix, _, _) = b.tensor(k);
                    if (3..b.nx - 3).contains(&ix) { rng.random_range(-1.0..1.0) } else { 0.0 }
                })
                .collect();
            let zu = matvec(&asm.z, &u);
            let ztu = matvec_t(&asm.z, &u);
            let s: Vec<f64> = zu.iter().zip(&ztu).map(|(a, b)| a + b).collect();
            prop_assert!(norm(&s) <= 1e-12 * norm(&zu).max(1.0));
        }
    }
}
