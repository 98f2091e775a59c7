//! Small eigenvalues of the discretized `P` with kernel deflation,
//! resolvent-norm probes and the low spectrum of `B`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sprs::CsMat;
use thiserror::Error;

use crate::banded::{bandwidths, BandedError, BandedLu};
use crate::operator::{csr_to_dense, kernel_vector, matvec, norm, norm_c, OperatorAssembly};
use crate::rates::rate_g;

#[derive(Debug, Error, Clone)]
pub enum SpectralError {
    #[error("factorization of P - z at z = {z} failed ({source}); choose a nonzero shift away from the spectrum")]
    Singular {
        z: Complex64,
        #[source]
        source: BandedError,
    },
    #[error("z = {z} is numerically an eigenvalue (condition estimate {condition:e})")]
    NearEigenvalue { z: Complex64, condition: f64 },
    #[error("eigensolver did not converge after {restarts} restarts (worst residual {worst:e}); {} partial pairs kept", partial.len())]
    Convergence { restarts: usize, worst: f64, partial: Vec<Eigenpair> },
    #[error("invalid request: {0}")]
    Parameter(String),
}

/// Eigenvalue with its relative right residual `‖Pu − λu‖/‖u‖`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Eigenpair {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

impl Eigenpair {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub enum Method {
    ShiftInvertArnoldi,
    Dense,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralOptions {
    /// Real shift of the inversion; `None` uses `−10⁻² g(h)`.
    pub shift: Option<f64>,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub tol: f64,
    /// Inverse-iteration steps that turn `k_h` into the numerical kernel.
    pub kernel_steps: usize,
    /// How many times the kernel projector is applied per operator call.
    pub deflation_passes: usize,
    pub dense_threshold: usize,
    pub force_dense: bool,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            shift: None,
            krylov_dim: 40,
            max_restarts: 3,
            tol: 1e-8,
            kernel_steps: 5,
            deflation_passes: 1,
            dense_threshold: 4000,
            force_dense: false,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    /// The deflated near-zero eigenvalue `⟨Pk̃, k̃⟩` and its residual.
    pub kernel: Eigenpair,
    /// Sorted by real part.
    pub eigenvalues: Vec<Eigenpair>,
    pub shift: f64,
    pub method: Method,
    pub krylov_dim: usize,
    pub restarts: usize,
    pub operator_applications: usize,
    pub n: usize,
    pub nx: usize,
    pub nv: usize,
    pub ny: usize,
    pub l: f64,
    pub h: f64,
    pub gamma: f64,
    pub nu: f64,
}

impl SpectralReport {
    /// Smallest eigenvalue with positive real part (the metastable one for
    /// double wells).
    pub fn first(&self) -> Option<&Eigenpair> {
        self.eigenvalues.first()
    }

    /// Number of eigenvalues, kernel included, with `Re λ ≤ threshold`.
    pub fn count_below(&self, threshold: f64) -> usize {
        usize::from(self.kernel.re <= threshold)
            + self.eigenvalues.iter().filter(|e| e.re <= threshold).count()
    }
}

struct Deflated {
    lu: BandedLu<f64>,
    kernel: Vec<f64>,
    kernel_value: f64,
    shift: f64,
    passes: usize,
}

impl Deflated {
    fn project(&self, x: &mut [f64]) {
        for _ in 0..self.passes {
            let c: f64 = x.iter().zip(&self.kernel).map(|(a, b)| a * b).sum();
            x.iter_mut().zip(&self.kernel).for_each(|(a, b)| *a -= c * b);
        }
    }

    /// `Q (P − s)⁻¹ Q x`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.project(&mut y);
        self.lu.solve_in_place(&mut y);
        self.project(&mut y);
        y
    }
}

fn factor_real(p: &CsMat<f64>, shift: f64) -> Result<BandedLu<f64>, SpectralError> {
    let (kl, ku) = bandwidths(p);
    BandedLu::factor(p, kl, ku, -shift).map_err(|source| SpectralError::Singular {
        z: Complex64::new(shift, 0.0),
        source,
    })
}

fn factor_complex(p: &CsMat<f64>, z: Complex64) -> Result<BandedLu<Complex64>, SpectralError> {
    let (kl, ku) = bandwidths(p);
    BandedLu::factor(p, kl, ku, -z).map_err(|source| SpectralError::Singular { z, source })
}

fn build_deflation(asm: &OperatorAssembly, opts: &SpectralOptions) -> Result<Deflated, SpectralError> {
    let shift = match opts.shift {
        Some(s) => s,
        None => {
            -1e-2
                * rate_g(asm.h, asm.gamma, asm.nu)
                    .map_err(|e| SpectralError::Parameter(e.to_string()))?
        }
    };
    let lu = factor_real(&asm.p, shift)?;
    let mut k = kernel_vector(asm);
    for _ in 0..opts.kernel_steps {
        lu.solve_in_place(&mut k);
        let nk = norm(&k);
        k.iter_mut().for_each(|x| *x /= nk);
    }
    let pk = matvec(&asm.p, &k);
    let kernel_value: f64 = pk.iter().zip(&k).map(|(a, b)| a * b).sum();
    Ok(Deflated { lu, kernel: k, kernel_value, shift, passes: opts.deflation_passes.max(1) })
}

fn residual_real(p: &CsMat<f64>, x: &[f64], lambda: f64) -> f64 {
    let px = matvec(p, x);
    let r: f64 = px.iter().zip(x).map(|(a, b)| (a - lambda * b).powi(2)).sum();
    r.sqrt() / norm(x)
}

fn residual_complex(p: &CsMat<f64>, x: &[Complex64], lambda: Complex64) -> f64 {
    let px = matvec(p, x);
    let r: f64 = px.iter().zip(x).map(|(a, b)| (a - lambda * b).norm_sqr()).sum();
    r.sqrt() / norm_c(x)
}

/// Real Arnoldi with two-pass classical Gram–Schmidt. Returns the basis and
/// the `(m+1) × m` Hessenberg matrix, truncated at breakdown.
fn arnoldi(op: &dyn Fn(&[f64]) -> Vec<f64>, v0: &[f64], m: usize) -> (Vec<Vec<f64>>, DMatrix<f64>) {
    let mut basis = vec![{
        let n0 = norm(v0);
        v0.iter().map(|x| x / n0).collect::<Vec<f64>>()
    }];
    let mut hess = DMatrix::zeros(m + 1, m);
    let mut steps = m;
    for j in 0..m {
        let mut w = op(&basis[j]);
        let wn0 = norm(&w);
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
                hess[(i, j)] += c;
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let wn = norm(&w);
        hess[(j + 1, j)] = wn;
        if wn <= 1e-14 * wn0.max(f64::MIN_POSITIVE) {
            steps = j + 1;
            break;
        }
        basis.push(w.into_iter().map(|x| x / wn).collect());
    }
    basis.truncate(steps);
    (basis, hess.view((0, 0), (steps + 1, steps)).into_owned())
}

/// Eigenvector of a small dense complex matrix by inverse iteration.
fn small_eigvec(h: &DMatrix<Complex64>, theta: Complex64) -> DVector<Complex64> {
    let n = h.nrows();
    let eps = 1e-13 * theta.norm().max(1e-300);
    let shifted = h - DMatrix::identity(n, n) * (theta + Complex64::new(eps, eps));
    let lu = shifted.lu();
    let mut y = DVector::from_element(n, Complex64::new(1.0, 0.0));
    for _ in 0..3 {
        if let Some(z) = lu.solve(&y) {
            let nz = z.norm();
            y = z / Complex64::new(nz, 0.0);
        }
    }
    y
}

/// The `k` eigenvalues of smallest modulus of `P` restricted to the
/// complement of its numerical kernel.
pub fn deflated_smallest(asm: &OperatorAssembly, k: usize) -> Result<SpectralReport, SpectralError> {
    deflated_smallest_with(asm, k, &SpectralOptions::default())
}

pub fn deflated_smallest_with(
    asm: &OperatorAssembly,
    k: usize,
    opts: &SpectralOptions,
) -> Result<SpectralReport, SpectralError> {
    if k == 0 {
        return Err(SpectralError::Parameter("k must be at least 1".into()));
    }
    let n = asm.n();
    if k + 2 > n {
        return Err(SpectralError::Parameter(format!("k = {k} too large for n = {n}")));
    }
    let defl = build_deflation(asm, opts)?;
    let kernel_res = residual_real(&asm.p, &defl.kernel, defl.kernel_value);
    let kernel = Eigenpair { re: defl.kernel_value, im: 0.0, residual: kernel_res };

    let mut report = SpectralReport {
        kernel,
        eigenvalues: Vec::new(),
        shift: defl.shift,
        method: Method::ShiftInvertArnoldi,
        krylov_dim: 0,
        restarts: 0,
        operator_applications: 0,
        n,
        nx: asm.basis.nx,
        nv: asm.basis.nv,
        ny: asm.basis.ny,
        l: asm.basis.l,
        h: asm.h,
        gamma: asm.gamma,
        nu: asm.nu,
    };

    if opts.force_dense {
        report.method = Method::Dense;
        report.eigenvalues = dense_deflated(asm, &defl, k)?;
        return Ok(report);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut m = opts.krylov_dim.max(2 * k + 4).min(n - 2);
    let mut best: Vec<Eigenpair> = Vec::new();
    let mut worst = f64::INFINITY;
    for restart in 0..=opts.max_restarts {
        defl.project(&mut start);
        let op = |x: &[f64]| defl.apply(x);
        let (basis, hess) = arnoldi(&op, &start, m);
        report.operator_applications += basis.len();
        report.krylov_dim = basis.len();
        report.restarts = restart;
        let steps = basis.len();
        let hm: DMatrix<Complex64> =
            hess.view((0, 0), (steps, steps)).map(|x| Complex64::new(x, 0.0));
        let mut thetas: Vec<Complex64> = hess.view((0, 0), (steps, steps)).into_owned().complex_eigenvalues().iter().cloned().collect();
        thetas.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        thetas.truncate(k.min(steps));

        let mut pairs = Vec::new();
        let mut next_start = vec![0.0; n];
        for theta in thetas {
            let y = small_eigvec(&hm, theta);
            let mut u = vec![Complex64::new(0.0, 0.0); n];
            for (q, &yj) in basis.iter().zip(y.iter()) {
                u.iter_mut().zip(q).for_each(|(a, &b)| *a += yj * b);
            }
            let lambda = Complex64::new(defl.shift, 0.0) + theta.inv();
            // add back the kernel component of the true eigenvector
            let pu = matvec(&asm.p, &u);
            let kpu: Complex64 = pu.iter().zip(&defl.kernel).map(|(a, &b)| a * b).sum();
            let c = kpu / (lambda - defl.kernel_value);
            let x: Vec<Complex64> = u.iter().zip(&defl.kernel).map(|(a, &b)| a + c * b).collect();
            let residual = residual_complex(&asm.p, &x, lambda);
            next_start.iter_mut().zip(&u).for_each(|(s, z)| *s += z.re + z.im);
            pairs.push(Eigenpair { re: lambda.re, im: lambda.im, residual });
        }
        worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
        best = pairs;
        if worst <= opts.tol && best.len() == k {
            best.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            report.eigenvalues = best;
            return Ok(report);
        }
        start = next_start;
        if norm(&start) == 0.0 {
            start = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        }
        m = (2 * m).min(n - 2);
    }
    if n < opts.dense_threshold {
        report.method = Method::Dense;
        report.eigenvalues = dense_deflated(asm, &defl, k)?;
        return Ok(report);
    }
    Err(SpectralError::Convergence { restarts: opts.max_restarts, worst, partial: best })
}

/// Dense Schur fallback; eigenvectors by complex inverse iteration.
fn dense_deflated(asm: &OperatorAssembly, defl: &Deflated, k: usize) -> Result<Vec<Eigenpair>, SpectralError> {
    let all = dense_eigenvalues(&asm.p);
    let kernel_idx = all
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - defl.kernel_value).norm().total_cmp(&(b.1 - defl.kernel_value).norm()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut rest: Vec<Complex64> =
        all.iter().enumerate().filter(|(i, _)| *i != kernel_idx).map(|(_, z)| *z).collect();
    rest.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    rest.truncate(k);
    let mut out = Vec::new();
    for lambda in rest {
        let x = inverse_iteration(&asm.p, lambda)?;
        let residual = residual_complex(&asm.p, &x, lambda);
        out.push(Eigenpair { re: lambda.re, im: lambda.im, residual });
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

/// All eigenvalues of a (small) sparse matrix, by dense Schur decomposition.
pub fn dense_eigenvalues(p: &CsMat<f64>) -> Vec<Complex64> {
    csr_to_dense(p).complex_eigenvalues().iter().cloned().collect()
}

fn inverse_iteration(p: &CsMat<f64>, lambda: Complex64) -> Result<Vec<Complex64>, SpectralError> {
    let bump = 1e-10 * lambda.norm().max(1e-12);
    let z = lambda + Complex64::new(bump, bump);
    let lu = factor_complex(p, z)?;
    let n = p.rows();
    let mut x: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0 + (i % 7) as f64, 0.0)).collect();
    for _ in 0..3 {
        lu.solve_in_place(&mut x);
        let nx = norm_c(&x);
        x.iter_mut().for_each(|a| *a /= nx);
    }
    Ok(x)
}

/// Randomized lower bound on `‖(P − z)⁻¹‖`.
#[derive(Debug, Clone, Serialize)]
pub struct ResolventEstimate {
    pub z_re: f64,
    pub z_im: f64,
    /// `max ‖(P − z)⁻¹x‖/‖x‖` over the iterates: a certified lower bound.
    pub lower_bound: f64,
    pub samples: usize,
    pub iterations: usize,
    /// `‖P − z‖_∞ · lower_bound`.
    pub condition_estimate: f64,
}

pub fn resolvent_norm_probe(
    asm: &OperatorAssembly,
    z: Complex64,
    samples: usize,
    seed: u64,
) -> Result<ResolventEstimate, SpectralError> {
    let lu = factor_complex(&asm.p, z)?;
    let n = asm.n();
    let norm_inf = asm
        .p
        .outer_iterator()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .map(|(j, &x)| if i == j { (Complex64::new(x, 0.0) - z).norm() } else { x.abs() })
                .sum::<f64>()
                .max(if row.get(i).is_none() { z.norm() } else { 0.0 })
        })
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    let mut iterations = 0;
    for _ in 0..samples.max(1) {
        let mut x: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let nx = norm_c(&x);
        x.iter_mut().for_each(|a| *a /= nx);
        let mut prev = 0.0;
        for _ in 0..30 {
            iterations += 1;
            let y = lu.solve(&x);
            let sigma = norm_c(&y);
            best = best.max(sigma);
            if sigma * norm_inf > 1e12 {
                return Err(SpectralError::NearEigenvalue { z, condition: sigma * norm_inf });
            }
            let mut w = lu.solve_adjoint(&y);
            let nw = norm_c(&w);
            w.iter_mut().for_each(|a| *a /= nw);
            x = w;
            if (sigma - prev).abs() <= 1e-8 * sigma {
                break;
            }
            prev = sigma;
        }
    }
    Ok(ResolventEstimate {
        z_re: z.re,
        z_im: z.im,
        lower_bound: best,
        samples: samples.max(1),
        iterations,
        condition_estimate: best * norm_inf,
    })
}

/// Low spectrum of `B = Δ_{V/2} + 2ν²hN_y` on the `(x, y)` factor.
#[derive(Debug, Clone, Serialize)]
pub struct WittenGap {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `h·min(1, ν²h)`.
    pub scale: f64,
    /// Third eigenvalue divided by `scale`.
    pub epsilon: f64,
    pub h: f64,
}

impl WittenGap {
    /// The first nonzero gap: the third eigenvalue.
    pub fn third(&self) -> f64 {
        self.eigenvalues[2]
    }
}

/// Shift-invert Lanczos with full reorthogonalization on `B`.
pub fn witten_gap(asm: &OperatorAssembly, count: usize) -> Result<WittenGap, SpectralError> {
    let b = asm.b_xy();
    let n = b.rows();
    let count = count.max(3);
    if count + 2 > n {
        return Err(SpectralError::Parameter(format!("count = {count} too large for n = {n}")));
    }
    let scale = asm.h * (asm.nu * asm.nu * asm.h).min(1.0);
    let sigma = -1e-3 * scale;
    let lu = factor_real(&b, sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let v0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut m = (8 * count).max(40).min(n - 1);
    loop {
        let op = |x: &[f64]| lu.solve(x);
        let (basis, hess) = arnoldi(&op, &v0, m);
        let steps = basis.len();
        let t = hess.view((0, 0), (steps, steps)).into_owned();
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..steps).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let mut vals = Vec::new();
        let mut res = Vec::new();
        for &i in order.iter().take(count) {
            let theta = eig.eigenvalues[i];
            let mut x = vec![0.0; n];
            for (q, &c) in basis.iter().zip(eig.eigenvectors.column(i).iter()) {
                x.iter_mut().zip(q).for_each(|(a, b)| *a += c * b);
            }
            let lambda = sigma + 1.0 / theta;
            vals.push(lambda);
            res.push(residual_real(&b, &x, lambda));
        }
        let ok = res.iter().all(|&r| r <= 1e-8 * scale.max(1e-300).max(1e-6));
        if ok || m >= n - 1 {
            if !ok {
                return Err(SpectralError::Convergence {
                    restarts: 0,
                    worst: res.iter().cloned().fold(0.0, f64::max),
                    partial: vals.iter().zip(&res).map(|(&re, &r)| Eigenpair { re, im: 0.0, residual: r }).collect(),
                });
            }
            let mut pairs: Vec<(f64, f64)> = vals.into_iter().zip(res).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            return Ok(WittenGap {
                epsilon: eigenvalues[2] / scale,
                residuals: pairs.iter().map(|p| p.1).collect(),
                eigenvalues,
                scale,
                h: asm.h,
            });
        }
        m = (2 * m).min(n - 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{assemble, build_basis, BasisConfig};
    use crate::potential::{extended_phase, Potential};

    fn assembly(v: &Potential, h: f64, nx: usize, nv: usize, ny: usize) -> OperatorAssembly {
        let ph = extended_phase(v, 1.0, 1.0).unwrap();
        let basis = build_basis(v, &BasisConfig::new(h).with_sizes(nx, nv, ny)).unwrap();
        assemble(&ph, &basis)
    }

    #[test]
    fn arnoldi_matches_dense_oracle_on_small_double_well() {
        let v = Potential::tilted_quartic();
        let asm = assembly(&v, 0.15, 25, 6, 6);
        let rep = deflated_smallest(&asm, 4).unwrap();
        assert_eq!(rep.method, Method::ShiftInvertArnoldi);
        assert!(rep.kernel.residual <= 1e-8, "{:?}", rep.kernel);
        let mut dense = dense_eigenvalues(&asm.p);
        dense.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        assert!((dense[0].re - rep.kernel.re).abs() < 1e-9);
        for e in &rep.eigenvalues {
            assert!(e.residual <= 1e-8);
            let nearest = dense.iter().map(|z| (z - e.value()).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-8 * (1.0 + e.value().norm()), "{e:?} {nearest}");
        }
        for w in rep.eigenvalues.windows(2) {
            assert!(w[0].re <= w[1].re);
        }
        let forced = deflated_smallest_with(&asm, 4, &SpectralOptions { force_dense: true, ..Default::default() }).unwrap();
        for (a, b) in forced.eigenvalues.iter().zip(&rep.eigenvalues) {
            assert!((a.value() - b.value()).norm() < 1e-8);
        }
    }

    #[test]
    fn single_well_has_only_the_kernel_near_zero() {
        let v = Potential::preset("harmonic").unwrap();
        let h = 0.1;
        let asm = assembly(&v, h, 25, 6, 6);
        let rep = deflated_smallest(&asm, 3).unwrap();
        let g = rate_g(h, 1.0, 1.0).unwrap();
        assert!(rep.kernel.re.abs() < 1e-6 && rep.kernel.residual <= 1e-8);
        let mut dense = dense_eigenvalues(&asm.p);
        dense.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!(dense[0].re.abs() < 1e-6);
        assert!(dense[1].re > 0.1 * g, "{:?}", &dense[..3]);
        assert!((rep.eigenvalues[0].re - dense[1].re).abs() < 1e-8);
    }

    #[test]
    fn double_deflation_is_idempotent() {
        let v = Potential::tilted_quartic();
        let asm = assembly(&v, 0.15, 25, 6, 6);
        let once = deflated_smallest(&asm, 1).unwrap();
        let twice =
            deflated_smallest_with(&asm, 1, &SpectralOptions { deflation_passes: 2, ..Default::default() }).unwrap();
        assert!(twice.kernel.residual <= 1e-8);
        assert!((once.eigenvalues[0].value() - twice.eigenvalues[0].value()).norm() < 1e-10);
    }

    #[test]
    fn resolvent_in_left_half_plane_is_contractive() {
        let v = Potential::tilted_quartic();
        let asm = assembly(&v, 0.15, 25, 6, 6);
        let est = resolvent_norm_probe(&asm, Complex64::new(-1.0, 0.0), 3, 1).unwrap();
        assert!(est.lower_bound <= 1.0 + 1e-10 && est.lower_bound > 0.5, "{est:?}");
        let rep = deflated_smallest(&asm, 1).unwrap();
        let at_eig = resolvent_norm_probe(&asm, rep.eigenvalues[0].value(), 2, 1);
        assert!(matches!(
            at_eig,
            Err(SpectralError::NearEigenvalue { .. }) | Err(SpectralError::Singular { .. })
        ));
    }

    #[test]
    fn resolvent_is_bounded_on_the_g_circle() {
        let v = Potential::tilted_quartic();
        let mut fitted = Vec::new();
        for h in [0.2, 0.15] {
            let asm = assembly(&v, h, 25, 6, 6);
            let g = rate_g(h, 1.0, 1.0).unwrap();
            let r = 0.5 * g;
            let mut worst: f64 = 0.0;
            for k in 0..4 {
                let ang = std::f64::consts::FRAC_PI_2 * (0.25 + k as f64) / 2.0;
                let z = Complex64::from_polar(r, ang + std::f64::consts::FRAC_PI_4);
                worst = worst.max(resolvent_norm_probe(&asm, z, 1, k).unwrap().lower_bound);
            }
            fitted.push(worst * g);
        }
        let ratio = fitted[0].max(fitted[1]) / fitted[0].min(fitted[1]);
        assert!(ratio < 10.0, "{fitted:?}");
    }

    #[test]
    fn witten_gap_matches_dense_and_separable_oracles() {
        let v = Potential::tilted_quartic();
        let asm = assembly(&v, 0.15, 41, 4, 6);
        let gap = witten_gap(&asm, 5).unwrap();
        let dense = SymmetricEigen::new(csr_to_dense(&asm.b_xy())).eigenvalues;
        let mut d: Vec<f64> = dense.iter().cloned().collect();
        d.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in gap.eigenvalues.iter().zip(&d) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
        assert!(d[0] >= -1e-10);
        // separable: eig(Δ) + 2ν²h²n
        let lap = &crate::operator::transpose(&asm.factors.delta_x) * &asm.factors.delta_x;
        let dl = SymmetricEigen::new(csr_to_dense(&lap)).eigenvalues;
        let mut sep = Vec::new();
        for &a in dl.iter() {
            for n in 0..asm.basis.ny {
                sep.push(a + 2.0 * asm.h * asm.h * n as f64);
            }
        }
        sep.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in gap.eigenvalues.iter().zip(&sep) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(gap.eigenvalues[1] < gap.eigenvalues[2], "{:?}", gap.eigenvalues);
        assert!((gap.epsilon - gap.eigenvalues[2] / gap.scale).abs() < 1e-15);
    }
}
