//! Monte Carlo for the adaptive Langevin system
//!
//! ```text
//! dx = v dt
//! dv = (−V'(x) − ν y v − γ v) dt + √(2γh) dB
//! dy = ν (v² − h) dt
//! ```
//!
//! integrated by the Strang splitting
//! `B/2 · A/2 · Y/2 · O · Y/2 · A/2 · B/2` where `B` kicks `v` by `−V'`,
//! `A` drifts `x`, `Y` advances `y` explicitly and `O` is the exact
//! Ornstein–Uhlenbeck step for `v` with the friction `γ + ν y` frozen.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::potential::{double_well, DoubleWellTopology, Point3, Potential};

/// `Δt · √max|V''|` may not exceed this.
pub const STABILITY_LIMIT: f64 = 0.1;

/// States with a coordinate beyond this magnitude abort the run.
pub const BLOWUP_GUARD: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SdeError {
    #[error("parameter {name} = {value} is out of range")]
    Parameter { name: &'static str, value: f64 },
    #[error("time step {dt} violates the stability guard: dt·sqrt(max|V''|) = {product:.4} > {STABILITY_LIMIT}")]
    Stiff { dt: f64, product: f64 },
    #[error("trajectory {trajectory} blew up at t = {time} with dt = {dt}")]
    Unstable { dt: f64, time: f64, trajectory: usize },
    #[error("horizon {horizon} exhausted: {collected} of {requested} transitions observed")]
    Partial {
        horizon: f64,
        collected: usize,
        requested: usize,
        stats: Box<TrajectoryStats>,
    },
    #[error(transparent)]
    Topology(#[from] crate::potential::PotentialError),
}

/// Everything needed to reproduce a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct SdeConfig {
    pub potential: Potential,
    pub gamma: f64,
    pub nu: f64,
    pub h: f64,
    pub dt: f64,
    /// Per-trajectory time budget.
    pub horizon: f64,
    pub seed: u64,
    /// Core-set radius; `None` means `0.2 · |m − s|` for each well.
    pub r_core: Option<f64>,
    /// Starting point for [`simulate`]; `None` starts at the shallow well
    /// (or the origin when the landscape is not a double well).
    pub initial: Option<Point3>,
    /// Independent trajectories used by [`simulate`].
    pub trajectories: usize,
    /// Time discarded before moments are accumulated.
    pub burn_in: f64,
    pub histogram_bins: usize,
}

impl SdeConfig {
    pub fn new(potential: Potential, gamma: f64, nu: f64, h: f64) -> Self {
        Self {
            potential,
            gamma,
            nu,
            h,
            dt: 0.01,
            horizon: 1e4,
            seed: 0,
            r_core: None,
            initial: None,
            trajectories: 32,
            burn_in: 10.0,
            histogram_bins: 40,
        }
    }

    /// `√ max|V''|` over the potential's search box.
    pub fn stiffest_frequency(&self) -> f64 {
        let (lo, hi) = self.potential.search_box();
        (0..=400)
            .map(|i| self.potential.hess(lo + (hi - lo) * i as f64 / 400.0).abs())
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        let check = |name, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(SdeError::Parameter { name, value })
            }
        };
        check("gamma", self.gamma, self.gamma >= 0.0)?;
        check("nu", self.nu, self.nu >= 0.0)?;
        check("h", self.h, self.h > 0.0)?;
        check("dt", self.dt, self.dt > 0.0)?;
        check("horizon", self.horizon, self.horizon > 0.0)?;
        check("burn_in", self.burn_in, self.burn_in >= 0.0)?;
        check("trajectories", self.trajectories as f64, self.trajectories >= 1)?;
        if let Some(r) = self.r_core {
            check("r_core", r, r > 0.0)?;
        }
        let product = self.dt * self.stiffest_frequency();
        if product > STABILITY_LIMIT {
            return Err(SdeError::Stiff { dt: self.dt, product });
        }
        Ok(())
    }

    /// Canonical one-line description, written into output headers.
    pub fn digest(&self) -> String {
        format!(
            "potential={};gamma={};nu={};h={};dt={};horizon={};seed={};r_core={};trajectories={};burn_in={}",
            self.potential.name(),
            self.gamma,
            self.nu,
            self.h,
            self.dt,
            self.horizon,
            self.seed,
            self.r_core.map_or("default".to_string(), |r| r.to_string()),
            self.trajectories,
            self.burn_in,
        )
    }

    fn rng(&self, trajectory: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trajectory as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub x: f64,
    pub v: f64,
    pub y: f64,
}

/// One-step map of the splitting scheme.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    potential: &'a Potential,
    gamma: f64,
    nu: f64,
    h: f64,
    dt: f64,
}

impl<'a> Integrator<'a> {
    pub fn new(config: &'a SdeConfig) -> Self {
        Self {
            potential: &config.potential,
            gamma: config.gamma,
            nu: config.nu,
            h: config.h,
            dt: config.dt,
        }
    }

    /// Advance one step; returns `true` when the friction was non-positive
    /// and the Euler–Maruyama fallback was used.
    #[inline]
    pub fn step<R: Rng>(&self, s: &mut State, rng: &mut R) -> bool {
        let half = 0.5 * self.dt;
        s.v -= half * self.potential.grad(s.x);
        s.x += half * s.v;
        s.y += half * self.nu * (s.v * s.v - self.h);
        let kappa = self.gamma + self.nu * s.y;
        let xi: f64 = rng.sample(StandardNormal);
        let fallback = kappa <= 0.0;
        if fallback {
            s.v += -kappa * s.v * self.dt + (2.0 * self.gamma * self.h * self.dt).sqrt() * xi;
        } else {
            let decay = (-kappa * self.dt).exp();
            let var = -self.gamma * self.h / kappa * (-2.0 * kappa * self.dt).exp_m1();
            s.v = s.v * decay + var.max(0.0).sqrt() * xi;
        }
        s.y += half * self.nu * (s.v * s.v - self.h);
        s.x += half * s.v;
        s.v -= half * self.potential.grad(s.x);
        fallback
    }

    /// Energy `V(x) + v²/2` (conserved when γ = ν = 0).
    pub fn energy(&self, s: &State) -> f64 {
        self.potential.value(s.x) + 0.5 * s.v * s.v
    }
}

/// A mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
}

impl Estimate {
    /// Mean and standard error of independent samples.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            f64::INFINITY
        };
        Self { value: mean, standard_error: (var / n).sqrt() }
    }

    /// `|value − target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.standard_error
    }
}

/// Equal-width histogram on `[lo, hi]`, with under/overflow counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, counts: vec![0; bins], underflow: 0, overflow: 0 }
    }

    fn add(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
        } else if x >= self.hi {
            self.overflow += 1;
        } else {
            let bins = self.counts.len();
            let k = ((x - self.lo) / (self.hi - self.lo) * bins as f64) as usize;
            self.counts[k.min(bins - 1)] += 1;
        }
    }

    fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Largest absolute difference between the empirical density and
    /// `N(0, var)` at the bin centres.
    pub fn gaussian_deviation(&self, var: f64) -> f64 {
        let n = self.total() as f64;
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let x = self.lo + (k as f64 + 0.5) * w;
                let exact = (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                (c as f64 / (n * w) - exact).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Equilibrium moments from time averages; standard errors come from the
/// spread across independent trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moments {
    pub mean_v: Estimate,
    pub var_v: Estimate,
    pub mean_y: Estimate,
    pub var_y: Estimate,
    pub hist_v: Histogram,
    pub hist_y: Histogram,
}

/// First transition times from the shallow well into the deep one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transitions {
    pub times: Vec<f64>,
    pub count: usize,
    pub mean: f64,
    pub standard_error: f64,
    pub r_core_start: f64,
    pub r_core_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub digest: String,
    pub h: f64,
    pub gamma: f64,
    pub nu: f64,
    pub dt: f64,
    pub trajectories: usize,
    pub steps: u64,
    /// Steps where `γ + νy ≤ 0` forced the explicit fallback.
    pub euler_fallbacks: u64,
    pub transitions: Option<Transitions>,
    pub moments: Option<Moments>,
}

struct Accumulator {
    n: u64,
    sv: f64,
    svv: f64,
    sy: f64,
    syy: f64,
    hist_v: Histogram,
    hist_y: Histogram,
    steps: u64,
    fallbacks: u64,
}

fn gibbs_draw(rng: &mut ChaCha8Rng, h: f64) -> (f64, f64) {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    (a * h.sqrt(), b * h.sqrt())
}

fn blown_up(s: &State) -> bool {
    !(s.x.abs() < BLOWUP_GUARD && s.v.abs() < BLOWUP_GUARD && s.y.abs() < BLOWUP_GUARD)
}

/// Run `config.trajectories` independent trajectories over `[0, horizon]`
/// and accumulate the moments of `v` and `y` after the burn-in.
///
/// Each trajectory starts from `initial` (default: the shallow well with
/// `v = y = 0`) and draws from its own ChaCha8 stream, so results do not
/// depend on the thread count.
pub fn simulate(config: &SdeConfig) -> Result<TrajectoryStats, SdeError> {
    config.validate()?;
    if config.trajectories < 2 {
        return Err(SdeError::Parameter { name: "trajectories", value: config.trajectories as f64 });
    }
    let start = match config.initial {
        Some(p) => p,
        None => match double_well(&config.potential) {
            Ok(t) => [t.m_hat.x, 0.0, 0.0],
            Err(_) => [0.0, 0.0, 0.0],
        },
    };
    let integrator = Integrator::new(config);
    let steps = (config.horizon / config.dt).ceil() as u64;
    let burn = (config.burn_in / config.dt).ceil() as u64;
    if burn >= steps {
        return Err(SdeError::Parameter { name: "burn_in", value: config.burn_in });
    }
    let w = 5.0 * config.h.sqrt();
    let bins = config.histogram_bins.max(1);
    let runs: Vec<Result<Accumulator, SdeError>> = (0..config.trajectories)
        .into_par_iter()
        .map(|k| {
            let mut rng = config.rng(k);
            let mut s = State { x: start[0], v: start[1], y: start[2] };
            let mut acc = Accumulator {
                n: 0,
                sv: 0.0,
                svv: 0.0,
                sy: 0.0,
                syy: 0.0,
                hist_v: Histogram::new(-w, w, bins),
                hist_y: Histogram::new(-w, w, bins),
                steps,
                fallbacks: 0,
            };
            for i in 0..steps {
                acc.fallbacks += integrator.step(&mut s, &mut rng) as u64;
                if blown_up(&s) {
                    return Err(SdeError::Unstable {
                        dt: config.dt,
                        time: (i + 1) as f64 * config.dt,
                        trajectory: k,
                    });
                }
                if i >= burn {
                    acc.n += 1;
                    acc.sv += s.v;
                    acc.svv += s.v * s.v;
                    acc.sy += s.y;
                    acc.syy += s.y * s.y;
                    acc.hist_v.add(s.v);
                    acc.hist_y.add(s.y);
                }
            }
            Ok(acc)
        })
        .collect();
    let runs: Vec<Accumulator> = runs.into_iter().collect::<Result<_, _>>()?;
    let per = |f: &dyn Fn(&Accumulator) -> f64| -> Estimate {
        Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>())
    };
    let mean_v = per(&|a| a.sv / a.n as f64);
    let var_v = per(&|a| a.svv / a.n as f64 - (a.sv / a.n as f64).powi(2));
    let mean_y = per(&|a| a.sy / a.n as f64);
    let var_y = per(&|a| a.syy / a.n as f64 - (a.sy / a.n as f64).powi(2));
    let mut hist_v = Histogram::new(-w, w, bins);
    let mut hist_y = Histogram::new(-w, w, bins);
    for a in &runs {
        hist_v.merge(&a.hist_v);
        hist_y.merge(&a.hist_y);
    }
    Ok(TrajectoryStats {
        digest: config.digest(),
        h: config.h,
        gamma: config.gamma,
        nu: config.nu,
        dt: config.dt,
        trajectories: config.trajectories,
        steps: runs.iter().map(|a| a.steps).sum(),
        euler_fallbacks: runs.iter().map(|a| a.fallbacks).sum(),
        transitions: None,
        moments: Some(Moments { mean_v, var_v, mean_y, var_y, hist_v, hist_y }),
    })
}

/// `n` first hitting times of the deep-well core set.
///
/// Sample `k` uses stream `k`: it starts at `x = m̂` with `(v, y)` drawn
/// from the Gibbs marginal `N(0, h)²` and runs until `|x − m̲| < r_core`
/// or the horizon is reached.
pub fn transition_times(
    config: &SdeConfig,
    topo: &DoubleWellTopology,
    n: usize,
) -> Result<TrajectoryStats, SdeError> {
    config.validate()?;
    if n == 0 {
        return Err(SdeError::Parameter { name: "n_transitions", value: 0.0 });
    }
    let s = topo.saddle.x;
    let (m_hat, m_under) = (topo.m_hat.x, topo.m_under.x);
    let r_start = config.r_core.unwrap_or(0.2 * (m_hat - s).abs());
    let r_target = config.r_core.unwrap_or(0.2 * (m_under - s).abs());
    let integrator = Integrator::new(config);
    let max_steps = (config.horizon / config.dt).ceil() as u64;
    let runs: Vec<Result<(Option<f64>, u64, u64), SdeError>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = config.rng(k);
            let (v, y) = gibbs_draw(&mut rng, config.h);
            let mut st = State { x: m_hat, v, y };
            let mut fallbacks = 0u64;
            for i in 0..max_steps {
                fallbacks += integrator.step(&mut st, &mut rng) as u64;
                if blown_up(&st) {
                    return Err(SdeError::Unstable {
                        dt: config.dt,
                        time: (i + 1) as f64 * config.dt,
                        trajectory: k,
                    });
                }
                if (st.x - m_under).abs() < r_target {
                    return Ok((Some((i + 1) as f64 * config.dt), i + 1, fallbacks));
                }
            }
            Ok((None, max_steps, fallbacks))
        })
        .collect();
    let runs: Vec<(Option<f64>, u64, u64)> = runs.into_iter().collect::<Result<_, _>>()?;
    let times: Vec<f64> = runs.iter().filter_map(|r| r.0).collect();
    let est = if times.is_empty() {
        Estimate { value: f64::NAN, standard_error: f64::NAN }
    } else {
        Estimate::from_samples(&times)
    };
    let stats = TrajectoryStats {
        digest: config.digest(),
        h: config.h,
        gamma: config.gamma,
        nu: config.nu,
        dt: config.dt,
        trajectories: n,
        steps: runs.iter().map(|r| r.1).sum(),
        euler_fallbacks: runs.iter().map(|r| r.2).sum(),
        transitions: Some(Transitions {
            count: times.len(),
            mean: est.value,
            standard_error: est.standard_error,
            times,
            r_core_start: r_start,
            r_core_target: r_target,
        }),
        moments: None,
    };
    let collected = stats.transitions.as_ref().map_or(0, |t| t.count);
    if collected < n {
        return Err(SdeError::Partial {
            horizon: config.horizon,
            collected,
            requested: n,
            stats: Box::new(stats),
        });
    }
    Ok(stats)
}

/// Least-squares slope and intercept of `ys` against `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
