//! Independent ground-truth machinery: analytic and brute-force grid
//! posteriors plus the distribution distances used to validate the sampler
//! and solver.
//!
//! Everything here is deliberately restricted to scalar sources and K <= 2
//! grids: brute force is the point, and the scalar cases already exercise
//! every algorithmic path of the sampler.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::RngCore;

use crate::error::{DigError, Result};
use crate::numeric::{log_normal_pdf, standard_normal, uniform01};
use crate::priors::{GmmPrior, ScorePrior};

/// Default evaluation window; wide enough for every test prior.
pub const DEFAULT_GRID_LO: f64 = -8.0;
pub const DEFAULT_GRID_HI: f64 = 8.0;
/// Default point count for 1-D grids.
pub const DEFAULT_GRID_POINTS: usize = 4001;
/// Default per-axis point count for 2-D grids.
pub const DEFAULT_GRID_POINTS_2D: usize = 1201;
/// Normalized mass allowed in the outermost grid cells.
const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

/// Normalized piecewise-linear density on a uniform 1-D grid.
#[derive(Debug, Clone)]
pub struct GridDensity {
    lo: f64,
    hi: f64,
    density: Vec<f64>,
    /// Cumulative trapezoid integral, cum[i] = integral up to x_i.
    cum: Vec<f64>,
}

impl GridDensity {
    /// Evaluate `log_density` on the grid, exponentiate, normalize.
    /// Fails when more than [`BOUNDARY_MASS_LIMIT`] of the normalized mass
    /// sits in the first or last grid cell.
    pub fn from_log_density<F: Fn(f64) -> f64>(
        lo: f64,
        hi: f64,
        n_points: usize,
        log_density: F,
    ) -> Result<Self> {
        if !(hi > lo) || n_points < 3 {
            return Err(DigError::InvalidArgument(
                "need hi > lo and at least 3 grid points".into(),
            ));
        }
        let dx = (hi - lo) / (n_points - 1) as f64;
        let logs: Vec<f64> = (0..n_points)
            .map(|i| log_density(lo + i as f64 * dx))
            .collect();
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(DigError::InvalidArgument(
                "log density is nowhere finite on the grid".into(),
            ));
        }
        let mut density: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
        let total = trapezoid(&density, dx);
        if !(total > 0.0) || !total.is_finite() {
            return Err(DigError::InvalidArgument(
                "density does not integrate to a positive value".into(),
            ));
        }
        density.iter_mut().for_each(|d| *d /= total);
        let out = Self::from_normalized(lo, hi, density);
        out.check_boundary()?;
        Ok(out)
    }

    /// As [`from_log_density`](Self::from_log_density), doubling the window
    /// around its center until the boundary-mass check passes.
    pub fn from_log_density_auto_widen<F: Fn(f64) -> f64>(
        lo: f64,
        hi: f64,
        n_points: usize,
        log_density: F,
    ) -> Result<Self> {
        let center = 0.5 * (lo + hi);
        let mut half = 0.5 * (hi - lo);
        let mut last_err = None;
        for _ in 0..8 {
            match Self::from_log_density(center - half, center + half, n_points, &log_density) {
                Ok(g) => return Ok(g),
                Err(e @ DigError::GridTooNarrow { .. }) => {
                    last_err = Some(e);
                    half *= 2.0;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| {
            DigError::InvalidArgument("auto-widen failed without a boundary error".into())
        }))
    }

    fn from_normalized(lo: f64, hi: f64, density: Vec<f64>) -> Self {
        let dx = (hi - lo) / (density.len() - 1) as f64;
        let mut cum = Vec::with_capacity(density.len());
        cum.push(0.0);
        for w in density.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + 0.5 * (w[0] + w[1]) * dx);
        }
        Self {
            lo,
            hi,
            density,
            cum,
        }
    }

    fn check_boundary(&self) -> Result<()> {
        let dx = self.dx();
        let first = 0.5 * (self.density[0] + self.density[1]) * dx;
        let n = self.density.len();
        let last = 0.5 * (self.density[n - 2] + self.density[n - 1]) * dx;
        let boundary_mass = first + last;
        if boundary_mass > BOUNDARY_MASS_LIMIT {
            return Err(DigError::GridTooNarrow {
                boundary_mass,
                limit: BOUNDARY_MASS_LIMIT,
            });
        }
        Ok(())
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.density.len() - 1) as f64
    }

    pub fn n_points(&self) -> usize {
        self.density.len()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx()
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    /// Total trapezoid integral (1 after construction, by normalization).
    pub fn total_mass(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        let dx = self.dx();
        let weighted: Vec<f64> = self
            .density
            .iter()
            .enumerate()
            .map(|(i, d)| self.x(i) * d)
            .collect();
        trapezoid(&weighted, dx)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let dx = self.dx();
        let weighted: Vec<f64> = self
            .density
            .iter()
            .enumerate()
            .map(|(i, d)| (self.x(i) - m) * (self.x(i) - m) * d)
            .collect();
        trapezoid(&weighted, dx)
    }

    /// Exact integral of the piecewise-linear density over [a, b] within
    /// the grid window.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.cdf(b) - self.cdf(a)
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return self.total_mass();
        }
        let dx = self.dx();
        let cell = (((x - self.lo) / dx).floor() as usize).min(self.density.len() - 2);
        let u = x - self.x(cell);
        let d0 = self.density[cell];
        let d1 = self.density[cell + 1];
        self.cum[cell] + d0 * u + 0.5 * (d1 - d0) * u * u / dx
    }

    /// Inverse-CDF draw; the density's own sampler for self-tests.
    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let target: f64 = uniform01(rng) * self.total_mass();
        let cell = match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&target).unwrap())
        {
            Ok(i) => i.min(self.density.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.density.len() - 2),
        };
        let dx = self.dx();
        let need = target - self.cum[cell];
        let d0 = self.density[cell];
        let slope = (self.density[cell + 1] - d0) / dx;
        // Solve d0*u + slope*u^2/2 = need for u in [0, dx].
        let u = if slope.abs() < 1e-300 {
            if d0 > 0.0 {
                need / d0
            } else {
                0.5 * dx
            }
        } else {
            let disc = (d0 * d0 + 2.0 * slope * need).max(0.0);
            (-d0 + disc.sqrt()) / slope
        };
        self.x(cell) + u.clamp(0.0, dx)
    }

    /// CSV dump: x, density.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> Result<()> {
        writeln!(out, "x,density")?;
        for (i, d) in self.density.iter().enumerate() {
            writeln!(out, "{},{}", self.x(i), d)?;
        }
        Ok(())
    }
}

fn trapezoid(values: &[f64], dx: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    dx * (0.5 * values[0] + inner + 0.5 * values[values.len() - 1])
}

/// Result of a total-variation comparison.
#[derive(Debug, Clone, Copy)]
pub struct TvResult {
    pub tv: f64,
    /// Samples that fell outside the grid and were folded into the
    /// boundary bins.
    pub outside: usize,
}

/// Empirical total-variation distance between samples and a grid density:
/// half the L1 gap between bin frequencies and bin masses.
pub fn tv_distance(samples: &[f64], density: &GridDensity, bins: usize) -> Result<TvResult> {
    if samples.len() < 1000 {
        return Err(DigError::InvalidArgument(format!(
            "need at least 1000 samples for a stable TV estimate, got {}",
            samples.len()
        )));
    }
    if bins < 2 {
        return Err(DigError::InvalidArgument("need at least 2 bins".into()));
    }
    let (lo, hi) = (density.lo(), density.hi());
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0f64; bins];
    let mut outside = 0usize;
    for &s in samples {
        let raw = ((s - lo) / width).floor() as i64;
        if raw < 0 || raw >= bins as i64 {
            outside += 1;
        }
        counts[raw.clamp(0, bins as i64 - 1) as usize] += 1.0;
    }
    let n = samples.len() as f64;
    let mut tv = 0.0;
    for (b, &c) in counts.iter().enumerate() {
        let a = lo + b as f64 * width;
        let mass = density.mass_between(a, a + width);
        tv += (c / n - mass).abs();
    }
    Ok(TvResult {
        tv: 0.5 * tv,
        outside,
    })
}

/// Total-variation distance between two sample sets binned identically.
pub fn tv_distance_samples(a: &[f64], b: &[f64], lo: f64, hi: f64, bins: usize) -> f64 {
    let width = (hi - lo) / bins as f64;
    let hist = |xs: &[f64]| {
        let mut h = vec![0f64; bins];
        for &x in xs {
            let idx = (((x - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
            h[idx] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Exact conjugate posterior for scalar sources with Gaussian priors under
/// the additive observation y = sum_k s_k + v.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    /// Row-major K x K covariance.
    pub cov: Vec<Vec<f64>>,
    chol_lower: Vec<Vec<f64>>,
}

impl GaussianPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draw one exact posterior sample via the Cholesky factor.
    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let k = self.dim();
        let z: Vec<f64> = (0..k).map(|_| standard_normal(rng)).collect();
        (0..k)
            .map(|i| {
                self.mean[i]
                    + self.chol_lower[i][..=i]
                        .iter()
                        .zip(&z)
                        .map(|(l, zi)| l * zi)
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Closed-form posterior: precision diag(1/tau_k^2) + (1/sigma_v^2) 11^T,
/// mean = precision^{-1} (mu_k / tau_k^2 + y / sigma_v^2).
pub fn gaussian_posterior(
    prior_means: &[f64],
    prior_vars: &[f64],
    sigma_v: f64,
    y_hat: f64,
) -> Result<GaussianPosterior> {
    let k = prior_means.len();
    if k == 0 || prior_vars.len() != k {
        return Err(DigError::InvalidArgument(
            "need matching, non-empty prior means and variances".into(),
        ));
    }
    if prior_vars.iter().any(|&v| !(v > 0.0)) || !(sigma_v > 0.0) {
        return Err(DigError::InvalidArgument(
            "prior variances and sigma_v must be positive".into(),
        ));
    }
    let inv_sv2 = 1.0 / (sigma_v * sigma_v);
    let mut precision = DMatrix::<f64>::from_element(k, k, inv_sv2);
    for i in 0..k {
        precision[(i, i)] += 1.0 / prior_vars[i];
    }
    let rhs = DVector::<f64>::from_iterator(
        k,
        (0..k).map(|i| prior_means[i] / prior_vars[i] + y_hat * inv_sv2),
    );
    let chol = Cholesky::new(precision).ok_or_else(|| {
        DigError::InvalidArgument("internal: posterior precision is not positive definite".into())
    })?;
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();

    let cov_chol = Cholesky::new(cov.clone()).ok_or_else(|| {
        DigError::InvalidArgument("internal: posterior covariance is not positive definite".into())
    })?;
    let l = cov_chol.l();
    Ok(GaussianPosterior {
        mean: mean.iter().cloned().collect(),
        cov: (0..k)
            .map(|i| (0..k).map(|j| cov[(i, j)]).collect())
            .collect(),
        chol_lower: (0..k)
            .map(|i| (0..k).map(|j| l[(i, j)]).collect())
            .collect(),
    })
}

/// Grid evaluation of the tilted density prior(x) * exp(-(r - x)^2 /
/// (2 sigma_v^2)), normalized. Scalar priors only.
pub fn tilted_grid_posterior(prior: &GmmPrior, r: f64, sigma_v: f64) -> Result<GridDensity> {
    if prior.dim() != 1 {
        return Err(DigError::InvalidArgument(
            "grid posteriors are restricted to scalar priors".into(),
        ));
    }
    if !(sigma_v > 0.0) {
        return Err(DigError::InvalidArgument("sigma_v must be positive".into()));
    }
    GridDensity::from_log_density_auto_widen(
        DEFAULT_GRID_LO,
        DEFAULT_GRID_HI,
        DEFAULT_GRID_POINTS,
        |x| {
            let lp = prior.log_density(&[x], 0.0).expect("scalar query");
            lp - (r - x) * (r - x) / (2.0 * sigma_v * sigma_v)
        },
    )
}

/// Grid evaluation of the noise-level-sigma marginal of a scalar mixture
/// prior (sigma = 0 gives the clean-signal density).
pub fn gmm_grid_density(prior: &GmmPrior, sigma: f64) -> Result<GridDensity> {
    if prior.dim() != 1 {
        return Err(DigError::InvalidArgument(
            "grid densities are restricted to scalar priors".into(),
        ));
    }
    GridDensity::from_log_density_auto_widen(
        DEFAULT_GRID_LO,
        DEFAULT_GRID_HI,
        DEFAULT_GRID_POINTS,
        |x| prior.log_density(&[x], sigma).expect("scalar query"),
    )
}

/// Normalized joint posterior p(s1, s2 | y) on a square grid.
#[derive(Debug, Clone)]
pub struct Grid2Density {
    lo: f64,
    hi: f64,
    n: usize,
    /// Row-major: density[i * n + j] is the value at (s1_i, s2_j).
    density: Vec<f64>,
}

impl Grid2Density {
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.n + j]
    }

    fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    /// Total 2-D trapezoid integral (1 after construction).
    pub fn total_mass(&self) -> f64 {
        let dx = self.dx();
        let row_integrals: Vec<f64> = (0..self.n)
            .map(|i| trapezoid(&self.density[i * self.n..(i + 1) * self.n], dx))
            .collect();
        trapezoid(&row_integrals, dx)
    }

    /// Marginal along one axis (0 -> density of s1, 1 -> density of s2).
    pub fn marginal(&self, axis: usize) -> Result<GridDensity> {
        if axis > 1 {
            return Err(DigError::InvalidArgument("axis must be 0 or 1".into()));
        }
        let dx = self.dx();
        let values: Vec<f64> = (0..self.n)
            .map(|i| {
                let line: Vec<f64> = (0..self.n)
                    .map(|j| {
                        if axis == 0 {
                            self.value(i, j)
                        } else {
                            self.value(j, i)
                        }
                    })
                    .collect();
                trapezoid(&line, dx)
            })
            .collect();
        let total = trapezoid(&values, dx);
        let normalized = values.iter().map(|v| v / total).collect();
        Ok(GridDensity::from_normalized(self.lo, self.hi, normalized))
    }
}

/// Brute-force joint posterior for K = 2 scalar mixture priors:
/// p(s1, s2 | y) proportional to p1(s1) p2(s2) N(y; s1 + s2, sigma_v^2).
pub fn joint_gmm_grid(
    prior1: &GmmPrior,
    prior2: &GmmPrior,
    y_hat: f64,
    sigma_v: f64,
) -> Result<Grid2Density> {
    joint_gmm_grid_on(
        prior1,
        prior2,
        y_hat,
        sigma_v,
        DEFAULT_GRID_LO,
        DEFAULT_GRID_HI,
        DEFAULT_GRID_POINTS_2D,
    )
}

/// As [`joint_gmm_grid`] with an explicit window, widening it on boundary-
/// mass failures.
pub fn joint_gmm_grid_on(
    prior1: &GmmPrior,
    prior2: &GmmPrior,
    y_hat: f64,
    sigma_v: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Grid2Density> {
    if prior1.dim() != 1 || prior2.dim() != 1 {
        return Err(DigError::InvalidArgument(
            "joint grids are restricted to scalar priors".into(),
        ));
    }
    if !(sigma_v > 0.0) {
        return Err(DigError::InvalidArgument("sigma_v must be positive".into()));
    }
    if !(hi > lo) || n < 3 {
        return Err(DigError::InvalidArgument(
            "need hi > lo and at least 3 grid points".into(),
        ));
    }
    let center = 0.5 * (lo + hi);
    let mut half = 0.5 * (hi - lo);
    let mut last_err = None;
    for _ in 0..6 {
        match build_joint(prior1, prior2, y_hat, sigma_v, center - half, center + half, n) {
            Ok(g) => return Ok(g),
            Err(e @ DigError::GridTooNarrow { .. }) => {
                last_err = Some(e);
                half *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

fn build_joint(
    prior1: &GmmPrior,
    prior2: &GmmPrior,
    y_hat: f64,
    sigma_v: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Grid2Density> {
    let dx = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * dx).collect();
    let lp1: Vec<f64> = xs
        .iter()
        .map(|&x| prior1.log_density(&[x], 0.0).expect("scalar query"))
        .collect();
    let lp2: Vec<f64> = xs
        .iter()
        .map(|&x| prior2.log_density(&[x], 0.0).expect("scalar query"))
        .collect();
    let var_v = sigma_v * sigma_v;

    let mut logs = vec![0f64; n * n];
    let mut peak = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let l = lp1[i] + lp2[j] + log_normal_pdf(y_hat, xs[i] + xs[j], var_v);
            logs[i * n + j] = l;
            peak = peak.max(l);
        }
    }
    let mut density: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
    let raw = Grid2Density {
        lo,
        hi,
        n,
        density: density.clone(),
    };
    let total = raw.total_mass();
    if !(total > 0.0) || !total.is_finite() {
        return Err(DigError::InvalidArgument(
            "joint density does not integrate to a positive value".into(),
        ));
    }
    density.iter_mut().for_each(|d| *d /= total);
    let grid = Grid2Density { lo, hi, n, density };

    // Boundary-mass check through both marginals.
    for axis in 0..2 {
        let m = grid.marginal(axis)?;
        m.check_boundary()?;
    }
    Ok(grid)
}
