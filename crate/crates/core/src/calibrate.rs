//! Monte Carlo calibration of the learning-rate exponent `gamma`.
//!
//! For every candidate `gamma` two recursions start from `g0` and run side by side for
//! `M` steps. Step `i` samples `theta_i ~ g~_{i-1}`, `X_i ~ phi(. | theta_i)`,
//! `Z_i ~ f_Z` and `Y_i = X_i + Z_i`. The direct recursion observes `X_i` with rate
//! `alpha / (alpha + i)` and the noisy one observes `Y_i` with rate
//! `(alpha / (alpha + i))^gamma`. The score is
//!
//! ```text
//! sum_i (Delta_i - (1 - gamma) log(1 + i / alpha))^2
//! Delta_i = log|g_{i-1}(theta_i | X_i) - g_{i-1}(theta_i)|
//!         - log|g~_{i-1}(theta_i | Y_i) - g~_{i-1}(theta_i)|
//! ```
//!
//! and `gamma_hat` is its argmin over the grid, ties going to the larger `gamma`.

use rayon::prelude::*;

use crate::engine::{KernelRecursion, LearningRateSchedule};
use crate::error::{contract, Error, Result};
use crate::model::{MixingPmf, ParameterGrid};
use crate::noise::{noise_sample, NoiseModel};
use crate::rng::StreamRng;

/// Largest fraction of log-of-zero terms tolerated per `gamma`.
pub const MAX_SKIP_FRACTION: f64 = 0.05;

/// How the per-`gamma` simulations draw their randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamMode {
    /// Stream `gamma_index` of the seed: every `gamma` sees independent draws.
    PerGamma,
    /// Stream 0 of the seed for every `gamma` (common random numbers).
    Common,
}

impl StreamMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            StreamMode::PerGamma => "per-gamma",
            StreamMode::Common => "common",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationConfig {
    pub gamma_grid: Vec<f64>,
    /// Horizon `M`.
    pub horizon: usize,
    pub alpha: f64,
    pub grid: ParameterGrid,
    pub g0: MixingPmf,
    pub noise: NoiseModel,
    pub seed: u64,
    pub streams: StreamMode,
}

/// `{start, start + step, ..., 1}` built from integer multiples to avoid drift.
pub fn gamma_grid(start: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.5 && start <= 1.0) || !(step > 0.0) {
        return Err(contract(format!("bad gamma grid start {start} step {step}")));
    }
    let count = ((1.0 - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// `{0.501, 0.502, ..., 1.000}`.
pub fn default_gamma_grid() -> Vec<f64> {
    (501..=1000).map(|i| i as f64 / 1000.0).collect()
}

impl CalibrationConfig {
    /// Uniform `g0`, the default `gamma` grid, per-`gamma` streams.
    pub fn new(grid: ParameterGrid, noise: NoiseModel, horizon: usize, seed: u64) -> Result<Self> {
        let g0 = MixingPmf::uniform(grid.len())?;
        Ok(Self {
            gamma_grid: default_gamma_grid(),
            horizon,
            alpha: 1.0,
            grid,
            g0,
            noise,
            seed,
            streams: StreamMode::PerGamma,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_grid.is_empty() {
            return Err(contract("gamma grid is empty"));
        }
        if self.gamma_grid.iter().any(|&g| !(g > 0.5 && g <= 1.0)) {
            return Err(contract("gamma grid values must lie in (1/2, 1]"));
        }
        if self.gamma_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(contract("gamma grid must be strictly increasing"));
        }
        if self.horizon == 0 {
            return Err(contract("horizon M must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(contract(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.g0.len() != self.grid.len() {
            return Err(contract("g0 does not match the grid"));
        }
        if self.g0.weights().iter().any(|&w| !(w > 0.0)) {
            return Err(contract("g0 must be strictly positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaScore {
    pub gamma: f64,
    pub score: f64,
    /// Terms dropped because an update difference was exactly zero.
    pub skipped: usize,
    pub terms: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    pub gamma_hat: f64,
    pub trace: Vec<GammaScore>,
}

/// Score one `gamma` by the coupled simulation.
pub fn score_gamma(config: &CalibrationConfig, index: usize) -> Result<GammaScore> {
    let gamma = config.gamma_grid[index];
    let stream = match config.streams {
        StreamMode::PerGamma => index as u64,
        StreamMode::Common => 0,
    };
    let mut rng = StreamRng::with_stream(config.seed, stream);
    let mut direct = KernelRecursion::direct(
        &config.grid,
        config.g0.clone(),
        LearningRateSchedule::new(config.alpha, 1.0)?,
    )?;
    let mut noisy = KernelRecursion::noisy(
        &config.grid,
        &config.noise,
        config.g0.clone(),
        LearningRateSchedule::new(config.alpha, gamma)?,
    )?;
    let atoms = config.grid.atoms();
    let mut score = 0.0;
    let mut skipped = 0;
    for i in 1..=config.horizon {
        let j = rng.categorical(noisy.pmf().weights());
        let theta = &atoms[j];
        let x = theta.mean() + theta.variance().sqrt() * rng.standard_normal();
        let y = x + noise_sample(&config.noise, &mut rng);

        let d_direct = (direct.posterior(x)?[j] - direct.pmf().weights()[j]).abs();
        let d_noisy = (noisy.posterior(y)?[j] - noisy.pmf().weights()[j]).abs();
        direct.commit();
        noisy.commit();

        let delta = d_direct.ln() - d_noisy.ln();
        if !delta.is_finite() {
            skipped += 1;
            continue;
        }
        let target = (1.0 - gamma) * (i as f64 / config.alpha).ln_1p();
        score += (delta - target).powi(2);
    }
    if skipped as f64 > MAX_SKIP_FRACTION * config.horizon as f64 {
        return Err(Error::CalibrationSkips {
            gamma,
            skipped,
            total: config.horizon,
        });
    }
    Ok(GammaScore {
        gamma,
        score,
        skipped,
        terms: config.horizon,
    })
}

/// Argmin of the score over the grid; equal scores resolve to the larger `gamma`.
pub fn calibrate_gamma(config: &CalibrationConfig) -> Result<CalibrationResult> {
    config.validate()?;
    let trace = (0..config.gamma_grid.len())
        .into_par_iter()
        .map(|i| score_gamma(config, i))
        .collect::<Result<Vec<_>>>()?;
    let best = argmin_prefer_larger(&trace);
    Ok(CalibrationResult {
        gamma_hat: trace[best].gamma,
        trace,
    })
}

/// Index of the smallest score, scanning in increasing `gamma` so ties go to the larger.
pub fn argmin_prefer_larger(trace: &[GammaScore]) -> usize {
    let mut best = 0;
    for (i, s) in trace.iter().enumerate() {
        if s.score <= trace[best].score {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicatedCalibration {
    /// Mean of the per-seed estimates.
    pub gamma_hat: f64,
    pub runs: Vec<(u64, CalibrationResult)>,
}

/// Run [`calibrate_gamma`] once per seed and average the estimates.
pub fn calibrate_gamma_replicated(
    config: &CalibrationConfig,
    seeds: &[u64],
) -> Result<ReplicatedCalibration> {
    if seeds.is_empty() {
        return Err(contract("seed set is empty"));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut c = config.clone();
        c.seed = seed;
        runs.push((seed, calibrate_gamma(&c)?));
    }
    let gamma_hat = runs.iter().map(|(_, r)| r.gamma_hat).sum::<f64>() / runs.len() as f64;
    Ok(ReplicatedCalibration { gamma_hat, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GridSpec;

    fn small_grid() -> ParameterGrid {
        ParameterGrid::from_spec(GridSpec {
            mean_min: -4.0,
            mean_max: 4.0,
            mean_step: 1.0,
            var_min: 0.5,
            var_max: 2.0,
            var_step: 0.5,
        })
        .unwrap()
    }

    #[test]
    fn grids() {
        let d = default_gamma_grid();
        assert_eq!(d.len(), 500);
        assert_eq!(d[0], 0.501);
        assert_eq!(*d.last().unwrap(), 1.0);
        let g = gamma_grid(0.502, 0.002).unwrap();
        assert_eq!(g.len(), 250);
        assert!((g.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_noise_selects_one() {
        let mut c =
            CalibrationConfig::new(small_grid(), NoiseModel::gaussian(1e-6).unwrap(), 200, 4).unwrap();
        c.gamma_grid = gamma_grid(0.6, 0.1).unwrap();
        let r = calibrate_gamma(&c).unwrap();
        assert_eq!(r.gamma_hat, 1.0);
        let last = r.trace.last().unwrap();
        assert!(last.score < 1e-6, "{}", last.score);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut c =
            CalibrationConfig::new(small_grid(), NoiseModel::laplace(1.0).unwrap(), 100, 8).unwrap();
        c.gamma_grid = gamma_grid(0.55, 0.05).unwrap();
        assert_eq!(calibrate_gamma(&c).unwrap(), calibrate_gamma(&c).unwrap());
    }

    #[test]
    fn ties_prefer_larger_gamma() {
        let at = |gamma, score| GammaScore { gamma, score, skipped: 0, terms: 5 };
        let trace = [at(0.8, 2.0), at(0.9, 1.0), at(0.95, 1.0), at(1.0, 3.0)];
        assert_eq!(argmin_prefer_larger(&trace), 2);
    }

    #[test]
    fn validation() {
        let mut c =
            CalibrationConfig::new(small_grid(), NoiseModel::gaussian(1.0).unwrap(), 5, 1).unwrap();
        c.gamma_grid = vec![0.9, 0.8];
        assert!(calibrate_gamma(&c).is_err());
        c.gamma_grid = vec![0.5];
        assert!(calibrate_gamma(&c).is_err());
        c.gamma_grid = vec![0.9];
        c.horizon = 0;
        assert!(calibrate_gamma(&c).is_err());
    }
}
