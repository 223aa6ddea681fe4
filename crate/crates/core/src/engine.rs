//! The streaming recursion over a finite grid.
//!
//! Each observation `y` moves the mixing pmf toward its Bayes reweighting under the
//! noise-convolved kernel:
//!
//! ```text
//! g_{n+1}(theta) = (1 - a_{n+1}) g_n(theta) + a_{n+1} g_n(theta | y)
//! g_n(theta | y) = k~(y | theta) g_n(theta) / sum_theta' k~(y | theta') g_n(theta')
//! ```
//!
//! with `a_n = (alpha / (alpha + n))^gamma`. Cost per observation is O(K) time and
//! memory regardless of how many observations came before. The result depends on the
//! order of the observations.

use std::sync::Arc;

use crate::error::{contract, domain, finite, Error, Result};
use crate::model::{check_aligned, mixture_pdf_unchecked, MixingPmf, ParameterGrid};
use crate::noise::{AtomKernel, NoiseModel};

/// Learning rates `(alpha / (alpha + n))^gamma` with `alpha > 0`, `1/2 < gamma <= 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRateSchedule {
    alpha: f64,
    gamma: f64,
}

impl LearningRateSchedule {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(contract(format!("alpha must be positive and finite, got {alpha}")));
        }
        if !(gamma > 0.5 && gamma <= 1.0) {
            return Err(contract(format!("gamma must lie in (1/2, 1], got {gamma}")));
        }
        Ok(Self { alpha, gamma })
    }

    /// `a_n = 1 / (1 + n)`.
    pub fn harmonic() -> Self {
        Self {
            alpha: 1.0,
            gamma: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Rate applied to the `n`-th observation (1-based).
    pub fn rate(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(contract("learning rate index n must be >= 1"));
        }
        Ok(self.rate_unchecked(n))
    }

    #[inline]
    pub(crate) fn rate_unchecked(&self, n: u64) -> f64 {
        let r = self.alpha / (self.alpha + n as f64);
        if self.gamma == 1.0 {
            r
        } else {
            r.powf(self.gamma)
        }
    }

    /// CLT normalizer `b_n = (2 gamma - 1) / alpha^(2 gamma) * n^(2 gamma - 1)`.
    pub fn b_n(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(contract("b_n needs n >= 1"));
        }
        let e = 2.0 * self.gamma - 1.0;
        if !(e > 0.0) {
            return Err(contract("b_n is degenerate for gamma = 1/2"));
        }
        Ok(e / self.alpha.powf(2.0 * self.gamma) * (n as f64).powf(e))
    }
}

/// Bayes reweighting of `prior` by `likelihoods` into `out`.
///
/// The likelihood row is divided by its maximum first; that factor cancels in the
/// normalization and keeps rows of tiny likelihoods away from underflow. Returns
/// `false`, leaving `out` unspecified, when the row or the normalizer is zero.
pub(crate) fn reweight_into(prior: &[f64], likelihoods: &[f64], out: &mut [f64]) -> bool {
    let max = likelihoods.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return false;
    }
    let inv_max = 1.0 / max;
    let mut total = 0.0;
    for ((o, &p), &l) in out.iter_mut().zip(prior).zip(likelihoods) {
        *o = p * (l * inv_max);
        total += *o;
    }
    if !(total > 0.0 && total.is_finite()) {
        return false;
    }
    let inv_total = 1.0 / total;
    out.iter_mut().for_each(|o| *o *= inv_total);
    true
}

/// Bayes reweighting of a pmf by an explicit likelihood row.
pub fn bayes_reweight(prior: &MixingPmf, likelihoods: &[f64]) -> Result<MixingPmf> {
    if likelihoods.len() != prior.len() {
        return Err(contract(format!(
            "likelihood row has {} entries but pmf has {}",
            likelihoods.len(),
            prior.len()
        )));
    }
    if likelihoods.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(domain("likelihoods must be finite and nonnegative"));
    }
    let mut out = vec![0.0; prior.len()];
    if !reweight_into(prior.weights(), likelihoods, &mut out) {
        return Err(Error::DegenerateObservation { y: f64::NAN });
    }
    Ok(MixingPmf::from_raw(out))
}

/// `(1 - rate) * prior + rate * posterior`, in place.
#[inline]
pub(crate) fn convex_step(weights: &mut [f64], posterior: &[f64], rate: f64) {
    let keep = 1.0 - rate;
    for (w, &p) in weights.iter_mut().zip(posterior) {
        *w = keep * *w + rate * p;
    }
}

/// Streaming estimator: grid, current pmf, observation count, schedule and noise law.
///
/// `update` needs exclusive access; density evaluations borrow immutably and can run
/// concurrently on a shared snapshot.
#[derive(Clone, Debug)]
pub struct EstimatorState {
    grid: Arc<ParameterGrid>,
    pmf: MixingPmf,
    n: u64,
    schedule: LearningRateSchedule,
    noise: NoiseModel,
    kernels: Arc<[AtomKernel]>,
    scratch: Vec<f64>,
}

impl PartialEq for EstimatorState {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.pmf == other.pmf
            && self.n == other.n
            && self.schedule == other.schedule
            && self.noise == other.noise
    }
}

impl EstimatorState {
    /// Fresh estimator with the uniform initial guess.
    pub fn new(
        grid: impl Into<Arc<ParameterGrid>>,
        schedule: LearningRateSchedule,
        noise: NoiseModel,
    ) -> Result<Self> {
        let grid = grid.into();
        let pmf = MixingPmf::uniform(grid.len())?;
        Self::from_parts(grid, pmf, 0, schedule, noise)
    }

    pub fn from_parts(
        grid: impl Into<Arc<ParameterGrid>>,
        pmf: MixingPmf,
        n: u64,
        schedule: LearningRateSchedule,
        noise: NoiseModel,
    ) -> Result<Self> {
        let grid = grid.into();
        check_aligned(&grid, &pmf)?;
        let kernels: Arc<[AtomKernel]> =
            grid.atoms().iter().map(|a| AtomKernel::new(&noise, a)).collect();
        let scratch = vec![0.0; 2 * grid.len()];
        Ok(Self {
            grid,
            pmf,
            n,
            schedule,
            noise,
            kernels,
            scratch,
        })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn shared_grid(&self) -> Arc<ParameterGrid> {
        Arc::clone(&self.grid)
    }

    pub fn pmf(&self) -> &MixingPmf {
        &self.pmf
    }

    /// Number of observations absorbed so far.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn schedule(&self) -> &LearningRateSchedule {
        &self.schedule
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Rate that the next observation will receive.
    pub fn next_rate(&self) -> f64 {
        self.schedule.rate_unchecked(self.n + 1)
    }

    /// Rate applied by the most recent update, if any.
    pub fn last_rate(&self) -> Option<f64> {
        (self.n > 0).then(|| self.schedule.rate_unchecked(self.n))
    }

    /// Convolved-kernel likelihoods `k~(y | theta_j)` for every atom.
    pub fn likelihoods_into(&self, y: f64, out: &mut [f64]) {
        for (o, k) in out.iter_mut().zip(self.kernels.iter()) {
            *o = k.eval(y);
        }
    }

    pub(crate) fn kernels(&self) -> &[AtomKernel] {
        &self.kernels
    }

    /// Bayes-reweighted pmf `g_n(. | y)`.
    pub fn posterior_reweight(&self, y: f64) -> Result<MixingPmf> {
        finite(y, "observation")?;
        let mut lik = vec![0.0; self.grid.len()];
        self.likelihoods_into(y, &mut lik);
        let mut out = vec![0.0; lik.len()];
        if !reweight_into(self.pmf.weights(), &lik, &mut out) {
            return Err(Error::DegenerateObservation { y });
        }
        Ok(MixingPmf::from_raw(out))
    }

    /// Absorb one observation. On error the state is left untouched.
    pub fn update(&mut self, y: f64) -> Result<()> {
        finite(y, "observation")?;
        let k = self.grid.len();
        self.scratch.resize(2 * k, 0.0);
        let (lik, post) = self.scratch.split_at_mut(k);
        for (o, kern) in lik.iter_mut().zip(self.kernels.iter()) {
            *o = kern.eval(y);
        }
        if !reweight_into(self.pmf.weights(), lik, post) {
            return Err(Error::DegenerateObservation { y });
        }
        let rate = self.schedule.rate_unchecked(self.n + 1);
        convex_step(self.pmf.weights_mut(), post, rate);
        self.n += 1;
        Ok(())
    }

    /// Fold `update` over a sequence; identical to calling `update` one at a time.
    pub fn fit<I: IntoIterator<Item = f64>>(&mut self, ys: I) -> Result<()> {
        ys.into_iter().try_for_each(|y| self.update(y))
    }

    /// Predictive density of the next observation, `sum_j g_n(theta_j) k~(y | theta_j)`.
    pub fn predictive_pdf(&self, y: f64) -> Result<f64> {
        finite(y, "y")?;
        Ok(self.predictive_pdf_unchecked(y))
    }

    #[inline]
    pub(crate) fn predictive_pdf_unchecked(&self, y: f64) -> f64 {
        self.kernels
            .iter()
            .zip(self.pmf.weights())
            .filter(|(_, &w)| w != 0.0)
            .map(|(k, &w)| w * k.eval(y))
            .sum()
    }

    /// Plug-in signal density `sum_j g_n(theta_j) phi(x | theta_j)`.
    pub fn plugin_pdf(&self, x: f64) -> Result<f64> {
        finite(x, "x")?;
        Ok(mixture_pdf_unchecked(&self.grid, self.pmf.weights(), x))
    }
}

/// The recursion with an explicit per-atom kernel and scratch buffers that expose the
/// Bayes step separately from the convex update.
///
/// [`KernelRecursion::direct`] observes the signal `x` through the plain kernel, as if
/// there were no noise; [`KernelRecursion::noisy`] matches [`EstimatorState`].
#[derive(Clone, Debug)]
pub struct KernelRecursion {
    pmf: MixingPmf,
    n: u64,
    schedule: LearningRateSchedule,
    kernels: Vec<AtomKernel>,
    lik: Vec<f64>,
    post: Vec<f64>,
}

impl KernelRecursion {
    pub fn direct(grid: &ParameterGrid, pmf: MixingPmf, schedule: LearningRateSchedule) -> Result<Self> {
        Self::build(grid, pmf, schedule, grid.atoms().iter().map(AtomKernel::signal).collect())
    }

    pub fn noisy(
        grid: &ParameterGrid,
        noise: &NoiseModel,
        pmf: MixingPmf,
        schedule: LearningRateSchedule,
    ) -> Result<Self> {
        let kernels = grid.atoms().iter().map(|a| AtomKernel::new(noise, a)).collect();
        Self::build(grid, pmf, schedule, kernels)
    }

    fn build(
        grid: &ParameterGrid,
        pmf: MixingPmf,
        schedule: LearningRateSchedule,
        kernels: Vec<AtomKernel>,
    ) -> Result<Self> {
        check_aligned(grid, &pmf)?;
        let k = grid.len();
        Ok(Self {
            pmf,
            n: 0,
            schedule,
            kernels,
            lik: vec![0.0; k],
            post: vec![0.0; k],
        })
    }

    pub fn pmf(&self) -> &MixingPmf {
        &self.pmf
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Posterior `g_n(. | x)` of the current pmf, without updating.
    pub fn posterior(&mut self, x: f64) -> Result<&[f64]> {
        for (o, k) in self.lik.iter_mut().zip(&self.kernels) {
            *o = k.eval(x);
        }
        if !reweight_into(self.pmf.weights(), &self.lik, &mut self.post) {
            return Err(Error::DegenerateObservation { y: x });
        }
        Ok(&self.post)
    }

    /// Apply the step toward the posterior computed by the last [`posterior`](Self::posterior) call.
    pub fn commit(&mut self) {
        let rate = self.schedule.rate_unchecked(self.n + 1);
        convex_step(self.pmf.weights_mut(), &self.post, rate);
        self.n += 1;
    }

    pub fn update(&mut self, x: f64) -> Result<()> {
        finite(x, "observation")?;
        self.posterior(x)?;
        self.commit();
        Ok(())
    }
}
