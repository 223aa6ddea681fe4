//! Pointwise credible intervals and uniform credible bands for the plug-in density.
//!
//! Everything here reduces to y-integrals of the conditional plug-in density
//!
//! ```text
//! f_n(x | y) = sum_j phi(x | theta_j) g_n(theta_j | y)
//! v_n(x)     = int (f_n(x | y) - f_n(x))^2 f_n^Y(y) dy
//! ```
//!
//! which are evaluated by composite Simpson on a finite y-window. The window is checked
//! to hold all but 1e-8 of the predictive mass.
//!
//! Suprema over `x in I` and over pairs `(x1, x2)` are taken over uniform probe grids.
//! `psi_n(z)` uses pairs with `|x1 - x2| <= z`, so `psi_n(0) = 0` and `psi_n(b - a)` is
//! the unrestricted pair supremum.

use rayon::prelude::*;

use crate::engine::{reweight_into, EstimatorState};
use crate::error::{contract, Error, Result};
use crate::model::EvalGrid;
use crate::noise::NoiseFamily;
use crate::quadrature::{graded_rule, simpson_rule};
use crate::special::normal_quantile;

/// Default `epsilon` floor for interval and band half-widths.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Predictive mass the y-window must capture.
pub const WINDOW_MASS_TOL: f64 = 1e-8;

/// Window half-width in predictive standard deviations around each atom.
const WINDOW_SDS: f64 = 10.0;

/// Graded z-mesh stops at `sigma * INNER_RATIO`; the sliver below is bounded analytically.
const INNER_RATIO: f64 = 1e-14;

/// Laplace scales added to the signal reach: `exp(-20)` of noise mass lies beyond.
const LAPLACE_WINDOW_SCALES: f64 = 20.0;

/// Largest number of `phi(x_p | theta_j)` values held at once.
const PHI_BLOCK: usize = 1 << 22;

/// Quadrature contract for the y-integrals and the entropy integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub y_window: (f64, f64),
    /// Composite Simpson nodes; odd and at least 401.
    pub y_nodes: usize,
    /// Entropy-integral nodes; at least 256.
    pub z_nodes: usize,
}

impl QuadratureSpec {
    pub const DEFAULT_Y_NODES: usize = 801;
    pub const DEFAULT_Z_NODES: usize = 256;

    pub fn new(y_window: (f64, f64), y_nodes: usize, z_nodes: usize) -> Result<Self> {
        let q = Self {
            y_window,
            y_nodes,
            z_nodes,
        };
        q.validate()?;
        Ok(q)
    }

    /// Window `[min_j (mu_j - h_j), max_j (mu_j + h_j)]` with `h_j = 10 s_j` and
    /// `s_j^2 = sigma_j^2 + sigma_Z^2`, default node counts.
    ///
    /// Laplace tails beyond ten standard deviations still hold `exp(-10 sqrt 2)`, so for
    /// Laplace noise `h_j` is at least `10 sigma_j + LAPLACE_WINDOW_SCALES * b`.
    pub fn for_state(state: &EstimatorState) -> Self {
        let noise = state.noise();
        let nv = noise.variance();
        let laplace_reach = match noise.family() {
            NoiseFamily::Laplace => LAPLACE_WINDOW_SCALES * noise.laplace_scale(),
            NoiseFamily::Gaussian => 0.0,
        };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for a in state.grid().atoms() {
            let s = (WINDOW_SDS * (a.variance() + nv).sqrt())
                .max(WINDOW_SDS * a.variance().sqrt() + laplace_reach);
            lo = lo.min(a.mean() - s);
            hi = hi.max(a.mean() + s);
        }
        Self {
            y_window: (lo, hi),
            y_nodes: Self::DEFAULT_Y_NODES,
            z_nodes: Self::DEFAULT_Z_NODES,
        }
    }

    pub fn with_y_nodes(mut self, y_nodes: usize) -> Self {
        self.y_nodes = y_nodes;
        self
    }

    pub fn with_z_nodes(mut self, z_nodes: usize) -> Self {
        self.z_nodes = z_nodes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.y_window;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(contract(format!("y window [{lo}, {hi}] is not a finite interval")));
        }
        if self.y_nodes < 401 || self.y_nodes % 2 == 0 {
            return Err(contract(format!(
                "y_nodes must be odd and >= 401, got {}",
                self.y_nodes
            )));
        }
        if self.z_nodes < 256 {
            return Err(contract(format!("z_nodes must be >= 256, got {}", self.z_nodes)));
        }
        Ok(())
    }
}

/// Probe counts for the suprema over `x` and over pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbeSpec {
    pub x_probes: usize,
    pub pair_probes: usize,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            x_probes: 201,
            pair_probes: 101,
        }
    }
}

impl ProbeSpec {
    fn validate(&self) -> Result<()> {
        if self.x_probes < 2 || self.pair_probes < 2 {
            return Err(contract("probe counts must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalResult {
    pub x: f64,
    /// Plug-in density `f_n(x)`.
    pub center: f64,
    pub half_width: f64,
    /// `v_n(x)`.
    pub variance: f64,
    pub b_n: f64,
    /// Miscoverage `beta`; the interval uses `z_{1 - beta/2}`.
    pub level: f64,
}

impl IntervalResult {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }
}

/// Running-max tabulation of `psi_n` at `z_m = m * step`, `m = 0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiTable {
    step: f64,
    values: Vec<f64>,
    /// `k'(I)`; `psi(z) <= slope_bound * z`. Infinite when unknown.
    slope_bound: f64,
}

impl PsiTable {
    /// Table from raw values; they are made nondecreasing by a running max.
    pub fn new(step: f64, values: Vec<f64>, slope_bound: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(contract(format!("psi table step must be positive, got {step}")));
        }
        if values.len() < 2 {
            return Err(contract("psi table needs at least two nodes"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(contract("psi values must be finite and nonnegative"));
        }
        if !(slope_bound > 0.0) {
            return Err(contract("psi slope bound must be positive"));
        }
        let mut values = values;
        for i in 1..values.len() {
            values[i] = values[i].max(values[i - 1]);
        }
        Ok(Self {
            step,
            values,
            slope_bound,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slope_bound(&self) -> f64 {
        self.slope_bound
    }

    /// Tabulated `z` values.
    pub fn zs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |m| m as f64 * self.step)
    }

    /// `b - a`, the largest tabulated z.
    pub fn z_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    /// `sup` over probe pairs with `|x1 - x2| <= z`: a step function of z.
    pub fn psi(&self, z: f64) -> f64 {
        if !(z >= 0.0) {
            return 0.0;
        }
        let m = ((z / self.step) * (1.0 + 1e-12)).floor();
        let m = (m as usize).min(self.values.len() - 1);
        self.values[m]
    }

    /// Generalized inverse `inf { z : psi(z) > t }` of the piecewise-linear interpolant,
    /// never below `t / k'(I)`. Returns `b - a` when `t` reaches the table maximum.
    pub fn psi_inv(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let z_max = self.z_max();
        let m = self.values.partition_point(|&v| v <= t);
        let z = if m == self.values.len() {
            z_max
        } else {
            // values[m - 1] <= t < values[m]; m >= 1 because values[0] = 0 <= t
            let (v0, v1) = (self.values[m - 1], self.values[m]);
            let z0 = (m - 1) as f64 * self.step;
            z0 + (t - v0) / (v1 - v0) * self.step
        };
        let floor = if self.slope_bound.is_finite() {
            t / self.slope_bound
        } else {
            0.0
        };
        z.max(floor).min(z_max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandResult {
    pub interval: (f64, f64),
    /// `sigma_n(I)`.
    pub sigma_i: f64,
    /// `v_n(I, beta)`.
    pub band_constant: f64,
    pub level: f64,
    pub psi_table: PsiTable,
    /// `k'(I)`.
    pub k_prime: f64,
    /// `12 * int_0^sigma sqrt(log(1 + lambda / (2 psi^-1(z/2)))) dz`.
    pub entropy_term: f64,
    /// `sigma * sqrt(2 |log(beta/2)|)`.
    pub tail_term: f64,
    pub probes: ProbeSpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CredibleBand {
    pub band: BandResult,
    pub b_n: f64,
    pub epsilon: f64,
    /// `b_n^(-1/2) * max(band_constant, epsilon)`, shared by every point.
    pub half_width: f64,
    pub points: Vec<BandPoint>,
}

/// `f_n(x_p | y_i)` on a y-quadrature for a fixed set of probe points.
struct CondField {
    nx: usize,
    /// Plug-in `f_n(x_p)`.
    center: Vec<f64>,
    /// Simpson weight times predictive density at `y_i`.
    weights: Vec<f64>,
    /// Row-major `ny x nx`.
    cond: Vec<f64>,
}

impl CondField {
    fn build(state: &EstimatorState, xs: &[f64], quad: &QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        let (lo, hi) = quad.y_window;
        let (ys, ws) = simpson_rule(lo, hi, quad.y_nodes)?;
        let grid = state.grid();
        let atoms = grid.atoms();
        let pmf = state.pmf().weights();
        let kernels = state.kernels();
        let k = atoms.len();
        let nx = xs.len();
        let ny = ys.len();

        let mut cond = vec![0.0; ny * nx];
        let mut fy = vec![0.0; ny];
        let block = (PHI_BLOCK / k.max(1)).clamp(1, nx.max(1));
        let mut start = 0;
        while start < nx {
            let end = (start + block).min(nx);
            let w = end - start;
            let mut phi = vec![0.0; k * w];
            for (j, a) in atoms.iter().enumerate() {
                for (p, &x) in xs[start..end].iter().enumerate() {
                    phi[j * w + p] = a.density(x);
                }
            }
            cond.par_chunks_mut(nx)
                .zip(fy.par_iter_mut())
                .zip(ys.par_iter())
                .for_each_init(
                    || (vec![0.0; k], vec![0.0; k]),
                    |(lik, post), ((row, fyi), &y)| {
                        let mut pred = 0.0;
                        for ((l, kern), &g) in lik.iter_mut().zip(kernels).zip(pmf) {
                            *l = kern.eval(y);
                            pred += g * *l;
                        }
                        *fyi = pred;
                        if !reweight_into(pmf, lik, post) {
                            // no predictive mass here: the row carries zero weight
                            return;
                        }
                        let row = &mut row[start..end];
                        for (j, &pj) in post.iter().enumerate() {
                            if pj == 0.0 {
                                continue;
                            }
                            let ph = &phi[j * w..(j + 1) * w];
                            for (r, &f) in row.iter_mut().zip(ph) {
                                *r += pj * f;
                            }
                        }
                    },
                );
            start = end;
        }

        let weights: Vec<f64> = ws.iter().zip(&fy).map(|(w, f)| w * f).collect();
        let captured: f64 = weights.iter().sum();
        if !(captured >= 1.0 - WINDOW_MASS_TOL) {
            return Err(Error::WindowMass {
                low: lo,
                high: hi,
                captured,
            });
        }
        let center = xs
            .iter()
            .map(|&x| crate::model::mixture_pdf_unchecked(grid, pmf, x))
            .collect();
        Ok(Self {
            nx,
            center,
            weights,
            cond,
        })
    }

    fn variance(&self, p: usize) -> f64 {
        let c = self.center[p];
        let v: f64 = self
            .weights
            .iter()
            .zip(self.cond.chunks_exact(self.nx))
            .map(|(w, row)| {
                let d = row[p] - c;
                w * d * d
            })
            .sum();
        v.max(0.0)
    }

    /// `int (f(x_p|y) - f(x_q|y))^2 f^Y(y) dy - (f(x_p) - f(x_q))^2`, clamped at 0.
    fn pair_bracket(&self, p: usize, q: usize) -> f64 {
        let s: f64 = self
            .weights
            .iter()
            .zip(self.cond.chunks_exact(self.nx))
            .map(|(w, row)| {
                let d = row[p] - row[q];
                w * d * d
            })
            .sum();
        let dc = self.center[p] - self.center[q];
        (s - dc * dc).max(0.0)
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(contract(format!("level beta must lie in (0, 1), got {level}")));
    }
    Ok(())
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(contract(format!("epsilon must be positive, got {eps}")));
    }
    Ok(())
}

fn check_interval(i: (f64, f64)) -> Result<()> {
    if !(i.0 < i.1) || !i.0.is_finite() || !i.1.is_finite() {
        return Err(contract(format!("interval [{}, {}] must satisfy a < b", i.0, i.1)));
    }
    Ok(())
}

fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    let h = (b - a) / (count - 1) as f64;
    (0..count)
        .map(|i| if i == count - 1 { b } else { a + i as f64 * h })
        .collect()
}

/// `f_n(x | y)`: the signal mixture under the Bayes-reweighted pmf.
pub fn cond_plugin_pdf(state: &EstimatorState, x: f64, y: f64) -> Result<f64> {
    crate::error::finite(x, "x")?;
    let post = state.posterior_reweight(y)?;
    Ok(crate::model::mixture_pdf_unchecked(state.grid(), post.weights(), x))
}

/// `v_n(x)`.
pub fn variance_vn(state: &EstimatorState, x: f64, quad: &QuadratureSpec) -> Result<f64> {
    crate::error::finite(x, "x")?;
    Ok(CondField::build(state, &[x], quad)?.variance(0))
}

/// `v_n` at many points with one shared y-pass.
pub fn variance_curve(state: &EstimatorState, xs: &[f64], quad: &QuadratureSpec) -> Result<Vec<f64>> {
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(crate::error::domain(format!("x must be finite, got {x}")));
    }
    let field = CondField::build(state, xs, quad)?;
    Ok((0..xs.len()).map(|p| field.variance(p)).collect())
}

fn interval_from(
    state: &EstimatorState,
    x: f64,
    center: f64,
    variance: f64,
    level: f64,
    eps: f64,
) -> Result<IntervalResult> {
    let b_n = state.schedule().b_n(state.n())?;
    let z = normal_quantile(1.0 - level / 2.0);
    Ok(IntervalResult {
        x,
        center,
        half_width: z * variance.max(eps).sqrt() / b_n.sqrt(),
        variance,
        b_n,
        level,
    })
}

/// `f_n(x) +- b_n^(-1/2) z_{1-beta/2} sqrt(max(v_n(x), eps))`.
pub fn credible_interval(
    state: &EstimatorState,
    x: f64,
    level: f64,
    eps: f64,
    quad: &QuadratureSpec,
) -> Result<IntervalResult> {
    credible_intervals(state, &[x], level, eps, quad).map(|mut v| v.remove(0))
}

/// Pointwise intervals at every `x` in `xs`.
pub fn credible_intervals(
    state: &EstimatorState,
    xs: &[f64],
    level: f64,
    eps: f64,
    quad: &QuadratureSpec,
) -> Result<Vec<IntervalResult>> {
    check_level(level)?;
    check_epsilon(eps)?;
    if state.n() == 0 {
        return Err(contract("credible intervals need at least one observation (n >= 1)"));
    }
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(crate::error::domain(format!("x must be finite, got {x}")));
    }
    let field = CondField::build(state, xs, quad)?;
    xs.iter()
        .enumerate()
        .map(|(p, &x)| interval_from(state, x, field.center[p], field.variance(p), level, eps))
        .collect()
}

/// `sup_{x in I} sqrt(v_n(x))` over `x_probes` uniform probes.
pub fn sigma_n(
    state: &EstimatorState,
    interval: (f64, f64),
    quad: &QuadratureSpec,
    x_probes: usize,
) -> Result<f64> {
    check_interval(interval)?;
    if x_probes < 2 {
        return Err(contract("x_probes must be at least 2"));
    }
    let xs = linspace(interval.0, interval.1, x_probes);
    let field = CondField::build(state, &xs, quad)?;
    Ok(sigma_from(&field, 0..x_probes))
}

fn sigma_from(field: &CondField, cols: std::ops::Range<usize>) -> f64 {
    cols.map(|p| field.variance(p).sqrt()).fold(0.0, f64::max)
}

fn psi_from(field: &CondField, offset: usize, count: usize, step: f64, k_prime: f64) -> Result<PsiTable> {
    let mut by_gap = vec![0.0; count];
    for d in 1..count {
        by_gap[d] = (0..count - d)
            .map(|p| field.pair_bracket(offset + p, offset + p + d).sqrt())
            .fold(0.0, f64::max);
    }
    PsiTable::new(step, by_gap, k_prime)
}

/// Tabulate `psi_n` on `[0, b - a]` from `pair_probes` uniform probes.
pub fn psi_table(
    state: &EstimatorState,
    interval: (f64, f64),
    quad: &QuadratureSpec,
    pair_probes: usize,
) -> Result<PsiTable> {
    check_interval(interval)?;
    if pair_probes < 2 {
        return Err(contract("pair_probes must be at least 2"));
    }
    let xs = linspace(interval.0, interval.1, pair_probes);
    let field = CondField::build(state, &xs, quad)?;
    let step = (interval.1 - interval.0) / (pair_probes - 1) as f64;
    psi_from(&field, 0, pair_probes, step, state.grid().max_abs_deriv_on(interval.0, interval.1))
}

/// `psi_n(z)` for `0 <= z <= b - a`.
pub fn psi_n(
    state: &EstimatorState,
    interval: (f64, f64),
    z: f64,
    quad: &QuadratureSpec,
    pair_probes: usize,
) -> Result<f64> {
    check_interval(interval)?;
    let span = interval.1 - interval.0;
    if !(z >= 0.0 && z <= span) {
        return Err(contract(format!("z = {z} outside [0, {span}]")));
    }
    Ok(psi_table(state, interval, quad, pair_probes)?.psi(z))
}

/// Upper bound on `int_0^s sqrt(log(1 + c/z)) dz` using `log(1 + c/z) <= log((s + c)/z)`:
/// equals `(s + c) Gamma(3/2, L)` with `L = log((s + c)/s)`.
fn sliver_bound(s: f64, c: f64) -> f64 {
    if !(s > 0.0) {
        return 0.0;
    }
    let l = ((s + c) / s).ln();
    let rl = l.sqrt();
    s * rl + (s + c) * 0.5 * std::f64::consts::PI.sqrt() * libm::erfc(rl)
}

/// `v_n(I, beta) = 12 int_0^sigma sqrt(log(1 + lambda / (2 psi^-1(z/2)))) dz
///                 + sigma sqrt(2 |log(beta/2)|)`, with `lambda = b - a`.
pub fn band_constant(
    state: &EstimatorState,
    interval: (f64, f64),
    level: f64,
    quad: &QuadratureSpec,
    probes: ProbeSpec,
) -> Result<BandResult> {
    check_interval(interval)?;
    check_level(level)?;
    probes.validate()?;
    let (a, b) = interval;
    let lambda = b - a;
    let k_prime = state.grid().max_abs_deriv_on(a, b);

    let mut xs = linspace(a, b, probes.x_probes);
    xs.extend(linspace(a, b, probes.pair_probes));
    let field = CondField::build(state, &xs, quad)?;
    let sigma = sigma_from(&field, 0..probes.x_probes);
    let step = lambda / (probes.pair_probes - 1) as f64;
    let table = psi_from(&field, probes.x_probes, probes.pair_probes, step, k_prime)?;

    let entropy_term = if sigma > 0.0 {
        let (zs, ws) = graded_rule(sigma, quad.z_nodes, INNER_RATIO);
        let body: f64 = zs
            .iter()
            .zip(&ws)
            .map(|(&z, &w)| w * (1.0 + lambda / (2.0 * table.psi_inv(z / 2.0))).ln().sqrt())
            .sum();
        12.0 * (body + sliver_bound(sigma * INNER_RATIO, lambda * k_prime))
    } else {
        0.0
    };
    let tail_term = sigma * (2.0 * (level / 2.0).ln().abs()).sqrt();
    Ok(BandResult {
        interval,
        sigma_i: sigma,
        band_constant: entropy_term + tail_term,
        level,
        psi_table: table,
        k_prime,
        entropy_term,
        tail_term,
        probes,
    })
}

/// `f_n(x) -+ b_n^(-1/2) max(v_n(I, beta), eps)` at every point of `eval`.
pub fn credible_band(
    state: &EstimatorState,
    interval: (f64, f64),
    eval: &EvalGrid,
    level: f64,
    eps: f64,
    quad: &QuadratureSpec,
    probes: ProbeSpec,
) -> Result<CredibleBand> {
    check_interval(interval)?;
    check_epsilon(eps)?;
    if state.n() == 0 {
        return Err(contract("credible bands need at least one observation (n >= 1)"));
    }
    if let Some(x) = eval.points().iter().find(|&&x| x < interval.0 || x > interval.1) {
        return Err(contract(format!(
            "evaluation point {x} lies outside [{}, {}]",
            interval.0, interval.1
        )));
    }
    let band = band_constant(state, interval, level, quad, probes)?;
    let b_n = state.schedule().b_n(state.n())?;
    let half_width = band.band_constant.max(eps) / b_n.sqrt();
    let points = eval
        .points()
        .iter()
        .map(|&x| {
            let center = crate::model::mixture_pdf_unchecked(state.grid(), state.pmf().weights(), x);
            BandPoint {
                x,
                center,
                lower: center - half_width,
                upper: center + half_width,
            }
        })
        .collect();
    Ok(CredibleBand {
        band,
        b_n,
        epsilon: eps,
        half_width,
        points,
    })
}
