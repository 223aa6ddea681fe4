//! Finite-grid Gaussian mixture model: parameter atoms, mixing pmfs and densities.

use std::collections::HashMap;
use std::fmt;

use crate::error::{contract, domain, finite, Result};
use crate::special::{gauss_pdf, INV_SQRT_2PI};

/// Largest grid the constructors accept.
pub const MAX_ATOMS: usize = 5_000_000;

/// Tolerance on the total mass of a [`MixingPmf`].
pub const PMF_SUM_TOL: f64 = 1e-12;

/// Gaussian kernel parameter `(mean, variance)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaAtom {
    mean: f64,
    variance: f64,
}

impl ThetaAtom {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        finite(mean, "atom mean")?;
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(domain(format!("atom variance must be positive and finite, got {variance}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Kernel density at `x` without argument checks.
    #[inline]
    pub fn density(&self, x: f64) -> f64 {
        gauss_pdf(x, self.mean, self.variance)
    }

    /// Kernel derivative at `x` without argument checks.
    #[inline]
    pub fn density_deriv(&self, x: f64) -> f64 {
        -(x - self.mean) / self.variance * self.density(x)
    }

    /// `sup_{x in [a, b]} |k'(x | theta)|`.
    pub(crate) fn max_abs_deriv_on(&self, a: f64, b: f64) -> f64 {
        // |k'| increases on |x - mean| < sd and decreases beyond, so the sup is
        // attained at an endpoint or at mean +- sd.
        let sd = self.variance.sqrt();
        [a, b, self.mean - sd, self.mean + sd]
            .into_iter()
            .filter(|&x| x >= a && x <= b)
            .map(|x| self.density_deriv(x).abs())
            .fold(0.0, f64::max)
    }

    fn key(&self) -> (u64, u64) {
        (self.mean.to_bits(), self.variance.to_bits())
    }
}

/// Gaussian kernel density `phi(x | mean, variance)`.
pub fn kernel_pdf(theta: &ThetaAtom, x: f64) -> Result<f64> {
    finite(x, "x")?;
    Ok(theta.density(x))
}

/// `d/dx phi(x | mean, variance)`.
pub fn kernel_pdf_deriv(theta: &ThetaAtom, x: f64) -> Result<f64> {
    finite(x, "x")?;
    Ok(theta.density_deriv(x))
}

/// Cartesian grid description: uniform means times uniform variances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub mean_min: f64,
    pub mean_max: f64,
    pub mean_step: f64,
    pub var_min: f64,
    pub var_max: f64,
    pub var_step: f64,
}

fn axis_len(min: f64, max: f64, step: f64, what: &str) -> Result<usize> {
    for (v, n) in [(min, "min"), (max, "max"), (step, "step")] {
        finite(v, &format!("{what}_{n}"))?;
    }
    if !(step > 0.0) {
        return Err(domain(format!("{what}_step must be positive, got {step}")));
    }
    if max < min {
        return Err(domain(format!("{what}_max {max} is below {what}_min {min}")));
    }
    let span = (max - min) / step;
    if span > MAX_ATOMS as f64 {
        return Err(domain(format!("{what} axis has more than {MAX_ATOMS} points")));
    }
    // tolerate representation error in the step, e.g. (5 - 0.01) / 0.01
    Ok((span + 1e-9).floor() as usize + 1)
}

impl GridSpec {
    /// Desk-scale default: means -10..10 step 0.5, variances 0.25..4 step 0.25 (K = 656).
    pub const DESK: GridSpec = GridSpec {
        mean_min: -10.0,
        mean_max: 10.0,
        mean_step: 0.5,
        var_min: 0.25,
        var_max: 4.0,
        var_step: 0.25,
    };

    /// Full-scale grid: means -40..40 step 0.5, variances 0.01..5 step 0.01 (K = 80500).
    pub const PAPER: GridSpec = GridSpec {
        mean_min: -40.0,
        mean_max: 40.0,
        mean_step: 0.5,
        var_min: 0.01,
        var_max: 5.0,
        var_step: 0.01,
    };

    /// Number of means and of variances.
    pub fn shape(&self) -> Result<(usize, usize)> {
        let nm = axis_len(self.mean_min, self.mean_max, self.mean_step, "mean")?;
        let nv = axis_len(self.var_min, self.var_max, self.var_step, "var")?;
        if !(self.var_min > 0.0) {
            return Err(domain(format!("var_min must be positive, got {}", self.var_min)));
        }
        if nm.saturating_mul(nv) > MAX_ATOMS {
            return Err(domain(format!("grid has {nm} x {nv} atoms, above {MAX_ATOMS}")));
        }
        Ok((nm, nv))
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.mean_min,
            self.mean_max,
            self.mean_step,
            self.var_min,
            self.var_max,
            self.var_step,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            mean_min: a[0],
            mean_max: a[1],
            mean_step: a[2],
            var_min: a[3],
            var_max: a[4],
            var_step: a[5],
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "means [{}, {}] step {}, variances [{}, {}] step {}",
            self.mean_min, self.mean_max, self.mean_step, self.var_min, self.var_max, self.var_step
        )
    }
}

/// Finite parameter set with counting-measure semantics.
///
/// Atoms keep their construction order; grids built from a [`GridSpec`] are row-major
/// over (mean, variance), which the checkpoint format relies on.
#[derive(Clone, Debug)]
pub struct ParameterGrid {
    atoms: Vec<ThetaAtom>,
    index: HashMap<(u64, u64), usize>,
    spec: Option<GridSpec>,
}

impl PartialEq for ParameterGrid {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms && self.spec == other.spec
    }
}

impl ParameterGrid {
    pub fn from_spec(spec: GridSpec) -> Result<Self> {
        let (nm, nv) = spec.shape()?;
        let mut atoms = Vec::with_capacity(nm * nv);
        for i in 0..nm {
            let mean = spec.mean_min + i as f64 * spec.mean_step;
            for j in 0..nv {
                let var = spec.var_min + j as f64 * spec.var_step;
                atoms.push(ThetaAtom::new(mean, var)?);
            }
        }
        let mut grid = Self::from_atoms(atoms)?;
        grid.spec = Some(spec);
        Ok(grid)
    }

    pub fn from_atoms(atoms: Vec<ThetaAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(contract("parameter grid must be nonempty"));
        }
        if atoms.len() > MAX_ATOMS {
            return Err(contract(format!("parameter grid exceeds {MAX_ATOMS} atoms")));
        }
        let mut index = HashMap::with_capacity(atoms.len());
        for (i, a) in atoms.iter().enumerate() {
            if index.insert(a.key(), i).is_some() {
                return Err(contract(format!(
                    "duplicate atom (mean {}, variance {})",
                    a.mean, a.variance
                )));
            }
        }
        Ok(Self {
            atoms,
            index,
            spec: None,
        })
    }

    pub fn atoms(&self) -> &[ThetaAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The Cartesian description this grid was built from, if any.
    pub fn spec(&self) -> Option<&GridSpec> {
        self.spec.as_ref()
    }

    pub fn position(&self, atom: &ThetaAtom) -> Option<usize> {
        self.index.get(&atom.key()).copied()
    }

    /// `sup_{x in [a, b], theta} |k'(x | theta)|`.
    pub fn max_abs_deriv_on(&self, a: f64, b: f64) -> f64 {
        self.atoms
            .iter()
            .map(|t| t.max_abs_deriv_on(a, b))
            .fold(0.0, f64::max)
    }

    /// Largest kernel value over the grid, `1 / sqrt(2 pi min variance)`.
    pub fn max_kernel(&self) -> f64 {
        let vmin = self.atoms.iter().map(|a| a.variance).fold(f64::INFINITY, f64::min);
        INV_SQRT_2PI / vmin.sqrt()
    }
}

/// Probability mass function over the atoms of a [`ParameterGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct MixingPmf {
    weights: Vec<f64>,
}

impl MixingPmf {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(contract("pmf must be nonempty"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(contract(format!("pmf weights must be finite and >= 0, got {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PMF_SUM_TOL {
            return Err(contract(format!("pmf weights sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(contract("pmf must be nonempty"));
        }
        Ok(Self {
            weights: vec![1.0 / len as f64; len],
        })
    }

    /// Point mass on atom `at`.
    pub fn degenerate(len: usize, at: usize) -> Result<Self> {
        if at >= len {
            return Err(contract(format!("atom index {at} out of range for {len} atoms")));
        }
        let mut weights = vec![0.0; len];
        weights[at] = 1.0;
        Ok(Self { weights })
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Total variation distance `0.5 * sum |p - q|`.
    pub fn total_variation(&self, other: &MixingPmf) -> f64 {
        0.5 * self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// `max_j |p_j - q_j|`.
    pub fn sup_distance(&self, other: &MixingPmf) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Mixture density `sum_j pmf[j] * phi(x | atoms[j])`.
pub fn mixture_pdf(grid: &ParameterGrid, pmf: &MixingPmf, x: f64) -> Result<f64> {
    check_aligned(grid, pmf)?;
    finite(x, "x")?;
    Ok(mixture_pdf_unchecked(grid, pmf.weights(), x))
}

#[inline]
pub(crate) fn mixture_pdf_unchecked(grid: &ParameterGrid, weights: &[f64], x: f64) -> f64 {
    grid.atoms
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w != 0.0)
        .map(|(a, &w)| w * a.density(x))
        .sum()
}

pub(crate) fn check_aligned(grid: &ParameterGrid, pmf: &MixingPmf) -> Result<()> {
    if grid.len() != pmf.len() {
        return Err(contract(format!(
            "pmf has {} weights but grid has {} atoms",
            pmf.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Strictly increasing x-values at which densities are reported.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGrid {
    points: Vec<f64>,
}

impl EvalGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(contract("evaluation grid must be nonempty"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(contract("evaluation grid points must be finite"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(contract("evaluation grid must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `count` equally spaced points from `low` to `high` inclusive.
    pub fn linspace(low: f64, high: f64, count: usize) -> Result<Self> {
        match count {
            0 => Err(contract("evaluation grid needs at least one point")),
            1 => Self::new(vec![low]),
            _ => {
                let h = (high - low) / (count - 1) as f64;
                Self::new(
                    (0..count)
                        .map(|i| if i == count - 1 { high } else { low + i as f64 * h })
                        .collect(),
                )
            }
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
