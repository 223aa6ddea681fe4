//! Synthetic signals and noisy observation streams.
//!
//! All draws come from a [`StreamRng`]: a stream is a pure function of the preset, the
//! noise model, the length and the seed.

use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};
use crate::model::PMF_SUM_TOL;
use crate::noise::{noise_sample, NoiseModel};
use crate::rng::StreamRng;
use crate::special::gauss_pdf;

/// One Gaussian component `(weight, mean, variance)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Finite Gaussian mixture with weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct MixturePreset {
    name: String,
    components: Vec<Component>,
}

/// Named presets used in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetName {
    Unimodal,
    Bimodal,
    Multimodal,
}

impl PresetName {
    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Unimodal => "unim",
            PresetName::Bimodal => "bim",
            PresetName::Multimodal => "multi",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unim" | "unimodal" => Ok(PresetName::Unimodal),
            "bim" | "bimodal" => Ok(PresetName::Bimodal),
            "multi" | "multimodal" => Ok(PresetName::Multimodal),
            other => Err(crate::error::config(format!(
                "unknown preset '{other}' (expected unim, bim or multi)"
            ))),
        }
    }
}

impl MixturePreset {
    pub fn new(name: impl Into<String>, components: Vec<(f64, f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(domain("a mixture needs at least one component"));
        }
        let mut out = Vec::with_capacity(components.len());
        for (weight, mean, variance) in components {
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(domain(format!("component weight must be positive, got {weight}")));
            }
            if !mean.is_finite() || !(variance > 0.0 && variance.is_finite()) {
                return Err(domain(format!("invalid component ({mean}, {variance})")));
            }
            out.push(Component {
                weight,
                mean,
                variance,
            });
        }
        let total: f64 = out.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(domain(format!("component weights sum to {total}, not 1")));
        }
        Ok(Self {
            name: name.into(),
            components: out,
        })
    }

    /// `0.3 phi(x | -1, 2) + 0.7 phi(x | 3, 1.5)`.
    pub fn unimodal() -> Self {
        Self::new("unim", vec![(0.3, -1.0, 2.0), (0.7, 3.0, 1.5)]).unwrap()
    }

    /// `0.4 phi(x | -2, 1) + 0.5 phi(x | 4, 1)`.
    ///
    /// The printed weights sum to 0.9. With `renormalize` they become 4/9 and 5/9.
    /// Without it the weights stay as printed: [`density`](Self::density) then
    /// integrates to 0.9, while sampling still picks components in proportion 4:5.
    pub fn bimodal(renormalize: bool) -> Self {
        let raw = [(0.4, -2.0, 1.0), (0.5, 4.0, 1.0)];
        if !renormalize {
            return Self {
                name: "bim-raw".into(),
                components: raw
                    .iter()
                    .map(|&(weight, mean, variance)| Component {
                        weight,
                        mean,
                        variance,
                    })
                    .collect(),
            };
        }
        let total: f64 = raw.iter().map(|c| c.0).sum();
        Self::new("bim", raw.iter().map(|&(w, m, v)| (w / total, m, v)).collect()).unwrap()
    }

    /// Sum of the component weights; 1 for every preset except the raw bimodal one.
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// `0.1 phi(x|-3,0.2) + 0.3 phi(x|0,0.1) + 0.2 phi(x|2,0.1) + 0.2 phi(x|1,0.1) + 0.2 phi(x|4,0.05)`.
    pub fn multimodal() -> Self {
        Self::new(
            "multi",
            vec![
                (0.1, -3.0, 0.2),
                (0.3, 0.0, 0.1),
                (0.2, 2.0, 0.1),
                (0.2, 1.0, 0.1),
                (0.2, 4.0, 0.05),
            ],
        )
        .unwrap()
    }

    pub fn named(name: PresetName, renormalize_bimodal: bool) -> Self {
        match name {
            PresetName::Unimodal => Self::unimodal(),
            PresetName::Bimodal => Self::bimodal(renormalize_bimodal),
            PresetName::Multimodal => Self::multimodal(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// True signal density.
    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * gauss_pdf(x, c.mean, c.variance))
            .sum()
    }

    /// Mean of the sampling law (weights taken proportionally).
    pub fn mean(&self) -> f64 {
        let t = self.total_weight();
        self.components.iter().map(|c| c.weight * c.mean).sum::<f64>() / t
    }

    /// Variance of the sampling law.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let t = self.total_weight();
        self.components
            .iter()
            .map(|c| c.weight * (c.variance + (c.mean - m).powi(2)))
            .sum::<f64>()
            / t
    }

    fn draw(&self, weights: &[f64], rng: &mut StreamRng) -> f64 {
        let c = &self.components[rng.categorical(weights)];
        c.mean + c.variance.sqrt() * rng.standard_normal()
    }

    /// `n` i.i.d. signal draws: pick a component by weight, then a Gaussian draw.
    pub fn sample_signal(&self, n: usize, rng: &mut StreamRng) -> Vec<f64> {
        let weights: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        (0..n).map(|_| self.draw(&weights, rng)).collect()
    }
}

/// One synthetic observation with its hidden parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub z: f64,
    pub y: f64,
}

/// `n` observations `y = x + z`; each step draws `x` and then `z` from the same generator.
pub fn generate_stream(
    preset: &MixturePreset,
    noise: &NoiseModel,
    n: usize,
    rng: &mut StreamRng,
) -> Vec<Observation> {
    let weights: Vec<f64> = preset.components.iter().map(|c| c.weight).collect();
    (0..n)
        .map(|_| {
            let x = preset.draw(&weights, rng);
            let z = noise_sample(noise, rng);
            Observation { x, z, y: x + z }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn preset_weights_and_moments() {
        let u = MixturePreset::unimodal();
        assert!((u.mean() - 1.8).abs() < 1e-15);
        assert!((u.density(0.0) - 0.077_260_867_197_074_7).abs() < 1e-15);
        let m = MixturePreset::multimodal();
        let total: f64 = m.components().iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bimodal_as_printed_and_renormalized() {
        let raw = MixturePreset::bimodal(false);
        assert!((raw.total_weight() - 0.9).abs() < 1e-15);
        let mass = crate::quadrature::simpson(|x| raw.density(x), -15.0, 20.0, 4001).unwrap();
        assert!((mass - 0.9).abs() < 1e-10);
        let xs = raw.sample_signal(100_000, &mut StreamRng::new(2));
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m - raw.mean()).abs() < 0.05, "{m}");
        let b = MixturePreset::bimodal(true);
        assert!((b.components()[0].weight - 4.0 / 9.0).abs() < 1e-15);
        assert!((b.components()[1].weight - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn standard_normal_preset_sample_mean() {
        let p = MixturePreset::new("std", vec![(1.0, 0.0, 1.0)]).unwrap();
        let xs = p.sample_signal(100_000, &mut StreamRng::new(11));
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 0.02, "{m}");
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn unimodal_sample_mean() {
        let xs = MixturePreset::unimodal().sample_signal(100_000, &mut StreamRng::new(5));
        let (m, _) = mean_var(&xs);
        assert!((m - 1.8).abs() < 0.03, "{m}");
    }

    #[test]
    fn stream_bookkeeping_and_variance() {
        let p = MixturePreset::unimodal();
        let noise = NoiseModel::laplace(0.5).unwrap();
        let s = generate_stream(&p, &noise, 100_000, &mut StreamRng::new(9));
        for o in &s {
            assert_eq!(o.y, o.x + o.z);
            // subtraction recovers z up to the rounding of the sum
            assert!((o.y - o.x - o.z).abs() <= f64::EPSILON * o.y.abs());
        }
        let ys: Vec<f64> = s.iter().map(|o| o.y).collect();
        let (_, v) = mean_var(&ys);
        let want = p.variance() + 0.25;
        assert!((v / want - 1.0).abs() < 0.02, "{v} vs {want}");
    }

    #[test]
    fn tiny_noise_keeps_y_near_x() {
        let noise = NoiseModel::gaussian(1e-9).unwrap();
        let s = generate_stream(&MixturePreset::unimodal(), &noise, 1000, &mut StreamRng::new(1));
        assert!(s.iter().all(|o| (o.y - o.x).abs() <= 6e-9));
    }

    #[test]
    fn streams_are_reproducible() {
        let noise = NoiseModel::gaussian(1.0).unwrap();
        let p = MixturePreset::multimodal();
        let a = generate_stream(&p, &noise, 50, &mut StreamRng::new(3));
        let b = generate_stream(&p, &noise, 50, &mut StreamRng::new(3));
        let c = generate_stream(&p, &noise, 50, &mut StreamRng::new(4));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
