//! Known additive-noise laws and the noise-convolved kernel `(f_Z * phi(.|theta))(y)`.
//!
//! For Laplace noise with scale `b` and a Gaussian atom with standard deviation `s`,
//! writing `d = y - mean`,
//!
//! ```text
//! k~(y) = 1/(4b) * [ exp(s^2/(2b^2) - d/b) erfc(a1) + exp(s^2/(2b^2) + d/b) erfc(a2) ]
//! a1 = (s^2/b - d) / (s sqrt 2),   a2 = (s^2/b + d) / (s sqrt 2)
//! ```
//!
//! Since `a1^2 = s^2/(2b^2) - d/b + d^2/(2s^2)`, each term with a nonnegative argument
//! equals `exp(-d^2/(2s^2)) * erfcx(a)`, which never overflows. A negative argument
//! implies the exponent is below `-s^2/(2b^2)`, so the raw product is used there.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{contract, domain, finite, Error, Result};
use crate::model::ThetaAtom;
use crate::quadrature::simpson;
use crate::rng::StreamRng;
use crate::special::{erfcx, gauss_pdf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseFamily {
    Laplace,
    Gaussian,
}

impl NoiseFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "laplace" => Ok(NoiseFamily::Laplace),
            "gaussian" | "normal" => Ok(NoiseFamily::Gaussian),
            other => Err(domain(format!("unknown noise family {other:?} (expected laplace|gaussian)"))),
        }
    }
}

/// Zero-mean noise law parameterized by its standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    family: NoiseFamily,
    std_dev: f64,
}

impl NoiseModel {
    pub fn new(family: NoiseFamily, std_dev: f64) -> Result<Self> {
        if !(std_dev > 0.0) || !std_dev.is_finite() {
            return Err(domain(format!("noise std_dev must be positive and finite, got {std_dev}")));
        }
        Ok(Self { family, std_dev })
    }

    pub fn laplace(std_dev: f64) -> Result<Self> {
        Self::new(NoiseFamily::Laplace, std_dev)
    }

    pub fn gaussian(std_dev: f64) -> Result<Self> {
        Self::new(NoiseFamily::Gaussian, std_dev)
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn std_dev(&self) -> f64 {
        self.std_dev
    }

    pub fn variance(&self) -> f64 {
        self.std_dev * self.std_dev
    }

    /// Laplace scale `b = std_dev / sqrt(2)`.
    pub fn laplace_scale(&self) -> f64 {
        self.std_dev / SQRT_2
    }

    #[inline]
    fn density(&self, z: f64) -> f64 {
        match self.family {
            NoiseFamily::Laplace => {
                let b = self.laplace_scale();
                (-z.abs() / b).exp() / (2.0 * b)
            }
            NoiseFamily::Gaussian => gauss_pdf(z, 0.0, self.variance()),
        }
    }
}

/// Noise density `f_Z(z)`.
pub fn noise_pdf(noise: &NoiseModel, z: f64) -> Result<f64> {
    finite(z, "z")?;
    Ok(noise.density(z))
}

/// One draw from `f_Z`: inverse CDF for Laplace, inverse normal CDF for Gaussian.
pub fn noise_sample(noise: &NoiseModel, rng: &mut StreamRng) -> f64 {
    match noise.family {
        NoiseFamily::Laplace => {
            let b = noise.laplace_scale();
            let u = rng.uniform();
            if u < 0.5 {
                b * (2.0 * u).ln()
            } else {
                -b * (2.0 * (1.0 - u)).ln()
            }
        }
        NoiseFamily::Gaussian => noise.std_dev * rng.standard_normal(),
    }
}

/// `erfc` stays normal below this argument.
const DIRECT_ERFC_MAX: f64 = 26.0;
/// `exp` stays finite below this argument.
const DIRECT_EXP_MAX: f64 = 700.0;

/// Per-atom constants of the convolved kernel, so the update loop pays two `exp` and
/// two `erfc` calls per atom away from the tails.
#[derive(Clone, Copy, Debug)]
pub(crate) enum AtomKernel {
    Gaussian {
        mean: f64,
        neg_half_inv_var: f64,
        norm: f64,
    },
    Laplace {
        mean: f64,
        neg_half_inv_var: f64,
        inv_s_sqrt2: f64,
        a0: f64,
        shift: f64,
        inv_b: f64,
        norm: f64,
    },
}

impl AtomKernel {
    /// Noise-free signal kernel `phi(. | theta)`.
    pub(crate) fn signal(theta: &ThetaAtom) -> Self {
        let v = theta.variance();
        AtomKernel::Gaussian {
            mean: theta.mean(),
            neg_half_inv_var: -0.5 / v,
            norm: 1.0 / (2.0 * std::f64::consts::PI * v).sqrt(),
        }
    }

    pub(crate) fn new(noise: &NoiseModel, theta: &ThetaAtom) -> Self {
        let v = theta.variance();
        match noise.family {
            NoiseFamily::Gaussian => {
                let total = v + noise.variance();
                AtomKernel::Gaussian {
                    mean: theta.mean(),
                    neg_half_inv_var: -0.5 / total,
                    norm: 1.0 / (2.0 * std::f64::consts::PI * total).sqrt(),
                }
            }
            NoiseFamily::Laplace => {
                let s = v.sqrt();
                let b = noise.laplace_scale();
                AtomKernel::Laplace {
                    mean: theta.mean(),
                    neg_half_inv_var: -0.5 / v,
                    inv_s_sqrt2: 1.0 / (s * SQRT_2),
                    a0: s / (b * SQRT_2),
                    shift: v / (2.0 * b * b),
                    inv_b: 1.0 / b,
                    norm: 0.25 / b,
                }
            }
        }
    }

    #[inline]
    pub(crate) fn eval(&self, y: f64) -> f64 {
        match *self {
            AtomKernel::Gaussian {
                mean,
                neg_half_inv_var,
                norm,
            } => {
                let d = y - mean;
                norm * (neg_half_inv_var * d * d).exp()
            }
            AtomKernel::Laplace {
                mean,
                neg_half_inv_var,
                inv_s_sqrt2,
                a0,
                shift,
                inv_b,
                norm,
            } => {
                let d = y - mean;
                let a1 = a0 - d * inv_s_sqrt2;
                let a2 = a0 + d * inv_s_sqrt2;
                let e1 = shift - d * inv_b;
                let e2 = shift + d * inv_b;
                // exp(e) * erfc(a) == g * erfcx(a); the scaled form is only needed where
                // erfc underflows or exp overflows.
                let direct = |a: f64, e: f64| a < DIRECT_ERFC_MAX && e < DIRECT_EXP_MAX;
                let (t1, t2) = if direct(a1, e1) && direct(a2, e2) {
                    (e1.exp() * libm::erfc(a1), e2.exp() * libm::erfc(a2))
                } else {
                    let g = (neg_half_inv_var * d * d).exp();
                    let t = |a: f64, e: f64| {
                        if a >= 0.0 {
                            g * erfcx(a)
                        } else {
                            e.exp() * libm::erfc(a)
                        }
                    };
                    (t(a1, e1), t(a2, e2))
                };
                norm * (t1 + t2)
            }
        }
    }
}

/// Convolved kernel `k~(y | theta) = (f_Z * phi(. | theta))(y)` in closed form.
pub fn convolved_kernel_pdf(noise: &NoiseModel, theta: &ThetaAtom, y: f64) -> Result<f64> {
    finite(y, "y")?;
    Ok(AtomKernel::new(noise, theta).eval(y))
}

/// Reference value of `int phi(y - z | theta) f_Z(z) dz` by composite Simpson over
/// `z in [-12 sd, 12 sd]`. Slow; used to certify [`convolved_kernel_pdf`].
pub fn numeric_convolution_oracle(
    noise: &NoiseModel,
    theta: &ThetaAtom,
    y: f64,
    nodes: usize,
) -> Result<f64> {
    finite(y, "y")?;
    if nodes < 201 {
        return Err(contract(format!("oracle needs at least 201 nodes, got {nodes}")));
    }
    let half = 12.0 * noise.std_dev;
    simpson(|z| theta.density(y - z) * noise.density(z), -half, half, nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(m: f64, v: f64) -> ThetaAtom {
        ThetaAtom::new(m, v).unwrap()
    }

    #[test]
    fn noise_density_values() {
        let l = NoiseModel::laplace(0.5).unwrap();
        assert!((noise_pdf(&l, 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let g = NoiseModel::gaussian(1.0).unwrap();
        assert!((noise_pdf(&g, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!(noise_pdf(&g, f64::NAN).is_err());
        assert!(NoiseModel::laplace(0.0).is_err());
    }

    #[test]
    fn laplace_normalizes() {
        let l = NoiseModel::laplace(0.25).unwrap();
        let n = 200_001;
        let h = 10.0 / (n - 1) as f64;
        let f: Vec<f64> = (0..n).map(|i| noise_pdf(&l, -5.0 + i as f64 * h).unwrap()).collect();
        let trap = h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]));
        assert!((trap - 1.0).abs() < 1e-6, "{trap}");
    }

    #[test]
    fn gaussian_convolution_is_variance_addition() {
        let g = NoiseModel::gaussian(1.0).unwrap();
        let v = convolved_kernel_pdf(&g, &atom(0.0, 1.0), 0.0).unwrap();
        assert!((v - 0.282_094_791_773_878_14).abs() < 1e-15);
        let o = numeric_convolution_oracle(&g, &atom(0.0, 1.0), 0.0, 2001).unwrap();
        assert!((o - 0.282_094_791_773_878_14).abs() < 1e-8);
    }

    #[test]
    fn laplace_closed_form_against_high_precision() {
        // mpmath quad of the convolution integral at 40 digits
        let cases = [
            (0.5, atom(0.0, 1.0), 0.0, 0.361_184_029_209_766_2),
            (2.0, atom(3.0, 1.5), 3.0, 0.198_810_000_373_124_76),
            (0.25, atom(0.0, 1.0), 0.0, 0.387_492_982_022_239_9),
        ];
        for (sd, theta, y, want) in cases {
            let l = NoiseModel::laplace(sd).unwrap();
            let got = convolved_kernel_pdf(&l, &theta, y).unwrap();
            assert!((got - want).abs() < 1e-14, "sd={sd}: {got} vs {want}");
            let oracle = numeric_convolution_oracle(&l, &theta, y, 4001).unwrap();
            assert!((oracle - want).abs() < 1e-8, "oracle sd={sd}: {oracle}");
        }
    }

    #[test]
    fn oracle_is_even_in_y() {
        for noise in [NoiseModel::laplace(0.7).unwrap(), NoiseModel::gaussian(1.3).unwrap()] {
            for y in [0.3, 1.7, 4.0] {
                let a = numeric_convolution_oracle(&noise, &atom(0.0, 1.0), y, 2001).unwrap();
                let b = numeric_convolution_oracle(&noise, &atom(0.0, 1.0), -y, 2001).unwrap();
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(numeric_convolution_oracle(&NoiseModel::laplace(1.0).unwrap(), &atom(0.0, 1.0), 0.0, 101).is_err());
    }

    #[test]
    fn convolved_kernel_far_tails_stay_finite_and_positive() {
        let l = NoiseModel::laplace(4.0).unwrap();
        let theta = atom(0.0, 0.01);
        for y in [-300.0, -60.0, -5.0, 0.0, 5.0, 60.0, 300.0] {
            let v = convolved_kernel_pdf(&l, &theta, y).unwrap();
            assert!(v.is_finite() && v > 0.0, "y={y}: {v}");
        }
        // far tail follows the Laplace tail exp(s^2/(2b^2) - |d|/b) / (2b)
        let b = l.laplace_scale();
        let y = 60.0;
        let want = (0.01 / (2.0 * b * b) - y / b).exp() / (2.0 * b);
        let got = convolved_kernel_pdf(&l, &theta, y).unwrap();
        assert!((got / want - 1.0).abs() < 1e-10);
    }

    #[test]
    fn convolved_kernel_normalizes() {
        for noise in [NoiseModel::laplace(0.5).unwrap(), NoiseModel::gaussian(2.0).unwrap()] {
            let theta = atom(1.0, 0.75);
            let sd = (0.75 + noise.variance()).sqrt();
            let total = simpson(
                |y| convolved_kernel_pdf(&noise, &theta, y).unwrap(),
                1.0 - 10.0 * sd,
                1.0 + 10.0 * sd,
                4001,
            )
            .unwrap();
            assert!((total - 1.0).abs() < 1e-6, "{total}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let l = NoiseModel::laplace(1.0).unwrap();
        let a = noise_sample(&l, &mut StreamRng::new(42));
        let b = noise_sample(&l, &mut StreamRng::new(42));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn sample_moments() {
        let l = NoiseModel::laplace(0.5).unwrap();
        let mut rng = StreamRng::new(11);
        let xs: Vec<f64> = (0..100_000).map(|_| noise_sample(&l, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var - 0.25).abs() < 0.01, "{var}");

        let g = NoiseModel::gaussian(2.0).unwrap();
        let mut rng = StreamRng::new(12);
        let mean = (0..100_000).map(|_| noise_sample(&g, &mut rng)).sum::<f64>() / 100_000.0;
        assert!(mean.abs() < 0.03, "{mean}");
    }
}
