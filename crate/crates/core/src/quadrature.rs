//! Fixed-node quadrature rules.

use crate::error::{contract, Result};

/// Uniform nodes and composite Simpson weights on `[low, high]`.
///
/// `nodes` must be odd and at least 3.
pub fn simpson_rule(low: f64, high: f64, nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if nodes < 3 || nodes % 2 == 0 {
        return Err(contract(format!(
            "composite Simpson needs an odd node count >= 3, got {nodes}"
        )));
    }
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(contract(format!("invalid integration window [{low}, {high}]")));
    }
    let panels = nodes - 1;
    let h = (high - low) / panels as f64;
    let xs = (0..nodes)
        .map(|i| {
            if i == panels {
                high
            } else {
                low + i as f64 * h
            }
        })
        .collect();
    let ws = (0..nodes)
        .map(|i| {
            let c = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    Ok((xs, ws))
}

/// Composite Simpson integral of `f` over `[low, high]` with `nodes` points.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, low: f64, high: f64, nodes: usize) -> Result<f64> {
    let (xs, ws) = simpson_rule(low, high, nodes)?;
    Ok(xs.iter().zip(&ws).map(|(&x, &w)| w * f(x)).sum())
}

/// 4-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Nodes and weights on `(0, upper]` from panels whose widths shrink geometrically
/// toward 0, each integrated with 4-point Gauss-Legendre. The innermost panel ends
/// at `upper * inner_ratio`; the sliver `(0, upper * inner_ratio)` is left to the caller.
///
/// `nodes` is rounded down to a multiple of 4 (at least 4).
pub fn graded_rule(upper: f64, nodes: usize, inner_ratio: f64) -> (Vec<f64>, Vec<f64>) {
    let panels = (nodes / 4).max(1);
    let q = inner_ratio.powf(1.0 / panels as f64);
    let mut xs = Vec::with_capacity(panels * 4);
    let mut ws = Vec::with_capacity(panels * 4);
    let mut hi = upper;
    for _ in 0..panels {
        let lo = hi * q;
        let mid = 0.5 * (hi + lo);
        let half = 0.5 * (hi - lo);
        for &(t, w) in &GL4 {
            xs.push(mid + half * t);
            ws.push(half * w);
        }
        hi = lo;
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 5).unwrap();
        // antiderivative x^4/4 - x^2 + x
        let want = (4.0 - 4.0 + 2.0) - (0.25 - 1.0 - 1.0);
        assert!((v - want).abs() < 1e-13);
    }

    #[test]
    fn simpson_rejects_even_and_tiny_counts() {
        assert!(simpson_rule(0.0, 1.0, 4).is_err());
        assert!(simpson_rule(0.0, 1.0, 1).is_err());
        assert!(simpson_rule(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn graded_rule_integrates_log_singularity() {
        // integrand smooth at the top end, log-singular at 0; sliver (0, 1e-14) holds ~6e-14
        let (xs, ws) = graded_rule(1.0, 512, 1e-14);
        let v: f64 = xs.iter().zip(&ws).map(|(z, w)| w * (1.0 - z.ln()).sqrt()).sum();
        assert!((v - 1.378_936_078_070_656).abs() < 1e-10, "{v}");
    }
}
