//! Standard normal distribution function.

/// Standard normal CDF `Φ(x)`.
///
/// Evaluated through the complementary error function so that both tails keep
/// full relative precision: `Φ(x) = erfc(-x/√2)/2`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Gauss-Legendre (5 nodes) of the density on `[a, b]`.
    fn density_integral(a: f64, b: f64, panels: usize) -> f64 {
        const NODES: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let mid = a + (k as f64 + 0.5) * h;
                NODES
                    .iter()
                    .zip(WEIGHTS.iter())
                    .map(|(x, w)| w * std_normal_pdf(mid + 0.5 * h * x))
                    .sum::<f64>()
                    * 0.5
                    * h
            })
            .sum()
    }

    #[test]
    fn center_and_quantile() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(-1.959_963_985) - 0.025).abs() < 1e-8);
    }

    #[test]
    fn matches_quadrature_in_the_tail() {
        // upper tail mass integrated on [3.7, 40]; beyond 40 the mass is below 1e-300
        let tail = density_integral(3.7, 40.0, 4000);
        assert!((std_normal_cdf(3.7) - (1.0 - tail)).abs() < 1e-10);
        assert!((std_normal_cdf(-3.7) - tail).abs() < 1e-10);
        let body = density_integral(-40.0, 0.3, 8000);
        assert!((std_normal_cdf(0.3) - body).abs() < 1e-10);
    }

    #[test]
    fn symmetric_and_monotone() {
        let mut prev = 0.0;
        for k in -800..=800 {
            let x = k as f64 / 100.0;
            let v = std_normal_cdf(x);
            assert!(v >= prev);
            prev = v;
            assert!((v + std_normal_cdf(-x) - 1.0).abs() < 1e-12);
        }
    }
}
