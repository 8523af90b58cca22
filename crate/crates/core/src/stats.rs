//! Small statistics helpers shared by the measurement code.

use serde::{Deserialize, Serialize};

/// A Monte Carlo proportion with its standard error and 95% Wilson interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub est: f64,
    pub std_err: f64,
    pub ci: [f64; 2],
    pub trials: u64,
}

impl Estimate {
    pub fn binomial(hits: u64, trials: u64) -> Self {
        assert!(trials > 0);
        let n = trials as f64;
        let p = hits as f64 / n;
        let z = 1.959_963_984_540_054;
        let denom = 1.0 + z * z / n;
        let centre = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        Estimate {
            est: p,
            std_err: (p * (1.0 - p) / n).sqrt(),
            ci: [
                if hits == 0 { 0.0 } else { (centre - half).max(0.0) },
                if hits == trials { 1.0 } else { (centre + half).min(1.0) },
            ],
            trials,
        }
    }

    /// A value known exactly.
    pub fn exact(v: f64) -> Self {
        Estimate { est: v, std_err: 0.0, ci: [v, v], trials: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len();
    if n == 0 {
        return MeanStd { mean: f64::NAN, std: f64::NAN, count: 0 };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    MeanStd { mean, std: var.sqrt(), count: n }
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `ceil` that snaps values within 1e-9 of an integer, so `100^0.6` style
/// inputs that land a hair above an integer do not round up by one.
pub fn ceil_snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x.ceil()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson() {
        let e = Estimate::binomial(0, 100);
        assert_eq!(e.est, 0.0);
        assert!(e.ci[0] < 1e-12 && e.ci[1] > 0.03 && e.ci[1] < 0.04);
        let e = Estimate::binomial(50, 100);
        assert!((e.std_err - 0.05).abs() < 1e-12);
        assert!(e.ci[0] < 0.5 && e.ci[1] > 0.5);
    }

    #[test]
    fn slope_of_line() {
        assert!((slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn snapping() {
        assert_eq!(ceil_snap(16.000000000001), 16.0);
        assert_eq!(ceil_snap(15.85), 16.0);
        assert_eq!(ceil_snap(1000f64.powf(0.5 + 0.5)), 1000.0);
    }
}
