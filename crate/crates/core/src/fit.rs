//! Ordinary least squares for exponent fits in log-log coordinates.

use alloc::vec::Vec;

/// Below this coefficient of determination an exponent is not reported.
pub const RELIABLE_R2: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

impl LinearFit {
    pub fn is_reliable(&self) -> bool {
        self.r2 >= RELIABLE_R2
    }
}

/// Fits `y = slope * x + intercept`. Needs two distinct abscissae.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: n,
    })
}

/// Fits `log y = slope * log x + c` over the pairs with both entries positive
/// and finite.
pub fn loglog(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (libm::log(*a), libm::log(*b)))
        .unzip();
    least_squares(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let x = [1e-4, 1e-3, 1e-2, 1e-1];
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t * t).collect();
        let f = loglog(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!((libm::exp(f.intercept) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(least_squares(&[1.0], &[2.0]).is_none());
        assert!(least_squares(&[1.0, 1.0], &[2.0, 3.0]).is_none());
        assert!(loglog(&[0.0, 1.0], &[1.0, 1.0]).is_none());
        let f = least_squares(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(f.slope, 0.0);
    }

    #[test]
    fn noisy_fit_has_lower_r2() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 3.0, 2.0, 5.0, 1.0];
        let f = least_squares(&x, &y).unwrap();
        assert!(!f.is_reliable());
    }
}
