//! Summary statistics and Kolmogorov–Smirnov distances used by the
//! convergence reports.

/// Linear-interpolation quantile (type 7) of unsorted data; NaN-free input.
pub fn quantile(data: &[f64], q: f64) -> f64 {
    assert!(!data.is_empty(), "quantile of empty sample");
    let mut v = data.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    if w == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

pub fn median(data: &[f64]) -> f64 {
    quantile(data, 0.5)
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(data: &[f64]) -> f64 {
    let m = mean(data);
    let n = data.len();
    if n < 2 {
        return 0.0;
    }
    (data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn std_error(data: &[f64]) -> f64 {
    std_dev(data) / (data.len() as f64).sqrt()
}

/// Two-sample KS statistic. Infinite values (censored observations) are
/// allowed and compare equal to each other.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> f64 {
    let mut x = data.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (k, &v) in x.iter().enumerate() {
        let c = cdf(v);
        d = d.max((c - k as f64 / n).abs()).max(((k + 1) as f64 / n - c).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let d = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&d, 0.0), 1.0);
        assert_eq!(quantile(&d, 1.0), 4.0);
        assert_eq!(median(&d), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn moments() {
        let d = [1.0, 2.0, 3.0];
        assert_eq!(mean(&d), 2.0);
        assert_eq!(std_dev(&d), 1.0);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [0.1, 0.2, 0.3];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&a, &[1.0, 2.0]), 1.0);
        assert_eq!(ks_two_sample(&[0.5, f64::INFINITY], &[0.5, f64::INFINITY]), 0.0);
        assert_eq!(ks_two_sample(&[0.5, f64::INFINITY], &[0.5, 0.6]), 0.5);
    }

    #[test]
    fn ks_one_sample_uniform() {
        let d: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
        let ks = ks_one_sample(&d, |x| x.clamp(0.0, 1.0));
        assert!((ks - 0.005).abs() < 1e-12);
    }
}
