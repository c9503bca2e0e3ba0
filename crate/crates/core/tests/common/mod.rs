#![allow(dead_code)]

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Anderson–Darling A² against a fully specified CDF.
pub fn anderson_darling(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len();
    let mut s = 0.0;
    for i in 0..n {
        let lo = cdf(sample[i]).clamp(1e-300, 1.0 - 1e-16);
        let hi = cdf(sample[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        s += (2 * i + 1) as f64 * (lo.ln() + (1.0 - hi).ln());
    }
    -(n as f64) - s / n as f64
}

/// Asymptotic upper-tail p-value of A² (Marsaglia and Marsaglia, 2004).
pub fn anderson_darling_p(a2: f64) -> f64 {
    let cdf = if a2 < 2.0 {
        (-1.2337141 / a2).exp() / a2.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * a2) * a2) * a2) * a2) * a2)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * a2) * a2) * a2) * a2) * a2).exp()).exp()
    };
    1.0 - cdf
}
