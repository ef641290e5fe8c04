use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Minimum expected count per χ² bin; smaller bins are merged.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestStatistic {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom for χ² statistics, sample size for KS.
    pub df: f64,
}

/// Kolmogorov survival function `Q(x) = 2 sum (-1)^(k-1) exp(-2 k^2 x^2)`.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a continuous `cdf`.
///
/// The p-value uses the asymptotic Kolmogorov law with Stephens' finite-size
/// factor `sqrt(n) + 0.12 + 0.11/sqrt(n)`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestStatistic> {
    if samples.is_empty() {
        return Err(Error::DegenerateInput("no samples".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateInput("non-finite sample".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (k, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((k + 1) as f64 / n - f).max(f - k as f64 / n);
    }
    let sn = n.sqrt();
    let p = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    Ok(TestStatistic { statistic: d, p_value: p, df: n })
}

fn chi2_sf(stat: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("positive degrees of freedom").sf(stat)
}

/// Pearson goodness of fit of `counts` to `probs`. Adjacent bins are merged
/// in order until each expected count reaches [`MIN_EXPECTED`].
pub fn chi2_test(counts: &[u64], probs: &[f64]) -> Result<TestStatistic> {
    if counts.len() != probs.len() || counts.is_empty() {
        return Err(Error::DegenerateInput("counts and probabilities must be non-empty and aligned".into()));
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::DegenerateInput("probabilities must be finite and non-negative".into()));
    }
    let n: u64 = counts.iter().sum();
    let total_p: f64 = probs.iter().sum();
    if n == 0 || total_p <= 0.0 {
        return Err(Error::DegenerateInput("empty sample or zero total probability".into()));
    }
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(probs) {
        o += *c as f64;
        e += n as f64 * p / total_p;
        if e >= MIN_EXPECTED {
            groups.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if o > 0.0 || e > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => groups.push((o, e)),
        }
    }
    if groups.len() < 2 {
        return Err(Error::DegenerateInput("fewer than two bins after merging".into()));
    }
    let stat: f64 = groups.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (groups.len() - 1) as f64;
    Ok(TestStatistic { statistic: stat, p_value: chi2_sf(stat, df), df })
}

/// Pearson test of homogeneity for two samples over the same categories.
/// Categories with an expected count below [`MIN_EXPECTED`] in either row
/// are pooled; a single remaining category gives statistic 0 and p = 1.
pub fn chi2_two_sample(a: &[u64], b: &[u64]) -> Result<TestStatistic> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DegenerateInput("count vectors must be non-empty and aligned".into()));
    }
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput("empty sample".into()));
    }
    let n = na + nb;
    let mut cols: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        let t = x + y;
        if t == 0.0 {
            continue;
        }
        if (na * t / n).min(nb * t / n) < MIN_EXPECTED {
            pooled.0 += x;
            pooled.1 += y;
        } else {
            cols.push((x, y));
        }
    }
    if pooled.0 + pooled.1 > 0.0 {
        let t = pooled.0 + pooled.1;
        if (na * t / n).min(nb * t / n) >= MIN_EXPECTED || cols.is_empty() {
            cols.push(pooled);
        } else {
            let last = cols.last_mut().expect("non-empty");
            last.0 += pooled.0;
            last.1 += pooled.1;
        }
    }
    if cols.len() < 2 {
        return Ok(TestStatistic { statistic: 0.0, p_value: 1.0, df: 0.0 });
    }
    let mut stat = 0.0;
    for (x, y) in &cols {
        let t = x + y;
        let (ea, eb) = (na * t / n, nb * t / n);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let df = (cols.len() - 1) as f64;
    Ok(TestStatistic { statistic: stat, p_value: chi2_sf(stat, df), df })
}

/// `(1/2) sum |p - q|` after normalizing each vector.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::DegenerateInput("distributions must be non-empty and aligned".into()));
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if !(sp > 0.0 && sq > 0.0) || p.iter().chain(q).any(|x| *x < 0.0) {
        return Err(Error::DegenerateInput("distributions must be non-negative with positive mass".into()));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a / sp - b / sq).abs()).sum::<f64>())
}

/// Fisher's method: `-2 sum ln p_i` against χ² with `2k` degrees of freedom.
pub fn fisher_combine(p_values: &[f64]) -> Result<TestStatistic> {
    if p_values.is_empty() {
        return Err(Error::DegenerateInput("no p-values".into()));
    }
    let stat: f64 = p_values.iter().map(|p| -2.0 * p.clamp(f64::MIN_POSITIVE, 1.0).ln()).sum();
    let df = 2.0 * p_values.len() as f64;
    Ok(TestStatistic { statistic: stat, p_value: chi2_sf(stat, df), df })
}

/// Continuous cdf on `[0, len)` that is linear between tabulated knots.
#[derive(Debug, Clone)]
pub struct PiecewiseCdf {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseCdf {
    /// Uniform density within each of `masses.len()` cells of width `a`,
    /// cell `k` covering `[(k - 1/2) a, (k + 1/2) a)` wrapped to `[0, L a)`.
    pub fn lattice(masses: &[f64], a: f64) -> Self {
        let l = masses.len();
        let total: f64 = masses.iter().sum();
        let mut knots = vec![0.0];
        let mut values = vec![0.0];
        let mut acc = 0.0;
        // The first half-cell belongs to site 0, the last to site 0 as well.
        acc += 0.5 * masses[0] / total;
        knots.push(0.5 * a);
        values.push(acc);
        for (k, m) in masses.iter().enumerate().skip(1) {
            acc += m / total;
            knots.push((k as f64 + 0.5) * a);
            values.push(acc);
        }
        knots.push(l as f64 * a);
        values.push(1.0);
        PiecewiseCdf { knots, values }
    }

    /// Trapezoidal cdf of a non-negative `density` on `[0, len)` with
    /// `points` subintervals, normalized to one.
    pub fn from_density(len: f64, points: usize, density: impl Fn(f64) -> f64) -> Self {
        let h = len / points as f64;
        let mut knots = Vec::with_capacity(points + 1);
        let mut values = Vec::with_capacity(points + 1);
        let mut acc = 0.0;
        let mut prev = density(0.0);
        knots.push(0.0);
        values.push(0.0);
        for k in 1..=points {
            let x = k as f64 * h;
            let f = density(x);
            acc += 0.5 * h * (prev + f);
            prev = f;
            knots.push(x);
            values.push(acc);
        }
        for v in &mut values {
            *v /= acc;
        }
        PiecewiseCdf { knots, values }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.knots.partition_point(|&k| k <= x);
        if k == 0 {
            return 0.0;
        }
        if k >= self.knots.len() {
            return 1.0;
        }
        let (x0, x1) = (self.knots[k - 1], self.knots[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}
