//! Small statistical tests used by the Monte Carlo checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    fn from_statistic(statistic: f64, dof: usize) -> Self {
        let p_value = if dof == 0 {
            1.0
        } else {
            ChiSquared::new(dof as f64).map_or(f64::NAN, |d| d.sf(statistic))
        };
        ChiSquareTest {
            statistic,
            dof,
            p_value,
        }
    }

    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Group the sorted distinct values so every group has at least `min_count`
/// pooled observations; returns the lower edge of each group.
fn pooled_bins(values: &[u64], min_count: usize) -> Vec<u64> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut edges = Vec::new();
    let mut in_bin = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        if in_bin == 0 {
            edges.push(v);
        }
        while i < sorted.len() && sorted[i] == v {
            in_bin += 1;
            i += 1;
        }
        if in_bin >= min_count {
            in_bin = 0;
        }
    }
    // a short last bin is merged into its neighbour
    if in_bin > 0 && edges.len() > 1 {
        edges.pop();
    }
    edges
}

fn bin_of(edges: &[u64], v: u64) -> usize {
    edges.partition_point(|&e| e <= v).saturating_sub(1)
}

/// Two-sample χ² homogeneity test on integer-valued samples.
pub fn chi2_two_sample(a: &[u64], b: &[u64]) -> ChiSquareTest {
    let pooled: Vec<u64> = a.iter().chain(b).copied().collect();
    let edges = pooled_bins(&pooled, 10);
    let k = edges.len();
    let mut ca = vec![0.0; k];
    let mut cb = vec![0.0; k];
    for &v in a {
        ca[bin_of(&edges, v)] += 1.0;
    }
    for &v in b {
        cb[bin_of(&edges, v)] += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let mut stat = 0.0;
    for i in 0..k {
        let col = ca[i] + cb[i];
        for (obs, rows) in [(ca[i], na), (cb[i], nb)] {
            let exp = rows * col / n;
            if exp > 0.0 {
                stat += (obs - exp) * (obs - exp) / exp;
            }
        }
    }
    ChiSquareTest::from_statistic(stat, k.saturating_sub(1))
}

/// χ² test of independence between two integer-valued coordinates.
pub fn chi2_independence(pairs: &[(u64, u64)]) -> ChiSquareTest {
    let n = pairs.len();
    // margins of at least √(5n) keep every expected cell count ≥ 5
    let min_margin = ((5.0 * n as f64).sqrt().ceil() as usize).max(5);
    let xs: Vec<u64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<u64> = pairs.iter().map(|p| p.1).collect();
    let ex = pooled_bins(&xs, min_margin);
    let ey = pooled_bins(&ys, min_margin);
    let mut table = vec![vec![0.0; ey.len()]; ex.len()];
    for &(x, y) in pairs {
        table[bin_of(&ex, x)][bin_of(&ey, y)] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..ey.len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let nf = n as f64;
    let mut stat = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &obs) in r.iter().enumerate() {
            let exp = rows[i] * cols[j] / nf;
            if exp > 0.0 {
                stat += (obs - exp) * (obs - exp) / exp;
            }
        }
    }
    ChiSquareTest::from_statistic(stat, (ex.len().saturating_sub(1)) * (ey.len().saturating_sub(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub n: usize,
    /// Asymptotic 99% critical value `1.628/√n`.
    pub critical_99: f64,
}

impl KsTest {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical_99
    }
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsTest {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsTest {
        statistic: d,
        n: s.len(),
        critical_99: 1.628 / n.sqrt(),
    }
}

/// Standard error of a proportion.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean.
    pub sem: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            variance: f64::NAN,
            sem: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Summary {
        n,
        mean,
        variance,
        sem: (variance / n as f64).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    #[test]
    fn same_law_passes_different_law_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Poisson::new(4.0).unwrap();
        let q = Poisson::new(4.6).unwrap();
        let a: Vec<u64> = (0..5000).map(|_| p.sample(&mut rng) as u64).collect();
        let b: Vec<u64> = (0..5000).map(|_| p.sample(&mut rng) as u64).collect();
        let c: Vec<u64> = (0..5000).map(|_| q.sample(&mut rng) as u64).collect();
        assert!(chi2_two_sample(&a, &b).passes(0.01));
        assert!(!chi2_two_sample(&a, &c).passes(0.01));
    }

    #[test]
    fn independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Poisson::new(3.0).unwrap();
        let ind: Vec<(u64, u64)> = (0..5000)
            .map(|_| (p.sample(&mut rng) as u64, p.sample(&mut rng) as u64))
            .collect();
        assert!(chi2_independence(&ind).passes(0.01));
        let dep: Vec<(u64, u64)> = ind.iter().map(|&(x, y)| (x, x + y / 2)).collect();
        assert!(!chi2_independence(&dep).passes(0.01));
    }

    #[test]
    fn ks() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let t = ks_one_sample(&xs, |x| x);
        assert!(t.statistic <= 5e-4 + 1e-12);
        assert!(t.passes());
        assert!(!ks_one_sample(&xs, |x| x * x).passes());
    }

    #[test]
    fn summary() {
        let s = summarize(&[1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.variance), (2.0, 1.0));
        assert!((binomial_sigma(0.5, 100) - 0.05).abs() < 1e-15);
    }
}
