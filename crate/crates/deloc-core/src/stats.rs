//! Small statistical helpers shared by the samplers and the scaling
//! studies: moments, batch-means error bars for correlated chains, and
//! least-squares fits.

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator); 0 when n < 2.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the mean for independent samples.
pub fn mean_stderr(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::INFINITY;
    }
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the overall mean from batch means of a correlated
/// sequence: batches long enough to decorrelate make their means nearly
/// independent, so the usual formula applies to them.
pub fn stderr_from_batch_means(batch_means: &[f64]) -> f64 {
    mean_stderr(batch_means)
}

/// First-order (delta method) propagation of an error bar through `sqrt`.
/// Returns `(sqrt(m), se / (2 sqrt(m)))`; a nonpositive mean yields an
/// infinite error bar since the linearization breaks down there.
pub fn sqrt_with_stderr(m: f64, se: f64) -> (f64, f64) {
    if m <= 0.0 {
        return (0.0, f64::INFINITY);
    }
    let root = m.sqrt();
    (root, se / (2.0 * root))
}

/// Weighted least-squares line through the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginFit {
    pub slope: f64,
    /// Standard error of the slope under exact weights `w = 1/se^2`.
    pub stderr: f64,
}

/// Fits `y = s x` minimizing `sum w_i (y_i - s x_i)^2`. Weights must be
/// positive; returns `None` on mismatched lengths, empty input, or when
/// all `x` vanish.
pub fn wls_through_origin(xs: &[f64], ys: &[f64], weights: &[f64]) -> Option<OriginFit> {
    if xs.is_empty() || xs.len() != ys.len() || xs.len() != weights.len() {
        return None;
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return None;
    }
    let sxx: f64 = xs.iter().zip(weights).map(|(x, w)| w * x * x).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .zip(weights)
        .map(|((x, y), w)| w * x * y)
        .sum();
    Some(OriginFit {
        slope: sxy / sxx,
        stderr: (1.0 / sxx).sqrt(),
    })
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual-based standard error of the slope; 0 when n <= 2.
    pub slope_stderr: f64,
}

pub fn ols_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let xbar = mean(xs);
    let ybar = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_stderr = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some(LineFit {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Streaming accumulator for batch means: feed values one at a time, read
/// off the per-batch means at the end. The batch count is fixed up front;
/// values beyond `n_batches * batch_len` spill into the last batch.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    batch_len: usize,
    sums: Vec<f64>,
    counts: Vec<usize>,
    seen: usize,
}

impl BatchAccumulator {
    /// `total` is the expected number of pushes; `n_batches` of roughly
    /// `total / n_batches` values each.
    pub fn new(total: usize, n_batches: usize) -> Self {
        let n_batches = n_batches.max(1).min(total.max(1));
        Self {
            batch_len: (total / n_batches).max(1),
            sums: vec![0.0; n_batches],
            counts: vec![0; n_batches],
            seen: 0,
        }
    }

    pub fn push(&mut self, v: f64) {
        let idx = (self.seen / self.batch_len).min(self.sums.len() - 1);
        self.sums[idx] += v;
        self.counts[idx] += 1;
        self.seen += 1;
    }

    pub fn batch_means(&self) -> Vec<f64> {
        self.sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .collect()
    }

    /// Overall mean of everything pushed.
    pub fn overall_mean(&self) -> f64 {
        if self.seen == 0 {
            return 0.0;
        }
        self.sums.iter().sum::<f64>() / self.seen as f64
    }

    /// Batch-means standard error of the overall mean.
    pub fn stderr(&self) -> f64 {
        stderr_from_batch_means(&self.batch_means())
    }
}
