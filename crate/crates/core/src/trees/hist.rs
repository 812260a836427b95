//! Gradient histograms and the second-order split gain.

use std::ops::{Add, AddAssign, Sub};

use super::binning::{BinnedTable, MISSING_CODE};

/// Sum of gradients and hessians over a set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradStats {
    pub grad: f64,
    pub hess: f64,
}

impl GradStats {
    pub fn new(grad: f64, hess: f64) -> Self {
        Self { grad, hess }
    }

    pub fn is_empty(&self) -> bool {
        self.hess <= 0.0
    }

    #[inline]
    fn score(self, lambda: f64) -> f64 {
        self.grad * self.grad / (self.hess + lambda)
    }
}

impl Add for GradStats {
    type Output = GradStats;
    #[inline]
    fn add(self, o: GradStats) -> GradStats {
        GradStats::new(self.grad + o.grad, self.hess + o.hess)
    }
}

impl AddAssign for GradStats {
    #[inline]
    fn add_assign(&mut self, o: GradStats) {
        self.grad += o.grad;
        self.hess += o.hess;
    }
}

impl Sub for GradStats {
    type Output = GradStats;
    #[inline]
    fn sub(self, o: GradStats) -> GradStats {
        GradStats::new(self.grad - o.grad, self.hess - o.hess)
    }
}

/// `½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)]`
#[inline]
pub fn split_gain(left: GradStats, right: GradStats, lambda: f64) -> f64 {
    0.5 * (left.score(lambda) + right.score(lambda) - (left + right).score(lambda))
}

/// Optimal leaf weight `−G/(H+λ)`.
#[inline]
pub fn leaf_value(stats: GradStats, lambda: f64) -> f64 {
    -stats.grad / (stats.hess + lambda)
}

/// Per-feature gradient histograms. Feature `f` owns
/// `feature_bins(f) + 1` slots; the last one collects missing cells.
#[derive(Debug, Clone)]
pub struct Histogram {
    slots: Vec<GradStats>,
    offsets: Vec<usize>,
}

impl Histogram {
    pub fn empty(binned: &BinnedTable) -> Self {
        let mut offsets = Vec::with_capacity(binned.n_cols() + 1);
        let mut total = 0;
        for f in 0..binned.n_cols() {
            offsets.push(total);
            total += binned.feature_bins(f) + 1;
        }
        offsets.push(total);
        Self {
            slots: vec![GradStats::default(); total],
            offsets,
        }
    }

    /// Accumulate `rows` into the histograms of `features`, visiting rows
    /// in the given order.
    pub fn build(
        binned: &BinnedTable,
        rows: &[u32],
        features: &[usize],
        grad: &[f64],
        hess: &[f64],
    ) -> Self {
        let mut h = Self::empty(binned);
        let missing_slot: Vec<usize> = (0..binned.n_cols())
            .map(|f| h.offsets[f + 1] - h.offsets[f] - 1)
            .collect();
        for &r in rows {
            let r = r as usize;
            let s = GradStats::new(grad[r], hess[r]);
            let codes = binned.row_codes(r);
            for &f in features {
                let code = codes[f];
                let slot = if code == MISSING_CODE {
                    missing_slot[f]
                } else {
                    code as usize
                };
                h.slots[h.offsets[f] + slot] += s;
            }
        }
        h
    }

    /// Non-missing bins of a feature.
    pub fn bins(&self, feature: usize) -> &[GradStats] {
        &self.slots[self.offsets[feature]..self.offsets[feature + 1] - 1]
    }

    pub fn missing(&self, feature: usize) -> GradStats {
        self.slots[self.offsets[feature + 1] - 1]
    }

    /// Left/right sums for the split "code <= bin goes left", with missing
    /// rows routed per `missing_left`.
    pub fn split_stats(&self, feature: usize, bin: usize, missing_left: bool) -> (GradStats, GradStats) {
        let bins = self.bins(feature);
        let mut left = GradStats::default();
        let mut total = GradStats::default();
        for (b, s) in bins.iter().enumerate() {
            if b <= bin {
                left += *s;
            }
            total += *s;
        }
        let mut right = total - left;
        let m = self.missing(feature);
        if missing_left {
            left += m;
        } else {
            right += m;
        }
        (left, right)
    }

    /// `self − other`, slot by slot.
    pub fn subtract(&self, other: &Histogram) -> Histogram {
        Histogram {
            slots: self
                .slots
                .iter()
                .zip(&other.slots)
                .map(|(a, b)| *a - *b)
                .collect(),
            offsets: self.offsets.clone(),
        }
    }
}
