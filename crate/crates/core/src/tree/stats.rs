use serde::{Deserialize, Serialize};

use crate::data::CausalDataset;

/// Running count, sum and sum of squares of values shifted by a constant.
///
/// The shift keeps the variance computation well conditioned; it must be the
/// same for every accumulator that is added to or subtracted from another.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub n: usize,
    pub sum: f64,
    pub sumsq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }

    #[inline]
    pub fn plus(self, o: Moments) -> Moments {
        Moments { n: self.n + o.n, sum: self.sum + o.sum, sumsq: self.sumsq + o.sumsq }
    }

    #[inline]
    pub fn minus(self, o: Moments) -> Moments {
        Moments { n: self.n - o.n, sum: self.sum - o.sum, sumsq: self.sumsq - o.sumsq }
    }

    pub fn arm(self, shift: f64) -> ArmStats {
        let n = self.n;
        let mean = (n > 0).then(|| shift + self.sum / n as f64);
        let var = (n > 1).then(|| ((self.sumsq - self.sum * self.sum / n as f64) / (n - 1) as f64).max(0.0));
        ArmStats { n, sum_weights: n as f64, mean, var }
    }
}

/// Accumulators for one node: outcome per arm plus the transformed outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct NodeMoments {
    pub treat: Moments,
    pub control: Moments,
    pub star: Moments,
}

/// Shifts applied to the outcome and to the transformed outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Shifts {
    pub y: f64,
    pub star: f64,
}

impl NodeMoments {
    #[inline]
    pub fn push(&mut self, data: &CausalDataset, i: usize, shifts: Shifts) {
        let y = data.outcome(i) - shifts.y;
        if data.is_treated(i) {
            self.treat.push(y);
        } else {
            self.control.push(y);
        }
        self.star.push(data.transformed(i) - shifts.star);
    }

    pub fn collect(data: &CausalDataset, indices: &[usize], shifts: Shifts) -> Self {
        let mut m = NodeMoments::default();
        for &i in indices {
            m.push(data, i, shifts);
        }
        m
    }

    #[inline]
    pub fn minus(self, o: NodeMoments) -> NodeMoments {
        NodeMoments {
            treat: self.treat.minus(o.treat),
            control: self.control.minus(o.control),
            star: self.star.minus(o.star),
        }
    }

    #[inline]
    pub fn stats(self, shifts: Shifts) -> LeafStats {
        LeafStats {
            treat: self.treat.arm(shifts.y),
            control: self.control.arm(shifts.y),
            all: self.treat.plus(self.control).arm(shifts.y),
            transformed: self.star.arm(shifts.star),
        }
    }
}

/// Count, weight total, mean and unbiased variance of one group of outcomes.
///
/// `mean` is absent for an empty group and `var` for groups of fewer than two.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub n: usize,
    pub sum_weights: f64,
    pub mean: Option<f64>,
    pub var: Option<f64>,
}

/// Sufficient statistics of a leaf: per-arm and pooled outcome moments, and
/// the moments of the transformed outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub treat: ArmStats,
    pub control: ArmStats,
    pub all: ArmStats,
    pub transformed: ArmStats,
}

impl LeafStats {
    pub fn n(&self) -> usize {
        self.treat.n + self.control.n
    }

    pub fn n_treat(&self) -> usize {
        self.treat.n
    }

    pub fn n_control(&self) -> usize {
        self.control.n
    }

    pub fn mean_treat(&self) -> Option<f64> {
        self.treat.mean
    }

    pub fn mean_control(&self) -> Option<f64> {
        self.control.mean
    }

    pub fn var_treat(&self) -> Option<f64> {
        self.treat.var
    }

    pub fn var_control(&self) -> Option<f64> {
        self.control.var
    }

    pub fn mean_all(&self) -> Option<f64> {
        self.all.mean
    }

    pub fn var_all(&self) -> Option<f64> {
        self.all.var
    }

    /// Builds statistics directly from per-arm summaries, e.g. for tests of
    /// the criteria. The pooled and transformed moments are derived from the
    /// arm moments, with the transformed outcome using treated share `p`.
    pub fn from_arms(treat: (usize, f64, f64), control: (usize, f64, f64), p: f64) -> LeafStats {
        let arm = |(n, mean, var): (usize, f64, f64)| ArmStats {
            n,
            sum_weights: n as f64,
            mean: (n > 0).then_some(mean),
            var: (n > 1).then_some(var),
        };
        // Reconstruct sums of squares so pooled moments stay exact.
        let ss = |(n, mean, var): (usize, f64, f64)| {
            let dev = if n > 1 { var * (n - 1) as f64 } else { 0.0 };
            (n as f64 * mean, dev + n as f64 * mean * mean)
        };
        let (st, sst) = ss(treat);
        let (sc, ssc) = ss(control);
        let pooled = Moments { n: treat.0 + control.0, sum: st + sc, sumsq: sst + ssc }.arm(0.0);
        let (ct, cc) = ((1.0 - p) / (p * (1.0 - p)), -p / (p * (1.0 - p)));
        let star = Moments {
            n: treat.0 + control.0,
            sum: ct * st + cc * sc,
            sumsq: ct * ct * sst + cc * cc * ssc,
        }
        .arm(0.0);
        LeafStats { treat: arm(treat), control: arm(control), all: pooled, transformed: star }
    }
}

/// Per-arm, pooled and transformed-outcome statistics of the listed units.
///
/// With `weights` (indexed by dataset row) the means are weighted; variances
/// use the weighted second moment with an `n/(n-1)` correction so that equal
/// weights reproduce the unweighted result.
pub fn leaf_stats(data: &CausalDataset, indices: &[usize], weights: Option<&[f64]>) -> LeafStats {
    match weights {
        None => {
            let shifts = Shifts::default();
            // Two passes: locate the means, then accumulate around them.
            let rough = NodeMoments::collect(data, indices, shifts).stats(shifts);
            let shifts = Shifts { y: rough.all.mean.unwrap_or(0.0), star: rough.transformed.mean.unwrap_or(0.0) };
            NodeMoments::collect(data, indices, shifts).stats(shifts)
        }
        Some(w) => {
            let treat: Vec<usize> = indices.iter().copied().filter(|&i| data.is_treated(i)).collect();
            let control: Vec<usize> = indices.iter().copied().filter(|&i| !data.is_treated(i)).collect();
            let y = |i: usize| data.outcome(i);
            let s = |i: usize| data.transformed(i);
            LeafStats {
                treat: weighted_arm(&treat, w, y),
                control: weighted_arm(&control, w, y),
                all: weighted_arm(indices, w, y),
                transformed: weighted_arm(indices, w, s),
            }
        }
    }
}

fn weighted_arm(idx: &[usize], w: &[f64], value: impl Fn(usize) -> f64) -> ArmStats {
    let n = idx.len();
    let sw: f64 = idx.iter().map(|&i| w[i]).sum();
    if n == 0 || sw <= 0.0 {
        return ArmStats { n, sum_weights: sw, mean: None, var: None };
    }
    let mean = idx.iter().map(|&i| w[i] * value(i)).sum::<f64>() / sw;
    let var = (n > 1).then(|| {
        let m2 = idx.iter().map(|&i| w[i] * (value(i) - mean).powi(2)).sum::<f64>() / sw;
        m2 * n as f64 / (n - 1) as f64
    });
    ArmStats { n, sum_weights: sw, mean: Some(mean), var }
}
