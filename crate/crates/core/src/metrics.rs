//! Intervention rate, success rate, subjective burden and the Wilcoxon
//! signed-rank test.

use alloc::vec::Vec;

use crate::dataset::{Episode, Partition, SourceCounts};
use crate::error::StatsError;
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeSummary {
    pub id: u32,
    pub partition: Partition,
    pub counts: SourceCounts,
    pub success: bool,
}

impl From<&Episode> for EpisodeSummary {
    fn from(e: &Episode) -> Self {
        Self {
            id: e.id,
            partition: e.partition,
            counts: e.source_counts(),
            success: e.success,
        }
    }
}

/// Per-episode action counts of one collection run.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunLog {
    pub episodes: Vec<EpisodeSummary>,
}

impl RunLog {
    pub fn from_episodes<'a>(episodes: impl IntoIterator<Item = &'a Episode>) -> Self {
        Self {
            episodes: episodes.into_iter().map(EpisodeSummary::from).collect(),
        }
    }

    pub fn counts(&self, scope: PhaseFilter) -> SourceCounts {
        let mut c = SourceCounts::default();
        for e in self.episodes.iter().filter(|e| scope.admits(e.partition)) {
            c += e.counts;
        }
        c
    }

    pub fn intervention_rate(&self, scope: PhaseFilter) -> Result<f64, StatsError> {
        intervention_rate(&self.counts(scope))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseFilter {
    All,
    Offline,
    Online,
    Round(u32),
}

impl PhaseFilter {
    pub fn admits(self, p: Partition) -> bool {
        match self {
            PhaseFilter::All => true,
            PhaseFilter::Offline => p.is_offline(),
            PhaseFilter::Online => !p.is_offline(),
            PhaseFilter::Round(i) => !p.is_offline() && p.round() == i,
        }
    }
}

/// `100 · N^H / N`.
pub fn intervention_rate(counts: &SourceCounts) -> Result<f64, StatsError> {
    let n = counts.total();
    if n == 0 {
        return Err(StatsError::EmptyScope);
    }
    Ok(100.0 * counts.human as f64 / n as f64)
}

/// Percentage of successful episodes; zero for an empty list.
pub fn success_rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    100.0 * flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

/// Performance, effort and frustration on a 7-point scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rating {
    p: u8,
    e: u8,
    f: u8,
}

impl Rating {
    pub fn new(p: i64, e: i64, f: i64) -> Result<Self, StatsError> {
        let check = |v: i64| {
            if (1..=7).contains(&v) {
                Ok(v as u8)
            } else {
                Err(StatsError::InvalidRating(v))
            }
        };
        Ok(Self {
            p: check(p)?,
            e: check(e)?,
            f: check(f)?,
        })
    }

    pub fn performance(&self) -> u8 {
        self.p
    }

    pub fn effort(&self) -> u8 {
        self.e
    }

    pub fn frustration(&self) -> u8 {
        self.f
    }

    /// `((7 − P) + E + F) / 3`.
    pub fn burden(&self) -> f64 {
        f64::from(7 - self.p + self.e + self.f) / 3.0
    }
}

pub fn burden(r: &Rating) -> f64 {
    r.burden()
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        math::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
    } else {
        0.0
    };
    Ok(MeanStd { mean, std, n })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WilcoxonResult {
    pub w: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Non-zero differences.
    pub m: usize,
    pub p: f64,
    pub exact: bool,
    /// Pairs with zero difference, dropped before ranking.
    pub zeros_dropped: usize,
}

/// Largest `m` for which the null distribution is computed exactly.
pub const EXACT_LIMIT: usize = 20;

/// Average ranks of `|d|`, doubled so ties stay integral.
pub fn doubled_ranks(d: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut ranks = alloc::vec![0u64; d.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        // Ranks i+1..=j+1 averaged, times two.
        let r2 = (i + 1 + j + 1) as u64;
        for &k in &idx[i..=j] {
            ranks[k] = r2;
        }
        i = j + 1;
    }
    ranks
}

/// Sign assignments whose doubled positive rank sum is at most `t2`.
fn exact_count(ranks2: &[u64], t2: u64) -> u64 {
    let total: u64 = ranks2.iter().sum();
    let mut ways = alloc::vec![0u64; total as usize + 1];
    ways[0] = 1;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if ways[s] != 0 {
                ways[s + r] += ways[s];
            }
        }
        reach += r;
    }
    ways.iter().take(t2 as usize + 1).sum()
}

/// Two-sided test of `x − y` being symmetric about zero. The exact p is
/// `min(1, 2 · P(W⁺ ≤ W))` under the sign-flip null.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let all: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let d: Vec<f64> = all.iter().copied().filter(|&v| v != 0.0).collect();
    if d.is_empty() {
        return Err(StatsError::AllZeroDifferences { p: 1.0 });
    }
    let zeros_dropped = all.len() - d.len();
    let m = d.len();
    let ranks2 = doubled_ranks(&d);
    let wp2: u64 = d.iter().zip(&ranks2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = ranks2.iter().sum();
    let wm2 = total2 - wp2;
    let t2 = wp2.min(wm2);
    let (p, exact) = if m <= EXACT_LIMIT {
        let count = exact_count(&ranks2, t2);
        let p = 2.0 * count as f64 / (1u64 << m) as f64;
        (p.min(1.0), true)
    } else {
        let mf = m as f64;
        let mu = mf * (mf + 1.0) / 4.0;
        let mut ties = 0.0;
        let mut sorted = ranks2.clone();
        sorted.sort_unstable();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            ties += t * t * t - t;
            i = j;
        }
        let var = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - ties / 48.0;
        let w = t2 as f64 / 2.0;
        let z = ((w - mu).abs() - 0.5).max(0.0) / math::sqrt(var);
        (math::erfc(z / core::f64::consts::SQRT_2).min(1.0), false)
    };
    Ok(WilcoxonResult {
        w: t2 as f64 / 2.0,
        w_plus: wp2 as f64 / 2.0,
        w_minus: wm2 as f64 / 2.0,
        m,
        p,
        exact,
        zeros_dropped,
    })
}
