//! Candidate lag sets and the lag-difference vectors built from them.

use crate::error::{LmarError, Result};
use crate::series::TimeSeries;

/// The candidate lags `J_i = {p+1, ..., i+m-p}` for target index `i`.
///
/// Every lag keeps the motif window `Y_{i-j-p..i-j}` disjoint from the
/// instance window `Y_{i-p..i}` and inside the observed block starting at `-m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagSet {
    pub target: isize,
    first: usize,
    last: usize,
}

impl LagSet {
    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.last - self.first + 1
        }
    }

    /// Smallest lag, or `None` when the set is empty.
    pub fn first(&self) -> Option<usize> {
        (!self.is_empty()).then_some(self.first)
    }

    /// Largest lag, or `None` when the set is empty.
    pub fn last(&self) -> Option<usize> {
        (!self.is_empty()).then_some(self.last)
    }

    pub fn contains(&self, j: usize) -> bool {
        j >= self.first && j <= self.last
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + use<> {
        self.first..=self.last
    }
}

/// Returns `J_i` for target `i`, motif order `p` and conditioning length `m`.
pub fn candidate_lags(i: isize, p: usize, m: usize) -> LagSet {
    let first = p + 1;
    let upper = i + m as isize - p as isize;
    let last = if upper < first as isize {
        // canonical empty representation
        0
    } else {
        upper as usize
    };
    LagSet {
        target: i,
        first,
        last,
    }
}

fn check_window(series: &TimeSeries, lo: isize, hi: isize, i: isize) -> Result<()> {
    let first = series.first_index();
    let limit = series.last_index().min(i);
    if lo < first {
        return Err(LmarError::IndexOutOfRange {
            index: lo,
            lo: first,
            hi: limit,
        });
    }
    if hi > limit {
        return Err(LmarError::IndexOutOfRange {
            index: hi,
            lo: first,
            hi: limit,
        });
    }
    Ok(())
}

/// `V_ij`: component `l` (1-based) is `Y_{i-p-1+l} - Y_{i-j-p-1+l}`.
pub fn lag_diff_v(series: &TimeSeries, i: isize, j: usize, p: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(LmarError::InvalidParameter("p must be at least 1".into()));
    }
    let (p_i, j_i) = (p as isize, j as isize);
    check_window(series, i - j_i - p_i, i - 1, i - 1)?;
    let now = series.position(i - p_i)?;
    let then = series.position(i - j_i - p_i)?;
    let y = series.values();
    Ok((0..p).map(|l| y[now + l] - y[then + l]).collect())
}

/// `W_ij = (V_ij', Y_i - Y_{i-j})'`.
pub fn lag_diff_w(series: &TimeSeries, i: isize, j: usize, p: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(LmarError::InvalidParameter("p must be at least 1".into()));
    }
    let (p_i, j_i) = (p as isize, j as isize);
    check_window(series, i - j_i - p_i, i, i)?;
    let now = series.position(i - p_i)?;
    let then = series.position(i - j_i - p_i)?;
    let y = series.values();
    Ok((0..=p).map(|l| y[now + l] - y[then + l]).collect())
}
