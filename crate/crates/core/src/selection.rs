//! Greedy farthest-point selection (Gonzalez k-center heuristic).

use crate::error::{Error, Result};
use crate::kernels::Metric;
use crate::par::{self, Parallelism};
use crate::points::PointSet;

/// Which points may be picked at step `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateRule {
    /// Any point not yet selected.
    #[default]
    Unselected,
    /// Only points with index `>= n` that are not yet selected; falls back to
    /// the unselected rule once that pool is exhausted.
    Suffix,
}

/// Selected indices in selection order with their coverage radii.
///
/// `radii[i]` is the distance from the `i`-th selected point to the points
/// selected before it; the first entry is `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub radii: Vec<f64>,
}

/// Farthest-point selection of `count` rows of `x`, starting from `start`.
/// Ties go to the lowest index.
pub fn greedy_select(
    x: &PointSet,
    count: usize,
    metric: Metric,
    start: usize,
    rule: CandidateRule,
) -> Result<Selection> {
    greedy_select_with(x, count, metric, start, rule, Parallelism::Parallel)
}

pub fn greedy_select_with(
    x: &PointSet,
    count: usize,
    metric: Metric,
    start: usize,
    rule: CandidateRule,
    par: Parallelism,
) -> Result<Selection> {
    let n = x.nrows();
    if count == 0 || count > n {
        return Err(Error::InvalidInput(format!(
            "selection count must be in [1, {n}], got {count}"
        )));
    }
    if start >= n {
        return Err(Error::InvalidInput(format!(
            "start index {start} out of range for {n} points"
        )));
    }
    let mut selected = vec![false; n];
    let mut min_dist = par::map_indexed(n, par, |i| metric.eval(x.row(i), x.row(start)));
    selected[start] = true;
    let mut sel = Selection {
        indices: vec![start],
        radii: vec![f64::INFINITY],
    };
    while sel.indices.len() < count {
        let step = sel.indices.len();
        let floor = match rule {
            CandidateRule::Unselected => 0,
            CandidateRule::Suffix if (step..n).any(|i| !selected[i]) => step,
            CandidateRule::Suffix => 0,
        };
        let mut best: Option<usize> = None;
        for i in floor..n {
            if !selected[i] && best.is_none_or(|b| min_dist[i] > min_dist[b]) {
                best = Some(i);
            }
        }
        let pick = best.ok_or_else(|| Error::Internal("no candidate left".into()))?;
        selected[pick] = true;
        sel.indices.push(pick);
        sel.radii.push(min_dist[pick]);
        let anchor = x.row(pick);
        let updated = par::map_indexed(n, par, |i| min_dist[i].min(metric.eval(x.row(i), anchor)));
        min_dist = updated;
    }
    Ok(sel)
}

/// `max_{x ∈ X} min_{s ∈ subset} d(x, s)`.
pub fn fill_distance(x: &PointSet, subset: &[usize], metric: Metric) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidInput("fill distance needs a non-empty subset".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= x.nrows()) {
        return Err(Error::InvalidInput(format!("subset index {bad} out of range")));
    }
    let per_point = par::map_indexed(x.nrows(), Parallelism::Parallel, |i| {
        subset
            .iter()
            .map(|&s| metric.eval(x.row(i), x.row(s)))
            .fold(f64::INFINITY, f64::min)
    });
    Ok(per_point.into_iter().fold(0.0, f64::max))
}
