//! Kernel temporal segmentation.
//!
//! Change points minimize the summed within-segment kernel variance
//! `v(a,b) = sum_t A_tt - (sum_{t,s} A_ts) / (b-a+1)` over the linear-kernel
//! gram matrix `A = V V^T`, plus a model-size penalty
//! `penalty * m * (log(n/m) + 1)`, via dynamic programming on prefix sums.

use super::{FrameEmbeddingSeries, SegError, SegmentationConfig};
use crate::canon::quantize_s;
use crate::par;

/// Linear-kernel gram matrix `A = V V^T`, flat row-major `n x n`.
pub fn gram_matrix(series: &FrameEmbeddingSeries) -> Result<Vec<f64>, SegError> {
    let n = series.len();
    let mut gram = vec![0.0; n * n];
    par::fill_rows(&mut gram, n, |i, row| {
        let a = series.row(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = a
                .iter()
                .zip(series.row(j))
                .map(|(x, y)| x * y)
                .sum::<f64>();
        }
    });
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(SegError::NonFiniteGram);
    }
    Ok(gram)
}

/// O(1) within-segment cost queries over precomputed prefix sums.
struct PrefixCosts {
    n: usize,
    /// 2-D inclusion-exclusion prefix of the gram matrix, (n+1) x (n+1).
    block: Vec<f64>,
    /// Prefix of the diagonal.
    diag: Vec<f64>,
}

impl PrefixCosts {
    fn new(gram: &[f64], n: usize) -> Self {
        let w = n + 1;
        let mut block = vec![0.0; w * w];
        for r in 0..n {
            for c in 0..n {
                block[(r + 1) * w + (c + 1)] = gram[r * n + c] + block[r * w + (c + 1)]
                    + block[(r + 1) * w + c]
                    - block[r * w + c];
            }
        }
        let mut diag = vec![0.0; n + 1];
        for i in 0..n {
            diag[i + 1] = diag[i] + gram[i * n + i];
        }
        Self { n, block, diag }
    }

    /// Cost of the segment covering frames `a..=b`.
    fn cost(&self, a: usize, b: usize) -> f64 {
        let w = self.n + 1;
        let len = (b - a + 1) as f64;
        let total = self.block[(b + 1) * w + (b + 1)] - self.block[a * w + (b + 1)]
            - self.block[(b + 1) * w + a]
            + self.block[a * w + a];
        let cost = (self.diag[b + 1] - self.diag[a]) - total / len;
        if cost < 0.0 && cost > -1e-9 {
            0.0
        } else {
            cost
        }
    }
}

/// DP tables: `best[k][t]` = minimal cost of covering frames `0..t` with `k`
/// segments; `parent[k][t]` = start frame of the last such segment.
struct DpTables {
    best: Vec<Vec<f64>>,
    parent: Vec<Vec<u32>>,
}

fn run_dp(costs: &PrefixCosts, mmax: usize) -> DpTables {
    let n = costs.n;
    let kmax = mmax + 1; // segments
    let mut best = vec![vec![f64::INFINITY; n + 1]; kmax + 1];
    let mut parent = vec![vec![0u32; n + 1]; kmax + 1];

    let first: Vec<f64> = par::map_range(n + 1, |t| {
        if t == 0 {
            f64::INFINITY
        } else {
            costs.cost(0, t - 1)
        }
    });
    best[1] = first;

    for k in 2..=kmax {
        let prev = std::mem::take(&mut best[k - 1]);
        let row: Vec<(f64, u32)> = par::map_range(n + 1, |t| {
            if t < k {
                return (f64::INFINITY, 0);
            }
            let mut bval = f64::INFINITY;
            let mut barg = 0u32;
            for s in (k - 1)..t {
                let c = prev[s];
                if !c.is_finite() {
                    continue;
                }
                let cand = c + costs.cost(s, t - 1);
                if cand < bval {
                    bval = cand;
                    barg = s as u32;
                }
            }
            (bval, barg)
        });
        best[k - 1] = prev;
        for (t, (v, p)) in row.into_iter().enumerate() {
            best[k][t] = v;
            parent[k][t] = p;
        }
    }
    DpTables { best, parent }
}

fn backtrack(tables: &DpTables, costs: &PrefixCosts, m: usize) -> Vec<usize> {
    let mut cps = Vec::with_capacity(m);
    let mut t = costs.n;
    for k in (2..=m + 1).rev() {
        let s = tables.parent[k][t] as usize;
        cps.push(s);
        t = s;
    }
    cps.reverse();
    cps
}

/// Total unpenalized DP cost for each change-point count `m = 0..=mmax`.
pub fn kts_cost_curve(series: &FrameEmbeddingSeries, mmax: usize) -> Result<Vec<f64>, SegError> {
    let n = series.len();
    let mmax = mmax.min(n - 1);
    let gram = gram_matrix(series)?;
    let costs = PrefixCosts::new(&gram, n);
    let tables = run_dp(&costs, mmax);
    Ok((0..=mmax).map(|m| tables.best[m + 1][n]).collect())
}

/// Optimal change points for exactly `m` change points (frame indices of
/// each new segment's first frame).
pub fn kts_changepoints_fixed(
    series: &FrameEmbeddingSeries,
    m: usize,
) -> Result<Vec<usize>, SegError> {
    let n = series.len();
    if m > n - 1 {
        return Err(SegError::BadConfig(format!(
            "cannot place {m} change points over {n} frames"
        )));
    }
    let gram = gram_matrix(series)?;
    let costs = PrefixCosts::new(&gram, n);
    let tables = run_dp(&costs, m);
    Ok(backtrack(&tables, &costs, m))
}

/// Segment a series with KTS and map change points to boundary timestamps.
///
/// The change-point count minimizes `total_cost(m) + penalty * m * (log(n/m)
/// + 1)`; a boundary lands at the midpoint between the last frame of one
/// segment and the first of the next. `min_clip_s` is then enforced by
/// merging the shorter neighbor of any violating boundary.
pub fn kts_segment(
    series: &FrameEmbeddingSeries,
    config: &SegmentationConfig,
) -> Result<Vec<f64>, SegError> {
    config.validate()?;
    let n = series.len();
    let mmax = config.kts_max_changepoints.unwrap_or(n - 1).min(n - 1);

    let gram = gram_matrix(series)?;
    let costs = PrefixCosts::new(&gram, n);
    let tables = run_dp(&costs, mmax);

    let mut best_m = 0usize;
    let mut best_obj = f64::INFINITY;
    for m in 0..=mmax {
        let total = tables.best[m + 1][n];
        if !total.is_finite() {
            continue;
        }
        let penalty = if m == 0 {
            0.0
        } else {
            m as f64 * ((n as f64 / m as f64).ln() + 1.0)
        };
        let obj = total + config.kts_penalty * penalty;
        if obj < best_obj {
            best_obj = obj;
            best_m = m;
        }
    }

    let cps = backtrack(&tables, &costs, best_m);
    let ts = series.timestamps();
    let duration = series.duration_s();
    let mut boundaries = Vec::with_capacity(cps.len() + 2);
    boundaries.push(0.0);
    for c in cps {
        boundaries.push(quantize_s((ts[c - 1] + ts[c]) / 2.0));
    }
    boundaries.push(duration);
    Ok(enforce_min_clip(boundaries, config.min_clip_s))
}

/// Merge away boundaries until every clip lasts at least `min_clip_s` (or a
/// single clip remains). The shortest violating clip merges into its shorter
/// neighbor first.
fn enforce_min_clip(mut boundaries: Vec<f64>, min_clip_s: f64) -> Vec<f64> {
    while boundaries.len() > 2 {
        let durations: Vec<f64> = boundaries.windows(2).map(|w| w[1] - w[0]).collect();
        let (idx, &dur) = durations
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one clip");
        if dur >= min_clip_s {
            break;
        }
        let left = if idx == 0 {
            f64::INFINITY
        } else {
            durations[idx - 1]
        };
        let right = if idx + 1 == durations.len() {
            f64::INFINITY
        } else {
            durations[idx + 1]
        };
        if left <= right {
            boundaries.remove(idx); // merge into the left neighbor
        } else {
            boundaries.remove(idx + 1); // merge into the right neighbor
        }
    }
    boundaries
}

#[cfg(test)]
mod tests {
    use super::super::testutil::planted_series;
    use super::*;
    use crate::segmentation::{FrameEmbeddingSeries, SegmentationMethod};

    fn step_series() -> FrameEmbeddingSeries {
        // Raw 1-D values [0,0,0,5,5,5]; normalization deliberately skipped.
        FrameEmbeddingSeries::new_unnormalized(
            "step",
            0.5,
            vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            vec![0.0, 0.0, 0.0, 5.0, 5.0, 5.0],
            1,
        )
        .unwrap()
    }

    /// Independent oracle: naive segment cost from raw values.
    fn naive_cost(xs: &[f64], a: usize, b: usize) -> f64 {
        let diag: f64 = xs[a..=b].iter().map(|x| x * x).sum();
        let mut total = 0.0;
        for t in a..=b {
            for s in a..=b {
                total += xs[t] * xs[s];
            }
        }
        diag - total / (b - a + 1) as f64
    }

    #[test]
    fn fixed_single_change_point_on_step() {
        let series = step_series();
        let cps = kts_changepoints_fixed(&series, 1).unwrap();
        assert_eq!(cps, vec![3]);

        // Brute force over all five single change points.
        let xs = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0];
        let best = (1..6)
            .min_by(|&a, &b| {
                let ca = naive_cost(&xs, 0, a - 1) + naive_cost(&xs, a, 5);
                let cb = naive_cost(&xs, 0, b - 1) + naive_cost(&xs, b, 5);
                ca.total_cmp(&cb)
            })
            .unwrap();
        assert_eq!(best, 3);
        assert_eq!(naive_cost(&xs, 0, 2), 0.0);
        assert_eq!(naive_cost(&xs, 3, 5), 0.0);

        let curve = kts_cost_curve(&series, 1).unwrap();
        assert!(curve[1].abs() < 1e-9, "split cost should be 0, got {}", curve[1]);
    }

    #[test]
    fn constant_series_stays_single_clip() {
        let n = 40;
        let timestamps: Vec<f64> = (0..n).map(|i| 2.0 * i as f64).collect();
        let vectors: Vec<f64> = (0..n).flat_map(|_| [1.0, 0.0]).collect();
        let series = FrameEmbeddingSeries::new("const", 0.5, timestamps, vectors, 2).unwrap();
        let config = SegmentationConfig {
            method: SegmentationMethod::Kts,
            min_clip_s: 10.0,
            sub_max_s: 5.0,
            ..SegmentationConfig::default()
        };
        let boundaries = kts_segment(&series, &config).unwrap();
        assert_eq!(boundaries, vec![0.0, series.duration_s()]);
    }

    #[test]
    fn planted_three_regimes_recovered_within_one_frame() {
        let changes = [100usize, 200usize];
        let series = planted_series(300, 8, &changes, 0.01, 42, 0.5);

        let got = kts_changepoints_fixed(&series, 2).unwrap();

        // Exhaustive oracle at fixed m = 2 with its own prefix sums.
        let n = series.len();
        let gram = gram_matrix(&series).unwrap();
        let w = n + 1;
        let mut pref = vec![0.0f64; w * w];
        for r in 0..n {
            for c in 0..n {
                pref[(r + 1) * w + c + 1] =
                    gram[r * n + c] + pref[r * w + c + 1] + pref[(r + 1) * w + c] - pref[r * w + c];
            }
        }
        let mut dpref = vec![0.0f64; n + 1];
        for i in 0..n {
            dpref[i + 1] = dpref[i] + gram[i * n + i];
        }
        let seg = |a: usize, b: usize| -> f64 {
            let total = pref[(b + 1) * w + b + 1] - pref[a * w + b + 1] - pref[(b + 1) * w + a]
                + pref[a * w + a];
            (dpref[b + 1] - dpref[a]) - total / (b - a + 1) as f64
        };
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for c1 in 1..n - 1 {
            for c2 in c1 + 1..n {
                let cost = seg(0, c1 - 1) + seg(c1, c2 - 1) + seg(c2, n - 1);
                if cost < best.0 {
                    best = (cost, c1, c2);
                }
            }
        }
        let oracle = vec![best.1, best.2];
        assert_eq!(got, oracle);

        for (g, p) in got.iter().zip(changes.iter()) {
            assert!(
                g.abs_diff(*p) <= 1,
                "change point {g} not within 1 frame of planted {p}"
            );
        }
    }

    #[test]
    fn auto_selection_finds_planted_count() {
        let series = planted_series(240, 8, &[80, 160], 0.01, 9, 0.5);
        let config = SegmentationConfig {
            method: SegmentationMethod::Kts,
            min_clip_s: 60.0,
            sub_max_s: 30.0,
            kts_penalty: 1.0,
            kts_max_changepoints: Some(8),
            ..SegmentationConfig::default()
        };
        let boundaries = kts_segment(&series, &config).unwrap();
        assert_eq!(boundaries.len(), 4, "{boundaries:?}");
        // Planted changes at frames 80 and 160 map to midpoints 159 and 319.
        assert!((boundaries[1] - 159.0).abs() <= 2.0, "{boundaries:?}");
        assert!((boundaries[2] - 319.0).abs() <= 2.0, "{boundaries:?}");
    }

    #[test]
    fn cost_curve_zero_at_full_split_and_non_increasing() {
        let series = planted_series(24, 4, &[9, 17], 0.05, 3, 0.5);
        let n = series.len();
        let curve = kts_cost_curve(&series, n - 1).unwrap();
        assert!(curve[n - 1].abs() < 1e-9, "{}", curve[n - 1]);
        for m in 1..curve.len() {
            assert!(
                curve[m] <= curve[m - 1] + 1e-9,
                "cost rose from m={} ({}) to m={} ({})",
                m - 1,
                curve[m - 1],
                m,
                curve[m]
            );
        }
    }

    #[test]
    fn min_clip_merging_prefers_shorter_neighbor() {
        // The 50 s head clip has no left neighbor, so it joins [50,400).
        let merged = enforce_min_clip(vec![0.0, 50.0, 400.0, 1000.0], 300.0);
        assert_eq!(merged, vec![0.0, 400.0, 1000.0]);

        let merged = enforce_min_clip(vec![0.0, 500.0, 560.0, 1000.0], 300.0);
        assert_eq!(merged, vec![0.0, 500.0, 1000.0]);
    }

    #[test]
    fn dimension_permutation_leaves_boundaries_unchanged() {
        let series = planted_series(60, 6, &[25], 0.02, 11, 0.5);
        let dim = series.dim();
        let perm: Vec<usize> = (0..dim).rev().collect();
        let permuted: Vec<f64> = (0..series.len())
            .flat_map(|i| {
                let row = series.row(i).to_vec();
                perm.iter().map(move |&p| row[p]).collect::<Vec<_>>()
            })
            .collect();
        let permuted_series = FrameEmbeddingSeries::new(
            "perm",
            series.fps(),
            series.timestamps().to_vec(),
            permuted,
            dim,
        )
        .unwrap();
        // Summation order changes, so gram entries agree only to rounding;
        // the discrete segmentation must match exactly.
        let a = gram_matrix(&series).unwrap();
        let b = gram_matrix(&permuted_series).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        assert_eq!(
            kts_changepoints_fixed(&series, 1).unwrap(),
            kts_changepoints_fixed(&permuted_series, 1).unwrap()
        );
    }

    #[test]
    fn non_finite_gram_is_reported() {
        let series = FrameEmbeddingSeries::new_unnormalized(
            "big",
            0.5,
            vec![0.0, 2.0],
            vec![1e308, 1e308, 1e308, 1e308],
            2,
        )
        .unwrap();
        assert!(matches!(gram_matrix(&series), Err(SegError::NonFiniteGram)));
    }
}
