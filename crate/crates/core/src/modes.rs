//! Mode identification from pilot samples by empirical centrality, and the
//! modal decomposition (balls, weights, covariances) built around the modes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cholesky_factor, ScaleFactor};
use crate::targets::LogDensity;
use crate::tmcmc::empirical_moments;

/// Above this many samples the neighbor counts run on a strided subsample.
pub const SUBSAMPLE_ABOVE: usize = 50_000;

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Largest pairwise Euclidean distance. Pairs are visited in order of
/// decreasing distance from the centroid and pruned with the triangle bound.
pub fn max_pairwise_distance(samples: &[Vec<f64>]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let d = samples[0].len();
    let mut center = vec![0.0; d];
    for s in samples {
        center.iter_mut().zip(s).for_each(|(c, x)| *c += x / n as f64);
    }
    let mut order: Vec<(f64, usize)> = samples.iter().map(|s| (dist_sq(s, &center).sqrt(), 0)).collect();
    order.iter_mut().enumerate().for_each(|(i, o)| o.1 = i);
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best_sq: f64 = 0.0;
    for (k, &(ri, i)) in order.iter().enumerate() {
        // Slack absorbs rounding in the centroid distances.
        let bound = |rj: f64| {
            let b = (ri + rj) * (1.0 + 1e-12);
            b * b
        };
        if bound(order[0].0) <= best_sq {
            break;
        }
        for &(rj, j) in &order[k + 1..] {
            if bound(rj) <= best_sq {
                break;
            }
            best_sq = best_sq.max(dist_sq(&samples[i], &samples[j]));
        }
    }
    best_sq.sqrt()
}

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidParameter("epsilon grid must be non-empty within (0, 1)".into()));
    }
    if eps_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("epsilon grid must be strictly ascending".into()));
    }
    Ok(())
}

fn scale_of(samples: &[Vec<f64>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let scale = max_pairwise_distance(samples);
    if scale == 0.0 {
        return Err(Error::DegenerateCloud);
    }
    Ok(scale)
}

/// `counts[e][i] = #{l : |theta_i - theta_l| / D < eps_e}`, self included,
/// by direct double loop.
pub fn neighbor_counts_brute(samples: &[Vec<f64>], eps_grid: &[f64]) -> Result<Vec<Vec<u32>>> {
    check_grid(eps_grid)?;
    let scale = scale_of(samples)?;
    let n = samples.len();
    let mut counts = vec![vec![0u32; n]; eps_grid.len()];
    for (e, eps) in eps_grid.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                if dist_sq(&samples[i], &samples[j]).sqrt() / scale < *eps {
                    counts[e][i] += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Same counts as [`neighbor_counts_brute`] for every grid value in one
/// parallel pass over query points.
pub fn neighbor_counts(samples: &[Vec<f64>], eps_grid: &[f64]) -> Result<Vec<Vec<u32>>> {
    check_grid(eps_grid)?;
    let scale = scale_of(samples)?;
    Ok(counts_with_scale(samples, eps_grid, scale))
}

fn counts_with_scale(samples: &[Vec<f64>], eps_grid: &[f64], scale: f64) -> Vec<Vec<u32>> {
    let g = eps_grid.len();
    let n = samples.len();
    // Sweep along the widest coordinate; pairs whose projections differ by
    // more than the largest radius cannot be neighbors at any grid value.
    let d = samples[0].len();
    let axis = (0..d)
        .max_by(|&a, &b| {
            let spread = |k: usize| {
                let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s[k]), hi.max(s[k])));
                hi - lo
            };
            spread(a).total_cmp(&spread(b))
        })
        .unwrap_or(0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a][axis].total_cmp(&samples[b][axis]));
    let proj: Vec<f64> = order.iter().map(|&i| samples[i][axis]).collect();
    let window = eps_grid[g - 1] * scale * (1.0 + 1e-9);
    if d == 1 {
        return counts_sorted_line(samples, &order, &proj, eps_grid, scale);
    }
    let mut per_point: Vec<(usize, Vec<u32>)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let a = &samples[order[k]];
            let lo = proj.partition_point(|p| *p < proj[k] - window);
            let hi = proj.partition_point(|p| *p <= proj[k] + window);
            let mut hist = vec![0u32; g + 1];
            for &j in &order[lo..hi] {
                let r = dist_sq(a, &samples[j]).sqrt() / scale;
                hist[eps_grid.partition_point(|e| *e <= r)] += 1;
            }
            let mut out = vec![0u32; g];
            let mut acc = 0;
            for e in 0..g {
                acc += hist[e];
                out[e] = acc;
            }
            (order[k], out)
        })
        .collect();
    per_point.sort_by_key(|p| p.0);
    (0..g).map(|e| per_point.iter().map(|c| c.1[e]).collect()).collect()
}

/// One-dimensional counts by binary search; only points within a relative
/// rounding band of the radius are tested with the exact predicate.
fn counts_sorted_line(samples: &[Vec<f64>], order: &[usize], proj: &[f64], eps_grid: &[f64], scale: f64) -> Vec<Vec<u32>> {
    let n = samples.len();
    let mut per_point: Vec<(usize, Vec<u32>)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let a = &samples[order[k]];
            let x = proj[k];
            let out = eps_grid
                .iter()
                .map(|eps| {
                    let r = eps * scale;
                    let (inner, outer) = (r * (1.0 - 1e-9), r * (1.0 + 1e-9));
                    let sure_lo = proj.partition_point(|p| *p <= x - inner);
                    let sure_hi = proj.partition_point(|p| *p < x + inner);
                    let band_lo = proj.partition_point(|p| *p < x - outer);
                    let band_hi = proj.partition_point(|p| *p <= x + outer);
                    let exact = |j: &usize| dist_sq(a, &samples[*j]).sqrt() / scale < *eps;
                    let edge = order[band_lo..sure_lo.max(band_lo)].iter().filter(|j| exact(j)).count()
                        + order[sure_hi.min(band_hi)..band_hi].iter().filter(|j| exact(j)).count();
                    (sure_hi.saturating_sub(sure_lo) + edge) as u32
                })
                .collect();
            (order[k], out)
        })
        .collect();
    per_point.sort_by_key(|p| p.0);
    (0..eps_grid.len()).map(|e| per_point.iter().map(|c| c.1[e]).collect()).collect()
}

fn argmax_lowest(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = i;
        }
    }
    best
}

/// Index of the sample with the most neighbors within rescaled radius `eps`;
/// ties go to the lowest index.
pub fn approx_central(samples: &[Vec<f64>], eps: f64) -> Result<usize> {
    let counts = neighbor_counts(samples, &[eps])?;
    Ok(argmax_lowest(&counts[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Rescaled distance below which two modes are the same.
    pub delta_merge: f64,
    /// Also take local maxima of each count field as candidates.
    pub local_maxima: bool,
    /// Mean-shift candidates at the finest radius before merging.
    pub refine: bool,
    /// Candidates below this fraction of the best count are dropped.
    pub min_relative_count: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { delta_merge: 0.05, local_maxima: true, refine: true, min_relative_count: 0.1 }
    }
}

impl SweepOptions {
    /// Only the central sample of each grid value, merged greedily.
    pub fn central_only(delta_merge: f64) -> Self {
        Self { delta_merge, local_maxima: false, refine: false, min_relative_count: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub point: Vec<f64>,
    /// Neighbors within the finest grid radius.
    pub count: u32,
}

const MAX_CANDIDATES_PER_EPS: usize = 32;
const MEAN_SHIFT_ITERS: usize = 100;

fn local_maxima(samples: &[Vec<f64>], counts: &[u32], eps: f64, scale: f64, floor: u32) -> Vec<usize> {
    let mut found: Vec<usize> = (0..samples.len())
        .into_par_iter()
        .filter(|&i| {
            counts[i] >= floor
                && samples.iter().enumerate().all(|(j, b)| {
                    dist_sq(&samples[i], b).sqrt() / scale >= eps
                        || counts[j] < counts[i]
                        || (counts[j] == counts[i] && j >= i)
                })
        })
        .collect();
    found.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
    found.truncate(MAX_CANDIDATES_PER_EPS);
    found
}

fn mean_shift(samples: &[Vec<f64>], start: &[f64], radius: f64) -> Vec<f64> {
    let d = start.len();
    let r2 = radius * radius;
    let mut x = start.to_vec();
    for _ in 0..MEAN_SHIFT_ITERS {
        let mut sum = vec![0.0; d];
        let mut n = 0usize;
        for s in samples {
            if dist_sq(&x, s) < r2 {
                sum.iter_mut().zip(s).for_each(|(a, b)| *a += b);
                n += 1;
            }
        }
        if n == 0 {
            break;
        }
        sum.iter_mut().for_each(|v| *v /= n as f64);
        let moved = dist_sq(&sum, &x).sqrt();
        x = sum;
        if moved < 1e-9 * radius {
            break;
        }
    }
    x
}

fn count_within(samples: &[Vec<f64>], x: &[f64], radius: f64) -> u32 {
    let r2 = radius * radius;
    samples.iter().filter(|s| dist_sq(x, s) < r2).count() as u32
}

/// Modes found by sweeping the centrality radius over `eps_grid`, merged
/// when closer than `delta_merge` (rescaled) and ordered by count.
pub fn mode_sweep(samples: &[Vec<f64>], eps_grid: &[f64], options: &SweepOptions) -> Result<Vec<Mode>> {
    check_grid(eps_grid)?;
    let pool: Vec<Vec<f64>> = if samples.len() > SUBSAMPLE_ABOVE {
        let stride = samples.len().div_ceil(SUBSAMPLE_ABOVE);
        samples.iter().step_by(stride).cloned().collect()
    } else {
        samples.to_vec()
    };
    let scale = scale_of(&pool)?;
    let counts = counts_with_scale(&pool, eps_grid, scale);

    let mut candidates: Vec<usize> = Vec::new();
    for (e, eps) in eps_grid.iter().enumerate() {
        let best = argmax_lowest(&counts[e]);
        candidates.push(best);
        if options.local_maxima {
            let floor = (options.min_relative_count * counts[e][best] as f64).ceil() as u32;
            candidates.extend(local_maxima(&pool, &counts[e], *eps, scale, floor));
        }
    }
    let mut seen = std::collections::HashSet::new();
    candidates.retain(|i| seen.insert(*i));

    let fine = eps_grid[0] * scale;
    let mut modes: Vec<Mode> = candidates
        .par_iter()
        .map(|&i| {
            let point = if options.refine { mean_shift(&pool, &pool[i], fine) } else { pool[i].clone() };
            let count = count_within(&pool, &point, fine);
            Mode { point, count }
        })
        .collect();
    let top = modes.iter().map(|m| m.count).max().unwrap_or(0);
    let floor = options.min_relative_count * top as f64;
    modes.retain(|m| m.count as f64 >= floor);
    modes.sort_by(|a, b| b.count.cmp(&a.count));

    let merge = options.delta_merge * scale;
    let mut accepted: Vec<Mode> = Vec::new();
    for m in modes {
        if accepted.iter().all(|a| dist_sq(&a.point, &m.point).sqrt() > merge) {
            accepted.push(m);
        }
    }
    Ok(accepted)
}

/// Coordinate-wise hill climb on the target from `start`.
pub fn polish_mode<T: LogDensity + ?Sized>(target: &T, start: &[f64], step: f64, tol: f64) -> Vec<f64> {
    let mut x = start.to_vec();
    let mut best = target.log_density(&x);
    let mut h = step;
    while h > tol {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let old = x[i];
                x[i] = old + dir * h;
                let v = target.log_density(&x);
                if v > best {
                    best = v;
                    improved = true;
                    break;
                }
                x[i] = old;
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    x
}

/// Modes, ball radii, weights and covariance factors of the pilot cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalDecomposition {
    pub modes: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub weights: Vec<f64>,
    pub factors: Vec<ScaleFactor>,
    /// Ball member counts; empty when the decomposition was given directly.
    #[serde(default)]
    pub counts: Vec<usize>,
}

impl ModalDecomposition {
    pub fn new(modes: Vec<Vec<f64>>, radii: Vec<f64>, weights: Vec<f64>, factors: Vec<ScaleFactor>) -> Result<Self> {
        let decomp = Self { modes, radii, weights, factors, counts: Vec::new() };
        decomp.validate()?;
        Ok(decomp)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.modes.len();
        if m == 0 || self.radii.len() != m || self.weights.len() != m || self.factors.len() != m {
            return Err(Error::InvalidParameter("decomposition needs m >= 1 and matching lengths".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("mode weights must form a simplex (sum {total})")));
        }
        let d = self.modes[0].len();
        for (mu, f) in self.modes.iter().zip(&self.factors) {
            if mu.len() != d || f.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: mu.len().min(f.dim()) });
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.modes[0].len()
    }

    /// Same decomposition with different mode weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.weights = weights;
        out.validate()?;
        Ok(out)
    }
}

/// Members of each Euclidean ball `|theta - mu_j| < eps_j`.
pub fn ball_members<'a>(samples: &'a [Vec<f64>], mode: &[f64], radius: f64) -> Vec<&'a Vec<f64>> {
    let r2 = radius * radius;
    samples.iter().filter(|s| dist_sq(s, mode) < r2).collect()
}

/// Weights are ball counts normalized over ball members (overlaps count
/// toward every ball); covariances are the jittered member covariances.
pub fn modal_decomposition(samples: &[Vec<f64>], modes: &[Vec<f64>], radii: &[f64]) -> Result<ModalDecomposition> {
    if modes.is_empty() || modes.len() != radii.len() {
        return Err(Error::InvalidParameter("need one radius per mode".into()));
    }
    let d = modes[0].len();
    let mut counts = Vec::with_capacity(modes.len());
    let mut factors = Vec::with_capacity(modes.len());
    for (j, (mu, eps)) in modes.iter().zip(radii).enumerate() {
        if mu.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: mu.len() });
        }
        if !(*eps > 0.0) {
            return Err(Error::InvalidParameter(format!("modal radius {eps} must be positive")));
        }
        let members: Vec<Vec<f64>> = ball_members(samples, mu, *eps).into_iter().cloned().collect();
        if members.len() < d + 2 {
            return Err(Error::EmptyModalRegion(j));
        }
        let (_, cov) = empirical_moments(&members)?;
        factors.push(cholesky_factor(&cov, 0.0)?);
        counts.push(members.len());
    }
    let total: usize = counts.iter().sum();
    let mut weights: Vec<f64> = counts.iter().map(|c| *c as f64 / total as f64).collect();
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Ok(ModalDecomposition { modes: modes.to_vec(), radii: radii.to_vec(), weights, factors, counts })
}

/// Smallest radius whose ball around `mode` holds `needed` samples.
pub fn min_radius_for_members(samples: &[Vec<f64>], mode: &[f64], needed: usize) -> Result<f64> {
    if samples.len() < needed || needed == 0 {
        return Err(Error::TooFewSamples { needed, got: samples.len() });
    }
    let mut d: Vec<f64> = samples.iter().map(|s| dist_sq(s, mode).sqrt()).collect();
    d.sort_by(f64::total_cmp);
    // Balls are open, so step just past the needed-th distance.
    let r = d[needed - 1];
    Ok(if r > 0.0 { r * (1.0 + 1e-9) } else { f64::MIN_POSITIVE })
}

/// Largest value in `[lo, hi]` accepted by a predicate assumed monotone
/// (true up to a threshold), found by bisection.
pub fn largest_feasible<F>(lo: f64, hi: f64, iterations: usize, mut feasible: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidParameter(format!("bisection bracket [{lo}, {hi}]")));
    }
    if feasible(hi)? {
        return Ok(hi);
    }
    if !feasible(lo)? {
        return Err(Error::InvalidParameter(format!("no feasible radius at the lower end {lo}")));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iterations {
        let mid = 0.5 * (a + b);
        if feasible(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(a)
}
