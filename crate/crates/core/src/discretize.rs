//! Cut points over a continuous feature, three ways of fitting them, and the
//! constructive epsilon partition that bounds per-class CDF growth inside
//! every interval.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("degenerate range [{lower}, {upper}]")]
    DegenerateRange { lower: f64, upper: f64 },
    #[error("need at least one bin")]
    NoBins,
    #[error("cut points must be strictly increasing and inside ({lower}, {upper})")]
    BadCuts { lower: f64, upper: f64 },
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("overlap fraction must lie in (0, 0.5), got {0}")]
    Overlap(f64),
    #[error("conditional sample is empty")]
    EmptySample,
    #[error("non-finite feature value {0}")]
    NonFinite(f64),
}

/// Boundaries `l < c_1 < … < c_n < u`, defining `n + 1` intervals
/// `[l, c_1), [c_1, c_2), …, [c_n, u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutPoints {
    lower: f64,
    upper: f64,
    cuts: Vec<f64>,
}

impl CutPoints {
    pub fn new(lower: f64, upper: f64, cuts: Vec<f64>) -> Result<Self, DiscretizeError> {
        let ordered = cuts.windows(2).all(|w| w[0] < w[1]);
        let inside = cuts.first().is_none_or(|&c| lower < c) && cuts.last().is_none_or(|&c| c < upper);
        if !(lower <= upper) || !ordered || !inside {
            return Err(DiscretizeError::BadCuts { lower, upper });
        }
        Ok(CutPoints { lower, upper, cuts })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn n_intervals(&self) -> usize {
        self.cuts.len() + 1
    }

    /// `(start, end)` of interval `i`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let start = if i == 0 { self.lower } else { self.cuts[i - 1] };
        let end = if i == self.cuts.len() { self.upper } else { self.cuts[i] };
        (start, end)
    }
}

pub fn fit_equal_width(lower: f64, upper: f64, n_bins: usize) -> Result<CutPoints, DiscretizeError> {
    if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
        return Err(DiscretizeError::DegenerateRange { lower, upper });
    }
    if n_bins == 0 {
        return Err(DiscretizeError::NoBins);
    }
    let width = (upper - lower) / n_bins as f64;
    let cuts = (1..n_bins).map(|k| lower + k as f64 * width).collect();
    CutPoints::new(lower, upper, cuts)
}

/// Index of the interval holding `x`; values outside `[l, u]` clamp to the
/// end intervals.
pub fn bin_index(x: f64, cuts: &CutPoints) -> usize {
    if x < cuts.lower {
        return 0;
    }
    if x >= cuts.upper {
        return cuts.cuts.len();
    }
    cuts.cuts.partition_point(|&c| c <= x)
}

pub fn one_hot(x: f64, cuts: &CutPoints) -> Vec<f64> {
    let mut v = vec![0.0; cuts.n_intervals()];
    v[bin_index(x, cuts)] = 1.0;
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyConfig {
    overlap_fraction: f64,
}

impl FuzzyConfig {
    pub fn new(overlap_fraction: f64) -> Result<Self, DiscretizeError> {
        if overlap_fraction > 0.0 && overlap_fraction < 0.5 {
            Ok(FuzzyConfig { overlap_fraction })
        } else {
            Err(DiscretizeError::Overlap(overlap_fraction))
        }
    }

    pub fn overlap_fraction(&self) -> f64 {
        self.overlap_fraction
    }
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        FuzzyConfig { overlap_fraction: 0.2 }
    }
}

/// Trapezoidal memberships. Each interval keeps full weight on its central
/// `1 - 2·overlap` share; across the band around a cut the weight moves
/// linearly to the neighbour, reaching one half exactly at the cut.
pub fn fuzzy_memberships(x: f64, cuts: &CutPoints, config: &FuzzyConfig) -> Vec<f64> {
    let n = cuts.n_intervals();
    let mut w = vec![0.0; n];
    let i = bin_index(x, cuts);
    let f = config.overlap_fraction;
    let (start, end) = cuts.interval(i);
    let band = f * (end - start);

    if i + 1 < n && x > end - band {
        let share = 0.5 * (x - (end - band)) / band;
        w[i + 1] = share;
        w[i] = 1.0 - share;
    } else if i > 0 && x < start + band {
        let share = 0.5 * ((start + band) - x) / band;
        w[i - 1] = share;
        w[i] = 1.0 - share;
    } else {
        w[i] = 1.0;
    }
    w
}

/// Labeled samples `(x, class)` of a feature.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalConditional {
    samples: Vec<(f64, usize)>,
}

impl EmpiricalConditional {
    pub fn new(samples: Vec<(f64, usize)>) -> Result<Self, DiscretizeError> {
        if samples.is_empty() {
            return Err(DiscretizeError::EmptySample);
        }
        if let Some(&(x, _)) = samples.iter().find(|(x, _)| !x.is_finite()) {
            return Err(DiscretizeError::NonFinite(x));
        }
        Ok(EmpiricalConditional { samples })
    }

    pub fn samples(&self) -> &[(f64, usize)] {
        &self.samples
    }

    pub fn n_classes(&self) -> usize {
        self.samples.iter().map(|&(_, y)| y + 1).max().unwrap_or(0)
    }

    /// Distinct x values in ascending order with their class counts.
    fn groups(&self) -> Vec<(f64, Vec<usize>)> {
        let k = self.n_classes();
        let mut sorted = self.samples.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for (x, y) in sorted {
            match groups.last_mut() {
                Some((gx, counts)) if *gx == x => counts[y] += 1,
                _ => {
                    let mut counts = vec![0; k];
                    counts[y] += 1;
                    groups.push((x, counts));
                }
            }
        }
        groups
    }

    fn bounds(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)))
    }
}

/// Shannon entropy in bits of a class histogram.
pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn distinct_classes(counts: &[usize]) -> usize {
    counts.iter().filter(|&&c| c > 0).count()
}

fn pure_class(counts: &[usize]) -> Option<usize> {
    let mut nz = counts.iter().enumerate().filter(|(_, &c)| c > 0);
    let first = nz.next()?.0;
    nz.next().is_none().then_some(first)
}

/// The best binary split of a run of value groups.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub cut: f64,
    pub gain: f64,
    /// Index of the first group on the right-hand side.
    pub boundary: usize,
    pub mdl_accepts: bool,
}

fn best_split(groups: &[(f64, Vec<usize>)], offset: usize) -> Option<SplitCandidate> {
    if groups.len() < 2 {
        return None;
    }
    let k = groups[0].1.len();
    let mut total = vec![0usize; k];
    for (_, c) in groups {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    let n: usize = total.iter().sum();
    let parent = entropy(&total);

    let mut left = vec![0usize; k];
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for b in 1..groups.len() {
        for (l, v) in left.iter_mut().zip(&groups[b - 1].1) {
            *l += v;
        }
        let skip = match (pure_class(&groups[b - 1].1), pure_class(&groups[b].1)) {
            (Some(a), Some(c)) => a == c,
            _ => false,
        };
        if skip {
            continue;
        }
        let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let nl: usize = left.iter().sum();
        let nr = n - nl;
        let weighted = (nl as f64 * entropy(&left) + nr as f64 * entropy(&right)) / n as f64;
        if best.as_ref().is_none_or(|(w, _, _)| weighted < *w) {
            best = Some((weighted, b, left.clone()));
        }
    }
    let (weighted, b, left) = best?;
    let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
    let gain = parent - weighted;

    let nf = n as f64;
    let (kk, k1, k2) = (
        distinct_classes(&total) as f64,
        distinct_classes(&left) as f64,
        distinct_classes(&right) as f64,
    );
    let delta = (3f64.powf(kk) - 2.0).log2() - (kk * parent - k1 * entropy(&left) - k2 * entropy(&right));
    let threshold = ((nf - 1.0).log2() + delta) / nf;

    Some(SplitCandidate {
        cut: 0.5 * (groups[b - 1].0 + groups[b].0),
        gain,
        boundary: offset + b,
        mdl_accepts: gain > threshold,
    })
}

/// Information-gain argmax over the whole sample, with its MDL verdict.
pub fn rmep_first_split(data: &EmpiricalConditional) -> Option<SplitCandidate> {
    best_split(&data.groups(), 0)
}

/// Recursive minimal-entropy partitioning with MDL stopping. Pending splits
/// are applied highest-gain first so that a `max_bins` cap keeps the most
/// informative cuts.
pub fn fit_rmep(data: &EmpiricalConditional, max_bins: usize) -> Result<CutPoints, DiscretizeError> {
    if max_bins == 0 {
        return Err(DiscretizeError::NoBins);
    }
    let groups = data.groups();
    let (lower, upper) = data.bounds();
    let mut cuts = Vec::new();
    let mut pending: Vec<(usize, usize, SplitCandidate)> = Vec::new();
    let push = |lo: usize, hi: usize, pending: &mut Vec<(usize, usize, SplitCandidate)>| {
        if let Some(s) = best_split(&groups[lo..hi], lo) {
            if s.mdl_accepts {
                pending.push((lo, hi, s));
            }
        }
    };
    push(0, groups.len(), &mut pending);
    while cuts.len() + 1 < max_bins && !pending.is_empty() {
        let mut pick = 0;
        for (i, (_, _, s)) in pending.iter().enumerate() {
            let cur = &pending[pick].2;
            if s.gain > cur.gain || (s.gain == cur.gain && s.cut < cur.cut) {
                pick = i;
            }
        }
        let (lo, hi, s) = pending.swap_remove(pick);
        cuts.push(s.cut);
        push(lo, s.boundary, &mut pending);
        push(s.boundary, hi, &mut pending);
    }
    cuts.sort_by(f64::total_cmp);
    CutPoints::new(lower, upper, cuts)
}

/// Greedy realization of the epsilon partition: scanning ascending x, a cut
/// is placed just before the first value at which some class's empirical
/// CDF would grow by more than `epsilon` since the previous cut.
pub fn epsilon_partition(data: &EmpiricalConditional, epsilon: f64) -> Result<CutPoints, DiscretizeError> {
    if !(epsilon > 0.0) {
        return Err(DiscretizeError::Epsilon(epsilon));
    }
    let groups = data.groups();
    let (lower, upper) = data.bounds();
    let k = data.n_classes();
    let mut class_totals = vec![0usize; k];
    for &(_, y) in data.samples() {
        class_totals[y] += 1;
    }
    let mut current = vec![0usize; k];
    let mut cuts = Vec::new();
    for (gi, (x, counts)) in groups.iter().enumerate() {
        let overflow = (0..k).any(|y| {
            class_totals[y] > 0 && (current[y] + counts[y]) as f64 / class_totals[y] as f64 > epsilon
        });
        if overflow && current.iter().any(|&c| c > 0) {
            cuts.push(0.5 * (groups[gi - 1].0 + x));
            current.iter_mut().for_each(|c| *c = 0);
        }
        for (c, v) in current.iter_mut().zip(counts) {
            *c += v;
        }
    }
    CutPoints::new(lower, upper, cuts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscretizationMethod {
    EqualWidth { bins: usize },
    Rmep { max_bins: usize },
    Fuzzy { bins: usize, overlap: FuzzyConfig },
}

impl Default for DiscretizationMethod {
    fn default() -> Self {
        DiscretizationMethod::EqualWidth { bins: 20 }
    }
}

impl DiscretizationMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DiscretizationMethod::EqualWidth { .. } => "width",
            DiscretizationMethod::Rmep { .. } => "entropy",
            DiscretizationMethod::Fuzzy { .. } => "fuzzy",
        }
    }

    /// Fits cut points on training values. A constant feature gets a unit
    /// range so the equal-width fit stays defined.
    pub fn fit(&self, values: &[f64], labels: &[usize]) -> Result<CutPoints, DiscretizeError> {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if !lo.is_finite() || !hi.is_finite() {
            return Err(DiscretizeError::EmptySample);
        }
        let hi = if hi > lo { hi } else { lo + 1.0 };
        match *self {
            DiscretizationMethod::EqualWidth { bins } | DiscretizationMethod::Fuzzy { bins, .. } => {
                fit_equal_width(lo, hi, bins)
            }
            DiscretizationMethod::Rmep { max_bins } => {
                let data = EmpiricalConditional::new(values.iter().copied().zip(labels.iter().copied()).collect())?;
                fit_rmep(&data, max_bins)
            }
        }
    }

    /// Indicator (one-hot or fuzzy weight) vector for `x`.
    pub fn encode(&self, x: f64, cuts: &CutPoints) -> Vec<f64> {
        match self {
            DiscretizationMethod::Fuzzy { overlap, .. } => fuzzy_memberships(x, cuts, overlap),
            _ => one_hot(x, cuts),
        }
    }
}

/// Per-class count of samples in each interval, keyed by interval index.
pub fn interval_class_counts(data: &EmpiricalConditional, cuts: &CutPoints) -> BTreeMap<usize, Vec<usize>> {
    let k = data.n_classes();
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(x, y) in data.samples() {
        out.entry(bin_index(x, cuts)).or_insert_with(|| vec![0; k])[y] += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_width_cuts() {
        let c = fit_equal_width(0.0, 6.0, 3).unwrap();
        assert_eq!(c.cuts(), &[2.0, 4.0]);
        assert!(fit_equal_width(1.0, 9.0, 1).unwrap().cuts().is_empty());
        assert_eq!(bin_index(1.5, &c), 0);
        assert_eq!(bin_index(2.5, &c), 1);
        assert!(fit_equal_width(3.0, 3.0, 4).is_err());
        assert!(fit_equal_width(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn equal_width_intervals_share_width() {
        let c = fit_equal_width(-3.7, 12.9, 20).unwrap();
        let w0 = (12.9 - -3.7) / 20.0;
        for i in 0..c.n_intervals() {
            let (a, b) = c.interval(i);
            assert!(((b - a) - w0).abs() <= 1e-12 * w0.max(1.0) * 16.0, "interval {i}");
        }
    }

    #[test]
    fn fig2_binning() {
        let c = CutPoints::new(0.0, 3.0, vec![1.0, 2.0]).unwrap();
        assert_eq!(one_hot(1.5, &c), vec![0.0, 1.0, 0.0]);
        assert_eq!(one_hot(2.5, &c), vec![0.0, 0.0, 1.0]);
        assert_eq!(bin_index(-4.0, &c), 0);
        assert_eq!(bin_index(3.0, &c), 2);
        assert_eq!(bin_index(99.0, &c), 2);
    }

    #[test]
    fn cut_points_validate() {
        assert!(CutPoints::new(0.0, 3.0, vec![2.0, 1.0]).is_err());
        assert!(CutPoints::new(0.0, 3.0, vec![0.0]).is_err());
        assert!(CutPoints::new(0.0, 3.0, vec![3.0]).is_err());
    }

    #[test]
    fn fuzzy_center_and_cut() {
        let c = fit_equal_width(0.0, 3.0, 3).unwrap();
        let cfg = FuzzyConfig::default();
        assert_eq!(fuzzy_memberships(1.5, &c, &cfg), vec![0.0, 1.0, 0.0]);
        for (x, want) in [(1.0, [0.5, 0.5, 0.0]), (2.0, [0.0, 0.5, 0.5])] {
            let got = fuzzy_memberships(x, &c, &cfg);
            assert!(got.iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-12), "{got:?}");
        }
        assert_eq!(fuzzy_memberships(-1.0, &c, &cfg), vec![1.0, 0.0, 0.0]);
        assert!(FuzzyConfig::new(0.5).is_err());
        assert!(FuzzyConfig::new(0.0).is_err());
    }

    #[test]
    fn fuzzy_grid_sums_to_one() {
        let c = CutPoints::new(0.0, 10.0, vec![1.0, 2.5, 6.0, 9.0]).unwrap();
        for f in [0.01, 0.2, 0.49] {
            let cfg = FuzzyConfig::new(f).unwrap();
            for step in 0..=12_000 {
                let x = -1.0 + step as f64 * 1e-3;
                let w = fuzzy_memberships(x, &c, &cfg);
                let sum: f64 = w.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(w.iter().all(|&v| v >= 0.0));
                assert!(w.iter().filter(|&&v| v != 0.0).count() <= 2);
            }
        }
    }

    #[test]
    fn fuzzy_degrades_to_one_hot() {
        let c = fit_equal_width(0.0, 5.0, 5).unwrap();
        let cfg = FuzzyConfig::new(1e-6).unwrap();
        for step in 0..500 {
            let x = 0.005 + step as f64 * 0.01;
            assert_eq!(fuzzy_memberships(x, &c, &cfg), one_hot(x, &c), "x = {x}");
        }
    }

    #[test]
    fn rmep_separable_and_pure() {
        let mut s: Vec<(f64, usize)> = (0..10).map(|i| (i as f64 * 0.4, 0)).collect();
        s.extend((0..10).map(|i| (6.0 + i as f64 * 0.4, 1)));
        let data = EmpiricalConditional::new(s).unwrap();
        let cuts = fit_rmep(&data, 20).unwrap();
        assert_eq!(cuts.cuts(), &[(3.6 + 6.0) / 2.0]);

        let single = EmpiricalConditional::new((0..30).map(|i| (i as f64, 2)).collect()).unwrap();
        assert!(fit_rmep(&single, 20).unwrap().cuts().is_empty());

        let same_x = EmpiricalConditional::new(vec![(1.0, 0), (1.0, 1), (1.0, 0)]).unwrap();
        assert!(fit_rmep(&same_x, 20).unwrap().cuts().is_empty());
    }

    fn brute_gain_argmax(samples: &[(f64, usize)]) -> (f64, f64) {
        let mut xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        let k = samples.iter().map(|s| s.1).max().unwrap() + 1;
        let hist = |pred: &dyn Fn(f64) -> bool| {
            let mut h = vec![0usize; k];
            for s in samples.iter().filter(|s| pred(s.0)) {
                h[s.1] += 1;
            }
            h
        };
        let all = hist(&|_| true);
        let n = samples.len() as f64;
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for w in xs.windows(2) {
            let cut = (w[0] + w[1]) / 2.0;
            let l = hist(&|x| x < cut);
            let r = hist(&|x| x >= cut);
            let nl = l.iter().sum::<usize>() as f64;
            let gain = entropy(&all) - nl / n * entropy(&l) - (n - nl) / n * entropy(&r);
            if gain > best.0 + 1e-12 {
                best = (gain, cut);
            }
        }
        best
    }

    #[test]
    fn rmep_first_cut_matches_exhaustive_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..50 {
            let s: Vec<(f64, usize)> = (0..40)
                .map(|_| {
                    let y = rng.random_range(0..2);
                    (rng.random::<f64>() * 10.0 + y as f64 * 3.0, y)
                })
                .collect();
            let data = EmpiricalConditional::new(s.clone()).unwrap();
            let first = rmep_first_split(&data).unwrap();
            let (gain, cut) = brute_gain_argmax(&s);
            assert!((first.gain - gain).abs() < 1e-12);
            assert_eq!(first.cut, cut);
        }
    }

    #[test]
    fn rmep_respects_bin_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<(f64, usize)> = (0..600)
            .map(|_| {
                let y = rng.random_range(0..4);
                (y as f64 * 2.0 + rng.random::<f64>(), y)
            })
            .collect();
        let data = EmpiricalConditional::new(s).unwrap();
        assert_eq!(fit_rmep(&data, 20).unwrap().n_intervals(), 4);
        assert_eq!(fit_rmep(&data, 2).unwrap().n_intervals(), 2);
    }

    fn verify_epsilon(data: &EmpiricalConditional, cuts: &CutPoints, eps: f64) -> bool {
        let k = data.n_classes();
        let mut totals = vec![0usize; k];
        for &(_, y) in data.samples() {
            totals[y] += 1;
        }
        for i in 0..cuts.n_intervals() {
            let (a, b) = cuts.interval(i);
            let last = i + 1 == cuts.n_intervals();
            for y in 0..k {
                let inside = data
                    .samples()
                    .iter()
                    .filter(|&&(x, c)| c == y && x >= a && (x < b || (last && x <= b)))
                    .count();
                if totals[y] > 0 && inside as f64 / totals[y] as f64 > eps {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn epsilon_partition_cases() {
        let data = EmpiricalConditional::new((0..100).map(|i| (i as f64 * 0.37, 0)).collect()).unwrap();
        assert!(epsilon_partition(&data, 1.0).unwrap().cuts().is_empty());
        assert!(epsilon_partition(&data, 3.0).unwrap().cuts().is_empty());
        let c = epsilon_partition(&data, 0.25).unwrap();
        assert!(c.n_intervals() <= 4);
        for counts in interval_class_counts(&data, &c).values() {
            assert!(counts[0] <= 25);
        }
        assert!(epsilon_partition(&data, 0.0).is_err());
        assert!(epsilon_partition(&data, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn bin_index_is_monotone(a in -10.0..20.0f64, b in -10.0..20.0f64) {
            let c = fit_equal_width(0.0, 10.0, 7).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bin_index(lo, &c) <= bin_index(hi, &c));
        }

        #[test]
        fn epsilon_partition_bound_holds(
            seed in 0u64..10_000,
            n in 5usize..150,
            eps in 0.02f64..0.9,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<(f64, usize)> = (0..n).map(|_| (rng.random::<f64>() * 50.0, rng.random_range(0..3))).collect();
            // a single sample is an atom of mass 1/n_y; below that no
            // partition of an empirical CDF can satisfy the bound
            let rarest = (0..3).map(|y| s.iter().filter(|p| p.1 == y).count()).filter(|&c| c > 0).min().unwrap();
            prop_assume!(eps >= 1.0 / rarest as f64);
            let data = EmpiricalConditional::new(s).unwrap();
            let cuts = epsilon_partition(&data, eps).unwrap();
            prop_assert!(verify_epsilon(&data, &cuts, eps));
        }
    }
}
