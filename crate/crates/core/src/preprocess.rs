//! Outlier filtering, segmentation and per-point feature extraction.

use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

use crate::geo::{bearing, haversine_distance, point_speed, ClassSet, GpsPoint, Mode};
use crate::ingest::LabeledTrajectory;

/// MAD to standard deviation under a normal model.
pub const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("invalid {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },
    #[error("unknown segmentation strategy `{0}`")]
    UnknownStrategy(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HampelConfig {
    pub half_width: usize,
    pub n_mad: f64,
}

impl Default for HampelConfig {
    fn default() -> Self {
        HampelConfig {
            half_width: 3,
            n_mad: 3.0,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Replaces values farther than `n_mad · 1.4826 · MAD` from their centered
/// window median by that median. Windows are truncated at the ends.
pub fn hampel_filter(series: &[f64], half_width: usize, n_mad: f64) -> Result<Vec<f64>, PreprocessError> {
    if half_width == 0 {
        return Err(PreprocessError::InvalidParameter {
            what: "Hampel half-width",
            value: 0.0,
        });
    }
    if !(n_mad > 0.0) {
        return Err(PreprocessError::InvalidParameter {
            what: "Hampel threshold",
            value: n_mad,
        });
    }
    let n = series.len();
    let mut out = Vec::with_capacity(n);
    let mut window = Vec::with_capacity(2 * half_width + 1);
    for i in 0..n {
        let lo = i.saturating_sub(half_width);
        let hi = (i + half_width + 1).min(n);
        window.clear();
        window.extend_from_slice(&series[lo..hi]);
        let med = median(&mut window);
        for w in window.iter_mut() {
            *w = (*w - med).abs();
        }
        let mad = median(&mut window);
        let x = series[i];
        out.push(if (x - med).abs() > n_mad * MAD_SCALE * mad { med } else { x });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    /// Threshold in seconds.
    Time,
    /// Threshold in meters.
    Distance,
    /// Threshold in degrees of heading change.
    Bearing,
    /// Fixed number of points.
    Window,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Time => "time",
            SegmentKind::Distance => "distance",
            SegmentKind::Bearing => "bearing",
            SegmentKind::Window => "window",
        }
    }

    pub fn default_parameter(self) -> f64 {
        match self {
            SegmentKind::Time => 60.0,
            SegmentKind::Distance => 200.0,
            SegmentKind::Bearing => 30.0,
            SegmentKind::Window => 20.0,
        }
    }
}

impl std::str::FromStr for SegmentKind {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "time" => Ok(SegmentKind::Time),
            "distance" => Ok(SegmentKind::Distance),
            "bearing" => Ok(SegmentKind::Bearing),
            "window" => Ok(SegmentKind::Window),
            other => Err(PreprocessError::UnknownStrategy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationStrategy {
    kind: SegmentKind,
    parameter: f64,
}

impl SegmentationStrategy {
    pub fn new(kind: SegmentKind, parameter: f64) -> Result<Self, PreprocessError> {
        let valid = parameter > 0.0
            && parameter.is_finite()
            && (kind != SegmentKind::Window || parameter.fract() == 0.0);
        if !valid {
            return Err(PreprocessError::InvalidParameter {
                what: "segmentation threshold",
                value: parameter,
            });
        }
        Ok(SegmentationStrategy { kind, parameter })
    }

    pub fn kind(&self) -> SegmentKind {
        self.kind
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }
}

impl Default for SegmentationStrategy {
    fn default() -> Self {
        SegmentationStrategy {
            kind: SegmentKind::Bearing,
            parameter: 30.0,
        }
    }
}

/// Signed heading change folded into (-180, 180].
pub fn bearing_change(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Splits `0..points.len()` into ordered, disjoint, covering ranges.
pub fn segment_points(points: &[GpsPoint], strategy: &SegmentationStrategy) -> Vec<Range<usize>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let thr = strategy.parameter;
    let mut cuts = Vec::new();
    match strategy.kind {
        SegmentKind::Window => {
            let w = thr as usize;
            cuts.extend((w..n).step_by(w));
        }
        SegmentKind::Time => {
            let mut start_t = points[0].t();
            for (i, p) in points.iter().enumerate().skip(1) {
                if p.t() - start_t > thr {
                    cuts.push(i);
                    start_t = p.t();
                }
            }
        }
        SegmentKind::Distance => {
            let mut acc = 0.0;
            for i in 1..n {
                acc += haversine_distance(&points[i - 1], &points[i]);
                if acc > thr {
                    cuts.push(i);
                    acc = 0.0;
                }
            }
        }
        SegmentKind::Bearing => {
            // a cut at vertex i starts a new segment at i, whose outgoing leg
            // has the new heading; zero-length legs keep the previous heading
            let mut prev: Option<f64> = None;
            for i in 0..n.saturating_sub(1) {
                if let Ok(b) = bearing(&points[i], &points[i + 1]) {
                    if let Some(pb) = prev {
                        if bearing_change(pb, b).abs() > thr {
                            cuts.push(i);
                        }
                    }
                    prev = Some(b);
                }
            }
        }
    }
    let mut ranges = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts {
        ranges.push(start..c);
        start = c;
    }
    ranges.push(start..n);
    ranges
}

pub fn segment(traj: &LabeledTrajectory, strategy: &SegmentationStrategy) -> Vec<Range<usize>> {
    segment_points(traj.points(), strategy)
}

/// Mean and population standard deviation; empty input gives `(0, 0)`.
pub fn speed_stats(speeds: &[f64]) -> (f64, f64) {
    if speeds.is_empty() {
        return (0.0, 0.0);
    }
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    let var = speeds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(v_avg, v_sd)` over the legs between consecutive points of `range`.
pub fn segment_stats(traj: &LabeledTrajectory, range: Range<usize>) -> (f64, f64) {
    let pts = &traj.points()[range];
    let speeds: Vec<f64> = pts
        .windows(2)
        .map(|w| point_speed(&w[0], &w[1]).unwrap_or(0.0))
        .collect();
    speed_stats(&speeds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub point_range: Range<usize>,
    pub v_avg: f64,
    pub v_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub v_p: f64,
    pub v_avg: f64,
    pub v_sd: f64,
}

impl FeatureVector {
    pub const NAMES: [&'static str; 3] = ["v_p", "v_avg", "v_sd"];

    pub fn get(&self, index: usize) -> f64 {
        match index {
            0 => self.v_p,
            1 => self.v_avg,
            2 => self.v_sd,
            _ => panic!("feature index {index} out of range"),
        }
    }
}

/// Per-point features together with the segments they were derived from.
pub fn featurize_with_segments(
    traj: &LabeledTrajectory,
    strategy: &SegmentationStrategy,
    filter: Option<HampelConfig>,
) -> Result<(Vec<FeatureVector>, Vec<Segment>), PreprocessError> {
    let pts = traj.points();
    let n = pts.len();
    match n {
        0 => return Ok((Vec::new(), Vec::new())),
        1 => {
            let zero = FeatureVector { v_p: 0.0, v_avg: 0.0, v_sd: 0.0 };
            let seg = Segment { point_range: 0..1, v_avg: 0.0, v_sd: 0.0 };
            return Ok((vec![zero], vec![seg]));
        }
        _ => {}
    }
    let mut v_p: Vec<f64> = pts
        .windows(2)
        .map(|w| point_speed(&w[0], &w[1]).unwrap_or(0.0))
        .collect();
    v_p.push(v_p[n - 2]);
    if let Some(cfg) = filter {
        v_p = hampel_filter(&v_p, cfg.half_width, cfg.n_mad)?;
    }

    let mut features = Vec::with_capacity(n);
    let mut segments = Vec::new();
    for range in segment_points(pts, strategy) {
        // legs inside the range are indexed by their starting point
        let legs = &v_p[range.start..range.end - 1];
        let (v_avg, v_sd) = speed_stats(legs);
        for i in range.clone() {
            features.push(FeatureVector { v_p: v_p[i], v_avg, v_sd });
        }
        segments.push(Segment {
            point_range: range,
            v_avg,
            v_sd,
        });
    }
    Ok((features, segments))
}

pub fn featurize(
    traj: &LabeledTrajectory,
    strategy: &SegmentationStrategy,
    filter: Option<HampelConfig>,
) -> Result<Vec<FeatureVector>, PreprocessError> {
    featurize_with_segments(traj, strategy, filter).map(|(f, _)| f)
}

/// One line of the feature file. The first six columns are
/// `person_id,t,v_p,v_avg,v_sd,mode`; position, trajectory and segment
/// indices follow so later stages can weight by distance and export maps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub person_id: String,
    pub t: f64,
    pub features: FeatureVector,
    pub mode: Mode,
    pub lat: f64,
    pub lon: f64,
    pub trajectory: usize,
    pub segment: usize,
}

pub const FEATURE_HEADER: &str = "person_id,t,v_p,v_avg,v_sd,mode,lat,lon,trajectory,segment";

/// Featurizes every trajectory; trajectory indices count up per person.
pub fn feature_records(
    trajectories: &[LabeledTrajectory],
    strategy: &SegmentationStrategy,
    filter: Option<HampelConfig>,
) -> Result<Vec<FeatureRecord>, PreprocessError> {
    let mut out = Vec::new();
    let mut last_person: Option<&str> = None;
    let mut traj_idx = 0;
    for lt in trajectories {
        if last_person == Some(lt.person_id()) {
            traj_idx += 1;
        } else {
            traj_idx = 0;
            last_person = Some(lt.person_id());
        }
        let (features, segments) = featurize_with_segments(lt, strategy, filter)?;
        for (seg_idx, seg) in segments.iter().enumerate() {
            for i in seg.point_range.clone() {
                let p = lt.points()[i];
                out.push(FeatureRecord {
                    person_id: lt.person_id().to_string(),
                    t: p.t(),
                    features: features[i],
                    mode: lt.labels[i],
                    lat: p.lat(),
                    lon: p.lon(),
                    trajectory: traj_idx,
                    segment: seg_idx,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_feature_records(records: &[FeatureRecord], out: &mut String) {
    out.push_str(FEATURE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.person_id,
            r.t,
            r.features.v_p,
            r.features.v_avg,
            r.features.v_sd,
            r.mode,
            r.lat,
            r.lon,
            r.trajectory,
            r.segment
        );
    }
}

pub fn read_feature_records(text: &str, classes: ClassSet) -> Result<Vec<FeatureRecord>, PreprocessError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == FEATURE_HEADER {
            continue;
        }
        let bad = |message: String| PreprocessError::Malformed { line: line_no, message };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 10 {
            return Err(bad(format!("expected 10 fields, found {}", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(format!("bad number `{}`", f[i])));
        let int = |i: usize| f[i].parse::<usize>().map_err(|_| bad(format!("bad index `{}`", f[i])));
        let mode = classes
            .parse(f[5])
            .ok_or_else(|| bad(format!("mode `{}` not in the active class set", f[5])))?;
        out.push(FeatureRecord {
            person_id: f[0].to_string(),
            t: num(1)?,
            features: FeatureVector {
                v_p: num(2)?,
                v_avg: num(3)?,
                v_sd: num(4)?,
            },
            mode,
            lat: num(6)?,
            lon: num(7)?,
            trajectory: int(8)?,
            segment: int(9)?,
        });
    }
    Ok(out)
}
