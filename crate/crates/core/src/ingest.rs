//! Raw GeoLife files, per-point label attachment, the canonical dataset
//! format and the stratified person-level split.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geo::{ClassSet, GeoError, GpsPoint, Mode, Trajectory};

const PLT_HEADER_LINES: usize = 6;
/// Days between 1899-12-30 and 1970-01-01, the PLT day-count origin.
const PLT_EPOCH_OFFSET_DAYS: f64 = 25_569.0;

pub const DEFAULT_SLOBO_CANDIDATES: usize = 10_000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("PLT input has {0} header lines, expected at least 6")]
    MissingHeader(usize),
    #[error("line {line}: label interval ends at or before its start")]
    EmptyInterval { line: usize },
    #[error("split sizes {sizes:?} do not sum to the {persons} available persons")]
    SplitSize {
        sizes: (usize, usize, usize),
        persons: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

fn malformed(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Malformed {
        line,
        message: message.into(),
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn to_epoch_seconds(dt: NaiveDateTime) -> f64 {
    dt.and_utc().timestamp() as f64
}

/// A parsed PLT file. Records whose timestamp does not advance are dropped.
#[derive(Debug, Clone)]
pub struct ParsedPlt {
    pub trajectory: Trajectory,
    pub out_of_order: usize,
}

pub fn parse_plt(text: &str, person_id: &str) -> Result<ParsedPlt, IngestError> {
    let mut lines = text.lines().enumerate();
    let mut header = 0;
    while header < PLT_HEADER_LINES {
        match lines.next() {
            Some(_) => header += 1,
            None => return Err(IngestError::MissingHeader(header)),
        }
    }

    let mut points: Vec<GpsPoint> = Vec::new();
    let mut out_of_order = 0;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 7 {
            return Err(malformed(line_no, format!("expected 7 fields, found {}", fields.len())));
        }
        let lat: f64 = fields[0]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad latitude `{}`", fields[0])))?;
        let lon: f64 = fields[1]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad longitude `{}`", fields[1])))?;
        let date = NaiveDate::parse_from_str(fields[5], "%Y-%m-%d")
            .map_err(|_| malformed(line_no, format!("bad date `{}`", fields[5])))?;
        let time = NaiveTime::parse_from_str(fields[6], "%H:%M:%S")
            .map_err(|_| malformed(line_no, format!("bad time `{}`", fields[6])))?;
        let t = to_epoch_seconds(date.and_time(time));
        let point = GpsPoint::new(lat, lon, t).map_err(|e| malformed(line_no, e.to_string()))?;
        if points.last().is_some_and(|prev| prev.t() >= t) {
            out_of_order += 1;
            continue;
        }
        points.push(point);
    }
    Ok(ParsedPlt {
        trajectory: Trajectory::new(person_id, points)?,
        out_of_order,
    })
}

/// Renders a trajectory in PLT layout. Timestamps are written at whole-second
/// resolution.
pub fn write_plt(traj: &Trajectory) -> String {
    let mut out = String::from(
        "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n",
    );
    for p in traj.points() {
        let secs = p.t().floor() as i64;
        let dt = DateTime::from_timestamp(secs, 0).expect("timestamp in chrono range").naive_utc();
        let days = p.t() / 86_400.0 + PLT_EPOCH_OFFSET_DAYS;
        let _ = writeln!(
            out,
            "{},{},0,0,{},{},{}",
            p.lat(),
            p.lon(),
            days,
            dt.format("%Y-%m-%d"),
            dt.format("%H:%M:%S")
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelInterval {
    pub start: f64,
    pub end: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedLabels {
    pub intervals: Vec<LabelInterval>,
    /// Rows whose mode is outside the active class set.
    pub skipped: usize,
}

pub fn parse_labels(text: &str, classes: ClassSet) -> Result<ParsedLabels, IngestError> {
    let mut parsed = ParsedLabels::default();
    for (idx, raw) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(malformed(line_no, "expected StartTime, EndTime and Mode columns"));
        }
        let stamp = |s: &str| {
            NaiveDateTime::parse_from_str(s, "%Y/%m/%d %H:%M:%S")
                .map(to_epoch_seconds)
                .map_err(|_| malformed(line_no, format!("bad timestamp `{s}`")))
        };
        let start = stamp(fields[0])?;
        let end = stamp(fields[1])?;
        if end <= start {
            return Err(IngestError::EmptyInterval { line: line_no });
        }
        match classes.parse(fields[2]) {
            Some(mode) => parsed.intervals.push(LabelInterval { start, end, mode }),
            None => parsed.skipped += 1,
        }
    }
    Ok(parsed)
}

/// A trajectory with one mode per point.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub trajectory: Trajectory,
    pub labels: Vec<Mode>,
}

impl LabeledTrajectory {
    pub fn new(trajectory: Trajectory, labels: Vec<Mode>) -> Result<Self, IngestError> {
        if trajectory.len() != labels.len() {
            return Err(malformed(
                0,
                format!("{} labels for {} points", labels.len(), trajectory.len()),
            ));
        }
        Ok(LabeledTrajectory { trajectory, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn person_id(&self) -> &str {
        &self.trajectory.person_id
    }

    pub fn points(&self) -> &[GpsPoint] {
        self.trajectory.points()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttachStats {
    /// Points outside every interval.
    pub dropped: usize,
    /// Retained points covered by more than one interval.
    pub overlapping: usize,
}

/// Labels every point covered by an interval (start inclusive, end
/// exclusive) and drops the rest. Where intervals overlap, the one with the
/// later start wins.
pub fn attach_labels(traj: &Trajectory, intervals: &[LabelInterval]) -> (LabeledTrajectory, AttachStats) {
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut max_end = Vec::with_capacity(sorted.len());
    let mut running = f64::NEG_INFINITY;
    for iv in &sorted {
        running = running.max(iv.end);
        max_end.push(running);
    }

    let mut stats = AttachStats::default();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for p in traj.points() {
        let t = p.t();
        let upto = sorted.partition_point(|iv| iv.start <= t);
        let mut winner = None;
        let mut hits = 0;
        for j in (0..upto).rev() {
            if max_end[j] <= t {
                break;
            }
            if sorted[j].end > t {
                hits += 1;
                winner.get_or_insert(sorted[j].mode);
            }
        }
        match winner {
            Some(mode) => {
                if hits > 1 {
                    stats.overlapping += 1;
                }
                points.push(*p);
                labels.push(mode);
            }
            None => stats.dropped += 1,
        }
    }
    let trajectory = Trajectory::new(traj.person_id.clone(), points).expect("subsequence stays ordered");
    (LabeledTrajectory { trajectory, labels }, stats)
}

/// Train/validation/test person sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn part(&self, name: &str) -> Option<&[String]> {
        match name {
            "train" => Some(&self.train),
            "validation" | "val" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonModeCounts {
    pub person_id: String,
    pub counts: Vec<usize>,
}

/// Largest absolute gap between any subset's mode proportions and the global
/// proportions. Empty subsets score infinity.
pub fn split_deviation(persons: &[PersonModeCounts], split: &DatasetSplit) -> f64 {
    let n_classes = persons.iter().map(|p| p.counts.len()).max().unwrap_or(0);
    let totals = |ids: &[String]| {
        let mut acc = vec![0usize; n_classes];
        for p in persons.iter().filter(|p| ids.contains(&p.person_id)) {
            for (a, c) in acc.iter_mut().zip(&p.counts) {
                *a += c;
            }
        }
        acc
    };
    let proportions = |counts: &[usize]| -> Option<Vec<f64>> {
        let sum: usize = counts.iter().sum();
        (sum > 0).then(|| counts.iter().map(|&c| c as f64 / sum as f64).collect())
    };
    let all: Vec<String> = persons.iter().map(|p| p.person_id.clone()).collect();
    let Some(global) = proportions(&totals(&all)) else {
        return 0.0;
    };
    let mut worst: f64 = 0.0;
    for part in [&split.train, &split.validation, &split.test] {
        match proportions(&totals(part)) {
            Some(local) => {
                for (l, g) in local.iter().zip(&global) {
                    worst = worst.max((l - g).abs());
                }
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

/// The seeded candidate assignments that [`slobo_split`] chooses among.
pub fn slobo_candidates(
    persons: &[PersonModeCounts],
    sizes: (usize, usize, usize),
    seed: u64,
    n_candidates: usize,
) -> Result<Vec<DatasetSplit>, IngestError> {
    let (n_train, n_val, n_test) = sizes;
    if n_train + n_val + n_test != persons.len() {
        return Err(IngestError::SplitSize {
            sizes,
            persons: persons.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<String> = persons.iter().map(|p| p.person_id.clone()).collect();
    let mut out = Vec::with_capacity(n_candidates);
    for _ in 0..n_candidates.max(1) {
        ids.shuffle(&mut rng);
        let part = |range: std::ops::Range<usize>| {
            let mut v = ids[range].to_vec();
            v.sort();
            v
        };
        out.push(DatasetSplit {
            train: part(0..n_train),
            validation: part(n_train..n_train + n_val),
            test: part(n_train + n_val..ids.len()),
        });
    }
    Ok(out)
}

/// Best-of-N stratified split: among `n_candidates` seeded random
/// assignments, the one whose subsets' mode proportions stay closest to the
/// global proportions. Ties keep the earliest candidate.
pub fn slobo_split(
    persons: &[PersonModeCounts],
    sizes: (usize, usize, usize),
    seed: u64,
    n_candidates: usize,
) -> Result<DatasetSplit, IngestError> {
    let candidates = slobo_candidates(persons, sizes, seed, n_candidates)?;
    let mut best: Option<(f64, DatasetSplit)> = None;
    for cand in candidates {
        let dev = split_deviation(persons, &cand);
        if best.as_ref().is_none_or(|(b, _)| dev < *b) {
            best = Some((dev, cand));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Per-person point counts in class-index order.
pub fn person_mode_counts(trajectories: &[LabeledTrajectory], classes: ClassSet) -> Vec<PersonModeCounts> {
    let mut by_person: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for lt in trajectories {
        let counts = by_person
            .entry(lt.person_id())
            .or_insert_with(|| vec![0; classes.len()]);
        for m in &lt.labels {
            if let Some(i) = classes.index_of(*m) {
                counts[i] += 1;
            }
        }
    }
    by_person
        .into_iter()
        .map(|(id, counts)| PersonModeCounts {
            person_id: id.to_string(),
            counts,
        })
        .collect()
}

/// Canonical dataset: one `person_id,lat,lon,t,mode` record per point.
pub const DATASET_HEADER: &str = "person_id,lat,lon,t,mode";

pub fn write_dataset(trajectories: &[LabeledTrajectory], out: &mut String) {
    out.push_str(DATASET_HEADER);
    out.push('\n');
    for lt in trajectories {
        for (p, m) in lt.points().iter().zip(&lt.labels) {
            let _ = writeln!(out, "{},{},{},{},{}", lt.person_id(), p.lat(), p.lon(), p.t(), m);
        }
    }
}

/// Reads canonical records and regroups them into trajectories: a new
/// trajectory begins whenever the person changes, time fails to advance, or
/// the gap between fixes exceeds `max_gap_s`. Lines starting with `#` are
/// ignored.
pub fn read_dataset(text: &str, classes: ClassSet, max_gap_s: f64) -> Result<Vec<LabeledTrajectory>, IngestError> {
    let mut out = Vec::new();
    let mut person = String::new();
    let mut points: Vec<GpsPoint> = Vec::new();
    let mut labels: Vec<Mode> = Vec::new();

    let mut flush = |person: &str, points: &mut Vec<GpsPoint>, labels: &mut Vec<Mode>| -> Result<(), IngestError> {
        if !points.is_empty() {
            let traj = Trajectory::new(person.to_string(), std::mem::take(points))?;
            out.push(LabeledTrajectory::new(traj, std::mem::take(labels))?);
        }
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == DATASET_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(malformed(line_no, format!("expected 5 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| malformed(line_no, format!("bad {what} `{s}`")))
        };
        let point = GpsPoint::new(num(f[1], "latitude")?, num(f[2], "longitude")?, num(f[3], "timestamp")?)
            .map_err(|e| malformed(line_no, e.to_string()))?;
        let mode = classes
            .parse(f[4])
            .ok_or_else(|| malformed(line_no, format!("mode `{}` not in the active class set", f[4])))?;
        let breaks = f[0] != person
            || points
                .last()
                .is_some_and(|prev| point.t() <= prev.t() || point.t() - prev.t() > max_gap_s);
        if breaks {
            flush(&person, &mut points, &mut labels)?;
            person = f[0].to_string();
        }
        points.push(point);
        labels.push(mode);
    }
    flush(&person, &mut points, &mut labels)?;
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub persons: usize,
    pub files: usize,
    pub points_read: usize,
    pub out_of_order: usize,
    pub unlabeled_dropped: usize,
    pub overlapping_labels: usize,
    pub skipped_label_rows: usize,
}

/// Walks a GeoLife tree (`<root>/[Data/]<person>/{labels.txt,Trajectory/*.plt}`).
/// Persons without a labels file are ignored.
pub fn ingest_geolife(root: &Path, classes: ClassSet) -> Result<(Vec<LabeledTrajectory>, IngestReport), IngestError> {
    let base = if root.join("Data").is_dir() {
        root.join("Data")
    } else {
        root.to_path_buf()
    };
    let mut person_dirs: Vec<_> = fs::read_dir(&base)
        .map_err(io_err(&base))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("labels.txt").is_file())
        .collect();
    person_dirs.sort();

    let mut report = IngestReport::default();
    let mut out = Vec::new();
    for dir in person_dirs {
        let person = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let labels_path = dir.join("labels.txt");
        let labels_text = fs::read_to_string(&labels_path).map_err(io_err(&labels_path))?;
        let labels = parse_labels(&labels_text, classes)?;
        report.skipped_label_rows += labels.skipped;
        report.persons += 1;

        let traj_dir = dir.join("Trajectory");
        let mut files: Vec<_> = match fs::read_dir(&traj_dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("plt")))
                .collect(),
            Err(_) => Vec::new(),
        };
        files.sort();
        for file in files {
            let text = fs::read_to_string(&file).map_err(io_err(&file))?;
            let parsed = parse_plt(&text, &person).map_err(|e| match e {
                IngestError::Malformed { line, message } => malformed(line, format!("{}: {message}", file.display())),
                other => other,
            })?;
            report.files += 1;
            report.points_read += parsed.trajectory.len();
            report.out_of_order += parsed.out_of_order;
            let (lt, stats) = attach_labels(&parsed.trajectory, &labels.intervals);
            report.unlabeled_dropped += stats.dropped;
            report.overlapping_labels += stats.overlapping;
            if !lt.is_empty() {
                out.push(lt);
            }
        }
    }
    Ok((out, report))
}
