//! End-to-end stages over in-memory text artifacts. Each stage output is a
//! pure function of its inputs and configuration, and starts with the
//! configuration echo.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::encoding::{EncodingError, FeatureEncoder};
use crate::eval::{leg_weights, EvalError, Metrics};
use crate::geo::{ClassSet, GeoError, GpsPoint, Mode};
use crate::ingest::{
    ingest_geolife, read_dataset, slobo_split, write_dataset, DatasetSplit, IngestError, IngestReport,
    PersonModeCounts,
};
use crate::linalg::{Matrix, ShapeError};
use crate::model_io::{read_model, write_model, Model, ModelIoError};
use crate::preprocess::{feature_records, read_feature_records, write_feature_records, FeatureRecord, PreprocessError};
use crate::rnn::{predict_classes, NetworkParams, NetworkSpec};
use crate::synth::{generate, SynthError};
use crate::train::{infer, train_with, EpochRecord, LabeledSequence, TrainError, TrainOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("configuration mismatch: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("model file: {0}")]
    ModelIo(#[from] ModelIoError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

impl PipelineError {
    /// 1 for usage and configuration problems, 2 for bad data, 3 for
    /// numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Mismatch(_) => 1,
            PipelineError::Train(TrainError::Divergence { .. } | TrainError::ValidationDivergence { .. }) => 3,
            PipelineError::Train(TrainError::Config { .. }) => 1,
            PipelineError::Preprocess(PreprocessError::InvalidParameter { .. } | PreprocessError::UnknownStrategy(_)) => 1,
            PipelineError::Synth(SynthError::Profile { .. } | SynthError::Setting(_)) => 1,
            _ => 2,
        }
    }
}

fn header(echo: &str) -> String {
    let mut s = String::new();
    for line in echo.lines() {
        let _ = writeln!(s, "# {line}");
    }
    s
}

pub fn synth_stage(cfg: &PipelineConfig, echo: &str) -> Result<String, PipelineError> {
    let data = generate(&cfg.synth_config()?)?;
    let mut out = header(echo);
    write_dataset(&data, &mut out);
    Ok(out)
}

pub fn ingest_stage(root: &Path, cfg: &PipelineConfig, echo: &str) -> Result<(String, IngestReport), PipelineError> {
    let (data, report) = ingest_geolife(root, cfg.class_set()?)?;
    let mut out = header(echo);
    write_dataset(&data, &mut out);
    Ok((out, report))
}

pub fn preprocess_stage(dataset: &str, cfg: &PipelineConfig, echo: &str) -> Result<String, PipelineError> {
    let records = preprocess_records(dataset, cfg)?;
    let mut out = header(echo);
    write_feature_records(&records, &mut out);
    Ok(out)
}

pub fn preprocess_records(dataset: &str, cfg: &PipelineConfig) -> Result<Vec<FeatureRecord>, PipelineError> {
    let data = read_dataset(dataset, cfg.class_set()?, cfg.data.max_gap_s)?;
    if data.is_empty() {
        return Err(PipelineError::Data("dataset has no records".into()));
    }
    Ok(feature_records(&data, &cfg.segmentation()?, cfg.hampel()?)?)
}

/// A run of records sharing person and trajectory, with its segment ranges
/// relative to the run start.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSequence {
    pub person_id: String,
    pub records: Range<usize>,
    pub segments: Vec<Range<usize>>,
}

pub fn group_sequences(records: &[FeatureRecord]) -> Vec<RecordSequence> {
    let mut out: Vec<RecordSequence> = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        let boundary = i == records.len()
            || records[i].person_id != records[start].person_id
            || records[i].trajectory != records[start].trajectory;
        if !boundary {
            continue;
        }
        let mut segments = Vec::new();
        let mut s = start;
        for j in start + 1..=i {
            if j == i || records[j].segment != records[s].segment {
                segments.push(s - start..j - start);
                s = j;
            }
        }
        out.push(RecordSequence { person_id: records[start].person_id.clone(), records: start..i, segments });
        start = i;
    }
    out
}

fn person_counts(records: &[FeatureRecord], classes: ClassSet) -> Vec<PersonModeCounts> {
    let mut by_person: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for r in records {
        let counts = by_person.entry(&r.person_id).or_insert_with(|| vec![0; classes.len()]);
        if let Some(i) = classes.index_of(r.mode) {
            counts[i] += 1;
        }
    }
    by_person
        .into_iter()
        .map(|(id, counts)| PersonModeCounts { person_id: id.to_string(), counts })
        .collect()
}

/// Person-level split of the records following the split section.
pub fn split_records(records: &[FeatureRecord], cfg: &PipelineConfig) -> Result<DatasetSplit, PipelineError> {
    let persons = person_counts(records, cfg.class_set()?);
    let sizes = cfg.split.sizes_for(persons.len())?;
    Ok(slobo_split(&persons, sizes, cfg.split.seed, cfg.split.candidates)?)
}

fn targets(records: &[FeatureRecord], classes: ClassSet) -> Vec<usize> {
    records
        .iter()
        .map(|r| classes.index_of(r.mode).expect("records are read against the class set"))
        .collect()
}

fn select<'a>(sequences: &'a [RecordSequence], persons: &[String]) -> Vec<&'a RecordSequence> {
    sequences.iter().filter(|s| persons.contains(&s.person_id)).collect()
}

fn labeled(
    records: &[FeatureRecord],
    sequences: &[&RecordSequence],
    encoder: &FeatureEncoder,
    classes: ClassSet,
) -> Result<Vec<LabeledSequence>, PipelineError> {
    sequences
        .iter()
        .map(|s| {
            let recs = &records[s.records.clone()];
            let rows: Vec<_> = recs.iter().map(|r| r.features).collect();
            Ok(LabeledSequence::new(encoder.encode(&rows), targets(recs, classes))?)
        })
        .collect()
}

/// Result of the training stage.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub outcome: TrainOutcome,
}

/// Splits, fits the encoder on training persons, and trains the network.
pub fn train_records(
    records: &[FeatureRecord],
    cfg: &PipelineConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<Trained, PipelineError> {
    let classes = cfg.class_set()?;
    let split = split_records(records, cfg)?;
    let sequences = group_sequences(records);
    let train_seqs = select(&sequences, &split.train);
    let val_seqs = select(&sequences, &split.validation);

    let features = cfg.features()?;
    let train_rows: Vec<FeatureRecord> =
        train_seqs.iter().flat_map(|s| records[s.records.clone()].iter().cloned()).collect();
    let rows: Vec<_> = train_rows.iter().map(|r| r.features).collect();
    let encoder = if cfg.embedded()? {
        FeatureEncoder::fit_discretized(cfg.discretization()?, &features, &rows, &targets(&train_rows, classes))?
    } else if cfg.model.standardize_raw {
        FeatureEncoder::fit_standardized(&features, &rows)?
    } else {
        FeatureEncoder::identity(&features)?
    };

    let m = &cfg.model;
    let spec = NetworkSpec {
        input: encoder.input_spec(m.embedding_dim),
        hidden: m.hidden,
        layers: m.layers,
        candidate: cfg.candidate()?,
        pieces: m.pieces,
        classes: classes.len(),
        bias: m.bias,
        init_range: m.init_range,
    };
    let train_cfg = cfg.train_config()?;
    let params = NetworkParams::new(&spec, train_cfg.seed)?;
    let train_set = labeled(records, &train_seqs, &encoder, classes)?;
    let val_set = labeled(records, &val_seqs, &encoder, classes)?;
    let outcome = train_with(&train_set, &val_set, params, &train_cfg, on_epoch)?;
    let model = Model {
        classes,
        encoder,
        spec,
        chunk_length: train_cfg.chunk_length,
        split: Some(split),
        params: outcome.params.clone(),
    };
    Ok(Trained { model, outcome })
}

/// The learning-curve log: one CSV line per epoch after the echo.
pub fn render_log(log: &[EpochRecord], best_epoch: usize, echo: &str) -> String {
    let mut out = header(echo);
    out.push_str(EpochRecord::HEADER);
    out.push('\n');
    for r in log {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    let _ = writeln!(out, "# best epoch {best_epoch}");
    out
}

/// Model file and learning-curve log.
pub fn train_stage(
    features: &str,
    cfg: &PipelineConfig,
    echo: &str,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(String, String), PipelineError> {
    let records = read_feature_records(features, cfg.class_set()?)?;
    let trained = train_records(&records, cfg, on_epoch)?;
    let model = write_model(&trained.model, echo);
    let log = render_log(&trained.outcome.log, trained.outcome.best_epoch, echo);
    Ok((model, log))
}

fn check_classes(model: &Model, cfg: &PipelineConfig) -> Result<ClassSet, PipelineError> {
    let classes = cfg.class_set()?;
    if classes != model.classes {
        return Err(PipelineError::Mismatch(format!(
            "model was trained on {} classes, configuration selects {}",
            model.classes.len(),
            classes.len()
        )));
    }
    Ok(classes)
}

/// Persons of `part` (`train`, `validation`, `test`) or every person for `all`.
fn part_sequences<'a>(
    model: &Model,
    sequences: &'a [RecordSequence],
    part: &str,
) -> Result<Vec<&'a RecordSequence>, PipelineError> {
    if part == "all" {
        return Ok(sequences.iter().collect());
    }
    let split = model
        .split
        .as_ref()
        .ok_or_else(|| PipelineError::Mismatch(format!("model has no stored split, cannot select `{part}`")))?;
    let persons = split
        .part(part)
        .ok_or_else(|| PipelineError::Mismatch(format!("unknown split `{part}` (use train, validation, test or all)")))?;
    Ok(select(sequences, persons))
}

/// Per-point outputs of a model over a set of sequences.
#[derive(Debug, Clone)]
pub struct Predictions {
    pub record_indices: Vec<usize>,
    pub targets: Vec<usize>,
    pub predicted: Vec<usize>,
    pub log_probs: Matrix,
    pub weights: Vec<f64>,
}

pub fn predict_records(
    records: &[FeatureRecord],
    model: &Model,
    part: &str,
) -> Result<Predictions, PipelineError> {
    let sequences = group_sequences(records);
    let chosen = part_sequences(model, &sequences, part)?;
    if chosen.is_empty() {
        return Err(PipelineError::Data(format!("no records belong to split `{part}`")));
    }
    let mut record_indices = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut weights = Vec::new();
    for s in &chosen {
        let recs = &records[s.records.clone()];
        let features: Vec<_> = recs.iter().map(|r| r.features).collect();
        let lp = infer(&model.params, &model.encoder.encode(&features), model.chunk_length)?;
        rows.extend_from_slice(lp.as_slice());
        let points = recs
            .iter()
            .map(|r| GpsPoint::new(r.lat, r.lon, r.t))
            .collect::<Result<Vec<_>, _>>()?;
        weights.extend(leg_weights(&points, &s.segments)?);
        record_indices.extend(s.records.clone());
    }
    let log_probs = Matrix::from_vec(record_indices.len(), model.classes.len(), rows)?;
    let chosen_records: Vec<FeatureRecord> = record_indices.iter().map(|&i| records[i].clone()).collect();
    Ok(Predictions {
        targets: targets(&chosen_records, model.classes),
        predicted: predict_classes(&log_probs),
        log_probs,
        weights,
        record_indices,
    })
}

pub fn evaluate_records(records: &[FeatureRecord], model: &Model, part: &str) -> Result<Metrics, PipelineError> {
    let p = predict_records(records, model, part)?;
    Ok(Metrics::compute(&p.targets, &p.log_probs, &p.predicted, &p.weights)?)
}

fn class_names(classes: ClassSet) -> Vec<String> {
    classes.modes().iter().map(Mode::to_string).collect()
}

/// Metrics report for one split.
pub fn evaluate_stage(
    features: &str,
    model_text: &str,
    part: &str,
    cfg: &PipelineConfig,
    echo: &str,
) -> Result<(String, Metrics), PipelineError> {
    let model = read_model(model_text)?;
    let classes = check_classes(&model, cfg)?;
    let records = read_feature_records(features, classes)?;
    let metrics = evaluate_records(&records, &model, part)?;
    let names = class_names(classes);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut out = header(echo);
    let _ = writeln!(out, "split {part}");
    let _ = writeln!(out, "points {}", metrics.confusion.total());
    out.push('\n');
    out.push_str(&metrics.render(&refs));
    Ok((out, metrics))
}

pub const PREDICTION_HEADER: &str = "person_id,t,lat,lon,mode,predicted,correct";

/// Fixed colors per mode for map export.
pub fn mode_color(mode: Mode) -> &'static str {
    match mode {
        Mode::Walk => "#2ca02c",
        Mode::Bike => "#ff7f0e",
        Mode::Bus => "#1f77b4",
        Mode::Car => "#d62728",
        Mode::Train => "#9467bd",
        Mode::Subway => "#8c564b",
        Mode::Airplane => "#17becf",
    }
}

/// Per-point prediction CSV, and GeoJSON points colored by predicted mode
/// with misclassified points flagged.
pub fn predict_stage(
    features: &str,
    model_text: &str,
    part: &str,
    cfg: &PipelineConfig,
    echo: &str,
) -> Result<(String, String), PipelineError> {
    let model = read_model(model_text)?;
    let classes = check_classes(&model, cfg)?;
    let records = read_feature_records(features, classes)?;
    let p = predict_records(&records, &model, part)?;
    let mut csv = header(echo);
    csv.push_str(PREDICTION_HEADER);
    csv.push('\n');
    let mut points = Vec::with_capacity(p.record_indices.len());
    for (k, &i) in p.record_indices.iter().enumerate() {
        let r = &records[i];
        let predicted = classes.mode(p.predicted[k]);
        let correct = p.predicted[k] == p.targets[k];
        let _ = writeln!(csv, "{},{},{},{},{},{},{}", r.person_id, r.t, r.lat, r.lon, r.mode, predicted, u8::from(correct));
        points.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": [r.lon, r.lat] },
            "properties": {
                "person_id": r.person_id,
                "t": r.t,
                "mode": r.mode.to_string(),
                "predicted": predicted.to_string(),
                "correct": correct,
                "misclassified": !correct,
                "marker-color": mode_color(predicted),
            },
        }));
    }
    let collection = json!({
        "type": "FeatureCollection",
        "config": echo,
        "features": points,
    });
    Ok((csv, collection.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_config;
    use crate::preprocess::FeatureVector;

    fn record(person: &str, trajectory: usize, segment: usize) -> FeatureRecord {
        FeatureRecord {
            person_id: person.into(),
            t: 0.0,
            features: FeatureVector { v_p: 1.0, v_avg: 1.0, v_sd: 0.0 },
            mode: Mode::Walk,
            lat: 39.9,
            lon: 116.3,
            trajectory,
            segment,
        }
    }

    #[test]
    fn sequences_break_on_person_and_trajectory() {
        let recs = vec![
            record("a", 0, 0),
            record("a", 0, 0),
            record("a", 0, 1),
            record("a", 1, 0),
            record("b", 1, 0),
            record("b", 1, 0),
        ];
        let s = group_sequences(&recs);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].records, 0..3);
        assert_eq!(s[0].segments, vec![0..2, 2..3]);
        assert_eq!(s[1].records, 3..4);
        assert_eq!(s[1].segments, vec![0..1]);
        assert_eq!(s[2].person_id, "b");
        assert_eq!(s[2].segments, vec![0..2]);
        assert!(group_sequences(&[]).is_empty());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Mismatch("x".into()).exit_code(), 1);
        assert_eq!(PipelineError::Data("x".into()).exit_code(), 2);
        assert_eq!(PipelineError::Train(TrainError::Divergence { epoch: 1, batch: 1 }).exit_code(), 3);
        assert_eq!(PipelineError::Train(TrainError::ValidationDivergence { epoch: 2 }).exit_code(), 3);
        assert_eq!(PipelineError::Config(load_config("[x", &[]).unwrap_err()).exit_code(), 1);
    }

    #[test]
    fn echo_heads_every_text_artifact() {
        let c = load_config("[synth]\npersons = 2\npoints_per_person = 50\n", &[]).unwrap();
        let data = synth_stage(&c.config, &c.echo).unwrap();
        assert!(data.starts_with("# [synth]\n# persons = 2\n# points_per_person = 50\nperson_id,lat,lon,t,mode\n"));
        let feats = preprocess_stage(&data, &c.config, &c.echo).unwrap();
        assert!(feats.starts_with("# [synth]\n"));
        assert_eq!(read_feature_records(&feats, ClassSet::Four).unwrap().len(), 100);
        let log = render_log(&[], 0, &c.echo);
        assert!(log.starts_with("# [synth]\n"));
    }
}
