use std::fs;

use trajnet_core::config::load_config;
use trajnet_core::geo::{ClassSet, Mode};
use trajnet_core::ingest::{read_dataset, write_plt};
use trajnet_core::model_io::{read_model, write_model};
use trajnet_core::pipeline::{evaluate_stage, ingest_stage, predict_stage, preprocess_stage, synth_stage, train_stage};
use trajnet_core::synth::{bouts, generate};

const CONFIG: &str = "\
[synth]
persons = 4
points_per_person = 400
seed = 21

[model]
hidden = 5
embedding_dim = 5
pieces = 2
bins = 10

[train]
max_epochs = 2
chunk_length = 60

[split]
sizes = [2, 1, 1]
candidates = 20
";

fn stamp(t: f64) -> String {
    chrono::DateTime::from_timestamp(t as i64, 0).unwrap().format("%Y/%m/%d %H:%M:%S").to_string()
}

#[test]
fn geolife_tree_matches_the_generator() {
    let c = load_config(CONFIG, &[]).unwrap();
    let data = generate(&c.config.synth_config().unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("Data");
    for lt in &data {
        let person = root.join(lt.person_id());
        fs::create_dir_all(person.join("Trajectory")).unwrap();
        fs::write(person.join("Trajectory").join("20081023120000.plt"), write_plt(&lt.trajectory)).unwrap();
        let mut labels = String::from("Start Time\tEnd Time\tTransportation Mode\n");
        for b in bouts(&lt.labels) {
            let (start, end) = (lt.points()[b.start].t(), lt.points()[b.end - 1].t() + 0.5);
            labels.push_str(&format!("{}\t{}\t{}\n", stamp(start), stamp(end.ceil()), lt.labels[b.start]));
        }
        labels.push_str("2001/01/01 00:00:00\t2001/01/01 01:00:00\tairplane\n");
        fs::write(person.join("labels.txt"), labels).unwrap();
    }
    // a person without labels is ignored
    fs::create_dir_all(root.join("999").join("Trajectory")).unwrap();

    let (text, report) = ingest_stage(dir.path(), &c.config, &c.echo).unwrap();
    assert_eq!(report.persons, 4);
    assert_eq!(report.files, 4);
    assert_eq!(report.points_read, 1600);
    assert_eq!(report.skipped_label_rows, 4);
    assert_eq!(report.unlabeled_dropped, 0);

    let back = read_dataset(&text, ClassSet::Four, 600.0).unwrap();
    assert_eq!(back, data);
    let from_synth = preprocess_stage(&synth_stage(&c.config, &c.echo).unwrap(), &c.config, &c.echo).unwrap();
    assert_eq!(preprocess_stage(&text, &c.config, &c.echo).unwrap(), from_synth);
}

#[test]
fn stages_chain_through_text() {
    let c = load_config(CONFIG, &[]).unwrap();
    let features = preprocess_stage(&synth_stage(&c.config, &c.echo).unwrap(), &c.config, &c.echo).unwrap();
    let (model_text, log) = train_stage(&features, &c.config, &c.echo, |_| {}).unwrap();
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let model = read_model(&model_text).unwrap();
    assert_eq!(write_model(&model, &c.echo), model_text);
    let split = model.split.as_ref().unwrap();
    assert_eq!((split.train.len(), split.validation.len(), split.test.len()), (2, 1, 1));

    for part in ["train", "validation", "test", "all"] {
        let (report, m) = evaluate_stage(&features, &model_text, part, &c.config, &c.echo).unwrap();
        assert!(report.contains(&format!("split {part}\n")));
        let expected = if part == "all" { 1600 } else if part == "train" { 800 } else { 400 };
        assert_eq!(m.confusion.total(), expected);
        assert!((0.0..=1.0).contains(&m.a_point) && (0.0..=1.0).contains(&m.a_distance));
        assert!(m.e_h > 0.0 && m.e_h.is_finite());
    }
    assert!(evaluate_stage(&features, &model_text, "holdout", &c.config, &c.echo).is_err());

    let (csv, geojson) = predict_stage(&features, &model_text, "test", &c.config, &c.echo).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 400);
    let (_, m) = evaluate_stage(&features, &model_text, "test", &c.config, &c.echo).unwrap();
    let correct = rows.iter().filter(|r| r.ends_with(",1")).count();
    assert!((correct as f64 / 400.0 - m.a_point).abs() < 1e-12);
    let parsed: serde_json::Value = serde_json::from_str(&geojson).unwrap();
    let feats = parsed["features"].as_array().unwrap();
    assert_eq!(feats.len(), 400);
    let flagged = feats.iter().filter(|f| f["properties"]["misclassified"] == true).count();
    assert_eq!(flagged, 400 - correct);
    let modes: Vec<Mode> = ClassSet::Four.modes().to_vec();
    assert!(feats.iter().all(|f| modes.iter().any(|m| f["properties"]["predicted"] == m.to_string().as_str())));
}

#[test]
fn seven_class_features_do_not_load_under_four() {
    let c7 = load_config(CONFIG, &["data.classes=7".into()]).unwrap();
    let mut text = preprocess_stage(&synth_stage(&c7.config, &c7.echo).unwrap(), &c7.config, &c7.echo).unwrap();
    text = text.replacen(",walk,", ",subway,", 1);
    let c4 = load_config(CONFIG, &[]).unwrap();
    let err = train_stage(&text, &c4.config, &c4.echo, |_| {}).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
