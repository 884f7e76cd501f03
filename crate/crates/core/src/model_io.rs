//! Self-describing text container for a trained model.
//!
//! ```text
//! trajnet-model 1
//! # ...config echo...
//! classes 4
//! features v_p v_avg v_sd
//! encoding width 20
//! network maxout 5 layers 2 hidden 50 embedding 50 bias 0 init 0.1
//! chunk 100
//! split train 000 003 ...
//! cuts v_p <lower> <upper> <n> <c_1> ... <c_n>
//! tensor embed.gate.0 2 21 50
//! <row-major values, one row per line>
//! end
//! ```
//!
//! Values use the shortest decimal form that parses back to the same `f64`,
//! so a write/read/write cycle is byte-stable.

use std::fmt::Write as _;

use thiserror::Error;

use crate::discretize::{CutPoints, DiscretizationMethod, DiscretizeError, FuzzyConfig};
use crate::encoding::{Encoder, EncodingError, FeatureEncoder};
use crate::geo::ClassSet;
use crate::ingest::DatasetSplit;
use crate::linalg::ShapeError;
use crate::preprocess::FeatureVector;
use crate::rnn::{Candidate, NetworkParams, NetworkSpec};

pub const FORMAT: &str = "trajnet-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing `{0}` entry")]
    Missing(&'static str),
    #[error("unsupported model format `{0}`")]
    Format(String),
    #[error("tensor `{name}`: expected {expected:?}, file has {found:?}")]
    TensorShape { name: String, expected: (usize, usize), found: (usize, usize) },
    #[error("tensor `{0}` missing from file")]
    TensorMissing(String),
    #[error("unexpected tensor `{0}`")]
    TensorUnknown(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Everything needed to run inference on new feature records.
#[derive(Debug, Clone)]
pub struct Model {
    pub classes: ClassSet,
    pub encoder: FeatureEncoder,
    pub spec: NetworkSpec,
    pub chunk_length: usize,
    pub split: Option<DatasetSplit>,
    pub params: NetworkParams,
}

fn candidate_name(c: Candidate) -> &'static str {
    match c {
        Candidate::Tanh => "tanh",
        Candidate::Maxout => "maxout",
    }
}

/// Serializes `model`; each line of `echo` is written as a `#` comment.
pub fn write_model(model: &Model, echo: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT} {VERSION}");
    for line in echo.lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "classes {}", model.classes.len());
    let names: Vec<&str> = model.encoder.features().iter().map(|&f| FeatureVector::NAMES[f]).collect();
    let _ = writeln!(out, "features {}", names.join(" "));
    match model.encoder.encoder() {
        Encoder::Discretized { method, .. } => match method {
            DiscretizationMethod::EqualWidth { bins } => {
                let _ = writeln!(out, "encoding width {bins}");
            }
            DiscretizationMethod::Rmep { max_bins } => {
                let _ = writeln!(out, "encoding entropy {max_bins}");
            }
            DiscretizationMethod::Fuzzy { bins, overlap } => {
                let _ = writeln!(out, "encoding fuzzy {bins} {}", overlap.overlap_fraction());
            }
        },
        Encoder::Standardized { .. } => out.push_str("encoding raw\n"),
    }
    let s = &model.spec;
    let dim = match &s.input {
        crate::rnn::InputSpec::Embedded { dim, .. } => *dim,
        crate::rnn::InputSpec::Raw { .. } => 0,
    };
    let _ = writeln!(
        out,
        "network {} {} layers {} hidden {} embedding {} bias {} init {}",
        candidate_name(s.candidate),
        s.pieces,
        s.layers,
        s.hidden,
        dim,
        u8::from(s.bias),
        s.init_range
    );
    let _ = writeln!(out, "chunk {}", model.chunk_length);
    if let Some(split) = &model.split {
        for (name, ids) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
            let _ = write!(out, "split {name}");
            for id in ids {
                let _ = write!(out, " {id}");
            }
            out.push('\n');
        }
    }
    match model.encoder.encoder() {
        Encoder::Discretized { cuts, .. } => {
            for (name, c) in names.iter().zip(cuts) {
                let _ = write!(out, "cuts {name} {} {} {}", c.lower(), c.upper(), c.cuts().len());
                for v in c.cuts() {
                    let _ = write!(out, " {v}");
                }
                out.push('\n');
            }
        }
        Encoder::Standardized { mean, sd } => {
            for ((name, m), d) in names.iter().zip(mean).zip(sd) {
                let _ = writeln!(out, "norm {name} {m} {d}");
            }
        }
    }
    for (name, m) in model.params.tensors() {
        let _ = writeln!(out, "tensor {name} 2 {} {}", m.rows(), m.cols());
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    /// Next non-comment line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            let line = raw.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Some((i + 1, line));
            }
        }
        None
    }
}

fn syntax(line: usize, message: impl Into<String>) -> ModelIoError {
    ModelIoError::Syntax { line, message: message.into() }
}

fn parse<T: std::str::FromStr>(line: usize, s: Option<&str>, what: &str) -> Result<T, ModelIoError> {
    let s = s.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    s.parse().map_err(|_| syntax(line, format!("bad {what} `{s}`")))
}

fn feature_index(line: usize, name: &str) -> Result<usize, ModelIoError> {
    FeatureVector::NAMES
        .iter()
        .position(|&n| n == name)
        .ok_or_else(|| syntax(line, format!("unknown feature `{name}`")))
}

pub fn read_model(text: &str) -> Result<Model, ModelIoError> {
    let mut lines = Lines { inner: text.lines().enumerate().peekable() };
    let (n, first) = lines.next().ok_or(ModelIoError::Missing(FORMAT))?;
    let mut head = first.split_whitespace();
    if head.next() != Some(FORMAT) {
        return Err(ModelIoError::Format(first.to_string()));
    }
    let version: u32 = parse(n, head.next(), "version")?;
    if version != VERSION {
        return Err(ModelIoError::Format(format!("{FORMAT} {version}")));
    }

    let mut classes = None;
    let mut features: Option<Vec<usize>> = None;
    let mut method: Option<Option<DiscretizationMethod>> = None;
    let mut network = None;
    let mut chunk = None;
    let mut split_parts: Vec<(String, Vec<String>)> = Vec::new();
    let mut cuts = Vec::new();
    let mut norms = Vec::new();
    let mut tensors: Vec<(String, usize, usize, Vec<f64>)> = Vec::new();
    let mut ended = false;

    while let Some((n, line)) = lines.next() {
        let mut tok = line.split_whitespace();
        let key = tok.next().unwrap_or_default();
        match key {
            "classes" => {
                let c: usize = parse(n, tok.next(), "class count")?;
                classes = Some(ClassSet::from_count(c).ok_or_else(|| syntax(n, format!("unsupported class count {c}")))?);
            }
            "features" => {
                features = Some(tok.map(|t| feature_index(n, t)).collect::<Result<_, _>>()?);
            }
            "encoding" => {
                let kind = tok.next().unwrap_or_default();
                method = Some(match kind {
                    "raw" => None,
                    "width" => Some(DiscretizationMethod::EqualWidth { bins: parse(n, tok.next(), "bins")? }),
                    "entropy" => Some(DiscretizationMethod::Rmep { max_bins: parse(n, tok.next(), "bins")? }),
                    "fuzzy" => {
                        let bins = parse(n, tok.next(), "bins")?;
                        let overlap = FuzzyConfig::new(parse(n, tok.next(), "overlap")?)?;
                        Some(DiscretizationMethod::Fuzzy { bins, overlap })
                    }
                    other => return Err(syntax(n, format!("unknown encoding `{other}`"))),
                });
            }
            "network" => {
                let candidate = match tok.next() {
                    Some("tanh") => Candidate::Tanh,
                    Some("maxout") => Candidate::Maxout,
                    other => return Err(syntax(n, format!("unknown cell `{}`", other.unwrap_or_default()))),
                };
                let pieces: usize = parse(n, tok.next(), "pieces")?;
                let mut kv = |k: &str| -> Result<f64, ModelIoError> {
                    match tok.next() {
                        Some(t) if t == k => parse(n, tok.next(), k),
                        _ => Err(syntax(n, format!("expected `{k}`"))),
                    }
                };
                let layers = kv("layers")? as usize;
                let hidden = kv("hidden")? as usize;
                let dim = kv("embedding")? as usize;
                let bias = kv("bias")? != 0.0;
                let init = kv("init")?;
                network = Some((candidate, pieces, layers, hidden, dim, bias, init));
            }
            "chunk" => chunk = Some(parse::<usize>(n, tok.next(), "chunk length")?),
            "split" => {
                let name = tok.next().ok_or_else(|| syntax(n, "missing split name"))?.to_string();
                split_parts.push((name, tok.map(str::to_string).collect()));
            }
            "cuts" => {
                let f = feature_index(n, tok.next().unwrap_or_default())?;
                let lower = parse(n, tok.next(), "lower bound")?;
                let upper = parse(n, tok.next(), "upper bound")?;
                let count: usize = parse(n, tok.next(), "cut count")?;
                let values = tok.map(|t| parse(n, Some(t), "cut")).collect::<Result<Vec<f64>, _>>()?;
                if values.len() != count {
                    return Err(syntax(n, format!("{count} cuts declared, {} given", values.len())));
                }
                cuts.push((f, CutPoints::new(lower, upper, values)?));
            }
            "norm" => {
                let f = feature_index(n, tok.next().unwrap_or_default())?;
                let mean: f64 = parse(n, tok.next(), "mean")?;
                let sd: f64 = parse(n, tok.next(), "sd")?;
                norms.push((f, mean, sd));
            }
            "tensor" => {
                let name = tok.next().ok_or_else(|| syntax(n, "missing tensor name"))?.to_string();
                let ndims: usize = parse(n, tok.next(), "ndims")?;
                if ndims != 2 {
                    return Err(syntax(n, format!("expected 2 dims, got {ndims}")));
                }
                let rows: usize = parse(n, tok.next(), "rows")?;
                let cols: usize = parse(n, tok.next(), "cols")?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (rn, row) = lines.next().ok_or_else(|| syntax(n, format!("tensor `{name}` truncated")))?;
                    let before = data.len();
                    for t in row.split_whitespace() {
                        data.push(parse::<f64>(rn, Some(t), "value")?);
                    }
                    if data.len() - before != cols {
                        return Err(syntax(rn, format!("expected {cols} values, found {}", data.len() - before)));
                    }
                }
                tensors.push((name, rows, cols, data));
            }
            "end" => {
                ended = true;
                break;
            }
            other => return Err(syntax(n, format!("unknown entry `{other}`"))),
        }
    }
    if !ended {
        return Err(ModelIoError::Missing("end"));
    }

    let classes = classes.ok_or(ModelIoError::Missing("classes"))?;
    let features = features.ok_or(ModelIoError::Missing("features"))?;
    let method = method.ok_or(ModelIoError::Missing("encoding"))?;
    let (candidate, pieces, layers, hidden, dim, bias, init_range) = network.ok_or(ModelIoError::Missing("network"))?;
    let chunk_length = chunk.ok_or(ModelIoError::Missing("chunk"))?;

    let encoder = match method {
        Some(method) => {
            let ordered = features
                .iter()
                .map(|f| cuts.iter().find(|(g, _)| g == f).map(|(_, c)| c.clone()))
                .collect::<Option<Vec<_>>>()
                .ok_or(ModelIoError::Missing("cuts"))?;
            FeatureEncoder::new(features, Encoder::Discretized { method, cuts: ordered })?
        }
        None => {
            let mut mean = Vec::new();
            let mut sd = Vec::new();
            for f in &features {
                let (_, m, s) = norms.iter().find(|(g, ..)| g == f).ok_or(ModelIoError::Missing("norm"))?;
                mean.push(*m);
                sd.push(*s);
            }
            FeatureEncoder::new(features, Encoder::Standardized { mean, sd })?
        }
    };

    let spec = NetworkSpec {
        input: encoder.input_spec(dim),
        hidden,
        layers,
        candidate,
        pieces,
        classes: classes.len(),
        bias,
        init_range,
    };
    let mut params = NetworkParams::new(&spec, 0)?;
    let expected: Vec<(String, (usize, usize))> =
        params.tensors().into_iter().map(|(name, m)| (name, m.shape())).collect();
    if let Some((name, ..)) = tensors.iter().find(|(name, ..)| !expected.iter().any(|(e, _)| e == name)) {
        return Err(ModelIoError::TensorUnknown(name.clone()));
    }
    for ((name, shape), slot) in expected.into_iter().zip(params.tensors_mut()) {
        let (_, rows, cols, data) = tensors
            .iter()
            .find(|(t, ..)| *t == name)
            .ok_or_else(|| ModelIoError::TensorMissing(name.clone()))?;
        if (*rows, *cols) != shape {
            return Err(ModelIoError::TensorShape { name, expected: shape, found: (*rows, *cols) });
        }
        slot.as_mut_slice().copy_from_slice(data);
    }

    let split = if split_parts.is_empty() {
        None
    } else {
        let take = |name: &str| -> Result<Vec<String>, ModelIoError> {
            split_parts
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, ids)| ids.clone())
                .ok_or(ModelIoError::Missing("split"))
        };
        Some(DatasetSplit { train: take("train")?, validation: take("validation")?, test: take("test")? })
    };

    Ok(Model { classes, encoder, spec, chunk_length, split, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rnn::InputSpec;

    fn embedded_model(method: DiscretizationMethod) -> Model {
        let rows: Vec<FeatureVector> = (0..60)
            .map(|i| FeatureVector { v_p: (i % 13) as f64 * 0.7, v_avg: (i % 5) as f64, v_sd: 0.1 * i as f64 })
            .collect();
        let labels: Vec<usize> = (0..60).map(|i| (i % 13) / 4).collect();
        let encoder = FeatureEncoder::fit_discretized(method, &[0, 2], &rows, &labels).unwrap();
        let spec = NetworkSpec {
            input: encoder.input_spec(3),
            hidden: 2,
            layers: 2,
            candidate: Candidate::Maxout,
            pieces: 2,
            classes: 4,
            bias: true,
            init_range: 0.1,
        };
        let params = NetworkParams::new(&spec, 11).unwrap();
        let split = DatasetSplit {
            train: vec!["000".into(), "002".into()],
            validation: vec!["001".into()],
            test: vec![],
        };
        Model { classes: ClassSet::Four, encoder, spec, chunk_length: 40, split: Some(split), params }
    }

    fn assert_same(a: &Model, b: &Model) {
        assert_eq!(a.classes, b.classes);
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.chunk_length, b.chunk_length);
        assert_eq!(a.split, b.split);
        let ta = a.params.tensors();
        let tb = b.params.tensors();
        assert_eq!(ta.len(), tb.len());
        for ((na, ma), (nb, mb)) in ta.iter().zip(&tb) {
            assert_eq!(na, nb);
            assert_eq!(ma, mb, "{na}");
        }
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        for method in [
            DiscretizationMethod::EqualWidth { bins: 7 },
            DiscretizationMethod::Rmep { max_bins: 5 },
            DiscretizationMethod::Fuzzy { bins: 4, overlap: FuzzyConfig::new(0.25).unwrap() },
        ] {
            let m = embedded_model(method);
            let text = write_model(&m, "seed = 3\n[model]");
            let back = read_model(&text).unwrap();
            assert_same(&m, &back);
            assert_eq!(write_model(&back, "seed = 3\n[model]"), text);
        }
    }

    #[test]
    fn raw_model_round_trips() {
        let encoder = FeatureEncoder::new(
            vec![0, 1],
            Encoder::Standardized { mean: vec![1.0 / 3.0, -2.5e-7], sd: vec![0.1, 7.0] },
        )
        .unwrap();
        let spec = NetworkSpec {
            input: InputSpec::Raw { features: 2 },
            hidden: 3,
            layers: 1,
            candidate: Candidate::Tanh,
            pieces: 1,
            classes: 7,
            bias: false,
            init_range: 0.05,
        };
        let params = NetworkParams::new(&spec, 1).unwrap();
        let m = Model { classes: ClassSet::Seven, encoder, spec, chunk_length: 100, split: None, params };
        let text = write_model(&m, "");
        assert!(text.contains("encoding raw"));
        assert_same(&m, &read_model(&text).unwrap());
    }

    #[test]
    fn awkward_values_survive() {
        let mut m = embedded_model(DiscretizationMethod::EqualWidth { bins: 3 });
        let w: &mut Matrix = &mut m.params.output;
        w.set(0, 0, f64::MIN_POSITIVE);
        w.set(0, 1, -0.0);
        w.set(1, 0, 1e300);
        w.set(1, 1, 0.1 + 0.2);
        let back = read_model(&write_model(&m, "")).unwrap();
        assert_eq!(back.params.output.as_slice(), m.params.output.as_slice());
        assert!(back.params.output.get(0, 1).is_sign_negative());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let text = write_model(&embedded_model(DiscretizationMethod::EqualWidth { bins: 3 }), "");
        assert!(matches!(read_model("nope 1\n"), Err(ModelIoError::Format(_))));
        assert!(matches!(read_model(&text.replace("trajnet-model 1", "trajnet-model 9")), Err(ModelIoError::Format(_))));
        assert!(matches!(read_model(&text.replace("end\n", "")), Err(ModelIoError::Missing("end"))));
        let renamed = text.replace("tensor output.bias", "tensor output.extra");
        assert!(matches!(read_model(&renamed), Err(ModelIoError::TensorUnknown(_))));
        let reshaped = text.replace("tensor output.bias 2 4 1", "tensor output.bias 2 1 4");
        assert!(read_model(&reshaped).is_err());
        let no_cuts: String = text.lines().filter(|l| !l.starts_with("cuts v_sd")).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_model(&no_cuts), Err(ModelIoError::Missing("cuts"))));
    }

    #[test]
    fn comments_are_ignored() {
        let m = embedded_model(DiscretizationMethod::EqualWidth { bins: 3 });
        let text = write_model(&m, "classes = 7\ntensor fake");
        assert!(text.contains("# classes = 7\n"));
        assert_same(&m, &read_model(&text).unwrap());
    }
}
