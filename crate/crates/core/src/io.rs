//! JSON and CSV formats for networks, queries, results and bench rows.
//!
//! Doubles are written in shortest round-trip form, so saving and reloading
//! reproduces every weight bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diffzono::Mode;
use crate::error::{Error, Result};
use crate::network::{Activation, Layer, Network};
use crate::properties::PropertySpec;
use crate::refine::{Budget, Counterexample, Status, VerificationResult};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(what: impl Into<String>, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        what: what.into(),
        message: e.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkFile<L> {
    name: String,
    input_dim: usize,
    layers: Vec<L>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: Activation,
}

pub fn network_from_json(text: &str) -> Result<Network> {
    let file: NetworkFile<Value> = serde_json::from_str(text).map_err(|e| parse_err("network", e))?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, raw) in file.layers.into_iter().enumerate() {
        let what = format!("layers[{i}]");
        let l: LayerFile = serde_json::from_value(raw).map_err(|e| parse_err(&what, e))?;
        let cols = l.weights.first().map_or(0, Vec::len);
        if let Some(r) = l.weights.iter().position(|row| row.len() != cols) {
            return Err(parse_err(
                format!("{what}.weights"),
                format!("row {r} has {} entries, row 0 has {cols}", l.weights[r].len()),
            ));
        }
        let rows = l.weights.len();
        let flat: Vec<f64> = l.weights.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((rows, cols), flat).map_err(|e| parse_err(format!("{what}.weights"), e))?;
        let layer = Layer::new(weights, Array1::from(l.bias), l.activation)
            .map_err(|e| parse_err(&what, e))?;
        layers.push(layer);
    }
    Network::new(file.name, file.input_dim, layers).map_err(|e| parse_err("network", e))
}

pub fn network_to_json(net: &Network) -> String {
    let file = NetworkFile {
        name: net.name.clone(),
        input_dim: net.input_dim(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerFile {
                weights: l.weights.outer_iter().map(|r| r.to_vec()).collect(),
                bias: l.bias.to_vec(),
                activation: l.activation,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("network serializes");
    s.push('\n');
    s
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    network_from_json(&read(path)?).map_err(|e| match e {
        Error::Parse { what, message } => Error::Parse {
            what: format!("{}: {what}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &network_to_json(net))
}

/// A fully validated verification query.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub property: PropertySpec,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub budget: Budget,
    pub mode: Mode,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

/// Query JSON as written on disk, before validation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawQuery {
    pub property: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub input: RawInput,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_splits: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

pub fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "diff" => Ok(Mode::Diff),
        "naive" => Ok(Mode::Naive),
        other => Err(Error::input("mode", format!("expected \"diff\" or \"naive\", got {other:?}"))),
    }
}

pub fn parse_property(name: &str, epsilon: Option<f64>, delta: Option<f64>) -> Result<PropertySpec> {
    let spec = match name {
        "epsilon" => {
            if delta.is_some() {
                return Err(Error::input("delta", "not allowed for property \"epsilon\""));
            }
            PropertySpec::Epsilon {
                epsilon: epsilon.ok_or_else(|| Error::input("epsilon", "required for property \"epsilon\""))?,
            }
        }
        "top1" => {
            if epsilon.is_some() || delta.is_some() {
                return Err(Error::input("property", "\"top1\" takes neither epsilon nor delta"));
            }
            PropertySpec::Top1
        }
        "delta_top1" => {
            if epsilon.is_some() {
                return Err(Error::input("epsilon", "not allowed for property \"delta_top1\""));
            }
            PropertySpec::DeltaTop1 {
                delta: delta.ok_or_else(|| Error::input("delta", "required for property \"delta_top1\""))?,
            }
        }
        other => {
            return Err(Error::input(
                "property",
                format!("expected \"epsilon\", \"top1\" or \"delta_top1\", got {other:?}"),
            ))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// Resolves either input form to `(lower, upper)`.
pub fn input_box(input: &RawInput) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lower, upper) = match (&input.center, &input.radius, &input.lower, &input.upper) {
        (Some(c), Some(r), None, None) => {
            if c.len() != r.len() {
                return Err(Error::input("input.radius", format!("length {} differs from center length {}", r.len(), c.len())));
            }
            if let Some(i) = r.iter().position(|v| !(*v >= 0.0)) {
                return Err(Error::input(format!("input.radius[{i}]"), "must be >= 0"));
            }
            (
                c.iter().zip(r).map(|(c, r)| c - r).collect(),
                c.iter().zip(r).map(|(c, r)| c + r).collect(),
            )
        }
        (None, None, Some(l), Some(u)) => (l.clone(), u.clone()),
        (None, None, None, None) => {
            return Err(Error::input("input", "requires {center, radius} or {lower, upper}"))
        }
        _ => {
            return Err(Error::input(
                "input",
                "give exactly one of {center, radius} or {lower, upper}",
            ))
        }
    };
    if lower.len() != upper.len() {
        return Err(Error::input("input.upper", format!("length {} differs from lower length {}", upper.len(), lower.len())));
    }
    for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
        if !(l.is_finite() && u.is_finite() && l <= u) {
            return Err(Error::input(format!("input[{i}]"), format!("requires finite lower <= upper, got [{l}, {u}]")));
        }
    }
    Ok((lower, upper))
}

impl RawQuery {
    pub fn resolve(&self) -> Result<QuerySpec> {
        let property = parse_property(&self.property, self.epsilon, self.delta)?;
        let (lower, upper) = input_box(&self.input)?;
        let defaults = Budget::default();
        let budget = Budget {
            timeout_s: self.timeout_s.unwrap_or(defaults.timeout_s),
            max_splits: self.max_splits.unwrap_or(defaults.max_splits),
        };
        budget.validate()?;
        let mode = self.mode.as_deref().map_or(Ok(Mode::Diff), parse_mode)?;
        Ok(QuerySpec {
            property,
            lower,
            upper,
            budget,
            mode,
        })
    }
}

pub fn raw_query_from_json(text: &str) -> Result<RawQuery> {
    serde_json::from_str(text).map_err(|e| parse_err("query", e))
}

pub fn query_from_json(text: &str) -> Result<QuerySpec> {
    raw_query_from_json(text)?.resolve()
}

pub fn load_raw_query(path: impl AsRef<Path>) -> Result<RawQuery> {
    raw_query_from_json(&read(path.as_ref())?)
}

pub fn load_query(path: impl AsRef<Path>) -> Result<QuerySpec> {
    load_raw_query(path)?.resolve()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub status: Status,
    pub counterexample: Option<Counterexample>,
    pub splits: u64,
    pub lp_calls: u64,
    pub time_s: f64,
    pub verified_volume_fraction: f64,
}

impl From<&VerificationResult> for ResultRecord {
    fn from(r: &VerificationResult) -> Self {
        Self {
            status: r.status,
            counterexample: r.counterexample.clone(),
            splits: r.stats.splits,
            lp_calls: r.stats.lp_calls,
            time_s: r.stats.time_s,
            verified_volume_fraction: r.stats.verified_volume_fraction,
        }
    }
}

pub fn result_to_json(record: &ResultRecord) -> String {
    let mut s = serde_json::to_string_pretty(record).expect("result serializes");
    s.push('\n');
    s
}

pub fn result_from_json(text: &str) -> Result<ResultRecord> {
    serde_json::from_str(text).map_err(|e| parse_err("result", e))
}

pub fn write_result(record: &ResultRecord, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &result_to_json(record))
}

/// One bench CSV line; `status` is a verdict or `ERROR`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub query_id: String,
    pub net1: String,
    pub net2: String,
    pub property: String,
    pub param: Option<f64>,
    pub mode: String,
    pub status: String,
    pub splits: u64,
    pub lp_calls: u64,
    pub time_s: f64,
}

pub fn write_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| parse_err(format!("{}", path.display()), e);
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    for r in rows {
        w.serialize(r).map_err(to_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_bench_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRow>> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| parse_err(format!("{}", path.display()), e);
    let mut r = csv::Reader::from_path(path).map_err(to_err)?;
    r.deserialize().map(|row| row.map_err(to_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const MINIMAL: &str = r#"{"name":"m","input_dim":2,"layers":[
        {"weights":[[1.0,-2.0]],"bias":[0.5],"activation":"linear"}]}"#;

    #[test]
    fn minimal_network_round_trips() {
        let net = network_from_json(MINIMAL).unwrap();
        assert_eq!(net.evaluate(&[1.0, 1.0]).unwrap().to_vec(), vec![-0.5]);
        let again = network_from_json(&network_to_json(&net)).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn missing_bias_names_the_layer() {
        let text = r#"{"name":"m","input_dim":1,"layers":[
            {"weights":[[1.0]],"bias":[0.0],"activation":"relu"},
            {"weights":[[1.0]],"activation":"linear"}]}"#;
        let msg = network_from_json(text).unwrap_err().to_string();
        assert!(msg.contains("layers[1]") && msg.contains("bias"), "{msg}");
    }

    #[test]
    fn ragged_and_misshaped_layers_are_rejected() {
        let ragged = r#"{"name":"m","input_dim":2,"layers":[
            {"weights":[[1.0,2.0],[1.0]],"bias":[0.0,0.0],"activation":"linear"}]}"#;
        assert!(network_from_json(ragged).unwrap_err().to_string().contains("layers[0].weights"));
        let bad_bias = r#"{"name":"m","input_dim":1,"layers":[
            {"weights":[[1.0]],"bias":[0.0,1.0],"activation":"linear"}]}"#;
        assert!(network_from_json(bad_bias).unwrap_err().to_string().contains("layers[0]"));
    }

    #[test]
    fn random_networks_round_trip_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        for i in 0..100 {
            let net = Network::random(format!("r{i}"), 3, &[5, 4], 2, &mut rng);
            save_network(&net, &path).unwrap();
            let back = load_network(&path).unwrap();
            for (a, b) in net.layers().iter().zip(back.layers()) {
                assert!(a.weights.iter().zip(&b.weights).all(|(x, y)| x.to_bits() == y.to_bits()));
                assert!(a.bias.iter().zip(&b.bias).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            assert_eq!(net, back);
        }
    }

    #[test]
    fn center_radius_becomes_box() {
        let q = query_from_json(r#"{"property":"epsilon","epsilon":0.1,"input":{"center":[0,0],"radius":[1,1]}}"#).unwrap();
        assert_eq!(q.lower, vec![-1.0, -1.0]);
        assert_eq!(q.upper, vec![1.0, 1.0]);
        assert_eq!(q.mode, Mode::Diff);
    }

    #[test]
    fn query_rejections_name_fields() {
        let err = query_from_json(r#"{"property":"delta_top1","delta":1.0,"input":{"lower":[0],"upper":[1]}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("delta") && err.contains("ln(delta/(1-delta))"), "{err}");
        let err = query_from_json(r#"{"property":"top1","input":{"lower":[0],"upper":[1],"center":[0],"radius":[1]}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("input"), "{err}");
        let err = query_from_json(r#"{"property":"top1","input":{"lower":[0],"upper":[1]},"mode":"fast"}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("mode"), "{err}");
        let err = query_from_json(r#"{"property":"top1","input":{"lower":[0],"upper":[1]},"max_splits":0}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("max_splits"), "{err}");
    }

    #[test]
    fn result_record_round_trips() {
        let rec = ResultRecord {
            status: Status::NotEquivalent,
            counterexample: Some(Counterexample {
                input: vec![0.1, 1.0 / 3.0],
                f1_output: vec![2.5],
                f2_output: vec![-7.25e-12],
                detail: "gap".into(),
            }),
            splits: 4,
            lp_calls: 9,
            time_s: 0.0123,
            verified_volume_fraction: 0.375,
        };
        assert_eq!(result_from_json(&result_to_json(&rec)).unwrap(), rec);
        let text = result_to_json(&rec);
        assert!(text.contains("\"NOT_EQUIVALENT\""));
    }

    #[test]
    fn bench_csv_round_trips_with_fixed_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let rows = vec![
            BenchRow {
                query_id: "q0".into(),
                net1: "a".into(),
                net2: "b".into(),
                property: "top1".into(),
                param: None,
                mode: "diff".into(),
                status: "EQUIVALENT".into(),
                splits: 3,
                lp_calls: 12,
                time_s: 0.5,
            },
            BenchRow {
                query_id: "q1".into(),
                net1: "a".into(),
                net2: "b".into(),
                property: "epsilon".into(),
                param: Some(0.05),
                mode: "naive".into(),
                status: "ERROR".into(),
                splits: 0,
                lp_calls: 0,
                time_s: 0.0,
            },
        ];
        write_bench_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("query_id,net1,net2,property,param,mode,status,splits,lp_calls,time_s\n"));
        assert_eq!(read_bench_csv(&path).unwrap(), rows);
    }
}
