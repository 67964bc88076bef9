//! `checkpoint.bin`: a JSON index followed by little-endian arrays.
//!
//! Layout:
//!
//! ```text
//! b"ARDLSTM1"          magic
//! u32 LE               format version
//! u64 LE               index length in bytes
//! index                UTF-8 JSON, see [`Index`]
//! data                 array payloads; entry offsets are relative to here
//! ```
//!
//! Arrays are `f64` or `u8` (masks), stored in row-major order. Every
//! regression field is packed into one array per layer, e.g.
//! `gate.forget.cov` has shape `[slots, units, d, d]`.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ard::ArdRegressorState;
use crate::ard_lstm::{ArdLstmConfig, ArdLstmModel, TrainHistory};
use crate::data::{DatasetMeta, Normalizer, SequenceDataset};
use crate::error::{Error, Result};
use crate::lstm::{BaselineConfig, BaselineModel, Gate, LstmWeights};
use crate::numerics::Matrix;
use crate::optim::{AdamConfig, AdamState};

pub const MAGIC: &[u8; 8] = b"ARDLSTM1";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    U8,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    /// Byte offset into the data section.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelHeader {
    ArdLstm {
        config: ArdLstmConfig,
        n_steps: usize,
        seed: u64,
        epochs_trained: usize,
        sparsity: Vec<crate::ard_lstm::SparsityReport>,
        adam_steps: Option<[u64; 4]>,
        adam_config: Option<AdamConfig>,
    },
    Lstm {
        config: BaselineConfig,
        n_features: usize,
        n_units: usize,
        n_outputs: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub meta: DatasetMeta,
    pub design_feature: Option<usize>,
}

/// JSON index. Fields this version does not know are kept in `extra`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub model: ModelHeader,
    pub normalizer: Normalizer,
    pub dataset: DatasetHeader,
    pub arrays: Vec<ArrayEntry>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Ard(ArdLstmModel),
    Baseline(BaselineModel),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Ard(_) => "ard-lstm",
            SavedModel::Baseline(_) => "lstm",
        }
    }
}

/// A trained model together with the dataset it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: SavedModel,
    pub dataset: SequenceDataset,
}

#[derive(Default)]
struct ArrayWriter {
    entries: Vec<ArrayEntry>,
    data: Vec<u8>,
}

impl ArrayWriter {
    fn entry(&mut self, name: String, shape: Vec<usize>, dtype: Dtype) {
        self.entries.push(ArrayEntry {
            name,
            shape,
            dtype,
            offset: self.data.len() as u64,
        });
    }

    fn f64s(&mut self, name: impl Into<String>, shape: Vec<usize>, values: impl IntoIterator<Item = f64>) {
        self.entry(name.into(), shape, Dtype::F64);
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn bools(&mut self, name: impl Into<String>, shape: Vec<usize>, values: impl IntoIterator<Item = bool>) {
        self.entry(name.into(), shape, Dtype::U8);
        self.data.extend(values.into_iter().map(u8::from));
    }
}

struct ArrayReader<'a> {
    entries: BTreeMap<&'a str, &'a ArrayEntry>,
    data: &'a [u8],
}

impl<'a> ArrayReader<'a> {
    fn new(index: &'a Index, data: &'a [u8]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for e in &index.arrays {
            let len = e.shape.iter().product::<usize>() * e.dtype.width();
            let end = (e.offset as usize).checked_add(len);
            if end.is_none_or(|end| end > data.len()) {
                return Err(Error::Checkpoint(format!("array `{}` runs past the end of the file", e.name)));
            }
            entries.insert(e.name.as_str(), e);
        }
        Ok(ArrayReader { entries, data })
    }

    fn raw(&self, name: &str, shape: &[usize], dtype: Dtype) -> Result<&'a [u8]> {
        let e = self
            .entries
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))?;
        if e.shape != shape || e.dtype != dtype {
            return Err(Error::Checkpoint(format!(
                "array `{name}` has shape {:?} ({:?}), expected {shape:?} ({dtype:?})",
                e.shape, e.dtype
            )));
        }
        let start = e.offset as usize;
        Ok(&self.data[start..start + shape.iter().product::<usize>() * dtype.width()])
    }

    fn f64s(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        Ok(self
            .raw(name, shape, Dtype::F64)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    fn bools(&self, name: &str, shape: &[usize]) -> Result<Vec<bool>> {
        Ok(self.raw(name, shape, Dtype::U8)?.iter().map(|b| *b != 0).collect())
    }

    fn shape(&self, name: &str) -> Result<&'a [usize]> {
        self.entries
            .get(name)
            .map(|e| e.shape.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))
    }

    fn has(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }
}

fn write_regressions(w: &mut ArrayWriter, prefix: &str, layer: &[Vec<ArdRegressorState>], d: usize) {
    let slots = layer.len();
    let units = layer.first().map_or(0, Vec::len);
    let all = || layer.iter().flatten();
    w.f64s(format!("{prefix}.alpha"), vec![slots, units, d], all().flat_map(|r| r.alpha.iter().copied()));
    w.f64s(format!("{prefix}.beta"), vec![slots, units], all().map(|r| r.beta));
    w.f64s(format!("{prefix}.mean"), vec![slots, units, d], all().flat_map(|r| r.mean.iter().copied()));
    w.f64s(format!("{prefix}.cov"), vec![slots, units, d, d], all().flat_map(|r| r.cov.as_slice().iter().copied()));
    w.f64s(format!("{prefix}.gamma"), vec![slots, units, d], all().flat_map(|r| r.gamma.iter().copied()));
    w.bools(format!("{prefix}.pruned"), vec![slots, units, d], all().flat_map(|r| r.pruned.iter().copied()));
}

fn read_regressions(
    r: &ArrayReader,
    prefix: &str,
    slots: usize,
    units: usize,
    d: usize,
) -> Result<Vec<Vec<ArdRegressorState>>> {
    let alpha = r.f64s(&format!("{prefix}.alpha"), &[slots, units, d])?;
    let beta = r.f64s(&format!("{prefix}.beta"), &[slots, units])?;
    let mean = r.f64s(&format!("{prefix}.mean"), &[slots, units, d])?;
    let cov = r.f64s(&format!("{prefix}.cov"), &[slots, units, d, d])?;
    let gamma = r.f64s(&format!("{prefix}.gamma"), &[slots, units, d])?;
    let pruned = r.bools(&format!("{prefix}.pruned"), &[slots, units, d])?;
    (0..slots)
        .map(|s| {
            (0..units)
                .map(|u| {
                    let k = s * units + u;
                    let v = k * d..(k + 1) * d;
                    Ok(ArdRegressorState {
                        alpha: alpha[v.clone()].to_vec(),
                        beta: beta[k],
                        mean: mean[v.clone()].to_vec(),
                        cov: Matrix::from_vec(d, d, cov[k * d * d..(k + 1) * d * d].to_vec())?,
                        gamma: gamma[v.clone()].to_vec(),
                        pruned: pruned[v].to_vec(),
                    })
                })
                .collect()
        })
        .collect()
}

fn write_steps(w: &mut ArrayWriter, name: &str, steps: &[Matrix]) {
    let (rows, cols) = steps.first().map_or((0, 0), Matrix::shape);
    w.f64s(name, vec![steps.len(), rows, cols], steps.iter().flat_map(|m| m.as_slice().iter().copied()));
}

fn read_steps(r: &ArrayReader, name: &str, steps: usize, rows: usize, cols: usize) -> Result<Vec<Matrix>> {
    let flat = r.f64s(name, &[steps, rows, cols])?;
    (0..steps)
        .map(|i| Matrix::from_vec(rows, cols, flat[i * rows * cols..(i + 1) * rows * cols].to_vec()))
        .collect()
}

fn write_weights(w: &mut ArrayWriter, weights: &LstmWeights) {
    for g in Gate::ALL {
        let gw = &weights.gates[g.index()];
        w.f64s(format!("weights.{}.w", g.name()), vec![gw.w.rows(), gw.w.cols()], gw.w.as_slice().iter().copied());
        w.f64s(format!("weights.{}.b", g.name()), vec![gw.b.len()], gw.b.iter().copied());
    }
    let o = &weights.output;
    w.f64s("weights.readout", vec![o.rows(), o.cols()], o.as_slice().iter().copied());
}

fn read_weights(r: &ArrayReader, n_f: usize, n_m: usize, n_out: usize) -> Result<LstmWeights> {
    let mut weights = LstmWeights::zeros(n_f, n_m, n_out);
    for g in Gate::ALL {
        let gw = &mut weights.gates[g.index()];
        gw.w = Matrix::from_vec(n_f + n_m, n_m, r.f64s(&format!("weights.{}.w", g.name()), &[n_f + n_m, n_m])?)?;
        gw.b = r.f64s(&format!("weights.{}.b", g.name()), &[n_m])?;
    }
    weights.output = Matrix::from_vec(1 + n_m, n_out, r.f64s("weights.readout", &[1 + n_m, n_out])?)?;
    Ok(weights)
}

fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut w = ArrayWriter::default();
    let data = &ckpt.dataset;
    w.f64s("dataset.designs", vec![data.n_designs()], data.designs.iter().copied());
    w.f64s("dataset.times", vec![data.n_designs(), data.n_steps()], data.times.iter().flatten().copied());
    write_steps(&mut w, "dataset.inputs", &data.inputs);
    write_steps(&mut w, "dataset.targets", &data.targets);

    let model = match &ckpt.model {
        SavedModel::Ard(m) => {
            let d = m.config.gate_dim();
            for g in Gate::ALL {
                write_regressions(&mut w, &format!("gate.{}", g.name()), &m.gates[g.index()], d);
            }
            write_regressions(&mut w, "readout", &m.readout, m.config.readout_dim());
            w.f64s("history.likelihood", vec![m.history.likelihood.len()], m.history.likelihood.iter().copied());
            if let Some(targets) = &m.targets {
                for g in Gate::ALL {
                    write_steps(&mut w, &format!("targets.{}", g.name()), &targets[g.index()]);
                }
            }
            if let Some(adam) = &m.adam {
                for g in Gate::ALL {
                    let a = &adam[g.index()];
                    w.f64s(format!("adam.{}.first", g.name()), vec![a.len()], a.first.iter().copied());
                    w.f64s(format!("adam.{}.second", g.name()), vec![a.len()], a.second.iter().copied());
                }
            }
            ModelHeader::ArdLstm {
                config: m.config.clone(),
                n_steps: m.n_steps,
                seed: m.seed,
                epochs_trained: m.epochs_trained(),
                sparsity: m.history.sparsity.clone(),
                adam_steps: m.adam.as_ref().map(|a| a.each_ref().map(|s| s.step)),
                adam_config: m.adam.as_ref().map(|a| a[0].config),
            }
        }
        SavedModel::Baseline(m) => {
            write_weights(&mut w, &m.weights);
            w.f64s("history.loss", vec![m.history.len()], m.history.iter().copied());
            ModelHeader::Lstm {
                config: m.config.clone(),
                n_features: m.weights.n_features,
                n_units: m.weights.n_units,
                n_outputs: m.weights.n_outputs,
            }
        }
    };
    let index = Index {
        model,
        normalizer: data.normalizer.clone(),
        dataset: DatasetHeader {
            meta: data.meta.clone(),
            design_feature: data.design_feature,
        },
        arrays: w.entries,
        extra: BTreeMap::new(),
    };
    let json = serde_json::to_vec(&index)?;
    let mut out = Vec::with_capacity(20 + json.len() + w.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&w.data);
    Ok(out)
}

/// Splits a checkpoint into its parsed index and the data section.
pub fn read_index(bytes: &[u8]) -> Result<(Index, &[u8])> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not an ARDLSTM1 file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let end = 20usize
        .checked_add(len)
        .filter(|e| *e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("index runs past the end of the file".into()))?;
    let index: Index = serde_json::from_slice(&bytes[20..end])?;
    Ok((index, &bytes[end..]))
}

fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let (index, data) = read_index(bytes)?;
    let r = ArrayReader::new(&index, data)?;

    let n_b = r.shape("dataset.designs")?.first().copied().unwrap_or(0);
    let steps = r.shape("dataset.inputs")?.first().copied().unwrap_or(0);
    let (n_f, n_out) = (index.normalizer.features.len(), index.normalizer.targets.len());
    let times = r.f64s("dataset.times", &[n_b, steps])?;
    let mut dataset = SequenceDataset::new(
        r.f64s("dataset.designs", &[n_b])?,
        times.chunks(steps.max(1)).take(n_b).map(<[f64]>::to_vec).collect(),
        read_steps(&r, "dataset.inputs", steps, n_b, n_f)?,
        read_steps(&r, "dataset.targets", steps, n_b, n_out)?,
        index.dataset.meta.clone(),
        index.dataset.design_feature,
    )?;
    dataset.normalizer = index.normalizer.clone();

    let model = match &index.model {
        ModelHeader::ArdLstm {
            config,
            n_steps,
            seed,
            epochs_trained,
            sparsity,
            adam_steps,
            adam_config,
        } => {
            let gate_slots = if config.share_weights_over_time { 1 } else { *n_steps };
            let readout_slots = if config.share_output_over_time { 1 } else { *n_steps };
            let d = config.gate_dim();
            let mut gates: [Vec<Vec<ArdRegressorState>>; 4] = Default::default();
            for g in Gate::ALL {
                gates[g.index()] = read_regressions(&r, &format!("gate.{}", g.name()), gate_slots, config.n_units, d)?;
            }
            let readout = read_regressions(&r, "readout", readout_slots, config.n_outputs, config.readout_dim())?;
            let likelihood = r.f64s("history.likelihood", &[*epochs_trained])?;
            let targets = if r.has("targets.forget") {
                let mut t: [Vec<Matrix>; 4] = Default::default();
                for g in Gate::ALL {
                    t[g.index()] = read_steps(&r, &format!("targets.{}", g.name()), *n_steps, n_b, config.n_units)?;
                }
                Some(t)
            } else {
                None
            };
            let adam = match (adam_steps, adam_config) {
                (Some(steps), Some(cfg)) => {
                    let mut out = Vec::with_capacity(4);
                    for g in Gate::ALL {
                        let first = format!("adam.{}.first", g.name());
                        let len = r.shape(&first)?.first().copied().unwrap_or(0);
                        let mut a = AdamState::new(len, *cfg);
                        a.first = r.f64s(&first, &[len])?;
                        a.second = r.f64s(&format!("adam.{}.second", g.name()), &[len])?;
                        a.step = steps[g.index()];
                        out.push(a);
                    }
                    out.try_into().ok()
                }
                _ => None,
            };
            SavedModel::Ard(ArdLstmModel {
                config: config.clone(),
                n_steps: *n_steps,
                gates,
                readout,
                targets,
                adam,
                history: TrainHistory {
                    likelihood,
                    sparsity: sparsity.clone(),
                },
                seed: *seed,
            })
        }
        ModelHeader::Lstm {
            config,
            n_features,
            n_units,
            n_outputs,
        } => {
            let weights = read_weights(&r, *n_features, *n_units, *n_outputs)?;
            let history_len = r.shape("history.loss")?.first().copied().unwrap_or(0);
            SavedModel::Baseline(BaselineModel {
                config: config.clone(),
                weights,
                history: r.f64s("history.loss", &[history_len])?,
            })
        }
    };
    Ok(Checkpoint { model, dataset })
}

pub fn save(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, encode(checkpoint)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => Error::MissingCheckpoint(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_designs, generate_bending_like, BendingSurrogateConfig};

    fn small_dataset() -> SequenceDataset {
        let cfg = BendingSurrogateConfig {
            nodes: 3,
            ..BendingSurrogateConfig::default()
        };
        generate_bending_like(&cfg, &default_designs(3), 6, 5).unwrap()
    }

    #[test]
    fn ard_model_round_trips_exactly() {
        let data = small_dataset();
        let mut cfg = ArdLstmConfig::new(data.n_features(), 3, data.n_outputs());
        cfg.mc_samples = 4;
        cfg.max_epochs = 21;
        let mut model = ArdLstmModel::new(cfg, data.n_steps(), 9).unwrap();
        model.fit(&data.normalized_inputs().unwrap(), &data.normalized_targets().unwrap()).unwrap();
        let ckpt = Checkpoint {
            model: SavedModel::Ard(model),
            dataset: data,
        };
        let bytes = encode(&ckpt).unwrap();
        assert_eq!(decode(&bytes).unwrap(), ckpt);
        assert_eq!(encode(&decode(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn baseline_round_trips_exactly() {
        let data = small_dataset();
        let config = BaselineConfig {
            n_units: 2,
            epochs: 3,
            ..BaselineConfig::default()
        };
        let mut model = BaselineModel::new(config, data.n_features(), data.n_outputs(), 4);
        model.fit(&data.normalized_inputs().unwrap(), &data.normalized_targets().unwrap()).unwrap();
        let ckpt = Checkpoint {
            model: SavedModel::Baseline(model),
            dataset: data,
        };
        assert_eq!(decode(&encode(&ckpt).unwrap()).unwrap(), ckpt);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("none.bin");
        assert!(matches!(load(&missing), Err(Error::MissingCheckpoint(p)) if p == missing));
        assert!(matches!(decode(b"NOTACKPT00000000000000"), Err(Error::Checkpoint(_))));

        let data = small_dataset();
        let ckpt = Checkpoint {
            model: SavedModel::Baseline(BaselineModel::new(BaselineConfig::default(), 2, data.n_outputs(), 1)),
            dataset: data,
        };
        let bytes = encode(&ckpt).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 8]), Err(Error::Checkpoint(_))));
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 2;
        assert!(matches!(decode(&wrong_version), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn unknown_index_fields_are_kept() {
        let data = small_dataset();
        let ckpt = Checkpoint {
            model: SavedModel::Baseline(BaselineModel::new(BaselineConfig::default(), 2, data.n_outputs(), 1)),
            dataset: data,
        };
        let bytes = encode(&ckpt).unwrap();
        let (mut index, _) = read_index(&bytes).unwrap();
        index.extra.insert("note".into(), Value::String("kept".into()));
        let text = serde_json::to_string(&index).unwrap();
        let back: Index = serde_json::from_str(&text).unwrap();
        assert_eq!(back.extra["note"], "kept");
    }
}
