//! Sequence datasets, per-channel normalization, CSV exchange and a
//! synthetic three-point-bending generator.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{stream_rng, Matrix};

/// Affine map of one channel from `[min, max]` to `[-1, 1]`. A degenerate
/// range is only shifted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScale {
    pub min: f64,
    pub max: f64,
}

impl ChannelScale {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        ChannelScale { min, max }
    }

    /// Physical units per normalized unit.
    pub fn half_range(&self) -> f64 {
        if self.max > self.min {
            0.5 * (self.max - self.min)
        } else {
            1.0
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / self.half_range() - 1.0
        } else {
            v - self.min
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v + 1.0) * self.half_range() + self.min
        } else {
            v + self.min
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub features: Vec<ChannelScale>,
    pub targets: Vec<ChannelScale>,
}

fn map_rows(m: &Matrix, scales: &[ChannelScale], f: impl Fn(&ChannelScale, f64) -> f64) -> Result<Matrix> {
    if scales.is_empty() || scales.len() != m.cols() {
        return Err(Error::UnfittedNormalizer(m.cols()));
    }
    let mut out = m.clone();
    for r in 0..m.rows() {
        for (v, s) in out.row_mut(r).iter_mut().zip(scales) {
            *v = f(s, *v);
        }
    }
    Ok(out)
}

impl Normalizer {
    /// Fits one scale per column over all steps.
    pub fn fit(inputs: &[Matrix], targets: &[Matrix]) -> Self {
        let fit_cols = |ms: &[Matrix]| -> Vec<ChannelScale> {
            let cols = ms.first().map_or(0, |m| m.cols());
            (0..cols)
                .map(|c| ChannelScale::fit(ms.iter().flat_map(|m| (0..m.rows()).map(move |r| m[(r, c)]))))
                .collect()
        };
        Normalizer {
            features: fit_cols(inputs),
            targets: fit_cols(targets),
        }
    }

    pub fn normalize_inputs(&self, m: &Matrix) -> Result<Matrix> {
        map_rows(m, &self.features, ChannelScale::normalize)
    }

    pub fn normalize_targets(&self, m: &Matrix) -> Result<Matrix> {
        map_rows(m, &self.targets, ChannelScale::normalize)
    }

    pub fn denormalize_inputs(&self, m: &Matrix) -> Result<Matrix> {
        map_rows(m, &self.features, ChannelScale::denormalize)
    }

    pub fn denormalize_targets(&self, m: &Matrix) -> Result<Matrix> {
        map_rows(m, &self.targets, ChannelScale::denormalize)
    }

    /// Scales normalized target variances to physical units.
    pub fn denormalize_target_variance(&self, m: &Matrix) -> Result<Matrix> {
        map_rows(m, &self.targets, |s, v| v * s.half_range() * s.half_range())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub feature_units: Vec<String>,
    pub target_units: Vec<String>,
}

/// `n_b` designs, each a sequence of `m` steps. Stored per step in physical
/// units: `inputs[i]` is `n_b × n_f`, `targets[i]` is `n_b × N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub designs: Vec<f64>,
    /// `times[b][i]`
    pub times: Vec<Vec<f64>>,
    pub inputs: Vec<Matrix>,
    pub targets: Vec<Matrix>,
    pub normalizer: Normalizer,
    pub meta: DatasetMeta,
    /// Feature column that carries the design parameter, if any.
    pub design_feature: Option<usize>,
}

impl SequenceDataset {
    /// Builds a dataset and fits its normalizer.
    pub fn new(
        designs: Vec<f64>,
        times: Vec<Vec<f64>>,
        inputs: Vec<Matrix>,
        targets: Vec<Matrix>,
        meta: DatasetMeta,
        design_feature: Option<usize>,
    ) -> Result<Self> {
        let n_b = designs.len();
        let m = inputs.len();
        if targets.len() != m || times.len() != n_b || times.iter().any(|t| t.len() != m) {
            return Err(Error::shape("dataset steps", m, targets.len()));
        }
        for (x, y) in inputs.iter().zip(&targets) {
            if x.rows() != n_b || y.rows() != n_b {
                return Err(Error::shape("dataset rows", n_b, x.rows().max(y.rows())));
            }
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Domain("dataset contains non-finite values".into()));
            }
        }
        let normalizer = Normalizer::fit(&inputs, &targets);
        Ok(SequenceDataset {
            designs,
            times,
            inputs,
            targets,
            normalizer,
            meta,
            design_feature,
        })
    }

    pub fn n_designs(&self) -> usize {
        self.designs.len()
    }

    pub fn n_steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_features(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.cols())
    }

    pub fn n_outputs(&self) -> usize {
        self.targets.first().map_or(0, |m| m.cols())
    }

    pub fn normalized_inputs(&self) -> Result<Vec<Matrix>> {
        self.inputs.iter().map(|m| self.normalizer.normalize_inputs(m)).collect()
    }

    pub fn normalized_targets(&self) -> Result<Vec<Matrix>> {
        self.targets.iter().map(|m| self.normalizer.normalize_targets(m)).collect()
    }

    /// Dataset restricted to the given design indices, with a refitted
    /// normalizer.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let pick = |ms: &[Matrix]| -> Vec<Matrix> {
            ms.iter()
                .map(|m| Matrix::from_rows(&keep.iter().map(|&b| m.row(b).to_vec()).collect::<Vec<_>>()))
                .collect()
        };
        SequenceDataset::new(
            keep.iter().map(|&b| self.designs[b]).collect(),
            keep.iter().map(|&b| self.times[b].clone()).collect(),
            pick(&self.inputs),
            pick(&self.targets),
            self.meta.clone(),
            self.design_feature,
        )
    }

    pub fn without_design(&self, index: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.n_designs()).filter(|&b| b != index).collect();
        self.select(&keep)
    }

    /// Physical inputs for new design values: the sequence of design 0 with
    /// the design feature replaced.
    pub fn design_inputs(&self, values: &[f64]) -> Result<Vec<Matrix>> {
        let col = self
            .design_feature
            .ok_or_else(|| Error::NotSweepable("dataset has no design feature column".into()))?;
        Ok(self
            .inputs
            .iter()
            .map(|x| {
                let mut out = Matrix::zeros(values.len(), x.cols());
                for (r, v) in values.iter().enumerate() {
                    out.row_mut(r).copy_from_slice(x.row(0));
                    out[(r, col)] = *v;
                }
                out
            })
            .collect())
    }

    /// Writes `design_id,t,<features>,<targets>` rows, design by design.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["design_id".to_string(), "t".to_string()];
        header.extend(self.meta.feature_names.iter().cloned());
        header.extend(self.meta.target_names.iter().cloned());
        w.write_record(&header)?;
        for b in 0..self.n_designs() {
            for i in 0..self.n_steps() {
                let mut rec = vec![self.designs[b].to_string(), self.times[b][i].to_string()];
                rec.extend(self.inputs[i].row(b).iter().map(|v| v.to_string()));
                rec.extend(self.targets[i].row(b).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Which CSV columns are features and which are targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub targets: Vec<String>,
}

impl CsvSchema {
    /// The `n_features` columns after `t` are features, the rest targets.
    pub fn infer(header: &[String], n_features: usize) -> Result<Self> {
        for need in ["design_id", "t"] {
            if !header.iter().any(|h| h == need) {
                return Err(Error::MissingColumn(need.into()));
            }
        }
        let rest: Vec<String> = header.iter().filter(|h| *h != "design_id" && *h != "t").cloned().collect();
        if rest.len() <= n_features {
            return Err(Error::Config {
                field: "n_features".into(),
                message: format!("{} data columns leave no targets after {n_features} features", rest.len()),
            });
        }
        Ok(CsvSchema {
            features: rest[..n_features].to_vec(),
            targets: rest[n_features..].to_vec(),
        })
    }
}

/// Reads the header of a dataset CSV.
pub fn read_csv_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.headers()?.iter().map(|s| s.trim().to_string()).collect())
}

/// Parses a dataset CSV. Designs keep the order of first appearance; each
/// design's time column must be strictly increasing and all designs must
/// have the same number of steps.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SequenceDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = find("design_id")?;
    let t_col = find("t")?;
    let f_cols = schema.features.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
    let y_cols = schema.targets.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    struct Rows {
        design: f64,
        times: Vec<f64>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Rows> = HashMap::new();
    for (idx, rec) in reader.records().enumerate() {
        // data rows are numbered from 2 (row 1 is the header)
        let row = idx + 2;
        let rec = rec?;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: header[c].clone(),
                    message: format!("`{raw}` is not a finite number"),
                })
        };
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        let design = cell(id_col)?;
        let t = cell(t_col)?;
        let x = f_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?;
        let y = y_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?;
        let g = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Rows {
                design,
                times: Vec::new(),
                x: Vec::new(),
                y: Vec::new(),
            }
        });
        if let Some(&last) = g.times.last() {
            if t <= last {
                return Err(Error::NonMonotoneTime { design: id, row });
            }
        }
        g.times.push(t);
        g.x.push(x);
        g.y.push(y);
    }
    if order.is_empty() {
        return Err(Error::Parse {
            row: 2,
            column: "design_id".into(),
            message: "file has no data rows".into(),
        });
    }
    let m = groups[&order[0]].times.len();
    for id in &order {
        let found = groups[id].times.len();
        if found != m {
            return Err(Error::RaggedSequence {
                design: id.clone(),
                expected: m,
                found,
            });
        }
    }
    let rows: Vec<&Rows> = order.iter().map(|id| &groups[id]).collect();
    let inputs = (0..m).map(|i| Matrix::from_rows(&rows.iter().map(|g| g.x[i].clone()).collect::<Vec<_>>())).collect();
    let targets = (0..m).map(|i| Matrix::from_rows(&rows.iter().map(|g| g.y[i].clone()).collect::<Vec<_>>())).collect();
    let designs: Vec<f64> = rows.iter().map(|g| g.design).collect();
    let design_feature = (0..f_cols.len()).find(|&c| rows.iter().all(|g| g.x.iter().all(|x| x[c] == g.design)));
    SequenceDataset::new(
        designs,
        rows.iter().map(|g| g.times.clone()).collect(),
        inputs,
        targets,
        DatasetMeta {
            feature_names: schema.features.clone(),
            target_names: schema.targets.clone(),
            ..DatasetMeta::default()
        },
        design_feature,
    )
}

/// Punch positions of the reference design of experiments, in mm.
pub const REFERENCE_DESIGNS: [f64; 7] = [-60.0, -40.0, -30.0, 0.0, 20.0, 40.0, 60.0];

/// `n` designs: the reference set for `n = 7`, otherwise evenly spaced on
/// `[-60, 60]` mm.
pub fn default_designs(n: usize) -> Vec<f64> {
    match n {
        7 => REFERENCE_DESIGNS.to_vec(),
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| -60.0 + 120.0 * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Parameters of the synthetic bending response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BendingSurrogateConfig {
    /// Specimen span in mm; punch positions live in `[-span/2, span/2]`.
    pub span_mm: f64,
    /// Carried as metadata only.
    pub punch_mass_kg: f64,
    /// Carried as metadata only.
    pub punch_speed_m_s: f64,
    pub nodes: usize,
    pub duration_ms: f64,
    pub peak_time_ms: f64,
    pub peak_deflection_mm: f64,
    /// Share of the peak deflection that remains after unloading.
    pub permanent_fraction: f64,
    pub oscillation_hz: f64,
    /// Exponential decay rate of the rebound oscillation, per ms.
    pub damping_per_ms: f64,
    /// Width of the local indentation under the punch, in mm.
    pub dent_width_mm: f64,
    /// Standard deviation of the additive noise in mm.
    pub noise_mm: f64,
}

impl Default for BendingSurrogateConfig {
    fn default() -> Self {
        BendingSurrogateConfig {
            span_mm: 150.0,
            punch_mass_kg: 100.0,
            punch_speed_m_s: 5.0,
            nodes: 45,
            duration_ms: 20.0,
            peak_time_ms: 8.0,
            peak_deflection_mm: 25.0,
            permanent_fraction: 0.7,
            oscillation_hz: 250.0,
            damping_per_ms: 0.2,
            dent_width_mm: 15.0,
            noise_mm: 1e-3,
        }
    }
}

impl BendingSurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: field.into(),
                message: message.into(),
            })
        };
        if !(self.span_mm > 0.0) {
            return bad("span_mm", "must be positive");
        }
        if self.nodes == 0 {
            return bad("nodes", "must be at least 1");
        }
        if !(self.duration_ms > 0.0 && self.peak_time_ms > 0.0 && self.peak_time_ms < self.duration_ms) {
            return bad("peak_time_ms", "must lie inside (0, duration_ms)");
        }
        if !(self.dent_width_mm > 0.0) {
            return bad("dent_width_mm", "must be positive");
        }
        if !(self.noise_mm >= 0.0) {
            return bad("noise_mm", "must be non-negative");
        }
        Ok(())
    }

    /// Node positions strictly inside the span, symmetric about 0.
    pub fn node_positions(&self) -> Vec<f64> {
        let half = 0.5 * self.span_mm;
        let n = self.nodes;
        (0..n)
            .map(|k| {
                // pair nodes from both ends so the layout is exactly mirror symmetric
                let from_left = -half + self.span_mm * (k + 1) as f64 / (n + 1) as f64;
                let mirror = half - self.span_mm * (n - k) as f64 / (n + 1) as f64;
                0.5 * (from_left + mirror)
            })
            .collect()
    }

    /// Time history of the load amplitude: a sine rise to the peak, then a
    /// damped rebound around the permanent deflection.
    fn amplitude(&self, t: f64) -> f64 {
        if t <= self.peak_time_ms {
            (0.5 * PI * t / self.peak_time_ms).sin()
        } else {
            let dt = t - self.peak_time_ms;
            let w = 2.0 * PI * self.oscillation_hz * 1e-3;
            let p = self.permanent_fraction;
            p + (1.0 - p) * (-self.damping_per_ms * dt).exp() * (w * dt).cos()
        }
    }

    /// Elastic line of a simply supported beam under a point load at `eps`,
    /// scaled to 1 under the load. Returns `(w, dw/dx)`.
    fn beam_shape(&self, x: f64, eps: f64) -> (f64, f64) {
        let l = self.span_mm;
        let a = eps + 0.5 * l;
        let b = l - a;
        let s = x + 0.5 * l;
        // deflection of a unit load, up to the common factor 1/(6EIL)
        let (w, dw) = if s <= a {
            (b * s * (l * l - b * b - s * s), b * (l * l - b * b - 3.0 * s * s))
        } else {
            let r = l - s;
            (a * r * (l * l - a * a - r * r), -a * (l * l - a * a - 3.0 * r * r))
        };
        let peak = 2.0 * a * a * b * b;
        if peak <= 0.0 {
            return (0.0, 0.0);
        }
        (w / peak, dw / peak)
    }

    /// Displacement `(u_x, u_y, u_z)` of the node at `x` for design `eps`
    /// and time `t`, without noise.
    pub fn displacement(&self, x: f64, eps: f64, t: f64) -> [f64; 3] {
        let l = self.span_mm;
        let a = eps + 0.5 * l;
        let reach = 4.0 * a * (l - a) / (l * l);
        let amp = self.peak_deflection_mm * reach * self.amplitude(t);
        let (wb, dwb) = self.beam_shape(x, eps);
        // local dent under the punch on top of the global bending line
        let ell = self.dent_width_mm;
        let dent = (-(x - eps) * (x - eps) / (2.0 * ell * ell)).exp();
        let w = 0.5 * (wb + dent);
        let dw = 0.5 * (dwb - (x - eps) / (ell * ell) * dent);
        // low-frequency first-mode ringing after the peak
        let ring = if t > self.peak_time_ms {
            let dt = t - self.peak_time_ms;
            0.08 * self.peak_deflection_mm * reach * (-0.5 * self.damping_per_ms * dt).exp() * (PI * dt / self.duration_ms * 3.0).sin()
        } else {
            0.0
        };
        let mode = (PI * (x + 0.5 * l) / l).sin();
        let uz = -(amp * w + ring * mode);
        // longitudinal motion follows the slope of the section (thickness 2 mm)
        let ux = 2.0 * amp * dw;
        let uy = 0.05 * amp * w * w;
        [ux, uy, uz]
    }
}

/// Synthetic bending-like dataset: features `(ε [mm], t [ms])`, targets the
/// three displacement components of every node.
pub fn generate_bending_like(cfg: &BendingSurrogateConfig, designs: &[f64], m: usize, seed: u64) -> Result<SequenceDataset> {
    cfg.validate()?;
    if m < 2 {
        return Err(Error::Config {
            field: "steps".into(),
            message: format!("need at least 2 time steps, got {m}"),
        });
    }
    if designs.is_empty() {
        return Err(Error::Config {
            field: "designs".into(),
            message: "need at least one design".into(),
        });
    }
    let half = 0.5 * cfg.span_mm;
    if let Some(bad) = designs.iter().find(|e| !(e.abs() < half)) {
        return Err(Error::Config {
            field: "designs".into(),
            message: format!("punch position {bad} mm lies outside the open span (-{half}, {half})"),
        });
    }
    let xs = cfg.node_positions();
    let n_out = 3 * xs.len();
    let times: Vec<f64> = (0..m).map(|i| cfg.duration_ms * i as f64 / (m - 1) as f64).collect();
    let mut rng = stream_rng(seed, 0);
    let mut inputs = vec![Matrix::zeros(designs.len(), 2); m];
    let mut targets = vec![Matrix::zeros(designs.len(), n_out); m];
    for (b, &eps) in designs.iter().enumerate() {
        for (i, &t) in times.iter().enumerate() {
            inputs[i][(b, 0)] = eps;
            inputs[i][(b, 1)] = t;
            for (n, &x) in xs.iter().enumerate() {
                let u = cfg.displacement(x, eps, t);
                for (c, v) in u.iter().enumerate() {
                    let noise = if cfg.noise_mm > 0.0 {
                        cfg.noise_mm * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    targets[i][(b, 3 * n + c)] = v + noise;
                }
            }
        }
    }
    let mut target_names = Vec::with_capacity(n_out);
    for n in 0..xs.len() {
        for c in ["x", "y", "z"] {
            target_names.push(format!("node{n}_{c}"));
        }
    }
    SequenceDataset::new(
        designs.to_vec(),
        vec![times; designs.len()],
        inputs,
        targets,
        DatasetMeta {
            feature_names: vec!["epsilon".into(), "time".into()],
            feature_units: vec!["mm".into(), "ms".into()],
            target_units: vec!["mm".into(); n_out],
            target_names,
        },
        Some(0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn channel_scale_examples() {
        let s = ChannelScale { min: 0.0, max: 10.0 };
        assert_eq!(s.normalize(5.0), 0.0);
        assert_eq!(s.normalize(10.0), 1.0);
        assert!((s.normalize(12.0) - 1.4).abs() < 1e-15);
        assert!(!s.contains(12.0));
        let flat = ChannelScale { min: 3.0, max: 3.0 };
        assert_eq!(flat.normalize(3.0), 0.0);
        assert_eq!(flat.denormalize(flat.normalize(4.5)), 4.5);
    }

    #[test]
    fn normalize_round_trip_and_monotone() {
        let s = ChannelScale { min: -3.7, max: 12.25 };
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=100 {
            let v = -5.0 + 0.2 * i as f64;
            assert!((s.denormalize(s.normalize(v)) - v).abs() < 1e-12);
            let n = s.normalize(v);
            assert!(n > prev);
            prev = n;
        }
    }

    #[test]
    fn unfitted_normalizer_errors() {
        let n = Normalizer::default();
        assert!(matches!(n.normalize_inputs(&Matrix::zeros(2, 3)), Err(Error::UnfittedNormalizer(3))));
    }

    #[test]
    fn generated_shape_and_ranges() {
        let cfg = BendingSurrogateConfig::default();
        let ds = generate_bending_like(&cfg, &default_designs(7), 41, 1).unwrap();
        assert_eq!((ds.n_designs(), ds.n_steps(), ds.n_features(), ds.n_outputs()), (7, 41, 2, 135));
        for m in ds.normalized_inputs().unwrap().iter().chain(&ds.normalized_targets().unwrap()) {
            assert!(m.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert_eq!(ds.designs, REFERENCE_DESIGNS.to_vec());
        assert_eq!(default_designs(3), vec![-60.0, 0.0, 60.0]);
    }

    #[test]
    fn centered_punch_is_mirror_symmetric() {
        let cfg = BendingSurrogateConfig::default();
        let xs = cfg.node_positions();
        let n = xs.len();
        for k in 0..n {
            assert_eq!(xs[k], -xs[n - 1 - k]);
        }
        for t in [0.5, 4.0, 8.0, 11.0, 19.0] {
            for k in 0..n {
                let a = cfg.displacement(xs[k], 0.0, t);
                let b = cfg.displacement(xs[n - 1 - k], 0.0, t);
                assert!((a[2] - b[2]).abs() < 1e-12, "z at t={t}");
                assert!((a[1] - b[1]).abs() < 1e-12, "y at t={t}");
                assert!((a[0] + b[0]).abs() < 1e-12, "x at t={t}");
            }
        }
    }

    #[test]
    fn deflection_peaks_under_the_punch() {
        let cfg = BendingSurrogateConfig::default();
        let at = |x| cfg.displacement(x, 30.0, cfg.peak_time_ms)[2];
        assert!(at(30.0) < at(20.0) && at(30.0) < at(40.0));
        assert!(at(30.0) < -1.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let mut cfg = BendingSurrogateConfig::default();
        let a = generate_bending_like(&cfg, &[-10.0, 15.0], 5, 3).unwrap();
        assert_eq!(a, generate_bending_like(&cfg, &[-10.0, 15.0], 5, 3).unwrap());
        assert_ne!(a, generate_bending_like(&cfg, &[-10.0, 15.0], 5, 4).unwrap());
        cfg.noise_mm = 0.0;
        assert_eq!(
            generate_bending_like(&cfg, &[-10.0, 15.0], 5, 3).unwrap(),
            generate_bending_like(&cfg, &[-10.0, 15.0], 5, 9).unwrap()
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = generate_bending_like(&BendingSurrogateConfig::default(), &[-40.0, 0.0, 35.5], 6, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.write_csv(&path).unwrap();
        let header = read_csv_header(&path).unwrap();
        let back = load_csv(&path, &CsvSchema::infer(&header, 2).unwrap()).unwrap();
        assert_eq!(back.normalized_inputs().unwrap(), ds.normalized_inputs().unwrap());
        assert_eq!(back.normalized_targets().unwrap(), ds.normalized_targets().unwrap());
        assert_eq!(back.designs, ds.designs);
        assert_eq!(back.design_feature, Some(0));
    }

    fn write(contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::File::create(&path).unwrap().write_all(contents.as_bytes()).unwrap();
        (dir, path)
    }

    fn schema() -> CsvSchema {
        CsvSchema {
            features: vec!["f".into()],
            targets: vec!["y".into()],
        }
    }

    #[test]
    fn csv_error_contracts() {
        let (_d, p) = write("design_id,t,f,y\n1,0,1,0.5\n1,1,1,abc\n");
        match load_csv(&p, &schema()) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (3, "y")),
            other => panic!("{other:?}"),
        }
        let (_d, p) = write("design_id,t,f,y\n1,0,1,0.5\n1,0,1,0.6\n");
        assert!(matches!(load_csv(&p, &schema()), Err(Error::NonMonotoneTime { row: 3, .. })));
        let (_d, p) = write("design_id,t,f,y\n1,0,1,0.5\n1,1,1,0.6\n2,0,2,0.1");
        assert!(matches!(
            load_csv(&p, &schema()),
            Err(Error::RaggedSequence { expected: 2, found: 1, .. })
        ));
        let (_d, p) = write("design_id,f,y\n1,1,0.5\n");
        assert!(matches!(load_csv(&p, &schema()), Err(Error::MissingColumn(c)) if c == "t"));
    }

    #[test]
    fn csv_without_trailing_newline_loads() {
        let (_d, p) = write("design_id,t,f,y\n1,0,1,0.5\n1,1,1,0.7\n2,0,2,0.1\n2,1,2,0.3");
        let ds = load_csv(&p, &schema()).unwrap();
        assert_eq!((ds.n_designs(), ds.n_steps()), (2, 2));
        assert_eq!(ds.designs, vec![1.0, 2.0]);
        assert_eq!(ds.design_feature, Some(0));
    }

    #[test]
    fn design_inputs_replace_the_design_column() {
        let ds = generate_bending_like(&BendingSurrogateConfig::default(), &[-10.0, 20.0], 4, 0).unwrap();
        let x = ds.design_inputs(&[5.0, 7.0]).unwrap();
        assert_eq!(x.len(), 4);
        assert_eq!(x[2].row(1), &[7.0, ds.inputs[2][(0, 1)]]);
    }
}
