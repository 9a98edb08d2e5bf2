//! Dataset ingestion, windowing, flattening, normalization and masking.
//!
//! A [`TimeSeriesDataset`] holds `E` examples of `S` sensors over `T` steps.
//! Models only ever see [`UnivariateBatch`]es: the example and sensor axes are
//! flattened into rows (example-major, sensor-minor) so every row is one
//! univariate series.

use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to every standard deviation used for normalization.
pub const STD_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    /// `[E, S, T]`
    pub values: Array3<f64>,
    pub sensor_names: Vec<String>,
    pub example_ids: Vec<String>,
}

impl TimeSeriesDataset {
    pub fn new(
        values: Array3<f64>,
        sensor_names: Vec<String>,
        example_ids: Vec<String>,
    ) -> Result<Self> {
        let (e, s, t) = values.dim();
        if e == 0 || s == 0 || t == 0 {
            return Err(Error::Shape(format!("empty dataset [{e}×{s}×{t}]")));
        }
        if sensor_names.len() != s || example_ids.len() != e {
            return Err(Error::Shape(format!(
                "{} sensor names / {} example ids for values [{e}×{s}×{t}]",
                sensor_names.len(),
                example_ids.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        Ok(Self {
            values,
            sensor_names,
            example_ids,
        })
    }

    /// Dataset with generated names `s0..`, `e0..`.
    pub fn from_values(values: Array3<f64>) -> Result<Self> {
        let (e, s, _) = values.dim();
        Self::new(
            values,
            (0..s).map(|i| format!("s{i}")).collect(),
            (0..e).map(|i| format!("e{i}")).collect(),
        )
    }

    pub fn num_examples(&self) -> usize {
        self.values.dim().0
    }

    pub fn num_sensors(&self) -> usize {
        self.values.dim().1
    }

    pub fn len(&self) -> usize {
        self.values.dim().2
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Restriction to a time range, all examples and sensors.
    pub fn slice_time(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::InvalidArgument(format!(
                "time range {range:?} outside [0, {})",
                self.len()
            )));
        }
        Self::new(
            self.values.slice(s![.., .., range]).to_owned(),
            self.sensor_names.clone(),
            self.example_ids.clone(),
        )
    }
}

/// Reads a header of sensor names followed by one numeric row per time step.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let s = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 1, e.to_string())
        })?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != s {
            return Err(parse_err(
                line,
                record.len().min(s) + 1,
                format!("expected {s} fields, found {}", record.len()),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, col + 1, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, col + 1, format!("non-finite value {field:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    // data is [T, S]; dataset wants [1, S, T]
    let ts = Array2::from_shape_vec((rows, s), data).expect("row-major fill");
    let values = ts.t().to_owned().insert_axis(Axis(0));
    TimeSeriesDataset::new(values, header, vec!["e0".to_string()])
}

/// Writes one example as header + rows, the format [`load_csv`] reads.
pub fn write_csv(ds: &TimeSeriesDataset, example: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(&ds.sensor_names).map_err(|e| csv_io(path, e))?;
    let ex = ds.values.index_axis(Axis(0), example);
    for t in 0..ds.len() {
        let row: Vec<String> = ex.column(t).iter().map(|v| v.to_string()).collect();
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Train/val/test time ranges plus the window geometry cut from each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: (usize, usize),
    pub val: (usize, usize),
    pub test: (usize, usize),
    pub window_length: usize,
    pub stride: usize,
}

impl SplitSpec {
    /// Contiguous fractions of `t` steps, e.g. `(0.7, 0.1)` for 70/10/20.
    pub fn by_fraction(t: usize, train: f64, val: f64, window_length: usize, stride: usize) -> Self {
        let a = (t as f64 * train).round() as usize;
        let b = (t as f64 * (train + val)).round() as usize;
        Self {
            train: (0, a),
            val: (a, b),
            test: (b, t),
            window_length,
            stride,
        }
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        if self.window_length == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument(
                "window_length and stride must be positive".into(),
            ));
        }
        let ranges = [self.train, self.val, self.test];
        for (a, b) in ranges {
            if a > b {
                return Err(Error::InvalidArgument(format!("range [{a}, {b}) is reversed")));
            }
        }
        if self.train.1 > self.val.0 || self.val.1 > self.test.0 || self.test.1 > t {
            return Err(Error::InvalidArgument(format!(
                "ranges {:?}, {:?}, {:?} must be disjoint, ordered and within [0, {t})",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

/// Start offsets of windows of length `window` at `stride` inside `[0, len)`.
pub fn window_starts(len: usize, window: usize, stride: usize) -> Result<Vec<usize>> {
    if window > len {
        return Err(Error::WindowTooLong { window, range: len });
    }
    Ok((0..=(len - window)).step_by(stride).collect())
}

/// Cuts each split range into windows. Output examples are ordered
/// example-major, window-start-minor.
pub fn make_windows(
    ds: &TimeSeriesDataset,
    spec: &SplitSpec,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset)> {
    spec.validate(ds.len())?;
    let cut = |(a, b): (usize, usize)| -> Result<TimeSeriesDataset> {
        let starts = window_starts(b - a, spec.window_length, spec.stride)?;
        let (e, s, _) = ds.values.dim();
        let w = spec.window_length;
        let mut values = Array3::zeros((e * starts.len(), s, w));
        let mut ids = Vec::with_capacity(e * starts.len());
        for ei in 0..e {
            for (wi, &st) in starts.iter().enumerate() {
                values
                    .index_axis_mut(Axis(0), ei * starts.len() + wi)
                    .assign(&ds.values.slice(s![ei, .., a + st..a + st + w]));
                ids.push(format!("{}@{}", ds.example_ids[ei], a + st));
            }
        }
        TimeSeriesDataset::new(values, ds.sensor_names.clone(), ids)
    };
    Ok((cut(spec.train)?, cut(spec.val)?, cut(spec.test)?))
}

/// Rows of univariate series with their `(example, sensor)` origin.
#[derive(Clone, Debug, PartialEq)]
pub struct UnivariateBatch {
    /// `[N, T]`
    pub series: Array2<f64>,
    pub origin: Vec<(usize, usize)>,
}

impl UnivariateBatch {
    /// Rows with trivial origin `(i, 0)`.
    pub fn from_rows(series: Array2<f64>) -> Self {
        let origin = (0..series.nrows()).map(|i| (i, 0)).collect();
        Self { series, origin }
    }

    pub fn rows(&self) -> usize {
        self.series.nrows()
    }

    pub fn len(&self) -> usize {
        self.series.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn with_series(&self, series: Array2<f64>) -> Self {
        Self {
            series,
            origin: self.origin.clone(),
        }
    }
}

/// Row `e·S + s` of the output is `ds.values[e, s, :]`.
pub fn flatten_sensors(ds: &TimeSeriesDataset) -> UnivariateBatch {
    let (e, s, t) = ds.values.dim();
    let series = ds
        .values
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((e * s, t))
        .expect("contiguous reshape");
    let origin = (0..e).flat_map(|ei| (0..s).map(move |si| (ei, si))).collect();
    UnivariateBatch { series, origin }
}

/// Inverse of [`flatten_sensors`]; `template` supplies names and dimensions.
pub fn unflatten_sensors(
    batch: &UnivariateBatch,
    template: &TimeSeriesDataset,
) -> Result<TimeSeriesDataset> {
    let (e, s, _) = template.values.dim();
    let t = batch.len();
    if batch.rows() != e * s {
        return Err(Error::Shape(format!(
            "{} rows cannot fill {e} examples × {s} sensors",
            batch.rows()
        )));
    }
    let mut values = Array3::zeros((e, s, t));
    for (row, &(ei, si)) in batch.series.rows().into_iter().zip(&batch.origin) {
        values.slice_mut(s![ei, si, ..]).assign(&row);
    }
    TimeSeriesDataset::new(values, template.sensor_names.clone(), template.example_ids.clone())
}

/// Per-row statistics needed to undo instance normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevInState {
    pub mean: Vec<f64>,
    /// Already floored at [`STD_EPS`].
    pub std: Vec<f64>,
}

impl RevInState {
    pub fn identity(rows: usize) -> Self {
        Self {
            mean: vec![0.0; rows],
            std: vec![1.0; rows],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Population mean and floored population std of a row.
pub fn row_stats(row: ArrayView1<f64>) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.sum() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt().max(STD_EPS))
}

pub fn revin_normalize(batch: &UnivariateBatch) -> (UnivariateBatch, RevInState) {
    let mut out = batch.series.clone();
    let mut state = RevInState {
        mean: Vec::with_capacity(batch.rows()),
        std: Vec::with_capacity(batch.rows()),
    };
    for mut row in out.rows_mut() {
        let (mean, std) = row_stats(row.view());
        row.mapv_inplace(|v| (v - mean) / std);
        state.mean.push(mean);
        state.std.push(std);
    }
    (batch.with_series(out), state)
}

pub fn revin_denormalize(batch: &UnivariateBatch, state: &RevInState) -> Result<UnivariateBatch> {
    if state.len() != batch.rows() {
        return Err(Error::Shape(format!(
            "RevIN state for {} rows applied to {} rows",
            state.len(),
            batch.rows()
        )));
    }
    let mut out = batch.series.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let (m, s) = (state.mean[i], state.std[i]);
        row.mapv_inplace(|v| v * s + m);
    }
    Ok(batch.with_series(out))
}

/// Per-sensor z-scoring fitted on one time range and applied everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GlobalNormalizer {
    pub fn fit(ds: &TimeSeriesDataset, range: Range<usize>) -> Result<Self> {
        let part = ds.slice_time(range)?;
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for si in 0..ds.num_sensors() {
            let vals = part.values.index_axis(Axis(1), si);
            let flat: Array1<f64> = vals.iter().cloned().collect();
            let (m, s) = row_stats(flat.view());
            mean.push(m);
            std.push(s);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check(ds)?;
        let mut out = ds.clone();
        for (si, mut sensor) in out.values.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[si], self.std[si]);
            sensor.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn invert(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check(ds)?;
        let mut out = ds.clone();
        for (si, mut sensor) in out.values.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[si], self.std[si]);
            sensor.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }

    fn check(&self, ds: &TimeSeriesDataset) -> Result<()> {
        if self.mean.len() != ds.num_sensors() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} sensors, dataset has {}",
                self.mean.len(),
                ds.num_sensors()
            )));
        }
        Ok(())
    }
}

/// Observation mask: `true` = observed, `false` = missing.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSpec {
    pub mask: Array2<bool>,
    pub ratio: f64,
}

#[derive(Serialize, Deserialize)]
struct MaskDoc {
    mask: Vec<Vec<bool>>,
    ratio: f64,
}

impl Serialize for MaskSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        MaskDoc {
            mask: self.mask.rows().into_iter().map(|r| r.to_vec()).collect(),
            ratio: self.ratio,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for MaskSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = MaskDoc::deserialize(de)?;
        let rows = doc.mask.len();
        let cols = doc.mask.first().map_or(0, Vec::len);
        if doc.mask.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged mask rows"));
        }
        let flat = doc.mask.into_iter().flatten().collect();
        let mask = Array2::from_shape_vec((rows, cols), flat).map_err(D::Error::custom)?;
        Ok(MaskSpec {
            mask,
            ratio: doc.ratio,
        })
    }
}

impl MaskSpec {
    pub fn all_observed(rows: usize, t: usize) -> Self {
        Self {
            mask: Array2::from_elem((rows, t), true),
            ratio: 0.0,
        }
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }
}

/// Per row, exactly `round(ratio·t)` missing positions drawn uniformly without
/// replacement. The missing set is a prefix of a seeded per-row permutation, so
/// masks drawn with one seed are nested across increasing ratios.
pub fn sample_mask(rows: usize, t: usize, ratio: f64, seed: u64) -> Result<MaskSpec> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!(
            "mask ratio {ratio} outside [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let missing = (ratio * t as f64).round() as usize;
    let mut mask = Array2::from_elem((rows, t), true);
    let mut perm: Vec<usize> = (0..t).collect();
    for mut row in mask.rows_mut() {
        perm.iter_mut().enumerate().for_each(|(i, p)| *p = i);
        perm.shuffle(&mut rng);
        for &pos in &perm[..missing] {
            row[pos] = false;
        }
    }
    Ok(MaskSpec { mask, ratio })
}

/// Copies observed entries and writes `fill` into missing ones.
pub fn apply_mask(batch: &UnivariateBatch, spec: &MaskSpec, fill: f64) -> Result<UnivariateBatch> {
    if batch.series.dim() != spec.mask.dim() {
        return Err(Error::Shape(format!(
            "mask {:?} vs batch {:?}",
            spec.mask.dim(),
            batch.series.dim()
        )));
    }
    let mut out = batch.series.clone();
    ndarray::Zip::from(&mut out)
        .and(&spec.mask)
        .for_each(|v, &observed| {
            if !observed {
                *v = fill
            }
        });
    Ok(batch.with_series(out))
}
