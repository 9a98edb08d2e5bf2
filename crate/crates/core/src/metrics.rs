//! Task metrics, result tables with AvgWins, and the permutation test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{ArrayBase, Data, Dimension};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_shapes(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

pub fn mse<S1, S2, D>(pred: &ArrayBase<S1, D>, truth: &ArrayBase<S2, D>) -> Result<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    check_shapes(pred.shape(), truth.shape())?;
    let n = pred.len().max(1) as f64;
    Ok(pred.iter().zip(truth.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

pub fn mae<S1, S2, D>(pred: &ArrayBase<S1, D>, truth: &ArrayBase<S2, D>) -> Result<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    check_shapes(pred.shape(), truth.shape())?;
    let n = pred.len().max(1) as f64;
    Ok(pred.iter().zip(truth.iter()).map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
}

/// MSE and MAE over the entries where `select` is true. Both are 0 when nothing is selected.
pub fn masked_errors<S1, S2, S3, D>(
    pred: &ArrayBase<S1, D>,
    truth: &ArrayBase<S2, D>,
    select: &ArrayBase<S3, D>,
) -> Result<(f64, f64)>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    S3: Data<Elem = bool>,
    D: Dimension,
{
    check_shapes(pred.shape(), truth.shape())?;
    check_shapes(pred.shape(), select.shape())?;
    let (mut se, mut ae, mut n) = (0.0, 0.0, 0usize);
    for ((p, t), &s) in pred.iter().zip(truth.iter()).zip(select.iter()) {
        if s {
            se += (p - t) * (p - t);
            ae += (p - t).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((se / n as f64, ae / n as f64))
}

/// Per-time anomaly labels, `true` = anomalous.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryLabels(pub Vec<bool>);

impl BinaryLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Maximal runs of `true` as half-open ranges.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, &v) in self.0.iter().enumerate() {
            match (v, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((s, i));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.0.len()));
        }
        out
    }
}

impl From<Vec<bool>> for BinaryLabels {
    fn from(v: Vec<bool>) -> Self {
        Self(v)
    }
}

/// Segment-fill adjustment: any hit inside a true anomalous segment marks the whole segment.
pub fn point_adjust(pred: &BinaryLabels, truth: &BinaryLabels) -> Result<BinaryLabels> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction length {} vs truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut out = pred.0.clone();
    for (a, b) in truth.segments() {
        if pred.0[a..b].iter().any(|&p| p) {
            out[a..b].iter_mut().for_each(|p| *p = true);
        }
    }
    Ok(BinaryLabels(out))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Zero denominators give 0.
pub fn precision_recall_f1(pred: &BinaryLabels, truth: &BinaryLabels, adjusted: bool) -> Result<Prf> {
    let pred = if adjusted {
        point_adjust(pred, truth)?
    } else {
        if pred.len() != truth.len() {
            return Err(Error::Shape(format!(
                "prediction length {} vs truth length {}",
                pred.len(),
                truth.len()
            )));
        }
        pred.clone()
    };
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.0.iter().zip(&truth.0) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fnn);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Lower,
    Higher,
}

impl Direction {
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Lower => a < b,
            Direction::Higher => a > b,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Direction::Lower => "lower",
            Direction::Higher => "higher",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub setting: String,
    pub metric: String,
    pub value: f64,
    pub direction: Direction,
}

/// Long-format results keyed by `(method, setting, metric)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

pub type Cell = (String, String);

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        method: &str,
        setting: &str,
        metric: &str,
        value: f64,
        direction: Direction,
    ) -> Result<()> {
        if self
            .rows
            .iter()
            .any(|r| r.method == method && r.setting == setting && r.metric == metric)
        {
            return Err(Error::InvalidArgument(format!(
                "duplicate cell ({method}, {setting}, {metric})"
            )));
        }
        self.rows.push(ResultRow {
            method: method.into(),
            setting: setting.into(),
            metric: metric.into(),
            value,
            direction,
        });
        Ok(())
    }

    pub fn extend(&mut self, other: &ResultTable) -> Result<()> {
        for r in &other.rows {
            self.push(&r.method, &r.setting, &r.metric, r.value, r.direction)?;
        }
        Ok(())
    }

    pub fn methods(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.method) {
                seen.push(r.method.clone());
            }
        }
        seen
    }

    pub fn cells(&self) -> BTreeSet<Cell> {
        self.rows
            .iter()
            .map(|r| (r.setting.clone(), r.metric.clone()))
            .collect()
    }

    pub fn get(&self, method: &str, setting: &str, metric: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.setting == setting && r.metric == metric)
    }

    /// Copy with every method renamed to `method`.
    pub fn relabel(&self, method: &str) -> ResultTable {
        ResultTable {
            rows: self
                .rows
                .iter()
                .map(|r| ResultRow {
                    method: method.into(),
                    ..r.clone()
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "setting", "metric", "value", "direction"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.method.as_str(),
                r.setting.as_str(),
                r.metric.as_str(),
                &r.value.to_string(),
                r.direction.as_str(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut table = ResultTable::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidArgument(format!("result csv: {e}")))?;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let value: f64 = field(3)
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("result csv row {}: bad value", i + 2)))?;
            let direction = match field(4) {
                "lower" => Direction::Lower,
                "higher" => Direction::Higher,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "result csv row {}: bad direction {other:?}",
                        i + 2
                    )))
                }
            };
            table.push(field(0), field(1), field(2), value, direction)?;
        }
        Ok(table)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    /// Fixed-width text rendering followed by an AvgWins footer.
    pub fn render(&self) -> Result<String> {
        let methods = self.methods();
        let mut out = String::new();
        let _ = write!(out, "{:<20} {:<12}", "setting", "metric");
        for m in &methods {
            let _ = write!(out, " {m:>14}");
        }
        out.push('\n');
        for (setting, metric) in self.cells() {
            let _ = write!(out, "{setting:<20} {metric:<12}");
            for m in &methods {
                match self.get(m, &setting, &metric) {
                    Some(r) => {
                        let _ = write!(out, " {:>14.6}", r.value);
                    }
                    None => {
                        let _ = write!(out, " {:>14}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let wins = avg_wins(self, true)?;
        let _ = write!(out, "{:<33}", "AvgWins");
        for m in &methods {
            let _ = write!(out, " {:>13.1}%", 100.0 * wins.get(m).copied().unwrap_or(0.0));
        }
        out.push('\n');
        Ok(out)
    }
}

/// Fraction of `(setting, metric)` cells each method wins. With `count_ties`
/// every method attaining the best value wins the cell; otherwise a cell only
/// counts when its best value is attained by a single method.
pub fn avg_wins(table: &ResultTable, count_ties: bool) -> Result<BTreeMap<String, f64>> {
    if table.rows.is_empty() {
        return Err(Error::InvalidArgument("empty result table".into()));
    }
    let cells = table.cells();
    let mut wins: BTreeMap<String, usize> = table.methods().into_iter().map(|m| (m, 0)).collect();
    for (setting, metric) in &cells {
        let rows: Vec<&ResultRow> = table
            .rows
            .iter()
            .filter(|r| &r.setting == setting && &r.metric == metric)
            .collect();
        let dir = rows[0].direction;
        let best = rows
            .iter()
            .map(|r| r.value)
            .fold(None, |acc: Option<f64>, v| match acc {
                Some(b) if !dir.better(v, b) => Some(b),
                _ => Some(v),
            })
            .expect("non-empty cell");
        let winners: Vec<&&ResultRow> = rows.iter().filter(|r| r.value == best).collect();
        if count_ties || winners.len() == 1 {
            for w in winners {
                *wins.get_mut(&w.method).unwrap() += 1;
            }
        }
    }
    let n = cells.len() as f64;
    Ok(wins.into_iter().map(|(m, w)| (m, w as f64 / n)).collect())
}

/// Monte Carlo resample count when enumeration is too large.
pub const MONTE_CARLO_RESAMPLES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub paired: bool,
    /// Enumerate exactly when the number of arrangements is at most `2^exhaustive_limit`.
    pub exhaustive_limit: u32,
    pub seed: u64,
}

impl Default for PermutationTest {
    fn default() -> Self {
        Self {
            paired: true,
            exhaustive_limit: 20,
            seed: 0,
        }
    }
}

/// One-sided p-value for `mean(a) < mean(b)`: the fraction of relabelled
/// statistics at or below the observed one, counting the identity arrangement.
///
/// Paired mode flips the sign of each difference `a_i − b_i`; unpaired mode
/// reassigns the pooled values to groups of the original sizes.
pub fn permutation_test(a: &[f64], b: &[f64], test: PermutationTest) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("permutation test needs n > 0".into()));
    }
    if test.paired {
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "paired test with lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        paired_sign_flip(&d, test)
    } else {
        unpaired_relabel(a, b, test)
    }
}

fn tol(scale: f64) -> f64 {
    1e-12 * scale.max(1.0)
}

fn paired_sign_flip(d: &[f64], test: PermutationTest) -> Result<f64> {
    let n = d.len();
    let observed: f64 = d.iter().sum();
    let eps = tol(d.iter().map(|v| v.abs()).sum());
    if n as u32 <= test.exhaustive_limit && n < 63 {
        let total = 1u64 << n;
        let mut count = 0u64;
        for signs in 0..total {
            let s: f64 = d
                .iter()
                .enumerate()
                .map(|(i, v)| if signs >> i & 1 == 1 { -v } else { *v })
                .sum();
            if s <= observed + eps {
                count += 1;
            }
        }
        Ok(count as f64 / total as f64)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(test.seed);
        let mut count = 1usize;
        for _ in 0..MONTE_CARLO_RESAMPLES {
            let s: f64 = d
                .iter()
                .map(|v| if rng.random::<bool>() { -v } else { *v })
                .sum();
            if s <= observed + eps {
                count += 1;
            }
        }
        Ok(count as f64 / (MONTE_CARLO_RESAMPLES + 1) as f64)
    }
}

fn log2_binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).log2()).sum()
}

fn unpaired_relabel(a: &[f64], b: &[f64], test: PermutationTest) -> Result<f64> {
    let pooled: Vec<f64> = a.iter().chain(b).cloned().collect();
    let (na, n) = (a.len(), pooled.len());
    let total_sum: f64 = pooled.iter().sum();
    let stat = |sum_a: f64| sum_a / na as f64 - (total_sum - sum_a) / (n - na) as f64;
    let observed = stat(a.iter().sum());
    let eps = tol(pooled.iter().map(|v| v.abs()).sum());
    if log2_binomial(n, na) <= test.exhaustive_limit as f64 {
        // enumerate all size-na subsets in lexicographic order
        let mut idx: Vec<usize> = (0..na).collect();
        let (mut count, mut total) = (0u64, 0u64);
        loop {
            total += 1;
            if stat(idx.iter().map(|&i| pooled[i]).sum()) <= observed + eps {
                count += 1;
            }
            let Some(pos) = (0..na).rev().find(|&i| idx[i] != i + n - na) else {
                break;
            };
            idx[pos] += 1;
            for j in pos + 1..na {
                idx[j] = idx[j - 1] + 1;
            }
        }
        Ok(count as f64 / total as f64)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(test.seed);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut count = 1usize;
        for _ in 0..MONTE_CARLO_RESAMPLES {
            // partial Fisher–Yates for the first na slots
            for i in 0..na {
                let j = rng.random_range(i..n);
                perm.swap(i, j);
            }
            if stat(perm[..na].iter().map(|&i| pooled[i]).sum()) <= observed + eps {
                count += 1;
            }
        }
        Ok(count as f64 / (MONTE_CARLO_RESAMPLES + 1) as f64)
    }
}
