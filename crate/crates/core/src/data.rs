//! Series containers, lagging, chronological splits, z-scoring and the
//! adjacency representation, plus their CSV formats.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor applied to per-channel standard deviations.
pub const STD_EPSILON: f64 = 1e-8;

/// `T x P` observations, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries<T> {
    values: Array2<T>,
    channel_names: Vec<String>,
    dt: Option<f64>,
}

impl<T: Scalar> MultivariateSeries<T> {
    pub fn new(values: Array2<T>, channel_names: Vec<String>) -> Result<Self> {
        let (t, p) = values.dim();
        if t == 0 {
            return Err(Error::EmptySeries);
        }
        if p == 0 {
            return Err(Error::Shape("series has no channels".into()));
        }
        if channel_names.len() != p {
            return Err(Error::Shape(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                p
            )));
        }
        if let Some(((row, col), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {v} at step {row}, channel {col}"
            )));
        }
        Ok(Self {
            values,
            channel_names,
            dt: None,
        })
    }

    /// Channels named `x0, x1, ...`.
    pub fn unnamed(values: Array2<T>) -> Result<Self> {
        let names = default_channel_names(values.ncols());
        Self::new(values, names)
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    /// Rows `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Config(format!(
                "empty or out-of-range segment {start}..{end} of {}",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values.slice(s![start..end, ..]).to_owned(),
            channel_names: self.channel_names.clone(),
            dt: self.dt,
        })
    }

    /// Converts the element type, e.g. to feed an `f32` network from `f64` data.
    pub fn cast<U: Scalar>(&self) -> MultivariateSeries<U> {
        MultivariateSeries {
            values: self.values.mapv(|v| U::of(v.as_f64())),
            channel_names: self.channel_names.clone(),
            dt: self.dt,
        }
    }
}

pub fn default_channel_names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("x{i}")).collect()
}

/// Binary `P x P` Granger structure. `entry(i, j) == 1` means `j -> i`:
/// rows are effects, columns are causes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    entries: Array2<u8>,
}

impl AdjacencyMatrix {
    pub fn new(entries: Array2<u8>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Shape(format!(
                "adjacency must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if let Some(((row, col), _)) = entries.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(Error::NonBinary { row, col });
        }
        Ok(Self { entries })
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            entries: Array2::zeros((p, p)),
        }
    }

    /// Sets `cause -> effect`.
    pub fn set_edge(&mut self, cause: usize, effect: usize) {
        self.entries[[effect, cause]] = 1;
    }

    pub fn has_edge(&self, cause: usize, effect: usize) -> bool {
        self.entries[[effect, cause]] == 1
    }

    pub fn entries(&self) -> &Array2<u8> {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn count_edges(&self, include_diagonal: bool) -> usize {
        self.entries
            .indexed_iter()
            .filter(|((r, c), &v)| v == 1 && (include_diagonal || r != c))
            .count()
    }

    /// P rows of comma-separated 0/1 entries, no header.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for row in self.entries.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<Vec<u8>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for (col, cell) in line.split(',').enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    path: label.clone(),
                    line: idx + 1,
                    msg: format!("non-numeric cell {cell:?}"),
                })?;
                if v != 0.0 && v != 1.0 {
                    return Err(Error::NonBinary { row: rows.len(), col });
                }
                row.push(v as u8);
            }
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        path: label,
                        line: idx + 1,
                        msg: format!("ragged row: {} entries, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::EmptySeries);
        }
        let p = rows.len();
        let flat: Vec<u8> = rows.into_iter().flatten().collect();
        let entries = Array2::from_shape_vec((p, flat.len() / p), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(entries)
    }
}

/// Supervised pairs built from a series: each input row holds the previous
/// `K` steps in lag-major order (all channels at lag 1, then all channels at
/// lag 2, ...), the target row is the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDataset<T> {
    pub inputs: Array2<T>,
    pub targets: Array2<T>,
    pub lags: usize,
    pub channels: usize,
}

impl<T: Scalar> LaggedDataset<T> {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// Column of channel `channel` at lag `lag` (1-based) in an input row.
    pub fn input_column(&self, lag: usize, channel: usize) -> usize {
        (lag - 1) * self.channels + channel
    }
}

pub fn make_lagged_dataset<T: Scalar>(
    series: &MultivariateSeries<T>,
    lags: usize,
) -> Result<LaggedDataset<T>> {
    if lags == 0 {
        return Err(Error::Config("lag order must be positive".into()));
    }
    let t = series.len();
    if lags >= t {
        return Err(Error::InsufficientLength {
            len: t,
            needed: lags,
        });
    }
    let p = series.channels();
    let n = t - lags;
    let x = series.values();
    let mut inputs = Array2::zeros((n, lags * p));
    for row in 0..n {
        let step = row + lags;
        for lag in 1..=lags {
            let src = x.row(step - lag);
            inputs
                .slice_mut(s![row, (lag - 1) * p..lag * p])
                .assign(&src);
        }
    }
    let targets = x.slice(s![lags.., ..]).to_owned();
    Ok(LaggedDataset {
        inputs,
        targets,
        lags,
        channels: p,
    })
}

/// Fractions of a series assigned to the train, validation and test segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Config(format!("split fractions must be >= 0: {fracs:?}")));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1: {fracs:?}")));
        }
        Ok(())
    }

    /// Segment lengths for a series of `total` steps: each fraction is
    /// floored, the remainder goes to the training segment.
    pub fn lengths(&self, total: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let floor = |f: f64| ((total as f64) * f + 1e-9).floor() as usize;
        let val = floor(self.val_frac);
        let test = floor(self.test_frac);
        let train = total.saturating_sub(val + test);
        if train == 0 || val == 0 || test == 0 {
            return Err(Error::Config(format!(
                "split of {total} steps leaves an empty segment ({train}/{val}/{test})"
            )));
        }
        Ok((train, val, test))
    }
}

/// Contiguous train, validation and test segments in time order.
pub fn chronological_split<T: Scalar>(
    series: &MultivariateSeries<T>,
    spec: &SplitSpec,
) -> Result<(MultivariateSeries<T>, MultivariateSeries<T>, MultivariateSeries<T>)> {
    let (train, val, test) = spec.lengths(series.len())?;
    Ok((
        series.slice(0, train)?,
        series.slice(train, train + val)?,
        series.slice(train + val, train + val + test)?,
    ))
}

/// Per-channel mean and standard deviation (sample convention, `N - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_standardizer<T: Scalar>(train: &MultivariateSeries<T>) -> Result<StandardizationStats> {
    let n = train.len();
    if n < 2 {
        return Err(Error::InsufficientLength { len: n, needed: 1 });
    }
    let x = train.values().mapv(|v| v.as_f64());
    let mean: Array1<f64> = x.mean_axis(Axis(0)).expect("nonempty");
    let std = x
        .std_axis(Axis(0), 1.0)
        .mapv(|s| if s > STD_EPSILON { s } else { STD_EPSILON });
    Ok(StandardizationStats {
        mean: mean.to_vec(),
        std: std.to_vec(),
    })
}

impl StandardizationStats {
    fn check<T: Scalar>(&self, series: &MultivariateSeries<T>) -> Result<()> {
        if self.mean.len() != series.channels() || self.std.len() != series.channels() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} channels, series has {}",
                self.mean.len(),
                series.channels()
            )));
        }
        Ok(())
    }

    pub fn apply<T: Scalar>(&self, series: &MultivariateSeries<T>) -> Result<MultivariateSeries<T>> {
        self.check(series)?;
        let mut values = series.values().clone();
        for (p, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (T::of(self.mean[p]), T::of(self.std[p]));
            col.mapv_inplace(|v| (v - m) / s);
        }
        MultivariateSeries::new(values, series.channel_names().to_vec()).map(|x| match series.dt() {
            Some(dt) => x.with_dt(dt),
            None => x,
        })
    }

    pub fn invert<T: Scalar>(&self, series: &MultivariateSeries<T>) -> Result<MultivariateSeries<T>> {
        self.check(series)?;
        let mut values = series.values().clone();
        for (p, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (T::of(self.mean[p]), T::of(self.std[p]));
            col.mapv_inplace(|v| v * s + m);
        }
        MultivariateSeries::new(values, series.channel_names().to_vec())
    }
}

pub fn apply_standardizer<T: Scalar>(
    series: &MultivariateSeries<T>,
    stats: &StandardizationStats,
) -> Result<MultivariateSeries<T>> {
    stats.apply(series)
}

/// Reads a series CSV: a header row of channel names, then one row of
/// decimal values per time step. NaN and infinities are rejected.
pub fn read_series_csv(path: &Path) -> Result<MultivariateSeries<f64>> {
    let label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let names: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let p = names.len();
    let mut flat = Vec::new();
    let mut rows = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != p {
            return Err(Error::Parse {
                path: label,
                line,
                msg: format!("ragged row: {} cells, header has {}", record.len(), p),
            });
        }
        for cell in record.iter() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: label.clone(),
                line,
                msg: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: label.clone(),
                    line,
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            flat.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptySeries);
    }
    let values = Array2::from_shape_vec((rows, p), flat).map_err(|e| Error::Shape(e.to_string()))?;
    MultivariateSeries::new(values, names)
}

pub fn write_series_csv<T: Scalar>(series: &MultivariateSeries<T>, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(File::create(path)?);
    writeln!(file, "{}", series.channel_names().join(","))?;
    for row in series.values().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{}", v.as_f64())).collect();
        writeln!(file, "{}", cells.join(","))?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn ramp(t: usize, p: usize) -> MultivariateSeries<f64> {
        let values = Array2::from_shape_fn((t, p), |(i, j)| (i * 10 + j) as f64);
        MultivariateSeries::unnamed(values).unwrap()
    }

    #[test]
    fn lagged_shape_counts() {
        let ds = make_lagged_dataset(&ramp(5, 2), 2).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.inputs.ncols(), 4);
        assert_eq!(ds.targets.ncols(), 2);
    }

    #[test]
    fn lagged_zero_series() {
        let s = MultivariateSeries::unnamed(Array2::<f64>::zeros((8, 3))).unwrap();
        let ds = make_lagged_dataset(&s, 3).unwrap();
        assert!(ds.inputs.iter().all(|&v| v == 0.0));
        assert!(ds.targets.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lagged_shift_identity() {
        let values = Array2::from_shape_fn((6, 1), |(i, _)| i as f64);
        let ds = make_lagged_dataset(&MultivariateSeries::unnamed(values).unwrap(), 1).unwrap();
        assert_eq!(ds.inputs.column(0).to_vec(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.targets.column(0).to_vec(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn lagged_layout_is_lag_major() {
        let s = ramp(6, 3);
        let ds = make_lagged_dataset(&s, 2).unwrap();
        // row 0 predicts step 2: lag 1 is step 1, lag 2 is step 0
        assert_eq!(ds.inputs.row(0).to_vec(), vec![10., 11., 12., 0., 1., 2.]);
        assert_eq!(ds.input_column(2, 1), 4);
    }

    #[test]
    fn lagged_too_short() {
        let err = make_lagged_dataset(&ramp(3, 1), 3).unwrap_err();
        assert!(matches!(err, Error::InsufficientLength { .. }));
        assert!(err.to_string().contains("insufficient length"));
    }

    #[test]
    fn split_lengths() {
        let spec = SplitSpec { train_frac: 0.7, val_frac: 0.1, test_frac: 0.2 };
        assert_eq!(spec.lengths(100).unwrap(), (70, 10, 20));
        let spec = SplitSpec { train_frac: 0.8, val_frac: 0.1, test_frac: 0.1 };
        assert_eq!(spec.lengths(10).unwrap(), (8, 1, 1));
        let spec = SplitSpec { train_frac: 0.5, val_frac: 0.25, test_frac: 0.25 };
        assert!(spec.lengths(2).is_err());
    }

    #[test]
    fn split_remainder_goes_to_train() {
        let spec = SplitSpec { train_frac: 0.6, val_frac: 0.2, test_frac: 0.2 };
        assert_eq!(spec.lengths(11).unwrap(), (7, 2, 2));
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let spec = SplitSpec { train_frac: 0.7, val_frac: 0.2, test_frac: 0.2 };
        assert!(spec.validate().is_err());
        let spec = SplitSpec { train_frac: 1.2, val_frac: -0.1, test_frac: -0.1 };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn split_partitions_in_order() {
        let s = ramp(50, 2);
        let (a, b, c) = chronological_split(&s, &SplitSpec::default()).unwrap();
        let joined = ndarray::concatenate(Axis(0), &[a.values().view(), b.values().view(), c.values().view()])
            .unwrap();
        assert_eq!(&joined, s.values());
    }

    #[test]
    fn standardizer_two_points() {
        let s = MultivariateSeries::unnamed(array![[1.0], [3.0]]).unwrap();
        let stats = fit_standardizer(&s).unwrap();
        assert_abs_diff_eq!(stats.mean[0], 2.0);
        assert_abs_diff_eq!(stats.std[0], 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn standardizer_constant_channel() {
        let s = MultivariateSeries::unnamed(array![[4.0, 1.0], [4.0, 2.0], [4.0, 3.0]]).unwrap();
        let stats = fit_standardizer(&s).unwrap();
        assert_eq!(stats.std[0], STD_EPSILON);
        let z = stats.apply(&s).unwrap();
        assert!(z.values().column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardizer_identity_and_point() {
        let s = MultivariateSeries::unnamed(array![[5.0, -1.0], [7.0, 2.0]]).unwrap();
        let ident = StandardizationStats { mean: vec![0.0, 0.0], std: vec![1.0, 1.0] };
        assert_eq!(ident.apply(&s).unwrap(), s);
        let stats = StandardizationStats { mean: vec![5.0, 0.0], std: vec![2.0, 1.0] };
        assert_eq!(stats.apply(&s).unwrap().values()[[0, 0]], 0.0);
    }

    #[test]
    fn standardizer_dimension_mismatch() {
        let s = ramp(4, 3);
        let stats = StandardizationStats { mean: vec![0.0], std: vec![1.0] };
        assert!(matches!(stats.apply(&s), Err(Error::Shape(_))));
    }

    #[test]
    fn standardizer_on_standardized_data() {
        let s = ramp(30, 3);
        let z = fit_standardizer(&s).unwrap().apply(&s).unwrap();
        let stats = fit_standardizer(&z).unwrap();
        for p in 0..3 {
            assert!(stats.mean[p].abs() < 1e-9);
            assert!((stats.std[p] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn series_rejects_nan() {
        assert!(MultivariateSeries::unnamed(array![[1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn adjacency_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut a = AdjacencyMatrix::zeros(3);
        a.set_edge(2, 0);
        a.write_csv(&path).unwrap();
        assert_eq!(AdjacencyMatrix::read_csv(&path).unwrap(), a);
        std::fs::write(&path, "0,1\n2,0\n").unwrap();
        let err = AdjacencyMatrix::read_csv(&path).unwrap_err();
        assert!(err.to_string().contains("non-binary ground truth"));
    }
}
