//! Data matrices, the union-of-subspaces generator, and file ingestion.
//!
//! Samples are columns: a [`DataMatrix`] of shape `D×n` holds `n` points in
//! ambient dimension `D`. Files store one sample per row, so loading
//! transposes.
//!
//! Two on-disk formats are supported:
//!
//! * **CSV**: one sample per row, comma-separated decimal floats. A single
//!   header row is skipped when its first token does not parse as a number.
//! * **raw_f64**: a 16-byte header of two little-endian `u64` (record count
//!   `n`, then record width `D`) followed by `n·D` little-endian `f64`
//!   values in record-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::standard_normal_matrix;

/// Column-per-sample real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::shape("data matrix must have D >= 1 and n >= 1"));
        }
        if let Some(idx) = values.iter().position(|x| !x.is_finite()) {
            let (row, col) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::domain(format!(
                "non-finite entry at dimension {row}, sample {col}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub data: DataMatrix,
    pub labels: Vec<usize>,
    pub subspace_bases: Option<Vec<DMatrix<f64>>>,
    pub subspace_dims: Vec<usize>,
}

/// Parameters of the synthetic union-of-subspaces generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub subspaces: usize,
    /// Inclusive range for the per-subspace dimension.
    pub dim_min: usize,
    pub dim_max: usize,
    pub ambient_dim: usize,
    pub points_per_subspace: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Carve all bases out of one orthonormal frame, so subspaces are
    /// mutually orthogonal. Requires `subspaces · dim_max <= ambient_dim`.
    #[serde(default)]
    pub disjoint: bool,
    /// Shuffle sample order (labels follow their samples).
    #[serde(default)]
    pub shuffle: bool,
}

impl GeneratorConfig {
    /// Synthetic protocol: 10 subspaces with dimensions in `[6, 12]` in
    /// `D = 784`, noise-free.
    pub fn standard(points_per_subspace: usize, seed: u64) -> Self {
        Self {
            subspaces: 10,
            dim_min: 6,
            dim_max: 12,
            ambient_dim: 784,
            points_per_subspace,
            noise_sigma: 0.0,
            seed,
            disjoint: false,
            shuffle: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subspaces == 0 {
            return Err(Error::config("subspace count must be >= 1"));
        }
        if self.points_per_subspace == 0 {
            return Err(Error::config("points_per_subspace must be >= 1"));
        }
        if self.ambient_dim == 0 {
            return Err(Error::config("ambient_dim must be >= 1"));
        }
        if self.dim_min == 0 || self.dim_min > self.dim_max || self.dim_max > self.ambient_dim {
            return Err(Error::config(format!(
                "dim_range [{}, {}] must satisfy 1 <= min <= max <= D = {}",
                self.dim_min, self.dim_max, self.ambient_dim
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma must be finite and >= 0"));
        }
        if self.disjoint && self.subspaces * self.dim_max > self.ambient_dim {
            return Err(Error::config(format!(
                "disjoint bases need subspaces * dim_max = {} <= D = {}",
                self.subspaces * self.dim_max,
                self.ambient_dim
            )));
        }
        Ok(())
    }
}

/// Draw a labeled union-of-subspaces dataset. Bases are orthonormalized
/// Gaussian matrices, coefficients are standard Gaussian, and the output is
/// a pure function of `cfg`.
pub fn generate_union_of_subspaces(cfg: &GeneratorConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let dims: Vec<usize> = (0..cfg.subspaces)
        .map(|_| rng.random_range(cfg.dim_min..=cfg.dim_max))
        .collect();
    let total: usize = dims.iter().sum();
    if total > cfg.ambient_dim {
        return Err(Error::config(format!(
            "drawn subspace dimensions sum to {total} > D = {}",
            cfg.ambient_dim
        )));
    }

    let d_amb = cfg.ambient_dim;
    let bases: Vec<DMatrix<f64>> = if cfg.disjoint {
        let frame = standard_normal_matrix(d_amb, total, &mut rng).qr().q();
        let mut offset = 0;
        dims.iter()
            .map(|&d| {
                let b = frame.columns(offset, d).into_owned();
                offset += d;
                b
            })
            .collect()
    } else {
        dims.iter()
            .map(|&d| standard_normal_matrix(d_amb, d, &mut rng).qr().q())
            .collect()
    };

    let per = cfg.points_per_subspace;
    let n = cfg.subspaces * per;
    let mut values = DMatrix::zeros(d_amb, n);
    let mut labels = Vec::with_capacity(n);
    for (c, basis) in bases.iter().enumerate() {
        let coeffs = standard_normal_matrix(basis.ncols(), per, &mut rng);
        let block = basis * coeffs;
        values.columns_mut(c * per, per).copy_from(&block);
        labels.extend(std::iter::repeat(c).take(per));
    }
    if cfg.noise_sigma > 0.0 {
        for x in values.iter_mut() {
            *x += cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    if cfg.shuffle {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        values = values.select_columns(order.iter());
        labels = order.iter().map(|&j| labels[j]).collect();
    }

    Ok(LabeledDataset {
        data: DataMatrix::new(values)?,
        labels,
        subspace_bases: Some(bases),
        subspace_dims: dims,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Csv,
    RawF64,
}

impl std::str::FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FileFormat::Csv),
            "raw_f64" => Ok(FileFormat::RawF64),
            other => Err(Error::config(format!("unknown file format `{other}`"))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: FileFormat) -> Result<DataMatrix> {
    let path = path.as_ref();
    let (records, width, flat) = match format {
        FileFormat::Csv => read_csv_records(path)?,
        FileFormat::RawF64 => read_raw_f64(path)?,
    };
    // record-major flat buffer == column-major D×n
    let values = DMatrix::from_vec(width, records, flat);
    DataMatrix::new(values).map_err(|e| Error::ingestion(path, e.to_string()))
}

fn read_csv_records(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let mut width: Option<usize> = None;
    let mut flat = Vec::new();
    let mut records = 0usize;
    for (idx, rec) in reader.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::ingestion(path, format!("row {row}: {e}")))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if idx == 0 {
            let first = rec.get(0).unwrap_or("");
            if first.parse::<f64>().is_err() {
                continue;
            }
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::ingestion(
                    path,
                    format!("ragged row {row}: expected {w} columns, found {}", rec.len()),
                ))
            }
            Some(_) => {}
        }
        for (col, cell) in rec.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                Error::ingestion(
                    path,
                    format!("row {row}, column {}: non-numeric cell `{cell}`", col + 1),
                )
            })?;
            flat.push(value);
        }
        records += 1;
    }
    let width = width.ok_or_else(|| Error::ingestion(path, "no data rows"))?;
    Ok((records, width, flat))
}

/// Read a raw_f64 file, returning `(records, width, values)` in record-major
/// order.
pub fn read_raw_f64(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut header = [0u8; 16];
    file.read_exact(&mut header)
        .map_err(|_| Error::ingestion(path, "truncated header (need 16 bytes)"))?;
    let records = u64::from_le_bytes(header[..8].try_into().unwrap()) as usize;
    let width = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
    let expected = records
        .checked_mul(width)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::ingestion(path, "header shape overflows"))?;

    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() != expected {
        return Err(Error::ingestion(
            path,
            format!(
                "header declares n = {records}, D = {width} ({expected} payload bytes) but file has {}",
                payload.len()
            ),
        ));
    }
    let flat = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((records, width, flat))
}

/// Write `records` rows of `width` values from a record-major buffer.
pub fn write_raw_f64(path: impl AsRef<Path>, records: usize, width: usize, flat: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if flat.len() != records * width {
        return Err(Error::shape(format!(
            "buffer of {} values does not match {records}x{width}",
            flat.len()
        )));
    }
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));
    write(&(records as u64).to_le_bytes())?;
    write(&(width as u64).to_le_bytes())?;
    for v in flat {
        write(&v.to_le_bytes())?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Store a matrix whose columns are the records (e.g. a data matrix or a
/// landmark matrix).
pub fn save_columns_raw(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_raw_f64(path, m.ncols(), m.nrows(), m.as_slice())
}

/// Store a matrix whose rows are the records (e.g. `P` or an embedding).
pub fn save_rows_raw(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let t = m.transpose();
    write_raw_f64(path, m.nrows(), m.ncols(), t.as_slice())
}

/// Inverse of [`save_columns_raw`].
pub fn load_columns_raw(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let (records, width, flat) = read_raw_f64(path)?;
    Ok(DMatrix::from_vec(width, records, flat))
}

/// Inverse of [`save_rows_raw`].
pub fn load_rows_raw(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let (records, width, flat) = read_raw_f64(path)?;
    Ok(DMatrix::from_vec(width, records, flat).transpose())
}

/// Write a matrix as CSV, one matrix row per line.
pub fn save_rows_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    UnitColumns,
    Minmax01,
}

pub fn normalize(x: &DataMatrix, mode: Normalization) -> Result<DataMatrix> {
    let mut values = x.values.clone();
    match mode {
        Normalization::None => {}
        Normalization::UnitColumns => {
            for (j, mut col) in values.column_iter_mut().enumerate() {
                let norm = col.norm();
                if norm == 0.0 {
                    return Err(Error::DegenerateSample { column: j });
                }
                col /= norm;
            }
        }
        Normalization::Minmax01 => {
            let lo = values.min();
            let hi = values.max();
            // a constant matrix maps to all zeros
            let span = hi - lo;
            values.apply(|v| *v = if span > 0.0 { (*v - lo) / span } else { 0.0 });
        }
    }
    DataMatrix::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(s: usize, lo: usize, hi: usize, d: usize, per: usize) -> GeneratorConfig {
        GeneratorConfig {
            subspaces: s,
            dim_min: lo,
            dim_max: hi,
            ambient_dim: d,
            points_per_subspace: per,
            noise_sigma: 0.0,
            seed: 11,
            disjoint: false,
            shuffle: false,
        }
    }

    #[test]
    fn standard_protocol_shape() {
        let ds = generate_union_of_subspaces(&GeneratorConfig::standard(30, 1)).unwrap();
        assert_eq!(ds.data.n(), 300);
        assert_eq!(ds.data.dim(), 784);
        let mut distinct = ds.labels.clone();
        distinct.dedup();
        assert_eq!(distinct.len(), 10);
        assert!(ds.subspace_dims.iter().all(|d| (6..=12).contains(d)));
    }

    #[test]
    fn single_line_is_rank_one() {
        let ds = generate_union_of_subspaces(&cfg(1, 1, 1, 2, 5)).unwrap();
        let x = ds.data.values();
        let first = x.column(0);
        for j in 1..5 {
            let cross = first[0] * x[(1, j)] - first[1] * x[(0, j)];
            assert!(cross.abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let c = cfg(2, 2, 2, 10, 50);
        let a = generate_union_of_subspaces(&c).unwrap();
        let b = generate_union_of_subspaces(&c).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn samples_lie_in_their_subspace() {
        let ds = generate_union_of_subspaces(&cfg(3, 2, 4, 20, 15)).unwrap();
        let bases = ds.subspace_bases.as_ref().unwrap();
        for (j, &c) in ds.labels.iter().enumerate() {
            let x = ds.data.values().column(j);
            let b = &bases[c];
            let proj = b * (b.transpose() * x);
            assert!((x - proj).norm() <= 1e-9 * x.norm());
            assert!(crate::linalg::orthonormality_defect(b) < 1e-10);
        }
    }

    #[test]
    fn disjoint_bases_are_mutually_orthogonal() {
        let mut c = cfg(3, 2, 3, 12, 4);
        c.disjoint = true;
        let ds = generate_union_of_subspaces(&c).unwrap();
        let bases = ds.subspace_bases.unwrap();
        let cross = bases[0].transpose() * &bases[1];
        assert!(cross.amax() < 1e-12);
    }

    #[test]
    fn shuffle_keeps_labels_with_samples() {
        let mut c = cfg(3, 2, 2, 10, 6);
        c.shuffle = true;
        let ds = generate_union_of_subspaces(&c).unwrap();
        let bases = ds.subspace_bases.as_ref().unwrap();
        for (j, &l) in ds.labels.iter().enumerate() {
            let x = ds.data.values().column(j);
            let proj = &bases[l] * (bases[l].transpose() * x);
            assert!((x - proj).norm() <= 1e-9 * x.norm());
        }
    }

    #[test]
    fn rejects_bad_dim_range() {
        assert!(matches!(
            generate_union_of_subspaces(&cfg(2, 0, 3, 10, 5)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_union_of_subspaces(&cfg(2, 3, 11, 10, 5)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_is_transposed_on_load() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,b,c,d\n1,2,3,4\n5,6,7,8\n9,10,11,12").unwrap();
        let x = load_dataset(f.path(), FileFormat::Csv).unwrap();
        assert_eq!((x.n(), x.dim()), (3, 4));
        assert_eq!(x.values()[(1, 2)], 10.0);
    }

    #[test]
    fn csv_ragged_row_is_reported() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,2,3,4\n1,2,3,4,5").unwrap();
        let err = load_dataset(f.path(), FileFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn csv_non_numeric_cell_is_reported() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,2\n3,x").unwrap();
        let err = load_dataset(f.path(), FileFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("row 2, column 2"), "{err}");
    }

    #[test]
    fn raw_identity_payload() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_raw_f64(f.path(), 2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = load_dataset(f.path(), FileFormat::RawF64).unwrap();
        assert_eq!(x.values(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn raw_header_mismatch() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&3u64.to_le_bytes()).unwrap();
        f.write_all(&2u64.to_le_bytes()).unwrap();
        f.write_all(&1.0f64.to_le_bytes()).unwrap();
        assert!(matches!(
            load_dataset(f.path(), FileFormat::RawF64),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_dataset("/nonexistent/file.csv", FileFormat::Csv),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn row_and_column_raw_roundtrip() {
        let m = DMatrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64);
        let dir = tempfile::tempdir().unwrap();
        save_rows_raw(dir.path().join("r"), &m).unwrap();
        save_columns_raw(dir.path().join("c"), &m).unwrap();
        assert_eq!(load_rows_raw(dir.path().join("r")).unwrap(), m);
        assert_eq!(load_columns_raw(dir.path().join("c")).unwrap(), m);
    }

    #[test]
    fn unit_columns_three_four_five() {
        let x = DataMatrix::new(DMatrix::from_column_slice(2, 1, &[3.0, 4.0])).unwrap();
        let y = normalize(&x, Normalization::UnitColumns).unwrap();
        assert!((y.values()[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((y.values()[(1, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn unit_columns_zero_column_errors() {
        let x = DataMatrix::new(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(
            normalize(&x, Normalization::UnitColumns),
            Err(Error::DegenerateSample { column: 1 })
        ));
    }

    #[test]
    fn minmax_and_none() {
        let x = DataMatrix::new(DMatrix::from_column_slice(1, 3, &[-2.0, 0.0, 2.0])).unwrap();
        let y = normalize(&x, Normalization::Minmax01).unwrap();
        assert_eq!(y.values().as_slice(), &[0.0, 0.5, 1.0]);
        assert_eq!(normalize(&x, Normalization::None).unwrap(), x);
    }

    proptest::proptest! {
        #[test]
        fn unit_columns_idempotent(seed in 0u64..500, d in 1usize..6, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DataMatrix::new(standard_normal_matrix(d, n, &mut rng)).unwrap();
            let once = normalize(&x, Normalization::UnitColumns).unwrap();
            let twice = normalize(&once, Normalization::UnitColumns).unwrap();
            for col in once.values().column_iter() {
                proptest::prop_assert!((col.norm() - 1.0).abs() < 1e-12);
            }
            proptest::prop_assert!((once.values() - twice.values()).amax() < 1e-15);
        }
    }
}
