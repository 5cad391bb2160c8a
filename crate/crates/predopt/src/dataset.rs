//! Datasets binding features and costs to precomputed true optima, with
//! seeded mini-batch iteration, a binary persistence format, and CSV export.
//!
//! Building a dataset solves every sample's optimization instance once (the
//! rows fan out to the worker pool under the `parallel` feature) and caches
//! `(w*, z*)`; training losses then never re-solve the true problems.
//!
//! # File format (`.dfld`)
//!
//! A single container, fully little-endian:
//!
//! ```text
//! magic      6 bytes   "DFLDS1"
//! version    u16       currently 1
//! oracle     u32 len + UTF-8 bytes   oracle fingerprint string
//! provenance u32 len + UTF-8 bytes   free-form seed/source note
//! oracle_id  u64       first 8 bytes of SHA-256 of the fingerprint string
//! n, p, d    u64 × 3   row count and dimensions
//! X          n·p f64   features, row-major
//! C          n·d f64   costs, row-major
//! Wstar      n·d f64   optimal solutions, row-major
//! Zstar      n   f64   optimal objectives
//! checksum   u64       first 8 bytes of SHA-256 over all preceding bytes
//! ```
//!
//! Doubles round-trip bit-exactly. Loading verifies the checksum, matches the
//! fingerprint against the caller's oracle, and re-checks the
//! objective-consistency invariant on a 1% row sample (every 100th row).

use std::path::Path;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::oracle::{Oracle, OracleError};
use crate::seeding::{derive_seed, substream, STREAM_SHUFFLE};

const MAGIC: &[u8; 6] = b"DFLDS1";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("solver failed on row {row}: {source}")]
    Solver {
        row: usize,
        #[source]
        source: OracleError,
    },
    #[error("malformed dataset file: {0}")]
    Malformed(String),
    #[error("checksum mismatch: file is corrupt")]
    ChecksumMismatch,
    #[error("oracle fingerprint mismatch: file was built for `{found}`, not `{expected}`")]
    FingerprintMismatch { expected: String, found: String },
    #[error("inconsistent dataset at row {row}: {detail}")]
    Inconsistent { row: usize, detail: String },
}

/// Features and costs together with each sample's precomputed optimal
/// solution and objective under a specific oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionDataset {
    /// `n × p` feature matrix.
    pub features: Vec<Vec<f64>>,
    /// `n × d` true cost matrix.
    pub costs: Vec<Vec<f64>>,
    /// `n × d` optimal decisions `w*(c_i)`.
    pub solutions: Vec<Vec<f64>>,
    /// `n` optimal objective values `z*(c_i)`.
    pub objectives: Vec<f64>,
    /// Fingerprint of the oracle the optima were computed against.
    pub oracle_fingerprint: String,
    /// Free-form note on where the data came from (e.g. generator seed).
    pub provenance: String,
}

impl DecisionDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn cost_dim(&self) -> usize {
        self.costs.first().map_or(0, Vec::len)
    }

    /// Full consistency check: shapes, objective identity
    /// `z*_i = c_i·w*_i` (within 1e-9), and feasibility of every solution.
    pub fn validate(&self, oracle: &dyn Oracle) -> Result<(), DatasetError> {
        let n = self.len();
        if self.costs.len() != n || self.solutions.len() != n || self.objectives.len() != n {
            return Err(DatasetError::ShapeMismatch(format!(
                "rows disagree: X {}, C {}, Wstar {}, Zstar {}",
                n,
                self.costs.len(),
                self.solutions.len(),
                self.objectives.len()
            )));
        }
        let fp = oracle.fingerprint();
        if self.oracle_fingerprint != fp {
            return Err(DatasetError::FingerprintMismatch {
                expected: fp,
                found: self.oracle_fingerprint.clone(),
            });
        }
        for row in 0..n {
            check_row_consistency(self, oracle, row)?;
        }
        Ok(())
    }

    /// Splits off the leading `count` rows into a new dataset (train/test
    /// partitioning), leaving the remainder in `self`'s order untouched.
    pub fn split_front(&self, count: usize) -> (DecisionDataset, DecisionDataset) {
        let take = count.min(self.len());
        let head = DecisionDataset {
            features: self.features[..take].to_vec(),
            costs: self.costs[..take].to_vec(),
            solutions: self.solutions[..take].to_vec(),
            objectives: self.objectives[..take].to_vec(),
            oracle_fingerprint: self.oracle_fingerprint.clone(),
            provenance: self.provenance.clone(),
        };
        let tail = DecisionDataset {
            features: self.features[take..].to_vec(),
            costs: self.costs[take..].to_vec(),
            solutions: self.solutions[take..].to_vec(),
            objectives: self.objectives[take..].to_vec(),
            oracle_fingerprint: self.oracle_fingerprint.clone(),
            provenance: self.provenance.clone(),
        };
        (head, tail)
    }

    /// Batches of row indices for one epoch: a seeded permutation when
    /// `shuffle` is set, storage order otherwise. Batches partition the
    /// dataset; only the last may be short.
    pub fn iterate_batches(&self, it: &BatchIterator) -> impl Iterator<Item = Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if it.shuffle {
            shuffle_in_place(&mut order, it.epoch_seed, 0);
        }
        let batch = it.batch_size;
        let chunks: Vec<Vec<usize>> =
            order.chunks(batch).map(<[usize]>::to_vec).collect();
        chunks.into_iter()
    }

    /// Writes one CSV row per sample — features, costs, solution, objective —
    /// with shortest-round-trip float formatting. For inspection; the binary
    /// container is the authoritative format.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<(), DatasetError> {
        let p = self.feature_dim();
        let d = self.cost_dim();
        let mut header = Vec::with_capacity(p + 2 * d + 1);
        header.extend((0..p).map(|q| format!("x{q}")));
        header.extend((0..d).map(|j| format!("c{j}")));
        header.extend((0..d).map(|j| format!("w{j}")));
        header.push("z".into());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut fields = Vec::with_capacity(p + 2 * d + 1);
            fields.extend(self.features[i].iter().map(f64::to_string));
            fields.extend(self.costs[i].iter().map(f64::to_string));
            fields.extend(self.solutions[i].iter().map(f64::to_string));
            fields.push(self.objectives[i].to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Serializes to the `.dfld` container (see module docs).
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let p = self.feature_dim();
        let d = self.cost_dim();
        let mut buf = Vec::with_capacity(64 + 8 * n * (p + 2 * d + 1));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        push_string(&mut buf, &self.oracle_fingerprint);
        push_string(&mut buf, &self.provenance);
        buf.extend_from_slice(&hash64(self.oracle_fingerprint.as_bytes()).to_le_bytes());
        for dim in [n, p, d] {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for row in &self.features {
            push_f64s(&mut buf, row);
        }
        for row in &self.costs {
            push_f64s(&mut buf, row);
        }
        for row in &self.solutions {
            push_f64s(&mut buf, row);
        }
        push_f64s(&mut buf, &self.objectives);
        let checksum = hash64(&buf);
        buf.extend_from_slice(&checksum.to_le_bytes());
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    /// Parses a `.dfld` container and binds it to `oracle`, verifying the
    /// checksum, the fingerprint, and — on every 100th row — the objective
    /// consistency and feasibility invariants.
    pub fn from_bytes(data: &[u8], oracle: &dyn Oracle) -> Result<Self, DatasetError> {
        let mut r = Reader { data, pos: 0 };
        let magic = r.take(6)?;
        if magic != MAGIC {
            return Err(DatasetError::Malformed("bad magic string".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(DatasetError::Malformed(format!(
                "unsupported format version {version}"
            )));
        }
        let fingerprint = r.take_string()?;
        let provenance = r.take_string()?;
        let stored_id = r.take_u64()?;
        let n = r.take_u64()? as usize;
        let p = r.take_u64()? as usize;
        let d = r.take_u64()? as usize;
        let cells = (n as u128) * ((p + 2 * d + 1) as u128) * 8;
        if cells != (data.len().saturating_sub(r.pos + 8)) as u128 {
            return Err(DatasetError::Malformed(
                "payload size disagrees with header dimensions".into(),
            ));
        }
        let features = r.take_matrix(n, p)?;
        let costs = r.take_matrix(n, d)?;
        let solutions = r.take_matrix(n, d)?;
        let objectives = r.take_f64s(n)?;
        let body_end = r.pos;
        let stored_checksum = r.take_u64()?;
        if r.pos != data.len() {
            return Err(DatasetError::Malformed("trailing bytes after checksum".into()));
        }
        if hash64(&data[..body_end]) != stored_checksum {
            return Err(DatasetError::ChecksumMismatch);
        }
        if hash64(fingerprint.as_bytes()) != stored_id {
            return Err(DatasetError::Malformed("fingerprint hash disagrees".into()));
        }
        let expected = oracle.fingerprint();
        if fingerprint != expected {
            return Err(DatasetError::FingerprintMismatch { expected, found: fingerprint });
        }
        let ds = DecisionDataset {
            features,
            costs,
            solutions,
            objectives,
            oracle_fingerprint: fingerprint,
            provenance,
        };
        for row in (0..n).step_by(100) {
            check_row_consistency(&ds, oracle, row)?;
        }
        Ok(ds)
    }

    pub fn load(path: &Path, oracle: &dyn Oracle) -> Result<Self, DatasetError> {
        let data = std::fs::read(path)?;
        Self::from_bytes(&data, oracle)
    }
}

/// Mini-batch sampling plan: batch size, whether to shuffle, and the seed
/// the epoch's permutation is derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchIterator {
    pub batch_size: usize,
    pub shuffle: bool,
    pub epoch_seed: u64,
}

impl BatchIterator {
    pub fn new(batch_size: usize, shuffle: bool, epoch_seed: u64) -> Self {
        assert!(batch_size >= 1, "batch size must be positive");
        BatchIterator { batch_size, shuffle, epoch_seed }
    }
}

/// Seeded Fisher-Yates permutation of `order`, deterministic in
/// `(seed, epoch)` and shared by every consumer that shuffles samples.
pub fn shuffle_in_place(order: &mut [usize], seed: u64, epoch: u64) {
    let mut rng = substream(derive_seed(seed, epoch), STREAM_SHUFFLE);
    order.shuffle(&mut rng);
}

/// Solves every row's instance against `oracle` and caches the optima.
/// Rows fan out to the worker pool; results land in preallocated slots so
/// the output is identical for any worker count. Fails atomically, naming
/// the first offending row.
pub fn build_dataset(
    features: Vec<Vec<f64>>,
    costs: Vec<Vec<f64>>,
    oracle: &dyn Oracle,
) -> Result<DecisionDataset, DatasetError> {
    let n = features.len();
    if costs.len() != n {
        return Err(DatasetError::ShapeMismatch(format!(
            "{n} feature rows but {} cost rows",
            costs.len()
        )));
    }
    let d = oracle.decision_dim();
    for (i, row) in costs.iter().enumerate() {
        if row.len() != d {
            return Err(DatasetError::ShapeMismatch(format!(
                "cost row {i} has length {}, oracle dimension is {d}",
                row.len()
            )));
        }
    }
    let indices: Vec<usize> = (0..n).collect();
    let solved = crate::par_map_indices(&indices, |i| {
        oracle
            .solve(&costs[i])
            .map_err(|source| DatasetError::Solver { row: i, source })
    })?;
    let mut solutions = Vec::with_capacity(n);
    let mut objectives = Vec::with_capacity(n);
    for sol in solved {
        solutions.push(sol.values);
        objectives.push(sol.objective);
    }
    Ok(DecisionDataset {
        features,
        costs,
        solutions,
        objectives,
        oracle_fingerprint: oracle.fingerprint(),
        provenance: String::new(),
    })
}

fn check_row_consistency(
    ds: &DecisionDataset,
    oracle: &dyn Oracle,
    row: usize,
) -> Result<(), DatasetError> {
    let dot: f64 = ds.costs[row]
        .iter()
        .zip(&ds.solutions[row])
        .map(|(c, w)| c * w)
        .sum();
    if (dot - ds.objectives[row]).abs() > 1e-9 {
        return Err(DatasetError::Inconsistent {
            row,
            detail: format!(
                "stored objective {} but cost·solution = {dot}",
                ds.objectives[row]
            ),
        });
    }
    if !oracle.is_feasible(&ds.solutions[row]) {
        return Err(DatasetError::Inconsistent {
            row,
            detail: "stored solution is infeasible".into(),
        });
    }
    Ok(())
}

// ------------------------------------------------------------ byte helpers

fn hash64(data: &[u8]) -> u64 {
    let digest = Sha256::digest(data);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn push_string(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn push_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], DatasetError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| DatasetError::Malformed("unexpected end of file".into()))?;
        let slice = &self.data[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn take_u64(&mut self) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn take_string(&mut self) -> Result<String, DatasetError> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| DatasetError::Malformed("non-UTF-8 header string".into()))
    }

    fn take_f64s(&mut self, count: usize) -> Result<Vec<f64>, DatasetError> {
        let bytes = self.take(count * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn take_matrix(&mut self, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>, DatasetError> {
        (0..rows).map(|_| self.take_f64s(cols)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_shortest_path, GenParams};
    use crate::solvers::{GridOracle, GridSpec};
    use approx::assert_abs_diff_eq;

    fn grid22() -> GridOracle {
        GridOracle::new(GridSpec::new(2, 2))
    }

    fn sample_dataset(n: usize, seed: u64) -> (DecisionDataset, GridOracle) {
        let spec = GridSpec::new(3, 3);
        let oracle = GridOracle::new(spec);
        let params = GenParams { n, p: 4, deg: 2, noise_halfwidth: 0.25, seed };
        let gen = gen_shortest_path(&params, &spec).unwrap();
        let ds = build_dataset(gen.features, gen.costs, &oracle).unwrap();
        (ds, oracle)
    }

    #[test]
    fn build_solves_each_row() {
        let oracle = grid22();
        let ds = build_dataset(
            vec![vec![0.0]],
            vec![vec![1.0, 5.0, 1.0, 5.0]],
            &oracle,
        )
        .unwrap();
        assert_eq!(ds.solutions, vec![vec![1.0, 0.0, 1.0, 0.0]]);
        assert_eq!(ds.objectives, vec![2.0]);
        ds.validate(&oracle).unwrap();
    }

    #[test]
    fn build_is_reproducible() {
        let (a, _) = sample_dataset(17, 5);
        let (b, _) = sample_dataset(17, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn build_reports_offending_row() {
        let oracle = grid22();
        let err = build_dataset(
            vec![vec![0.0], vec![0.0]],
            vec![vec![1.0, 1.0, 1.0, 1.0], vec![1.0, f64::NAN, 1.0, 1.0]],
            &oracle,
        )
        .unwrap_err();
        match err {
            DatasetError::Solver { row, .. } => assert_eq!(row, 1),
            other => panic!("expected a solver error, got {other}"),
        }
    }

    #[test]
    fn optimality_spot_check() {
        // Re-solving must reproduce every stored objective.
        let (ds, oracle) = sample_dataset(50, 9);
        for i in 0..ds.len() {
            let again = oracle.solve(&ds.costs[i]).unwrap();
            assert_abs_diff_eq!(again.objective, ds.objectives[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn batches_partition_the_dataset() {
        let (ds, _) = sample_dataset(5, 1);
        let it = BatchIterator::new(2, false, 0);
        let batches: Vec<Vec<usize>> = ds.iterate_batches(&it).collect();
        assert_eq!(
            batches,
            vec![vec![0, 1], vec![2, 3], vec![4]],
            "unshuffled batches must follow storage order with a short tail"
        );

        let shuffled: Vec<Vec<usize>> =
            ds.iterate_batches(&BatchIterator::new(2, true, 7)).collect();
        let again: Vec<Vec<usize>> =
            ds.iterate_batches(&BatchIterator::new(2, true, 7)).collect();
        assert_eq!(shuffled, again, "same epoch seed must give the same permutation");
        let mut seen: Vec<usize> = shuffled.into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4], "batches must partition the rows");
    }

    #[test]
    fn shuffle_depends_on_seed_and_epoch() {
        let base: Vec<usize> = (0..32).collect();
        let mut a = base.clone();
        let mut b = base.clone();
        let mut c = base.clone();
        shuffle_in_place(&mut a, 1, 0);
        shuffle_in_place(&mut b, 1, 1);
        shuffle_in_place(&mut c, 2, 0);
        assert_ne!(a, base);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (mut ds, oracle) = sample_dataset(23, 12);
        ds.provenance = "seed=12".into();
        let bytes = ds.to_bytes();
        let back = DecisionDataset::from_bytes(&bytes, &oracle).unwrap();
        assert_eq!(back.provenance, "seed=12");
        for (a, b) in ds.features.iter().flatten().zip(back.features.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in ds.costs.iter().flatten().zip(back.costs.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(ds, back);
    }

    #[test]
    fn load_rejects_wrong_oracle() {
        let (ds, _) = sample_dataset(4, 3);
        let bytes = ds.to_bytes();
        let other = GridOracle::new(GridSpec::new(2, 3));
        match DecisionDataset::from_bytes(&bytes, &other).unwrap_err() {
            DatasetError::FingerprintMismatch { expected, found } => {
                assert!(expected.contains("h=2"));
                assert!(found.contains("h=3"));
            }
            other => panic!("expected fingerprint mismatch, got {other}"),
        }
    }

    #[test]
    fn load_rejects_truncation_and_corruption() {
        let (ds, oracle) = sample_dataset(4, 4);
        let bytes = ds.to_bytes();

        let truncated = &bytes[..bytes.len() - 9];
        assert!(matches!(
            DecisionDataset::from_bytes(truncated, &oracle).unwrap_err(),
            DatasetError::Malformed(_)
        ));

        let mut corrupt = bytes.clone();
        let mid = corrupt.len() / 2;
        corrupt[mid] ^= 0xff;
        assert!(matches!(
            DecisionDataset::from_bytes(&corrupt, &oracle).unwrap_err(),
            DatasetError::ChecksumMismatch
        ));

        assert!(matches!(
            DecisionDataset::from_bytes(b"not a dataset", &oracle).unwrap_err(),
            DatasetError::Malformed(_)
        ));
    }

    #[test]
    fn load_recheck_catches_tampered_objectives() {
        let (mut ds, oracle) = sample_dataset(4, 6);
        ds.objectives[0] += 1.0; // row 0 is always in the 1% sample
        let bytes = ds.to_bytes();
        assert!(matches!(
            DecisionDataset::from_bytes(&bytes, &oracle).unwrap_err(),
            DatasetError::Inconsistent { row: 0, .. }
        ));
    }

    #[test]
    fn save_load_files_roundtrip() {
        let (ds, oracle) = sample_dataset(6, 8);
        let dir = std::env::temp_dir().join("predopt-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.dfld");
        ds.save(&path).unwrap();
        let back = DecisionDataset::load(&path, &oracle).unwrap();
        assert_eq!(ds, back);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn csv_export_shape() {
        let (ds, _) = sample_dataset(3, 2);
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("x0,"));
        assert!(lines[0].ends_with(",z"));
        let cols = 4 + 12 + 12 + 1;
        assert!(lines.iter().all(|l| l.split(',').count() == cols));
        // Full-precision fields: parsing a data cell back must round-trip.
        let first: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
        assert_eq!(first.to_bits(), ds.features[0][0].to_bits());
    }

    #[test]
    fn split_front_partitions_rows() {
        let (ds, oracle) = sample_dataset(10, 13);
        let (train, test) = ds.split_front(7);
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        assert_eq!(train.features[0], ds.features[0]);
        assert_eq!(test.features[0], ds.features[7]);
        train.validate(&oracle).unwrap();
        test.validate(&oracle).unwrap();
    }
}
