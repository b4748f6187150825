//! Observation-prediction pairs and their random partitions.

use rand::seq::SliceRandom;

use crate::error::{ensure_finite, Error, Result};
use crate::seed::seeded_rng;

/// One observation-prediction pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub x: Vec<f64>,
    pub m: f64,
    pub y: f64,
    pub eps: f64,
}

impl PairRecord {
    /// Builds the record; `eps` is always `y - m`.
    pub fn new(x: Vec<f64>, m: f64, y: f64) -> Result<Self> {
        for &v in &x {
            ensure_finite(v, "x")?;
        }
        ensure_finite(m, "m")?;
        ensure_finite(y, "y")?;
        Ok(PairRecord { x, m, y, eps: y - m })
    }
}

/// Ordered pairs sharing one input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    records: Vec<PairRecord>,
}

impl Dataset {
    pub fn new(dim: usize, records: Vec<PairRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be >= 1".into()));
        }
        if let Some(bad) = records.iter().find(|r| r.x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.x.len(),
            });
        }
        Ok(Dataset { dim, records })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eps).collect()
    }

    /// Row-major `len x dim` input matrix.
    pub fn inputs_flat(&self) -> Vec<f64> {
        self.records.iter().flat_map(|r| r.x.iter().copied()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    const ORDER: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];
}

/// A dataset whose rows carry a partition label.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    data: Dataset,
    labels: Vec<Partition>,
}

impl SplitDataset {
    pub fn labels(&self) -> &[Partition] {
        &self.labels
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn indices(&self, which: Partition) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == which)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rows of one partition, in their original order.
    pub fn partition(&self, which: Partition) -> Dataset {
        self.data.subset(&self.indices(which))
    }

    pub fn size(&self, which: Partition) -> usize {
        self.labels.iter().filter(|&&l| l == which).count()
    }
}

/// Randomly partitions `dataset` into train / validation (/ test) by the given
/// fractions. Sizes are floored; the remainder goes to training.
pub fn split(dataset: &Dataset, fractions: &[f64], seed: u64) -> Result<SplitDataset> {
    if !(2..=3).contains(&fractions.len()) {
        return Err(Error::InvalidParameter(
            "split takes two or three fractions".into(),
        ));
    }
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidParameter("split fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions sum to {total}, not 1"
        )));
    }
    let n = dataset.len();
    if n < fractions.len() {
        return Err(Error::InvalidParameter(format!(
            "{n} rows cannot fill {} partitions",
            fractions.len()
        )));
    }
    // The tiny offset keeps products like 0.16 * 10000 from flooring to 1599.
    let mut sizes: Vec<usize> = fractions
        .iter()
        .map(|f| (f * n as f64 + 1e-9).floor() as usize)
        .collect();
    let assigned: usize = sizes[1..].iter().sum();
    sizes[0] = n - assigned;
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidParameter(format!(
            "{n} rows leave an empty partition for fractions {fractions:?}"
        )));
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded_rng(seed));
    let mut labels = vec![Partition::Train; n];
    let mut cursor = 0;
    for (size, label) in sizes.iter().zip(Partition::ORDER) {
        for &row in &perm[cursor..cursor + size] {
            labels[row] = label;
        }
        cursor += size;
    }
    Ok(SplitDataset {
        data: dataset.clone(),
        labels,
    })
}
