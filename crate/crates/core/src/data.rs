//! Datasets: seeded synthetic tasks, CSV ingestion and stratified splits.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bilevel::SetState;
use crate::error::{BdpError, Result};
use crate::numcore::{Mat64, RngStream};

/// Feature matrix plus integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Mat64,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(features: Mat64, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(BdpError::Dataset("empty dataset".into()));
        }
        if features.rows() != labels.len() {
            return Err(BdpError::LengthMismatch {
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(BdpError::Dataset(format!("label {y} >= class count {num_classes}")));
        }
        if !features.is_finite() {
            return Err(BdpError::Dataset("non-finite feature".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn x(&self, id: usize) -> &[f64] {
        self.features.row(id)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        count_labels(self.labels.iter().copied(), self.num_classes)
    }

    /// Zero-pads every row to `feature_dim` columns.
    pub fn pad_features(&self, feature_dim: usize) -> Result<Dataset> {
        let d = self.dim();
        if feature_dim < d {
            return Err(BdpError::InvalidConfig(format!(
                "feature_dim {feature_dim} is smaller than the data dimension {d}"
            )));
        }
        if feature_dim == d {
            return Ok(self.clone());
        }
        let mut m = Mat64::zeros(self.len(), feature_dim);
        for r in 0..self.len() {
            m.row_mut(r)[..d].copy_from_slice(self.features.row(r));
        }
        Dataset::new(m, self.labels.clone(), self.num_classes)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let mut header: Vec<String> = (0..self.dim()).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        wr.write_record(&header).map_err(csv_err)?;
        for r in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(r).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[r].to_string());
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn csv_err(e: csv::Error) -> BdpError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    BdpError::Csv {
        line,
        msg: e.to_string(),
    }
}

pub(crate) fn count_labels(labels: impl Iterator<Item = usize>, num_classes: usize) -> Vec<usize> {
    let mut c = vec![0; num_classes];
    for y in labels {
        c[y] += 1;
    }
    c
}

/// Parse `f0,...,f{d-1},label` CSV. `num_classes = 1 + max label`.
pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(BdpError::Csv {
            line: 1,
            msg: "empty file".into(),
        });
    }
    if header.len() < 2 || header.get(header.len() - 1) != Some("label") {
        return Err(BdpError::Csv {
            line: 1,
            msg: "missing `label` column in last position".into(),
        });
    }
    let dim = header.len() - 1;
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        for (i, cell) in rec.iter().take(dim).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| BdpError::Csv {
                line,
                msg: format!("non-numeric value `{cell}` in column f{i}"),
            })?;
            feats.push(v);
        }
        let cell = rec[dim].trim();
        let y: usize = cell.parse().map_err(|_| BdpError::Csv {
            line,
            msg: format!("label `{cell}` is not a non-negative integer"),
        })?;
        labels.push(y);
    }
    if labels.is_empty() {
        return Err(BdpError::Csv {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let n = labels.len();
    Dataset::new(Mat64::from_vec(n, dim, feats)?, labels, num_classes)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    read_csv(std::fs::File::open(path)?)
}

/// Geometry of a synthetic task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Isotropic Gaussian blobs on a circle of radius 3.
    Separable,
    /// Concentric rings in the first two coordinates; ring `r` carries label
    /// `r mod M` and there are `M + 1` rings, so the outermost ring repeats
    /// class 0 and no half-plane isolates a pure extreme region of one class.
    XorRings,
}

/// Number of rings laid out for an `M`-class ring task.
pub fn ring_count(num_classes: usize) -> usize {
    num_classes + 1
}

/// Class-balanced synthetic dataset, `per_class` samples per class.
pub fn gen_blobs(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    noise_sigma: f64,
    layout: Layout,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if num_classes < 2 || per_class < 1 || dim < 2 {
        return Err(BdpError::InvalidConfig(
            "gen_blobs needs classes >= 2, per_class >= 1, dim >= 2".into(),
        ));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(BdpError::InvalidConfig("noise_sigma must be finite and >= 0".into()));
    }
    let n = num_classes * per_class;
    let mut feats = Mat64::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    let tau = 2.0 * std::f64::consts::PI;
    let rings = ring_count(num_classes);
    for i in 0..per_class {
        for c in 0..num_classes {
            let row = labels.len();
            let x = feats.row_mut(row);
            match layout {
                Layout::Separable => {
                    let theta = tau * c as f64 / num_classes as f64;
                    x[0] = 3.0 * theta.cos();
                    x[1] = 3.0 * theta.sin();
                }
                Layout::XorRings => {
                    // Rings with label c are c, c + M, ...; alternate among
                    // them by sample index so the class stays balanced.
                    let own: Vec<usize> = (0..rings).filter(|r| r % num_classes == c).collect();
                    let ring = own[i % own.len()];
                    let radius = 1.0 + ring as f64;
                    let theta = tau * rng.uniform();
                    x[0] = radius * theta.cos();
                    x[1] = radius * theta.sin();
                }
            }
            for v in x.iter_mut() {
                *v += noise_sigma * rng.normal();
            }
            labels.push(c);
        }
    }
    Dataset::new(feats, labels, num_classes)
}

/// How to carve a dataset into train, validation and test parts.
///
/// `test_fraction` is taken from the whole dataset first; `train_fraction`
/// then splits the remaining pool, the rest being validation (so 0.5 is the
/// usual 5:5 split).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_true")]
    pub stratified: bool,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            test_fraction: default_test_fraction(),
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.train_fraction) {
            return Err(BdpError::InvalidConfig("train_fraction must be in (0, 1)".into()));
        }
        if !(self.test_fraction >= 0.0 && self.test_fraction < 1.0) {
            return Err(BdpError::InvalidConfig("test_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Result of [`split`].
#[derive(Debug, Clone)]
pub struct Split {
    pub train: SetState,
    pub val: SetState,
    pub test: Vec<usize>,
}

fn round_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64).round_ties_even() as usize).min(n)
}

/// Disjoint, exhaustive train / validation / test partition.
pub fn split(dataset: &Dataset, spec: &SplitSpec, rng: &mut RngStream) -> Result<Split> {
    spec.validate()?;
    let groups: Vec<Vec<usize>> = if spec.stratified {
        (0..dataset.num_classes)
            .map(|c| (0..dataset.len()).filter(|&i| dataset.labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..dataset.len()).collect()]
    };
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut g in groups {
        rng.shuffle(&mut g);
        let n_test = round_count(spec.test_fraction, g.len());
        let pool = g.len() - n_test;
        let n_train = round_count(spec.train_fraction, pool);
        test.extend_from_slice(&g[..n_test]);
        train.extend_from_slice(&g[n_test..n_test + n_train]);
        val.extend_from_slice(&g[n_test + n_train..]);
    }
    if train.is_empty() || val.is_empty() {
        return Err(BdpError::InvalidConfig(format!(
            "split leaves an empty set (train {}, validation {})",
            train.len(),
            val.len()
        )));
    }
    if spec.test_fraction > 0.0 && test.is_empty() {
        return Err(BdpError::InvalidConfig("split leaves an empty test set".into()));
    }
    test.sort_unstable();
    Ok(Split {
        train: SetState::new(train, &dataset.labels, dataset.num_classes),
        val: SetState::new(val, &dataset.labels, dataset.num_classes),
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::seeded_rng;
    use crate::pruning::balance_degree;

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let d = gen_blobs(3, 200, 2, 0.3, Layout::Separable, &mut seeded_rng(1)).unwrap();
        assert_eq!(d.len(), 600);
        assert_eq!(balance_degree(&d.class_counts()).unwrap(), 1.0);
        let e = gen_blobs(3, 200, 2, 0.3, Layout::Separable, &mut seeded_rng(1)).unwrap();
        assert_eq!(d, e);
        let r = gen_blobs(3, 200, 4, 0.1, Layout::XorRings, &mut seeded_rng(1)).unwrap();
        assert_eq!(r.class_counts(), vec![200, 200, 200]);
    }

    #[test]
    fn blobs_reject_bad_counts() {
        let mut rng = seeded_rng(0);
        assert!(gen_blobs(1, 10, 2, 0.1, Layout::Separable, &mut rng).is_err());
        assert!(gen_blobs(2, 0, 2, 0.1, Layout::Separable, &mut rng).is_err());
        assert!(gen_blobs(2, 10, 1, 0.1, Layout::Separable, &mut rng).is_err());
    }

    #[test]
    fn csv_small_file() {
        let d = read_csv("f0,f1,label\n0.5,1,0\n-2,3.25,1\n".as_bytes()).unwrap();
        assert_eq!(d.num_classes, 2);
        assert_eq!(d.len(), 2);
        assert_eq!(d.x(1), &[-2.0, 3.25]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        assert!(read_csv("".as_bytes()).is_err());
        assert!(read_csv("f0,f1,label\n".as_bytes()).is_err());
        let e = read_csv("f0,f1,label\n1,2,0\n1,x,1\n".as_bytes()).unwrap_err();
        assert!(matches!(e, BdpError::Csv { line: 3, .. }), "{e:?}");
        let e = read_csv("f0,f1,label\n1,2,0\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(e, BdpError::Csv { line: 3, .. }), "{e:?}");
        assert!(read_csv("f0,f1,y\n1,2,0\n".as_bytes()).is_err());
        assert!(read_csv("f0,label\n1,-1\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = gen_blobs(3, 7, 3, 0.4, Layout::XorRings, &mut seeded_rng(4)).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(!buf.contains(&b'\r'));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn split_ratios() {
        let d = gen_blobs(2, 50, 2, 0.1, Layout::Separable, &mut seeded_rng(0)).unwrap();
        let no_test = SplitSpec {
            train_fraction: 0.5,
            test_fraction: 0.0,
            stratified: true,
        };
        let s = split(&d, &no_test, &mut seeded_rng(1)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (50, 50, 0));
        let s = split(&d, &SplitSpec { train_fraction: 0.9, ..no_test }, &mut seeded_rng(1)).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (90, 10));
        assert_eq!(balance_degree(&s.train.class_counts()).unwrap(), 1.0);
        assert_eq!(balance_degree(&s.val.class_counts()).unwrap(), 1.0);
    }

    #[test]
    fn split_rejects_empty_sets() {
        let d = gen_blobs(2, 2, 2, 0.1, Layout::Separable, &mut seeded_rng(0)).unwrap();
        let spec = SplitSpec {
            train_fraction: 0.9,
            test_fraction: 0.0,
            stratified: true,
        };
        assert!(split(&d, &spec, &mut seeded_rng(0)).is_err());
        let bad = SplitSpec {
            train_fraction: 1.0,
            ..spec
        };
        assert!(split(&d, &bad, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn padding() {
        let d = read_csv("f0,f1,label\n0.5,1,0\n-2,3.25,1\n".as_bytes()).unwrap();
        let p = d.pad_features(4).unwrap();
        assert_eq!(p.x(1), &[-2.0, 3.25, 0.0, 0.0]);
        assert!(d.pad_features(1).is_err());
    }
}
