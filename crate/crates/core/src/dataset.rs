//! Synthetic low-dimensional-manifold datasets, IDX loading and unit-sphere normalization.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm2, Matrix, SeededRng};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_CLASSES: usize = 10;

/// One input/label pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Class index the label was derived from, when known.
    pub class: Option<usize>,
}

/// How class indices are turned into regression targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// One-hot vector over the classes.
    #[default]
    OneHot,
    /// Class `k` of `K` mapped affinely onto `-1 + 2k/(K-1)`.
    Scalar,
}

/// Parameters of the Gaussian-mixture manifold generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub n_total: usize,
    pub n_train: usize,
    pub d_in: usize,
    pub modes: usize,
    pub manifold_dim: usize,
    pub fill_value: f64,
    pub seed: u64,
    #[serde(default)]
    pub label_mode: LabelMode,
    /// Mode centers are drawn uniformly from `[-center_box, center_box]^manifold_dim`.
    #[serde(default = "default_center_box")]
    pub center_box: f64,
    /// Isotropic standard deviation of every mode.
    #[serde(default = "default_cluster_std")]
    pub cluster_std: f64,
}

fn default_center_box() -> f64 {
    10.0
}

fn default_cluster_std() -> f64 {
    1.0
}

impl ManifoldSpec {
    /// Mixture of `modes` Gaussians on the first two coordinates of a 784-dimensional
    /// input, remaining coordinates set to 1, split 6000/1000.
    pub fn mnist_like(seed: u64) -> Self {
        Self {
            n_total: 7000,
            n_train: 6000,
            d_in: 784,
            modes: 10,
            manifold_dim: 2,
            fill_value: 1.0,
            seed,
            label_mode: LabelMode::OneHot,
            center_box: default_center_box(),
            cluster_std: default_cluster_std(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("manifold spec: {msg}")));
        if self.n_train >= self.n_total {
            return bad("n_train must be smaller than n_total");
        }
        if self.n_train == 0 {
            return bad("n_train must be positive");
        }
        if self.manifold_dim == 0 || self.manifold_dim >= self.d_in {
            return bad("manifold_dim must be in 1..d_in");
        }
        if self.modes == 0 {
            return bad("modes must be at least 1");
        }
        if !(self.cluster_std >= 0.0 && self.center_box >= 0.0 && self.fill_value.is_finite()) {
            return bad("center_box and cluster_std must be non-negative, fill_value finite");
        }
        Ok(())
    }

    pub fn d_out(&self) -> usize {
        match self.label_mode {
            LabelMode::OneHot => self.modes,
            LabelMode::Scalar => 1,
        }
    }
}

/// Train/test split with shared dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub d_in: usize,
    pub d_out: usize,
    pub provenance: String,
}

/// Design-matrix view of a list of samples: one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub y: Matrix,
}

impl Batch {
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let xs: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
        let ys: Vec<&[f64]> = samples.iter().map(|s| s.y.as_slice()).collect();
        Ok(Self { x: Matrix::from_rows(&xs)?, y: Matrix::from_rows(&ys)? })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn d_in(&self) -> usize {
        self.x.cols()
    }

    pub fn d_out(&self) -> usize {
        self.y.cols()
    }

    /// Rows selected by `idx`, in order.
    pub fn select(&self, idx: &[usize]) -> Batch {
        let x = Matrix::from_fn(idx.len(), self.d_in(), |r, c| self.x[(idx[r], c)]);
        let y = Matrix::from_fn(idx.len(), self.d_out(), |r, c| self.y[(idx[r], c)]);
        Batch { x, y }
    }

    /// Concatenation of two batches with matching dimensions.
    pub fn concat(&self, other: &Batch) -> Result<Batch> {
        if self.d_in() != other.d_in() || self.d_out() != other.d_out() {
            return Err(Error::Dimension("concat: batch dimensions differ".into()));
        }
        let mut x = self.x.as_slice().to_vec();
        x.extend_from_slice(other.x.as_slice());
        let mut y = self.y.as_slice().to_vec();
        y.extend_from_slice(other.y.as_slice());
        let n = self.len() + other.len();
        Ok(Batch { x: Matrix::from_vec(n, self.d_in(), x)?, y: Matrix::from_vec(n, self.d_out(), y)? })
    }
}

impl Dataset {
    pub fn train_batch(&self) -> Result<Batch> {
        Batch::from_samples(&self.train)
    }

    pub fn test_batch(&self) -> Result<Batch> {
        Batch::from_samples(&self.test)
    }

    /// Keeps the first `n_train` training and `n_test` test samples.
    pub fn truncated(&self, n_train: usize, n_test: usize) -> Dataset {
        Dataset {
            train: self.train.iter().take(n_train).cloned().collect(),
            test: self.test.iter().take(n_test).cloned().collect(),
            d_in: self.d_in,
            d_out: self.d_out,
            provenance: format!("{} [first {n_train}/{n_test}]", self.provenance),
        }
    }

    /// CSV with one sample per row: split, features, then label index.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["split".to_string()];
        header.extend((0..self.d_in).map(|k| format!("x{k}")));
        header.push("label".into());
        wtr.write_record(&header)?;
        for (split, samples) in [("train", &self.train), ("test", &self.test)] {
            for s in samples {
                let mut rec = Vec::with_capacity(self.d_in + 2);
                rec.push(split.to_string());
                rec.extend(s.x.iter().map(|v| v.to_string()));
                rec.push(s.class.map_or_else(|| argmax(&s.y).to_string(), |c| c.to_string()));
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i)
}

fn label_for(class: usize, modes: usize, mode: LabelMode) -> Vec<f64> {
    match mode {
        LabelMode::OneHot => {
            let mut y = vec![0.0; modes];
            y[class] = 1.0;
            y
        }
        LabelMode::Scalar => {
            if modes == 1 {
                vec![0.0]
            } else {
                vec![-1.0 + 2.0 * class as f64 / (modes - 1) as f64]
            }
        }
    }
}

/// Draws the Gaussian-mixture manifold dataset (raw, not normalized).
///
/// The first `manifold_dim` coordinates come from the mixture; the rest hold `fill_value`.
pub fn generate_manifold_dataset(spec: &ManifoldSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut center_rng = SeededRng::new(spec.seed, 0);
    let centers: Vec<Vec<f64>> = (0..spec.modes)
        .map(|_| (0..spec.manifold_dim).map(|_| center_rng.uniform(-spec.center_box, spec.center_box)).collect())
        .collect();

    let mut rng = SeededRng::new(spec.seed, 1);
    let samples: Vec<Sample> = (0..spec.n_total)
        .map(|_| {
            let class = rng.index(spec.modes);
            let mut x = vec![spec.fill_value; spec.d_in];
            for (k, xk) in x.iter_mut().take(spec.manifold_dim).enumerate() {
                *xk = centers[class][k] + spec.cluster_std * rng.gaussian();
            }
            Sample { x, y: label_for(class, spec.modes, spec.label_mode), class: Some(class) }
        })
        .collect();

    let mut train = samples;
    let test = train.split_off(spec.n_train);
    Ok(Dataset {
        train,
        test,
        d_in: spec.d_in,
        d_out: spec.d_out(),
        provenance: format!(
            "manifold(n={}, train={}, d_in={}, modes={}, dim={}, fill={}, seed={})",
            spec.n_total, spec.n_train, spec.d_in, spec.modes, spec.manifold_dim, spec.fill_value, spec.seed
        ),
    })
}

/// Scales every input to unit Euclidean norm. Labels are left untouched.
pub fn normalize_unit(dataset: &Dataset) -> Result<Dataset> {
    let norm = |samples: &[Sample], offset: usize| -> Result<Vec<Sample>> {
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n = norm2(&s.x);
                if n == 0.0 || !n.is_finite() {
                    return Err(Error::ZeroNormInput { index: offset + i });
                }
                Ok(Sample { x: s.x.iter().map(|v| v / n).collect(), ..s.clone() })
            })
            .collect()
    };
    Ok(Dataset {
        train: norm(&dataset.train, 0)?,
        test: norm(&dataset.test, dataset.train.len())?,
        d_in: dataset.d_in,
        d_out: dataset.d_out,
        provenance: format!("{} [unit-norm]", dataset.provenance),
    })
}

fn read_be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]])).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        detail: format!("header ends before byte {}", at + 4),
    })
}

/// Loads an IDX image/label pair. Pixels scale to `[0, 1]`, labels become one-hot over 10 classes.
/// All samples land in the training split.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = fs::read(images_path)?;
    let lab = fs::read(labels_path)?;

    let magic = read_be_u32(&img, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::WrongMagic { path: images_path.to_path_buf(), found: magic, expected: IDX_IMAGES_MAGIC });
    }
    let magic = read_be_u32(&lab, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::WrongMagic { path: labels_path.to_path_buf(), found: magic, expected: IDX_LABELS_MAGIC });
    }

    let count = read_be_u32(&img, 4, images_path)? as usize;
    let rows = read_be_u32(&img, 8, images_path)? as usize;
    let cols = read_be_u32(&img, 12, images_path)? as usize;
    let n_labels = read_be_u32(&lab, 4, labels_path)? as usize;
    if count != n_labels {
        return Err(Error::CountMismatch { images: count, labels: n_labels });
    }

    let d_in = rows * cols;
    let pixels = &img[16..];
    if pixels.len() < count * d_in {
        return Err(Error::Truncated {
            path: images_path.to_path_buf(),
            detail: format!("{} pixel bytes, expected {}", pixels.len(), count * d_in),
        });
    }
    let labels = &lab[8..];
    if labels.len() < count {
        return Err(Error::Truncated {
            path: labels_path.to_path_buf(),
            detail: format!("{} label bytes, expected {count}", labels.len()),
        });
    }

    let train = (0..count)
        .map(|i| {
            let class = labels[i] as usize;
            if class >= IDX_CLASSES {
                return Err(Error::InvalidParameter(format!("label {class} at index {i} is out of range")));
            }
            let x = pixels[i * d_in..(i + 1) * d_in].iter().map(|&p| p as f64 / 255.0).collect();
            Ok(Sample { x, y: label_for(class, IDX_CLASSES, LabelMode::OneHot), class: Some(class) })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        train,
        test: Vec::new(),
        d_in,
        d_out: IDX_CLASSES,
        provenance: format!("idx({}, {})", images_path.display(), labels_path.display()),
    })
}
