//! On-disk formats: posterior, specification and sweep files (JSON) and
//! datasets (CSV).

use std::fs;
use std::path::{Path, PathBuf};

use bnncert::{
    linf_ball, Clip, Dataset, Epsilon, GaussianPosterior, InputBox, Labels, Network, OutputSpec, Posterior,
    SamplePosterior, Task,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Network architecture together with a posterior over its flat weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFile {
    pub arch: Network,
    #[serde(flatten)]
    pub posterior: Posterior<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl PosteriorFile {
    /// Re-runs constructor validation that deserialization skips.
    pub fn validate(self) -> Result<Self, bnncert::Error> {
        let posterior: Posterior<f64> = match self.posterior {
            Posterior::Gaussian(g) => GaussianPosterior::new(g.mean, g.variance)?.into(),
            Posterior::Samples(s) => SamplePosterior::new(s.samples, s.weights)?.into(),
        };
        if posterior.num_params() != self.arch.num_params() {
            return Err(bnncert::Error::DimensionMismatch {
                context: "posterior parameters".into(),
                expected: self.arch.num_params(),
                found: posterior.num_params(),
            });
        }
        Ok(PosteriorFile { posterior, ..self })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

/// Input region and safe output set of one certification query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecFile {
    pub center: Vec<f64>,
    #[serde(default = "zero_eps")]
    pub epsilon: Epsilon<f64>,
    /// Common `[lo, hi]` feature range.
    #[serde(default)]
    pub clip: Option<[f64; 2]>,
    #[serde(default)]
    pub true_class: Option<usize>,
    #[serde(default)]
    pub constraints: Option<Constraints>,
    /// Decision-bound target; defaults to the softmax of `true_class`.
    #[serde(default)]
    pub task: Option<Task>,
}

fn zero_eps() -> Epsilon<f64> {
    Epsilon::Uniform(0.0)
}

impl SpecFile {
    pub fn input_box(&self) -> Result<InputBox<f64>, bnncert::Error> {
        let clip = self.clip.map(|[lo, hi]| Clip::uniform(lo, hi, self.center.len()));
        linf_ball(&self.center, &self.epsilon, clip.as_ref())
    }

    pub fn output_spec(&self, n_out: usize) -> Result<OutputSpec<f64>, bnncert::Error> {
        match (&self.constraints, self.true_class) {
            (Some(c), _) => OutputSpec::new(c.c.clone(), c.d.clone()),
            (None, Some(k)) => OutputSpec::argmax(k, n_out),
            (None, None) => Err(bnncert::Error::InvalidArgument(
                "spec needs either `true_class` or `constraints`".into(),
            )),
        }
    }
}

/// One grid axis: cells `[min + k w, min + (k + 1) w)` covering `[min, max)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub cell_width: f64,
}

impl Axis {
    pub fn cells(&self) -> usize {
        (((self.max - self.min) / self.cell_width) - 1e-9).ceil().max(0.0) as usize
    }

    pub fn cell(&self, k: usize) -> (f64, f64) {
        let lo = self.min + k as f64 * self.cell_width;
        (lo, (lo + self.cell_width).min(self.max))
    }
}

/// How each cell's safe set (argmax of a label) is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Prediction of the posterior-mean network at the cell center.
    #[default]
    MeanPrediction,
    /// Ground-truth rule of the synthetic collision-avoidance task.
    Hcas,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub grid: Vec<Axis>,
    #[serde(default)]
    pub label: LabelRule,
    #[serde(default = "default_tau_safe")]
    pub tau_safe: f64,
    #[serde(default = "default_tau_unsafe")]
    pub tau_unsafe: f64,
}

pub fn default_tau_safe() -> f64 {
    0.98
}

pub fn default_tau_unsafe() -> f64 {
    0.05
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), bnncert::Error> {
        let bad = |m: String| Err(bnncert::Error::InvalidArgument(m));
        if self.grid.is_empty() {
            return bad("sweep grid has no axes".into());
        }
        for (i, a) in self.grid.iter().enumerate() {
            if !(a.cell_width > 0.0) || !(a.min < a.max) {
                return bad(format!("grid axis {i} needs min < max and cell_width > 0"));
            }
        }
        if !(self.tau_unsafe < self.tau_safe) {
            return bad(format!(
                "tau_unsafe = {} must be below tau_safe = {}",
                self.tau_unsafe, self.tau_safe
            ));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.grid.iter().map(Axis::cells).product()
    }

    /// Cell `id` in row-major order, last axis fastest.
    pub fn cell(&self, mut id: usize) -> InputBox<f64> {
        let mut lower = vec![0.0; self.grid.len()];
        let mut upper = vec![0.0; self.grid.len()];
        for (d, axis) in self.grid.iter().enumerate().rev() {
            let n = axis.cells();
            let (lo, hi) = axis.cell(id % n);
            lower[d] = lo;
            upper[d] = hi;
            id /= n;
        }
        InputBox::new(lower, upper).expect("grid cells are non-empty")
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn read_posterior(path: &Path) -> Result<PosteriorFile, CliError> {
    let file: PosteriorFile = read_json(path)?;
    file.validate().map_err(|e| match e {
        bnncert::Error::DimensionMismatch { .. } => CliError::Engine(e),
        other => CliError::Parse {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// Writes to `out`, or stdout when `None`.
pub fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        }),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

/// Headerless numeric CSV; the last column is the label.
pub fn read_dataset(path: &Path, classification: bool) -> Result<Dataset, CliError> {
    let parse_err = |msg: String| CliError::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => parse_err(format!("{other:?}")),
        })?;
    let mut inputs = Vec::new();
    let mut classes = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(format!("row {}: {e}", row + 1)))?;
        let Some((&label, x)) = nums.split_last() else {
            return Err(parse_err(format!("row {} is empty", row + 1)));
        };
        inputs.push(x.to_vec());
        if classification {
            if label < 0.0 || label.fract() != 0.0 {
                return Err(parse_err(format!("row {}: class label {label} is not a non-negative integer", row + 1)));
            }
            classes.push(label as usize);
        } else {
            values.push(vec![label]);
        }
    }
    let labels = if classification {
        Labels::Classes(classes)
    } else {
        Labels::Values(values)
    };
    Ok(Dataset { inputs, labels })
}
