//! Rate-distortion sweeps: train one model per grid point, store it at each
//! requested precision, and tabulate bits-per-pixel against PSNR.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{Activation, SineConvention};
use crate::codec::{self, Dtype};
use crate::io::{psnr, psnr_peak, SignalTensor, ValueDomain};
use crate::model::{ModelConfig, ModelSpec, SirenConfig};
use crate::train::{build_dataset, fit, TrainOptions};

/// Column header of the sweep CSV.
pub const CSV_HEADER: [&str; 14] = [
    "kind", "n_qubits", "folds", "M", "L", "B", "dtype", "params", "bytes", "bpp", "psnr_db",
    "steps", "seconds", "pareto",
];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("grid spec line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One trained model stored at one precision.
#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub kind: &'static str,
    pub n_qubits: usize,
    pub folds: usize,
    /// Embedding size for quINR, hidden width for SIREN.
    pub m: usize,
    /// Entangling layers for quINR, hidden layers for SIREN.
    pub l: usize,
    pub b: usize,
    pub dtype: Dtype,
    pub params: usize,
    pub bytes: usize,
    pub bpp: f64,
    pub psnr_db: f64,
    pub steps: usize,
    pub seconds: f64,
    pub pareto: bool,
    pub error: Option<String>,
}

impl RdPoint {
    fn skeleton(spec: &ModelSpec, dtype: Dtype, steps: usize) -> Self {
        let (kind, n_qubits, folds, m, l, b) = match spec {
            ModelSpec::Quinr(c) => (
                "quinr",
                c.n_qubits,
                c.folds,
                c.embed_size,
                c.entangling_layers,
                c.blocks,
            ),
            ModelSpec::Siren(c) => ("siren", 0, 0, c.hidden_width, c.hidden_layers, 0),
        };
        Self {
            kind,
            n_qubits,
            folds,
            m,
            l,
            b,
            dtype,
            params: spec.param_count(),
            bytes: 0,
            bpp: f64::NAN,
            psnr_db: f64::NAN,
            steps,
            seconds: 0.0,
            pareto: false,
            error: None,
        }
    }

    /// Parameter-only rate, recoverable from the CSV columns.
    pub fn param_bpp(&self, pixels: usize) -> f64 {
        (self.params * self.dtype.bytes() * 8) as f64 / pixels as f64
    }

    fn record(&self) -> Vec<String> {
        let pareto = match &self.error {
            Some(e) => format!("error: {e}"),
            None => (self.pareto as u8).to_string(),
        };
        vec![
            self.kind.to_string(),
            self.n_qubits.to_string(),
            self.folds.to_string(),
            self.m.to_string(),
            self.l.to_string(),
            self.b.to_string(),
            self.dtype.name().to_string(),
            self.params.to_string(),
            self.bytes.to_string(),
            format!("{:.6}", self.bpp),
            format!("{:.4}", self.psnr_db),
            self.steps.to_string(),
            format!("{:.3}", self.seconds),
            pareto,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub train: TrainOptions,
    pub dtypes: Vec<Dtype>,
    /// Worker threads for grid points; 0 uses the global pool.
    pub jobs: usize,
    /// Record wall-clock seconds; when false the column is 0 so the CSV is
    /// byte-stable across runs.
    pub record_time: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            train: TrainOptions::default(),
            dtypes: vec![Dtype::Fp32, Dtype::Fp16],
            jobs: 0,
            record_time: true,
        }
    }
}

fn chain(e: &dyn std::error::Error) -> String {
    let mut out = e.to_string();
    let mut cur = e.source();
    while let Some(s) = cur {
        out.push_str(": ");
        out.push_str(&s.to_string());
        cur = s.source();
    }
    out
}

fn run_point(signal: &SignalTensor, spec: &ModelSpec, opts: &SweepOptions) -> Vec<RdPoint> {
    let skeletons = || {
        opts.dtypes
            .iter()
            .map(|&d| RdPoint::skeleton(spec, d, opts.train.steps))
    };
    let fail = |e: String| {
        skeletons()
            .map(|mut p| {
                p.error = Some(e.clone());
                p
            })
            .collect()
    };
    let dataset = build_dataset(signal);
    let mut model = match spec.init() {
        Ok(m) => m,
        Err(e) => return fail(chain(&e)),
    };
    let report = match fit(&mut model, &dataset, &opts.train) {
        Ok(r) => r,
        Err(e) => return fail(chain(&e)),
    };
    let seconds = if opts.record_time {
        report.seconds
    } else {
        0.0
    };
    skeletons()
        .map(|mut point| {
            point.seconds = seconds;
            let outcome = codec::serialize(&model, &dataset.meta, point.dtype)
                .and_then(|bytes| Ok((bytes.len(), codec::decode(&bytes)?)))
                .map_err(|e| chain(&e))
                .and_then(|(len, decoded)| {
                    Ok((len, psnr(signal, &decoded).map_err(|e| chain(&e))?))
                });
            match outcome {
                Ok((len, db)) => {
                    point.bytes = len;
                    point.bpp = codec::bpp(len, signal.pixels()).expect("signals are non-empty");
                    point.psnr_db = db;
                }
                Err(e) => point.error = Some(e),
            }
            point
        })
        .collect()
}

/// Flag rows that no other row beats: a row is on the frontier iff no
/// other row has `bpp ≤` its bpp and strictly higher PSNR. Failed rows are
/// never on the frontier.
pub fn mark_pareto(rows: &mut [RdPoint]) {
    let valid: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| (r.bpp, r.psnr_db))
        .collect();
    for row in rows.iter_mut() {
        row.pareto = row.error.is_none()
            && !valid
                .iter()
                .any(|&(bpp, db)| bpp <= row.bpp && db > row.psnr_db);
    }
}

/// Train every grid point and return rows sorted by bpp (failures last),
/// with the Pareto flag set.
pub fn rd_sweep(
    signal: &SignalTensor,
    grid: &[ModelSpec],
    opts: &SweepOptions,
) -> Result<Vec<RdPoint>, SweepError> {
    if grid.is_empty() || opts.dtypes.is_empty() {
        return Err(SweepError::EmptyGrid);
    }
    let run = || -> Vec<RdPoint> {
        grid.par_iter()
            .map(|spec| run_point(signal, spec, opts))
            .collect::<Vec<_>>()
            .concat()
    };
    let mut rows = if opts.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?
            .install(run)
    } else {
        run()
    };
    rows.sort_by(|a, b| {
        a.error
            .is_some()
            .cmp(&b.error.is_some())
            .then(a.bpp.total_cmp(&b.bpp))
    });
    mark_pareto(&mut rows);
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[RdPoint], out: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Key/value notes describing how the sweep's PSNR column was computed.
pub fn csv_metadata(signal: &SignalTensor) -> String {
    let (domain, convention) = match signal.domain() {
        ValueDomain::U8Image => ("u8_image", "peak 1.0 on [0,1]-scaled 8-bit values"),
        ValueDomain::FloatRange => ("float_range", "peak = max - min of the reference signal"),
    };
    format!(
        "value_domain={domain}\npsnr_peak={}\npsnr_convention={convention}\nheight={}\nwidth={}\nchannels={}\npixels={}\nbpp_accounting=whole file including header\n",
        psnr_peak(signal),
        signal.height(),
        signal.width(),
        signal.channels(),
        signal.pixels(),
    )
}

/// Sweep grid described by comma-separated value lists. Text form is one
/// `key=value[,value…]` per line; `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub kinds: Vec<String>,
    pub qubits: Vec<usize>,
    pub folds: Vec<usize>,
    pub layers: Vec<usize>,
    pub blocks: Vec<usize>,
    pub siren_widths: Vec<usize>,
    pub siren_depths: Vec<usize>,
    pub dtypes: Vec<Dtype>,
    pub omega0: f32,
    pub activation: Activation,
    pub eq2_convention: SineConvention,
    pub head_affine: bool,
    pub shuffle_seed: u64,
    pub init_seed: u64,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            kinds: vec!["quinr".into()],
            qubits: vec![4],
            folds: vec![1, 2, 3],
            layers: vec![2],
            blocks: vec![1, 2],
            siren_widths: vec![8, 16],
            siren_depths: vec![2],
            dtypes: vec![Dtype::Fp32, Dtype::Fp16],
            omega0: 30.0,
            activation: Activation::QRelu,
            eq2_convention: SineConvention::Literal,
            head_affine: true,
            shuffle_seed: 0,
            init_seed: 0,
            steps: None,
            lr: None,
            batch: None,
            seed: None,
        }
    }
}

fn list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| format!("`{}`: {e}", v.trim()))
        })
        .collect()
}

fn one<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| format!("`{}`: {e}", value.trim()))
}

pub fn parse_activation(s: &str) -> Result<Activation, String> {
    match s {
        "qrelu" => Ok(Activation::QRelu),
        "relu" => Ok(Activation::Relu),
        "leaky_relu" => Ok(Activation::LeakyRelu),
        "identity" => Ok(Activation::Identity),
        other => Err(format!("unknown activation `{other}`")),
    }
}

pub fn parse_convention(s: &str) -> Result<SineConvention, String> {
    match s {
        "literal" => Ok(SineConvention::Literal),
        "siren" => Ok(SineConvention::Siren),
        other => Err(format!("unknown sine convention `{other}`")),
    }
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        let mut spec = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SweepError::Parse {
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            spec.set(key.trim(), value.trim())
                .map_err(|message| SweepError::Parse {
                    line: i + 1,
                    message,
                })?;
        }
        Ok(spec)
    }

    /// Override one key; used for both file lines and command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "kind" => {
                let kinds: Vec<String> = list(value)?;
                if let Some(bad) = kinds.iter().find(|k| *k != "quinr" && *k != "siren") {
                    return Err(format!("unknown model kind `{bad}`"));
                }
                self.kinds = kinds;
            }
            "qubits" => self.qubits = list(value)?,
            "folds" => self.folds = list(value)?,
            "layers" => self.layers = list(value)?,
            "blocks" => self.blocks = list(value)?,
            "siren_width" => self.siren_widths = list(value)?,
            "siren_depth" => self.siren_depths = list(value)?,
            "dtype" => self.dtypes = list(value)?,
            "omega0" => self.omega0 = one(value)?,
            "activation" => self.activation = parse_activation(value)?,
            "eq2" => self.eq2_convention = parse_convention(value)?,
            "head_affine" => self.head_affine = one(value)?,
            "shuffle_seed" => self.shuffle_seed = one(value)?,
            "init_seed" => self.init_seed = one(value)?,
            "steps" => self.steps = Some(one(value)?),
            "lr" => self.lr = Some(one(value)?),
            "batch" => self.batch = Some(one(value)?),
            "seed" => self.seed = Some(one(value)?),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Cartesian product of the lists, quINR points first, in list order.
    pub fn expand(&self, n_in: usize, n_out: usize) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        for kind in &self.kinds {
            if kind == "quinr" {
                for &q in &self.qubits {
                    for &f in &self.folds {
                        for &l in &self.layers {
                            for &b in &self.blocks {
                                let mut c = ModelConfig::new(n_in, n_out, q, f, l, b);
                                c.omega0 = self.omega0;
                                c.activation = self.activation;
                                c.eq2_convention = self.eq2_convention;
                                c.head_affine = self.head_affine;
                                c.shuffle_seed = self.shuffle_seed;
                                c.init_seed = self.init_seed;
                                out.push(ModelSpec::Quinr(c));
                            }
                        }
                    }
                }
            } else {
                for &w in &self.siren_widths {
                    for &d in &self.siren_depths {
                        let mut c = SirenConfig::new(n_in, n_out, w, d);
                        c.omega0 = self.omega0;
                        c.init_seed = self.init_seed;
                        out.push(ModelSpec::Siren(c));
                    }
                }
            }
        }
        out
    }

    /// Training options with any values this spec overrides.
    pub fn train_options(&self, base: &TrainOptions) -> TrainOptions {
        TrainOptions {
            steps: self.steps.unwrap_or(base.steps),
            lr: self.lr.unwrap_or(base.lr),
            batch_size: self.batch.unwrap_or(base.batch_size),
            seed: self.seed.unwrap_or(base.seed),
            ..base.clone()
        }
    }
}
