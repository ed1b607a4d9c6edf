//! `quinr`: encode images into `.qinr` files, decode them, and measure
//! rate-distortion.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use quinr::autodiff::{Activation, SineConvention};
use quinr::codec::{self, CodecError, Dtype};
use quinr::io::{self, DataError, SignalTensor, ValueDomain};
use quinr::model::{AnyModel, ModelConfig, ModelSpec, SirenConfig};
use quinr::sweep::{self, GridSpec, SweepError, SweepOptions};
use quinr::train::{self, TrainError, TrainOptions};

const USAGE: u8 = 1;
const DATA: u8 = 2;
const NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "quinr",
    version,
    about = "Quantum implicit neural representation codec"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on an image and write it as a `.qinr` file.
    Encode(EncodeArgs),
    /// Reconstruct an image from a `.qinr` file.
    Decode(DecodeArgs),
    /// Print the PSNR of TEST against REFERENCE.
    Eval(EvalArgs),
    /// Train a grid of models and write a rate-distortion CSV.
    Sweep(Box<SweepArgs>),
    /// Check every analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Quinr,
    Siren,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ActivationArg {
    Qrelu,
    Relu,
    #[value(alias = "leaky_relu")]
    LeakyRelu,
    Identity,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Qrelu => Activation::QRelu,
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::LeakyRelu => Activation::LeakyRelu,
            ActivationArg::Identity => Activation::Identity,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConventionArg {
    /// sin(ω0·Wx + b)
    Literal,
    /// sin(ω0·(Wx + b))
    Siren,
}

impl From<ConventionArg> for SineConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Literal => SineConvention::Literal,
            ConventionArg::Siren => SineConvention::Siren,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dims {
    height: usize,
    width: usize,
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("`{s}` is not of the form HxW"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok(Dims {
        height: parse(h)?,
        width: parse(w)?,
    })
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Height and width of raw `.f32` range images, e.g. `64x1024`.
    #[arg(long, value_name = "HxW", value_parser = parse_dims)]
    range_dims: Option<Dims>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "quinr")]
    model: Kind,
    /// Number of simulated qubits.
    #[arg(long, default_value_t = 4)]
    qubits: usize,
    /// Folding rounds of the angle embedding.
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Embedding size M; must equal qubits × folds.
    #[arg(long)]
    embed: Option<usize>,
    /// Entangling layers per block.
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Re-uploading blocks.
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 30.0)]
    omega0: f32,
    #[arg(long, value_enum, default_value = "qrelu")]
    activation: ActivationArg,
    /// Form of the sinusoidal input layer.
    #[arg(long, value_enum, default_value = "literal")]
    eq2: ConventionArg,
    /// Drop the trainable scale/bias on measured probabilities.
    #[arg(long)]
    no_head_affine: bool,
    #[arg(long, default_value_t = 0)]
    shuffle_seed: u64,
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    /// SIREN hidden width.
    #[arg(long, default_value_t = 10)]
    siren_width: usize,
    /// SIREN hidden layers.
    #[arg(long, default_value_t = 2)]
    siren_depth: usize,
}

impl ModelArgs {
    fn spec(&self, n_out: usize) -> ModelSpec {
        match self.model {
            Kind::Quinr => {
                let mut c =
                    ModelConfig::new(2, n_out, self.qubits, self.folds, self.layers, self.blocks);
                if let Some(m) = self.embed {
                    c.embed_size = m;
                }
                c.omega0 = self.omega0;
                c.activation = self.activation.into();
                c.eq2_convention = self.eq2.into();
                c.head_affine = !self.no_head_affine;
                c.shuffle_seed = self.shuffle_seed;
                c.init_seed = self.init_seed;
                ModelSpec::Quinr(c)
            }
            Kind::Siren => {
                let mut c = SirenConfig::new(2, n_out, self.siren_width, self.siren_depth);
                c.omega0 = self.omega0;
                c.init_seed = self.init_seed;
                ModelSpec::Siren(c)
            }
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Coordinates per step; the whole image when at least the pixel count.
    #[arg(long, default_value_t = 1024)]
    batch: usize,
    /// Minibatch shuffling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Progress line interval on stderr; 0 silences it.
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

impl TrainArgs {
    fn options(&self) -> TrainOptions {
        TrainOptions {
            steps: self.steps,
            lr: self.lr,
            batch_size: self.batch,
            seed: self.seed,
            log_every: self.log_every,
            progress: self.log_every > 0,
            ..TrainOptions::default()
        }
    }
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// PNG image or raw `.f32` range image.
    input: PathBuf,
    /// Output `.qinr` file.
    output: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, default_value = "fp32")]
    dtype: Dtype,
    #[command(flatten)]
    io: InputArgs,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    input: PathBuf,
    /// Reconstruction: PNG for images, raw `.f32` for range data.
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    reference: PathBuf,
    test: PathBuf,
    #[command(flatten)]
    io: InputArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// PNG image or raw `.f32` range image.
    input: PathBuf,
    /// Output CSV; metadata goes to `<output>.meta`.
    output: PathBuf,
    /// Grid file of `key=value[,value…]` lines. Flags below override it.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Model kinds, e.g. `quinr,siren`.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    qubits: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long)]
    siren_width: Option<String>,
    #[arg(long)]
    siren_depth: Option<String>,
    /// Storage precisions, e.g. `fp32,fp16`.
    #[arg(long)]
    dtype: Option<String>,
    #[arg(long)]
    omega0: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    eq2: Option<String>,
    #[arg(long)]
    head_affine: Option<String>,
    #[arg(long)]
    shuffle_seed: Option<String>,
    #[arg(long)]
    init_seed: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Grid points trained concurrently; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Write 0 in the seconds column so reruns produce identical files.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    io: InputArgs,
}

impl SweepArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 18] {
        [
            ("kind", &self.kind),
            ("qubits", &self.qubits),
            ("folds", &self.folds),
            ("layers", &self.layers),
            ("blocks", &self.blocks),
            ("siren_width", &self.siren_width),
            ("siren_depth", &self.siren_depth),
            ("dtype", &self.dtype),
            ("omega0", &self.omega0),
            ("activation", &self.activation),
            ("eq2", &self.eq2),
            ("head_affine", &self.head_affine),
            ("shuffle_seed", &self.shuffle_seed),
            ("init_seed", &self.init_seed),
            ("steps", &self.steps),
            ("lr", &self.lr),
            ("batch", &self.batch),
            ("seed", &self.seed),
        ]
    }
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self::new(USAGE, error)
    }

    fn data(error: impl Into<anyhow::Error>) -> Self {
        Self::new(DATA, error)
    }

    fn context(mut self, what: String) -> Self {
        self.error = self.error.context(what);
        self
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Self::data(e)
    }
}

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Unrepresentable { .. } => Self::new(NUMERIC, e),
            CodecError::Config(_) | CodecError::Overflow { .. } => Self::usage(e),
            _ => Self::data(e),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } | TrainError::Gradient { .. } => Self::new(NUMERIC, e),
            TrainError::Data(_) => Self::data(e),
            _ => Self::usage(e),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Parse { .. } | SweepError::EmptyGrid | SweepError::Pool(_) => {
                Self::usage(e)
            }
            _ => Self::data(e),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn is_range_file(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("f32"))
}

fn load(path: &Path, io: &InputArgs) -> Result<SignalTensor, Failure> {
    if is_range_file(path) {
        let dims = io.range_dims.ok_or_else(|| {
            Failure::usage(anyhow!(
                "{} is a raw range image; pass --range-dims HxW",
                path.display()
            ))
        })?;
        Ok(io::load_range_image(path, dims.height, dims.width)?)
    } else {
        Ok(io::load_image(path)?)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    std::fs::write(path, bytes)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::data)
}

fn encode(args: &EncodeArgs) -> CmdResult {
    let spec = args.model.spec(1);
    // Shape-independent checks first so bad flags fail before any I/O.
    spec.validate().map_err(Failure::usage)?;
    let opts = args.train.options();
    if opts.steps == 0 || opts.batch_size == 0 {
        return Err(Failure::usage(anyhow!(
            "--steps and --batch must be at least 1"
        )));
    }

    let signal = load(&args.input, &args.io)?;
    let spec = args.model.spec(signal.channels());
    spec.validate().map_err(Failure::usage)?;
    let dataset = train::build_dataset(&signal);
    let mut model: AnyModel = spec.init().map_err(Failure::usage)?;
    let report = train::fit(&mut model, &dataset, &opts)?;

    let bytes = codec::serialize(&model, &dataset.meta, args.dtype)?;
    write_file(&args.output, &bytes)?;
    let decoded = codec::decode(&bytes)?;
    let db = io::psnr(&signal, &decoded)?;
    let bpp = codec::bpp(bytes.len(), signal.pixels())
        .map_err(|_| Failure::data(anyhow!("image has no pixels")))?;
    eprintln!(
        "trained {} steps in {:.2}s, best step {}, {} bytes",
        report.steps,
        report.seconds,
        report.best_step,
        bytes.len()
    );
    println!("bpp={bpp:.6} psnr={db:.4}");
    Ok(())
}

fn decode(args: &DecodeArgs) -> CmdResult {
    let ctx = |f: Failure| f.context(format!("decoding {}", args.input.display()));
    let bytes = std::fs::read(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))
        .map_err(Failure::data)?;
    let signal = codec::decode(&bytes).map_err(|e| ctx(e.into()))?;
    match signal.domain() {
        ValueDomain::U8Image => io::save_image(&signal, &args.output)?,
        ValueDomain::FloatRange => io::save_range_image(&signal, &args.output)?,
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> CmdResult {
    let reference = load(&args.reference, &args.io)?;
    let test = load(&args.test, &args.io)?;
    let db = io::psnr(&reference, &test)?;
    println!("psnr={db:.4}");
    Ok(())
}

fn sweep(args: &SweepArgs) -> CmdResult {
    let mut grid = match &args.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::data)?;
            GridSpec::parse(&text)
                .map_err(|e| Failure::from(e).context(path.display().to_string()))?
        }
        None => GridSpec::default(),
    };
    for (key, value) in args.overrides() {
        if let Some(v) = value {
            grid.set(key, v)
                .map_err(|m| Failure::usage(anyhow!("--{}: {m}", key.replace('_', "-"))))?;
        }
    }

    let signal = load(&args.input, &args.io)?;
    let specs = grid.expand(2, signal.channels());
    let opts = SweepOptions {
        train: grid.train_options(&TrainOptions {
            log_every: 0,
            ..TrainOptions::default()
        }),
        dtypes: grid.dtypes.clone(),
        jobs: args.jobs,
        record_time: !args.no_timing,
    };
    eprintln!(
        "sweeping {} grid points × {} dtypes",
        specs.len(),
        opts.dtypes.len()
    );
    let rows = sweep::rd_sweep(&signal, &specs, &opts)?;

    let mut csv = Vec::new();
    sweep::write_csv(&rows, &mut csv)?;
    write_file(&args.output, &csv)?;
    let mut meta = args.output.clone().into_os_string();
    meta.push(".meta");
    write_file(Path::new(&meta), sweep::csv_metadata(&signal).as_bytes())?;

    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} rows failed; see the pareto column",
            rows.len()
        );
    }
    Ok(())
}

fn gradcheck(args: &GradcheckArgs) -> CmdResult {
    let results = quinr::gradcheck::run_all(args.seed);
    for r in &results {
        println!(
            "{} {} coords={} max_rel={:.3e} max_abs={:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.coordinates,
            r.max_rel_err,
            r.max_abs_err
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::new(
            NUMERIC,
            anyhow!("{failed} gradient checks failed"),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
