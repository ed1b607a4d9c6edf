//! The hybrid quINR network and the classical SIREN baseline.
//!
//! A quINR forward pass is
//!
//! 1. `h = sin(ω0·W·x + b)`, an `M`-vector with `M = N_q·F`;
//! 2. for each of `B` blocks: a folded-angle embedding of `h` (permuted per
//!    block), then `L` entangling layers with trainable angles;
//! 3. exact measurement of all `2^N_q` basis probabilities;
//! 4. the last `N_out` probabilities, optionally through a per-channel
//!    affine head, then the output activation.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Activation, AutodiffError, ParamStore, SineConvention, Tape, Var};
use crate::qsim::{AngleSource, CircuitProgram, GateOp, SimError, MAX_QUBITS};

pub const SLICE_W: &str = "W";
pub const SLICE_B: &str = "b";
pub const SLICE_QUANTUM: &str = "quantum_angles";
pub const SLICE_OUT_SCALE: &str = "out_scale";
pub const SLICE_OUT_BIAS: &str = "out_bias";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("embed size {embed} must equal qubits × folds = {qubits} × {folds} = {}", qubits * folds)]
    EmbedMismatch {
        embed: usize,
        qubits: usize,
        folds: usize,
    },
    #[error("{n_out} output channels need at least {n_out} basis states, {n_qubits} qubits give {}", 1usize << n_qubits)]
    TooManyOutputs { n_out: usize, n_qubits: usize },
    #[error("{field} must be at least {min}, got {value}")]
    TooSmall {
        field: &'static str,
        min: usize,
        value: usize,
    },
    #[error("{field} must be at most {max}, got {value}")]
    TooLarge {
        field: &'static str,
        max: usize,
        value: usize,
    },
    #[error("omega0 must be finite and nonzero, got {0}")]
    BadOmega(f32),
    #[error("parameter vector has {actual} values, the model needs {expected}")]
    ParamCount { expected: usize, actual: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn at_least(field: &'static str, value: usize, min: usize) -> Result<(), ConfigError> {
    if value < min {
        return Err(ConfigError::TooSmall { field, min, value });
    }
    Ok(())
}

fn at_most(field: &'static str, value: usize, max: usize) -> Result<(), ConfigError> {
    if value > max {
        return Err(ConfigError::TooLarge { field, max, value });
    }
    Ok(())
}

/// Architecture hyperparameters for a quINR model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_in: usize,
    pub n_out: usize,
    pub n_qubits: usize,
    pub folds: usize,
    pub embed_size: usize,
    pub entangling_layers: usize,
    pub blocks: usize,
    /// Kept in single precision so a stored config reproduces it exactly.
    pub omega0: f32,
    pub shuffle_seed: u64,
    pub init_seed: u64,
    pub activation: Activation,
    pub eq2_convention: SineConvention,
    pub head_affine: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::new(2, 1, 4, 3, 2, 2)
    }
}

impl ModelConfig {
    /// Config with `embed_size = n_qubits · folds` and defaults elsewhere.
    pub fn new(
        n_in: usize,
        n_out: usize,
        n_qubits: usize,
        folds: usize,
        entangling_layers: usize,
        blocks: usize,
    ) -> Self {
        Self {
            n_in,
            n_out,
            n_qubits,
            folds,
            embed_size: n_qubits * folds,
            entangling_layers,
            blocks,
            omega0: 30.0,
            shuffle_seed: 0,
            init_seed: 0,
            activation: Activation::QRelu,
            eq2_convention: SineConvention::Literal,
            head_affine: true,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        at_least("n_in", self.n_in, 1)?;
        at_least("n_out", self.n_out, 1)?;
        at_least("n_qubits", self.n_qubits, 2)?;
        at_most("n_qubits", self.n_qubits, MAX_QUBITS)?;
        at_least("folds", self.folds, 1)?;
        at_least("entangling_layers", self.entangling_layers, 1)?;
        at_least("blocks", self.blocks, 1)?;
        for (field, v) in [
            ("n_in", self.n_in),
            ("n_out", self.n_out),
            ("folds", self.folds),
            ("embed_size", self.embed_size),
            ("entangling_layers", self.entangling_layers),
            ("blocks", self.blocks),
        ] {
            at_most(field, v, u16::MAX as usize)?;
        }
        if self.embed_size != self.n_qubits * self.folds {
            return Err(ConfigError::EmbedMismatch {
                embed: self.embed_size,
                qubits: self.n_qubits,
                folds: self.folds,
            });
        }
        if self.n_out > 1usize << self.n_qubits {
            return Err(ConfigError::TooManyOutputs {
                n_out: self.n_out,
                n_qubits: self.n_qubits,
            });
        }
        if !self.omega0.is_finite() || self.omega0 == 0.0 {
            return Err(ConfigError::BadOmega(self.omega0));
        }
        Ok(())
    }

    /// Trainable angles in one entangling layer.
    pub fn angles_per_entangling_layer(&self) -> usize {
        entangling_layer_angles(self.n_qubits)
    }

    pub fn quantum_param_count(&self) -> usize {
        self.blocks * self.entangling_layers * self.angles_per_entangling_layer()
    }

    /// Size of the circuit's angle vector: embedding angles for every block
    /// followed by every trainable angle.
    pub fn circuit_angle_count(&self) -> usize {
        self.embed_size * self.blocks + self.quantum_param_count()
    }
}

/// Total trainable parameters for `config`.
pub fn param_count(config: &ModelConfig) -> usize {
    let m = config.embed_size;
    m * config.n_in
        + m
        + config.quantum_param_count()
        + if config.head_affine {
            2 * config.n_out
        } else {
            0
        }
}

fn entangling_layer_angles(n_qubits: usize) -> usize {
    4 * n_qubits + n_qubits * (n_qubits - 1)
}

/// Folded-angle embedding: fold round `r` rotates every qubit `q` by angle
/// `r·N_q + q`, with RX on even rounds and RZ on odd rounds.
pub fn build_folded_embedding(n_qubits: usize, folds: usize) -> Vec<GateOp> {
    let mut ops = Vec::with_capacity(n_qubits * folds);
    for round in 0..folds {
        for q in 0..n_qubits {
            let angle = AngleSource::Index(round * n_qubits + q);
            ops.push(if round % 2 == 0 {
                GateOp::rx(q, angle)
            } else {
                GateOp::rz(q, angle)
            });
        }
    }
    ops
}

/// One entangling layer: RZ·RX on each qubit, CRZ on every ordered pair
/// (control-major), then RZ·RX on each qubit again.
pub fn build_entangling_layer(n_qubits: usize) -> Result<Vec<GateOp>, ConfigError> {
    at_least("n_qubits", n_qubits, 2)?;
    let mut ops = Vec::with_capacity(entangling_layer_angles(n_qubits));
    let mut next = 0;
    let mut idx = || {
        next += 1;
        AngleSource::Index(next - 1)
    };
    for q in 0..n_qubits {
        ops.push(GateOp::rz(q, idx()));
        ops.push(GateOp::rx(q, idx()));
    }
    for c in 0..n_qubits {
        for t in (0..n_qubits).filter(|&t| t != c) {
            ops.push(GateOp::crz(c, t, idx()));
        }
    }
    for q in 0..n_qubits {
        ops.push(GateOp::rz(q, idx()));
        ops.push(GateOp::rx(q, idx()));
    }
    Ok(ops)
}

/// Per-block permutations of `0..embed_size`: identity for block 0,
/// Fisher–Yates from a ChaCha8 stream keyed by `shuffle_seed` afterwards.
pub fn block_permutations(embed_size: usize, blocks: usize, shuffle_seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    (0..blocks)
        .map(|b| {
            let mut perm: Vec<usize> = (0..embed_size).collect();
            if b > 0 {
                perm.shuffle(&mut rng);
            }
            perm
        })
        .collect()
}

/// Circuit for the whole quantum section: per block, the folded embedding
/// (angles `b·M ..`) then `L` entangling layers (angles after all
/// embedding angles).
pub fn build_circuit(config: &ModelConfig) -> Result<CircuitProgram, ConfigError> {
    config.validate()?;
    let m = config.embed_size;
    let per_layer = config.angles_per_entangling_layer();
    let embed = build_folded_embedding(config.n_qubits, config.folds);
    let layer = build_entangling_layer(config.n_qubits)?;
    let mut ops = Vec::new();
    for b in 0..config.blocks {
        ops.extend(embed.iter().map(|op| op.offset_angle(b * m)));
        for l in 0..config.entangling_layers {
            let offset = config.blocks * m + (b * config.entangling_layers + l) * per_layer;
            ops.extend(layer.iter().map(|op| op.offset_angle(offset)));
        }
    }
    Ok(CircuitProgram::new(
        config.n_qubits,
        ops,
        config.circuit_angle_count(),
    )?)
}

/// Slack past π before a single-qubit angle is reduced, so values that
/// storage rounding pushed just over the boundary are left alone.
const WRAP_SLACK: f64 = 1.0 / 64.0;

/// `values` with every trainable RX / RZ angle reduced into `[−π, π]`.
///
/// A 2π shift of a single-qubit rotation multiplies the whole state by −1,
/// so measured probabilities and the model output are unchanged. Smaller
/// magnitudes survive fp16 storage with finer resolution. CRZ angles and
/// SIREN parameters pass through.
pub fn canonical_values(spec: &ModelSpec, values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    let ModelSpec::Quinr(c) = spec else {
        return out;
    };
    let start = c.embed_size * (c.n_in + 1);
    let per_layer = c.angles_per_entangling_layer();
    let single = 2 * c.n_qubits;
    let crz_end = single + c.n_qubits * (c.n_qubits - 1);
    let end = (start + c.quantum_param_count()).min(out.len());
    for (j, v) in out[start.min(end)..end].iter_mut().enumerate() {
        let pos = j % per_layer;
        let is_single = pos < single || pos >= crz_end;
        if is_single && v.is_finite() && v.abs() > std::f64::consts::PI + WRAP_SLACK {
            *v -= TAU * (*v / TAU).round();
        }
    }
    out
}

/// Architecture of either model kind, enough to rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Quinr(ModelConfig),
    Siren(SirenConfig),
}

impl ModelSpec {
    pub fn n_in(&self) -> usize {
        match self {
            ModelSpec::Quinr(c) => c.n_in,
            ModelSpec::Siren(c) => c.n_in,
        }
    }

    pub fn n_out(&self) -> usize {
        match self {
            ModelSpec::Quinr(c) => c.n_out,
            ModelSpec::Siren(c) => c.n_out,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::Quinr(c) => param_count(c),
            ModelSpec::Siren(c) => c.param_count(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            ModelSpec::Quinr(c) => c.validate(),
            ModelSpec::Siren(c) => c.validate(),
        }
    }

    /// Build a freshly initialized model.
    pub fn init(&self) -> Result<AnyModel, ConfigError> {
        Ok(match self {
            ModelSpec::Quinr(c) => AnyModel::Quinr(QuinrModel::new(c.clone())?),
            ModelSpec::Siren(c) => AnyModel::Siren(SirenModel::new(c.clone())?),
        })
    }

    /// Build the model and load `values` into it.
    pub fn build(&self, values: &[f64]) -> Result<AnyModel, ConfigError> {
        Ok(match self {
            ModelSpec::Quinr(c) => AnyModel::Quinr(QuinrModel::from_values(c.clone(), values)?),
            ModelSpec::Siren(c) => AnyModel::Siren(SirenModel::from_values(c.clone(), values)?),
        })
    }
}

/// A coordinate network trainable through a [`Tape`].
pub trait Inr: Send + Sync {
    fn spec(&self) -> ModelSpec;
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Record the forward pass for coordinate `x` on `tape`.
    fn record(&self, tape: &mut Tape, x: &[f64]) -> Result<Var, AutodiffError>;

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut tape = Tape::new();
        let out = self
            .record(&mut tape, x)
            .expect("model dimensions are validated at construction");
        tape.value(out).to_vec()
    }

    /// MSE against `target` at `x`; parameter gradients are added to `grads`.
    fn loss_and_grad(
        &self,
        x: &[f64],
        target: &[f64],
        grads: &mut [f64],
    ) -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let out = self.record(&mut tape, x)?;
        let loss = tape.mse(out, target)?;
        tape.backward(loss, grads)?;
        Ok(tape.value(loss)[0])
    }
}

#[derive(Debug, Clone)]
pub struct QuinrModel {
    config: ModelConfig,
    params: ParamStore,
    circuit: Arc<CircuitProgram>,
    permutations: Vec<Vec<usize>>,
}

impl QuinrModel {
    /// Build and initialize from `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let m = config.embed_size;
        // Effective input frequencies ω0·W start in [-1/N_in, 1/N_in].
        let limit = 1.0 / (config.n_in as f64 * config.omega0.abs() as f64);
        let w = (0..m * config.n_in)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        let quantum = (0..config.quantum_param_count())
            .map(|_| rng.gen_range(0.0..TAU))
            .collect();
        let mut parts = vec![
            (SLICE_W, w),
            (SLICE_B, vec![0.0; m]),
            (SLICE_QUANTUM, quantum),
        ];
        if config.head_affine {
            let scale = (1usize << config.n_qubits) as f64 / config.n_out as f64;
            parts.push((SLICE_OUT_SCALE, vec![scale; config.n_out]));
            parts.push((SLICE_OUT_BIAS, vec![0.0; config.n_out]));
        }
        Self::assemble(config, ParamStore::from_slices(parts))
    }

    /// Build with explicit parameter values (e.g. from a decoded file).
    pub fn from_values(config: ModelConfig, values: &[f64]) -> Result<Self, ConfigError> {
        let mut model = Self::new(config)?;
        model
            .params
            .set_values(values)
            .map_err(|_| ConfigError::ParamCount {
                expected: model.params.len(),
                actual: values.len(),
            })?;
        Ok(model)
    }

    fn assemble(config: ModelConfig, params: ParamStore) -> Result<Self, ConfigError> {
        let circuit = Arc::new(build_circuit(&config)?);
        let permutations =
            block_permutations(config.embed_size, config.blocks, config.shuffle_seed);
        Ok(Self {
            config,
            params,
            circuit,
            permutations,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn circuit(&self) -> &CircuitProgram {
        &self.circuit
    }

    pub fn block_permutations(&self) -> &[Vec<usize>] {
        &self.permutations
    }

    /// All `2^N_q` measured probabilities at `x`, before the head.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut tape = Tape::new();
        let p = self
            .record_probabilities(&mut tape, x)
            .expect("model dimensions are validated at construction");
        tape.value(p).to_vec()
    }

    fn record_probabilities(&self, tape: &mut Tape, x: &[f64]) -> Result<Var, AutodiffError> {
        let cfg = &self.config;
        let w = tape.param(&self.params, SLICE_W)?;
        let b = tape.param(&self.params, SLICE_B)?;
        let xv = tape.constant(x.to_vec());
        let h = tape.linear_sine(w, b, xv, cfg.omega0 as f64, cfg.eq2_convention)?;
        let q = tape.param(&self.params, SLICE_QUANTUM)?;

        let m = cfg.embed_size;
        let mut angles = Vec::with_capacity(self.circuit.n_angles());
        for perm in &self.permutations {
            angles.extend(perm.iter().map(|&j| tape.value(h)[j]));
        }
        angles.extend_from_slice(tape.value(q));

        let state = self
            .circuit
            .run(&angles)
            .map_err(|_| AutodiffError::Dimension {
                op: "circuit",
                expected: self.circuit.n_angles(),
                actual: angles.len(),
            })?;
        let circuit = Arc::clone(&self.circuit);
        let perms = self.permutations.clone();
        let n_embed = m * cfg.blocks;
        Ok(tape.custom(
            &[h, q],
            state.probabilities(),
            Box::new(move |up| {
                let g = circuit
                    .gradient(&angles, up)
                    .expect("angles and upstream sized by construction");
                let mut dh = vec![0.0; m];
                for (b, perm) in perms.iter().enumerate() {
                    for (slot, &j) in perm.iter().enumerate() {
                        dh[j] += g[b * m + slot];
                    }
                }
                vec![dh, g[n_embed..].to_vec()]
            }),
        ))
    }
}

impl Inr for QuinrModel {
    fn spec(&self) -> ModelSpec {
        ModelSpec::Quinr(self.config.clone())
    }

    fn n_in(&self) -> usize {
        self.config.n_in
    }

    fn n_out(&self) -> usize {
        self.config.n_out
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn record(&self, tape: &mut Tape, x: &[f64]) -> Result<Var, AutodiffError> {
        if x.len() != self.config.n_in {
            return Err(AutodiffError::Dimension {
                op: "quinr forward",
                expected: self.config.n_in,
                actual: x.len(),
            });
        }
        let p = self.record_probabilities(tape, x)?;
        let mut y = tape.tail(p, self.config.n_out)?;
        if self.config.head_affine {
            let scale = tape.param(&self.params, SLICE_OUT_SCALE)?;
            let bias = tape.param(&self.params, SLICE_OUT_BIAS)?;
            y = tape.affine(y, scale, bias)?;
        }
        Ok(tape.activation(y, self.config.activation))
    }
}

/// Layout of a SIREN baseline: `n_in → hidden_width × hidden_layers → n_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct SirenConfig {
    pub n_in: usize,
    pub n_out: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub omega0: f32,
    pub init_seed: u64,
}

impl SirenConfig {
    pub fn new(n_in: usize, n_out: usize, hidden_width: usize, hidden_layers: usize) -> Self {
        Self {
            n_in,
            n_out,
            hidden_width,
            hidden_layers,
            omega0: 30.0,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        at_least("n_in", self.n_in, 1)?;
        at_least("n_out", self.n_out, 1)?;
        for (field, v) in [
            ("n_in", self.n_in),
            ("n_out", self.n_out),
            ("hidden_width", self.hidden_width),
            ("hidden_layers", self.hidden_layers),
        ] {
            at_most(field, v, u16::MAX as usize)?;
        }
        if self.hidden_layers > 0 {
            at_least("hidden_width", self.hidden_width, 1)?;
        }
        if !self.omega0.is_finite() || self.omega0 == 0.0 {
            return Err(ConfigError::BadOmega(self.omega0));
        }
        Ok(())
    }

    /// Widths of every layer boundary, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.n_in];
        w.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        w.push(self.n_out);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }
}

/// Sine-activated MLP (COIN baseline): every hidden layer is
/// `sin(ω0·(W·x + b))`, the final layer is linear.
#[derive(Debug, Clone)]
pub struct SirenModel {
    config: SirenConfig,
    params: ParamStore,
}

impl SirenModel {
    pub fn new(config: SirenConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let omega = config.omega0 as f64;
        let mut parts = Vec::new();
        for (i, pair) in config.widths().windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = if i == 0 {
                1.0 / fan_in as f64
            } else {
                (6.0 / fan_in as f64).sqrt() / omega
            };
            let w = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..=limit))
                .collect();
            let b = (0..fan_out)
                .map(|_| rng.gen_range(-limit..=limit))
                .collect();
            parts.push((format!("layer{i}.weight"), w));
            parts.push((format!("layer{i}.bias"), b));
        }
        Ok(Self {
            config,
            params: ParamStore::from_slices(parts),
        })
    }

    pub fn from_values(config: SirenConfig, values: &[f64]) -> Result<Self, ConfigError> {
        let mut model = Self::new(config)?;
        model
            .params
            .set_values(values)
            .map_err(|_| ConfigError::ParamCount {
                expected: model.params.len(),
                actual: values.len(),
            })?;
        Ok(model)
    }

    pub fn config(&self) -> &SirenConfig {
        &self.config
    }
}

impl Inr for SirenModel {
    fn spec(&self) -> ModelSpec {
        ModelSpec::Siren(self.config.clone())
    }

    fn n_in(&self) -> usize {
        self.config.n_in
    }

    fn n_out(&self) -> usize {
        self.config.n_out
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn record(&self, tape: &mut Tape, x: &[f64]) -> Result<Var, AutodiffError> {
        if x.len() != self.config.n_in {
            return Err(AutodiffError::Dimension {
                op: "siren forward",
                expected: self.config.n_in,
                actual: x.len(),
            });
        }
        let layers = self.config.hidden_layers + 1;
        let mut act = tape.constant(x.to_vec());
        for i in 0..layers {
            let w = tape.param(&self.params, &format!("layer{i}.weight"))?;
            let b = tape.param(&self.params, &format!("layer{i}.bias"))?;
            act = if i + 1 < layers {
                tape.linear_sine(w, b, act, self.config.omega0 as f64, SineConvention::Siren)?
            } else {
                tape.linear(w, b, act)?
            };
        }
        Ok(act)
    }
}

/// Either model kind behind one type.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Quinr(QuinrModel),
    Siren(SirenModel),
}

impl AnyModel {
    fn inner(&self) -> &dyn Inr {
        match self {
            AnyModel::Quinr(m) => m,
            AnyModel::Siren(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Inr {
        match self {
            AnyModel::Quinr(m) => m,
            AnyModel::Siren(m) => m,
        }
    }
}

impl From<QuinrModel> for AnyModel {
    fn from(m: QuinrModel) -> Self {
        AnyModel::Quinr(m)
    }
}

impl From<SirenModel> for AnyModel {
    fn from(m: SirenModel) -> Self {
        AnyModel::Siren(m)
    }
}

impl Inr for AnyModel {
    fn spec(&self) -> ModelSpec {
        self.inner().spec()
    }

    fn n_in(&self) -> usize {
        self.inner().n_in()
    }

    fn n_out(&self) -> usize {
        self.inner().n_out()
    }

    fn params(&self) -> &ParamStore {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.inner_mut().params_mut()
    }

    fn record(&self, tape: &mut Tape, x: &[f64]) -> Result<Var, AutodiffError> {
        self.inner().record(tape, x)
    }
}

/// Free-function form of [`Inr::forward`] for the baseline.
pub fn siren_forward(model: &SirenModel, x: &[f64]) -> Vec<f64> {
    model.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{GateKind, Statevector};
    use std::f64::consts::PI;

    #[test]
    fn folded_embedding_four_qubits_three_folds() {
        let ops = build_folded_embedding(4, 3);
        assert_eq!(ops.len(), 12);
        for (k, op) in ops.iter().enumerate() {
            let round = k / 4;
            assert_eq!(op.target, k % 4);
            assert_eq!(op.angle, AngleSource::Index(k));
            let want = if round == 1 {
                GateKind::Rz
            } else {
                GateKind::Rx
            };
            assert_eq!(op.kind, want);
        }
        let single = build_folded_embedding(1, 1);
        assert_eq!(single, vec![GateOp::rx(0, AngleSource::Index(0))]);
    }

    #[test]
    fn entangling_layer_counts() {
        assert_eq!(build_entangling_layer(4).unwrap().len(), 28);
        assert_eq!(build_entangling_layer(2).unwrap().len(), 10);
        assert!(build_entangling_layer(1).is_err());
        let ops = build_entangling_layer(3).unwrap();
        let crz: Vec<(usize, usize)> = ops
            .iter()
            .filter(|o| o.kind == GateKind::Crz)
            .map(|o| (o.control.unwrap(), o.target))
            .collect();
        assert_eq!(crz, vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
        assert_eq!(ops[0].kind, GateKind::Rz);
        assert_eq!(ops[1].kind, GateKind::Rx);
        assert_eq!(ops.last().unwrap().kind, GateKind::Rx);
    }

    #[test]
    fn zero_angle_blocks_are_identity() {
        let n = 3;
        let mut ops = build_folded_embedding(n, 2);
        ops.extend(
            build_entangling_layer(n)
                .unwrap()
                .into_iter()
                .map(|op| op.offset_angle(6)),
        );
        let prog = CircuitProgram::new(n, ops, 6 + 18).unwrap();
        let s = prog.run(&[0.0; 24]).unwrap();
        assert_eq!(s, Statevector::new(n).unwrap());
    }

    #[test]
    fn param_count_example() {
        let mut cfg = ModelConfig::new(2, 1, 4, 3, 2, 1);
        assert_eq!(param_count(&cfg), 94);
        let single = cfg.quantum_param_count();
        cfg.blocks = 2;
        assert_eq!(cfg.quantum_param_count(), 2 * single);
        cfg.blocks = 0;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::TooSmall {
                field: "blocks",
                ..
            })
        ));
    }

    #[test]
    fn config_rejects_embed_mismatch() {
        let mut cfg = ModelConfig::new(2, 1, 4, 3, 1, 1);
        cfg.embed_size = 13;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::EmbedMismatch { embed: 13, .. })
        ));
        let mut cfg = ModelConfig::new(2, 5, 2, 1, 1, 1);
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::TooManyOutputs { .. })
        ));
        cfg.n_out = 4;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn circuit_angle_count_matches_layout() {
        let cfg = ModelConfig::new(2, 1, 3, 2, 2, 3);
        let model = QuinrModel::new(cfg.clone()).unwrap();
        assert_eq!(model.circuit().n_angles(), 6 * 3 + 3 * 2 * 18);
        assert_eq!(model.params().len(), param_count(&cfg));
    }

    #[test]
    fn permutations_deterministic_and_block_zero_identity() {
        let perms = block_permutations(12, 4, 7);
        assert_eq!(perms[0], (0..12).collect::<Vec<_>>());
        assert_eq!(perms, block_permutations(12, 4, 7));
        for p in &perms {
            let mut s = p.clone();
            s.sort_unstable();
            assert_eq!(s, (0..12).collect::<Vec<_>>());
        }
        assert_ne!(perms[1], perms[0]);
        assert_ne!(block_permutations(12, 4, 8)[1], perms[1]);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut cfg = ModelConfig::new(2, 3, 3, 2, 1, 2);
        cfg.head_affine = false;
        let mut model = QuinrModel::new(cfg).unwrap();
        model.params_mut().values.iter_mut().for_each(|v| *v = 0.0);
        for x in [[0.0, 0.0], [1.0, -1.0], [0.3, 0.7]] {
            assert_eq!(model.forward(&x), vec![0.0; 3]);
        }
    }

    #[test]
    fn single_qubit_pauli_x_case() {
        // N_q = 1, N_out = 1, one RX embedding with angle π: P(|1⟩) = 1.
        let prog = CircuitProgram::new(1, build_folded_embedding(1, 1), 1).unwrap();
        let p = prog.run(&[PI]).unwrap().probabilities();
        let out = Activation::QRelu.apply(p[p.len() - 1]);
        assert!((out - 1.0).abs() < 1e-15);
    }

    #[test]
    fn raw_outputs_are_probabilities() {
        let mut cfg = ModelConfig::new(2, 2, 3, 2, 1, 2);
        cfg.head_affine = false;
        cfg.activation = Activation::Identity;
        let model = QuinrModel::new(cfg).unwrap();
        let p = model.probabilities(&[0.2, -0.6]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let y = model.forward(&[0.2, -0.6]);
        assert_eq!(y, p[p.len() - 2..].to_vec());
    }

    #[test]
    fn siren_trivial_cases() {
        let mut zero = SirenModel::new(SirenConfig::new(2, 1, 4, 2)).unwrap();
        zero.params_mut().values.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(siren_forward(&zero, &[0.5, -0.5]), vec![0.0]);

        let mut ident = SirenModel::new(SirenConfig::new(2, 2, 0, 0)).unwrap();
        ident
            .params_mut()
            .set_values(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
            .unwrap();
        assert_eq!(siren_forward(&ident, &[0.25, -0.75]), vec![0.25, -0.75]);
        assert_eq!(SirenConfig::new(2, 1, 10, 2).param_count(), 151);
    }

    #[test]
    fn from_values_checks_length() {
        let cfg = ModelConfig::new(2, 1, 2, 1, 1, 1);
        assert!(matches!(
            QuinrModel::from_values(cfg, &[0.0; 3]),
            Err(ConfigError::ParamCount { .. })
        ));
    }
}
