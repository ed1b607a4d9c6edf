//! The `.qinr` bitstream: a trained model's architecture, normalization
//! metadata, and quantized parameters.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `QINR`                            |
//! | 4      | 1    | version (`1`)                           |
//! | 5      | 1    | model kind (`0` quinr, `1` siren)       |
//! | 6      | 1    | dtype (`0` fp32, `1` fp16)              |
//! | 7      | 1    | reserved (`0`)                          |
//! | 8      | …    | config block, u16 fields (see below)    |
//! |        | 8·k  | seeds, u64 (2 for quinr, 1 for siren)   |
//! |        | 4    | ω0, f32                                 |
//! |        | 8·C  | per channel: min f32, max f32           |
//! |        | 4    | parameter count, u32                    |
//! |        | …    | parameters in store order, in dtype     |
//!
//! quinr config block (13 × u16): height, width, channels, value domain,
//! n_in, n_qubits, folds, embed size, entangling layers, blocks,
//! activation, sine convention, head affine. Seeds: shuffle, init.
//!
//! siren config block (7 × u16): height, width, channels, value domain,
//! n_in, hidden width, hidden layers. Seed: init.

use half::f16;
use thiserror::Error;

use crate::autodiff::{Activation, SineConvention};
use crate::io::{DataError, SignalTensor, ValueDomain};
use crate::model::{
    canonical_values, AnyModel, ConfigError, Inr, ModelConfig, ModelSpec, SirenConfig,
};
use crate::train::{coordinate_grid, denormalize, predict, ChannelNorm, NormMeta};

pub const MAGIC: [u8; 4] = *b"QINR";
pub const VERSION: u8 = 1;
/// Bytes before the config block.
pub const HEADER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("bad magic {found:02x?}, expected `QINR`")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported format version {0} (this build reads version {VERSION})")]
    UnsupportedVersion(u8),
    #[error("stream truncated: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("header declares {declared} parameters, the stored architecture has {expected}")]
    ParamCountMismatch { declared: usize, expected: usize },
    #[error("{extra} unexpected bytes after the parameter payload")]
    TrailingBytes { extra: usize },
    #[error("invalid {field} code {value}")]
    InvalidField { field: &'static str, value: u16 },
    #[error("{field} = {value} does not fit the format (max {max})")]
    Overflow {
        field: &'static str,
        value: usize,
        max: usize,
    },
    #[error("model has {model} output channels but the normalization metadata has {meta}")]
    ChannelMismatch { model: usize, meta: usize },
    #[error("parameter {index} ({value}) is not representable as {dtype:?}")]
    Unrepresentable {
        index: usize,
        value: f64,
        dtype: Dtype,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    Fp32,
    Fp16,
}

impl Dtype {
    pub fn bytes(self) -> usize {
        match self {
            Dtype::Fp32 => 4,
            Dtype::Fp16 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::Fp32 => "fp32",
            Dtype::Fp16 => "fp16",
        }
    }

    fn code(self) -> u8 {
        match self {
            Dtype::Fp32 => 0,
            Dtype::Fp16 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, CodecError> {
        match code {
            0 => Ok(Dtype::Fp32),
            1 => Ok(Dtype::Fp16),
            v => Err(CodecError::InvalidField {
                field: "dtype",
                value: v as u16,
            }),
        }
    }

    /// Round `v` to this precision and back.
    pub fn quantize(self, v: f64) -> f64 {
        match self {
            Dtype::Fp32 => v as f32 as f64,
            Dtype::Fp16 => f16::from_f64(v).to_f64(),
        }
    }
}

impl std::str::FromStr for Dtype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fp32" => Ok(Dtype::Fp32),
            "fp16" => Ok(Dtype::Fp16),
            other => Err(format!("unknown dtype `{other}` (expected fp32 or fp16)")),
        }
    }
}

/// A parsed `.qinr` stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedModel {
    pub spec: ModelSpec,
    pub meta: NormMeta,
    pub dtype: Dtype,
    pub param_bytes: Vec<u8>,
}

impl EncodedModel {
    /// Parameters widened to f64.
    pub fn values(&self) -> Vec<f64> {
        match self.dtype {
            Dtype::Fp32 => self
                .param_bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            Dtype::Fp16 => self
                .param_bytes
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f64())
                .collect(),
        }
    }

    pub fn build_model(&self) -> Result<AnyModel, CodecError> {
        Ok(self.spec.build(&self.values())?)
    }
}

fn activation_code(a: Activation) -> u16 {
    match a {
        Activation::QRelu => 0,
        Activation::Relu => 1,
        Activation::LeakyRelu => 2,
        Activation::Identity => 3,
    }
}

fn activation_from(v: u16) -> Result<Activation, CodecError> {
    Ok(match v {
        0 => Activation::QRelu,
        1 => Activation::Relu,
        2 => Activation::LeakyRelu,
        3 => Activation::Identity,
        v => {
            return Err(CodecError::InvalidField {
                field: "activation",
                value: v,
            })
        }
    })
}

fn domain_code(d: ValueDomain) -> u16 {
    match d {
        ValueDomain::U8Image => 0,
        ValueDomain::FloatRange => 1,
    }
}

fn domain_from(v: u16) -> Result<ValueDomain, CodecError> {
    Ok(match v {
        0 => ValueDomain::U8Image,
        1 => ValueDomain::FloatRange,
        v => {
            return Err(CodecError::InvalidField {
                field: "value domain",
                value: v,
            })
        }
    })
}

fn convention_from(v: u16) -> Result<SineConvention, CodecError> {
    Ok(match v {
        0 => SineConvention::Literal,
        1 => SineConvention::Siren,
        v => {
            return Err(CodecError::InvalidField {
                field: "sine convention",
                value: v,
            })
        }
    })
}

fn bool_from(field: &'static str, v: u16) -> Result<bool, CodecError> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(CodecError::InvalidField { field, value: v }),
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, field: &'static str, v: usize) -> Result<(), CodecError> {
        let v = u16::try_from(v).map_err(|_| CodecError::Overflow {
            field,
            value: v,
            max: u16::MAX as usize,
        })?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(CodecError::Truncated {
                expected: end,
                actual: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("eight bytes")))
    }

    fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_bits(self.u32()?))
    }
}

/// Encode `spec`, `values` and `meta` as a `.qinr` stream.
pub fn serialize_parts(
    spec: &ModelSpec,
    values: &[f64],
    meta: &NormMeta,
    dtype: Dtype,
) -> Result<Vec<u8>, CodecError> {
    spec.validate()?;
    let channels = meta.channels.len();
    if spec.n_out() != channels {
        return Err(CodecError::ChannelMismatch {
            model: spec.n_out(),
            meta: channels,
        });
    }
    if values.len() != spec.param_count() {
        return Err(ConfigError::ParamCount {
            expected: spec.param_count(),
            actual: values.len(),
        }
        .into());
    }
    let values = canonical_values(spec, values);
    let mut w = Writer(Vec::with_capacity(64 + values.len() * dtype.bytes()));
    w.0.extend_from_slice(&MAGIC);
    let kind = match spec {
        ModelSpec::Quinr(_) => 0,
        ModelSpec::Siren(_) => 1,
    };
    w.0.extend_from_slice(&[VERSION, kind, dtype.code(), 0]);
    w.u16("height", meta.height)?;
    w.u16("width", meta.width)?;
    w.u16("channels", channels)?;
    w.u16("value domain", domain_code(meta.domain) as usize)?;
    let omega0 = match spec {
        ModelSpec::Quinr(c) => {
            w.u16("n_in", c.n_in)?;
            w.u16("n_qubits", c.n_qubits)?;
            w.u16("folds", c.folds)?;
            w.u16("embed_size", c.embed_size)?;
            w.u16("entangling_layers", c.entangling_layers)?;
            w.u16("blocks", c.blocks)?;
            w.u16("activation", activation_code(c.activation) as usize)?;
            w.u16(
                "sine convention",
                match c.eq2_convention {
                    SineConvention::Literal => 0,
                    SineConvention::Siren => 1,
                },
            )?;
            w.u16("head_affine", c.head_affine as usize)?;
            w.u64(c.shuffle_seed);
            w.u64(c.init_seed);
            c.omega0
        }
        ModelSpec::Siren(c) => {
            w.u16("n_in", c.n_in)?;
            w.u16("hidden_width", c.hidden_width)?;
            w.u16("hidden_layers", c.hidden_layers)?;
            w.u64(c.init_seed);
            c.omega0
        }
    };
    w.f32(omega0);
    for ch in &meta.channels {
        w.f32(ch.min);
        w.f32(ch.max);
    }
    let count = u32::try_from(values.len()).map_err(|_| CodecError::Overflow {
        field: "param_count",
        value: values.len(),
        max: u32::MAX as usize,
    })?;
    w.0.extend_from_slice(&count.to_le_bytes());
    for (index, &v) in values.iter().enumerate() {
        let q = dtype.quantize(v);
        if !q.is_finite() {
            return Err(CodecError::Unrepresentable {
                index,
                value: v,
                dtype,
            });
        }
        match dtype {
            Dtype::Fp32 => w.0.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::Fp16 => w.0.extend_from_slice(&f16::from_f64(v).to_le_bytes()),
        }
    }
    Ok(w.0)
}

/// Encode a trained model.
pub fn serialize<M: Inr + ?Sized>(
    model: &M,
    meta: &NormMeta,
    dtype: Dtype,
) -> Result<Vec<u8>, CodecError> {
    serialize_parts(&model.spec(), &model.params().values, meta, dtype)
}

/// Parse a `.qinr` stream. The payload must end exactly at the last byte.
pub fn deserialize(bytes: &[u8]) -> Result<EncodedModel, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
        return Err(CodecError::Truncated {
            expected: MAGIC.len(),
            actual: bytes.len(),
        });
    }
    let magic = r.take(4).map_err(|_| CodecError::BadMagic {
        found: bytes.to_vec(),
    })?;
    if magic != MAGIC {
        return Err(CodecError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let kind = r.u8()?;
    let dtype = Dtype::from_code(r.u8()?)?;
    let _reserved = r.u8()?;

    let height = r.u16()? as usize;
    let width = r.u16()? as usize;
    let channels = r.u16()? as usize;
    let domain = domain_from(r.u16()?)?;
    let spec = match kind {
        0 => {
            let n_in = r.u16()? as usize;
            let n_qubits = r.u16()? as usize;
            let folds = r.u16()? as usize;
            let embed_size = r.u16()? as usize;
            let entangling_layers = r.u16()? as usize;
            let blocks = r.u16()? as usize;
            let activation = activation_from(r.u16()?)?;
            let eq2_convention = convention_from(r.u16()?)?;
            let head_affine = bool_from("head_affine", r.u16()?)?;
            let shuffle_seed = r.u64()?;
            let init_seed = r.u64()?;
            let omega0 = r.f32()?;
            ModelSpec::Quinr(ModelConfig {
                n_in,
                n_out: channels,
                n_qubits,
                folds,
                embed_size,
                entangling_layers,
                blocks,
                omega0,
                shuffle_seed,
                init_seed,
                activation,
                eq2_convention,
                head_affine,
            })
        }
        1 => {
            let n_in = r.u16()? as usize;
            let hidden_width = r.u16()? as usize;
            let hidden_layers = r.u16()? as usize;
            let init_seed = r.u64()?;
            let omega0 = r.f32()?;
            ModelSpec::Siren(SirenConfig {
                n_in,
                n_out: channels,
                hidden_width,
                hidden_layers,
                omega0,
                init_seed,
            })
        }
        v => {
            return Err(CodecError::InvalidField {
                field: "model kind",
                value: v as u16,
            })
        }
    };
    let mut norms = Vec::with_capacity(channels);
    for _ in 0..channels {
        let min = r.f32()?;
        let max = r.f32()?;
        norms.push(ChannelNorm { min, max });
    }
    let declared = r.u32()? as usize;
    spec.validate()?;
    let expected = spec.param_count();
    if declared != expected {
        return Err(CodecError::ParamCountMismatch { declared, expected });
    }
    let param_bytes = r.take(declared * dtype.bytes())?.to_vec();
    if r.pos != bytes.len() {
        return Err(CodecError::TrailingBytes {
            extra: bytes.len() - r.pos,
        });
    }
    Ok(EncodedModel {
        spec,
        meta: NormMeta {
            height,
            width,
            domain,
            channels: norms,
        },
        dtype,
        param_bytes,
    })
}

/// Rebuild the signal a `.qinr` stream represents.
pub fn decode(bytes: &[u8]) -> Result<SignalTensor, CodecError> {
    let encoded = deserialize(bytes)?;
    let model = encoded.build_model()?;
    let coords = coordinate_grid(encoded.meta.height, encoded.meta.width);
    Ok(denormalize(&encoded.meta, &predict(&model, &coords))?)
}

/// Copy of `model` with its parameters in storage form (angles reduced,
/// rounded to `dtype`), i.e. the model a decoder would rebuild.
pub fn quantized<M: Inr + Clone>(model: &M, dtype: Dtype) -> M {
    let mut out = model.clone();
    let stored: Vec<f64> = canonical_values(&model.spec(), &model.params().values)
        .into_iter()
        .map(|v| dtype.quantize(v))
        .collect();
    out.params_mut()
        .set_values(&stored)
        .expect("same parameter count");
    out
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("bits per pixel needs at least one pixel")]
pub struct ZeroPixels;

/// Whole-file rate: `8 · bytes / pixels`.
pub fn bpp(encoded_byte_len: usize, pixels: usize) -> Result<f64, ZeroPixels> {
    if pixels == 0 {
        return Err(ZeroPixels);
    }
    Ok(8.0 * encoded_byte_len as f64 / pixels as f64)
}

/// Bytes preceding the payload for a given architecture and channel count.
pub fn overhead_bytes(spec: &ModelSpec, channels: usize) -> usize {
    let config_block = match spec {
        ModelSpec::Quinr(_) => 13 * 2 + 2 * 8,
        ModelSpec::Siren(_) => 7 * 2 + 8,
    };
    HEADER_LEN + config_block + 4 + 8 * channels + 4
}
