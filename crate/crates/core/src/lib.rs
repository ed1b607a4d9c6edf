//! Signal compression with hybrid quantum-classical implicit neural
//! representations (quINR).
//!
//! An image is compressed by overfitting a small network that maps pixel
//! coordinates to pixel values; the trained parameters are the bitstream.
//! The network here is a sinusoidal embedding layer feeding a simulated
//! variational quantum circuit whose measured basis-state probabilities
//! become the output. A classical SIREN baseline goes through the same
//! training, storage, and evaluation paths.
//!
//! Modules, bottom-up:
//!
//! * [`qsim`]: statevector simulator for RX / RZ / CRZ with exact adjoint
//!   gradients.
//! * [`autodiff`]: reverse-mode tape for the classical pieces, plus Adam.
//! * [`model`]: circuit construction, the quINR model, and the SIREN
//!   baseline.
//! * [`train`]: coordinate datasets and the encoding optimization.
//! * [`codec`]: the `.qinr` file format, decoding, and bits-per-pixel.
//! * [`io`]: PNG and raw range-image I/O and PSNR.
//! * [`sweep`]: rate-distortion sweeps written as CSV.
//! * [`gradcheck`]: finite-difference checks of every gradient.
//!
//! ```
//! use quinr::codec::{self, Dtype};
//! use quinr::io::{linear_gradient, psnr};
//! use quinr::model::ModelConfig;
//! use quinr::train::{encode, TrainOptions};
//!
//! let image = linear_gradient(8, 8);
//! let config = ModelConfig::new(2, 1, 2, 2, 1, 1);
//! let opts = TrainOptions { steps: 20, log_every: 0, ..TrainOptions::default() };
//! let (model, report) = encode(&image, &config, &opts).unwrap();
//!
//! let meta = quinr::train::build_dataset(&image).meta;
//! let bytes = codec::serialize(&model, &meta, Dtype::Fp16).unwrap();
//! let decoded = codec::decode(&bytes).unwrap();
//! assert_eq!(decoded.dims(), image.dims());
//! assert!(psnr(&image, &decoded).unwrap() > 0.0);
//! assert!(report.final_mse.is_finite());
//! ```

pub mod autodiff;
pub mod codec;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod qsim;
pub mod sweep;
pub mod train;

pub use codec::{decode, deserialize, serialize, Dtype, EncodedModel};
pub use io::{SignalTensor, ValueDomain};
pub use model::{AnyModel, Inr, ModelConfig, ModelSpec, QuinrModel, SirenConfig, SirenModel};
pub use train::{encode, encode_siren, TrainOptions, TrainReport};

/// Any error the library can produce.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Sim(#[from] qsim::SimError),
    #[error(transparent)]
    Autodiff(#[from] autodiff::AutodiffError),
    #[error(transparent)]
    Config(#[from] model::ConfigError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
    #[error(transparent)]
    Codec(#[from] codec::CodecError),
    #[error(transparent)]
    Data(#[from] io::DataError),
    #[error(transparent)]
    Sweep(#[from] sweep::SweepError),
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/architecture.md")]
    mod architecture {}
    #[doc = include_str!("../../../book/src/differentiation.md")]
    mod differentiation {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../docs/format.md")]
    mod format {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../docs/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
