//! Link-level simulation toolkit for time-varying Rayleigh fading channels
//! with a recurrent neural channel predictor.
//!
//! The crate covers the full chain:
//!
//! - [`fading`] — correlated flat/multipath fading generation (Jakes spectrum,
//!   Smith's frequency-domain method) and channel application with AWGN,
//! - [`modem`] — Gray-coded M-QAM mapping and symbol-wise ML detection,
//! - [`estimation`] — pilot-based LMMSE channel estimation,
//! - [`nn`] — a small trainable LSTM + dense kernel with hand-derived
//!   backpropagation through time and Adam,
//! - [`predictor`] — the paired real/imaginary channel predictor, its
//!   dataset builder and training loop,
//! - [`adaptive`] — the (horizon, Doppler, SNR) → achieved-MSE lookup table
//!   and horizon selection,
//! - [`receiver`] — fixed, adaptive, and data-decision-driven receivers,
//! - [`baseline`] — AR(2) Yule-Walker prediction and LMMSE + linear
//!   interpolation benchmark receivers,
//! - [`cpsc`] — cyclic-prefix single-carrier block transmission over a
//!   doubly-selective channel with Viterbi sequence detection.
//!
//! All randomness flows through explicitly seeded ChaCha8 generators, so
//! every simulation is reproducible from its configuration.

pub mod adaptive;
pub mod baseline;
pub mod cpsc;
pub mod error;
pub mod estimation;
pub mod fading;
pub mod math;
pub mod modem;
pub mod nn;
pub mod predictor;
pub mod receiver;

pub use error::{Error, Result};
pub use fading::{ComplexSample, FadingProcess};
