//! Trial-image scrambling and fingerprint tracing for baseline JPEG.
//!
//! A producer scrambles a JPEG's quantized coefficients into a degraded
//! trial image and issues per-user decode keys. Decoding with a user key
//! restores the image but plants a small, user-specific offset at the last
//! nonzero coefficient of every scrambled block. A registry of reference
//! digests then traces any leaked copy back to the key it was decoded
//! with.
//!
//! - [`codec`]: baseline JPEG parsing, serialization, pixel codec, PPM io.
//! - [`dcfe`]: the differential scramble and fingerprinting decode.
//! - [`keys`]: key generation, user-key issuance, key files.
//! - [`trace`]: content digests, the user registry, leak tracing.
//! - [`metrics`]: MSE and PSNR measurement.

pub mod codec;
pub mod dcfe;
pub mod error;
pub mod keys;
pub mod metrics;
pub mod trace;

pub use error::{Error, Result};
