//! Plug-and-play vibration sensing for in-home health monitoring.
//!
//! The crate covers the whole path from a simulated geophone sensor to an
//! actionable deployment plan:
//!
//! - [`wireproto`]: self-correcting UDP datagram framing (CRC + XOR parity).
//! - [`netsim`]: seeded loss/corruption/duplication/reorder channel.
//! - [`devicesim`]: activity-driven vibration synthesis and device clocks.
//! - [`edgehub`]: ingestion, storage, rate statistics, health and HTTP API.
//! - [`dsp`]: spectrograms, event detection, SNR and spectral features.
//! - [`recognize`]: dilated causal TCN with multitask heads, and t-SNE.
//! - [`recommend`]: environment graphs, placement scoring and the dialog.
//! - [`scenario`]: declarative end-to-end runs and CSV analysis outputs.
//!
//! Runnable walkthroughs live in `examples/`.

pub mod devicesim;
pub mod dsp;
pub mod edgehub;
pub mod netsim;
pub mod recognize;
pub mod recommend;
pub mod rng;
pub mod scenario;
pub mod wireproto;
