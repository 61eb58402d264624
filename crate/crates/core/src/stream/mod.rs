//! Chunked incremental inference, exactly equal to the offline forward pass,
//! plus multi-stream batching and real-time-factor measurement.

mod batch;
mod bench;
mod session;

pub use batch::Batcher;
pub use bench::{bench_call, bench_offline, bench_rtf, Latency, OfflineReport, RtfReport, FRAMES_PER_SECOND};
pub use session::{concat_predictions, stream_call, StreamSession};
