//! Adam optimization, learning-rate scheduling, the training loop, and
//! checkpoint persistence.

pub mod adam;
pub mod checkpoint;
pub mod schedule;
pub mod trainer;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use schedule::{lr_at, TrainConfig};
pub use trainer::{append_trace, train, TraceEntry, TrainOptions, TrainOutcome, TrainSample};
