//! Transducer model with language-constrained prediction inputs, the exact
//! alignment-lattice loss, and a brute-force enumeration reference.

pub mod checkpoint;
mod loss;
mod model;
mod oracle;

pub use checkpoint::{Checkpoint, TrainingSnapshot};
pub use loss::{rnnt_lattice_loss, rnnt_loss, AlignmentLattice, LatticeLogProbs, RnntLoss};
pub use model::{language_vector, model_forward, ForwardResult, ModelConfig, TransducerModel, TransducerParams};
pub use oracle::{
    alignment_log_prob, enumerate_alignments, enumerate_alignments_oracle, ORACLE_MAX_FRAMES, ORACLE_MAX_LABELS,
};
