//! Soft assignments, training losses and the two-stage schedule.

mod assign;
mod laplacian;
mod losses;
mod trainer;

pub use assign::{row_sum_error, student_t_assign, student_t_backward, target_distribution, TARGET_EPS};
pub use laplacian::{sample_laplacian, SampleLaplacian};
pub use losses::{contrastive_loss, geom_loss, smoothness, spec_loss, GeomParts, GeomView, LOG_FLOOR, NORM_EPS};
pub use trainer::{
    align_columns, loss_trace_csv, objective, train, Epochs, Hyper, InvariantRecord, LossRecord, LossValues,
    ObjectiveContext, ObjectiveGrads, Stage, TermWeights, TrainConfig, TrainResult,
};
