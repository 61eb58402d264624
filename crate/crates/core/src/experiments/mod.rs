//! End-to-end experiment drivers shared by the command-line tool and the
//! acceptance tests.

mod gradcheck;
mod protocol;
mod runs;

pub use gradcheck::model_gradient_check;
pub use protocol::{
    ablation_grid, baseline_scores, mean_under, modality_grid, prepare, seeded_runs, AblationGrid, ModalityGrid,
    Prepared, RunScores, Setup, ABLATION_P_A, ABLATION_P_S, VAL_SEED_SALT,
};
pub use runs::{
    examples, mean_scores, modality_runs, permute_test, split, train_and_test, train_and_test_val, RunResult, Scores,
    Split, TestPermutation, TEST_FOLD,
};
