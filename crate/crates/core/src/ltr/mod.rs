//! The trainable ranker and the lambdaRank machinery it shares with the
//! sequence encoders.

mod lambda;
mod model;
mod train;

pub use lambda::{
    ideal_dcg, lambda_gradients, lambda_loss, lambda_loss_and_gradients, ndcg_at, score_order,
    LambdaSet, SIGMA,
};
pub use model::{FeatureLayout, RankerModel, Scorer, TrainingSummary, DEFAULT_HIDDEN};
pub use train::{
    group_loss_and_grad, is_validation_session, mean_group_ndcg, train_ranker, RankGroup,
    RankerHyperParams,
};
