//! Local reward functions: one shared backbone, one linear head per
//! configurable component, trained with a pairwise log-sigmoid ranking loss.

pub mod data;
pub mod loss;
pub mod net;
pub mod persist;
pub mod train;

pub use data::{PreferenceDataset, PreferenceRecord};
pub use loss::{pairwise_accuracy, ranking_loss, ranking_loss_grad, score_difference, sigmoid};
pub use net::{NetArchitecture, RewardNet};
pub use persist::{load_net, net_from_json, net_to_json, save_net};
pub use train::{
    adapt_online, train_offline, AdaptOptions, AdaptReport, ReplayBuffer, TrainOptions,
    TrainReport,
};
