//! Diffusion machinery: forward perturbation, reverse sampling, training
//! objectives and the three-stage training pipeline.

pub mod loss;
pub mod process;
pub mod sampler;
pub mod train;

pub use loss::{epsilon_loss, finetune_loss, qdm_loss};
pub use process::{forward_perturb, remove_noise, reverse_step};
pub use sampler::{sample_ensemble, sample_trajectories, NoisePredictor, SamplerConfig};
pub use train::{finetune, pretrain, run_algorithm1, Algorithm1Output, CurvePoint, TrainingConfig};
