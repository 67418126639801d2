//! End-to-end pipeline test: synthetic corpus through all three stages.

use diffplf::data::synthetic::{self, SyntheticConfig};
use diffplf::data::{
    aggregate_sessions, build_windows, split_windows, NormalizationStats, WindowConfig,
};
use diffplf::denoiser::{Conditioning, DenoiserParams, ModelConfig};
use diffplf::diffusion::{run_algorithm1, SamplerConfig, TrainingConfig};
use diffplf::schedule::NoiseSchedule;

fn tiny_setup() -> (
    Vec<diffplf::data::ForecastWindow>,
    Vec<diffplf::data::ForecastWindow>,
    NormalizationStats,
    NoiseSchedule,
    ModelConfig,
) {
    let syn = SyntheticConfig {
        days: 45,
        resolution_min: 60,
        seed: 31,
        ev_count_mean: 60.0,
        ..SyntheticConfig::default()
    };
    let data = synthetic::generate(&syn).unwrap();
    let window_cfg = WindowConfig { history_steps: 48, horizon_steps: 24, resolution_min: 60 };
    let load = aggregate_sessions(&data.sessions, 60).unwrap();
    let (windows, _) =
        build_windows(&load, &data.temperature, &data.humidity, &data.sessions, &window_cfg).unwrap();
    let split = syn.start_date + chrono::Duration::days(36);
    let (train, test) = split_windows(&windows, &window_cfg, split);
    let stats = NormalizationStats::fit(&train).unwrap();
    let sched = NoiseSchedule::quadratic(10, 1e-4, 0.4).unwrap();
    let model_cfg = ModelConfig {
        horizon: 24,
        history_steps: 48,
        hidden_dim: 8,
        head_count: 2,
        use_covariates: true,
        conditioning: Conditioning::CrossAttention,
    };
    (train, test, stats, sched, model_cfg)
}

#[test]
fn run_algorithm1_produces_curves_and_test_ensembles() {
    let (train, test, stats, sched, model_cfg) = tiny_setup();
    let train_cfg = TrainingConfig {
        pretrain_epochs: 3,
        finetune_epochs: 2,
        batch_size: 8,
        finetune_ensemble_size: 4,
        refresh_median_each_epoch: false,
        seed: 9,
        ..TrainingConfig::default()
    };
    let sampler_cfg = SamplerConfig { ensemble_size: 5, seed: 2, observed_prefix: 0, parallel: true };
    let model = DenoiserParams::new(model_cfg, 4).unwrap();
    let out = run_algorithm1(model, &train, &test, &stats, &sched, &train_cfg, &sampler_cfg).unwrap();

    assert_eq!(out.curve.iter().filter(|p| p.stage == 1).count(), 3);
    assert_eq!(out.curve.iter().filter(|p| p.stage == 2).count(), 2);
    assert!(out.curve.iter().all(|p| p.loss.is_finite()));
    assert_eq!(out.ensembles.len(), test.len());
    for ens in &out.ensembles {
        assert_eq!(ens.size(), 5);
        assert_eq!(ens.horizon(), 24);
        // Physical units with the reporting floor applied.
        assert!(ens.trajectories.iter().all(|t| t.iter().all(|&v| v >= 0.0 && v.is_finite())));
        // Monotone quantile tracks at every step.
        for j in 0..24 {
            for li in 1..ens.quantile_levels.len() {
                assert!(ens.quantile_tracks[li][j] >= ens.quantile_tracks[li - 1][j]);
            }
        }
    }
}

#[test]
fn skipping_stage_two_leaves_stage_one_parameters() {
    let (train, test, stats, sched, model_cfg) = tiny_setup();
    let sampler_cfg = SamplerConfig { ensemble_size: 2, seed: 2, observed_prefix: 0, parallel: false };
    let base_cfg = TrainingConfig {
        pretrain_epochs: 2,
        finetune_epochs: 0,
        batch_size: 8,
        seed: 9,
        ..TrainingConfig::default()
    };
    let model_a = DenoiserParams::new(model_cfg, 4).unwrap();
    let out_a = run_algorithm1(model_a, &train, &test, &stats, &sched, &base_cfg, &sampler_cfg).unwrap();

    // Stage 1 alone, run separately with the same seeds.
    let mut model_b = DenoiserParams::new(model_cfg, 4).unwrap();
    let train_norm: Vec<_> = train.iter().map(|w| stats.normalize_window(w)).collect();
    diffplf::diffusion::pretrain(&mut model_b, &train_norm, &sched, &base_cfg).unwrap();

    let a = serde_json::to_string(&out_a.model).unwrap();
    let b = serde_json::to_string(&model_b).unwrap();
    assert_eq!(a, b, "zero fine-tuning epochs must reproduce the stage-1 parameters");
}
