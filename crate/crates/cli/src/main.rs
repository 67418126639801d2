//! Operator CLI: simulate, train, finetune, forecast, evaluate.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diffplf::artifact::ModelArtifact;
use diffplf::config::RunConfig;
use diffplf::data::synthetic;
use diffplf::data::{
    aggregate_sessions, build_windows, split_windows, ForecastWindow, NormalizationStats,
};
use diffplf::denoiser::DenoiserParams;
use diffplf::diffusion::{finetune, pretrain, sample_ensemble, CurvePoint, SamplerConfig};
use diffplf::error::Error;
use diffplf::eval::{
    climatology, crossing_rate, crps, crps_from_quantiles, cumulative_energy, mae,
    render_band_svg, score_ensemble, BaselineConfig, EvalReport, QuantileBaseline, SampleRow,
    QUANTILE_LEVELS,
};

#[derive(Parser)]
#[command(name = "diffplf", about = "Probabilistic EV charging load forecasting with a conditional diffusion model", version)]
struct Cli {
    /// TOML run configuration; defaults apply for missing sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to runs/<timestamp>-seed<seed>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic charging corpus: sessions.csv, weather.csv and a manifest.
    Simulate,
    /// Stage 1: pretrain the denoiser; writes model.json and loss_curve.csv.
    Train,
    /// Stage 2: fine-tune a pretrained artifact; the input artifact is left untouched.
    Finetune(ArtifactArg),
    /// Stage 3: sample forecast ensembles for test windows.
    Forecast(ForecastArgs),
    /// Score artifacts and baselines on the test split.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct ArtifactArg {
    /// Pretrained model artifact (JSON).
    #[arg(long)]
    artifact: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// Observed prefix length eta: the first eta horizon steps are known.
    #[arg(long)]
    horizon_observed: Option<usize>,
    /// Ensemble size override.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Forecast at most this many test windows.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model artifact(s) to score; repeatable.
    #[arg(long)]
    artifact: Vec<PathBuf>,
    /// Train and score the pinball-loss quantile-regression baseline.
    #[arg(long)]
    quantile_baseline: bool,
    /// Score the per-step training-mean climatology reference.
    #[arg(long)]
    climatology: bool,
    /// Comma-separated EV-count scale sweep, e.g. 0.9,0.95,1.0,1.05,1.1.
    #[arg(long)]
    ev_count_scale: Option<String>,
    /// Also emit cumulative charging energy views of the forecasts.
    #[arg(long)]
    cumulative_energy: bool,
    /// Ensemble size override.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Evaluate at most this many test windows.
    #[arg(long)]
    limit: Option<usize>,
    /// Emit per-sample band plots.
    #[arg(long)]
    svg: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Serde(_) | Error::Model(_) => 1,
        Error::Data(_) | Error::Io(_) => 2,
        Error::Training(_) | Error::Sampling { .. } | Error::Domain(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let cfg = RunConfig::default();
            cfg.validate()?;
            cfg
        }
    };
    let out_dir = match &cli.out {
        Some(dir) => dir.clone(),
        None => {
            let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
            PathBuf::from("runs").join(format!("{stamp}-seed{}", config.training.seed))
        }
    };
    std::fs::create_dir_all(&out_dir)?;

    match cli.command {
        Command::Simulate => cmd_simulate(&config, &out_dir),
        Command::Train => cmd_train(&config, &out_dir),
        Command::Finetune(args) => cmd_finetune(&config, &out_dir, &args.artifact),
        Command::Forecast(args) => cmd_forecast(&config, &out_dir, &args),
        Command::Evaluate(args) => cmd_evaluate(&config, &out_dir, &args),
    }
}

fn write_curve_csv(path: &Path, config_json: &str, curve: &[CurvePoint]) -> Result<(), Error> {
    let mut out = format!("# config = {config_json}\nepoch,stage,loss\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", p.epoch, p.stage, p.loss));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<(), Error> {
    let data = synthetic::generate(&config.synthetic)?;
    let sessions_path = out_dir.join("sessions.csv");
    let weather_path = out_dir.join("weather.csv");
    diffplf::data::sessions::write_sessions_csv(&sessions_path, &data.sessions)?;
    diffplf::data::weather::write_weather_csv(&weather_path, &data.temperature, &data.humidity)?;
    let manifest = serde_json::json!({
        "seed": config.synthetic.seed,
        "days": config.synthetic.days,
        "start_date": config.synthetic.start_date,
        "resolution_min": config.synthetic.resolution_min,
        "session_rows": data.sessions.len(),
        "weather_rows": data.temperature.len(),
        "config": serde_json::from_str::<serde_json::Value>(&config.effective_json())?,
    });
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {} sessions and {} weather rows under {}", data.sessions.len(), data.temperature.len(), out_dir.display());
    Ok(())
}

struct Dataset {
    train: Vec<ForecastWindow>,
    test: Vec<ForecastWindow>,
}

fn load_dataset(config: &RunConfig) -> Result<Dataset, Error> {
    let sessions = diffplf::data::sessions::read_sessions_csv(&config.dataset.sessions_csv)?;
    let (temperature, humidity) =
        diffplf::data::weather::read_weather_csv(&config.dataset.weather_csv, config.window.resolution_min)?;
    let load = aggregate_sessions(&sessions, config.window.resolution_min)?;
    let (windows, dropped) = build_windows(&load, &temperature, &humidity, &sessions, &config.window)?;
    if !dropped.is_empty() {
        eprintln!("dropped {} incomplete window(s): {:?}", dropped.len(), dropped);
    }
    let (train, test) = split_windows(&windows, &config.window, config.dataset.split_date);
    if train.is_empty() {
        return Err(Error::Data("no training windows before the split date".into()));
    }
    Ok(Dataset { train, test })
}

fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<(), Error> {
    let dataset = load_dataset(config)?;
    let stats = NormalizationStats::fit(&dataset.train)?;
    let sched = diffplf::schedule::NoiseSchedule::from_config(&config.schedule)?;
    let mut model = DenoiserParams::new(config.model_config(), config.model.init_seed)?;
    let train_norm: Vec<_> = dataset.train.iter().map(|w| stats.normalize_window(w)).collect();
    let curve = pretrain(&mut model, &train_norm, &sched, &config.training)?;
    let artifact = ModelArtifact::new(config.clone(), stats, model);
    artifact.save(&out_dir.join("model.json"))?;
    write_curve_csv(&out_dir.join("loss_curve.csv"), &config.effective_json(), &curve)?;
    println!(
        "trained on {} windows for {} epochs; artifact at {}",
        dataset.train.len(),
        config.training.pretrain_epochs,
        out_dir.join("model.json").display()
    );
    Ok(())
}

fn cmd_finetune(config: &RunConfig, out_dir: &Path, artifact_path: &Path) -> Result<(), Error> {
    let artifact = ModelArtifact::load(artifact_path)?;
    let dataset = load_dataset(config)?;
    let sched = artifact.schedule()?;
    let stats = artifact.stats;
    let mut model = artifact.model;
    let train_norm: Vec<_> = dataset.train.iter().map(|w| stats.normalize_window(w)).collect();
    let curve = if config.training.finetune_epochs > 0 {
        finetune(&mut model, &train_norm, &sched, &config.training)?
    } else {
        Vec::new()
    };
    let refined = ModelArtifact::new(config.clone(), stats, model);
    refined.save(&out_dir.join("model_finetuned.json"))?;
    write_curve_csv(&out_dir.join("loss_curve_finetune.csv"), &config.effective_json(), &curve)?;
    println!(
        "fine-tuned {} epochs on {} windows; artifact at {}",
        config.training.finetune_epochs,
        dataset.train.len(),
        out_dir.join("model_finetuned.json").display()
    );
    Ok(())
}

fn sampler_for(config: &RunConfig, ensemble: Option<usize>, eta: Option<usize>) -> SamplerConfig {
    SamplerConfig {
        ensemble_size: ensemble.unwrap_or(config.sampler.ensemble_size),
        observed_prefix: eta.unwrap_or(config.sampler.observed_prefix),
        ..config.sampler
    }
}

fn cmd_forecast(config: &RunConfig, out_dir: &Path, args: &ForecastArgs) -> Result<(), Error> {
    let artifact = ModelArtifact::load(&args.artifact)?;
    let dataset = load_dataset(config)?;
    let sched = artifact.schedule()?;
    let sampler = sampler_for(config, args.ensemble, args.horizon_observed);
    sampler.validate(artifact.config.window.horizon_steps)?;
    let windows: Vec<&ForecastWindow> =
        dataset.test.iter().take(args.limit.unwrap_or(usize::MAX)).collect();
    if windows.is_empty() {
        return Err(Error::Data("no test windows after the split date".into()));
    }
    let config_json = config.effective_json();
    for w in windows {
        let cond = artifact.stats.normalize_condition(w);
        let per_window = SamplerConfig {
            seed: diffplf::diffusion::loss::mix_seed(sampler.seed, w.id),
            ..sampler
        };
        let observed = (per_window.observed_prefix > 0).then_some(w.target.as_slice());
        let ensemble =
            sample_ensemble(&artifact.model, &cond, &artifact.stats, &sched, &per_window, observed)?;
        let tag = w.anchor.format("%Y%m%d");
        let mut csv = format!("# config = {config_json}\n");
        for t in &ensemble.trajectories {
            csv.push_str(&t.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            csv.push('\n');
        }
        std::fs::write(out_dir.join(format!("ensemble_{tag}.csv")), csv)?;

        let mut qcsv = format!("# config = {config_json}\nlevel,{}\n", (0..ensemble.horizon()).map(|j| format!("t{j}")).collect::<Vec<_>>().join(","));
        for (li, level) in ensemble.quantile_levels.iter().enumerate() {
            qcsv.push_str(&format!(
                "{level},{}\n",
                ensemble.quantile_tracks[li].iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            ));
        }
        std::fs::write(out_dir.join(format!("quantiles_{tag}.csv")), qcsv)?;
        let svg = render_band_svg(&ensemble, &w.target, &format!("forecast {}", w.anchor.date()));
        std::fs::write(out_dir.join(format!("band_{tag}.svg")), svg)?;
    }
    println!("forecast ensembles written under {}", out_dir.display());
    Ok(())
}

fn cmd_evaluate(config: &RunConfig, out_dir: &Path, args: &EvaluateArgs) -> Result<(), Error> {
    if args.artifact.is_empty() && !args.quantile_baseline && !args.climatology {
        return Err(Error::Config(
            "evaluate needs at least one --artifact, --quantile-baseline or --climatology".into(),
        ));
    }
    let dataset = load_dataset(config)?;
    if dataset.test.is_empty() {
        return Err(Error::Data("no test windows after the split date".into()));
    }
    let limit = args.limit.unwrap_or(usize::MAX);
    let test: Vec<&ForecastWindow> = dataset.test.iter().take(limit).collect();
    let scales: Vec<f64> = match &args.ev_count_scale {
        Some(raw) => raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad --ev-count-scale entry '{s}'")))
            })
            .collect::<Result<_, _>>()?,
        None => vec![1.0],
    };
    let config_json = config.effective_json();

    for &scale in &scales {
        let mut rows: Vec<SampleRow> = Vec::new();
        let suffix = if (scale - 1.0).abs() < 1e-12 {
            String::new()
        } else {
            format!("_scale_{scale}")
        };

        for artifact_path in &args.artifact {
            let artifact = ModelArtifact::load(artifact_path)?;
            let sched = artifact.schedule()?;
            let sampler = sampler_for(config, args.ensemble, None);
            let name = artifact_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
            let model_name = if suffix.is_empty() { name } else { format!("{name}@e x{scale}") };
            for w in &test {
                let mut scaled = (*w).clone();
                scaled.ev_count *= scale;
                let cond = artifact.stats.normalize_condition(&scaled);
                let per_window = SamplerConfig {
                    seed: diffplf::diffusion::loss::mix_seed(sampler.seed, w.id),
                    ..sampler
                };
                let observed = (per_window.observed_prefix > 0).then_some(scaled.target.as_slice());
                let ensemble = sample_ensemble(
                    &artifact.model,
                    &cond,
                    &artifact.stats,
                    &sched,
                    &per_window,
                    observed,
                )?;
                let scores = score_ensemble(&ensemble, &w.target)?;
                rows.push(SampleRow {
                    model: model_name.clone(),
                    window_id: w.id,
                    anchor: w.anchor.format("%Y-%m-%dT%H:%M:%S").to_string(),
                    mae: scores.mae,
                    crps: scores.crps,
                    coverage_50: scores.coverage_50,
                    coverage_90: scores.coverage_90,
                    width_90: scores.width_90,
                    crossing_rate: None,
                });
                if args.svg {
                    let svg = render_band_svg(&ensemble, &w.target, &format!("{model_name} {}", w.anchor.date()));
                    std::fs::write(
                        out_dir.join(format!("band_{model_name}_{}{suffix}.svg", w.anchor.format("%Y%m%d"))),
                        svg,
                    )?;
                }
                if args.cumulative_energy {
                    let cum = cumulative_energy(&ensemble.median, config.window.resolution_min);
                    let truth_cum = cumulative_energy(&w.target, config.window.resolution_min);
                    let mut csv = format!("# config = {config_json}\nstep,median_kwh,truth_kwh\n");
                    for j in 0..cum.len() {
                        csv.push_str(&format!("{j},{},{}\n", cum[j], truth_cum[j]));
                    }
                    std::fs::write(
                        out_dir.join(format!(
                            "cumulative_{model_name}_{}{suffix}.csv",
                            w.anchor.format("%Y%m%d")
                        )),
                        csv,
                    )?;
                }
            }
        }

        if args.quantile_baseline {
            rows.extend(evaluate_quantile_baseline(config, &dataset, &test, scale)?);
        }
        if args.climatology {
            rows.extend(evaluate_climatology(&dataset, &test)?);
        }

        let report = EvalReport::from_rows(rows)?;
        std::fs::write(out_dir.join(format!("eval_report{suffix}.csv")), report.to_csv(&config_json))?;
        std::fs::write(out_dir.join(format!("summary{suffix}.txt")), report.to_text())?;
        print!("{}", report.to_text());
    }
    Ok(())
}

fn evaluate_quantile_baseline(
    config: &RunConfig,
    dataset: &Dataset,
    test: &[&ForecastWindow],
    scale: f64,
) -> Result<Vec<SampleRow>, Error> {
    let stats = NormalizationStats::fit(&dataset.train)?;
    let mut baseline = QuantileBaseline::new(BaselineConfig {
        horizon: config.window.horizon_steps,
        history_steps: config.window.history_steps,
        hidden_dim: config.model.hidden_dim,
        head_count: config.model.head_count,
        learning_rate: config.training.pretrain_lr,
        epochs: config.training.pretrain_epochs,
        batch_size: config.training.batch_size,
        seed: config.training.seed,
    })?;
    let train_norm: Vec<_> = dataset.train.iter().map(|w| stats.normalize_window(w)).collect();
    baseline.train(&train_norm)?;
    let name = if (scale - 1.0).abs() < 1e-12 {
        "quantile_regression".to_string()
    } else {
        format!("quantile_regression@e x{scale}")
    };
    let mut rows = Vec::new();
    for w in test {
        let mut scaled = (*w).clone();
        scaled.ev_count *= scale;
        let cond = stats.normalize_condition(&scaled);
        let tracks = baseline.predict_kw(&cond, &stats)?;
        let median_track = &tracks[2];
        let tau = w.target.len();
        let mut crps_sum = 0.0;
        let mut cov50 = 0usize;
        let mut cov90 = 0usize;
        let mut width90 = 0.0;
        for j in 0..tau {
            let preds: Vec<f64> = tracks.iter().map(|t| t[j]).collect();
            crps_sum += crps_from_quantiles(&QUANTILE_LEVELS, &preds, w.target[j])?;
            if w.target[j] >= tracks[1][j] && w.target[j] <= tracks[3][j] {
                cov50 += 1;
            }
            if w.target[j] >= tracks[0][j] && w.target[j] <= tracks[4][j] {
                cov90 += 1;
            }
            width90 += tracks[4][j] - tracks[0][j];
        }
        rows.push(SampleRow {
            model: name.clone(),
            window_id: w.id,
            anchor: w.anchor.format("%Y-%m-%dT%H:%M:%S").to_string(),
            mae: mae(median_track, &w.target)?,
            crps: crps_sum / tau as f64,
            coverage_50: cov50 as f64 / tau as f64,
            coverage_90: cov90 as f64 / tau as f64,
            width_90: width90 / tau as f64,
            crossing_rate: Some(crossing_rate(&tracks)),
        });
    }
    Ok(rows)
}

fn evaluate_climatology(dataset: &Dataset, test: &[&ForecastWindow]) -> Result<Vec<SampleRow>, Error> {
    let clim = climatology(&dataset.train)?;
    let mut rows = Vec::new();
    for w in test {
        let tau = w.target.len();
        let mut crps_sum = 0.0;
        for j in 0..tau {
            crps_sum += crps(&[clim[j]], w.target[j])?;
        }
        rows.push(SampleRow {
            model: "climatology".into(),
            window_id: w.id,
            anchor: w.anchor.format("%Y-%m-%dT%H:%M:%S").to_string(),
            mae: mae(&clim, &w.target)?,
            crps: crps_sum / tau as f64,
            coverage_50: 0.0,
            coverage_90: 0.0,
            width_90: 0.0,
            crossing_rate: None,
        });
    }
    Ok(rows)
}
