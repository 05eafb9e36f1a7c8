use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use mssd::data::{synth_seasonal, write_table, RunConfig, SeriesFrame};
use mssd::decompose::{decompose, make_period_spec};
use mssd::evalbench::{
    ablation_run, efficiency_bench, evaluate_multivariate, fit_prepared, format_bench, format_reports,
    input_length_sweep, robustness_sweep, run_univariate, write_bench_csv, write_reports_csv, AblationSwitches,
    BenchOptions, EvalReport, LineChart, PreparedSeries, UnivariateRun,
};
use mssd::models::{load_checkpoint, save_checkpoint, GlobalLinear, MssdConfig, MssdModel, NamedModel, SeasonalNaive};
use rayon::prelude::*;

use crate::setup::{build_config, load_frame, out_dir, pick_variable, write_text};
use crate::{Cli, Command};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    CausalConv,
    GlobalBlock,
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = build_config(&cli.common)?;
    let jobs = cli.common.jobs;
    let variable = cli.common.variable.as_deref();
    match &cli.command {
        Command::Decompose => decompose_cmd(&config),
        Command::Train { checkpoint } => train(&config, checkpoint.as_deref(), jobs),
        Command::Predict { checkpoint, output } => predict(&config, checkpoint, output.as_deref()),
        Command::Evaluate { horizons, baselines } => {
            let horizons = horizons.clone().unwrap_or_else(|| config.eval.horizons.clone());
            evaluate_cmd(&config, &horizons, *baselines, jobs)
        }
        Command::Robustness { ratios, sigma_scale } => {
            let ratios = ratios.clone().unwrap_or_else(|| config.eval.noise_ratios.clone());
            robustness(
                &config,
                variable,
                &ratios,
                sigma_scale.unwrap_or(config.eval.sigma_scale),
            )
        }
        Command::Bench {
            lengths,
            channels,
            min_time_ms,
        } => {
            let lengths = lengths.clone().unwrap_or_else(|| config.eval.bench_lengths.clone());
            let opts = BenchOptions {
                channels: *channels,
                seed: config.train.seed,
                min_time: std::time::Duration::from_millis(*min_time_ms),
                ..BenchOptions::default()
            };
            bench(&config, &lengths, &opts)
        }
        Command::SweepInput { input_lens } => {
            let lens = input_lens.clone().unwrap_or_else(|| config.eval.input_lens.clone());
            sweep_input(&config, variable, &lens)
        }
        Command::Ablate { horizons, without } => {
            let horizons = horizons.clone().unwrap_or_else(|| config.eval.horizons.clone());
            ablate(&config, variable, &horizons, *without)
        }
        Command::Synth { days, output } => synth(&config, *days, output.as_deref()),
    }
}

fn mssd_config(config: &RunConfig, frame: &SeriesFrame) -> MssdConfig {
    config.mssd_config(frame.samples_per_hour)
}

fn chart(path: &Path, chart: LineChart) -> Result<()> {
    write_text(path, &chart.to_svg())
}

fn decompose_cmd(config: &RunConfig) -> Result<()> {
    let frame = load_frame(config)?;
    let dir = out_dir(config)?;
    let spec = make_period_spec(frame.samples_per_hour)?;
    let offset = frame.clock().base_offset;
    let parts = frame
        .columns
        .iter()
        .map(|c| decompose(c, &spec, offset))
        .collect::<mssd::Result<Vec<_>>>()?;
    for (name, pick) in [("ascending", 0), ("peak", 1), ("descending", 2)] {
        let columns = parts
            .iter()
            .map(|d| [&d.ascending, &d.peak, &d.descending][pick].clone())
            .collect();
        let component = SeriesFrame {
            columns,
            ..frame.clone()
        };
        component.write_csv(&dir.join(format!("{name}.csv")))?;
    }
    let shown = frame.len().min(7 * spec.period());
    let line = |v: &[f64]| v[..shown].iter().enumerate().map(|(k, &y)| (k as f64, y)).collect();
    let d = &parts[0];
    chart(
        &dir.join("decomposition.svg"),
        LineChart::new(
            &format!("{}: daily phases", frame.variable_names[0]),
            "position",
            "value",
        )
        .with_series("input", line(&frame.columns[0]))
        .with_series("ascending", line(&d.ascending))
        .with_series("peak", line(&d.peak))
        .with_series("descending", line(&d.descending)),
    )?;
    println!(
        "wrote ascending.csv, peak.csv, descending.csv and decomposition.svg to {} ({} rows, {} variables)",
        dir.display(),
        frame.len(),
        frame.dim()
    );
    Ok(())
}

/// Trains one model per variable on its own prepared series, using up to
/// `jobs` threads.
fn train_all(
    frame: &SeriesFrame,
    series: &[PreparedSeries],
    config: &RunConfig,
    model: &MssdConfig,
    jobs: usize,
) -> Result<Vec<UnivariateRun>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| {
        series
            .par_iter()
            .zip(&frame.variable_names)
            .map(|(s, name)| {
                log::info!("training {name} (I={}, O={})", model.input_len, model.horizon);
                run_univariate(s, model, &config.train, &frame.name, name).with_context(|| format!("training {name}"))
            })
            .collect()
    })
}

fn prepare(frame: &SeriesFrame, config: &RunConfig, min_span: usize) -> Result<Vec<PreparedSeries>> {
    let clock = frame.clock();
    frame
        .columns
        .iter()
        .map(|c| Ok(PreparedSeries::new(c, clock, &config.train.split, min_span)?))
        .collect()
}

/// Dataset name for single-variable reports.
fn dataset_label(frame: &SeriesFrame, variable: &str) -> String {
    if frame.dim() == 1 {
        frame.name.clone()
    } else {
        format!("{}:{variable}", frame.name)
    }
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn train(config: &RunConfig, checkpoint: Option<&Path>, jobs: usize) -> Result<()> {
    let frame = load_frame(config)?;
    let dir = out_dir(config)?;
    let model = mssd_config(config, &frame);
    model.validate()?;
    let series = prepare(&frame, config, model.input_len + model.horizon)?;
    let runs = train_all(&frame, &series, config, &model, jobs)?;
    for (run, name) in runs.iter().zip(&frame.variable_names) {
        let path = dir.join(format!("train_log_{}.ndjson", file_safe(name)));
        let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        run.log.write_ndjson(std::io::BufWriter::new(file))?;
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    write_reports_csv(&dir.join("train_report.csv"), &reports)?;
    let path = checkpoint.map_or_else(|| dir.join("model.ckpt"), Path::to_path_buf);
    let named: Vec<NamedModel> = runs
        .into_iter()
        .zip(&frame.variable_names)
        .map(|(r, n)| NamedModel {
            variable: n.clone(),
            model: r.model,
        })
        .collect();
    save_checkpoint(&path, &named)?;
    print!("{}", format_reports(&reports));
    println!("saved {} model(s) to {}", named.len(), path.display());
    Ok(())
}

fn predict(config: &RunConfig, checkpoint: &Path, output: Option<&Path>) -> Result<()> {
    let frame = load_frame(config)?;
    let models = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let clock = frame.clock();
    let mut rows = Vec::new();
    for named in &models {
        let c = &named.model.config;
        if c.samples_per_hour != frame.samples_per_hour {
            bail!(
                "model for {} expects {} samples per hour, data has {}",
                named.variable,
                c.samples_per_hour,
                frame.samples_per_hour
            );
        }
        let values = frame
            .column(&named.variable)
            .ok_or_else(|| anyhow!("data has no variable {:?} required by the checkpoint", named.variable))?;
        if values.len() < c.input_len {
            bail!(
                "{} has {} rows, the model needs {}",
                named.variable,
                values.len(),
                c.input_len
            );
        }
        let start = values.len() - c.input_len;
        let forecast = named.model.predict(&values[start..], clock.offset_at(start))?;
        rows.extend(
            forecast
                .iter()
                .enumerate()
                .map(|(k, v)| vec![k.to_string(), named.variable.clone(), v.to_string()]),
        );
    }
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => out_dir(config)?.join("forecast.csv"),
    };
    write_table(&path, &["position", "variable", "value"], rows.iter().cloned())?;
    println!("wrote {} forecast rows to {}", rows.len(), path.display());
    Ok(())
}

fn evaluate_cmd(config: &RunConfig, horizons: &[usize], baselines: bool, jobs: usize) -> Result<()> {
    if horizons.is_empty() {
        bail!("no horizons given");
    }
    let frame = load_frame(config)?;
    let dir = out_dir(config)?;
    let longest = horizons.iter().copied().max().unwrap_or(0);
    let series = prepare(&frame, config, config.model.input_len + longest)?;
    let mut reports = Vec::new();
    for &h in horizons {
        let model = MssdConfig {
            horizon: h,
            ..mssd_config(config, &frame)
        };
        model.validate()?;
        let runs = train_all(&frame, &series, config, &model, jobs)?;
        let models: Vec<MssdModel> = runs.into_iter().map(|r| r.model).collect();
        reports.push(evaluate_multivariate(&models, &series, &frame.name, "mssd")?);
        if baselines {
            let naive = series
                .iter()
                .map(|_| SeasonalNaive::new(frame.period(), model.input_len, h))
                .collect::<mssd::Result<Vec<_>>>()?;
            reports.push(evaluate_multivariate(&naive, &series, &frame.name, "seasonal-naive")?);
            let linear = series
                .iter()
                .map(|s| {
                    let mut m = GlobalLinear::new(model.input_len, h, model.seed);
                    fit_prepared(&mut m, s, &config.train)?;
                    Ok(m)
                })
                .collect::<mssd::Result<Vec<_>>>()?;
            reports.push(evaluate_multivariate(&linear, &series, &frame.name, "global-linear")?);
        }
    }
    write_reports_csv(&dir.join("evaluate.csv"), &reports)?;
    print!("{}", format_reports(&reports));
    Ok(())
}

fn robustness(config: &RunConfig, variable: Option<&str>, ratios: &[f64], sigma_scale: f64) -> Result<()> {
    let frame = load_frame(config)?;
    let dir = out_dir(config)?;
    let (name, values) = pick_variable(&frame, variable)?;
    let dataset = dataset_label(&frame, name);
    let model = mssd_config(config, &frame);
    let points = robustness_sweep(
        || MssdModel::new(model.clone()),
        values,
        frame.clock(),
        ratios,
        sigma_scale,
        &config.train,
        &dataset,
    )?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.ratio.to_string(),
                p.perturbed.to_string(),
                p.report.mse.to_string(),
                p.report.mae.to_string(),
            ]
        })
        .collect();
    write_table(
        &dir.join("robustness.csv"),
        &["ratio", "perturbed", "mse", "mae"],
        rows.iter().cloned(),
    )?;
    chart(
        &dir.join("robustness.svg"),
        LineChart::new(&format!("{name}: training noise"), "noise ratio", "test MAE")
            .with_series("mae", points.iter().map(|p| (p.ratio, p.report.mae)).collect()),
    )?;
    print!(
        "{}",
        mssd::evalbench::aligned_table(&["ratio", "perturbed", "mse", "mae"], &rows)
    );
    Ok(())
}

fn bench(config: &RunConfig, lengths: &[usize], opts: &BenchOptions) -> Result<()> {
    let dir = out_dir(config)?;
    let switches = AblationSwitches {
        causal_conv: config.model.sdnet.causal_tcn,
        global_block: config.model.sdnet.global_block,
        attention_reference: true,
    };
    let table = efficiency_bench(lengths, &switches, opts)?;
    write_bench_csv(&dir.join("bench.csv"), &table)?;
    let mut plot = LineChart::new("forward and backward time", "input length", "milliseconds");
    plot.log_x = true;
    plot.log_y = true;
    for (module, _) in &table.slopes {
        let pts = table
            .rows
            .iter()
            .filter(|r| &r.module == module)
            .map(|r| (r.length as f64, r.wall_ms))
            .collect();
        plot = plot.with_series(module, pts);
    }
    chart(&dir.join("bench.svg"), plot)?;
    print!("{}", format_bench(&table));
    Ok(())
}

fn sweep_input(config: &RunConfig, variable: Option<&str>, lens: &[usize]) -> Result<()> {
    let frame = load_frame(config)?;
    let dir = out_dir(config)?;
    let (name, values) = pick_variable(&frame, variable)?;
    let dataset = dataset_label(&frame, name);
    let reports = input_length_sweep(
        values,
        frame.clock(),
        &mssd_config(config, &frame),
        lens,
        &config.train,
        &dataset,
    )?;
    write_reports_csv(&dir.join("sweep_input.csv"), &reports)?;
    chart(
        &dir.join("sweep_input.svg"),
        LineChart::new(&format!("{name}: input length"), "input length", "test MSE")
            .with_series("mse", reports.iter().map(|r| (r.input_len as f64, r.mse)).collect()),
    )?;
    print!("{}", format_reports(&reports));
    Ok(())
}

fn ablate(config: &RunConfig, variable: Option<&str>, horizons: &[usize], without: Ablation) -> Result<()> {
    let frame = load_frame(config)?;
    let dir = out_dir(config)?;
    let (name, values) = pick_variable(&frame, variable)?;
    let dataset = dataset_label(&frame, name);
    let switches = AblationSwitches {
        causal_conv: without != Ablation::CausalConv,
        global_block: without != Ablation::GlobalBlock,
        attention_reference: false,
    };
    let pairs = ablation_run(
        values,
        frame.clock(),
        &mssd_config(config, &frame),
        &switches,
        horizons,
        &config.train,
        &dataset,
    )?;
    let header = [
        "horizon",
        "default_mse",
        "default_mae",
        "default_params",
        "variant_mse",
        "variant_mae",
        "variant_params",
    ];
    let rows: Vec<Vec<String>> = pairs
        .iter()
        .map(|p| {
            vec![
                p.horizon.to_string(),
                p.default.mse.to_string(),
                p.default.mae.to_string(),
                p.default_params.to_string(),
                p.variant.mse.to_string(),
                p.variant.mae.to_string(),
                p.variant_params.to_string(),
            ]
        })
        .collect();
    write_table(&dir.join("ablation.csv"), &header, rows.iter().cloned())?;
    let line = |f: fn(&mssd::evalbench::AblationPair) -> f64| pairs.iter().map(|p| (p.horizon as f64, f(p))).collect();
    chart(
        &dir.join("ablation.svg"),
        LineChart::new(&format!("{name}: {}", switches.label()), "horizon", "test MSE")
            .with_series("default", line(|p| p.default.mse))
            .with_series("variant", line(|p| p.variant.mse)),
    )?;
    print!("{}", mssd::evalbench::aligned_table(&header, &rows));
    Ok(())
}

fn synth(config: &RunConfig, days: usize, output: Option<&Path>) -> Result<()> {
    let sph = config.data.samples_per_hour.unwrap_or(1);
    let frame = synth_seasonal(days, sph, &config.synth, config.train.seed)?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => out_dir(config)?.join("synth.csv"),
    };
    frame.write_csv(&path)?;
    println!("wrote {} rows to {}", frame.len(), path.display());
    Ok(())
}
