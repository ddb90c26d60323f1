use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use prunecrit::applicability::magnitude_profile;
use prunecrit::criteria::{bottom_k_indices, Criterion, CriterionParams};
use prunecrit::cwda_tests::{run_cwda_suite, CwdaConfig, MagnitudeScope};
use prunecrit::global_sim::{
    log_space, mean_sp_off_diagonal, prune_mask_from_scores, simulate_two_layer_grid,
    start_layer_sweep_from_scores, valley_report, GridConfig, PruneMode, DEFAULT_BAND,
};
use prunecrit::report::{self, fmt_f64, to_json, to_json_line};
use prunecrit::similarity::{sp_report_from_table, ScoreTable};
use prunecrit::synth::{
    self, is_verifier, run_verifier, SynthConfig, SynthLayerSpec, VerifySettings, WeightDistribution,
    VERIFIER_NAMES,
};
use prunecrit::tensor_store::{load_dump, write_dump};
use serde::Serialize;

use crate::config::{CliError, CliResult, RunConfig};
use crate::{AnalyzeArgs, CwdaArgs, Format, ModeArg, Preset, ScopeArg, SimulateArgs, SynthArgs, VerifyArgs};

fn out_dir(dir: &str) -> CliResult<PathBuf> {
    let p = PathBuf::from(dir);
    fs::create_dir_all(&p).map_err(prunecrit::Error::from)?;
    Ok(p)
}

fn write(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    report::write_text(dir.join(name), text)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    write(dir, name, &to_json(value)?)
}

fn parse_criteria(names: &[String]) -> CliResult<Vec<Criterion>> {
    if names.is_empty() {
        return Err(CliError::Input("at least one criterion is required".into()));
    }
    let mut out = Vec::new();
    for n in names {
        let c: Criterion = n.trim().parse()?;
        if out.contains(&c) {
            return Err(CliError::Input(format!("criterion {c} listed twice")));
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Serialize)]
struct BottomK<'a> {
    criterion: Criterion,
    layer: &'a str,
    indices: Vec<usize>,
}

pub fn analyze(args: &AnalyzeArgs, seed: u64) -> CliResult<ExitCode> {
    let criteria = parse_criteria(&args.criteria)?;
    let params = CriterionParams {
        entropy_bins: args.entropy_bins,
        apoz_sigma: args.apoz_sigma,
        ..CriterionParams::default()
    };
    let dump = load_dump(&args.input)?;
    let table = ScoreTable::compute(&dump, &criteria, &params)?;
    let sp = sp_report_from_table(&table)?;
    let profile = magnitude_profile(&dump, Some(&table))?;
    let dir = out_dir(&args.out_dir)?;

    for (c, &criterion) in criteria.iter().enumerate() {
        let scores = &table.scores[c];
        if args.format.json() {
            write_json(&dir, &format!("scores_{criterion}.json"), scores)?;
        }
        if args.format.csv() {
            write(&dir, &format!("scores_{criterion}.csv"), &report::scores_csv(scores)?)?;
        }
    }
    if args.format.json() {
        write_json(&dir, "sp_report.json", &sp)?;
        write_json(&dir, "magnitude_profile.json", &profile)?;
    }
    if args.format.csv() {
        write(&dir, "sp_report.csv", &report::sp_csv(&sp)?)?;
        write(&dir, "magnitude_profile.csv", &report::magnitude_csv(&profile)?)?;
    }

    let mut listing = Vec::new();
    for (c, &criterion) in criteria.iter().enumerate() {
        for s in &table.scores[c] {
            let k = args.bottom_k.min(s.scores.len());
            listing.push(BottomK {
                criterion,
                layer: &s.layer,
                indices: bottom_k_indices(&s.scores, k)?,
            });
        }
    }
    write_json(&dir, "pruned_index.json", &listing)?;

    if criteria.len() >= 2 {
        let sweep = start_layer_sweep_from_scores(&table.scores[0], &table.scores[1])?;
        if args.format.json() {
            write_json(&dir, "start_layer_sweep.json", &sweep)?;
        }
        if args.format.csv() {
            write(&dir, "start_layer_sweep.csv", &report::sweep_csv(&sweep)?)?;
        }
    }

    if let Some(ratio) = args.prune_ratio {
        let mode = match args.prune_mode {
            ModeArg::Layerwise => PruneMode::Layerwise,
            ModeArg::Global => PruneMode::Global,
        };
        let mask = prune_mask_from_scores(&table.scores[0], mode, ratio, args.min_keep)?;
        write_json(&dir, "prune_mask.json", &mask)?;
        if args.format.csv() {
            write(&dir, "prune_mask.csv", &report::mask_csv(&mask)?)?;
        }
    }

    let mut cfg = RunConfig::new("analyze", seed, &args.out_dir, args.format);
    cfg.inputs.push(args.input.clone());
    cfg.criteria = criteria.iter().map(|c| c.to_string()).collect();
    cfg.params = params;
    write_json(&dir, "run_config.json", &cfg)?;

    println!("{} layers, {} criteria", dump.layers.len(), criteria.len());
    let names: Vec<&str> = criteria.iter().map(|c| c.as_str()).collect();
    println!("global Sp:");
    for (i, row) in sp.global.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:7.4}")).collect();
        println!("  {:>8} {}", names[i], cells.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn cwda_test(args: &CwdaArgs, seed: u64) -> CliResult<ExitCode> {
    let dump = load_dump(&args.input)?;
    let config = CwdaConfig {
        alpha: args.alpha,
        sigma0_sq: args.sigma0_sq,
        eps0_mean: args.eps0,
        eps0_magnitude: args.eps0_magnitude,
        ks_replicates: args.replicates,
        seed,
        magnitude_scope: match args.scope {
            ScopeArg::All => MagnitudeScope::All,
            ScopeArg::WithinBlock => MagnitudeScope::WithinBlock,
            ScopeArg::OffBlock => MagnitudeScope::OffBlock,
        },
    };
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(CliError::Input(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    let report = run_cwda_suite(&dump, &config);
    let dir = out_dir(&args.out_dir)?;
    if args.format.json() {
        write_json(&dir, "cwda_report.json", &report)?;
    }
    if args.format.csv() {
        write(&dir, "cwda_report.csv", &report::cwda_csv(&report)?)?;
    }
    let mut cfg = RunConfig::new("cwda-test", seed, &args.out_dir, args.format);
    cfg.inputs.push(args.input.clone());
    cfg.thresholds.alpha = args.alpha;
    cfg.thresholds.sigma0_sq = args.sigma0_sq;
    cfg.thresholds.eps0 = args.eps0;
    cfg.thresholds.eps0_magnitude = args.eps0_magnitude;
    write_json(&dir, "run_config.json", &cfg)?;

    let r = &report.rates;
    println!("passing rate over {} layers", r.evaluated);
    println!("  {:<10} {:>6.1}%", "Gaussian", 100.0 * r.gaussian);
    println!("  {:<10} {:>6.1}%", "Variance", 100.0 * r.variance);
    println!("  {:<10} {:>6.1}%", "Mean", 100.0 * r.mean);
    println!("  {:<10} {:>6.1}%", "Magnitude", 100.0 * r.magnitude);
    println!("  {:<10} {:>6.1}%", "All", 100.0 * r.all);
    for l in report.layers.iter().filter(|l| l.error.is_some()) {
        eprintln!("layer `{}` skipped: {}", l.layer, l.error.as_deref().unwrap_or(""));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: &VerifyArgs, seed: u64) -> CliResult<ExitCode> {
    if args.list {
        for n in VERIFIER_NAMES {
            println!("{n}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let names: Vec<String> = if args.names.is_empty() {
        VERIFIER_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.names.clone()
    };
    if let Some(bad) = names.iter().find(|n| !is_verifier(n)) {
        return Err(CliError::Input(format!(
            "unknown verifier `{bad}`; known: {}",
            VERIFIER_NAMES.join(", ")
        )));
    }
    if !(args.tolerance_scale >= 0.0 && args.tolerance_scale.is_finite()) {
        return Err(CliError::Input(format!(
            "tolerance scale must be a non-negative number, got {}",
            args.tolerance_scale
        )));
    }
    let settings = VerifySettings {
        seed,
        tolerance_scale: args.tolerance_scale,
        trials: args.trials,
    };
    let mut lines = String::new();
    let mut all_pass = true;
    for n in &names {
        let r = run_verifier(n, &settings)?;
        all_pass &= r.pass;
        let line = to_json_line(&r)?;
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
    }
    if let Some(path) = &args.out {
        report::write_text(path, &lines)?;
    }
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct SimulationSummary {
    mean_sp_off_diagonal: f64,
    valley: Option<prunecrit::global_sim::ValleyReport>,
}

pub fn simulate(args: &SimulateArgs, seed: u64) -> CliResult<ExitCode> {
    if !(args.sigma_min > 0.0 && args.sigma_max > args.sigma_min) {
        return Err(CliError::Input(format!(
            "need 0 < sigma-min < sigma-max, got {} and {}",
            args.sigma_min, args.sigma_max
        )));
    }
    if args.grid < 2 {
        return Err(CliError::Input("grid needs at least 2 points per axis".into()));
    }
    let axis = log_space(args.sigma_min, args.sigma_max, args.grid);
    let config = GridConfig {
        d_a: args.d_a,
        d_b: args.d_b,
        sigma_a_values: axis.clone(),
        sigma_b_values: axis,
        n_filters: args.n_filters,
        seed,
    };
    let grid = simulate_two_layer_grid(&config)?;
    let dir = out_dir(&args.out_dir)?;
    write(&dir, "sp_surface.csv", &report::surface_csv(&grid)?)?;
    write(&dir, "overlap_lines.csv", &report::overlap_lines_csv(&grid)?)?;
    let summary = SimulationSummary {
        mean_sp_off_diagonal: mean_sp_off_diagonal(&grid, DEFAULT_BAND),
        valley: if args.d_a != args.d_b { valley_report(&grid).ok() } else { None },
    };
    write_json(&dir, "simulation_summary.json", &summary)?;
    let mut cfg = RunConfig::new("simulate", seed, &args.out_dir, Format::Csv);
    cfg.criteria = vec!["L1".into(), "L2".into()];
    write_json(&dir, "run_config.json", &cfg)?;
    write_json(&dir, "grid_config.json", &config)?;

    println!("mean Sp off the diagonal: {}", fmt_f64(summary.mean_sp_off_diagonal));
    if let Some(v) = summary.valley {
        println!(
            "valley minimum {} at sigma_a={} sigma_b={}, {} cells from the nearer line",
            fmt_f64(v.min_sp),
            fmt_f64(v.min_sigma_a),
            fmt_f64(v.min_sigma_b),
            fmt_f64(v.min_cells_to_line)
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// Parses `NOUTxNINxK:SIGMA[:EPS]`.
pub fn parse_layer_spec(text: &str) -> CliResult<SynthLayerSpec> {
    let bad = || CliError::Input(format!("bad layer spec `{text}`, expected NOUTxNINxK:SIGMA[:EPS]"));
    let mut parts = text.trim().split(':');
    let dims: Vec<usize> = parts
        .next()
        .ok_or_else(bad)?
        .split('x')
        .map(|d| d.parse().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    let [n_out, n_in, k] = dims[..] else {
        return Err(bad());
    };
    let sigma: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let epsilon: f64 = match parts.next() {
        Some(e) => e.parse().map_err(|_| bad())?,
        None => 0.0,
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    let spec = SynthLayerSpec::new(n_out, n_in, k, sigma).with_epsilon(epsilon);
    spec.validate()?;
    Ok(spec)
}

pub fn synth(args: &SynthArgs, seed: u64) -> CliResult<ExitCode> {
    let mut cfg = match (&args.preset, &args.layers) {
        (Some(Preset::Cwda), _) => synth::preset_cwda(seed),
        (Some(Preset::Uniform), _) => synth::preset_uniform(seed),
        (Some(Preset::Vgg), _) => synth::preset_vgg(seed),
        (None, Some(spec)) => SynthConfig::new(
            spec.split(',').map(parse_layer_spec).collect::<CliResult<_>>()?,
            seed,
        ),
        (None, None) => return Err(CliError::Input("give --preset or --layers".into())),
    };
    cfg.jitter = args.jitter;
    if args.uniform {
        cfg.distribution = WeightDistribution::Uniform;
    }
    let dump = synth::synth_dump(&cfg)?;
    write_dump(&dump, &args.out)?;
    println!("wrote {} layers to {}", dump.layers.len(), args.out);
    Ok(ExitCode::SUCCESS)
}
