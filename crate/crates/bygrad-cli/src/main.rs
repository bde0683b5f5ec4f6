//! Command-line driver: run experiment sweeps, evaluate the closed-form
//! theory, run the verification suite, and plot results.
//!
//! Output files land in `--out`, the `BYGRAD_OUT` environment variable, or
//! `./out`, in that order. Run records are named by config hash, so
//! re-running an identical config overwrites its own outputs.

mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bygrad::analysis::{bound_report, d_curve, delta_curve};
use bygrad::config::{TheoryConfig, TrainConfig, VerifyConfig};
use bygrad::sim::sweep;
use bygrad::verify::{all_passed, run_suite};

#[derive(Parser)]
#[command(name = "bygrad", version, about = "Byzantine-robust coded training simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and write run-record CSVs plus a manifest.
    Train(TrainArgs),
    /// Evaluate the closed-form bounds and emit curve CSVs.
    Theory(TheoryArgs),
    /// Run the identity/property verification suite.
    Verify(VerifyArgs),
    /// Render SVG plots from a manifest or a theory-curve CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Sweep config file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: fig4, fig5a, fig5b, fig7.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the sweep.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: fig2, fig3.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional options file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Smaller Monte Carlo budgets for a fast pass.
    #[arg(long)]
    quick: bool,
    /// Negative control: corrupt the weight-deviation closed form so the
    /// suite must fail.
    #[arg(long)]
    mutate_weight_formula: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Manifest CSV from `train`, or a `param,value,error_term` curve CSV
    /// from `theory`.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log-scale the y axis.
    #[arg(long)]
    log_scale: bool,
}

fn train_preset(name: &str) -> Option<&'static str> {
    match name {
        "fig4" => Some(include_str!("../../../presets/fig4.toml")),
        "fig5a" => Some(include_str!("../../../presets/fig5a.toml")),
        "fig5b" => Some(include_str!("../../../presets/fig5b.toml")),
        "fig7" => Some(include_str!("../../../presets/fig7.toml")),
        _ => None,
    }
}

fn theory_preset(name: &str) -> Option<&'static str> {
    match name {
        "fig2" => Some(include_str!("../../../presets/fig2.toml")),
        "fig3" => Some(include_str!("../../../presets/fig3.toml")),
        _ => None,
    }
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("BYGRAD_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_text(config: &Option<PathBuf>, preset: &Option<String>, kind: &str) -> Result<(String, String)> {
    match (config, preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| kind.to_string());
            Ok((text, stem))
        }
        (None, Some(name)) => {
            let text = match kind {
                "train" => train_preset(name),
                _ => theory_preset(name),
            }
            .ok_or_else(|| anyhow!("unknown {kind} preset {name:?}"))?;
            Ok((text.to_string(), name.clone()))
        }
        _ => bail!("provide exactly one of --config or --preset"),
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn cmd_train(args: &TrainArgs) -> Result<ExitCode> {
    let (text, _stem) = load_text(&args.config, &args.preset, "train")?;
    let mut cfg = TrainConfig::parse(&text).map_err(|e| anyhow!("{e}"))?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    let entries = cfg.expand().map_err(|e| anyhow!("{e}"))?;
    if entries.is_empty() {
        println!("no runs configured; nothing to do");
        return Ok(ExitCode::SUCCESS);
    }
    let dir = out_dir(&args.out);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let configs: Vec<_> = entries.iter().map(|e| e.config.clone()).collect();
    let results = sweep(&configs, args.jobs);

    let mut manifest = String::from(
        "file,label,method,n,h,d,q,iterations,gamma,sigma_h,aggregator,compressor,attack,schedule,seed,final_loss,diverged\n",
    );
    let mut by_label: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut failures = 0usize;
    for (entry, (config, result)) in entries.iter().zip(results) {
        match result {
            Ok(record) => {
                let file = format!("{}.csv", record.config_hash);
                record.write_csv(&dir.join(&file))?;
                manifest.push_str(&format!(
                    "{file},{label},{method},{n},{h},{d},{q},{t},{gamma:?},{sh:?},{agg},{comp},{att},{sch},{seed},{fl:?},{div}\n",
                    label = entry.label,
                    method = config.method.name(),
                    n = config.n,
                    h = config.h,
                    d = config.effective_load(),
                    q = config.q,
                    t = config.iterations,
                    gamma = config.gamma,
                    sh = config.sigma_h,
                    agg = config.aggregator,
                    comp = config.compressor,
                    att = config.attack,
                    sch = config.schedule,
                    seed = config.seed,
                    fl = record.final_loss(),
                    div = record.diverged,
                ));
                by_label.entry(entry.label.clone()).or_default().push(record.final_loss());
            }
            Err(e) => {
                failures += 1;
                eprintln!("run {} (seed {}) failed: {e}", entry.label, config.seed);
            }
        }
    }
    std::fs::write(dir.join("manifest.csv"), &manifest)?;

    println!("{:<24} {:>6} {:>14}", "label", "seeds", "median loss");
    for (label, finals) in &by_label {
        println!("{label:<24} {:>6} {:>14.6e}", finals.len(), median(finals));
    }
    println!("wrote {} run records and manifest.csv to {}", by_label.values().map(Vec::len).sum::<usize>(), dir.display());
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_theory(args: &TheoryArgs) -> Result<ExitCode> {
    let (text, stem) = load_text(&args.config, &args.preset, "theory")?;
    let cfg = TheoryConfig::parse(&text).map_err(|e| anyhow!("{e}"))?;
    let params = cfg.params();
    let report = bound_report(&params).map_err(|e| anyhow!("{e}"))?;
    let dir = out_dir(&args.out);
    std::fs::create_dir_all(&dir)?;

    let c = report.constants;
    let mut constants = String::from("name,value\n");
    for (name, value) in [
        ("kappa1", c.kappa1),
        ("kappa2", c.kappa2),
        ("kappa3", c.kappa3),
        ("kappa4", c.kappa4),
        ("xi1", c.xi1),
        ("xi2", c.xi2),
        ("xi3", c.xi3),
        ("xi4", c.xi4),
    ] {
        constants.push_str(&format!("{name},{value:?}\n"));
        println!("{name:>8} = {value:.6e}");
    }
    println!("load threshold (coded beats uncoded): d >= {}", report.d_threshold);
    constants.push_str(&format!("d_threshold,{}\n", report.d_threshold));

    for (tag, v) in [("compressed", report.compressed), ("uncompressed", report.uncompressed)] {
        match (v.feasible, v.max_stable_gamma, v.error_term) {
            (false, ..) => {
                eprintln!("warning: {tag} bound infeasible at these parameters (no stable learning rate)");
                constants.push_str(&format!("{tag}_feasible,false\n"));
            }
            (true, Some(g), Some(e)) => {
                println!("{tag}: max stable gamma {g:.6e}, error term {e:.6e}");
                constants.push_str(&format!("{tag}_max_stable_gamma,{g:?}\n{tag}_error_term,{e:?}\n"));
            }
            (true, Some(g), None) => {
                eprintln!("warning: {tag} error term unavailable (gamma0 not below {g:.6e})");
                constants.push_str(&format!("{tag}_max_stable_gamma,{g:?}\n"));
            }
            _ => {}
        }
    }
    std::fs::write(dir.join(format!("{stem}_constants.csv")), &constants)?;

    let deltas = cfg.delta_grid();
    if !deltas.is_empty() {
        let curve = delta_curve(&params, &deltas).map_err(|e| anyhow!("{e}"))?;
        let mut csv = String::from("param,value,error_term\n");
        for (d, e) in curve {
            csv.push_str(&format!("delta,{d:?},{e:?}\n"));
        }
        let path = dir.join(format!("{stem}_delta_curve.csv"));
        std::fs::write(&path, csv)?;
        println!("wrote {}", path.display());
    }
    if cfg.wants_d_grid() {
        let loads: Vec<usize> = (1..=params.n).collect();
        let curve = d_curve(&params, &loads).map_err(|e| anyhow!("{e}"))?;
        let mut csv = String::from("param,value,error_term\n");
        for (d, e) in curve {
            csv.push_str(&format!("d,{d},{e:?}\n"));
        }
        let path = dir.join(format!("{stem}_d_curve.csv"));
        std::fs::write(&path, csv)?;
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let mut opts = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            VerifyConfig::parse(&text).map_err(|e| anyhow!("{e}"))?.options()
        }
        None => VerifyConfig::default().options(),
    };
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    if args.quick {
        opts.max_enum_n = opts.max_enum_n.min(7);
        opts.mc_samples = opts.mc_samples.min(5_000);
    }
    if args.mutate_weight_formula {
        opts.mutate_weight_formula = true;
    }
    let outcomes = run_suite(&opts).map_err(|e| anyhow!("{e}"))?;
    for c in &outcomes {
        println!("{} {} — {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let ok = all_passed(&outcomes);
    println!(
        "{}: {} of {} checks passed",
        if ok { "OK" } else { "FAILED" },
        outcomes.iter().filter(|c| c.passed).count(),
        outcomes.len()
    );
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn read_csv_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| anyhow!("{} is empty", path.display()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

fn cmd_plot(args: &PlotArgs) -> Result<ExitCode> {
    let (header, rows) = read_csv_columns(&args.manifest)?;
    let dir = out_dir(&args.out);
    std::fs::create_dir_all(&dir)?;
    let stem = args
        .manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "plot".into());

    let plot = if header == ["param", "value", "error_term"] {
        if rows.is_empty() {
            eprintln!("warning: empty curve file, nothing to plot");
            return Ok(ExitCode::SUCCESS);
        }
        let param = rows[0][0].clone();
        let points: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| Ok((r[1].parse::<f64>()?, r[2].parse::<f64>()?)))
            .collect::<Result<_>>()?;
        plot::Plot {
            title: format!("error term vs {param}"),
            x_label: param.clone(),
            y_label: "error term".into(),
            log_y: args.log_scale,
            series: vec![plot::Series { label: "error term".into(), points }],
        }
    } else if header.first().map(String::as_str) == Some("file") {
        if rows.is_empty() {
            eprintln!("warning: empty manifest, nothing to plot");
            return Ok(ExitCode::SUCCESS);
        }
        let base = args.manifest.parent().unwrap_or(Path::new("."));
        // label -> per-run loss trajectories
        let mut grouped: BTreeMap<String, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
        for row in &rows {
            let (file, label) = (&row[0], &row[1]);
            let run_path = base.join(file);
            let (run_header, run_rows) = read_csv_columns(&run_path)?;
            if run_header.first().map(String::as_str) != Some("t") {
                bail!("{} does not look like a run record", run_path.display());
            }
            let traj: Vec<(f64, f64)> = run_rows
                .iter()
                .map(|r| Ok((r[0].parse::<f64>()?, r[1].parse::<f64>()?)))
                .collect::<Result<_>>()?;
            grouped.entry(label.clone()).or_default().push(traj);
        }
        let mut series = Vec::new();
        for (label, runs) in grouped {
            // median across seeds at each logged iteration
            let len = runs.iter().map(Vec::len).min().unwrap_or(0);
            let points: Vec<(f64, f64)> = (0..len)
                .map(|i| {
                    let t = runs[0][i].0;
                    let vals: Vec<f64> = runs.iter().map(|r| r[i].1).collect();
                    (t, median(&vals))
                })
                .collect();
            series.push(plot::Series { label, points });
        }
        plot::Plot {
            title: "training loss vs iteration (median over seeds)".into(),
            x_label: "iteration".into(),
            y_label: "training loss".into(),
            log_y: args.log_scale,
            series,
        }
    } else {
        bail!("unrecognized input header: expected a manifest or a param,value,error_term curve");
    };

    let path = dir.join(format!("{stem}.svg"));
    std::fs::write(&path, plot.render())?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
