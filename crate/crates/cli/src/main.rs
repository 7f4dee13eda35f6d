mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use plain_core::crb::crb_evaluate;
use plain_core::evaluation::{
    measure_runtime, noise_seed, run_scheme, run_sweep, scenario_seed, truth_params, write_csv, RmseReport, SweepOutput,
};
use plain_core::scenario::{add_noise, synthesize_channel, DimKind};

use config::{parse_config, parse_config_str, ExperimentConfig, Precision};

#[derive(Parser)]
#[command(name = "plain", version, about = "Compressed, decoupled, fused angle/delay/Doppler estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo RMSE sweep, one CSV row per scheme, SNR point and trial.
    Run(Common),
    /// One scenario with an estimated object count: truth and detections.
    Demo(Common),
    /// Mean pipeline runtime per scheme on a fixed noisy scenario.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repeats: Option<usize>,
        /// Double the antennas and the bandwidth.
        #[arg(long)]
        doubled: bool,
    },
    /// Bound-only sweep, one row per SNR point and trial.
    Crb(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; defaults to `sweep.output` for `run`, stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated scheme labels.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long)]
    trials: Option<usize>,
    /// SNR sweep as START:STOP:STEP in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
}

fn parse_snr(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("--snr expects START:STOP:STEP, got `{s}`");
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.trim().parse().with_context(|| format!("invalid number `{p}` in --snr"))?;
    }
    Ok(out)
}

impl Common {
    /// Loads the config and applies the command-line overrides.
    fn load(&self, bench: bool) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => parse_config(p)?,
            None => parse_config_str("")?,
        };
        if let Some(seed) = self.seed {
            cfg.sweep.seed = seed;
        }
        if let Some(s) = &self.schemes {
            if bench {
                cfg.bench.schemes = s.clone();
            } else {
                cfg.sweep.schemes = s.clone();
            }
        }
        if let Some(t) = self.trials {
            cfg.sweep.trials = t;
        }
        if let Some(s) = &self.snr {
            let [a, b, step] = parse_snr(s)?;
            cfg.sweep.snr_start = a;
            cfg.sweep.snr_stop = b;
            cfg.sweep.snr_step = step;
        }
        cfg.validate().map_err(|(section, key, msg)| anyhow::anyhow!("{section}.{key}: {msg}"))?;
        Ok(cfg)
    }

    fn writer(&self, default: Option<&str>) -> Result<Box<dyn Write>> {
        let path = self.out.clone().or_else(|| default.map(PathBuf::from));
        Ok(match path {
            Some(p) => Box::new(BufWriter::new(File::create(&p).with_context(|| format!("cannot create {}", p.display()))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn print_summary(reports: &[RmseReport]) {
    eprintln!(
        "{:<14} {:>7} {:>7} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "scheme", "snr_db", "failed", "angle_deg", "crb", "distance_m", "crb", "vel_kmh", "crb"
    );
    for r in reports {
        eprintln!(
            "{:<14} {:>7.2} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.scheme, r.snr_db, r.failures, r.rmse[0], r.crb[0], r.rmse[1], r.crb[1], r.rmse[2], r.crb[2]
        );
    }
}

fn cmd_run(common: &Common) -> Result<()> {
    let cfg = common.load(false)?;
    let sweep = cfg.sweep_config()?;
    let out: SweepOutput = match cfg.sweep.precision {
        Precision::F64 => run_sweep::<f64>(&sweep)?,
        Precision::F32 => run_sweep::<f32>(&sweep)?,
    };
    let mut w = common.writer(Some(&cfg.sweep.output))?;
    write_csv(&out.rows, &mut w)?;
    w.flush()?;
    print_summary(&out.reports);
    Ok(())
}

fn cmd_demo(common: &Common) -> Result<()> {
    let mut cfg = common.load(false)?;
    cfg.scenario.paths = cfg.demo.paths;
    cfg.scenario.layout = cfg.demo.layout;
    let grid = cfg.grid_spec();
    let seed = cfg.sweep.seed;
    let sc = cfg.scenario_spec().generate(&grid, scenario_seed(seed, 0))?;
    let h = synthesize_channel::<f64>(&sc);
    let obs = add_noise(&h, &sc, cfg.demo.snr_db, cfg.power(), noise_seed(seed, 0, 0))?;
    let scheme = cfg.scheme("plain")?;
    // The object count is estimated here, never taken from the truth.
    let set = run_scheme(&scheme.kind, &obs.tensor, &grid, None)?;

    let mut w = common.writer(None)?;
    writeln!(w, "role,index,angle_deg,distance_m,velocity_kmh,gain")?;
    for (i, (p, t)) in sc.paths.iter().zip(truth_params(&sc)).enumerate() {
        writeln!(w, "truth,{i},{},{},{},{}", t[0], t[1], t[2], p.gain.norm())?;
    }
    // Detections see sqrt(P_tx) beta; report them on the truth's scale.
    let amp = obs.tx_power.sqrt();
    for (i, o) in set.objects.iter().enumerate() {
        writeln!(w, "detected,{i},{},{},{},{}", o.params[0], o.params[1], o.params[2], o.gain / amp)?;
    }
    w.flush()?;
    eprintln!("true objects: {}, estimated objects: {}", sc.num_paths(), set.len());
    Ok(())
}

fn cmd_bench(common: &Common, repeats: Option<usize>, doubled: bool) -> Result<()> {
    let mut cfg = common.load(true)?;
    if let Some(r) = repeats {
        if r == 0 {
            bail!("--repeats must be at least 1");
        }
        cfg.bench.repeats = r;
    }
    if doubled {
        cfg.grid.antennas *= 2;
        cfg.grid.subcarriers *= 2;
    }
    let grid = cfg.grid_spec();
    let seed = cfg.sweep.seed;
    let sc = cfg.scenario_spec().generate(&grid, scenario_seed(seed, 0))?;
    let h = synthesize_channel::<f64>(&sc);
    let obs = add_noise(&h, &sc, cfg.bench.snr_db, cfg.power(), noise_seed(seed, 0, 0))?;
    drop(h);
    let true_np = cfg.fusion.true_np_override.then_some(sc.num_paths());

    let mut w = common.writer(None)?;
    writeln!(w, "scheme,n_a,n_f,n_t,repeats,mean_runtime_s")?;
    for label in &cfg.bench.schemes {
        let scheme = cfg.scheme(label)?;
        let t = measure_runtime(&scheme.kind, &obs.tensor, &grid, true_np, cfg.bench.repeats)
            .with_context(|| format!("scheme {label}"))?;
        writeln!(w, "{label},{},{},{},{},{t}", grid.n_a, grid.n_f, grid.n_t, cfg.bench.repeats)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_crb(common: &Common) -> Result<()> {
    let cfg = common.load(false)?;
    let grid = cfg.grid_spec();
    let spec = cfg.scenario_spec();
    let mut w = common.writer(None)?;
    writeln!(w, "snr_db,trial,crb_angle_deg,crb_distance_m,crb_velocity_kmh,singular")?;
    let scenarios = (0..cfg.sweep.trials)
        .map(|t| spec.generate(&grid, scenario_seed(cfg.sweep.seed, t)))
        .collect::<plain_core::Result<Vec<_>>>()?;
    for snr in cfg.snr_points() {
        for (trial, sc) in scenarios.iter().enumerate() {
            // Noise variance referred to unit transmit power at this SNR.
            let noise_var = sc.gain_power() / 10f64.powf(snr / 10.0);
            let r = crb_evaluate(sc, noise_var)?;
            let [a, d, v] = DimKind::ALL.map(|k| r.rms(k));
            writeln!(w, "{snr},{trial},{a},{d},{v},{}", r.singular)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Demo(c) => cmd_demo(c),
        Command::Bench { common, repeats, doubled } => cmd_bench(common, *repeats, *doubled),
        Command::Crb(c) => cmd_crb(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
