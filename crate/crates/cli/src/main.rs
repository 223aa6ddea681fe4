use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use newton_deconv::calibrate::{self, CalibrationConfig};
use newton_deconv::checkpoint;
use newton_deconv::rng::GENERATOR_ID;
use newton_deconv::uncertainty::{self, QuadratureSpec};
use newton_deconv::{
    generate_stream, ColumnSel, Error, EstimatorState, EvalGrid, LearningRateSchedule,
    MixturePreset, Observations, ParameterGrid, RunConfig, StreamRng,
};

mod report;

use report::{num, row, Header};

#[derive(Parser)]
#[command(
    name = "newton-deconv",
    version,
    about = "Streaming density deconvolution with Newton's recursive estimator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set noise.sd=4`. Repeatable; applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Use the full-scale parameter grid (K = 80500).
    #[arg(long)]
    paper_grid: bool,
    /// Report destination; standard output when absent.
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct StateArgs {
    /// Checkpoint written by `fit`.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic stream and write x,z,y as CSV with a JSON sidecar.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Stream observations through the recursion and write a checkpoint.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        state: StateArgs,
        /// Observations, one per line; `-` or absent reads standard input.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Read one CSV column: a zero-based index (no header) or a header name.
        #[arg(long, value_name = "COL")]
        csv_col: Option<String>,
        /// Continue from the existing checkpoint instead of the initial guess.
        #[arg(long)]
        resume: bool,
    },
    /// Plug-in and predictive densities on the evaluation grid.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        state: StateArgs,
    },
    /// Pointwise credible intervals on the evaluation grid.
    Interval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        state: StateArgs,
    },
    /// Uniform credible band over the band interval.
    Band {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        state: StateArgs,
    },
    /// Monte Carlo calibration of the learning-rate exponent gamma.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Contract(_) | Error::Domain(_) => 2,
        Error::Data { .. } | Error::Io(_) | Error::Checkpoint(_) => 3,
        Error::DegenerateObservation { .. }
        | Error::WindowMass { .. }
        | Error::CalibrationSkips { .. } => 4,
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config {
        line: None,
        msg: msg.into(),
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        cfg.merge_text(&text).map_err(|e| match e {
            Error::Config { line, msg } => Error::Config {
                line,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        })?;
    }
    if common.paper_grid {
        cfg.set("grid.paper", "true")?;
    }
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Error::Io(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn checkpoint_path(state: &StateArgs, cfg: &RunConfig) -> Result<PathBuf, Error> {
    state
        .checkpoint
        .clone()
        .or_else(|| cfg.checkpoint.clone())
        .ok_or_else(|| config_err("no checkpoint given (--checkpoint or io.checkpoint)"))
}

fn load_state(path: &Path) -> Result<EstimatorState, Error> {
    checkpoint::load_from_path(path).map_err(|e| match e {
        Error::Io(msg) => Error::Io(format!("{}: {msg}", path.display())),
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn quad_for(cfg: &RunConfig, state: &EstimatorState) -> Result<QuadratureSpec, Error> {
    let auto = QuadratureSpec::for_state(state);
    let window = (
        cfg.y_window.0.unwrap_or(auto.y_window.0),
        cfg.y_window.1.unwrap_or(auto.y_window.1),
    );
    QuadratureSpec::new(window, cfg.y_nodes, cfg.z_nodes)
}

fn eval_grid(cfg: &RunConfig) -> Result<EvalGrid, Error> {
    EvalGrid::linspace(cfg.eval_low, cfg.eval_high, cfg.eval_points)
}

fn model_header(h: &mut Header, state: &EstimatorState) {
    let s = state.schedule();
    h.int("n", state.n())
        .num("alpha", s.alpha())
        .num("gamma", s.gamma())
        .str("noise", state.noise().family().as_str())
        .num("noise_sd", state.noise().std_dev())
        .int("atoms", state.grid().len() as u64);
    if let Some(spec) = state.grid().spec() {
        h.nums("grid", &spec.as_array());
    }
}

fn quad_header(h: &mut Header, q: &QuadratureSpec) {
    h.nums("y_window", &[q.y_window.0, q.y_window.1])
        .int("y_nodes", q.y_nodes as u64)
        .int("z_nodes", q.z_nodes as u64);
}

fn cmd_simulate(common: &Common) -> Result<(), Error> {
    let cfg = load_config(common)?;
    let out_path = common
        .output
        .clone()
        .ok_or_else(|| config_err("simulate needs --output (the JSON sidecar goes next to it)"))?;
    let preset = MixturePreset::named(cfg.preset, cfg.renormalize);
    let noise = cfg.noise()?;
    let mut rng = StreamRng::new(cfg.seed);
    let stream = generate_stream(&preset, &noise, cfg.sim_n, &mut rng);

    let mut out = open_output(&Some(out_path.clone()))?;
    writeln!(out, "x,z,y")?;
    for o in &stream {
        writeln!(out, "{}", row(&[o.x, o.z, o.y]))?;
    }
    out.flush()?;

    let mut side = Header::new("simulate");
    side.str("preset", preset.name())
        .bool("renormalize", cfg.renormalize)
        .str("noise", noise.family().as_str())
        .num("noise_sd", noise.std_dev())
        .int("n", cfg.sim_n as u64)
        .int("seed", cfg.seed)
        .str("generator", GENERATOR_ID);
    let mut sidecar = out_path.into_os_string();
    sidecar.push(".json");
    fs::write(&sidecar, side.json() + "\n")?;
    Ok(())
}

fn cmd_fit(
    common: &Common,
    state_args: &StateArgs,
    input: &Option<PathBuf>,
    csv_col: &Option<String>,
    resume: bool,
) -> Result<(), Error> {
    let mut cfg = load_config(common)?;
    if let Some(p) = input {
        cfg.input = Some(p.clone());
    }
    if let Some(c) = csv_col {
        cfg.csv_col = Some(ColumnSel::parse(c));
    }
    let ckpt = checkpoint_path(state_args, &cfg)?;
    let mut state = if resume {
        load_state(&ckpt)?
    } else {
        let grid = ParameterGrid::from_spec(cfg.grid)?;
        let schedule = LearningRateSchedule::new(cfg.alpha, cfg.gamma)?;
        EstimatorState::new(Arc::new(grid), schedule, cfg.noise()?)?
    };

    let reader: Box<dyn BufRead> = match cfg.input.as_deref() {
        None => Box::new(BufReader::new(io::stdin().lock())),
        Some(p) if p == Path::new("-") => Box::new(BufReader::new(io::stdin().lock())),
        Some(p) => Box::new(BufReader::new(
            File::open(p).map_err(|e| Error::Io(format!("cannot open {}: {e}", p.display())))?,
        )),
    };
    let start_n = state.n();
    let mut busy = std::time::Duration::ZERO;
    let mut failure = None;
    for item in Observations::new(reader, cfg.csv_col.clone()) {
        let y = match item {
            Ok(y) => y,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let t = Instant::now();
        let r = state.update(y);
        busy += t.elapsed();
        if let Err(e) = r {
            failure = Some(e);
            break;
        }
    }
    // keep whatever was absorbed so the run can resume after fixing the input
    checkpoint::save_to_path(&state, &ckpt)?;
    let absorbed = state.n() - start_n;

    let mut out = open_output(&common.output)?;
    writeln!(out, "n = {}", state.n())?;
    writeln!(out, "absorbed = {absorbed}")?;
    match state.last_rate() {
        Some(r) => writeln!(out, "last_rate = {}", num(r))?,
        None => writeln!(out, "last_rate = none")?,
    }
    let per = if absorbed > 0 {
        busy.as_secs_f64() / absorbed as f64
    } else {
        0.0
    };
    writeln!(out, "seconds_per_update = {}", num(per))?;
    writeln!(out, "checkpoint = {}", ckpt.display())?;
    out.flush()?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_estimate(common: &Common, state_args: &StateArgs) -> Result<(), Error> {
    let cfg = load_config(common)?;
    let state = load_state(&checkpoint_path(state_args, &cfg)?)?;
    let grid = eval_grid(&cfg)?;
    let mut h = Header::new("estimate");
    model_header(&mut h, &state);
    let mut out = open_output(&common.output)?;
    writeln!(out, "{}", h.comment_line())?;
    writeln!(out, "x,plugin,predictive")?;
    for &x in grid.points() {
        writeln!(out, "{}", row(&[x, state.plugin_pdf(x)?, state.predictive_pdf(x)?]))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_interval(common: &Common, state_args: &StateArgs) -> Result<(), Error> {
    let cfg = load_config(common)?;
    let state = load_state(&checkpoint_path(state_args, &cfg)?)?;
    let grid = eval_grid(&cfg)?;
    let quad = quad_for(&cfg, &state)?;
    let rows = uncertainty::credible_intervals(&state, grid.points(), cfg.level, cfg.epsilon, &quad)?;
    let mut h = Header::new("interval");
    model_header(&mut h, &state);
    h.num("b_n", rows.first().map_or(f64::NAN, |r| r.b_n))
        .num("level", cfg.level)
        .num("epsilon", cfg.epsilon);
    quad_header(&mut h, &quad);
    let mut out = open_output(&common.output)?;
    writeln!(out, "{}", h.comment_line())?;
    writeln!(out, "x,center,lower,upper,variance")?;
    for r in &rows {
        writeln!(out, "{}", row(&[r.x, r.center, r.lower(), r.upper(), r.variance]))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_band(common: &Common, state_args: &StateArgs) -> Result<(), Error> {
    let cfg = load_config(common)?;
    let state = load_state(&checkpoint_path(state_args, &cfg)?)?;
    let grid = eval_grid(&cfg)?;
    let quad = quad_for(&cfg, &state)?;
    let interval = cfg.interval();
    let band = uncertainty::credible_band(
        &state,
        interval,
        &grid,
        cfg.level,
        cfg.epsilon,
        &quad,
        cfg.probes,
    )?;
    let b = &band.band;
    let mut h = Header::new("band");
    model_header(&mut h, &state);
    h.num("b_n", band.b_n)
        .num("level", cfg.level)
        .num("epsilon", cfg.epsilon)
        .nums("interval", &[interval.0, interval.1])
        .num("sigma_I", b.sigma_i)
        .num("band_constant", b.band_constant)
        .num("entropy_term", b.entropy_term)
        .num("tail_term", b.tail_term)
        .num("k_prime", b.k_prime)
        .num("half_width", band.half_width)
        .int("x_probes", b.probes.x_probes as u64)
        .int("pair_probes", b.probes.pair_probes as u64);
    quad_header(&mut h, &quad);
    let mut out = open_output(&common.output)?;
    writeln!(out, "{}", h.comment_line())?;
    writeln!(out, "x,center,lower,upper")?;
    for p in &band.points {
        writeln!(out, "{}", row(&[p.x, p.center, p.lower, p.upper]))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_calibrate(common: &Common) -> Result<(), Error> {
    let cfg = load_config(common)?;
    let grid = ParameterGrid::from_spec(cfg.grid)?;
    let mut c = CalibrationConfig::new(grid, cfg.noise()?, cfg.horizon, cfg.seed)?;
    c.alpha = cfg.alpha;
    c.gamma_grid = calibrate::gamma_grid(cfg.gamma_start, cfg.gamma_step)?;
    c.streams = cfg.calib_streams;
    let rep = calibrate::calibrate_gamma_replicated(&c, &cfg.calib_seeds)?;

    let mut h = Header::new("calibrate");
    h.num("gamma_hat", rep.gamma_hat)
        .nums(
            "gamma_hat_per_seed",
            &rep.runs.iter().map(|(_, r)| r.gamma_hat).collect::<Vec<_>>(),
        )
        .ints("seeds", &cfg.calib_seeds)
        .str("ties", "larger gamma")
        .int("horizon", cfg.horizon as u64)
        .num("alpha", cfg.alpha)
        .num("gamma_start", cfg.gamma_start)
        .num("gamma_step", cfg.gamma_step)
        .str("noise", c.noise.family().as_str())
        .num("noise_sd", c.noise.std_dev())
        .nums("grid", &cfg.grid.as_array())
        .str("streams", cfg.calib_streams.as_str())
        .str("generator", GENERATOR_ID);
    let mut out = open_output(&common.output)?;
    writeln!(out, "{}", h.comment_line())?;
    writeln!(out, "seed,gamma,score,skipped")?;
    for (seed, r) in &rep.runs {
        for s in &r.trace {
            writeln!(out, "{seed},{},{},{}", num(s.gamma), num(s.score), s.skipped)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.cmd {
        Cmd::Simulate { common } => cmd_simulate(common),
        Cmd::Fit {
            common,
            state,
            input,
            csv_col,
            resume,
        } => cmd_fit(common, state, input, csv_col, *resume),
        Cmd::Estimate { common, state } => cmd_estimate(common, state),
        Cmd::Interval { common, state } => cmd_interval(common, state),
        Cmd::Band { common, state } => cmd_band(common, state),
        Cmd::Calibrate { common } => cmd_calibrate(common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("newton-deconv: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
