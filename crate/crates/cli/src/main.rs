use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use uvesc_cli::config::load_config;
use uvesc_cli::csvio;
use uvesc_core::linalg::{norm, sub_vec};
use uvesc_core::sim::{initial_window_rms, time_to_output_band};
use uvesc_core::{
    common_period, compare_schemes, detect_sliding, residual_bounds, settling_bound,
    simulate_average, simulate_full, solve_lyapunov, symmetric_eigen_bounds, validate_ratios,
    AverageScheme, BoundForm, DitherSpec, LawKind, Matrix, Rational64, SimConfig, SlidingSignal,
    TimeFrame, Trajectory,
};

#[derive(Parser)]
#[command(
    name = "uvesc",
    about = "Extremum seeking over quadratic maps with unit-vector and proportional laws",
    version
)]
struct Cli {
    /// Reserved for future stochastic features; the current pipeline is
    /// deterministic and ignores it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a set of frequency ratios against the resonance conditions.
    Validate {
        /// Comma-separated rationals, e.g. "70,50" or "3/2,5/4".
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<String>,
    },
    /// Integrate the full dithered closed loop and emit a trajectory CSV.
    Simulate(SimulateArgs),
    /// Integrate the averaged closed-loop system.
    Average(AverageArgs),
    /// Run several configurations against one plant and print a summary table.
    Compare {
        /// Comma-separated config paths; all must share [map] and [dither].
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        /// Output band |y - q*| <= band used for the time-to-band column.
        #[arg(long, default_value_t = 1.5)]
        band: f64,
        /// Optional CSV destination for the summary rows.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the Lyapunov certificate, settling bounds, and residual bounds.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep the gain scaling or the base frequency, one summary row per value.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the configured law kind.
    #[arg(long)]
    scheme: Option<String>,
    /// Trajectory CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured horizon in seconds.
    #[arg(long)]
    t_end: Option<f64>,
    /// Override the integration step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the dither base frequency in rad/s.
    #[arg(long)]
    omega: Option<f64>,
}

#[derive(Args)]
struct AverageArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scheme: Option<String>,
    /// Integrate the origin-linearized Newton average instead of the full one.
    #[arg(long)]
    linearized: bool,
    /// Relay boundary layer for the averaged system.
    #[arg(long, default_value_t = uvesc_core::sim::DEFAULT_BOUNDARY_LAYER)]
    boundary_layer: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// What to sweep.
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 1.5)]
    band: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed integration step; by default each member uses its period/2000.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SweepParam {
    GainScale,
    Omega,
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    if cli.seed.is_some() {
        eprintln!("note: --seed is reserved; the current pipeline is deterministic");
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<std::process::ExitCode> {
    match command {
        Command::Validate { ratios } => cmd_validate(&ratios),
        Command::Simulate(args) => cmd_simulate(args).map(|_| std::process::ExitCode::SUCCESS),
        Command::Average(args) => cmd_average(args).map(|_| std::process::ExitCode::SUCCESS),
        Command::Compare { configs, band, out } => {
            cmd_compare(&configs, band, out.as_deref()).map(|_| std::process::ExitCode::SUCCESS)
        }
        Command::Bounds { config } => cmd_bounds(&config).map(|_| std::process::ExitCode::SUCCESS),
        Command::Sweep(args) => cmd_sweep(args).map(|_| std::process::ExitCode::SUCCESS),
    }
}

fn parse_ratio(s: &str) -> Result<Rational64> {
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().with_context(|| format!("numerator of {s:?}"))?;
        let q: i64 = q.trim().parse().with_context(|| format!("denominator of {s:?}"))?;
        if q == 0 {
            bail!("ratio {s:?} has a zero denominator");
        }
        Ok(Rational64::new(p, q))
    } else {
        Ok(Rational64::from_integer(s.trim().parse().with_context(|| format!("ratio {s:?}"))?))
    }
}

fn cmd_validate(ratio_strs: &[String]) -> Result<std::process::ExitCode> {
    if ratio_strs.is_empty() {
        bail!("--ratios needs at least one value");
    }
    let ratios = ratio_strs.iter().map(|s| parse_ratio(s)).collect::<Result<Vec<_>>>()?;
    if ratios.iter().any(|r| *r.numer() <= 0) {
        bail!("ratios must be positive");
    }
    let report = validate_ratios(&ratios);
    if report.is_valid() {
        println!("valid");
        Ok(std::process::ExitCode::SUCCESS)
    } else {
        println!("invalid: {} violation(s)", report.violations.len());
        for v in &report.violations {
            println!("  {v}");
        }
        Ok(std::process::ExitCode::from(1))
    }
}

fn parse_scheme(s: Option<&str>) -> Result<Option<LawKind>> {
    s.map(|v| v.parse::<LawKind>().map_err(|e| anyhow!("{e}"))).transpose()
}

fn apply_overrides(
    cfg: &mut SimConfig,
    t_end: Option<f64>,
    dt: Option<f64>,
    omega: Option<f64>,
) -> Result<()> {
    if let Some(w) = omega {
        cfg.dither =
            DitherSpec::new(cfg.dither.amplitudes().to_vec(), cfg.dither.ratios().to_vec(), w)
                .map_err(|e| anyhow!("{e}"))?;
        if dt.is_none() {
            cfg.dt = common_period(&cfg.dither) / 2000.0;
        }
    }
    if let Some(v) = t_end {
        cfg.t_end = v;
    }
    if let Some(v) = dt {
        cfg.dt = v;
    }
    cfg.validate().map_err(|e| anyhow!("{e}"))
}

fn note_filters(has: bool) {
    if has {
        eprintln!(
            "note: [filters] parameters (omega_l / omega_h / delta) are accepted for \
             compatibility but unused by this simulator"
        );
    }
}

fn write_or_print_trajectory(traj: &Trajectory, out: Option<&std::path::Path>) -> Result<()> {
    match out {
        Some(path) => {
            csvio::write_trajectory_file(path, traj)?;
            println!("wrote {} samples to {}", traj.len(), path.display());
        }
        None => csvio::write_trajectory(std::io::stdout().lock(), traj)?,
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let loaded = load_config(&args.config, parse_scheme(args.scheme.as_deref())?)?;
    note_filters(loaded.has_filter_params);
    let mut cfg = loaded.sim;
    apply_overrides(&mut cfg, args.t_end, args.dt, args.omega)?;

    let traj = simulate_full(&cfg).map_err(|e| anyhow!("{e}"))?;
    write_or_print_trajectory(&traj, args.out.as_deref())?;

    // Onset detection needs at least one dither period of data; on shorter
    // horizons it is reported as not measurable rather than failing the run.
    let window = common_period(&cfg.dither);
    let fmt_onset =
        |o: Option<f64>| o.map_or_else(|| "none".to_string(), |t| format!("{t:.1} s"));
    let onset_text = if window <= traj.span() {
        let tol = 0.05 * initial_window_rms(&traj, window);
        let overall = detect_sliding(&traj, SlidingSignal::GHat, tol, window)
            .map_err(|e| anyhow!("{e}"))?;
        // Per-channel onsets are reported without asserting any ordering.
        let per_component = (0..cfg.map.dim())
            .map(|i| {
                detect_sliding(&traj, SlidingSignal::GHatComponent(i), tol, window)
                    .map(fmt_onset)
                    .map_err(|e| anyhow!("{e}"))
            })
            .collect::<Result<Vec<_>>>()?;
        format!("{} (per channel: {})", fmt_onset(overall), per_component.join(", "))
    } else {
        "not measurable (horizon shorter than one dither period)".into()
    };
    let last = traj.len() - 1;
    eprintln!(
        "scheme {}; sliding onset {}; final |theta - theta*| = {:.4e}, |y - q*| = {:.4e}",
        cfg.law.kind().label(),
        onset_text,
        norm(&sub_vec(&traj.theta[last], cfg.map.theta_star())),
        (traj.y[last] - cfg.map.q_star()).abs()
    );
    Ok(())
}

fn cmd_average(args: AverageArgs) -> Result<()> {
    let loaded = load_config(&args.config, parse_scheme(args.scheme.as_deref())?)?;
    note_filters(loaded.has_filter_params);
    let cfg = loaded.sim;
    let t_end = args.t_end.unwrap_or(cfg.t_end);
    let dt = args.dt.unwrap_or((t_end / 100_000.0).min(0.01));

    let theta_tilde0 = sub_vec(&cfg.theta_hat0, cfg.map.theta_star());
    let scheme = if cfg.law.kind().is_newton() {
        let gamma_tilde0 = cfg
            .law
            .gamma0()
            .expect("Newton law carries Gamma(0)")
            .sub(&cfg.map.hessian_inverse().map_err(|e| anyhow!("{e}"))?);
        if args.linearized {
            AverageScheme::newton_linearized(theta_tilde0, gamma_tilde0)
        } else {
            AverageScheme::newton_full(theta_tilde0, gamma_tilde0)
        }
    } else {
        if args.linearized {
            bail!("--linearized only applies to Newton laws");
        }
        AverageScheme::gradient(theta_tilde0)
    }
    .with_boundary_layer(args.boundary_layer);

    let traj =
        simulate_average(&cfg.map, &cfg.law, &scheme, t_end, dt).map_err(|e| anyhow!("{e}"))?;
    write_or_print_trajectory(&traj, args.out.as_deref())?;

    let star = cfg.map.theta_star();
    let onset = detect_sliding(
        &traj,
        SlidingSignal::ThetaTilde(star),
        1e-3 * norm(&sub_vec(&cfg.theta_hat0, star)).max(1e-9),
        (t_end / 50.0).max(dt * 2.0),
    )
    .map_err(|e| anyhow!("{e}"))?;
    eprintln!(
        "averaged {}; settled {}",
        cfg.law.kind().label(),
        onset.map_or_else(|| "never".into(), |t| format!("at {t:.2} s"))
    );
    Ok(())
}

fn cmd_compare(paths: &[PathBuf], band: f64, out: Option<&std::path::Path>) -> Result<()> {
    if paths.len() < 2 {
        bail!("--configs needs at least two paths");
    }
    let mut configs = Vec::new();
    for p in paths {
        let loaded = load_config(p, None)?;
        note_filters(loaded.has_filter_params);
        configs.push(loaded.sim);
    }
    let table = compare_schemes(&configs, band).map_err(|e| anyhow!("{e}"))?;
    print!("{table}");
    if let Some(path) = out {
        let mut text = String::from(
            "scheme,sliding_onset,time_to_band,final_theta_error,final_y_error,decay\n",
        );
        for r in &table.rows {
            let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.17e}"));
            text.push_str(&format!(
                "{},{},{},{:.17e},{:.17e},{}\n",
                r.label,
                opt(r.sliding_onset),
                opt(r.time_to_band),
                r.final_theta_error,
                r.final_y_error,
                r.decay.label()
            ));
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote summary to {}", path.display());
    }
    Ok(())
}

fn cmd_bounds(path: &std::path::Path) -> Result<()> {
    let loaded = load_config(path, None)?;
    note_filters(loaded.has_filter_params);
    let cfg = loaded.sim;
    let omega = cfg.dither.base_omega();
    let theta_tilde0 = sub_vec(&cfg.theta_hat0, cfg.map.theta_star());
    let theta_norm0 = norm(&theta_tilde0);
    let q = Matrix::identity(cfg.map.dim());

    let newton = cfg.law.kind().is_newton();
    let (a, form) = if newton {
        (cfg.law.gain().scale(-1.0), BoundForm::Newton)
    } else {
        (cfg.map.hessian().matmul(cfg.law.gain()), BoundForm::Gradient)
    };
    let cert = solve_lyapunov(&a, &q).map_err(|e| anyhow!("{e}"))?;

    println!("law: {}", cfg.law.kind().label());
    println!("closed-loop matrix A:\n{}", cert.a_matrix);
    println!("certificate P (Q = I):\n{}", cert.p_matrix);
    println!(
        "lambda(P) in [{:.6}, {:.6}], lambda(Q) in [{:.6}, {:.6}]",
        cert.lambda_min_p, cert.lambda_max_p, cert.lambda_min_q, cert.lambda_max_q
    );

    let (lo, hi) = symmetric_eigen_bounds(cfg.map.hessian()).map_err(|e| anyhow!("{e}"))?;
    let h_norm = lo.abs().max(hi.abs());
    let slow_initial =
        if newton { theta_norm0 } else { norm(&cfg.map.hessian().matvec(&theta_tilde0)) };
    let slow = settling_bound(&cert, form, slow_initial, omega, TimeFrame::SlowTime, None)
        .map_err(|e| anyhow!("{e}"))?;
    let original = settling_bound(
        &cert,
        form,
        theta_norm0,
        omega,
        TimeFrame::OriginalTime,
        (!newton).then_some(h_norm),
    )
    .map_err(|e| anyhow!("{e}"))?;
    println!("settling bound: {slow:.4} (slow time units), {original:.4} s (original time)");

    let (theta_res, y_res) = residual_bounds(&cfg.map, &cfg.dither);
    println!(
        "dither-driven residual components: theta ripple ||a|| = {theta_res:.6}, \
         output ripple peak = {y_res:.6}"
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let loaded = load_config(&args.config, None)?;
    note_filters(loaded.has_filter_params);
    let base = loaded.sim;
    if args.values.is_empty() {
        bail!("--values needs at least one entry");
    }

    let members: Vec<SimConfig> = args
        .values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            match args.param {
                SweepParam::GainScale => {
                    cfg.law = base.law.with_gain_scale(v);
                    cfg.validate().map_err(|e| anyhow!("{e}"))?;
                }
                SweepParam::Omega => apply_overrides(&mut cfg, None, args.dt, Some(v))?,
            }
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    // Members are independent; run them on their own threads and report in
    // input order.
    let mut rows: Vec<Option<String>> = vec![None; members.len()];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for cfg in &members {
            let band = args.band;
            handles.push(scope.spawn(move || sweep_row(cfg, band)));
        }
        for (slot, h) in rows.iter_mut().zip(handles) {
            *slot = Some(h.join().expect("sweep worker panicked"));
        }
    });

    let param_name = match args.param {
        SweepParam::GainScale => "gain_scale",
        SweepParam::Omega => "omega",
    };
    let header =
        format!("{param_name},sliding_onset,time_to_band,final_theta_error,final_y_error,status");
    let mut csv = format!("{header}\n");
    println!("{header}");
    for (v, row) in args.values.iter().zip(rows) {
        let line = format!("{v},{}", row.expect("worker filled"));
        println!("{line}");
        csv.push_str(&line);
        csv.push('\n');
    }
    if let Some(path) = &args.out {
        std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote sweep to {}", path.display());
    }
    Ok(())
}

fn sweep_row(cfg: &SimConfig, band: f64) -> String {
    match simulate_full(cfg) {
        Ok(traj) => {
            let window = common_period(&cfg.dither);
            let tol = 0.05 * initial_window_rms(&traj, window);
            let onset = detect_sliding(&traj, SlidingSignal::GHat, tol, window)
                .ok()
                .flatten()
                .map_or_else(|| "none".into(), |t| format!("{t:.3}"));
            let in_band = time_to_output_band(&traj, cfg.map.q_star(), band)
                .map_or_else(|| "none".into(), |t| format!("{t:.3}"));
            let last = traj.len() - 1;
            format!(
                "{onset},{in_band},{:.6e},{:.6e},ok",
                norm(&sub_vec(&traj.theta[last], cfg.map.theta_star())),
                (traj.y[last] - cfg.map.q_star()).abs()
            )
        }
        Err(e) => format!("none,none,nan,nan,{e}"),
    }
}
