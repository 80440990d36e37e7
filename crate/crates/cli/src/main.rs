//! `bitloc`: run scenarios, Monte Carlo batches and diagnostics from the shell.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bitloc::bench::{self, Backend, BenchConfig};
use bitloc::config::ScenarioConfig;
use bitloc::convergence_lab::{cesaro_path, product_tail_table, DriftSamples, FactorDist};
use bitloc::detect_model::DetectionModel;
use bitloc::estimator::CentreSet;
use bitloc::fisher_design::{angle_condition_residual, default_angles, doptimal_placement, optimal_radius, GeometrySpec};
use bitloc::info_geometry::{ambiguity_set_a, minimiser_set_b, ratio_bounds, DEFAULT_AMBIGUITY_TOL, DEFAULT_TIE_TOL};
use bitloc::sim_engine::{trial_rng, Scenario};
use bitloc::{pt, report};

#[derive(Parser)]
#[command(name = "bitloc", version, about = "Source localisation from binary detections")]
struct Cli {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for Monte Carlo batches (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Directory for CSV output.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Simulate(SimulateArgs),
    /// Monte Carlo batch: error curves and the asymptotic-error table.
    Bench(BenchArgs),
    /// Print the D-optimal formation for a detection model.
    Doptimal(DoptimalArgs),
    /// KL report and indistinguishable set for a frozen scenario.
    Diagnose(DiagnoseArgs),
    /// Product-tail and normalised-sum experiments.
    Theory(TheoryArgs),
    /// Print the effective scenario file.
    Config,
}

#[derive(Args)]
struct SimulateArgs {
    /// Replace the grid estimator with an SIR particle filter of this many particles.
    #[arg(long)]
    sir: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Grid sides; M = side^2.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
    grids: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Readings per trial.
    #[arg(long, default_value_t = 1000)]
    k_max: usize,
    /// Entropy threshold (nats) for the asymptotic error.
    #[arg(long, default_value_t = bench::DEFAULT_ENTROPY_THRESHOLD)]
    threshold: f64,
    /// Keep agents at their initial positions.
    #[arg(long)]
    r#static: bool,
    /// Run SIR instead of the grid estimator (particles = M unless --particles).
    #[arg(long)]
    sir: bool,
    #[arg(long)]
    particles: Option<usize>,
    /// Transmit-power mismatch sweep: true P_T values (W); uses the first grid.
    #[arg(long, value_delimiter = ',')]
    envelope_sweep: Option<Vec<f64>>,
    /// Transmit power assumed by the estimator in the sweep (W).
    #[arg(long, default_value_t = 5.0)]
    assumed_pt: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelChoice {
    /// Default Friis/Q-function model.
    Friis,
    /// The scenario's assumed model.
    Config,
}

#[derive(Args)]
struct DoptimalArgs {
    #[arg(long, value_enum, default_value = "friis")]
    model: ModelChoice,
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Radius search interval r1,r2 (m).
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "1,30")]
    r_range: Vec<f64>,
    /// Formation centre x,y (m).
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "0,0", allow_hyphen_values = true)]
    anchor: Vec<f64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Candidate spacing for the indistinguishable set (m).
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global().context("thread pool")?;
    }
    let cfg = match &cli.config {
        Some(p) => ScenarioConfig::parse_file(p)?,
        None => ScenarioConfig::default(),
    };
    if !matches!(cli.command, Command::Config) {
        std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(&cfg, cli.seed, &cli.out_dir, a),
        Command::Bench(a) => bench_cmd(cfg, cli.seed, &cli.out_dir, a),
        Command::Doptimal(a) => doptimal(&cfg, &cli.out_dir, a),
        Command::Diagnose(a) => diagnose(&cfg, cli.seed, &cli.out_dir, a),
        Command::Theory(a) => theory(cli.seed, &cli.out_dir, a),
        Command::Config => {
            print!("{}", cfg.emit());
            Ok(())
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn write_csv(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(dir, name)?;
    f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {name}"))
}

fn simulate(cfg: &ScenarioConfig, seed: u64, out: &Path, a: SimulateArgs) -> Result<()> {
    let trace = match a.sir {
        Some(n) => bench::sir_baseline(cfg, n, seed)?,
        None => bitloc::sim_engine::run_scenario(cfg, seed)?,
    };
    write_csv(out, "trace.csv", |w| report::write_trace(w, &trace))?;
    write_csv(out, "measurements.csv", |w| report::write_measurements(w, &trace))?;
    if !trace.final_log_weights.is_empty() {
        let cs = cfg.centres()?;
        let post = bitloc::estimator::GridPosterior::from_log_weights(&trace.final_log_weights)?;
        write_csv(out, "posterior.csv", |w| report::write_posterior(w, &post, &cs))?;
    }
    let last = trace.final_epoch();
    println!("source      ({:.3}, {:.3}) m", trace.source.x, trace.source.y);
    println!("estimate    ({:.3}, {:.3}) m after k = {}", last.mean.x, last.mean.y, last.k);
    println!("error       {:.3} m", last.error);
    println!("entropy     {:.3} nats", last.entropy);
    println!("radius      {:.4} m", trace.radius);
    Ok(())
}

fn bench_cmd(cfg: ScenarioConfig, seed: u64, out: &Path, a: BenchArgs) -> Result<()> {
    let backend = if a.sir { Backend::Sir(a.particles) } else { Backend::Grid };
    let bc = BenchConfig {
        scenario: cfg,
        grids: a.grids,
        trials: a.trials,
        k_max: a.k_max,
        threshold: a.threshold,
        seed,
        controller: !a.r#static,
        backend,
    };
    if let Some(pts) = a.envelope_sweep {
        let cells = bench::envelope_sweep(&bc, a.assumed_pt, &pts)?;
        println!("true_P_T_W  final_rms_m");
        for (p, cell) in &cells {
            write_csv(out, &format!("curves_{}.csv", cell.tag), |w| report::write_curve(w, cell))?;
            println!("{p:<10}  {:.3}", cell.final_rms());
        }
        return Ok(());
    }
    let res = bench::monte_carlo(&bc)?;
    for cell in &res.cells {
        write_csv(out, &format!("curves_{}.csv", cell.tag), |w| report::write_curve(w, cell))?;
    }
    let rows = bench::table_rows(&res, bc.threshold)?;
    write_csv(out, "table1.csv", |w| report::write_table1(w, &rows))?;
    println!("{:>6}  {:>10}  {:>9}  {:>8}", "M", "spacing_m", "e_inf_m", "qualify");
    for r in &rows {
        println!("{:>6}  {:>10.3}  {:>9.3}  {:>7.0}%", r.m, r.spacing, r.e_inf, 100.0 * r.qualifying_fraction);
    }
    Ok(())
}

fn doptimal(cfg: &ScenarioConfig, out: &Path, a: DoptimalArgs) -> Result<()> {
    let [r1, r2] = a.r_range[..] else { bail!("--r-range takes two values r1,r2") };
    let [ax, ay] = a.anchor[..] else { bail!("--anchor takes two values x,y") };
    let model = match a.model {
        ModelChoice::Friis => DetectionModel::default(),
        ModelChoice::Config => cfg.assumed_model()?,
    };
    let r = optimal_radius(&model, r1, r2)?;
    let anchor = pt(ax, ay);
    let pts = doptimal_placement(&anchor, a.n, r)?;
    let spec = GeometrySpec { radius: r, angles: default_angles(a.n), anchor: [ax, ay] };
    write_csv(out, "doptimal.csv", |w| {
        writeln!(w, "agent,x,y,theta_rad")?;
        for (i, (p, t)) in pts.iter().zip(&spec.angles).enumerate() {
            writeln!(w, "{i},{},{},{t}", p.x, p.y)?;
        }
        Ok(())
    })?;
    let (c, s) = angle_condition_residual(&spec.angles);
    println!("radius {r:.6} m");
    for (i, p) in pts.iter().enumerate() {
        println!("agent {i}: ({:.6}, {:.6})", p.x + 0.0, p.y + 0.0);
    }
    println!("residual ({c:.3e}, {s:.3e})");
    println!("\n[geometry]\n{}", toml::to_string(&spec).context("serialising geometry")?);
    Ok(())
}

fn diagnose(cfg: &ScenarioConfig, seed: u64, out: &Path, a: DiagnoseArgs) -> Result<()> {
    if !(a.spacing > 0.0) {
        bail!("--spacing must be > 0");
    }
    let scenario = Scenario::from_config(cfg)?;
    let source = scenario.draw_source(&mut trial_rng(seed, 0));
    let xs = &scenario.initial;
    let cs: &CentreSet = &scenario.centres;
    let b = minimiser_set_b(&source, xs, cs, &scenario.assumed_model, DEFAULT_TIE_TOL)?;
    write_csv(out, "kl_report.csv", |w| report::write_kl_report(w, &b, cs))?;

    let s = scenario.search;
    let nx = (s.width() / a.spacing).floor() as usize;
    let ny = (s.height() / a.spacing).floor() as usize;
    let mut cands: Vec<_> = (0..=nx)
        .flat_map(|i| (0..=ny).map(move |j| pt(s.x_min + i as f64 * a.spacing, s.y_min + j as f64 * a.spacing)))
        .collect();
    cands.push(source);
    let amb = ambiguity_set_a(&source, xs, &cands, &scenario.assumed_model, DEFAULT_AMBIGUITY_TOL)?;
    write_csv(out, "ambiguity.csv", |w| {
        writeln!(w, "x,y")?;
        amb.iter().try_for_each(|p| writeln!(w, "{},{}", p.x, p.y))
    })?;
    let rb = ratio_bounds(cs, xs, &source, &scenario.assumed_model)?;
    println!("source            ({:.3}, {:.3}) m", source.x, source.y);
    println!("agents            {}", xs.len());
    println!("minimisers in B   {:?}", b.minimisers);
    for &i in &b.minimisers {
        let c = cs.get(i);
        println!("  centre {i}: ({:.3}, {:.3}) m, KL {:.3e} nats", c.x, c.y, b.kl[i]);
    }
    println!("points in A       {} of {} candidates", amb.len(), cands.len());
    println!("ratio bounds      alpha {:.6e}, beta {:.6e}", rb.alpha, rb.beta);
    Ok(())
}

fn theory(seed: u64, out: &Path, a: TheoryArgs) -> Result<()> {
    let factor = FactorDist::TwoPoint { low: 0.5, high: 1.5, p_low: 0.5 };
    let rows = product_tail_table(factor, &[50, 100, 200, 400], &[0.1, 1.0, 10.0], a.trials, seed)?;
    write_csv(out, "theory.csv", |w| report::write_tail_table(w, &rows))?;
    println!("{:>5}  {:>6}  {:>10}  {:>10}  ok", "n", "eps", "empirical", "bound");
    for r in &rows {
        let b = r.bound.map_or("-".to_string(), |b| format!("{b:.4e}"));
        println!("{:>5}  {:>6}  {:>10.4e}  {:>10}  {}", r.n, r.eps, r.empirical, b, r.within_bound());
    }
    let s = DriftSamples::Rademacher { scale: 1.0 };
    let path = cesaro_path(&s, 0.75, &[1_000, 10_000, 100_000], seed)?;
    println!("n^-0.75 partial sums at n = 1e3, 1e4, 1e5: {:.4} {:.4} {:.4}", path[0], path[1], path[2]);
    if !rows.iter().all(|r| r.within_bound()) {
        bail!("empirical tail exceeded the Hoeffding bound");
    }
    Ok(())
}
