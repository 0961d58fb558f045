//! Batch driver for the distributed attitude and position estimators.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use distatt::attitude::{check_params, gradient_audit};
use distatt::formation::{certify_bpe, check_bpe, inertial_bearings, BpeConfig};
use distatt::output::write_all;
use distatt::scenario::{paper_preset, ObserverKind, Scenario};
use distatt::sim::simulate;

type CliResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Parser)]
#[command(name = "distatt", version, about = "Distributed attitude and bearing-based position estimation on trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Observer {
    Continuous,
    Hybrid,
}

impl From<Observer> for ObserverKind {
    fn from(o: Observer) -> Self {
        match o {
            Observer::Continuous => ObserverKind::Continuous,
            Observer::Hybrid => ObserverKind::Hybrid,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files and write CSV, JSON and SVG output
    Simulate {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Output directory (one subdirectory per scenario when several are given)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, value_enum)]
        observer: Option<Observer>,
        /// Number of scenarios simulated in parallel
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        no_plots: bool,
    },
    /// Run the rotating-pyramid preset with both observers
    ReplicatePaper {
        #[arg(long, default_value = "out/replicate")]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 2)]
        jobs: usize,
        #[arg(long)]
        no_plots: bool,
    },
    /// Audit the observer parameters of a scenario
    CheckParams { scenario: PathBuf },
    /// Compare analytic potential gradients with central finite differences
    Gradcheck {
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check bearing persistence of excitation along the scenario's ground truth
    CheckBpe {
        scenario: PathBuf,
        /// Window length T in seconds
        #[arg(long)]
        window: f64,
        /// Check this μ instead of searching for the largest passing one
        #[arg(long)]
        mu: Option<f64>,
        /// Bearing sampling step (defaults to the scenario's dt)
        #[arg(long)]
        sample_dt: Option<f64>,
        /// Number of window starts
        #[arg(long, default_value_t = 50)]
        starts: usize,
    },
}

struct Job {
    scenario: Scenario,
    out: PathBuf,
    plots: bool,
}

fn run_job(job: &Job) -> CliResult<String> {
    let started = Instant::now();
    let out = simulate(&job.scenario)?;
    write_all(&out, &job.out, job.scenario.output.stride)?;
    if job.plots {
        plot::write_plots(&out.log, &job.out, job.scenario.output.stride).map_err(|e| e.to_string())?;
    }
    let s = &out.summary;
    let worst = s.final_rbar.iter().copied().fold(0.0, f64::max);
    Ok(format!(
        "{} [{}]: t_end={} jumps={} max|R̄|_I={:.3e} ‖e‖ {:.3e} -> {:.3e} ({:.2}s) -> {}",
        s.name,
        s.observer,
        s.t_end,
        s.jump_count,
        worst,
        s.e_norm_initial,
        s.e_norm_final,
        started.elapsed().as_secs_f64(),
        job.out.display()
    ))
}

/// Runs jobs on up to `jobs` threads, reporting in submission order.
fn run_jobs(list: Vec<Job>, jobs: usize) -> CliResult<()> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<String, String>>>> = Mutex::new(vec![None; list.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, list.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = list.get(i) else { break };
                let r = run_job(job).map_err(|e| format!("{}: {e}", job.scenario.name));
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    let mut failed = 0;
    for r in results.into_inner().expect("results lock").into_iter().flatten() {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("error: {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(format!("{failed} simulation(s) failed").into());
    }
    Ok(())
}

fn apply_overrides(sc: &mut Scenario, dt: Option<f64>, t_end: Option<f64>, observer: Option<Observer>) -> CliResult<()> {
    if let Some(dt) = dt {
        sc.sim.dt = dt;
    }
    if let Some(t_end) = t_end {
        sc.sim.t_end = t_end;
    }
    if let Some(o) = observer {
        sc.observer = o.into();
    }
    sc.sim.validate()?;
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn cmd_simulate(
    paths: &[PathBuf],
    out: Option<PathBuf>,
    dt: Option<f64>,
    t_end: Option<f64>,
    observer: Option<Observer>,
    jobs: usize,
    no_plots: bool,
) -> CliResult<()> {
    let mut list = Vec::new();
    for path in paths {
        let mut scenario = Scenario::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
        apply_overrides(&mut scenario, dt, t_end, observer)?;
        let dir = match (&out, paths.len()) {
            (Some(o), 1) => o.clone(),
            (Some(o), _) => o.join(sanitize(&scenario.name)),
            (None, _) => scenario
                .output
                .dir
                .as_ref()
                .map(PathBuf::from)
                .unwrap_or_else(|| Path::new("out").join(sanitize(&scenario.name))),
        };
        let plots = !no_plots && scenario.output.plots;
        list.push(Job { scenario, out: dir, plots });
    }
    run_jobs(list, jobs)
}

fn cmd_replicate(out: &Path, dt: Option<f64>, t_end: Option<f64>, jobs: usize, no_plots: bool) -> CliResult<()> {
    let mut list = Vec::new();
    for observer in [Observer::Hybrid, Observer::Continuous] {
        let mut scenario = paper_preset();
        apply_overrides(&mut scenario, dt, t_end, Some(observer))?;
        let dir = out.join(scenario.observer.to_string());
        list.push(Job { scenario, out: dir, plots: !no_plots });
    }
    std::fs::create_dir_all(out)?;
    paper_preset().save(out.join("scenario.json"))?;
    run_jobs(list, jobs)
}

fn cmd_check_params(path: &Path) -> CliResult<bool> {
    let sc = Scenario::load(path)?;
    let report = check_params(&sc.params);
    println!("{report}");
    Ok(report.passed())
}

fn cmd_gradcheck(samples: usize, seed: u64) -> CliResult<bool> {
    let params = paper_preset().params;
    let a = gradient_audit(&params, samples, seed);
    println!("samples: {}", a.samples);
    println!("max relative error (rotation gradient): {:.3e}", a.max_rel_err_r);
    println!("max relative error (xi gradient):       {:.3e}", a.max_rel_err_xi);
    println!("max relative error: {:.3e}", a.max_rel_err());
    let ok = a.max_rel_err() < 1e-6;
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn cmd_check_bpe(path: &Path, window: f64, mu: Option<f64>, sample_dt: Option<f64>, starts: usize) -> CliResult<bool> {
    let sc = Scenario::load(path)?;
    let dt = sample_dt.unwrap_or(sc.sim.dt);
    if !(dt > 0.0) {
        return Err("sample step must be positive".into());
    }
    let steps = (sc.sim.t_end / dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|n| n as f64 * dt).collect();
    let bearings = times
        .iter()
        .map(|&t| inertial_bearings(&sc.topology, &sc.truth_positions(t)))
        .collect::<Result<Vec<_>, _>>()?;
    match mu {
        Some(mu) => {
            let r = check_bpe(&sc.topology, &times, &bearings, &BpeConfig { window, mu, starts })?;
            println!(
                "window {} s, mu {}: min eigenvalue {:.6e} (worst window starts at t = {}) over {} windows",
                r.window, r.mu, r.min_eigenvalue, r.worst_start, r.windows
            );
            println!("{}", if r.passed() { "PASS" } else { "FAIL" });
            Ok(r.passed())
        }
        None => match certify_bpe(&sc.topology, &times, &bearings, window)? {
            Some(r) => {
                println!("window {} s: largest passing mu {:.6e} (min eigenvalue {:.3e})", r.window, r.mu, r.min_eigenvalue);
                println!("PASS");
                Ok(true)
            }
            None => {
                println!("window {window} s: no mu > 0 passes");
                println!("FAIL");
                Ok(false)
            }
        },
    }
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Simulate { scenarios, out, dt, t_end, observer, jobs, no_plots } => {
            cmd_simulate(&scenarios, out, dt, t_end, observer, jobs, no_plots).map(|_| true)
        }
        Command::ReplicatePaper { out, dt, t_end, jobs, no_plots } => cmd_replicate(&out, dt, t_end, jobs, no_plots).map(|_| true),
        Command::CheckParams { scenario } => cmd_check_params(&scenario),
        Command::Gradcheck { samples, seed } => cmd_gradcheck(samples, seed),
        Command::CheckBpe { scenario, window, mu, sample_dt, starts } => cmd_check_bpe(&scenario, window, mu, sample_dt, starts),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
