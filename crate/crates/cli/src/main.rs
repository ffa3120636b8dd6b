//! Command-line runner for the refinement, optimal-control and
//! condition-number studies.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use c0wg::experiments::{run_biharmonic, run_condition, run_ocp, Method, PartitionSpec};
use c0wg::krylov::ConditionConfig;
use c0wg::measure::ProblemConfig;
use c0wg::vi::{InnerSolver, SolverConfig};
use c0wg::weak_ops::{element_field_csv, ControlRecovery};

#[derive(Parser, Debug)]
#[command(name = "c0wg", version, about = "C0 weak Galerkin experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// Worker threads. All kernels are sequential, so only 1 is accepted.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Fixed seed, no wall-clock data in any output file.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Seed for random probe vectors (default 7 with --deterministic,
    /// otherwise drawn from the OS).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Refinement study for the manufactured biharmonic problem.
    Biharmonic {
        /// Levels k (h = 2^-k), e.g. `3..6` or `3,4,5`.
        #[arg(long, value_parser = parse_levels, default_value = "3..6")]
        levels: Levels,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverOpts,
    },
    /// State-constrained optimal control with general tracking.
    Ocp {
        #[arg(long, value_enum, default_value_t = MethodArg::Wg)]
        method: MethodArg,
        /// Penalty parameter of the interior penalty method.
        #[arg(long, default_value_t = 100.0)]
        rho: f64,
        #[arg(long, value_parser = parse_levels, default_value = "1..3")]
        levels: Levels,
        /// How many levels finer than the finest one the reference is.
        #[arg(long, default_value_t = 2)]
        reference_offset: u32,
        /// Problem file; the built-in problem if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for state and control field dumps of the finest level.
        #[arg(long)]
        fields: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = RecoveryArg::Weak)]
        recovery: RecoveryArg,
        #[command(flatten)]
        solver: SolverOpts,
    },
    /// Condition numbers with and without the additive Schwarz preconditioner.
    Condnum {
        #[arg(long, value_parser = parse_levels, default_value = "2..5")]
        levels: Levels,
        /// Partition as `JXxJY:delta=Mh`; repeatable.
        #[arg(long = "partition", default_values = ["2x2:delta=1h", "2x2:delta=2h"])]
        partitions: Vec<PartitionSpec>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Largest dimension handled by the dense eigensolver.
        #[arg(long, default_value_t = 3000)]
        dense_limit: usize,
    },
}

#[derive(Args, Debug)]
struct SolverOpts {
    /// Inner linear solver: `direct` or `pcg`.
    #[arg(long, default_value = "direct")]
    inner_solver: InnerSolver,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

impl SolverOpts {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            inner_solver: self.inner_solver,
            ..SolverConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Wg,
    C0ip,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RecoveryArg {
    /// `-Δ_w y_h`
    Weak,
    /// elementwise `-Δ y_h`
    Element,
}

#[derive(Clone, Debug)]
struct Levels(Vec<u32>);

fn parse_levels(s: &str) -> Result<Levels, String> {
    let bad = || format!("expected a range like 3..6 or a list like 3,4,5, got {s:?}");
    let levels: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let r: RangeInclusive<u32> = a.trim().parse().map_err(|_| bad())?..=b.trim().parse().map_err(|_| bad())?;
        r.collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad());
    }
    Ok(Levels(levels))
}

fn emit(out: Option<&Path>, csv: &str) -> c0wg::Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, csv)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: Cli) -> c0wg::Result<()> {
    let g = &cli.global;
    if g.threads != 1 {
        return Err(c0wg::Error::Parse(format!(
            "--threads {} requested, but all kernels are sequential; use --threads 1",
            g.threads
        )));
    }
    let seed = match (g.seed, g.deterministic) {
        (Some(s), _) => s,
        (None, true) => 7,
        (None, false) => rand::random(),
    };
    let log = |msg: String| {
        if !g.quiet {
            eprintln!("{msg}");
        }
    };
    let start = Instant::now();
    match cli.command {
        Command::Biharmonic { levels, out, solver } => {
            let report = run_biharmonic(&levels.0, &solver.config())?;
            emit(out.as_deref(), &report.to_csv())?;
        }
        Command::Ocp {
            method,
            rho,
            levels,
            reference_offset,
            config,
            out,
            fields,
            recovery,
            solver,
        } => {
            let problem = match &config {
                Some(p) => ProblemConfig::read(p)?,
                None => ProblemConfig::default_problem(),
            };
            let method = match method {
                MethodArg::Wg => Method::WeakGalerkin,
                MethodArg::C0ip => Method::InteriorPenalty { rho },
            };
            let recovery = match recovery {
                RecoveryArg::Weak => ControlRecovery::WeakLaplacian,
                RecoveryArg::Element => ControlRecovery::ElementLaplacian,
            };
            let (report, finest) = run_ocp(&problem, &levels.0, method, reference_offset, recovery, &solver.config())?;
            for l in &report.levels {
                log(format!(
                    "h={}: {} PDAS iterations, {} active vertices",
                    l.h,
                    l.pdas_iterations,
                    l.active_upper + l.active_lower
                ));
            }
            emit(out.as_deref(), &report.to_csv())?;
            if let Some(dir) = fields {
                fs::create_dir_all(&dir)?;
                let state = finest.space.function(finest.solution.y.clone())?;
                fs::write(dir.join("state.csv"), state.to_csv())?;
                fs::write(dir.join("control.csv"), element_field_csv(finest.space.mesh(), &finest.control))?;
                fs::write(dir.join("solution.csv"), finest.solution.to_csv())?;
            }
        }
        Command::Condnum {
            levels,
            partitions,
            out,
            dense_limit,
        } => {
            let cfg = ConditionConfig {
                seed,
                dense_limit,
                ..ConditionConfig::default()
            };
            let report = run_condition(&levels.0, &partitions, &cfg)?;
            for line in &report.partition_reports {
                log(line.clone());
            }
            for l in &report.levels {
                for e in std::iter::once(&l.kappa_a).chain(l.kappa_ba.iter().flatten()) {
                    if !e.accurate {
                        log(format!("warning: h={}: Ritz values did not stagnate", l.h));
                    }
                }
            }
            emit(out.as_deref(), &report.to_csv())?;
        }
    }
    if !g.deterministic {
        log(format!("done in {:.2?}", start.elapsed()));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
