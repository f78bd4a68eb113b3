use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use antipgd::harness::{
    generate, oracle_table, plot_csv, run_manifest, sweep_manifest, write_oracle_csv, Manifest,
    OracleParams, PlotSpec, RunSummary,
};
use antipgd::oracle::RhoSpec;
use antipgd::verify::{report, Verifier, CRITERIA};
use clap::{Args, Parser, Subcommand};

const EXIT_VALIDATION: u8 = 1;
const EXIT_ACCEPTANCE: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "antipgd", version, about = "Perturbed and anticorrelated gradient descent experiments")]
struct Cli {
    /// Worker threads for runs and Monte Carlo estimates.
    #[arg(long, global = true, env = "ANTIPGD_WORKERS")]
    workers: Option<usize>,

    /// Overrides the manifest base seed (or the oracle/verify seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    manifest: PathBuf,

    /// Output directory; defaults to the manifest's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the manifest's dataset files and metadata.
    Generate(ManifestArgs),
    /// Run every configuration and seed in a manifest.
    Run(ManifestArgs),
    /// Run the manifest's sweep grid and write the aggregate table.
    Sweep(ManifestArgs),
    /// Closed-form and Monte Carlo second moments of the linear recursion.
    Oracle(OracleArgs),
    /// Run the acceptance suite.
    Verify {
        /// Run only these criteria (1-based ids).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
    /// Plot columns of an aggregate or trajectory CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct OracleArgs {
    /// Take the parameters from the manifest's `oracle` section.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    /// Draw rho uniformly on [0, 1] at every step instead.
    #[arg(long)]
    stochastic: bool,
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma2: f64,
    #[arg(long, default_value_t = 500)]
    horizon: usize,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
}

#[derive(Args)]
struct PlotArgs {
    /// Use the plots listed in the manifest, reading from its output directory.
    #[arg(long, conflicts_with = "csv")]
    manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    csv: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "train_loss")]
    metrics: Vec<String>,
    #[arg(long, default_value = "plot")]
    name: String,
    #[arg(long)]
    log_y: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn load_manifest(path: &Path, seed: Option<u64>) -> anyhow::Result<Manifest> {
    let mut m = Manifest::load(path)?;
    if let Some(s) = seed {
        m.seeds.base_seed = s;
    }
    Ok(m)
}

fn print_summary(summary: &RunSummary) {
    let diverged = summary.statuses.iter().filter(|s| s.diverged_at.is_some()).count();
    println!(
        "{} runs written to {} ({} diverged)",
        summary.statuses.len(),
        summary.out_dir.display(),
        diverged
    );
    for s in summary.statuses.iter().filter(|s| s.error.is_some()) {
        eprintln!("{} seed {}: {}", s.config, s.seed_index, s.error.as_deref().unwrap_or(""));
    }
    for p in &summary.plots {
        println!("plot {}", p.display());
    }
}

fn execute(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Generate(a) => {
            let m = load_manifest(&a.manifest, cli.seed)?;
            match generate(&m, a.out.as_deref())? {
                Some(dir) => println!("dataset written to {}", dir.display()),
                None => println!("landscape `{}` is analytic; nothing to generate", m.name),
            }
            Ok(0)
        }
        Command::Run(a) => {
            let m = load_manifest(&a.manifest, cli.seed)?;
            let summary = run_manifest(&m, a.out.as_deref())?;
            print_summary(&summary);
            Ok(if summary.any_failed() {
                EXIT_VALIDATION
            } else if summary.any_diverged() {
                EXIT_DIVERGENCE
            } else {
                0
            })
        }
        Command::Sweep(a) => {
            let m = load_manifest(&a.manifest, cli.seed)?;
            let summary = sweep_manifest(&m, a.out.as_deref())?;
            print_summary(&summary);
            println!("aggregate {}", summary.out_dir.join("aggregate.csv").display());
            Ok(0)
        }
        Command::Oracle(a) => {
            let mut params = match &a.manifest {
                Some(path) => Manifest::load(path)?
                    .oracle
                    .context("manifest has no `oracle` section")?,
                None => OracleParams {
                    rho: if a.stochastic {
                        RhoSpec::Stochastic { lo: 0.0, hi: 1.0 }
                    } else {
                        RhoSpec::Constant(a.rho)
                    },
                    d: a.d,
                    sigma2: a.sigma2,
                    horizon: a.horizon,
                    samples: a.samples,
                    ..OracleParams::default()
                },
            };
            if let Some(s) = cli.seed {
                params.seed = s;
            }
            let table = oracle_table(&params)?;
            let path = a.out.join("oracle.csv");
            write_oracle_csv(&path, &table)?;
            let last = table.final_row();
            println!(
                "k={}: anti closed={} mc={:.6}; uncorr closed={} mc={:.6}",
                last.k,
                fmt_opt(last.closed_form_anti),
                last.mc_anti.unwrap_or(f64::NAN),
                fmt_opt(last.closed_form_uncorr),
                last.mc_uncorr.unwrap_or(f64::NAN),
            );
            if let Some(extra) = table.extra_row() {
                println!(
                    "{}: anti={} uncorr={}",
                    extra.k,
                    fmt_opt(extra.closed_form_anti),
                    fmt_opt(extra.closed_form_uncorr)
                );
            }
            println!("oracle table written to {}", path.display());
            Ok(0)
        }
        Command::Verify { only } => {
            if let Some(bad) = only.iter().find(|&&id| id == 0 || id > CRITERIA) {
                bail!("criterion id {bad} is outside 1..={CRITERIA}");
            }
            let v = Verifier::new(cli.seed.unwrap_or(0));
            let ids: Vec<usize> = if only.is_empty() {
                (1..=CRITERIA).collect()
            } else {
                only
            };
            let mut results = Vec::new();
            for id in ids {
                let r = v.run(id);
                println!("{r}");
                results.push(r);
            }
            println!("{}", report(&results).lines().last().unwrap_or_default());
            Ok(if results.iter().all(|r| r.passed) {
                0
            } else {
                EXIT_ACCEPTANCE
            })
        }
        Command::Plot(a) => {
            let paths = match (&a.manifest, &a.csv) {
                (Some(path), _) => {
                    let m = Manifest::load(path)?;
                    let out_dir = m.output_dir(None);
                    let mut all = Vec::new();
                    for spec in &m.plots {
                        let source = out_dir.join(spec.source.as_deref().unwrap_or(Path::new("aggregate.csv")));
                        all.extend(plot_csv(&source, spec, &a.out)?);
                    }
                    all
                }
                (None, Some(csv)) => {
                    let spec = PlotSpec {
                        name: a.name.clone(),
                        metrics: a.metrics.clone(),
                        log_y: a.log_y,
                        configs: Vec::new(),
                        source: None,
                    };
                    plot_csv(csv, &spec, &a.out)?
                }
                (None, None) => bail!("either --manifest or --csv is required"),
            };
            for p in paths {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} workers: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
