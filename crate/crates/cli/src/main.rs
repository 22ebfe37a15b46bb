use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use czbench::constants::ConstantReport;
use czbench::geometry::{decompose_rectangle, FamilySpec};
use czbench::harness::{constant_table, run_scenario, Context, Scenario, SuiteName};
use czbench::kernels::{KernelConfig, KernelName};
use czbench::measures::{DiscreteMeasure, MeasureSpec};
use czbench::CzError;

/// Two-weight testing constants of truncated Calderón–Zygmund operators on
/// exact discrete measures.
#[derive(Parser)]
#[command(name = "czbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split [0,1)^{n-1} x [0,t) into dyadic cubes plus a slab thinner than eps.
    Decompose {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        json: bool,
    },
    /// Write a generated measure in the text format.
    GenMeasure {
        #[arg(long)]
        kind: String,
        /// Comma-separated key=value pairs, e.g. `a=0.3`.
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Lattice depth L.
        #[arg(long, default_value_t = 8)]
        depth: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Constant table for a pair of measure files.
    Constants {
        #[arg(long)]
        sigma: PathBuf,
        #[arg(long)]
        omega: PathBuf,
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        kappa: u32,
        /// Finest cube level of the dyadic family.
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite on a scenario file (TOML or JSON).
    Verify {
        /// factorial-chain, tp-control, full-control, t1, cancellation or all.
        suite: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status for library errors: bad input is a configuration error (2),
/// a numerical breakdown counts as a failed run (1).
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<CzError>() {
        Some(CzError::NonFinite(_) | CzError::ZeroMass(_) | CzError::DiagonalPoint | CzError::NotScaleInvariant(_)) => 1,
        _ => 2,
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("CZBENCH_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| CzError::Config {
            path: "CZBENCH_THREADS".into(),
            message: format!("`{v}` is not a thread count"),
        })?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn decompose(n: usize, t: f64, eps: f64, json: bool) -> anyhow::Result<u8> {
    let d = decompose_rectangle(n, t, eps)?;
    d.verify()?;
    if json {
        println!("{}", serde_json::to_string_pretty(&d)?);
    } else {
        println!(
            "n={} t={} eps={} m={} t*={}/2^{} cubes={} bound={}",
            d.n,
            d.t,
            eps,
            d.m,
            d.t_star.num,
            d.t_star.log2_den,
            d.count(),
            d.count_bound()
        );
        for c in &d.cubes {
            let corner: Vec<String> = c.corner.iter().map(i64::to_string).collect();
            println!("{} {}", c.level, corner.join(","));
        }
    }
    Ok(0)
}

fn gen_measure(kind: &str, params: &str, seed: u64, n: usize, depth: u32, out: &Path) -> anyhow::Result<u8> {
    let spec = MeasureSpec::from_kind_params(kind, params)?;
    let mu = spec.build(n, depth, seed)?;
    write(out, &mu.to_text())?;
    Ok(0)
}

fn constants(
    sigma: &Path,
    omega: &Path,
    kernel: &str,
    alpha: f64,
    kappa: u32,
    depth: u32,
    out: &Path,
) -> anyhow::Result<u8> {
    let read = |p: &Path| -> anyhow::Result<DiscreteMeasure> {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(DiscreteMeasure::from_text(&text)?)
    };
    let s = read(sigma)?;
    let w = read(omega)?;
    if (s.dim(), s.depth()) != (w.dim(), w.depth()) {
        return Err(CzError::Config {
            path: "omega".into(),
            message: format!("n={}, L={} does not match sigma (n={}, L={})", w.dim(), w.depth(), s.dim(), s.depth()),
        }
        .into());
    }
    let name: KernelName = kernel.parse()?;
    let scenario = Scenario {
        name: "constants".into(),
        n: s.dim(),
        depth: s.depth(),
        seed: 0,
        sigma: MeasureSpec::File { path: sigma.display().to_string() },
        omega: MeasureSpec::File { path: omega.display().to_string() },
        kernel: KernelConfig { name, alpha },
        window: None,
        family: FamilySpec::dyadic(depth),
        kappa,
        eps: vec![0.5],
        verify: Vec::new(),
        tolerances: Default::default(),
        cancellation: Default::default(),
        bict_rounds: 8,
        doubling_cap: 64.0,
        a_infinity: Default::default(),
        memory_budget: czbench::operators::DEFAULT_BUDGET,
        norm_tol: 1e-10,
        refine: false,
        chain_degree: 3,
    };
    scenario.validate()?;
    let hash = scenario.config_hash()?;
    let ctx = Context::new(&scenario)?;
    let table: Vec<ConstantReport> = constant_table(&ctx)?.into_iter().map(|c| c.with_config_hash(&hash)).collect();
    write(out, &(serde_json::to_string_pretty(&table)? + "\n"))?;
    Ok(0)
}

fn verify(suite: &str, config: &Path, csv: Option<&Path>, out: Option<&Path>) -> anyhow::Result<u8> {
    let suite: SuiteName = suite.parse().map_err(|e: CzError| CzError::Config { path: "suite".into(), message: e.to_string() })?;
    let mut scenario = Scenario::from_path(config)?;
    scenario.verify = vec![suite];
    let report = run_scenario(&scenario)?;
    let json = report.to_json()?;
    match out {
        Some(p) => write(p, &json)?,
        None => print!("{json}"),
    }
    if let Some(p) = csv {
        write(p, &report.to_csv()?)?;
    }
    let count = |s| report.verifications.iter().filter(|v| v.status == s).count();
    use czbench::harness::Status;
    eprintln!(
        "{}: {} passed, {} failed, {} inapplicable",
        scenario.name,
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Inapplicable)
    );
    Ok(report.exit_code() as u8)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    init_threads()?;
    match cli.command {
        Command::Decompose { n, t, eps, json } => decompose(n, t, eps, json),
        Command::GenMeasure { kind, params, seed, n, depth, out } => gen_measure(&kind, &params, seed, n, depth, &out),
        Command::Constants { sigma, omega, kernel, alpha, kappa, depth, out } => {
            constants(&sigma, &omega, &kernel, alpha, kappa, depth, &out)
        }
        Command::Verify { suite, config, csv, out } => verify(&suite, &config, csv.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
