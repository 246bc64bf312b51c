use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abrule::harness::{
    dilation_check, minimize_product, operator_check, parse_axis, resolve_output_dir, run_experiment_full, spectrum,
    sweep, write_experiment, Check, ExperimentConfig, SweepAxis, MAX_IMAGINARY_PART,
};
use clap::{Parser, Subcommand};

/// Detection-time experiments with an absorbing boundary rule.
///
/// Exit status is 0 exactly when every asserted bound and tolerance passes.
#[derive(Parser)]
#[command(name = "abrule", version)]
struct Cli {
    /// Output directory; overrides the config and the ABRULE_OUTPUT_DIR variable.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run with its refined pair; writes report.json, detection.csv, plots.
    Simulate { config: PathBuf },
    /// Cartesian product over one or more axes, e.g. `--axis kappa=0.1,1,10`.
    Sweep {
        config: PathBuf,
        #[arg(long = "axis", required = true, value_parser = parse_axis_arg)]
        axes: Vec<SweepAxis>,
    },
    /// Dense operator identities, plus dilation checks.
    OperatorCheck {
        config: PathBuf,
        /// Skip the dilation part.
        #[arg(long)]
        no_dilation: bool,
    },
    /// Eigenvalues of the dense generator.
    Spectrum { config: PathBuf },
    /// Search the config's `search` box for the smallest product.
    Minimize {
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        /// Defaults to the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_axis_arg(s: &str) -> Result<SweepAxis, String> {
    parse_axis(s).map_err(|e| e.to_string())
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn load(path: &Path) -> AnyResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(ExperimentConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn output_dir(cli: &Option<PathBuf>, config: &ExperimentConfig) -> Option<PathBuf> {
    cli.clone().or_else(|| resolve_output_dir(config))
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        let op = match c.relation {
            abrule::harness::Relation::Below => "<",
            abrule::harness::Relation::AtLeast => ">=",
        };
        println!(
            "  {:<4} {:<22} {:>14.6e} {op:>2} {:.3e}",
            if c.pass { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
}

fn write_json<T: serde::Serialize>(dir: &Option<PathBuf>, name: &str, value: &T) -> AnyResult<()> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    }
    Ok(())
}

fn simulate(cli: &Cli, path: &Path) -> AnyResult<bool> {
    let config = load(path)?;
    let experiment = run_experiment_full(&config)?;
    let r = &experiment.report;
    let u = &r.uncertainty;
    println!("config {}", r.config_hash);
    println!(
        "p_hat {:.9}  sigma_T {:.9e}  sigma_E {:.9e}  product {:.9e}  bound {:.6}  margin {:.6e}",
        u.p_hat, u.sigma_t, u.sigma_e, u.product, u.bound, u.margin
    );
    for e in &r.energy {
        println!("  sigma_E[{:?}] = {:.9e}", e.route, e.sigma_e);
    }
    if let Some(d) = r.delta_num {
        println!("delta_num {d:.3e}");
    }
    print_checks(&r.checks);
    if let Some(dir) = output_dir(&cli.output_dir, &config) {
        for f in write_experiment(&experiment, &dir)? {
            println!("wrote {}", f.display());
        }
    }
    Ok(r.all_pass())
}

fn run_sweep(cli: &Cli, path: &Path, axes: &[SweepAxis]) -> AnyResult<bool> {
    let config = load(path)?;
    let table = sweep(&config, axes)?;
    let dir = output_dir(&cli.output_dir, &config);
    match &dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let file = dir.join("sweep.csv");
            table.write_csv(fs::File::create(&file)?)?;
            println!("wrote {}", file.display());
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    eprintln!("{} rows, {} failed", table.rows.len(), table.failures());
    Ok(table.all_pass())
}

fn run_operator_check(cli: &Cli, path: &Path, no_dilation: bool) -> AnyResult<bool> {
    let config = load(path)?;
    let dir = output_dir(&cli.output_dir, &config);
    let ops = operator_check(&config)?;
    println!("operator identities, dim {}", ops.dim);
    print_checks(&ops.checks);
    write_json(&dir, "operator_check.json", &ops)?;
    let mut ok = ops.all_pass();
    if !no_dilation {
        let dil = dilation_check(&config)?;
        println!("dilation, Kennard product {:.6e}", dil.stats.kennard_product);
        print_checks(&dil.checks);
        write_json(&dir, "dilation_check.json", &dil)?;
        ok &= dil.all_pass();
    }
    Ok(ok)
}

fn run_spectrum(cli: &Cli, path: &Path) -> AnyResult<bool> {
    let config = load(path)?;
    let s = spectrum(&config)?;
    println!(
        "{} eigenvalues, max Im {:.6e}, gamma_min {:.6e}, ||[H, H*]|| {:.6e}",
        s.eigenvalues.len(),
        s.max_im,
        s.gamma_min,
        s.commutator_norm
    );
    if let Some(dir) = output_dir(&cli.output_dir, &config) {
        fs::create_dir_all(&dir)?;
        let file = dir.join("spectrum.csv");
        let mut w = csv::Writer::from_path(&file)?;
        w.write_record(["re", "im"])?;
        for z in &s.eigenvalues {
            w.write_record([format!("{:e}", z.re), format!("{:e}", z.im)])?;
        }
        w.flush()?;
        println!("wrote {}", file.display());
    }
    Ok(s.max_im <= MAX_IMAGINARY_PART)
}

fn run_minimize(cli: &Cli, path: &Path, budget: usize, seed: Option<u64>) -> AnyResult<bool> {
    let config = load(path)?;
    let space = config.search.ok_or("config has no `search` box")?;
    let outcome = minimize_product(&config, &space, budget, seed.unwrap_or(config.seed))?;
    let [x0, p0, sx, k] = outcome.best;
    println!("best x0 {x0:.6} p0 {p0:.6} sigma_x {sx:.6} kappa {k:.6}");
    println!(
        "best product {:.9e}  bound {:.6}  delta_num {:.3e}  evaluations {}{}",
        outcome.best_product,
        outcome.best_bound,
        outcome.delta_num,
        outcome.evaluations,
        if outcome.budget_exhausted { "  (budget exhausted)" } else { "" }
    );
    println!("floor {}", if outcome.floor_holds { "holds" } else { "VIOLATED" });
    write_json(&output_dir(&cli.output_dir, &config), "search.json", &outcome)?;
    Ok(outcome.floor_holds)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config } => simulate(&cli, config),
        Command::Sweep { config, axes } => run_sweep(&cli, config, axes),
        Command::OperatorCheck { config, no_dilation } => run_operator_check(&cli, config, *no_dilation),
        Command::Spectrum { config } => run_spectrum(&cli, config),
        Command::Minimize { config, budget, seed } => run_minimize(&cli, config, *budget, *seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
