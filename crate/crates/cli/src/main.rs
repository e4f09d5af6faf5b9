use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pqlab::cover::{audit_covering, build_wb_covering, Covering, DEFAULT_LAMBDA};
use pqlab::experiments::{
    convergence_experiment, gap_probe, smooth_with_config, sweep, sweep_csv, ExperimentConfig, GapFlag, SweepSpec,
};
use pqlab::geometry::{build_grid, Domain, Field};
use pqlab::integrands::{classify_case, energy, hypothesis_audit, CaseFlags, Growth, Integrand, SamplePlan};
use pqlab::partition::{build_partition, default_bumps, BumpProfile};
use pqlab::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "pqlab", version, about = "Boundary-adapted smoothing and no-gap experiments for (p,q)-growth functionals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Polynomial,
    SmoothExp,
}

#[derive(Clone, Copy, ValueEnum)]
enum GrowthArg {
    Natural,
    Controlled,
    ControlledDuality,
}

#[derive(Subcommand)]
enum Command {
    /// Build a Whitney-Besicovitch covering of a polygonal domain.
    Cover {
        domain: PathBuf,
        #[arg(long)]
        r_min: f64,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
        /// Audit the covering on a probe grid of this spacing.
        #[arg(long)]
        audit_h: Option<f64>,
    },
    /// Build the partition of unity of a covering and write `sum psi_i`.
    Partition {
        covering: PathBuf,
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        h: f64,
        #[arg(long, value_enum, default_value_t = Profile::Polynomial)]
        profile: Profile,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth the config's test function at one `eps` and write `u_eps`.
    Smooth {
        config: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quadrature energy of a scalar field.
    Energy {
        field: PathBuf,
        integrand: PathBuf,
        /// Domain the field was sampled on; defaults to its bounding box.
        #[arg(long)]
        domain: Option<PathBuf>,
    },
    /// Sample the structural hypotheses of an integrand.
    Audit {
        integrand: PathBuf,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report the applicable cases for an exponent range.
    Classify {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        autonomous: bool,
        #[arg(long, value_enum, default_value_t = GrowthArg::Natural)]
        growth: GrowthArg,
        #[arg(long)]
        bounded_u: bool,
        #[arg(long)]
        doubling: bool,
        #[arg(long)]
        holder_x: bool,
        #[arg(long)]
        x_condition: bool,
        #[arg(long)]
        minimizer: bool,
    },
    /// Run the smoothing over the config's eps schedule.
    Converge {
        config: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Compare a singular competitor against discrete minima on refined meshes.
    Gap {
        config: PathBuf,
        #[arg(long)]
        out_json: PathBuf,
    },
    /// Classify a grid of exponents.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
    },
}

fn print_str(s: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{s}");
}

fn print(v: &serde_json::Value) {
    print_str(&serde_json::to_string_pretty(v).expect("json value"));
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn experiment_failed(msg: &str) -> Result<ExitCode> {
    Err(Error::Experiment(msg.to_string()))
}

fn load_sweep(path: &Path) -> Result<SweepSpec> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let inner = v.get("sweep").cloned().unwrap_or(v);
    Ok(serde_json::from_value(inner)?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Cover { domain, r_min, lambda, out, audit_h } => {
            let d = Domain::load(&domain)?;
            let c = build_wb_covering(&d, r_min, lambda)?;
            c.save(&out)?;
            let mut report = json!({
                "balls": c.len(),
                "delta": c.delta(),
                "M": c.multiplicity(),
                "eps_ov": c.eps_ov(),
            });
            if let Some(ph) = audit_h {
                let a = audit_covering(&c, &d, ph)?;
                report["audit"] = serde_json::to_value(&a)?;
                print(&report);
                if !a.passed() {
                    return experiment_failed("covering audit failed");
                }
            } else {
                print(&report);
            }
        }
        Command::Partition { covering, domain, h, profile, out } => {
            let d = Domain::load(&domain)?;
            let c = Covering::load(&covering)?;
            let grid = build_grid(&d, h, 0.0)?;
            let profile = match profile {
                Profile::Polynomial => BumpProfile::Polynomial,
                Profile::SmoothExp => BumpProfile::SmoothExp,
            };
            let bumps = default_bumps(&grid, &c, profile)?;
            let pou = build_partition(grid, &c, &bumps)?;
            pou.sum_field().save(&out)?;
            print(&json!({
                "sum_defect_on_covered": pou.sum_defect_on_covered(&c),
                "deriv_bound_c": pou.deriv_bound_c,
                "chain_constant": pou.chain_constant,
                "min_psi_on_ball": pou.min_psi_on_ball,
                "multiplicity": pou.multiplicity,
            }));
        }
        Command::Smooth { config, eps, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (s, g) = smooth_with_config(&cfg, eps)?;
            s.u_eps.save(&out)?;
            print(&json!({
                "eps": eps,
                "split_residual_l1": s.split_residual_l1(),
                "boundary_defect": s.boundary_defect(&g),
                "under_resolved": s.under_resolved,
                "balls": s.per_ball_radii.len(),
            }));
        }
        Command::Energy { field, integrand, domain } => {
            let d = domain.map(Domain::load).transpose()?;
            let u = Field::load(&field, d.as_ref())?;
            let f = Integrand::load(&integrand)?;
            print(&json!({ "energy": energy(&f, &u.gradient())? }));
        }
        Command::Audit { integrand, samples, seed } => {
            let f = Integrand::load(&integrand)?;
            let plan = SamplePlan { n_pairs: samples, seed, ..SamplePlan::default() };
            print_str(&hypothesis_audit(&f, &plan)?.to_json());
        }
        Command::Classify {
            p,
            q,
            n,
            m,
            alpha,
            autonomous,
            growth,
            bounded_u,
            doubling,
            holder_x,
            x_condition,
            minimizer,
        } => {
            let flags = CaseFlags {
                autonomous,
                growth: match growth {
                    GrowthArg::Natural => Growth::Natural,
                    GrowthArg::Controlled => Growth::Controlled,
                    GrowthArg::ControlledDuality => Growth::ControlledDuality,
                },
                bounded_u,
                doubling,
                holder_x,
                x_condition,
                is_minimizer: minimizer,
            };
            print(&serde_json::to_value(classify_case(p, q, n, m, alpha, flags)?)?);
        }
        Command::Converge { config, out_csv } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = convergence_experiment(&cfg)?;
            write(&out_csv, &r.csv())?;
            let mut summary = serde_json::to_value(&r)?;
            summary.as_object_mut().expect("object").remove("rows");
            print(&summary);
            if !r.passed() {
                return experiment_failed("convergence invariants violated");
            }
        }
        Command::Gap { config, out_json } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = gap_probe(&cfg)?;
            write(&out_json, &r.to_json())?;
            print(&json!({ "flag": r.flag, "gap_estimate": r.gap_estimate, "singular_energy": r.singular_energy }));
            if r.flag == GapFlag::Inconclusive {
                return experiment_failed("gap probe inconclusive");
            }
        }
        Command::Sweep { config, out_csv } => {
            let spec = load_sweep(&config)?;
            let rows = sweep(&spec)?;
            write(&out_csv, &sweep_csv(&rows))?;
            print(&json!({ "rows": rows.len() }));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
