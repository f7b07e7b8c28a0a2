use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbmlab::cli::{self, RunConfig, SelftestOptions};
use fbmlab::Error;

#[derive(Parser)]
#[command(name = "fbmlab", version, about = "fBm Hilbert-space inner products, f_T norm asymptotics and Berry-Esseen Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// `key = value` config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    /// comma-separated horizons
    #[arg(long)]
    t_grid: Option<String>,
    /// grid step, e.g. 0.0625 or 1/16
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    n_reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    tol_abs: Option<String>,
    #[arg(long)]
    tol_rel: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    cache_dir: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let pairs = [
            ("h", &self.h),
            ("theta", &self.theta),
            ("sigma", &self.sigma),
            ("t_grid", &self.t_grid),
            ("delta", &self.delta),
            ("n_reps", &self.n_reps),
            ("seed", &self.seed),
            ("tol_abs", &self.tol_abs),
            ("tol_rel", &self.tol_rel),
            ("threads", &self.threads),
            ("cache_dir", &self.cache_dir),
            ("out", &self.out),
        ];
        pairs.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect()
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Inner product of two functions given in the term grammar
    Innerprod {
        #[arg(long)]
        f: String,
        #[arg(long)]
        g: String,
        /// jolis, window, disjoint, fourier, grid, a comma list, or all
        #[arg(long, default_value = "all")]
        method: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Norm of the exponential kernel over the horizon grid
    Ftnorm {
        /// add a step-function grid oracle column
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Linear asymptote of the norm and its residuals
    Asymptote {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Four-fold integrals with fitted and closed-form slopes
    Appendix {
        /// comma list of ids or all
        #[arg(long, default_value = "all")]
        ids: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Slope identity check
    Identity {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Kolmogorov distances of the normalised estimators
    BeRate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fast consistency checks
    Selftest {
        #[arg(long, hide = true, default_value_t = 1.0)]
        sigma_h_factor: f64,
        #[arg(long, hide = true, default_value_t = 1.0)]
        tol_factor: f64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    RunConfig::load(args.config.as_deref(), &args.overrides())
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.cmd {
        Cmd::Innerprod { f, g, method, cfg } => {
            let r = cli::cmd_innerprod(&config(&cfg)?, &f, &g, &method)?;
            print!("{}", r.render());
        }
        Cmd::Ftnorm { oracle, cfg } => {
            let c = config(&cfg)?;
            let env = cli::cmd_ftnorm(&c, oracle)?;
            for r in &env.payload.rows {
                match r.breakdown {
                    Some(b) => println!("T = {:>8}  norm = {:.10}  residual = {:+.6e}", r.t, b.total, r.residual),
                    None => println!("T = {:>8}  {}", r.t, r.status),
                }
            }
            println!("wrote {}", c.out.join("ftnorm.csv").display());
        }
        Cmd::Asymptote { cfg } => {
            let c = config(&cfg)?;
            let env = cli::cmd_asymptote(&c)?;
            let r = &env.payload;
            println!("fitted slope {:.10}  target {:.10}  rel_err {:.2e}", r.fit.slope, r.target_slope, r.slope_rel_err);
            println!("wrote {}", c.out.join("asymptote.json").display());
        }
        Cmd::Appendix { ids, cfg } => {
            let c = config(&cfg)?;
            let env = cli::cmd_appendix(&c, &cli::parse_ids(&ids)?)?;
            let mut last = String::new();
            for r in &env.payload.rows {
                if r.id != last {
                    println!("{:<7} fitted {:.8}  closed {:.8}  rel_err {:.2e}", r.id, r.fitted_slope, r.closed_slope, r.rel_err);
                    last = r.id.clone();
                }
            }
            println!("wrote {}", c.out.join("appendix.csv").display());
        }
        Cmd::Identity { cfg } => {
            let c = config(&cfg)?;
            let p = cli::cmd_identity(&c)?.payload;
            println!("H = {}  lhs = {:.12}  rhs = {:.12}  rel_err = {:.2e}", p.h, p.lhs, p.rhs, p.rel_err);
        }
        Cmd::BeRate { cfg } => {
            let c = config(&cfg)?;
            let env = cli::cmd_be_rate(&c)?;
            let s = &env.payload.summary;
            for r in &s.rows {
                println!("T = {:>6}  dk_lse = {:.4}  dk_mm = {:.4}  var_lse = {:.3}", r.t, r.dk_lse, r.dk_mm, r.var_norm_lse);
            }
            for (t, why) in &s.failures {
                println!("T = {t:>6}  failed: {why}");
            }
            println!("beta_lse = {:.3} ({})  mc_floor = {:.4}", s.beta_lse.beta, env.payload.beta_lse_flag, s.mc_floor);
            println!("wrote {}", c.out.join("be.csv").display());
        }
        Cmd::Selftest { sigma_h_factor, tol_factor, cfg } => {
            let c = config(&cfg)?;
            let opts = SelftestOptions { sigma_h_factor, tol_factor, ..SelftestOptions::default() };
            let rep = cli::run_selftest(&c, &opts)?;
            print!("{}", rep.render());
            if !rep.passed() {
                return Ok(cli::EXIT_ACCEPTANCE);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
