//! `drmtest`: fit, test, power, sample-size, simulation and density commands
//! for multiple samples under the density ratio model.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use drmtest::del::{fit_mele, FitOptions, FitResult};
use drmtest::estimate::{baseline_weights, linspace, write_grid_csv};
use drmtest::family::{BaselineSpec, Family};
use drmtest::hypothesis::parse_hypothesis;
use drmtest::infer::{delr_test, permutation_test, wald_test, TestResult};
use drmtest::io::read_samples_path;
use drmtest::model::{validate_dataset, BasisFn, BasisSpec, ConstraintSpec, MultiSample, Theta};
use drmtest::power::{analyze_power, sample_size, LocalAlternative};
use drmtest::sim::{
    builtin_config, builtin_names, run_local_alternative_study, run_null_study, run_power_study, write_power_csv,
    write_qq_csv, PowerRow, Scenario, StudyConfig, DEFAULT_SEED,
};
use drmtest::Error;

const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "drmtest",
    version,
    about = "Empirical-likelihood tests for multiple samples under the density ratio model"
)]
struct Cli {
    /// Worker threads for parallel work (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum empirical likelihood estimate of the DRM parameters.
    Fit(DataArgs),
    /// DELR, Wald or permutation test of a hypothesis on beta.
    Test(TestArgs),
    /// Asymptotic local power of the DELR test.
    Power(PowerArgs),
    /// Smallest total sample size reaching a target power.
    Samplesize(SampleSizeArgs),
    /// Run a simulation study from a JSON config or a built-in design.
    Simulate(SimulateArgs),
    /// EL-weighted kernel density (or fitted CDF) of one population.
    Density(DensityArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV with header `sample,value`; sample 0 is the baseline.
    #[arg(long)]
    input: PathBuf,
    /// Basis terms, e.g. `x,x2` or `logx,x`.
    #[arg(long)]
    basis: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TestMethod {
    Delr,
    Wald,
    Perm,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// e.g. `equal:all`, `equal:1,2;3,4`, `fix:1=6,-1.5`, `lincomb:2*b1-b2=0`.
    #[arg(long, default_value = "equal:all")]
    hypothesis: String,
    #[arg(long, value_enum, default_value = "delr")]
    method: TestMethod,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// Permutation replicates.
    #[arg(long, default_value_t = 999)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Test every pair of samples for equality instead of `--hypothesis`.
    #[arg(long)]
    pairwise: bool,
    /// Report raw pairwise p-values without the Bonferroni adjustment.
    #[arg(long, requires = "pairwise")]
    no_adjust: bool,
}

#[derive(Args)]
struct DesignArgs {
    /// Baseline distribution, e.g. `gamma:2,1` (shape, rate) or `normal:0,1`.
    #[arg(long)]
    f0: String,
    /// Sample proportions rho_0, ..., rho_m.
    #[arg(long)]
    rho: String,
    #[arg(long)]
    basis: String,
    /// beta_1*, ..., beta_m* separated by `;`, e.g. `-1,1;-2,2`.
    #[arg(long, allow_hyphen_values = true)]
    beta_star: String,
    #[arg(long)]
    hypothesis: String,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
}

#[derive(Args)]
struct PowerArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Drifts c_1, ..., c_m separated by `;` (beta_k = beta_k* + c_k / sqrt(n_k)).
    #[arg(long, allow_hyphen_values = true)]
    drift: String,
}

#[derive(Args)]
struct SampleSizeArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Fixed parameter shifts beta_k - beta_k* separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    shift: String,
    #[arg(long, default_value_t = 0.8)]
    target: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study config (JSON).
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    config: Option<PathBuf>,
    /// A built-in design: null-normal, table3-gamma, ... (`--builtin list` shows all).
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write QQ pairs (null and local-alternative studies) to this CSV.
    #[arg(long)]
    qq_out: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Population index k (0 is the baseline).
    #[arg(long, default_value_t = 0)]
    sample: usize,
    /// Kernel bandwidth (default: Silverman's rule on the weighted sample).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
    /// Output the fitted CDF instead of the density.
    #[arg(long)]
    cdf: bool,
}

/// A failed command: message plus exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            // a malformed hypothesis string is a usage error
            Error::Parse { .. } => 2,
            _ if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = std::result::Result<Vec<u8>, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&std::env::var("DRMTEST_LOG").unwrap_or_else(|_| "warn".into()))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure the thread pool: {e}");
        }
    }
    let format = cli.format;
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, format),
        Command::Test(a) => cmd_test(a, format),
        Command::Power(a) => cmd_power(a, format),
        Command::Samplesize(a) => cmd_samplesize(a, format),
        Command::Simulate(a) => cmd_simulate(a, format),
        Command::Density(a) => cmd_density(a, format),
    };
    // machine output is only written once the command has succeeded
    let written = result.and_then(|bytes| emit(cli.out.as_deref(), &bytes).map_err(Failure::from));
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> io::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()
        }
    }
}

/// JSON document, or a one-row CSV of its scalar fields.
fn render(value: Value, format: Option<Format>) -> CmdResult {
    match format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&value).map_err(Error::from)?;
            s.push('\n');
            Ok(s.into_bytes())
        }
        Format::Csv => {
            let obj = value.as_object().expect("command output is an object");
            let scalars: Vec<(&String, &Value)> = obj
                .iter()
                .filter(|(_, v)| v.is_number() || v.is_string() || v.is_boolean())
                .collect();
            let header: Vec<&str> = scalars.iter().map(|(k, _)| k.as_str()).collect();
            let row: Vec<String> = scalars
                .iter()
                .map(|(_, v)| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            Ok(format!("{}\n{}\n", header.join(","), row.join(",")).into_bytes())
        }
    }
}

fn load(args: &DataArgs) -> std::result::Result<(MultiSample, BasisFn), Failure> {
    let spec = BasisSpec::parse(&args.basis)?;
    let data = read_samples_path(&args.input).map_err(|e| Failure {
        code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA },
        message: format!("{}: {e}", args.input.display()),
    })?;
    let report = validate_dataset(data.samples(), &spec);
    if !report.is_ok() {
        let mut lines: Vec<String> = report.violations.iter().take(5).map(|v| v.to_string()).collect();
        if report.violations.len() > 5 {
            lines.push(format!("... and {} more", report.violations.len() - 5));
        }
        return Err(Failure {
            code: EXIT_DATA,
            message: lines.join("; "),
        });
    }
    Ok((data, BasisFn::parse(&args.basis)?))
}

fn theta_json(theta: &Theta) -> Value {
    let d = theta.d();
    json!({
        "alpha": theta.alpha,
        "beta": (1..=theta.m()).map(|k| theta.beta_block(k).to_vec()).collect::<Vec<_>>(),
        "d": d,
    })
}

fn fit_json(fit: &FitResult) -> Value {
    json!({
        "theta": theta_json(&fit.theta_hat),
        "del_value": fit.del_value,
        "iterations": fit.iterations,
        "gradient_norm": fit.gradient_norm,
        "converged": fit.converged,
    })
}

fn cmd_fit(args: &DataArgs, format: Option<Format>) -> CmdResult {
    let (data, basis) = load(args)?;
    let fit = fit_mele(&data, &basis, &FitOptions::default())?;
    let wb = baseline_weights(&fit, &data, &basis)?;
    let out = json!({
        "theta_hat": theta_json(&fit.theta_hat),
        "del_value": fit.del_value,
        "iterations": fit.iterations,
        "gradient_norm": fit.gradient_norm,
        "converged": fit.converged,
        "sizes": data.sizes(),
        "lagrange_residuals": wb.lagrange_residuals(),
    });
    render(out, format)
}

fn check_level(level: f64) -> std::result::Result<(), Failure> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--level must lie in (0, 1), got {level}")))
    }
}

fn run_test(
    method: TestMethod,
    data: &MultiSample,
    basis: &BasisFn,
    c: &ConstraintSpec,
    reps: usize,
    seed: u64,
) -> drmtest::Result<TestResult> {
    match method {
        TestMethod::Delr => delr_test(data, basis, c),
        TestMethod::Wald => wald_test(data, basis, c),
        TestMethod::Perm => permutation_test(data, basis, c, reps, seed),
    }
}

fn cmd_test(args: &TestArgs, format: Option<Format>) -> CmdResult {
    check_level(args.level)?;
    let (data, basis) = load(&args.data)?;
    if args.pairwise {
        return pairwise(args, &data, &basis, format);
    }
    let c = parse_hypothesis(&args.hypothesis, data.m(), basis.dim())?;
    let r = run_test(args.method, &data, &basis, &c, args.reps, args.seed)?;
    let theta_hat = r.fits.first().map(|f| theta_json(&f.theta_hat)).unwrap_or(Value::Null);
    let mut diagnostics = json!({
        "method": r.method.to_string(),
        "hypothesis": args.hypothesis,
        "level": args.level,
        "reject": r.p_value <= args.level,
        "sizes": data.sizes(),
        "fits": r.fits.iter().map(fit_json).collect::<Vec<_>>(),
    });
    if args.method == TestMethod::Perm {
        diagnostics["reps"] = json!(args.reps);
        diagnostics["seed"] = json!(args.seed);
    }
    let out = json!({
        "statistic": r.statistic,
        "df": r.df,
        "p_value": r.p_value,
        "theta_hat": theta_hat,
        "diagnostics": diagnostics,
    });
    render(out, format)
}

fn pairwise(args: &TestArgs, data: &MultiSample, basis: &BasisFn, format: Option<Format>) -> CmdResult {
    let k = data.n_samples();
    let n_pairs = k * (k - 1) / 2;
    let c = ConstraintSpec::all_equal(1, basis.dim());
    let mut raw = vec![vec![1.0; k]; k];
    let mut adjusted = vec![vec![1.0; k]; k];
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..k {
        for j in i + 1..k {
            let sub = data.select(&[i, j])?;
            let r = run_test(args.method, &sub, basis, &c, args.reps, args.seed)?;
            let adj = if args.no_adjust {
                r.p_value
            } else {
                (r.p_value * n_pairs as f64).min(1.0)
            };
            raw[i][j] = r.p_value;
            raw[j][i] = r.p_value;
            adjusted[i][j] = adj;
            adjusted[j][i] = adj;
            pairs.push(json!({
                "i": i,
                "j": j,
                "statistic": r.statistic,
                "df": r.df,
                "p_value": r.p_value,
                "p_adjusted": adj,
                "reject": adj <= args.level,
            }));
        }
    }
    if format == Some(Format::Csv) {
        let mut s = String::from("i,j,statistic,df,p_value,p_adjusted\n");
        for p in &pairs {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p["i"], p["j"], p["statistic"], p["df"], p["p_value"], p["p_adjusted"]
            ));
        }
        return Ok(s.into_bytes());
    }
    let out = json!({
        "method": args.method_name(),
        "adjustment": if args.no_adjust { "none" } else { "bonferroni" },
        "level": args.level,
        "p_values": raw,
        "p_adjusted": adjusted,
        "pairs": pairs,
    });
    render(out, format)
}

impl TestArgs {
    fn method_name(&self) -> &'static str {
        match self.method {
            TestMethod::Delr => "delr",
            TestMethod::Wald => "wald",
            TestMethod::Perm => "permutation",
        }
    }
}

/// `"a,b;c,d"` -> `[[a, b], [c, d]]`.
fn parse_blocks(s: &str, what: &str) -> std::result::Result<Vec<Vec<f64>>, Failure> {
    s.split(';').map(|block| parse_list(block, what)).collect()
}

fn parse_list(s: &str, what: &str) -> std::result::Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad number `{}` in --{what}", v.trim())))
        })
        .collect()
}

struct Design {
    f0: BaselineSpec,
    basis: BasisFn,
    rho: Vec<f64>,
    beta_star: Vec<f64>,
    constraint: ConstraintSpec,
}

fn design(args: &DesignArgs) -> std::result::Result<Design, Failure> {
    check_level(args.level)?;
    let family: Family = args.f0.parse()?;
    let f0 = BaselineSpec::new(family)?;
    let basis = BasisFn::parse(&args.basis)?;
    let rho = parse_list(&args.rho, "rho")?;
    if rho.len() < 2 {
        return Err(usage("--rho needs at least two proportions"));
    }
    let m = rho.len() - 1;
    let blocks = parse_blocks(&args.beta_star, "beta-star")?;
    if blocks.len() != m || blocks.iter().any(|b| b.len() != basis.dim()) {
        return Err(usage(format!("--beta-star needs {m} blocks of {} values", basis.dim())));
    }
    let constraint = parse_hypothesis(&args.hypothesis, m, basis.dim())?;
    Ok(Design {
        f0,
        basis,
        rho,
        beta_star: blocks.concat(),
        constraint,
    })
}

fn cmd_power(args: &PowerArgs, format: Option<Format>) -> CmdResult {
    let d = design(&args.design)?;
    let drifts = parse_blocks(&args.drift, "drift")?;
    let alt = LocalAlternative::new(d.beta_star.clone(), drifts, d.rho.clone())?;
    let r = analyze_power(&d.f0, &d.basis, &alt, &d.constraint, args.design.level)?;
    let out = json!({
        "delta2": r.delta2,
        "power": r.power,
        "df": r.df,
        "level": args.design.level,
        "alpha_star": r.alpha_star,
    });
    render(out, format)
}

fn cmd_samplesize(args: &SampleSizeArgs, format: Option<Format>) -> CmdResult {
    let d = design(&args.design)?;
    let shifts = parse_blocks(&args.shift, "shift")?;
    let r = sample_size(
        args.target,
        args.design.level,
        &shifts,
        &d.rho,
        &d.f0,
        &d.beta_star,
        &d.basis,
        &d.constraint,
    )?;
    let out = json!({
        "n_star": r.n_star,
        "power_at_n_star": r.power_at_n_star,
        "power_below": r.power_below,
        "delta2_unit": r.delta2_unit,
        "target": args.target,
        "level": args.design.level,
    });
    render(out, format)
}

fn cmd_simulate(args: &SimulateArgs, format: Option<Format>) -> CmdResult {
    let mut cfg = match (&args.config, &args.builtin) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Failure {
                code: EXIT_DATA,
                message: format!("{}: {e}", path.display()),
            })?;
            StudyConfig::from_json(&text)?
        }
        (None, Some(name)) if name == "list" => return Ok((builtin_names().join("\n") + "\n").into_bytes()),
        (None, Some(name)) => builtin_config(name).ok_or_else(|| {
            usage(format!(
                "unknown built-in study `{name}`; available: {}",
                builtin_names().join(", ")
            ))
        })?,
        (None, None) => return Err(usage("one of --config or --builtin is required")),
    };
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;

    let (rows, summary, qq) = match cfg.scenario {
        Scenario::Power => {
            let study = run_power_study(&cfg)?;
            (study.rows, json!({}), None)
        }
        Scenario::Null => {
            let s = run_null_study(&cfg)?;
            let row = PowerRow {
                setting: 0,
                method: "delr".into(),
                rate: s.rejection_rate,
                se: s.se,
                failures: s.failures,
                replicates: s.replicates,
            };
            let summary = json!({
                "df": s.df,
                "ks_distance": s.ks_distance,
                "ks_p_value": s.ks_p_value,
            });
            (vec![row], summary, Some(s.qq))
        }
        Scenario::LocalAlternative => {
            let s = run_local_alternative_study(&cfg)?;
            let row = PowerRow {
                setting: 0,
                method: "delr".into(),
                rate: s.rejection_rate,
                se: f64::NAN,
                failures: s.failures,
                replicates: s.replicates,
            };
            let summary = json!({
                "df": s.df,
                "delta2": s.delta2,
                "asymptotic_power": s.asymptotic_power,
                "ks_distance": s.ks_distance,
                "ks_p_value": s.ks_p_value,
            });
            (vec![row], summary, Some(s.qq))
        }
    };
    if let Some(path) = &args.qq_out {
        let pairs = qq
            .as_deref()
            .ok_or_else(|| usage("--qq-out applies to null and local-alternative studies"))?;
        let mut buf = Vec::new();
        write_qq_csv(&mut buf, pairs)?;
        fs::write(path, buf)?;
    }
    match format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_power_csv(&mut buf, &rows)?;
            Ok(buf)
        }
        Format::Json => {
            let mut out = json!({
                "scenario": cfg.scenario,
                "name": cfg.name,
                "replicates": cfg.replicates,
                "seed": cfg.seed,
                "level": cfg.level,
                "rows": rows.iter().map(|r| json!({
                    "setting": r.setting,
                    "method": r.method,
                    "rate": r.rate,
                    "se": if r.se.is_finite() { json!(r.se) } else { Value::Null },
                    "failures": r.failures,
                })).collect::<Vec<_>>(),
            });
            if let (Some(o), Some(s)) = (out.as_object_mut(), summary.as_object()) {
                o.extend(s.clone());
            }
            render(out, Some(Format::Json))
        }
    }
}

fn cmd_density(args: &DensityArgs, format: Option<Format>) -> CmdResult {
    if format == Some(Format::Json) {
        return Err(usage("density output is CSV only"));
    }
    if args.points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    let (data, basis) = load(&args.data)?;
    let fit = fit_mele(&data, &basis, &FitOptions::default())?;
    let wb = baseline_weights(&fit, &data, &basis)?;
    let h = match args.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(usage(format!("--bandwidth must be positive, got {h}"))),
        None => wb.silverman_bandwidth(args.sample)?,
    };
    let pts = wb.points();
    let lo = args.from.unwrap_or(pts[0] - 3.0 * h);
    let hi = args.to.unwrap_or(pts[pts.len() - 1] + 3.0 * h);
    if !(lo < hi) {
        return Err(usage(format!("empty grid [{lo}, {hi}]")));
    }
    let xs = linspace(lo, hi, args.points);
    let values = if args.cdf {
        xs.iter()
            .map(|&x| wb.fitted_cdf(args.sample, x))
            .collect::<drmtest::Result<Vec<_>>>()?
    } else {
        wb.kernel_density(args.sample, h, &xs)?
    };
    let mut buf = Vec::new();
    write_grid_csv(&mut buf, &xs, &values)?;
    Ok(buf)
}
