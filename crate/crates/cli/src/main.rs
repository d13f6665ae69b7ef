//! `spacs`: simulate homodyne data, fit the photon-added coherent state model,
//! scan the distance landscape and bound the detection fidelity.
//!
//! Exit codes: 0 success, 1 I/O or parse error, 2 optimizer did not converge,
//! 3 validation failure.

mod config;
mod validate;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use spacs_core::dataset::{
    default_phase_grid, histogram, load_dataset, sample_dataset, save_dataset, sidecar_path, BinRule,
    QuadratureDataset,
};
use spacs_core::estimator::{estimate, scan_cut, Axis, EstimationResult, EstimatorOptions, Family};
use spacs_core::fidelity::{fidelity_report, FidelityOptions, ModifiedSubFidelity};
use spacs_core::models::CoherentParams;
use spacs_core::optimize::NelderMeadOptions;
use spacs_core::overlap::IntegrationConfig;
use spacs_core::{DarkCountMixtureParams, SpacsModelParams, Tomogram, TomogramModel};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Core(#[from] spacs_core::Error),
    #[error("optimizer did not converge")]
    NotConverged,
    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::NotConverged => 2,
            CliError::ValidationFailed(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "spacs", version, about = "Minimal-distance estimation for photon-added coherent states")]
struct Cli {
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic quadrature dataset.
    Simulate(SimulateArgs),
    /// Fit the model to a dataset.
    Estimate(EstimateArgs),
    /// D² and Δ(D²) along one parameter.
    Scan(ScanArgs),
    /// Fidelity bounds between the data and fitted parameters.
    Fidelity(FidelityArgs),
    /// Cross-check closed forms and functionals against the Fock oracle.
    Validate(ValidateArgs),
    /// Histogram and model curve for one phase.
    Plotdata(PlotArgs),
}

/// Model parameters given directly on the command line.
#[derive(Args, Serialize, Deserialize, Default, Debug, Clone)]
struct ParamArgs {
    /// |α|
    #[arg(long)]
    alpha: Option<f64>,
    /// Phase of α in radians.
    #[arg(long)]
    phi: Option<f64>,
    /// Overall detection efficiency.
    #[arg(long)]
    eta: Option<f64>,
    /// Dark-count fraction; selects the dark_count model.
    #[arg(long)]
    p: Option<f64>,
    /// spacs, dark_count or coherent.
    #[arg(long)]
    model: Option<String>,
}

impl ParamArgs {
    fn given(&self) -> bool {
        self.alpha.is_some() || self.eta.is_some()
    }

    fn model(&self) -> Result<TomogramModel, CliError> {
        let alpha = self.alpha.ok_or_else(|| CliError::Parse("--alpha is required".into()))?;
        let eta = self.eta.ok_or_else(|| CliError::Parse("--eta is required".into()))?;
        let phi = self.phi.unwrap_or(0.0);
        let kind = self.model.clone().unwrap_or_else(|| {
            if self.p.is_some() {
                "dark_count".into()
            } else {
                "spacs".into()
            }
        });
        let spacs = || SpacsModelParams::new(alpha, phi, eta);
        Ok(match kind.as_str() {
            "spacs" => TomogramModel::Spacs(spacs()?),
            "dark_count" | "dark-count" => {
                let p = self.p.ok_or_else(|| CliError::Parse("--p is required for dark_count".into()))?;
                TomogramModel::DarkCount(DarkCountMixtureParams::new(spacs()?, p)?)
            }
            "coherent" => TomogramModel::Coherent(
                CoherentParams {
                    abs_alpha: alpha,
                    phi,
                    eta,
                }
                .validated()?,
            ),
            other => return Err(CliError::Parse(format!("unknown model {other:?}"))),
        })
    }
}

#[derive(Args, Serialize, Deserialize, Default, Debug, Clone)]
struct IntegrationArgs {
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    r_step: Option<f64>,
    /// Full integration settings; config file only.
    #[arg(skip)]
    integration: Option<IntegrationConfig>,
}

impl IntegrationArgs {
    fn config(&self) -> Result<IntegrationConfig, CliError> {
        let mut cfg = self.integration.unwrap_or_default();
        if let Some(r) = self.r_max {
            cfg.r_max = r;
        }
        if let Some(r) = self.r_step {
            cfg.r_step = r;
        }
        Ok(cfg.validated()?)
    }
}

#[derive(Args, Serialize, Deserialize, Default, Debug, Clone)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
    /// Number of phases.
    #[arg(long)]
    phases: Option<usize>,
    /// Samples per phase.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV path; defaults to dataset.csv in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Debug, Clone)]
struct EstimateArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// spacs or dark_count.
    #[arg(long)]
    family: Option<String>,
    /// Hold a parameter fixed, e.g. `--fix eta=0.58`. Repeatable.
    #[arg(long)]
    #[serde(default)]
    fix: Vec<String>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    cut_points: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    integration: IntegrationArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

/// Where fitted parameters come from for scan, fidelity and plotdata.
#[derive(Args, Serialize, Deserialize, Default, Debug, Clone)]
struct FitSource {
    /// Result JSON written by `estimate`.
    #[arg(long)]
    estimate: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
}

impl FitSource {
    /// Parameters, checking that an estimate file was made from `data`.
    fn resolve(&self, data: &QuadratureDataset) -> Result<TomogramModel, CliError> {
        if self.params.given() {
            return self.params.model();
        }
        let path = self
            .estimate
            .as_ref()
            .ok_or_else(|| CliError::Parse("give --estimate or --alpha/--eta".into()))?;
        let result = read_estimate(path)?;
        let fingerprint = data.fingerprint();
        match &result.fingerprint {
            Some(f) if *f == fingerprint => Ok(result.params),
            Some(f) => Err(CliError::Parse(format!(
                "{} was fitted to a different dataset (fingerprint {f}, data has {fingerprint})",
                path.display()
            ))),
            None => Err(CliError::Parse(format!("{} has no dataset fingerprint", path.display()))),
        }
    }
}

#[derive(Args, Serialize, Deserialize, Default, Debug, Clone)]
struct ScanArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// abs_alpha, phi, eta or p.
    #[arg(long)]
    axis: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    source: FitSource,
    #[arg(long)]
    points: Option<usize>,
    /// Lower end of the scan; default is the standard window around the fit.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    integration: IntegrationArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Debug, Clone)]
struct FidelityArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    source: FitSource,
    /// Bootstrap resamples.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    bootstrap_r_step: Option<f64>,
    /// Bootstrap seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    integration: IntegrationArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Debug, Clone)]
struct ValidateArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Debug, Clone)]
struct PlotArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    source: FitSource,
    #[arg(long)]
    phase_index: Option<usize>,
    /// Fixed bin width; Freedman–Diaconis otherwise.
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

/// Every JSON artifact: the merged run configuration, the seed and the result.
#[derive(Serialize, Deserialize)]
struct Envelope<C, R> {
    command: String,
    run_config: C,
    seed: Option<u64>,
    result: R,
}

fn read_estimate(path: &Path) -> Result<EstimationResult, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    // accept both the bare result and the command envelope
    let inner = value.get("result").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn load_data(path: Option<&PathBuf>) -> Result<QuadratureDataset, CliError> {
    let path = path.ok_or_else(|| CliError::Parse("--data is required".into()))?;
    load_dataset(path).map_err(|e| match e {
        spacs_core::Error::Io { .. } => CliError::Io(e.to_string()),
        other => CliError::Parse(format!("{}: {other}", path.display())),
    })
}

fn data_seed(data: &QuadratureDataset) -> Option<u64> {
    data.meta().and_then(|m| m.seed)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let model = args.params.model()?;
    let phases = default_phase_grid(args.phases.unwrap_or(21));
    let n = args.n.unwrap_or(5321);
    let seed = args.seed.unwrap_or(0);
    let data = sample_dataset(&model, &phases, n, seed)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| config::output_dir(args.output_dir.as_ref()).join("dataset.csv"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        config::ensure_dir(parent)?;
    }
    save_dataset(&data, &out).map_err(|e| CliError::Io(e.to_string()))?;
    println!("wrote {} and {}", out.display(), sidecar_path(&out).display());
    println!("phases: {}  samples per phase: {n}  seed: {seed}", phases.len());
    println!("model: {}", serde_json::to_string(&model).unwrap_or_default());
    println!("fingerprint: {}", data.fingerprint());
    Ok(())
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.4}"),
        Some(x) => format!("{x}"),
        None => "-".into(),
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let data = load_data(args.data.as_ref())?;
    let family: Family = args.family.as_deref().unwrap_or("spacs").parse()?;
    let mut opts = EstimatorOptions::default();
    for f in &args.fix {
        opts.fixed.parse_assignment(f)?;
    }
    opts.optimizer = NelderMeadOptions {
        max_iterations: args.max_iterations.unwrap_or(opts.optimizer.max_iterations),
        tolerance: args.tolerance.unwrap_or(opts.optimizer.tolerance),
        ..opts.optimizer
    };
    if let Some(c) = args.cut_points {
        opts.cut_points = c;
    }
    let cfg = args.integration.config()?;
    let result = estimate(&data, family, &cfg, &opts)?;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| config::output_dir(args.output_dir.as_ref()).join("estimate.json"));
    config::write_json(
        &out,
        &Envelope {
            command: "estimate".into(),
            seed: data_seed(&data),
            run_config: &args,
            result: &result,
        },
    )?;

    let s = result.spacs_params();
    let err = |a: Axis| result.param_errors.and_then(|e| e.get(a));
    println!("{:<10} {:>10} {:>10}", "parameter", "value", "error");
    println!("{:<10} {:>10.4} {:>10}", "abs_alpha", s.abs_alpha, fmt_value(err(Axis::AbsAlpha)));
    println!("{:<10} {:>10.4} {:>10}", "phi", s.phi, fmt_value(err(Axis::Phi)));
    println!("{:<10} {:>10.4} {:>10}", "eta", s.eta, fmt_value(err(Axis::Eta)));
    if let TomogramModel::DarkCount(d) = result.params {
        println!("{:<10} {:>10.4} {:>10}", "p", d.p, fmt_value(err(Axis::P)));
    }
    println!(
        "D2_min = {:.5}  Delta(D2) = {}  SNR = {}",
        result.d2_min,
        fmt_value(result.d2_error),
        fmt_value(result.snr)
    );
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", out.display());
    if result.converged() {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

fn cmd_scan(args: ScanArgs) -> Result<(), CliError> {
    let data = load_data(args.data.as_ref())?;
    let axis: Axis = args
        .axis
        .as_deref()
        .ok_or_else(|| CliError::Parse("--axis is required".into()))?
        .parse()?;
    let params = args.source.resolve(&data)?;
    let center = match (&params, axis) {
        (TomogramModel::DarkCount(d), Axis::P) => d.p,
        (_, Axis::AbsAlpha) => spacs_of(&params).abs_alpha,
        (_, Axis::Phi) => spacs_of(&params).phi,
        (_, Axis::Eta) => spacs_of(&params).eta,
        (_, Axis::P) => return Err(CliError::Parse("axis p needs the dark_count model".into())),
    };
    let (lo, hi) = axis.default_range(center);
    let range = (args.from.unwrap_or(lo), args.to.unwrap_or(hi));
    let cfg = args.integration.config()?;
    let curve = scan_cut(&data, &params, axis, range, args.points.unwrap_or(31), &cfg)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| config::output_dir(args.output_dir.as_ref()).join(format!("scan_{axis}.csv")));
    config::write_text(&out, &curve.to_csv_string())?;
    println!("wrote {} ({} points)", out.display(), curve.q.len());
    Ok(())
}

fn spacs_of(model: &TomogramModel) -> SpacsModelParams {
    match model {
        TomogramModel::Spacs(s) => *s,
        TomogramModel::DarkCount(d) => d.spacs,
        TomogramModel::Coherent(c) => SpacsModelParams {
            abs_alpha: c.abs_alpha,
            phi: c.phi,
            eta: c.eta,
        },
    }
}

fn cmd_fidelity(args: FidelityArgs) -> Result<(), CliError> {
    let data = load_data(args.data.as_ref())?;
    let params = args.source.resolve(&data)?;
    let defaults = FidelityOptions::default();
    let opts = FidelityOptions {
        bootstrap_resamples: args.bootstrap.unwrap_or(defaults.bootstrap_resamples),
        bootstrap_r_step: args.bootstrap_r_step.unwrap_or(defaults.bootstrap_r_step),
        seed: args.seed.unwrap_or(defaults.seed),
    };
    let cfg = args.integration.config()?;
    let bounds = fidelity_report(&data, &params, &cfg, &opts)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| config::output_dir(args.output_dir.as_ref()).join("fidelity.json"));
    config::write_json(
        &out,
        &Envelope {
            command: "fidelity".into(),
            seed: Some(opts.seed),
            run_config: &args,
            result: &bounds,
        },
    )?;

    println!("Tr rho_th^2 = {:.4}  Tr rho_th^4 = {:.4}", bounds.traces.purity_th, bounds.traces.four_th);
    println!("Tr rho_ex^2 = {:.4} +- {:.4}", bounds.purity_ex.value, bounds.purity_ex.uncertainty);
    println!(
        "E''  = {:.4} +- {}",
        bounds.e_double_prime.value,
        fmt_value(bounds.e_double_prime.uncertainty)
    );
    match bounds.e_prime {
        ModifiedSubFidelity::Computed { value, uncertainty, .. } => println!("E'   = {value:.4} +- {uncertainty:.4}"),
        ModifiedSubFidelity::NotComputable { radicand_interval, .. } => println!(
            "E'   not computable: radicand interval [{:.4}, {:.4}]",
            radicand_interval[0], radicand_interval[1]
        ),
    }
    println!("G    = {:.4} +- {}", bounds.g.value, fmt_value(bounds.g.uncertainty));
    for w in &bounds.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let checks = validate::run()?;
    for c in &checks {
        println!(
            "{} {}: {:.3e} (limit {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| config::output_dir(args.output_dir.as_ref()).join("validate.json"));
    config::write_json(
        &out,
        &Envelope {
            command: "validate".into(),
            seed: None,
            run_config: &args,
            result: &checks,
        },
    )?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        Err(CliError::ValidationFailed(failed))
    } else {
        Ok(())
    }
}

fn cmd_plotdata(args: PlotArgs) -> Result<(), CliError> {
    let data = load_data(args.data.as_ref())?;
    let params = args.source.resolve(&data)?;
    let k = args.phase_index.unwrap_or(0);
    let rule = match args.bin_width {
        Some(w) => BinRule::FixedWidth(w),
        None => BinRule::FreedmanDiaconis,
    };
    let h = histogram(&data, k, rule)?;
    let theta = data.phases()[k];
    let dir = config::output_dir(args.output_dir.as_ref());

    let mut hist = String::from("x,density\n");
    for (c, d) in h.centers().iter().zip(&h.densities) {
        hist.push_str(&format!("{c},{d}\n"));
    }
    let lo = h.bin_edges[0] - 1.0;
    let hi = h.bin_edges[h.bin_edges.len() - 1] + 1.0;
    let steps = ((hi - lo) / 0.01).ceil() as usize;
    let mut curve = String::from("x,density\n");
    for i in 0..=steps {
        let x = lo + i as f64 * 0.01;
        curve.push_str(&format!("{x},{}\n", params.density(x, theta)));
    }
    let hist_path = dir.join(format!("histogram_phase{k}.csv"));
    let model_path = dir.join(format!("model_phase{k}.csv"));
    config::write_text(&hist_path, &hist)?;
    config::write_text(&model_path, &curve)?;
    println!("phase {k} (theta = {theta:.4}): wrote {} and {}", hist_path.display(), model_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(config::load).transpose()?;
    let file = file.as_ref();
    match cli.command {
        Command::Simulate(a) => cmd_simulate(config::merge(&a, file)?),
        Command::Estimate(a) => cmd_estimate(config::merge(&a, file)?),
        Command::Scan(a) => cmd_scan(config::merge(&a, file)?),
        Command::Fidelity(a) => cmd_fidelity(config::merge(&a, file)?),
        Command::Validate(a) => cmd_validate(config::merge(&a, file)?),
        Command::Plotdata(a) => cmd_plotdata(config::merge(&a, file)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
