//! Command-line front end: config ingestion, subcommand dispatch, CSV/SVG
//! emission, and provenance records.
//!
//! Exit codes: 0 success, 2 input error (bad flags, files, grids), 3
//! numerical failure (quadrature, non-physical state, unevaluable model).

mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use rydctl_core::constants;
use rydctl_core::dynamics::{self, PulseConfig};
use rydctl_core::errbudget::{self, Scheme, Variant};
use rydctl_core::fit::{self, FitOptions};
use rydctl_core::mqdt::ChannelModel;
use rydctl_core::spectrum::{self, FieldConfig, SpectrumModel, TwoLevelParams, D_CORE};

const EXIT_INPUT: i32 = 2;
const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
struct AppError {
    code: i32,
    msg: String,
}

impl AppError {
    fn input(msg: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, msg: msg.into() }
    }
    fn numeric(msg: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERIC, msg: msg.into() }
    }
}

type AppResult<T> = Result<T, AppError>;

#[derive(Parser)]
#[command(name = "rydctl", version, about = "Core-excited Rydberg control toolkit")]
struct Cli {
    /// JSON config file; command-line flags override config keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/SVG/run.json artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also render an SVG plot next to the CSV
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Photoionization rate and light shift over a detuning grid
    Spectrum(SpectrumArgs),
    /// Complex light shift over a detuning grid
    Lightshift(SpectrumArgs),
    /// Fit the 9-parameter quantum-defect matrix to a rate spectrum
    FitMqdt(FitMqdtArgs),
    /// Fit the two-level (Gamma, Delta_+, amplitude) model to rate data
    FitTwoLevel(FitTwoLevelArgs),
    /// Single-atom pi-pulse survival vs control intensity
    SimRabi(SimArgs),
    /// Blockaded two-atom Bell-state preparation vs control intensity
    SimBlockade(SimArgs),
    /// Bell-fidelity lower bound from measured populations
    Fidelity(FidelityArgs),
    /// Optimal addressing operating point over an error-target grid
    ErrorBudget(BudgetArgs),
}

#[derive(Args)]
struct SpectrumArgs {
    /// Channel model JSON; built-in reference values when omitted
    #[arg(long)]
    model: Option<PathBuf>,
    /// Detuning grid in GHz, start:stop:step
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    /// Control intensity, W/cm^2
    #[arg(long)]
    ic: Option<f64>,
    /// Control field amplitude in atomic units (overrides --ic)
    #[arg(long)]
    field_au: Option<f64>,
    /// Core transition dipole in e a0 for the intensity conversion
    #[arg(long)]
    dipole: Option<f64>,
}

#[derive(Args)]
struct FitMqdtArgs {
    /// Input CSV: delta_ghz, gamma_ls[, sigma]
    #[arg(long)]
    data: PathBuf,
    /// Channel model JSON giving the initial defects and line positions
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    ic: Option<f64>,
    #[arg(long)]
    dipole: Option<f64>,
    /// Number of seeded restarts; best residual wins
    #[arg(long)]
    multi_start: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the Nelder-Mead pre-stage
    #[arg(long)]
    no_nelder_mead: bool,
}

#[derive(Args)]
struct FitTwoLevelArgs {
    /// Input CSV: delta_ghz, gamma_ls[, sigma]
    #[arg(long)]
    data: PathBuf,
    /// Initial linewidth guess, GHz
    #[arg(long)]
    init_gamma_ghz: Option<f64>,
    /// Initial line-center offset guess, GHz
    #[arg(long, allow_hyphen_values = true)]
    init_delta_plus_ghz: Option<f64>,
    /// Initial amplitude; estimated from the data peak when omitted
    #[arg(long)]
    init_amplitude: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    /// Control intensity grid in W/cm^2, start:stop:step
    #[arg(long)]
    ic: Option<String>,
    /// Control detuning, GHz
    #[arg(long, allow_hyphen_values = true)]
    delta_ghz: Option<f64>,
    /// Autoionizing linewidth, GHz (of Gamma/2pi)
    #[arg(long)]
    gamma_ghz: Option<f64>,
    /// Rydberg Rabi frequency, MHz (of Omega_r/2pi)
    #[arg(long)]
    omega_r_mhz: Option<f64>,
    /// Blockade shift, MHz (of U/2pi); two-atom runs only
    #[arg(long)]
    uint_mhz: Option<f64>,
    /// Ground-state detection fidelity
    #[arg(long)]
    fg: Option<f64>,
    /// Dephasing calibration target P_g(pi/Omega_r) at I_c = 0
    #[arg(long)]
    target_pg: Option<f64>,
    /// Explicit g-r dephasing rate in rad/s (skips the calibration)
    #[arg(long)]
    gamma_r: Option<f64>,
    /// Linewidth/intensity consistency factor
    #[arg(long)]
    kappa: Option<f64>,
    /// Disable the kappa adjustment
    #[arg(long)]
    no_kappa: bool,
    /// Control transition dipole, e a0
    #[arg(long)]
    dipole: Option<f64>,
}

#[derive(Args)]
struct FidelityArgs {
    /// Populations at t_g as gr,rg,rr,gg
    #[arg(long)]
    pops_tg: String,
    /// Populations at 2 t_g as gr,rg,rr,gg
    #[arg(long)]
    pops_2tg: String,
}

#[derive(Args)]
struct BudgetArgs {
    /// Addressing scheme: ground or rydberg
    #[arg(long)]
    scheme: Option<String>,
    /// Error-target grid lo:hi[:n], log-spaced (n defaults to 50)
    #[arg(long)]
    eps: Option<String>,
    /// Linewidth Gamma in the scattering error, rad/s
    #[arg(long)]
    gamma: Option<f64>,
    /// Intrinsic Rydberg decay rate, rad/s
    #[arg(long)]
    gamma_r: Option<f64>,
    #[arg(long)]
    c_rot: Option<f64>,
    #[arg(long)]
    c_sc: Option<f64>,
}

fn main() {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("RYDCTL_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    match run(cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {}", e.msg);
            std::process::exit(e.code);
        }
    }
}

/// Resolved global context: parsed config file plus output settings.
struct Ctx {
    config: Value,
    out: PathBuf,
    svg: bool,
}

impl Ctx {
    fn new(cli: &Cli) -> AppResult<Self> {
        let config = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| AppError::input(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| AppError::input(format!("bad config {}: {e}", path.display())))?
            }
            None => Value::Object(Default::default()),
        };
        let out = cli
            .out
            .clone()
            .or_else(|| config.get("out").and_then(Value::as_str).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let svg = cli.svg || config.get("svg").and_then(Value::as_bool).unwrap_or(false);
        std::fs::create_dir_all(&out)
            .map_err(|e| AppError::input(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self { config, out, svg })
    }

    fn f64(&self, flag: Option<f64>, key: &str, default: f64) -> f64 {
        flag.or_else(|| self.config.get(key).and_then(Value::as_f64)).unwrap_or(default)
    }

    fn u64(&self, flag: Option<u64>, key: &str, default: u64) -> u64 {
        flag.or_else(|| self.config.get(key).and_then(Value::as_u64)).unwrap_or(default)
    }

    fn usize(&self, flag: Option<usize>, key: &str, default: usize) -> usize {
        flag.or_else(|| self.config.get(key).and_then(Value::as_u64).map(|v| v as usize))
            .unwrap_or(default)
    }

    fn string(&self, flag: Option<String>, key: &str, default: &str) -> String {
        flag.or_else(|| self.config.get(key).and_then(Value::as_str).map(String::from))
            .unwrap_or_else(|| default.to_string())
    }

    fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.config.get(key).and_then(Value::as_str).map(PathBuf::from))
    }
}

/// Inclusive linear grid from `start:stop:step` (single value allowed).
fn parse_grid(spec: &str) -> AppResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| -> AppResult<f64> {
        s.parse::<f64>().map_err(|e| AppError::input(format!("bad grid number {s:?}: {e}")))
    };
    match parts.len() {
        1 => Ok(vec![num(parts[0])?]),
        3 => {
            let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if step <= 0.0 || stop < start {
                return Err(AppError::input(format!(
                    "grid {spec:?} must have step > 0 and stop >= start"
                )));
            }
            let mut grid = Vec::new();
            let mut k = 0usize;
            loop {
                let v = start + step * k as f64;
                if v > stop + 0.5 * step {
                    break;
                }
                grid.push(v);
                k += 1;
            }
            Ok(grid)
        }
        _ => Err(AppError::input(format!("grid {spec:?} must be start:stop:step"))),
    }
}

/// Log-spaced grid from `lo:hi[:n]`.
fn parse_log_grid(spec: &str) -> AppResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| -> AppResult<f64> {
        s.parse::<f64>().map_err(|e| AppError::input(format!("bad grid number {s:?}: {e}")))
    };
    let (lo, hi, n) = match parts.len() {
        2 => (num(parts[0])?, num(parts[1])?, 50),
        3 => {
            let n: usize = parts[2]
                .parse()
                .map_err(|e| AppError::input(format!("bad grid count {:?}: {e}", parts[2])))?;
            (num(parts[0])?, num(parts[1])?, n)
        }
        _ => return Err(AppError::input(format!("grid {spec:?} must be lo:hi[:n]"))),
    };
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(AppError::input(format!("log grid {spec:?} needs 0 < lo < hi and n >= 2")));
    }
    Ok(errbudget::log_grid(lo, hi, n))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// Hash of the physical constants baked into the core crate, recorded in
/// provenance so outputs can be traced to a constants revision.
fn constants_hash() -> String {
    let text = format!(
        "c={} eps0={} hbar={} e={} a0={} Eh={} EhCm={} Fau={} Rinf={} me={} mYb={}",
        constants::SPEED_OF_LIGHT,
        constants::EPSILON_0,
        constants::HBAR,
        constants::ELEMENTARY_CHARGE,
        constants::BOHR_RADIUS,
        constants::HARTREE,
        constants::HARTREE_CM,
        constants::FIELD_AU,
        constants::RYDBERG_INF_CM,
        constants::ELECTRON_MASS_U,
        constants::MASS_YB174_U,
    );
    sha256_hex(text.as_bytes())
}

fn write_file(dir: &Path, name: &str, content: &str) -> AppResult<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| AppError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn write_run_json(ctx: &Ctx, subcommand: &str, resolved: &Value) -> AppResult<()> {
    let record = json!({
        "subcommand": subcommand,
        "config": resolved,
        "constants_hash": constants_hash(),
        "versions": {
            "rydctl": env!("CARGO_PKG_VERSION"),
        },
    });
    write_file(&ctx.out, "run.json", &format!("{:#}\n", record))?;
    Ok(())
}

fn csv_text(header_lines: &[String], columns: &str, rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for line in header_lines {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "# columns: {columns}");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", cells.join(", "));
    }
    out
}

fn load_model(path: &Option<PathBuf>) -> AppResult<(ChannelModel, String)> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| AppError::input(format!("cannot read {}: {e}", p.display())))?;
            let model: ChannelModel = serde_json::from_str(&text)
                .map_err(|e| AppError::input(format!("bad model {}: {e}", p.display())))?;
            Ok((model, sha256_hex(text.as_bytes())))
        }
        None => {
            let model = ChannelModel::reference();
            let canonical = serde_json::to_string(&model).expect("model serializes");
            Ok((model, sha256_hex(canonical.as_bytes())))
        }
    }
}

fn run(cli: Cli) -> AppResult<String> {
    let ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::Spectrum(a) => run_spectrum(&ctx, a, "spectrum"),
        Command::Lightshift(a) => run_spectrum(&ctx, a, "lightshift"),
        Command::FitMqdt(a) => run_fit_mqdt(&ctx, a),
        Command::FitTwoLevel(a) => run_fit_two_level(&ctx, a),
        Command::SimRabi(a) => run_sim(&ctx, a, false),
        Command::SimBlockade(a) => run_sim(&ctx, a, true),
        Command::Fidelity(a) => run_fidelity(&ctx, a),
        Command::ErrorBudget(a) => run_error_budget(&ctx, a),
    }
}

fn field_config(ctx: &Ctx, ic: Option<f64>, field_au: Option<f64>, dipole: Option<f64>)
    -> (FieldConfig, Value)
{
    let dipole = ctx.f64(dipole, "dipole", D_CORE);
    let field_au = field_au.or_else(|| ctx.config.get("field_au").and_then(Value::as_f64));
    match field_au {
        Some(e_o) => (FieldConfig::FieldAu { e_o }, json!({ "field_au": e_o })),
        None => {
            let ic = ctx.f64(ic, "ic", 600.0);
            (
                FieldConfig::Intensity { i_c_w_cm2: ic, dipole },
                json!({ "ic_w_cm2": ic, "dipole_ea0": dipole }),
            )
        }
    }
}

fn run_spectrum(ctx: &Ctx, a: &SpectrumArgs, name: &str) -> AppResult<String> {
    let model_path = ctx.path(a.model.clone(), "model");
    let (model, model_hash) = load_model(&model_path)?;
    let spec = ctx.string(a.delta.clone(), "delta", "-35:10:0.05");
    let deltas = parse_grid(&spec)?;
    let (field, field_json) = field_config(ctx, a.ic, a.field_au, a.dipole);
    let sm = SpectrumModel::build(&model)
        .map_err(|e| AppError::numeric(format!("cannot build spectrum model: {e}")))?;
    let points = spectrum::spectrum_series(&deltas, &model, &sm, &field)
        .map_err(|e| AppError::numeric(format!("spectrum evaluation failed: {e}")))?;

    let resolved = json!({
        "model": model_path.as_ref().map(|p| p.display().to_string()),
        "model_hash": model_hash,
        "delta": spec,
        "field": field_json,
    });
    let header = vec![
        format!("model_hash: {model_hash}"),
        format!("field: {field_json}"),
    ];
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| vec![p.delta_ghz, p.rate_per_s, p.lightshift_re_mhz, p.lightshift_im_mhz])
        .collect();
    let csv = csv_text(
        &header,
        "delta_ghz, rate_per_s, lightshift_re_mhz, lightshift_im_mhz",
        &rows,
    );
    let csv_path = write_file(&ctx.out, &format!("{name}.csv"), &csv)?;
    if ctx.svg {
        let series = vec![
            svg::Series {
                label: "rate (1/s)".into(),
                points: points.iter().map(|p| (p.delta_ghz, p.rate_per_s)).collect(),
            },
            svg::Series {
                label: "|shift| (MHz)".into(),
                points: points
                    .iter()
                    .map(|p| (p.delta_ghz, p.lightshift_re_mhz.abs() * 1e3))
                    .collect(),
            },
        ];
        let axes = svg::Axes {
            x_label: "detuning (GHz)".into(),
            y_label: "rate (1/s), 1000 x |shift| (MHz)".into(),
            log_y: true,
        };
        let doc = svg::render_svg(&series, &axes).map_err(AppError::numeric)?;
        write_file(&ctx.out, &format!("{name}.svg"), &doc)?;
    }
    write_run_json(ctx, name, &resolved)?;
    let peak = points
        .iter()
        .max_by(|x, y| x.rate_per_s.total_cmp(&y.rate_per_s))
        .expect("non-empty grid");
    Ok(format!(
        "{name}: {} rows, peak rate {:.4e} 1/s at {:.2} GHz -> {}",
        points.len(),
        peak.rate_per_s,
        peak.delta_ghz,
        csv_path.display()
    ))
}

fn run_fit_mqdt(ctx: &Ctx, a: &FitMqdtArgs) -> AppResult<String> {
    let data = fit::load_spectrum_csv(&a.data.display().to_string())
        .map_err(|e| AppError::input(format!("cannot load data: {e}")))?;
    let model_path = ctx.path(a.model.clone(), "model");
    let (model, model_hash) = load_model(&model_path)?;
    let (field, field_json) = field_config(ctx, a.ic, None, a.dipole);
    let options = FitOptions {
        multi_start: ctx.usize(a.multi_start, "multi_start", 1),
        seed: ctx.u64(a.seed, "seed", 0),
        nelder_mead: !a.no_nelder_mead,
        ..FitOptions::default()
    };
    let init_j0 = model.mu_matrix_j0().map_err(|e| AppError::input(e.to_string()))?;
    let init_j1 = model.mu_matrix_j1().map_err(|e| AppError::input(e.to_string()))?;
    let result = fit::fit_mu(&data, &init_j0, &init_j1, &model, &field, &options)
        .map_err(|e| AppError::numeric(format!("fit failed: {e}")))?;

    let result_json = serde_json::to_string_pretty(&result).expect("result serializes");
    write_file(&ctx.out, "fit_mqdt.json", &format!("{result_json}\n"))?;

    // fitted spectrum on the data grid
    let fitted: Vec<f64> = result.params.iter().map(|&(_, v)| v).collect();
    let mut refit = model.clone();
    refit.mu_j0 = vec![vec![fitted[0], fitted[1]], vec![fitted[1], fitted[2]]];
    refit.mu_j1 = vec![
        vec![fitted[3], fitted[4], fitted[5]],
        vec![fitted[4], fitted[6], fitted[7]],
        vec![fitted[5], fitted[7], fitted[8]],
    ];
    let sm = SpectrumModel::build(&refit)
        .map_err(|e| AppError::numeric(format!("fitted model invalid: {e}")))?;
    let deltas: Vec<f64> = data.rows().iter().map(|r| r.delta_ghz).collect();
    let rates = spectrum::rate_series(&deltas, &refit, &sm, &field)
        .map_err(|e| AppError::numeric(format!("fitted model evaluation failed: {e}")))?;
    let rows: Vec<Vec<f64>> = deltas.iter().zip(&rates).map(|(&d, &r)| vec![d, r]).collect();
    let header = vec![
        format!("model_hash: {model_hash}"),
        format!("field: {field_json}"),
        format!("data: {}", a.data.display()),
    ];
    let csv_path = write_file(
        &ctx.out,
        "fit_mqdt.csv",
        &csv_text(&header, "delta_ghz, rate_fit_per_s", &rows),
    )?;
    if ctx.svg {
        let series = vec![
            svg::Series {
                label: "data".into(),
                points: data.rows().iter().map(|r| (r.delta_ghz, r.gamma_ls)).collect(),
            },
            svg::Series {
                label: "fit".into(),
                points: deltas.iter().cloned().zip(rates.iter().cloned()).collect(),
            },
        ];
        let axes = svg::Axes {
            x_label: "detuning (GHz)".into(),
            y_label: "rate (1/s)".into(),
            log_y: true,
        };
        write_file(&ctx.out, "fit_mqdt.svg", &svg::render_svg(&series, &axes).map_err(AppError::numeric)?)?;
    }
    let resolved = json!({
        "data": a.data.display().to_string(),
        "model": model_path.as_ref().map(|p| p.display().to_string()),
        "model_hash": model_hash,
        "field": field_json,
        "multi_start": options.multi_start,
        "seed": options.seed,
        "nelder_mead": options.nelder_mead,
    });
    write_run_json(ctx, "fit-mqdt", &resolved)?;
    Ok(format!(
        "fit-mqdt: residual_norm={:.6e} converged={} rank_deficient={} -> {}",
        result.residual_norm,
        result.converged,
        result.rank_deficient,
        csv_path.display()
    ))
}

fn run_fit_two_level(ctx: &Ctx, a: &FitTwoLevelArgs) -> AppResult<String> {
    let data = fit::load_spectrum_csv(&a.data.display().to_string())
        .map_err(|e| AppError::input(format!("cannot load data: {e}")))?;
    let init_gamma_ghz = ctx.f64(a.init_gamma_ghz, "init_gamma_ghz", 1.0);
    let init_delta_plus = ctx.f64(a.init_delta_plus_ghz, "init_delta_plus_ghz", -0.5);
    let init = TwoLevelParams {
        gamma: 2.0 * std::f64::consts::PI * init_gamma_ghz * 1e9,
        delta_plus_ghz: init_delta_plus,
        dipole_ea0: 1.46,
    };
    // default amplitude from the peak: the on-resonance model value is A/Gamma
    let peak = data.rows().iter().map(|r| r.gamma_ls).fold(0.0f64, f64::max);
    let init_amplitude = ctx.f64(a.init_amplitude, "init_amplitude", peak * init.gamma);
    let result = fit::fit_two_level(&data, &init, init_amplitude, &FitOptions::default())
        .map_err(|e| AppError::numeric(format!("fit failed: {e}")))?;

    let result_json = serde_json::to_string_pretty(&result).expect("result serializes");
    write_file(&ctx.out, "fit_two_level.json", &format!("{result_json}\n"))?;
    let gamma = result.param("gamma").expect("named param");
    let dplus = result.param("delta_plus_ghz").expect("named param");
    let amp = result.param("amplitude").expect("named param");
    let rows: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .map(|r| vec![r.delta_ghz, fit::two_level_model(r.delta_ghz, gamma, dplus, amp)])
        .collect();
    let header = vec![format!("data: {}", a.data.display())];
    let csv_path = write_file(
        &ctx.out,
        "fit_two_level.csv",
        &csv_text(&header, "delta_ghz, gamma_ls_fit", &rows),
    )?;
    if ctx.svg {
        let series = vec![
            svg::Series {
                label: "data".into(),
                points: data.rows().iter().map(|r| (r.delta_ghz, r.gamma_ls)).collect(),
            },
            svg::Series {
                label: "fit".into(),
                points: rows.iter().map(|r| (r[0], r[1])).collect(),
            },
        ];
        let axes = svg::Axes {
            x_label: "detuning (GHz)".into(),
            y_label: "Gamma_LS".into(),
            log_y: false,
        };
        write_file(
            &ctx.out,
            "fit_two_level.svg",
            &svg::render_svg(&series, &axes).map_err(AppError::numeric)?,
        )?;
    }
    let resolved = json!({
        "data": a.data.display().to_string(),
        "init_gamma_ghz": init_gamma_ghz,
        "init_delta_plus_ghz": init_delta_plus,
        "init_amplitude": init_amplitude,
    });
    write_run_json(ctx, "fit-two-level", &resolved)?;
    Ok(format!(
        "fit-two-level: gamma/2pi={:.4} GHz delta_plus={:.4} GHz converged={} -> {}",
        gamma / (2.0 * std::f64::consts::PI * 1e9),
        dplus,
        result.converged,
        csv_path.display()
    ))
}

fn pulse_from_args(ctx: &Ctx, a: &SimArgs) -> AppResult<(PulseConfig, Value)> {
    let omega_r_mhz = ctx.f64(a.omega_r_mhz, "omega_r_mhz", 0.7);
    let delta_ghz = ctx.f64(a.delta_ghz, "delta_ghz", -5.0);
    let gamma_ghz = ctx.f64(a.gamma_ghz, "gamma_ghz", 0.92);
    let uint_mhz = ctx.f64(a.uint_mhz, "uint_mhz", 1000.0);
    let fg = ctx.f64(a.fg, "fg", 0.994);
    let kappa = ctx.f64(a.kappa, "kappa", 0.7);
    let apply_kappa = !(a.no_kappa
        || ctx.config.get("no_kappa").and_then(Value::as_bool).unwrap_or(false));
    let dipole = ctx.f64(a.dipole, "dipole", 1.46);
    let tau = 2.0 * std::f64::consts::PI;
    let omega_r = tau * omega_r_mhz * 1e6;
    let mut cfg = PulseConfig {
        omega_r,
        i_c_w_cm2: 0.0,
        dipole_ea0: dipole,
        omega_c_override: None,
        delta: tau * delta_ghz * 1e9,
        gamma: tau * gamma_ghz * 1e9,
        gamma_r: 0.0,
        u_int: tau * uint_mhz * 1e6,
        f_g: fg,
        duration: std::f64::consts::PI / omega_r,
        kappa,
        apply_kappa,
    };
    let gamma_r_flag = a.gamma_r.or_else(|| ctx.config.get("gamma_r").and_then(Value::as_f64));
    let target_pg = ctx.f64(a.target_pg, "target_pg", 0.03);
    let gamma_r = match gamma_r_flag {
        Some(g) => g,
        None => dynamics::calibrate_dephasing(target_pg, &cfg)
            .map_err(|e| AppError::numeric(format!("dephasing calibration failed: {e}")))?,
    };
    cfg.gamma_r = gamma_r;
    let resolved = json!({
        "omega_r_mhz": omega_r_mhz,
        "delta_ghz": delta_ghz,
        "gamma_ghz": gamma_ghz,
        "uint_mhz": uint_mhz,
        "fg": fg,
        "kappa": kappa,
        "apply_kappa": apply_kappa,
        "dipole_ea0": dipole,
        "gamma_r": gamma_r,
        "target_pg": target_pg,
    });
    Ok((cfg, resolved))
}

fn run_sim(ctx: &Ctx, a: &SimArgs, two_atom: bool) -> AppResult<String> {
    let spec = ctx.string(a.ic.clone(), "ic", "0:600:50");
    let ic_grid = parse_grid(&spec)?;
    let (cfg, mut resolved) = pulse_from_args(ctx, a)?;
    resolved["ic"] = json!(spec);
    let header = vec![format!("config: {resolved}")];
    let name = if two_atom { "sim-blockade" } else { "sim-rabi" };
    let (csv_path, summary) = if two_atom {
        let points = dynamics::figure3b_curves(&ic_grid, &cfg)
            .map_err(|e| AppError::numeric(format!("simulation failed: {e}")))?;
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|p| vec![p.ic_w_cm2, p.f_exact, p.f_bound, p.f_gg])
            .collect();
        let path = write_file(
            &ctx.out,
            "fig3b.csv",
            &csv_text(&header, "ic_w_cm2, f_exact, f_bound, f_gg", &rows),
        )?;
        if ctx.svg {
            let series = vec![
                svg::Series {
                    label: "F_exact".into(),
                    points: points.iter().map(|p| (p.ic_w_cm2, p.f_exact)).collect(),
                },
                svg::Series {
                    label: "F_bound".into(),
                    points: points.iter().map(|p| (p.ic_w_cm2, p.f_bound)).collect(),
                },
                svg::Series {
                    label: "F_gg".into(),
                    points: points.iter().map(|p| (p.ic_w_cm2, p.f_gg)).collect(),
                },
            ];
            let axes = svg::Axes {
                x_label: "I_c (W/cm^2)".into(),
                y_label: "fidelity".into(),
                log_y: false,
            };
            write_file(&ctx.out, "fig3b.svg", &svg::render_svg(&series, &axes).map_err(AppError::numeric)?)?;
        }
        let last = points.last().expect("non-empty grid");
        let summary = format!(
            "sim-blockade: {} points, at I_c={} W/cm^2: F_exact={:.4} F_bound={:.4} F_gg={:.4} -> {}",
            points.len(),
            last.ic_w_cm2,
            last.f_exact,
            last.f_bound,
            last.f_gg,
            path.display()
        );
        (path, summary)
    } else {
        let points = dynamics::figure3a_curve(&ic_grid, &cfg)
            .map_err(|e| AppError::numeric(format!("simulation failed: {e}")))?;
        let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.ic_w_cm2, p.p_g]).collect();
        let path = write_file(&ctx.out, "fig3a.csv", &csv_text(&header, "ic_w_cm2, p_g", &rows))?;
        if ctx.svg {
            let series = vec![svg::Series {
                label: "F_g P_g".into(),
                points: points.iter().map(|p| (p.ic_w_cm2, p.p_g)).collect(),
            }];
            let axes = svg::Axes {
                x_label: "I_c (W/cm^2)".into(),
                y_label: "ground survival".into(),
                log_y: false,
            };
            write_file(&ctx.out, "fig3a.svg", &svg::render_svg(&series, &axes).map_err(AppError::numeric)?)?;
        }
        let last = points.last().expect("non-empty grid");
        let summary = format!(
            "sim-rabi: {} points, F_g P_g = {:.4} at I_c = {} W/cm^2 -> {}",
            points.len(),
            last.p_g,
            last.ic_w_cm2,
            path.display()
        );
        (path, summary)
    };
    let _ = csv_path;
    write_run_json(ctx, name, &resolved)?;
    Ok(summary)
}

/// Parse `gr,rg,rr,gg` and reorder to the internal (gg, gr, rg, rr).
fn parse_pops(spec: &str) -> AppResult<[f64; 4]> {
    let vals: Vec<f64> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| AppError::input(format!("bad population {s:?}: {e}")))
        })
        .collect::<AppResult<_>>()?;
    if vals.len() != 4 {
        return Err(AppError::input("populations must be 4 comma-separated values"));
    }
    if vals.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(AppError::input("populations must lie in [0, 1]"));
    }
    Ok([vals[3], vals[0], vals[1], vals[2]])
}

fn run_fidelity(ctx: &Ctx, a: &FidelityArgs) -> AppResult<String> {
    let pops_tg = parse_pops(&a.pops_tg)?;
    let pops_2tg = parse_pops(&a.pops_2tg)?;
    let bound = dynamics::bell_bound(&pops_tg, &pops_2tg);
    let resolved = json!({ "pops_tg": a.pops_tg, "pops_2tg": a.pops_2tg });
    let header = vec![format!("config: {resolved}")];
    let path = write_file(&ctx.out, "fidelity.csv", &csv_text(&header, "bound", &[vec![bound]]))?;
    write_run_json(ctx, "fidelity", &resolved)?;
    Ok(format!("bound={bound:.4} -> {}", path.display()))
}

fn run_error_budget(ctx: &Ctx, a: &BudgetArgs) -> AppResult<String> {
    let scheme_name = ctx.string(a.scheme.clone(), "scheme", "ground");
    let variant = match scheme_name.as_str() {
        "ground" => Variant::GroundShift,
        "rydberg" => Variant::RydbergShift,
        other => {
            return Err(AppError::input(format!(
                "unknown scheme {other:?} (expected ground or rydberg)"
            )))
        }
    };
    let scheme = Scheme {
        variant,
        c_rot: ctx.f64(a.c_rot, "c_rot", 1.0),
        c_sc: ctx.f64(a.c_sc, "c_sc", 1.0),
    };
    let spec = ctx.string(a.eps.clone(), "eps", "1e-4:1e-2");
    let eps_grid = parse_log_grid(&spec)?;
    let gamma = ctx.f64(a.gamma, "gamma", 1.0);
    let gamma_r = ctx.f64(a.gamma_r, "gamma_r", 1e-4);
    let budgets: Vec<_> = eps_grid
        .iter()
        .map(|&e| errbudget::optimize_control(&scheme, e, gamma, gamma_r))
        .collect::<Result<_, _>>()
        .map_err(|e| AppError::numeric(format!("optimization failed: {e}")))?;
    let rows: Vec<Vec<f64>> = eps_grid
        .iter()
        .zip(&budgets)
        .map(|(&e, b)| vec![e, b.delta_opt, b.omega_c_sq_opt, b.eps_rot, b.eps_sc])
        .collect();
    let resolved = json!({
        "scheme": scheme_name,
        "eps": spec,
        "gamma": gamma,
        "gamma_r": gamma_r,
        "c_rot": scheme.c_rot,
        "c_sc": scheme.c_sc,
    });
    let header = vec![format!("config: {resolved}")];
    let path = write_file(
        &ctx.out,
        "errbudget.csv",
        &csv_text(&header, "eps, delta_opt, omega_c_sq_opt, eps_rot, eps_sc", &rows),
    )?;
    if ctx.svg {
        let series = vec![
            svg::Series {
                label: "Omega_c^2".into(),
                points: eps_grid.iter().zip(&budgets).map(|(&e, b)| (e.log10(), b.omega_c_sq_opt)).collect(),
            },
            svg::Series {
                label: "Delta".into(),
                points: eps_grid.iter().zip(&budgets).map(|(&e, b)| (e.log10(), b.delta_opt)).collect(),
            },
        ];
        let axes = svg::Axes {
            x_label: "log10 eps".into(),
            y_label: "optimal settings".into(),
            log_y: true,
        };
        write_file(&ctx.out, "errbudget.svg", &svg::render_svg(&series, &axes).map_err(AppError::numeric)?)?;
    }
    write_run_json(ctx, "error-budget", &resolved)?;
    let wc2: Vec<f64> = budgets.iter().map(|b| b.omega_c_sq_opt).collect();
    let dl: Vec<f64> = budgets.iter().map(|b| b.delta_opt).collect();
    Ok(format!(
        "error-budget ({scheme_name}): {} points, slope(Omega_c^2)={:.3} slope(Delta)={:.3} -> {}",
        eps_grid.len(),
        errbudget::loglog_slope(&eps_grid, &wc2),
        errbudget::loglog_slope(&eps_grid, &dl),
        path.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoint_inclusive() {
        let g = parse_grid("-35:10:0.05").unwrap();
        assert_eq!(g.len(), 901);
        assert_eq!(g[0], -35.0);
        assert!((g[900] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn grid_single_value() {
        assert_eq!(parse_grid("600").unwrap(), vec![600.0]);
    }

    #[test]
    fn grid_rejects_bad_specs() {
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("0:1:-1").is_err());
        assert!(parse_grid("a:b:c").is_err());
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn log_grid_default_count() {
        let g = parse_log_grid("1e-4:1e-2").unwrap();
        assert_eq!(g.len(), 50);
        assert!((g[0] - 1e-4).abs() < 1e-12);
        assert!((g[49] - 1e-2).abs() < 1e-6);
    }

    #[test]
    fn pops_reorder() {
        // input order gr, rg, rr, gg; internal order gg, gr, rg, rr
        let p = parse_pops("0.487,0.494,0.005,0.014").unwrap();
        assert_eq!(p, [0.014, 0.487, 0.494, 0.005]);
    }

    #[test]
    fn constants_hash_is_stable() {
        assert_eq!(constants_hash(), constants_hash());
        assert_eq!(constants_hash().len(), 64);
    }
}
