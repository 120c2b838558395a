//! `flattop`: flat-top beam profiles, SLM holograms, Rydberg gate
//! simulations and calibration fits from the command line.

mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flattop_core::calib::{
    crosstalk_eta, decompose_hg, fit_damped_rabi, fit_temperature, invert_trap, reconstruct_field, IntensityMapping,
    IonizationMap,
};
use flattop_core::flattop::{
    asymptotic_profile, flattop_profile, fourier_flattop, hankel_flattop, hg_coefficients, lg_coefficients, lg_flattop,
    FlatTopOrder,
};
use flattop_core::hologram::{
    compose, export_mask, optimize_correction, phase_mask, simulate_far_field, target_from_flattop, uniformity_score,
    FarFieldSetup, OptimizeOptions, SlmSpec, ZernikeCorrection,
};
use flattop_core::propagation::{field_xyz, taylor_coefficients, taylor_eval, FlatTopBeam1d};
use flattop_core::qsim::{cz_gate, rabi_scan, rederive_protocol, trap_frequencies, GateConfig, SamplingMode, TrapSpec, RB87_MASS_KG};
use flattop_core::Error;
use serde::Serialize;

use manifest::RunManifest;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Parser)]
#[command(name = "flattop", version, about = "Flat-top beams, SLM holograms and Rydberg gate simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Flat-top profile, expansion coefficients and transforms
    Profile(ProfileArgs),
    /// Field of a propagating flat-top and its near-focus Taylor expansion
    Propagate(PropagateArgs),
    /// Synthesize an SLM phase mask and check its far field
    Hologram(HologramArgs),
    /// Thermal Monte Carlo gate simulations
    #[command(subcommand)]
    Simulate(Simulate),
    /// Fit measured curves
    #[command(subcommand)]
    Fit(Fit),
    /// Invert calibration measurements
    #[command(subcommand)]
    Calibrate(Calibrate),
}

#[derive(Debug, Subcommand)]
enum Simulate {
    /// Rabi oscillations of target and neighbour atoms
    Rabi(RabiArgs),
    /// CZ gate fidelity and error budget
    Cz(CzArgs),
}

#[derive(Debug, Subcommand)]
enum Fit {
    /// Damped Rabi oscillation fit of a `t_us,p` CSV
    Rabi(FitRabiArgs),
    /// Temperature from a `t_us,survival` release-recapture CSV
    Temperature(FitTemperatureArgs),
}

#[derive(Debug, Subcommand)]
enum Calibrate {
    /// Trap depth and waist from trap frequencies
    Trap(TrapArgs),
    /// Field and Hermite-Gauss coefficients from an ionization map
    Field(FieldArgs),
}

#[derive(Debug, Args, Serialize)]
struct ProfileArgs {
    /// Even flat-top order N
    #[arg(long)]
    order: usize,
    /// Radial Laguerre-Gauss profile instead of the Cartesian one
    #[arg(long)]
    lg: bool,
    /// Half-width of the sampled range, in waists
    #[arg(long, default_value_t = 6.0)]
    x_max: f64,
    /// Number of samples (odd, so that x = 0 is included)
    #[arg(long, default_value_t = 241)]
    points: usize,
    #[arg(long, default_value = "profile.csv")]
    out: PathBuf,
    /// Write the mode coefficients as JSON
    #[arg(long)]
    coefficients_out: Option<PathBuf>,
    /// Write the Fourier (or Hankel, with --lg) transform as CSV
    #[arg(long)]
    transform_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PropagateArgs {
    /// Even flat-top order N
    #[arg(long)]
    order: usize,
    /// Propagation distances in Rayleigh lengths
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
    z: Vec<f64>,
    /// Half-width of the transverse range, in waists
    #[arg(long, default_value_t = 6.0)]
    x_max: f64,
    #[arg(long, default_value_t = 241)]
    points: usize,
    #[arg(long, default_value = "field.csv")]
    out: PathBuf,
    /// Also compare the on-axis field of the N×N beam with its Taylor expansion
    #[arg(long)]
    taylor_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct HologramArgs {
    /// Orders N M of the flat-top along x and y
    #[arg(long, num_args = 2, value_names = ["N", "M"])]
    order: Vec<usize>,
    /// Blazed-grating period in pixels
    #[arg(long, default_value_t = 8.0)]
    grating: f64,
    /// SLM side length in pixels
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(long, default_value_t = 12.5)]
    pitch_um: f64,
    /// Focal-plane waists per unit spatial frequency step of the SLM
    #[arg(long, default_value_t = 0.04)]
    scale: f64,
    /// Waist of the Gaussian illumination in pixels
    #[arg(long, default_value_t = 60.0)]
    waist_px: f64,
    /// Largest amplitude boost when compensating the illumination
    #[arg(long, default_value_t = 100.0)]
    max_gain: f64,
    /// Mask image (png) or raw phase file
    #[arg(long, default_value = "mask.png")]
    out: PathBuf,
    /// Simulate the far field and print metrics as JSON
    #[arg(long)]
    verify: bool,
    /// Astigmatism and coma weights (rad) of the illumination
    #[arg(long, num_args = 2, value_names = ["A2", "A3"], allow_negative_numbers = true)]
    aberration: Option<Vec<f64>>,
    /// Search Zernike corrections that maximize far-field uniformity
    #[arg(long)]
    optimize: bool,
    /// Relative intensity bounding the flat region
    #[arg(long, default_value_t = 0.99)]
    flat_level: f64,
    /// Write the metrics JSON to this file as well
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GateInputs {
    /// JSON gate configuration; omitted fields take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Thermal trajectories
    #[arg(long, default_value_t = 20)]
    n_traj: usize,
    /// Override the atom temperature
    #[arg(long)]
    temperature_uk: Option<f64>,
    /// Override the target two-photon Rabi frequency Ω̄/2π
    #[arg(long)]
    omega_bar_mhz: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct RabiArgs {
    #[command(flatten)]
    inputs: GateInputs,
    #[arg(long, default_value_t = 2000.0)]
    t_max_ns: f64,
    #[arg(long, default_value_t = 20.0)]
    t_step_ns: f64,
    #[arg(long, default_value = "rabi.csv")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CzArgs {
    #[command(flatten)]
    inputs: GateInputs,
    /// Use the configured protocol as is instead of re-optimizing pulse area and phase jump
    #[arg(long)]
    no_rederive: bool,
    #[arg(long, default_value = "cz.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FitRabiArgs {
    /// CSV with columns t_us,p
    #[arg(long)]
    data: PathBuf,
    /// Target Rabi frequency Ω̄/2π for the crosstalk ratio
    #[arg(long)]
    omega_bar_mhz: Option<f64>,
    #[arg(long, default_value = "fit.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FitTemperatureArgs {
    /// CSV with columns t_us,survival
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 800.0)]
    depth_uk: f64,
    #[arg(long, default_value_t = 1.4)]
    waist_um: f64,
    #[arg(long, default_value_t = 813.0)]
    wavelength_nm: f64,
    #[arg(long, default_value_t = RB87_MASS_KG)]
    mass_kg: f64,
    #[arg(long, default_value_t = 10_000)]
    n_mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "temperature.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrapArgs {
    #[arg(long)]
    omega_r_khz: f64,
    #[arg(long)]
    omega_z_khz: f64,
    #[arg(long, default_value_t = 813.0)]
    wavelength_nm: f64,
    #[arg(long, default_value_t = RB87_MASS_KG)]
    mass_kg: f64,
    #[arg(long, default_value = "trap.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FieldArgs {
    /// CSV with columns x_um,y_um,p (survival probability)
    #[arg(long)]
    map: PathBuf,
    /// JSON survival-to-intensity mapping; default I ∝ 1 − p
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    e0: f64,
    #[arg(long, default_value_t = 1.0)]
    i0: f64,
    #[arg(long, default_value_t = 2.0)]
    waist_um: f64,
    /// Highest mode index n, m kept
    #[arg(long, default_value_t = 19)]
    max_order: usize,
    #[arg(long, default_value = "field.json")]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Print a result; a closed stdout is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn symmetric_axis(points: usize, half: f64) -> Result<Vec<f64>, Failure> {
    if points < 3 || points % 2 == 0 {
        return Err(usage("--points must be odd and at least 3"));
    }
    if !(half > 0.0) {
        return Err(usage("the sampled half-width must be positive"));
    }
    let mid = (points - 1) / 2;
    let step = half / mid as f64;
    Ok((0..points).map(|i| (i as f64 - mid as f64) * step).collect())
}

fn profile(args: &ProfileArgs) -> Outcome {
    if args.order % 2 == 1 {
        return Err(usage("--order must be even"));
    }
    let n = args.order;
    let xs = symmetric_axis(args.points, args.x_max)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    let mut outputs = vec![args.out.as_path()];
    if args.lg {
        writeln!(out, "r,profile")?;
        for x in &xs {
            writeln!(out, "{x},{}", lg_flattop(n, x.abs()))?;
        }
    } else {
        writeln!(out, "x,profile,asymptotic")?;
        for x in &xs {
            writeln!(out, "{x},{},{}", flattop_profile(n as f64, *x), asymptotic_profile(n, *x))?;
        }
    }
    out.flush()?;
    if let Some(path) = &args.coefficients_out {
        let coeffs = if args.lg { lg_coefficients(n)? } else { hg_coefficients(n)? };
        write_json(path, &coeffs)?;
        outputs.push(path);
    }
    if let Some(path) = &args.transform_out {
        let mut t = BufWriter::new(File::create(path)?);
        writeln!(t, "{}", if args.lg { "k,hankel" } else { "t,fourier" })?;
        for x in xs.iter().filter(|x| **x >= 0.0) {
            let v = if args.lg { hankel_flattop(n, *x) } else { fourier_flattop(n, *x) };
            writeln!(t, "{x},{v}")?;
        }
        t.flush()?;
        outputs.push(path);
    }
    RunManifest::new("profile", to_value(args), None).finish(&[], &outputs)?;
    Ok(())
}

fn propagate(args: &PropagateArgs) -> Outcome {
    if args.order % 2 == 1 {
        return Err(usage("--order must be even"));
    }
    let beam = FlatTopBeam1d::new(args.order)?;
    let xs = symmetric_axis(args.points, args.x_max)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    writeln!(out, "z,x,re,im,intensity")?;
    for z in &args.z {
        for x in &xs {
            let e = beam.field(*x, *z);
            writeln!(out, "{z},{x},{},{},{}", e.re, e.im, e.norm_sqr())?;
        }
    }
    out.flush()?;
    let mut outputs = vec![args.out.as_path()];
    if let Some(path) = &args.taylor_out {
        let order = FlatTopOrder::square(args.order)?;
        let terms = taylor_coefficients(args.order)?;
        let mut t = BufWriter::new(File::create(path)?);
        writeln!(t, "z,exact_re,exact_im,taylor_re,taylor_im,abs_error")?;
        for k in 0..25 {
            let z = 1e-3 * 10f64.powf(k as f64 / 12.0);
            let exact = field_xyz(order, 0.0, 0.0, z, None)?;
            let approx = taylor_eval(&terms, 0.0, 0.0, z);
            writeln!(t, "{z},{},{},{},{},{}", exact.re, exact.im, approx.re, approx.im, (exact - approx).norm())?;
        }
        t.flush()?;
        outputs.push(path);
    }
    RunManifest::new("propagate", to_value(args), None).finish(&[], &outputs)?;
    Ok(())
}

#[derive(Serialize)]
struct HologramReport {
    metrics: Option<flattop_core::hologram::FarFieldMetrics>,
    correction: Option<ZernikeCorrection>,
    evaluations: Option<usize>,
}

fn hologram(args: &HologramArgs) -> Outcome {
    let order = FlatTopOrder::new(args.order[0], args.order[1])?;
    let slm = SlmSpec::new(args.size, args.size, args.pitch_um, args.grating)?;
    let target = target_from_flattop(order, &slm, args.scale)?.compensate_input(args.waist_px, args.max_gain)?;
    let mask = phase_mask(&target, &slm)?;
    export_mask(&mask, &args.out)?;
    let mut outputs = vec![args.out.clone()];
    if args.verify || args.optimize {
        let mut setup = FarFieldSetup::new(order, args.scale, args.waist_px).with_flat_level(args.flat_level);
        if let Some(a) = &args.aberration {
            setup = setup.with_aberration(ZernikeCorrection::new(a[0], a[1], args.waist_px)?);
        }
        let mut report = HologramReport {
            metrics: None,
            correction: None,
            evaluations: None,
        };
        let mut final_mask = mask.clone();
        if args.optimize {
            let start = ZernikeCorrection::new(0.0, 0.0, args.waist_px)?;
            let best = optimize_correction(start, OptimizeOptions::default(), |c| {
                Ok(uniformity_score(&simulate_far_field(&compose(&mask, c), &setup)?.metrics))
            })?;
            final_mask = compose(&mask, &best.correction);
            report.correction = Some(best.correction);
            report.evaluations = Some(best.evaluations);
        }
        report.metrics = Some(simulate_far_field(&final_mask, &setup)?.metrics);
        let text = serde_json::to_string_pretty(&report)?;
        emit(&text);
        if let Some(path) = &args.metrics_out {
            std::fs::write(path, text + "\n")?;
            outputs.push(path.clone());
        }
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    RunManifest::new("hologram", to_value(args), None).finish(&[], &refs)?;
    Ok(())
}

fn gate_config(inputs: &GateInputs) -> Result<GateConfig, Failure> {
    let mut config: GateConfig = match &inputs.config {
        Some(path) => serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?,
        None => GateConfig::default(),
    };
    if let Some(t) = inputs.temperature_uk {
        config.trap = config.trap.with_temperature(t * 1e-6)?;
    }
    if let Some(w) = inputs.omega_bar_mhz {
        config.two_photon_rabi_rad_s = TWO_PI * w * 1e6;
    }
    config.validate()?;
    Ok(config)
}

fn input_files(inputs: &GateInputs) -> Vec<&Path> {
    inputs.config.iter().map(PathBuf::as_path).collect()
}

fn simulate_rabi(args: &RabiArgs) -> Outcome {
    let config = gate_config(&args.inputs)?;
    if !(args.t_step_ns > 0.0 && args.t_max_ns >= 0.0) {
        return Err(usage("times must be positive"));
    }
    let steps = (args.t_max_ns / args.t_step_ns).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * args.t_step_ns * 1e-9).collect();
    let curves = rabi_scan(&config, &times, args.inputs.n_traj, args.inputs.seed)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    let mut header = vec!["t_ns".to_string()];
    header.extend((0..curves.targets.len()).map(|i| format!("target_{i}")));
    header.extend((0..curves.spectators.len()).map(|i| format!("neighbour_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for (k, t) in times.iter().enumerate() {
        let row: Vec<String> = std::iter::once(format!("{}", t * 1e9))
            .chain(curves.targets.iter().chain(&curves.spectators).map(|c| format!("{}", c[k])))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    RunManifest::new("simulate rabi", to_value(&config), Some(args.inputs.seed))
        .finish(&input_files(&args.inputs), &[&args.out])?;
    Ok(())
}

#[derive(Serialize)]
struct CzOutput {
    report: flattop_core::qsim::CzReport,
    dominant_channel: &'static str,
    fidelity: f64,
}

fn simulate_cz(args: &CzArgs) -> Outcome {
    let config = gate_config(&args.inputs)?;
    let protocol = if args.no_rederive {
        config.protocol
    } else {
        rederive_protocol(&config)?
    };
    let report = cz_gate(&config, &protocol, args.inputs.n_traj, args.inputs.seed)?;
    let output = CzOutput {
        dominant_channel: report.budget.dominant(),
        fidelity: 1.0 - report.budget.total,
        report,
    };
    write_json(&args.out, &output)?;
    emit(&serde_json::to_string_pretty(&output)?);
    RunManifest::new("simulate cz", to_value(&config), Some(args.inputs.seed))
        .finish(&input_files(&args.inputs), &[&args.out])?;
    Ok(())
}

fn read_columns(path: &Path, names: [&str; 2]) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| usage(format!("{} lacks a `{name}` column", path.display())))
    };
    let (a, b) = (index(names[0])?, index(names[1])?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record?;
        let parse = |i: usize| {
            record
                .get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| usage(format!("bad number in {}", path.display())))
        };
        xs.push(parse(a)?);
        ys.push(parse(b)?);
    }
    Ok((xs, ys))
}

#[derive(Serialize)]
struct RabiFitOutput {
    fit: flattop_core::calib::FitResult,
    omega0_mhz: f64,
    delta_mhz: f64,
    eta: Option<f64>,
}

fn fit_rabi(args: &FitRabiArgs) -> Outcome {
    let (t_us, p) = read_columns(&args.data, ["t_us", "p"])?;
    let t: Vec<f64> = t_us.iter().map(|v| v * 1e-6).collect();
    let fit = fit_damped_rabi(&t, &p)?;
    let eta = match args.omega_bar_mhz {
        Some(w) => Some(crosstalk_eta(&fit, TWO_PI * w * 1e6)?),
        None => None,
    };
    let output = RabiFitOutput {
        omega0_mhz: fit.omega0_rad_s / TWO_PI / 1e6,
        delta_mhz: fit.delta_rad_s / TWO_PI / 1e6,
        fit,
        eta,
    };
    write_json(&args.out, &output)?;
    emit(&serde_json::to_string_pretty(&output)?);
    RunManifest::new("fit rabi", to_value(args), None).finish(&[&args.data], &[&args.out])?;
    Ok(())
}

#[derive(Serialize)]
struct TemperatureOutput {
    temperature_uk: f64,
}

fn fit_temperature_cmd(args: &FitTemperatureArgs) -> Outcome {
    let (t_us, survival) = read_columns(&args.data, ["t_us", "survival"])?;
    let t: Vec<f64> = t_us.iter().map(|v| v * 1e-6).collect();
    let trap = TrapSpec::new(args.depth_uk, args.waist_um, args.wavelength_nm, 0.0, args.mass_kg)?;
    let temperature = fit_temperature(&trap, &t, &survival, args.n_mc, SamplingMode::Harmonic, args.seed)?;
    let output = TemperatureOutput {
        temperature_uk: temperature * 1e6,
    };
    write_json(&args.out, &output)?;
    emit(&serde_json::to_string_pretty(&output)?);
    RunManifest::new("fit temperature", to_value(args), Some(args.seed)).finish(&[&args.data], &[&args.out])?;
    Ok(())
}

#[derive(Serialize)]
struct TrapOutput {
    depth_uk: f64,
    waist_um: f64,
    rayleigh_um: f64,
    omega_r_khz: f64,
    omega_z_khz: f64,
    trap: TrapSpec,
}

fn calibrate_trap(args: &TrapArgs) -> Outcome {
    let trap = invert_trap(
        TWO_PI * args.omega_r_khz * 1e3,
        TWO_PI * args.omega_z_khz * 1e3,
        args.wavelength_nm * 1e-9,
        args.mass_kg,
    )?;
    let (wr, wz) = trap_frequencies(&trap);
    let output = TrapOutput {
        depth_uk: trap.depth_uk(),
        waist_um: trap.waist_m * 1e6,
        rayleigh_um: trap.rayleigh_m * 1e6,
        omega_r_khz: wr / TWO_PI / 1e3,
        omega_z_khz: wz / TWO_PI / 1e3,
        trap,
    };
    write_json(&args.out, &output)?;
    emit(&serde_json::to_string_pretty(&output)?);
    RunManifest::new("calibrate trap", to_value(args), None).finish(&[], &[&args.out])?;
    Ok(())
}

fn calibrate_field(args: &FieldArgs) -> Outcome {
    let map = IonizationMap::read_csv(&args.map)?;
    let mapping = match &args.mapping {
        Some(path) => serde_json::from_reader::<_, IntensityMapping>(File::open(path)?)?,
        None => IntensityMapping::Loss,
    };
    let field = reconstruct_field(&map, &mapping, args.e0, args.i0)?;
    let decomposition = decompose_hg(&field, args.waist_um, args.max_order)?;
    write_json(&args.out, &decomposition)?;
    emit(&format!("{{\"reconstruction_error\": {}}}", decomposition.reconstruction_error));
    let mut inputs = vec![args.map.as_path()];
    inputs.extend(args.mapping.iter().map(PathBuf::as_path));
    RunManifest::new("calibrate field", to_value(args), None).finish(&inputs, &[&args.out])?;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Profile(a) => profile(&a),
        Command::Propagate(a) => propagate(&a),
        Command::Hologram(a) => hologram(&a),
        Command::Simulate(Simulate::Rabi(a)) => simulate_rabi(&a),
        Command::Simulate(Simulate::Cz(a)) => simulate_cz(&a),
        Command::Fit(Fit::Rabi(a)) => fit_rabi(&a),
        Command::Fit(Fit::Temperature(a)) => fit_temperature_cmd(&a),
        Command::Calibrate(Calibrate::Trap(a)) => calibrate_trap(&a),
        Command::Calibrate(Calibrate::Field(a)) => calibrate_field(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
