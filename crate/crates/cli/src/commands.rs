use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use ramanmem::dephasing::{canonical_orientation, efficiency_curve, lifetime_1e};
use ramanmem::fit::{
    fit_dephasing_curve, fit_fluorescence_tail, fit_noise_curve, DataSet, DephasingFitOptions, FitOptions,
};
use ramanmem::mbsolver::greens_kernels;
use ramanmem::noise::{pump_populations, raman_noise, NoiseEngine};
use ramanmem::{FitResult, SpinSystem};
use serde::Serialize;

use crate::config::{Overrides, Resolved, RunConfig};
use crate::table::{ingest_csv, metadata, num, write_table, Schema};
use crate::CliError;

/// Bandwidth of the 300 ps pulses, used for the time-bandwidth product.
pub const PULSE_BANDWIDTH_GHZ: f64 = 1.5;

#[derive(Debug, Parser)]
#[command(name = "ramanmem", version, about = "Raman memory noise, dephasing and fitting")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; built-in reference values when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Optical depth.
    #[arg(long, global = true)]
    pub d: Option<f64>,
    /// Homogeneous linewidth γ of the optical transition in MHz.
    #[arg(long, global = true)]
    pub gamma_mhz: Option<f64>,
    /// Signal detuning Δ from the excited state in GHz.
    #[arg(long, global = true)]
    pub detuning_ghz: Option<f64>,
    /// Ground-state splitting δ in GHz.
    #[arg(long, global = true)]
    pub stokes_shift_ghz: Option<f64>,
    /// Control pulse energy W in GHz.
    #[arg(long, global = true)]
    pub pulse_energy_ghz: Option<f64>,
    /// Add a wall-clock timestamp to output headers (breaks byte-identity).
    #[arg(long, global = true)]
    pub stamp: bool,
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            d: self.d,
            gamma_mhz: self.gamma_mhz,
            detuning_ghz: self.detuning_ghz,
            stokes_shift_ghz: self.stokes_shift_ghz,
            pulse_energy_ghz: self.pulse_energy_ghz,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noise budget versus pump power.
    SimulateNoise(NoiseArgs),
    /// Retrieval efficiency versus storage time.
    SimulateDephasing(DephasingArgs),
    /// Fit a model to measured data.
    Fit {
        #[command(subcommand)]
        kind: FitKind,
    },
    /// Cartesian sweep over config values, one row per point.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Comma-separated pump powers in mW (negative: blue transition).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub pump: Vec<f64>,
    /// Evenly spaced pump powers MIN:MAX:N in mW.
    #[arg(long, allow_hyphen_values = true)]
    pub pump_range: Option<String>,
    /// Block the anti-Stokes light at the detector.
    #[arg(long)]
    pub no_antistokes_filter_pass: bool,
    /// Noise table; `[output].noise` when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stokes/anti-Stokes fraction table; `[output].fractions` when omitted.
    #[arg(long)]
    pub fractions_out: Option<PathBuf>,
    /// Also write the Green's kernels at the first pump point.
    #[arg(long)]
    pub dump_kernels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DephasingArgs {
    /// Field strength in gauss.
    #[arg(long)]
    pub b_gauss: Option<f64>,
    /// Polar angle of the field from the quantisation axis.
    #[arg(long, allow_negative_numbers = true)]
    pub theta_deg: Option<f64>,
    /// Azimuth of the field.
    #[arg(long, allow_negative_numbers = true)]
    pub phi_deg: Option<f64>,
    /// Efficiency at zero storage time.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Last storage time in the table.
    #[arg(long)]
    pub t_max_us: Option<f64>,
    /// Number of storage times from 0 to the last one.
    #[arg(long)]
    pub n_points: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV data file.
    #[arg(long)]
    pub data: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FitKind {
    /// Columns `pump_mw,s_observed[,sigma]`; fits P_s and κ.
    Noise(FitArgs),
    /// Columns `t_ns,efficiency[,sigma]`; fits B, θ, φ and the scale.
    Dephasing(FitArgs),
    /// Columns `t_ns,counts[,sigma]`; fits the decay time.
    Fluorescence {
        #[command(flatten)]
        args: FitArgs,
        /// Fit window T0:T1 in ns; the whole histogram when omitted.
        #[arg(long)]
        window: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    Noise,
    Dephasing,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `key=v1,v2,...` or `key=MIN:MAX:N` with a dotted config key such as
    /// `ensemble.d`. Repeat for more axes; the first varies slowest.
    #[arg(long = "set", required = true)]
    pub set: Vec<String>,
    #[arg(long, value_enum, default_value_t = Quantity::Noise)]
    pub quantity: Quantity,
    /// Pump power in mW for noise sweeps.
    #[arg(long, allow_hyphen_values = true)]
    pub pump: Option<f64>,
    /// Storage time in µs for dephasing sweeps.
    #[arg(long, default_value_t = 1.0)]
    pub t_us: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.apply(&cli.global.overrides());
    let stamp = cli.global.stamp;
    match &cli.command {
        Command::SimulateNoise(a) => simulate_noise(config, a, stamp, out),
        Command::SimulateDephasing(a) => simulate_dephasing(config, a, stamp, out),
        Command::Fit { kind } => fit(config, kind, stamp, out),
        Command::Sweep(a) => sweep(config, a, stamp, out),
    }
}

/// `MIN:MAX:N`, inclusive of both ends.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("range `{spec}` is not of the form MIN:MAX:N"));
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let [lo, hi, n] = parts[..] else {
        return Err(bad());
    };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    if !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    Ok(match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn simulate_noise(mut config: RunConfig, a: &NoiseArgs, stamp: bool, out: &mut dyn Write) -> Result<(), CliError> {
    if a.no_antistokes_filter_pass {
        config.noise.filter_passes_antistokes = false;
    }
    let mut pumps = a.pump.clone();
    if let Some(r) = &a.pump_range {
        pumps.extend(parse_range(r)?);
    }
    if pumps.is_empty() {
        return Err(CliError::Usage("empty pump sweep: give --pump or --pump-range".into()));
    }
    if let Some(p) = pumps.iter().find(|p| !p.is_finite()) {
        return Err(CliError::Usage(format!("pump power must be finite, got {p}")));
    }
    let r = config.resolve()?;
    let pulse = r.pulse.sample(&r.grid)?;
    let engine = NoiseEngine::new(r.params, pulse.clone(), r.grid)?;
    info!("noise sweep over {} pump values", pumps.len());
    let rows = engine.curve(&pumps, &r.noise)?;
    let fractions = engine.fraction_curve(&pumps, r.noise.p_sat)?;

    let meta = metadata(&config, &r, "simulate-noise", stamp);
    let noise_path = a
        .out
        .clone()
        .unwrap_or_else(|| config.output.path(&config.output.noise));
    let frac_path = a
        .fractions_out
        .clone()
        .unwrap_or_else(|| config.output.path(&config.output.fractions));
    let mut noise_meta = meta.clone();
    noise_meta.push(format!(
        "noise p_sat_mw={} kappa={} filter_passes_antistokes={}",
        num(r.noise.p_sat),
        num(r.noise.kappa),
        r.noise.filter_passes_antistokes
    ));
    write_table(
        &noise_path,
        &noise_meta,
        &[
            "pump_mw",
            "p1",
            "p3",
            "s_stokes_spont",
            "s_stokes_fwm",
            "s_as_spont",
            "s_as_fwm",
            "s_total",
            "s_observed",
        ],
        &rows
            .iter()
            .map(|row| {
                let b = &row.budget;
                [
                    row.pump_mw,
                    row.p1,
                    row.p3,
                    b.s_stokes_spont,
                    b.s_stokes_fwm,
                    b.s_antistokes_spont,
                    b.s_antistokes_fwm,
                    b.s_total,
                    row.s_observed,
                ]
                .map(num)
                .to_vec()
            })
            .collect::<Vec<_>>(),
    )?;
    write_table(
        &frac_path,
        &meta,
        &["pump_mw", "stokes_fraction", "antistokes_fraction"],
        &fractions
            .iter()
            .map(|f| [f.pump_mw, f.stokes_fraction, f.antistokes_fraction].map(num).to_vec())
            .collect::<Vec<_>>(),
    )?;
    writeln!(out, "wrote {}", noise_path.display()).map_err(io)?;
    writeln!(out, "wrote {}", frac_path.display()).map_err(io)?;

    // Plateau: strong blue pumping, P <= -P_s.
    let blue: Vec<usize> = (0..rows.len()).filter(|&k| rows[k].pump_mw <= -r.noise.p_sat).collect();
    if blue.is_empty() {
        writeln!(out, "plateau: no sweep points with pump_mw <= -{}", num(r.noise.p_sat)).map_err(io)?;
    } else {
        let mean = |f: &dyn Fn(usize) -> f64| blue.iter().map(|&k| f(k)).sum::<f64>() / blue.len() as f64;
        writeln!(
            out,
            "plateau (pump_mw <= -{}, {} points): s_observed = {} photons/pulse",
            num(r.noise.p_sat),
            blue.len(),
            num(mean(&|k| rows[k].s_observed))
        )
        .map_err(io)?;
        writeln!(
            out,
            "plateau anti-Stokes fraction = {}",
            num(mean(&|k| fractions[k].antistokes_fraction))
        )
        .map_err(io)?;
    }

    if let Some(path) = &a.dump_kernels {
        let pump = pump_populations(pumps[0], r.noise.p_sat)?;
        let k = greens_kernels(&r.params, &pulse, &pump, &r.grid)?;
        let mut meta = meta;
        meta.push(format!(
            "kernels pump_mw={} p1={} p3={} d={} gamma_rad_per_ns={} delta_s_rad_per_ns={} stokes_shift_rad_per_ns={}",
            num(pumps[0]),
            num(pump.p1()),
            num(pump.p3()),
            num(r.params.d),
            num(r.params.gamma),
            num(r.params.delta_s),
            num(r.params.stokes_shift)
        ));
        meta.push("entries are weight-folded: kernel(tau_i, x_k) * w_k".into());
        let mut recs = Vec::new();
        for (name, m) in [
            ("k_s", &k.k_s),
            ("g_s", &k.g_s),
            ("l_s", &k.l_s),
            ("k_as", &k.k_as),
            ("g_as", &k.g_as),
            ("l_as", &k.l_as),
        ] {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    let v = m[(i, j)];
                    recs.push(vec![
                        name.to_string(),
                        i.to_string(),
                        j.to_string(),
                        num(v.re),
                        num(v.im),
                    ]);
                }
            }
        }
        write_table(path, &meta, &["kernel", "row", "col", "re", "im"], &recs)?;
        writeln!(out, "wrote {}", path.display()).map_err(io)?;
    }
    Ok(())
}

fn simulate_dephasing(
    mut config: RunConfig,
    a: &DephasingArgs,
    stamp: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let f = &mut config.field;
    f.b_gauss = a.b_gauss.unwrap_or(f.b_gauss);
    f.theta_deg = a.theta_deg.unwrap_or(f.theta_deg);
    f.phi_deg = a.phi_deg.unwrap_or(f.phi_deg);
    let d = &mut config.dephasing;
    d.scale = a.scale.unwrap_or(d.scale);
    d.t_max_us = a.t_max_us.unwrap_or(d.t_max_us);
    d.n_points = a.n_points.unwrap_or(d.n_points);
    let r = config.resolve()?;

    let system = SpinSystem::new(r.polarization)?;
    let pops = system.uniform_populations();
    let t_max_ns = r.t_max_us * 1e3;
    let times = linspace(0.0, t_max_ns, r.n_points);
    let curve = efficiency_curve(&times, &r.field, &system, &pops, r.scale)?;
    let lifetime = lifetime_1e(&r.field, &system, &pops, t_max_ns)?;

    let path = a
        .out
        .clone()
        .unwrap_or_else(|| config.output.path(&config.output.dephasing));
    let mut meta = metadata(&config, &r, "simulate-dephasing", stamp);
    meta.push(format!(
        "field b_gauss={} theta_deg={} phi_deg={} polarization={} scale={}",
        num(config.field.b_gauss),
        num(config.field.theta_deg),
        num(config.field.phi_deg),
        r.polarization,
        num(r.scale)
    ));
    write_table(
        &path,
        &meta,
        &["t_ns", "eta_relative", "eta_scaled"],
        &curve
            .iter()
            .map(|p| [p.t_ns, p.eta_relative, p.eta_scaled].map(num).to_vec())
            .collect::<Vec<_>>(),
    )?;
    writeln!(out, "wrote {}", path.display()).map_err(io)?;
    match lifetime {
        Some(t) => {
            writeln!(out, "lifetime_1e_us = {}", num(t / 1e3)).map_err(io)?;
            writeln!(out, "time_bandwidth_product = {}", num(t * PULSE_BANDWIDTH_GHZ)).map_err(io)?;
        }
        None if r.field.b_gauss() == 0.0 => {
            writeln!(out, "lifetime_1e_us = unbounded").map_err(io)?;
            writeln!(out, "time_bandwidth_product = unbounded").map_err(io)?;
        }
        None => {
            writeln!(out, "lifetime_1e_us = not reached within {} us", num(r.t_max_us)).map_err(io)?;
            writeln!(out, "time_bandwidth_product > {}", num(t_max_ns * PULSE_BANDWIDTH_GHZ)).map_err(io)?;
        }
    }
    Ok(())
}

const NOISE_SCHEMA: Schema = Schema::new(&["pump_mw", "s_observed"], &["sigma"]);
const DEPHASING_SCHEMA: Schema = Schema::new(&["t_ns", "efficiency"], &["sigma"]);
const FLUORESCENCE_SCHEMA: Schema = Schema::new(&["t_ns", "counts"], &["sigma"]);

fn load_data(path: &Path, schema: &Schema) -> Result<DataSet, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!("data file {} does not exist", path.display())));
    }
    let t = ingest_csv(path, schema)?;
    let x = t.column(schema.required[0]).expect("validated header");
    let y = t.column(schema.required[1]).expect("validated header");
    let data = match t.column("sigma") {
        Some(s) => DataSet::with_sigma(x, y, s),
        None => DataSet::new(x, y),
    };
    data.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct ParamReport {
    name: String,
    value: f64,
    uncertainty: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FitReport {
    kind: String,
    config_sha256: String,
    data: String,
    converged: bool,
    iterations: usize,
    residual_norm: f64,
    gradient_norm: f64,
    parameters: Vec<ParamReport>,
    derived: Vec<ParamReport>,
    diagnostics: Vec<String>,
}

fn report(kind: &str, config: &RunConfig, data: &Path, fit: &FitResult, derived: Vec<(String, f64)>) -> FitReport {
    let unc = fit.uncertainties();
    FitReport {
        kind: kind.into(),
        config_sha256: config.hash(),
        data: data.display().to_string(),
        converged: fit.converged,
        iterations: fit.iterations,
        residual_norm: fit.residual_norm,
        gradient_norm: fit.gradient_norm,
        parameters: fit
            .names
            .iter()
            .zip(&fit.parameters)
            .zip(&unc)
            .map(|((n, v), u)| ParamReport {
                name: n.clone(),
                value: *v,
                uncertainty: u.is_finite().then_some(*u),
            })
            .collect(),
        derived: derived
            .into_iter()
            .map(|(name, value)| ParamReport {
                name,
                value,
                uncertainty: None,
            })
            .collect(),
        diagnostics: fit.diagnostics.clone(),
    }
}

fn fit(config: RunConfig, kind: &FitKind, stamp: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let r = config.resolve()?;
    let (name, args) = match kind {
        FitKind::Noise(a) => ("noise", a),
        FitKind::Dephasing(a) => ("dephasing", a),
        FitKind::Fluorescence { args, .. } => ("fluorescence", args),
    };
    let (result, derived) = match kind {
        FitKind::Noise(a) => {
            let data = load_data(&a.data, &NOISE_SCHEMA)?;
            let pulse = r.pulse.sample(&r.grid)?;
            let fit = fit_noise_curve(&data, &r.params, &pulse, &r.grid, r.noise.filter_passes_antistokes)?;
            (fit, vec![])
        }
        FitKind::Dephasing(a) => {
            let data = load_data(&a.data, &DEPHASING_SCHEMA)?;
            let system = SpinSystem::new(r.polarization)?;
            let pops = system.uniform_populations();
            let fit = fit_dephasing_curve(&data, &system, &pops, &DephasingFitOptions::default())?;
            let (theta, phi) = canonical_orientation(fit.parameters[1], fit.parameters[2]);
            (
                fit,
                vec![
                    ("theta_deg".to_string(), theta.to_degrees()),
                    ("phi_deg_mod_180".to_string(), phi.to_degrees()),
                ],
            )
        }
        FitKind::Fluorescence { args, window } => {
            let data = load_data(&args.data, &FLUORESCENCE_SCHEMA)?;
            let window = match window {
                Some(w) => parse_window(w)?,
                None => data
                    .x
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(*t), b.max(*t))),
            };
            let fit = fit_fluorescence_tail(&data, window, None, &FitOptions::default())?;
            (fit, vec![("window_start_ns".to_string(), window.0)])
        }
    };

    let rep = report(name, &config, &args.data, &result, derived);
    for line in metadata(&config, &r, &format!("fit {name}"), stamp) {
        writeln!(out, "# {line}").map_err(io)?;
    }
    writeln!(out, "# data {}", args.data.display()).map_err(io)?;
    let status = if rep.converged { "converged" } else { "NOT converged" };
    writeln!(out, "fit {name}: {status} after {} iterations", rep.iterations).map_err(io)?;
    for p in &rep.parameters {
        match p.uncertainty {
            Some(u) => writeln!(out, "{} = {} +/- {}", p.name, num(p.value), num(u)),
            None => writeln!(out, "{} = {} +/- undetermined", p.name, num(p.value)),
        }
        .map_err(io)?;
    }
    for p in &rep.derived {
        writeln!(out, "{} = {}", p.name, num(p.value)).map_err(io)?;
    }
    writeln!(out, "residual_norm = {}", num(rep.residual_norm)).map_err(io)?;
    writeln!(out, "gradient_norm = {}", num(rep.gradient_norm)).map_err(io)?;
    for d in &rep.diagnostics {
        writeln!(out, "note: {d}").map_err(io)?;
    }
    if let Some(path) = &args.json {
        let text = serde_json::to_string_pretty(&rep).expect("report serialises");
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    if !rep.converged {
        return Err(CliError::Compute(format!("{name} fit did not converge")));
    }
    Ok(())
}

fn parse_window(spec: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("window `{spec}` is not of the form T0:T1"));
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

/// One sweep axis: a config key and the raw values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_axis(spec: &str) -> Result<Axis, CliError> {
    let (key, vals) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("`--set {spec}` is not of the form key=v1,v2")))?;
    let key = key.trim().to_string();
    let vals = vals.trim();
    let values: Vec<String> = if vals.split(':').count() == 3 && !vals.contains(',') {
        parse_range(vals)?.into_iter().map(num).collect()
    } else {
        vals.split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect()
    };
    if key.is_empty() || values.is_empty() {
        return Err(CliError::Usage(format!("`--set {spec}` gives no values")));
    }
    Ok(Axis { key, values })
}

/// All index combinations, first axis slowest.
fn cartesian(axes: &[Axis]) -> Vec<Vec<usize>> {
    let mut combos = vec![vec![]];
    for a in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                (0..a.values.len()).map(move |k| {
                    let mut c = c.clone();
                    c.push(k);
                    c
                })
            })
            .collect();
    }
    combos
}

fn sweep(config: RunConfig, a: &SweepArgs, stamp: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let axes = a.set.iter().map(|s| parse_axis(s)).collect::<Result<Vec<_>, _>>()?;
    for (i, ax) in axes.iter().enumerate() {
        if axes[..i].iter().any(|b| b.key == ax.key) {
            return Err(CliError::Usage(format!("`{}` is swept twice", ax.key)));
        }
        config.with_key(&ax.key, &ax.values[0])?;
    }
    let pump = match (a.quantity, a.pump) {
        (Quantity::Noise, None) => return Err(CliError::Usage("noise sweeps need --pump".into())),
        (_, p) => p,
    };
    if !(a.t_us >= 0.0 && a.t_us.is_finite()) {
        return Err(CliError::Usage(format!(
            "--t-us must be finite and >= 0, got {}",
            a.t_us
        )));
    }
    let base = config.resolve()?;

    // Resolve every point before computing anything.
    let combos = cartesian(&axes);
    let mut points = Vec::with_capacity(combos.len());
    for c in &combos {
        let mut cfg = config.clone();
        for (ax, &k) in axes.iter().zip(c) {
            cfg = cfg.with_key(&ax.key, &ax.values[k])?;
        }
        let label: Vec<String> = axes
            .iter()
            .zip(c)
            .map(|(ax, &k)| format!("{}={}", ax.key, ax.values[k]))
            .collect();
        let r = cfg
            .resolve()
            .map_err(|e| CliError::Config(format!("sweep point {}: {e}", label.join(" "))))?;
        points.push((c.clone(), r));
    }

    let mut header: Vec<&str> = axes.iter().map(|ax| ax.key.as_str()).collect();
    match a.quantity {
        Quantity::Noise => header.extend([
            "pump_mw",
            "p1",
            "p3",
            "s_stokes",
            "s_antistokes",
            "s_total",
            "s_observed",
            "antistokes_fraction",
        ]),
        Quantity::Dephasing => header.extend(["t_us", "eta_relative", "eta_scaled", "lifetime_1e_ns"]),
    }

    let mut rows = Vec::with_capacity(points.len());
    for (n, (c, r)) in points.iter().enumerate() {
        info!("sweep point {}/{}", n + 1, points.len());
        let mut row: Vec<String> = axes.iter().zip(c).map(|(ax, &k)| ax.values[k].clone()).collect();
        match a.quantity {
            Quantity::Noise => row.extend(noise_point(r, pump.expect("checked above"))?),
            Quantity::Dephasing => row.extend(dephasing_point(r, a.t_us)?),
        }
        rows.push(row);
    }

    let path = a
        .out
        .clone()
        .unwrap_or_else(|| config.output.path(&config.output.sweep));
    let mut meta = metadata(&config, &base, "sweep", stamp);
    for ax in &axes {
        meta.push(format!("sweep {}={}", ax.key, ax.values.join(",")));
    }
    match a.quantity {
        Quantity::Noise => meta.push(format!("pump_mw {}", num(pump.expect("checked above")))),
        Quantity::Dephasing => meta.push(format!("t_us {}", num(a.t_us))),
    }
    write_table(&path, &meta, &header, &rows)?;
    writeln!(out, "wrote {} ({} points)", path.display(), rows.len()).map_err(io)?;
    Ok(())
}

fn noise_point(r: &Resolved, pump_mw: f64) -> Result<Vec<String>, CliError> {
    let pulse = r.pulse.sample(&r.grid)?;
    let pump = pump_populations(pump_mw, r.noise.p_sat)?;
    let b = raman_noise(&r.params, &pulse, &pump, &r.grid)?;
    let observed = r.noise.kappa * b.detected(r.noise.filter_passes_antistokes);
    let (_, as_frac) = b.fractions()?;
    Ok([
        pump_mw,
        pump.p1(),
        pump.p3(),
        b.stokes(),
        b.antistokes(),
        b.s_total,
        observed,
        as_frac,
    ]
    .map(num)
    .to_vec())
}

fn dephasing_point(r: &Resolved, t_us: f64) -> Result<Vec<String>, CliError> {
    let system = SpinSystem::new(r.polarization)?;
    let pops = system.uniform_populations();
    let t_ns = t_us * 1e3;
    let c = efficiency_curve(&[t_ns], &r.field, &system, &pops, r.scale)?;
    let life = lifetime_1e(&r.field, &system, &pops, r.t_max_us * 1e3)?;
    Ok(vec![
        num(t_us),
        num(c[0].eta_relative),
        num(c[0].eta_scaled),
        life.map_or_else(|| "inf".to_string(), num),
    ])
}
