//! Command-line front end: reads a scenario, runs one subcommand, and writes
//! `<subcommand>.json` plus CSV tables into the output directory.
//!
//! Exit codes: 0 success, 1 invalid config or arguments, 2 domain error,
//! 3 I/O failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::array::{
    apply_spacing_schedule, build_array_with_illumination, build_dual_beam_array, build_vcsel_array, GateWindow,
    Lattice, TrapArray,
};
use crate::config::{parse_scenario, ConfigError, Format, Scenario, SourceKey};
use crate::constants::KB;
use crate::error::Error;
use crate::montecarlo::{fit_exponential, simulate};
use crate::register::{
    collection_efficiency, coherence_time_estimate, crosstalk_map, effective_rabi, stark_diagnostic, QubitRegister,
};
use crate::species::AtomSpecies;
use crate::trapfield::{characterize_site, SiteRecord, TrapSite};

pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "microtrap", version, about = "Microlens-array dipole trap design and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// scenario file (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true, env = "MICROTRAP_OUT")]
    pub out: Option<PathBuf>,
    /// Monte Carlo seed, overrides montecarlo.seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// override a config value, e.g. --set beam.power_mW=20
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// characterize the single trap formed by [beam]
    Trap,
    /// build the trap array and export per-site data
    Array,
    /// run the lattice spacing schedule and report the gate window
    Move,
    /// crosstalk maps and qubit rotations for the [[pulse]] list
    Address,
    /// fluorescence collection and detection table
    Readout,
    /// Monte Carlo loading, loss and heating with a lifetime fit
    Mc,
    /// fit an exponential decay to a time_s,count CSV
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Trap => "trap",
            Command::Array => "array",
            Command::Move => "move",
            Command::Address => "address",
            Command::Readout => "readout",
            Command::Mc => "mc",
            Command::Fit { .. } => "fit",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Domain(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Domain(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Domain(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Output {
    dir: PathBuf,
    formats: Vec<Format>,
    written: Vec<String>,
}

impl Output {
    fn new(dir: PathBuf, formats: Vec<Format>) -> CliResult<Self> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Output {
            dir,
            formats,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.display().to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> CliResult<()> {
        if self.formats.contains(&Format::Json) {
            let mut text = serde_json::to_string_pretty(value).expect("json");
            text.push('\n');
            self.write(name, &text)?;
        }
        Ok(())
    }

    fn csv(&mut self, name: &str, contents: &str) -> CliResult<()> {
        if self.formats.contains(&Format::Csv) {
            self.write(name, contents)?;
        }
        Ok(())
    }
}

fn load_scenario(cli: &Cli) -> CliResult<Scenario> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    Ok(parse_scenario(&text, &cli.set)?)
}

pub fn execute(cli: &Cli) -> CliResult<Vec<String>> {
    let mut scenario = load_scenario(cli)?;
    if let (Some(seed), Some(mc)) = (cli.seed, scenario.montecarlo.as_mut()) {
        mc.seed = seed;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| scenario.output_directory())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let mut out = Output::new(dir, scenario.formats())?;
    let name = cli.command.name();
    let (result, mut lines) = match &cli.command {
        Command::Trap => trap(&scenario)?,
        Command::Array => array(&scenario, &mut out)?,
        Command::Move => movement(&scenario, &mut out)?,
        Command::Address => address(&scenario, &mut out)?,
        Command::Readout => readout(&scenario, &mut out)?,
        Command::Mc => monte_carlo(&scenario, cli.seed, &mut out)?,
        Command::Fit { input } => fit(&scenario, input.as_deref(), &mut out)?,
    };
    let doc = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "result": result,
        "scenario": scenario.to_toml(),
    });
    out.json(&format!("{name}.json"), &doc)?;
    lines.extend(out.written.iter().map(|p| format!("wrote {p}")));
    Ok(lines)
}

type Summary = (serde_json::Value, Vec<String>);

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("json")
}

fn single_site(scenario: &Scenario) -> CliResult<(AtomSpecies, TrapSite)> {
    let species = scenario.species()?;
    let detuning = species.detuning_from_wavelength_offset(scenario.wavelength_offset()?)?;
    let site = characterize_site(
        &species,
        scenario.beam_power()?,
        scenario.beam_waist()?,
        detuning,
        scenario.beam_center()?,
    )?;
    Ok((species, site))
}

#[derive(Serialize)]
struct TrapSummary {
    #[serde(flatten)]
    site: SiteRecord,
    rayleigh_range_m: f64,
    #[serde(rename = "doppler_temperature_mK")]
    doppler_temperature_mk: f64,
    #[serde(rename = "recoil_energy_J")]
    recoil_energy_j: f64,
    coherence_time_s: Option<f64>,
    species: AtomSpecies,
}

fn trap(scenario: &Scenario) -> CliResult<Summary> {
    let (species, site) = single_site(scenario)?;
    let summary = TrapSummary {
        site: site.record(),
        rayleigh_range_m: site.rayleigh_range(),
        doppler_temperature_mk: species.doppler_temperature() * 1e3,
        recoil_energy_j: species.recoil_energy(),
        coherence_time_s: coherence_time_estimate(&site).ok(),
        species,
    };
    let line = format!(
        "depth {:.4} mK, radial {:.4e} rad/s, axial {:.4e} rad/s, scattering {:.4e} /s, extent {:.4e} m",
        summary.site.depth_over_kb_mk,
        site.radial_frequency,
        site.axial_frequency,
        site.scattering_rate,
        site.ground_state_extent
    );
    Ok((to_value(&summary), vec![line]))
}

fn build(scenario: &Scenario) -> CliResult<(AtomSpecies, crate::optics::MicrolensArray, TrapArray)> {
    let species = scenario.species()?;
    let optics = scenario.microlens_array()??;
    let detuning = species.detuning_from_wavelength_offset(scenario.wavelength_offset()?)?;
    let opts = scenario.array_options()?;
    let arr = match scenario.source() {
        SourceKey::SingleBeam => {
            let illum = scenario.illumination(&species, scenario.beam_power()?, &optics)??;
            build_array_with_illumination(&optics, &illum, &species, detuning, &opts)?
        }
        SourceKey::DualBeam => {
            let (angle, second_power) = scenario.dual_beam()?;
            let first = scenario.illumination(&species, scenario.beam_power()?, &optics)??;
            let second = scenario.illumination(&species, second_power, &optics)??;
            build_dual_beam_array(&optics, &first, &second, angle, &species, detuning, &opts)?
        }
        SourceKey::VcselArray => {
            let cfg = scenario.vcsel_config(&optics)?;
            build_vcsel_array(&optics, &cfg, &species, detuning, &opts)?
        }
    };
    Ok((species, optics, arr))
}

fn array(scenario: &Scenario, out: &mut Output) -> CliResult<Summary> {
    let (_, _, arr) = build(scenario)?;
    out.csv("array_power_map.csv", &arr.power_map_csv())?;
    out.csv("array_sites.csv", &arr.summary_csv())?;
    let line = format!(
        "{} sites, {} trapped, pitch {:.4e} m",
        arr.sites.len(),
        arr.trapped_count(),
        arr.pitch
    );
    let mut value = to_value(&arr.record());
    value["trapped_count"] = json!(arr.trapped_count());
    Ok((value, vec![line]))
}

fn movement(scenario: &Scenario, out: &mut Output) -> CliResult<Summary> {
    let (_, optics, arr) = build(scenario)?;
    let schedule = scenario.spacing_schedule()?;
    let outcome = apply_spacing_schedule(&arr, &schedule, &optics)?;
    out.csv("move_offsets.csv", &outcome.offsets_csv())?;
    let frames: Vec<_> = outcome
        .frames
        .iter()
        .map(|f| json!({"time_s": f.time, "angle_rad": f.angle, "offset_m": f.offset}))
        .collect();
    let mut lines = match outcome.window {
        GateWindow::NoWindow => vec!["no gate window".to_string()],
        GateWindow::Window {
            start,
            end,
            sufficient,
            ..
        } => vec![format!(
            "gate window {start:.4e} s to {end:.4e} s ({})",
            if sufficient { "long enough" } else { "too short" }
        )],
    };
    lines.extend(outcome.warnings.iter().map(|w| format!("warning: {w}")));
    let value = json!({
        "window": outcome.window,
        "min_separation_m": outcome.min_separation,
        "warnings": outcome.warnings,
        "frames": frames,
    });
    Ok((value, lines))
}

fn lattice_name(l: Lattice) -> &'static str {
    match l {
        Lattice::Primary => "primary",
        Lattice::Secondary => "secondary",
    }
}

fn register_with_pulses(
    scenario: &Scenario,
    arr: &TrapArray,
) -> CliResult<(QubitRegister, Vec<serde_json::Value>, String)> {
    let mut register = QubitRegister::from_array(arr)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pulse", "lattice", "row", "col", "ratio"]).unwrap();
    let mut reports = Vec::new();
    for (k, pulse) in scenario.pulses()?.iter().enumerate() {
        let map = crosstalk_map(arr, pulse)?;
        for (idx, ratio) in &map {
            w.write_record(&[
                k.to_string(),
                lattice_name(idx.lattice).to_string(),
                idx.row.to_string(),
                idx.col.to_string(),
                ratio.to_string(),
            ])
            .unwrap();
        }
        let stark = stark_diagnostic(arr, pulse)?;
        register.apply_pulse(arr, pulse)?;
        reports.push(json!({
            "target": pulse.target_site,
            "effective_rabi_rad_s": effective_rabi(pulse)?,
            "area_rad": pulse.area()?,
            "phase_rad": pulse.phase,
            "stark": stark,
        }));
    }
    let csv = String::from_utf8(w.into_inner().unwrap()).unwrap();
    Ok((register, reports, csv))
}

fn address(scenario: &Scenario, out: &mut Output) -> CliResult<Summary> {
    if scenario.pulse.is_empty() {
        return Err(CliError::Config("config key `pulse`: at least one [[pulse]] is required".into()));
    }
    let (_, _, arr) = build(scenario)?;
    let (register, reports, csv) = register_with_pulses(scenario, &arr)?;
    out.csv("address_crosstalk.csv", &csv)?;
    let record = register.record();
    out.json("register.json", &to_value(&record))?;
    let lines = vec![format!("{} pulses applied to {} sites", reports.len(), record.len())];
    Ok((json!({"pulses": reports, "register": record}), lines))
}

fn readout(scenario: &Scenario, out: &mut Output) -> CliResult<Summary> {
    let section = scenario.readout_section()?.clone();
    let (_, _, arr) = build(scenario)?;
    let (mut register, reports, _) = register_with_pulses(scenario, &arr)?;
    register.store(section.store_ms * 1e-3)?;
    let eta = collection_efficiency(section.na)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lattice", "row", "col", "bright_probability", "collection_efficiency", "expected_photons"])
        .unwrap();
    let mut rows = Vec::new();
    for (idx, state) in &register.states {
        let photons = register.readout(*idx, section.na, section.scatter_count)?;
        w.write_record(&[
            lattice_name(idx.lattice).to_string(),
            idx.row.to_string(),
            idx.col.to_string(),
            state.bright_probability().to_string(),
            eta.to_string(),
            photons.to_string(),
        ])
        .unwrap();
        rows.push(json!({
            "site": idx,
            "bright_probability": state.bright_probability(),
            "expected_photons": photons,
        }));
    }
    out.csv("readout.csv", &String::from_utf8(w.into_inner().unwrap()).unwrap())?;
    let lines = vec![format!(
        "collection efficiency {eta:.6} at NA {}, {} scattered photons per site",
        section.na, section.scatter_count
    )];
    Ok((
        json!({"collection_efficiency": eta, "na": section.na, "pulses": reports, "sites": rows}),
        lines,
    ))
}

fn monte_carlo(scenario: &Scenario, seed: Option<u64>, out: &mut Output) -> CliResult<Summary> {
    let (species, site) = single_site(scenario)?;
    let mc = scenario.mc_scenario(seed)?;
    let result = simulate(&mc, &site, &species)?;
    out.csv("mc_survival.csv", &result.survival_csv())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time_s", "mean_energy_J", "mean_energy_over_kB_mK"]).unwrap();
    for (t, e) in &result.mean_energy {
        let (j, mk) = match e {
            Some(e) => (e.to_string(), (e / KB * 1e3).to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record(&[t.to_string(), j, mk]).unwrap();
    }
    out.csv("mc_energy.csv", &String::from_utf8(w.into_inner().unwrap()).unwrap())?;
    let line = match result.fitted_lifetime {
        Some(tau) => format!(
            "loaded {:.4} of {} atoms, lifetime {:.4e} s ± {:.2e} s",
            result.loaded_fraction,
            mc.atom_count,
            tau,
            result.fitted_lifetime_stderr.unwrap_or(f64::NAN)
        ),
        None => format!(
            "loaded {:.4} of {} atoms, no lifetime fit: {}",
            result.loaded_fraction,
            mc.atom_count,
            result.fit_note.as_deref().unwrap_or("")
        ),
    };
    let mut value = to_value(&result);
    value["seed"] = json!(mc.seed);
    Ok((value, vec![line]))
}

/// Reads a `time_s,count` CSV.
pub fn read_decay_csv(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut points = Vec::new();
    for row in reader.deserialize::<(f64, f64)>() {
        let row = row.map_err(|e| CliError::Io(format!("bad row in {}: {e}", path.display())))?;
        points.push(row);
    }
    Ok(points)
}

fn fit(scenario: &Scenario, input: Option<&Path>, out: &mut Output) -> CliResult<Summary> {
    let path = match input {
        Some(p) => p.to_path_buf(),
        None => scenario
            .fit
            .as_ref()
            .map(|f| f.input.clone())
            .ok_or_else(|| CliError::Config("config key `fit.input`: no input CSV (use --input)".into()))?,
    };
    let points = read_decay_csv(&path)?;
    let result = fit_exponential(&points)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time_s", "count", "model"]).unwrap();
    for (t, n) in &points {
        let model = result.amplitude * (-t / result.lifetime).exp();
        w.write_record(&[t.to_string(), n.to_string(), model.to_string()]).unwrap();
    }
    out.csv("fit_curve.csv", &String::from_utf8(w.into_inner().unwrap()).unwrap())?;
    let line = format!("lifetime {:.6e} s ± {:.2e} s", result.lifetime, result.stderr);
    Ok((
        json!({
            "input": path.display().to_string(),
            "lifetime_s": result.lifetime,
            "stderr_s": result.stderr,
            "amplitude": result.amplitude,
            "points": points.len(),
        }),
        vec![line],
    ))
}
