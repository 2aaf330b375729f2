use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use qdev_core::ler::{fin_fraction, fit_c0, parallel_plate_estimate, FinGeometry, LerDesign};
use qdev_core::resonator::{fit_resonator, photon_number, power_sweep, qi_from_dcm, ResonatorFit, ResonatorParams};
use qdev_core::synth::{synth_decay, synth_ler_dataset, synth_ramsey, synth_s21, NoiseSpec, RamseyTruth};
use qdev_core::timedomain::{fit_ramsey, fit_t1, t1_statistics, BIMODALITY_THRESHOLD};
use qdev_core::transmon::{derive_all, TransmonMeasured};
use qdev_core::{Error as CoreError, Frequency};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::io::{self, ingest_s21, Input, S21Format, TouchstoneFormat};
use crate::report::AnalysisReport;

/// Process streams, injectable for in-process testing.
pub struct Streams<'a> {
    pub stdin: &'a mut dyn Read,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

#[derive(Parser, Debug)]
#[command(name = "qdev", version, about = "Superconducting device characterization: resonators, transmons, time-domain and LER analysis")]
pub struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    /// Noise seed for `synth`; recorded in every report.
    #[arg(long, global = true, env = "QDEV_SEED")]
    pub seed: Option<u64>,
    /// Progress details on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the notch model to one S21 trace.
    FitResonator(FitResonatorArgs),
    /// Fit every trace of a power sweep and tabulate Qi against photon number.
    PowerSweep(PowerSweepArgs),
    /// Derive transmon parameters from a JSON file of measured values.
    TransmonDerive(InputArg),
    /// Fit an energy-relaxation trace (`delay_s,signal`).
    FitT1(InputArg),
    /// Fit a Ramsey fringe (`delay_s,signal`).
    FitRamsey(InputArg),
    /// Statistics and histogram of repeated T1 measurements (`t1_s`).
    T1Stats(T1StatsArgs),
    /// Extract capacitance per fin length from resonance frequencies (`length_m,f_hz`).
    LerFitC0(LerFitArgs),
    /// Resonance frequencies and fin fractions for a set of fin lengths.
    LerDesign(LerDesignArgs),
    /// Generate synthetic data.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args, Debug)]
pub struct InputArg {
    /// Input file, `-` for stdin.
    pub input: String,
}

#[derive(Args, Debug, Clone, Copy, Default)]
pub struct Calibration {
    /// Power at the instrument output in dBm; overrides file metadata.
    #[arg(long, allow_negative_numbers = true)]
    pub applied_power_dbm: Option<f64>,
    /// Input-line attenuation in dB; overrides file metadata.
    #[arg(long, allow_negative_numbers = true)]
    pub attenuation_db: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FitResonatorArgs {
    /// S21 file (`.s2p` or CSV), `-` for stdin.
    pub input: String,
    #[arg(long, value_enum)]
    pub input_format: Option<S21Format>,
    #[command(flatten)]
    pub calibration: Calibration,
    /// Fail unless the photon number can be calibrated.
    #[arg(long)]
    pub photon_number: bool,
}

#[derive(Args, Debug)]
pub struct PowerSweepArgs {
    /// One S21 file per drive power; each must carry applied_power_dbm.
    #[arg(required = true, num_args = 1..)]
    pub inputs: Vec<String>,
    #[arg(long, value_enum)]
    pub input_format: Option<S21Format>,
    /// Input-line attenuation in dB for every trace; overrides file metadata.
    #[arg(long, allow_negative_numbers = true)]
    pub attenuation_db: Option<f64>,
}

#[derive(Args, Debug)]
pub struct T1StatsArgs {
    pub input: String,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(Args, Debug)]
pub struct LerFitArgs {
    pub input: String,
    /// Resonator inductance in henry.
    #[arg(long)]
    pub inductance_h: f64,
}

#[derive(Args, Debug)]
pub struct LerDesignArgs {
    #[arg(long)]
    pub inductance_h: f64,
    #[arg(long)]
    pub stray_capacitance_f: f64,
    /// Capacitance per fin length; taken from the plate geometry when omitted.
    #[arg(long)]
    pub cap_per_length_f_per_m: Option<f64>,
    #[arg(long = "length-m", required = true, num_args = 1.., value_delimiter = ',')]
    pub lengths_m: Vec<f64>,
    #[arg(long)]
    pub plate_height_m: Option<f64>,
    #[arg(long)]
    pub dielectric_thickness_m: Option<f64>,
    #[arg(long, default_value_t = 11.7)]
    pub epsilon_r: f64,
}

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Notch-resonator S21 trace.
    S21(SynthS21Args),
    /// Energy-relaxation trace.
    Decay(SynthDecayArgs),
    /// Ramsey fringe.
    Ramsey(SynthRamseyArgs),
    /// LER length/frequency table.
    Ler(SynthLerArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthOutput {
    /// Gaussian noise standard deviation (per quadrature for S21).
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Write the data here instead of stdout.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthS21Args {
    #[arg(long)]
    pub f0_hz: f64,
    #[arg(long)]
    pub ql: f64,
    #[arg(long)]
    pub qc_mag: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi_rad: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta_rad: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau_s: f64,
    /// Defaults to f0 − 8·f0/Ql.
    #[arg(long)]
    pub f_start_hz: Option<f64>,
    /// Defaults to f0 + 8·f0/Ql.
    #[arg(long)]
    pub f_stop_hz: Option<f64>,
    #[arg(long, default_value_t = 1601)]
    pub points: usize,
    /// Write Touchstone in this format instead of CSV.
    #[arg(long, value_enum)]
    pub touchstone: Option<TouchstoneFormat>,
    /// CSV columns freq_hz,mag_db,phase_deg instead of freq_hz,re,im.
    #[arg(long)]
    pub polar: bool,
    #[command(flatten)]
    pub calibration: Calibration,
    #[command(flatten)]
    pub output: SynthOutput,
}

#[derive(Args, Debug)]
pub struct SynthDecayArgs {
    #[arg(long)]
    pub t1_s: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub b: f64,
    /// Defaults to 5·T1.
    #[arg(long)]
    pub span_s: Option<f64>,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    #[command(flatten)]
    pub output: SynthOutput,
}

#[derive(Args, Debug)]
pub struct SynthRamseyArgs {
    #[arg(long)]
    pub t2_s: f64,
    #[arg(long)]
    pub detuning_hz: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phase_rad: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub b: f64,
    /// Defaults to 3·T2.
    #[arg(long)]
    pub span_s: Option<f64>,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    #[command(flatten)]
    pub output: SynthOutput,
}

#[derive(Args, Debug)]
pub struct SynthLerArgs {
    #[arg(long)]
    pub inductance_h: f64,
    #[arg(long)]
    pub stray_capacitance_f: f64,
    #[arg(long)]
    pub cap_per_length_f_per_m: f64,
    #[arg(long = "length-m", required = true, num_args = 1.., value_delimiter = ',')]
    pub lengths_m: Vec<f64>,
    #[command(flatten)]
    pub output: SynthOutput,
}

struct Ctx {
    args: Vec<String>,
    seed: Option<u64>,
    verbose: bool,
}

impl Ctx {
    fn report(&self, command: &str) -> AnalysisReport {
        AnalysisReport::new(command, self.args.clone(), self.seed)
    }

    fn note(&self, s: &mut Streams, msg: impl AsRef<str>) {
        if self.verbose {
            let _ = writeln!(s.stderr, "{}", msg.as_ref());
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 1 analysis or input error, 2 usage error.
pub fn run<I, T>(args: I, streams: &mut Streams) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = streams.stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = streams.stderr.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    let recorded = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, recorded, streams) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(streams.stderr, "error: {e}");
            if matches!(e, CliError::Usage(_)) {
                let _ = write!(streams.stderr, "{}", Cli::command().render_usage());
                let _ = writeln!(streams.stderr);
            }
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, args: Vec<String>, s: &mut Streams) -> Result<()> {
    let ctx = Ctx { args, seed: cli.seed, verbose: cli.verbose };
    let (report, to_stdout) = match &cli.command {
        Command::FitResonator(a) => (cmd_fit_resonator(a, &ctx, s)?, true),
        Command::PowerSweep(a) => (cmd_power_sweep(a, &ctx, s)?, true),
        Command::TransmonDerive(a) => (cmd_transmon_derive(a, &ctx, s)?, true),
        Command::FitT1(a) => (cmd_fit_t1(a, &ctx, s)?, true),
        Command::FitRamsey(a) => (cmd_fit_ramsey(a, &ctx, s)?, true),
        Command::T1Stats(a) => (cmd_t1_stats(a, &ctx, s)?, true),
        Command::LerFitC0(a) => (cmd_ler_fit_c0(a, &ctx, s)?, true),
        Command::LerDesign(a) => (cmd_ler_design(a, &ctx)?, true),
        // Synthetic data owns stdout; its report is written only with --out.
        Command::Synth(c) => (cmd_synth(c, &ctx, s)?, false),
    };
    let body = match cli.format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Text => report.to_text(),
    };
    match &cli.out {
        Some(path) => std::fs::write(path, body).map_err(|source| CliError::Io { path: path.display().to_string(), source }),
        None if to_stdout => s
            .stdout
            .write_all(body.as_bytes())
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
        None => Ok(()),
    }
}

fn analysis(input: &Input) -> impl Fn(CoreError) -> CliError + '_ {
    move |e| CliError::input(&input.path, e)
}

fn resonator_keys(r: &mut AnalysisReport, prefix: &str, fit: &ResonatorFit) {
    let p = &fit.params;
    let k = |name: &str| format!("{prefix}{name}");
    r.set(k("f0_hz"), p.f0.as_hz());
    r.set(k("ql"), p.ql);
    r.set(k("qc_mag"), p.qc_mag);
    r.set(k("phi_rad"), p.phi);
    r.set(k("a"), p.a);
    r.set(k("theta_rad"), p.theta);
    r.set(k("tau_s"), p.tau);
    r.set(k("qi"), fit.qi);
    if let Some(u) = &fit.uncertainties {
        r.set(k("f0_err_hz"), u.f0_hz);
        r.set(k("ql_err"), u.ql);
        r.set(k("qc_mag_err"), u.qc_mag);
        r.set(k("phi_err_rad"), u.phi);
        r.set(k("a_err"), u.a);
        r.set(k("theta_err_rad"), u.theta);
        r.set(k("tau_err_s"), u.tau_s);
        r.set(k("qi_err"), u.qi);
    }
    r.set(k("rms_residual"), fit.rms_residual);
    r.set(k("iterations"), fit.iterations as f64);
    r.set_flag(k("converged"), fit.converged);
}

fn cmd_fit_resonator(a: &FitResonatorArgs, ctx: &Ctx, s: &mut Streams) -> Result<AnalysisReport> {
    let input = Input::read(&a.input, s.stdin)?;
    let mut trace = ingest_s21(&input, a.input_format)?;
    if let Some(p) = a.calibration.applied_power_dbm {
        trace.applied_power_dbm = Some(p);
    }
    if let Some(att) = a.calibration.attenuation_db {
        trace.line_attenuation_db = Some(att);
    }
    ctx.note(s, format!("{}: {} points", input.path, trace.len()));
    let fit = fit_resonator(&trace).map_err(analysis(&input))?;
    ctx.note(s, format!("cost {:e} -> {:e} in {} iterations", fit.initial_cost, fit.cost, fit.iterations));

    let mut r = ctx.report("fit-resonator");
    r.add_input(&input);
    resonator_keys(&mut r, "", &fit);
    match (trace.applied_power_dbm, trace.line_attenuation_db) {
        (Some(p), Some(att)) => {
            r.set("applied_power_dbm", p);
            r.set("attenuation_db", att);
            r.set("photon_number", photon_number(&fit, p, att).map_err(analysis(&input))?);
        }
        _ if a.photon_number => {
            return Err(CliError::input(
                &input.path,
                CoreError::MissingMetadata(
                    "photon number needs applied_power_dbm and attenuation_db (file comments or flags)".into(),
                ),
            ));
        }
        _ => {}
    }
    if !fit.converged {
        r.warn("resonator fit did not converge");
    }
    if fit.uncertainties.is_none() {
        r.warn("covariance unavailable; uncertainties omitted");
    }
    Ok(r)
}

fn index_width(n: usize) -> usize {
    n.max(1).to_string().len().max(2)
}

fn cmd_power_sweep(a: &PowerSweepArgs, ctx: &Ctx, s: &mut Streams) -> Result<AnalysisReport> {
    if a.inputs.iter().filter(|p| *p == "-").count() > 1 {
        return Err(CliError::Usage("stdin (`-`) can be used for at most one input".into()));
    }
    let mut inputs = Vec::with_capacity(a.inputs.len());
    let mut traces = Vec::with_capacity(a.inputs.len());
    for path in &a.inputs {
        let input = Input::read(path, s.stdin)?;
        let trace = ingest_s21(&input, a.input_format)
            .map(|mut t| {
                if let Some(att) = a.attenuation_db {
                    t.line_attenuation_db = Some(att);
                }
                t
            })
            .map_err(|e| match e {
                CliError::Input { source, .. } => source,
                other => CoreError::InvalidInput(other.to_string()),
            });
        traces.push(trace);
        inputs.push(input);
    }
    let sweep = power_sweep(traces)?;

    let mut r = ctx.report("power-sweep");
    for input in &inputs {
        r.add_input(input);
    }
    let w = index_width(sweep.points.len());
    r.set("count", sweep.points.len() as f64);
    for (i, pt) in sweep.points.iter().enumerate() {
        let pre = format!("p{i:0w$}.");
        ctx.note(s, format!("{}: n = {:e}, Qi = {:e}", inputs[pt.index].path, pt.photon_number, pt.qi));
        r.set(format!("{pre}input_index"), pt.index as f64);
        r.set(format!("{pre}applied_power_dbm"), pt.applied_power_dbm);
        r.set(format!("{pre}photon_number"), pt.photon_number);
        r.set(format!("{pre}qi"), pt.qi);
        r.set_opt(format!("{pre}qi_err"), pt.qi_uncertainty);
        r.set(format!("{pre}f0_hz"), pt.fit.params.f0.as_hz());
        r.set(format!("{pre}ql"), pt.fit.params.ql);
        r.set(format!("{pre}qc_mag"), pt.fit.params.qc_mag);
        r.set_flag(format!("{pre}converged"), pt.fit.converged);
        if !pt.fit.converged {
            r.warn(format!("{}: fit did not converge", inputs[pt.index].path));
        }
    }
    for skip in &sweep.skipped {
        r.skip(inputs[skip.index].path.clone(), skip.reason.to_string());
    }
    Ok(r)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransmonFile {
    qubits: Vec<QubitEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QubitEntry {
    label: String,
    #[serde(default)]
    skip: Option<String>,
    f01_hz: Option<f64>,
    f02_over_2_hz: Option<f64>,
    alpha_hz: Option<f64>,
    f_ro_hz: Option<f64>,
    f_ro_bare_hz: Option<f64>,
    g_hz: Option<f64>,
    kappa_hz: Option<f64>,
    chi_hz: Option<f64>,
    #[serde(default)]
    t1_samples_s: Vec<f64>,
    t1_mean_s: Option<f64>,
    t2_star_s: Option<f64>,
}

impl QubitEntry {
    fn measured(&self) -> qdev_core::Result<TransmonMeasured> {
        let freq = |v: Option<f64>| v.map(Frequency::new).transpose();
        let required = |v: Option<f64>, what: &str| {
            freq(v)?.ok_or_else(|| CoreError::MissingMetadata(format!("{what} is required")))
        };
        let mut t1_samples = self.t1_samples_s.clone();
        if let Some(mean) = self.t1_mean_s {
            if !t1_samples.is_empty() {
                return Err(CoreError::InvalidInput("give t1_samples_s or t1_mean_s, not both".into()));
            }
            t1_samples.push(mean);
        }
        Ok(TransmonMeasured {
            f01: required(self.f01_hz, "f01_hz")?,
            f02_over_2: freq(self.f02_over_2_hz)?,
            alpha: freq(self.alpha_hz)?,
            f_ro: required(self.f_ro_hz, "f_ro_hz")?,
            f_ro_bare: freq(self.f_ro_bare_hz)?,
            g: freq(self.g_hz)?,
            kappa: freq(self.kappa_hz)?,
            chi: freq(self.chi_hz)?,
            t1_samples,
            t2_star: self.t2_star_s,
        })
    }
}

fn valid_label(label: &str) -> bool {
    !label.is_empty() && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn cmd_transmon_derive(a: &InputArg, ctx: &Ctx, s: &mut Streams) -> Result<AnalysisReport> {
    let input = Input::read(&a.input, s.stdin)?;
    let file: TransmonFile = serde_json::from_str(input.text()?)
        .map_err(|e| CliError::parse(&input.path, e.line() as u64, e.to_string()))?;
    let mut r = ctx.report("transmon-derive");
    r.add_input(&input);
    let mut derived = 0;
    for q in &file.qubits {
        if !valid_label(&q.label) {
            return Err(CliError::input(
                &input.path,
                CoreError::InvalidInput(format!("qubit label {:?} must be alphanumeric, '_' or '-'", q.label)),
            ));
        }
        if let Some(reason) = &q.skip {
            r.skip(q.label.clone(), reason.clone());
            continue;
        }
        let d = match q.measured().and_then(|m| derive_all(&m)) {
            Ok(d) => d,
            Err(e) => {
                ctx.note(s, format!("{}: {e}", q.label));
                r.skip(q.label.clone(), e.to_string());
                continue;
            }
        };
        derived += 1;
        let k = |name: &str| format!("{}.{name}", q.label);
        r.set(k("f01_hz"), q.f01_hz.unwrap_or_default());
        r.set(k("alpha_hz"), d.alpha.as_hz());
        r.set(k("e_c_hz"), d.e_c.as_hz());
        r.set(k("e_j_hz"), d.e_j.as_hz());
        r.set(k("ej_ec_ratio"), d.ej_ec_ratio);
        r.set(k("delta_hz"), d.delta.as_hz());
        r.set_opt(k("g_punchout_hz"), d.g_punchout.map(Frequency::as_hz));
        r.set_opt(k("g_dispersive_hz"), d.g_dispersive.map(Frequency::as_hz));
        r.set_opt(k("kappa_hz"), q.kappa_hz);
        r.set_opt(k("t_purcell_s"), d.t_purcell);
        r.set(k("t1_mean_s"), d.t1_mean);
        r.set_opt(k("t2_star_s"), q.t2_star_s);
        r.set(k("qubit_q"), d.qubit_q);
        for w in &d.warnings {
            r.warn(format!("{}: {w}", q.label));
        }
    }
    if derived == 0 {
        return Err(CliError::input(&input.path, CoreError::InsufficientData("no qubit could be derived".into())));
    }
    Ok(r)
}

fn cmd_fit_t1(a: &InputArg, ctx: &Ctx, s: &mut Streams) -> Result<AnalysisReport> {
    let input = Input::read(&a.input, s.stdin)?;
    let trace = io::ingest_decay(&input)?;
    let fit = fit_t1(&trace).map_err(analysis(&input))?;
    ctx.note(s, format!("T1 = {:e} s", fit.t1));
    let mut r = ctx.report("fit-t1");
    r.add_input(&input);
    r.set("t1_s", fit.t1);
    r.set("amplitude", fit.amplitude);
    r.set("offset", fit.offset);
    if let Some(u) = fit.uncertainties {
        r.set("t1_err_s", u.t1);
        r.set("amplitude_err", u.amplitude);
        r.set("offset_err", u.offset);
    }
    r.set("rms_residual", fit.rms_residual);
    r.set_flag("converged", fit.converged);
    if !fit.converged {
        r.warn("T1 fit did not converge");
    }
    Ok(r)
}

fn cmd_fit_ramsey(a: &InputArg, ctx: &Ctx, s: &mut Streams) -> Result<AnalysisReport> {
    let input = Input::read(&a.input, s.stdin)?;
    let trace = io::ingest_decay(&input)?;
    let fit = fit_ramsey(&trace).map_err(analysis(&input))?;
    ctx.note(s, format!("T2* = {:e} s, detuning = {:e} Hz", fit.t2_star, fit.detuning));
    let mut r = ctx.report("fit-ramsey");
    r.add_input(&input);
    r.set("t2_star_s", fit.t2_star);
    r.set("detuning_hz", fit.detuning);
    r.set("amplitude", fit.amplitude);
    r.set("phase_rad", fit.phase);
    r.set("offset", fit.offset);
    if let Some(u) = fit.uncertainties {
        r.set("t2_star_err_s", u.t2_star);
        r.set("detuning_err_hz", u.detuning);
        r.set("amplitude_err", u.amplitude);
        r.set("phase_err_rad", u.phase);
        r.set("offset_err", u.offset);
    }
    r.set("rms_residual", fit.rms_residual);
    r.set_flag("low_confidence", fit.low_confidence);
    r.set_flag("converged", fit.converged);
    if fit.low_confidence {
        r.warn("fewer than two fringes within the span; detuning and T2* are low confidence");
    }
    if !fit.converged {
        r.warn("Ramsey fit did not converge");
    }
    Ok(r)
}

fn cmd_t1_stats(a: &T1StatsArgs, ctx: &Ctx, s: &mut Streams) -> Result<AnalysisReport> {
    let input = Input::read(&a.input, s.stdin)?;
    let samples = io::parse_t1_samples(&input.path, input.text()?)?;
    let st = t1_statistics(&samples, a.bins).map_err(analysis(&input))?;
    ctx.note(s, format!("{} samples, mean {:e} s", st.n, st.mean));
    let mut r = ctx.report("t1-stats");
    r.add_input(&input);
    r.set("n", st.n as f64);
    r.set("t1_mean_s", st.mean);
    r.set("t1_median_s", st.median);
    r.set("t1_std_s", st.std);
    r.set("t1_min_s", st.min);
    r.set("t1_max_s", st.max);
    r.set_opt("bimodality_coefficient", st.bimodality_coefficient);
    r.set_flag("bimodal_suspect", st.bimodal_suspect);
    let w = index_width(st.histogram.counts.len());
    for (i, count) in st.histogram.counts.iter().enumerate() {
        r.set(format!("h{i:0w$}.lo_s"), st.histogram.edges[i]);
        r.set(format!("h{i:0w$}.hi_s"), st.histogram.edges[i + 1]);
        r.set(format!("h{i:0w$}.count"), *count as f64);
    }
    if st.bimodal_suspect {
        r.warn(format!(
            "T1 distribution looks bimodal (coefficient {:e} > {BIMODALITY_THRESHOLD:e})",
            st.bimodality_coefficient.unwrap_or(f64::NAN)
        ));
    }
    Ok(r)
}

fn cmd_ler_fit_c0(a: &LerFitArgs, ctx: &Ctx, s: &mut Streams) -> Result<AnalysisReport> {
    let input = Input::read(&a.input, s.stdin)?;
    let points = io::parse_ler_csv(&input.path, input.text()?)?;
    let fit = fit_c0(&points, a.inductance_h).map_err(analysis(&input))?;
    ctx.note(s, format!("C0 = {:e} F/m from {} points", fit.c0, points.len()));
    let mut r = ctx.report("ler-fit-c0");
    r.add_input(&input);
    r.set("inductance_h", a.inductance_h);
    r.set("n_points", points.len() as f64);
    r.set("c0_f_per_m", fit.c0);
    r.set("c_stray_f", fit.c_stray);
    r.set("f_at_zero_hz", fit.f_at_zero.as_hz());
    r.set("slope_s2_per_m", fit.slope);
    r.set("intercept_s2", fit.intercept);
    r.set("rms_residual_s2", fit.rms_residual);
    Ok(r)
}

fn cmd_ler_design(a: &LerDesignArgs, ctx: &Ctx) -> Result<AnalysisReport> {
    let geometry = match (a.plate_height_m, a.dielectric_thickness_m) {
        (Some(h), Some(d)) => Some(FinGeometry { plate_height: h, dielectric_thickness: d, epsilon_r: a.epsilon_r }),
        (None, None) => None,
        _ => {
            return Err(CliError::Usage(
                "--plate-height-m and --dielectric-thickness-m must be given together".into(),
            ))
        }
    };
    let plate = geometry.as_ref().map(parallel_plate_estimate).transpose()?;
    let c0 = a
        .cap_per_length_f_per_m
        .or(plate)
        .ok_or_else(|| CliError::Usage("give --cap-per-length-f-per-m or the plate geometry".into()))?;
    let design = LerDesign {
        inductance: a.inductance_h,
        stray_capacitance: a.stray_capacitance_f,
        cap_per_length: c0,
        epsilon_r: a.epsilon_r,
    };
    design.validate()?;

    let mut r = ctx.report("ler-design");
    r.set("inductance_h", design.inductance);
    r.set("stray_capacitance_f", design.stray_capacitance);
    r.set("c0_f_per_m", c0);
    r.set_opt("c0_plate_f_per_m", plate);
    r.set("f_zero_length_hz", design.frequency_at(0.0)?.as_hz());
    let w = index_width(a.lengths_m.len());
    for (i, &len) in a.lengths_m.iter().enumerate() {
        if !(len.is_finite() && len >= 0.0) {
            return Err(CliError::Usage(format!("fin length {len} must be non-negative")));
        }
        let pre = format!("l{i:0w$}.");
        r.set(format!("{pre}length_m"), len);
        r.set(format!("{pre}capacitance_f"), design.total_capacitance(len));
        r.set(format!("{pre}f_hz"), design.frequency_at(len)?.as_hz());
        r.set(format!("{pre}fin_fraction"), fin_fraction(c0, len, design.stray_capacitance)?);
    }
    Ok(r)
}

fn write_data(
    out: &SynthOutput,
    s: &mut Streams,
    write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    match &out.data {
        Some(path) => {
            let io_err = |source| CliError::Io { path: path.display().to_string(), source };
            let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
            write(&mut file).and_then(|_| file.flush()).map_err(io_err)
        }
        None => match write(s.stdout) {
            // A closed downstream pipe is not an error for a generator.
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            other => other.map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
        },
    }
}

fn cmd_synth(c: &SynthCommand, ctx: &Ctx, s: &mut Streams) -> Result<AnalysisReport> {
    let seed = ctx.seed.unwrap_or(0);
    let ctx = Ctx { seed: Some(seed), args: ctx.args.clone(), verbose: ctx.verbose };
    match c {
        SynthCommand::S21(a) => {
            let p = ResonatorParams {
                f0: Frequency::new(a.f0_hz)?,
                ql: a.ql,
                qc_mag: a.qc_mag,
                phi: a.phi_rad,
                a: a.a,
                theta: a.theta_rad,
                tau: a.tau_s,
            };
            p.validate()?;
            let lw = p.linewidth();
            let f_start = a.f_start_hz.unwrap_or(a.f0_hz - 8.0 * lw);
            let f_stop = a.f_stop_hz.unwrap_or(a.f0_hz + 8.0 * lw);
            let noise = NoiseSpec { sigma: a.output.sigma, seed };
            let trace = synth_s21(&p, f_start, f_stop, a.points, noise)?
                .with_metadata(a.calibration.applied_power_dbm, a.calibration.attenuation_db);
            write_data(&a.output, s, |w| match a.touchstone {
                Some(fmt) => io::write_touchstone(&trace, w, fmt),
                None => io::write_s21_csv(&trace, w, a.polar),
            })?;
            let mut r = ctx.report("synth s21");
            r.set("f0_hz", a.f0_hz);
            r.set("ql", a.ql);
            r.set("qc_mag", a.qc_mag);
            r.set("phi_rad", a.phi_rad);
            r.set("a", a.a);
            r.set("theta_rad", a.theta_rad);
            r.set("tau_s", a.tau_s);
            r.set_opt("qi", qi_from_dcm(a.ql, a.qc_mag, a.phi_rad).ok());
            r.set("f_start_hz", f_start);
            r.set("f_stop_hz", f_stop);
            r.set("n_points", a.points as f64);
            r.set("sigma", a.output.sigma);
            Ok(r)
        }
        SynthCommand::Decay(a) => {
            let span = a.span_s.unwrap_or(5.0 * a.t1_s);
            let noise = NoiseSpec { sigma: a.output.sigma, seed };
            let trace = synth_decay(a.t1_s, a.a, a.b, span, a.points, noise)?;
            write_data(&a.output, s, |w| io::write_decay_csv(&trace, w))?;
            let mut r = ctx.report("synth decay");
            r.set("t1_s", a.t1_s);
            r.set("amplitude", a.a);
            r.set("offset", a.b);
            r.set("span_s", span);
            r.set("n_points", a.points as f64);
            r.set("sigma", a.output.sigma);
            Ok(r)
        }
        SynthCommand::Ramsey(a) => {
            let span = a.span_s.unwrap_or(3.0 * a.t2_s);
            let truth = RamseyTruth { t2: a.t2_s, detuning: a.detuning_hz, a: a.a, phase: a.phase_rad, b: a.b };
            let noise = NoiseSpec { sigma: a.output.sigma, seed };
            let trace = synth_ramsey(&truth, span, a.points, noise)?;
            write_data(&a.output, s, |w| io::write_decay_csv(&trace, w))?;
            let mut r = ctx.report("synth ramsey");
            r.set("t2_star_s", a.t2_s);
            r.set("detuning_hz", a.detuning_hz);
            r.set("amplitude", a.a);
            r.set("phase_rad", a.phase_rad);
            r.set("offset", a.b);
            r.set("span_s", span);
            r.set("n_points", a.points as f64);
            r.set("sigma", a.output.sigma);
            Ok(r)
        }
        SynthCommand::Ler(a) => {
            let design = LerDesign {
                inductance: a.inductance_h,
                stray_capacitance: a.stray_capacitance_f,
                cap_per_length: a.cap_per_length_f_per_m,
                epsilon_r: 11.7,
            };
            let noise = NoiseSpec { sigma: a.output.sigma, seed };
            let points = synth_ler_dataset(&design, &a.lengths_m, noise)?;
            write_data(&a.output, s, |w| io::write_ler_csv(&points, w))?;
            let mut r = ctx.report("synth ler");
            r.set("inductance_h", a.inductance_h);
            r.set("stray_capacitance_f", a.stray_capacitance_f);
            r.set("c0_f_per_m", a.cap_per_length_f_per_m);
            r.set("n_points", points.len() as f64);
            r.set("sigma", a.output.sigma);
            Ok(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
