//! Command-line front end for the cone flow solver.
//!
//! `run` evolves one scenario and writes its artifact set; `sk-study`
//! marches a linear heat problem on a ladder of tip truncations; and
//! `poisson-study` probes the Poisson gradient near a cone tip across
//! resolutions.  A run is described by a flat `key = value` config file, by
//! flags, or both; flags win on conflict.  Identical configs produce byte
//! identical artifacts.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! failures, 4 when the run tripped the curvature blowup threshold.  A trip
//! is the expected ending for positive total curvature, so the artifacts
//! are still written before exiting with 4.

mod artifacts;
mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use coneflow::flow::{init_flow, FlowParams, StopReason, StopRule};
use coneflow::geometry::{build_football_with_flat, Surface, DEFAULT_FLAT_FRACTION};
use coneflow::linear_parabolic::solve_sk_sequence;
use coneflow::poisson::{gradient_probe, project_mean_zero, solve_poisson};
use coneflow::presets::{self, Preset};

use config::{parse_list, RawConfig, Scenario, Settings, SCENARIO_NAMES};

enum CliError {
    Input(String),
    Numerical(String),
    Blowup(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Blowup(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) | CliError::Blowup(m) => m,
        }
    }
}

impl From<coneflow::Error> for CliError {
    fn from(e: coneflow::Error) -> CliError {
        match &e {
            coneflow::Error::Blowup { .. } => CliError::Blowup(e.to_string()),
            _ if e.is_input_error() => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

#[derive(Parser)]
#[command(
    name = "coneflow",
    version,
    about = "Normalized Ricci flow on surfaces with conical points"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a scenario; writes summary.json, timeseries.csv,
    /// final_state.csv, and a mesh or profile snapshot.
    Run {
        /// Scenario name (pillowcase, hyperbolic-triangle, football, torus)
        /// or path to a `key = value` config file.
        target: String,
        #[command(flatten)]
        flags: FlagSet,
    },
    /// March one linear heat problem on the full surface and on a ladder of
    /// tip truncations; report the gap at each level.
    SkStudy {
        /// Scenario name or config path; defaults to the football.
        target: Option<String>,
        #[command(flatten)]
        flags: FlagSet,
    },
    /// Solve the cone Poisson problem across football resolutions and probe
    /// the gradient near a tip.
    PoissonStudy {
        /// Optional config path; the flags cover everything.
        target: Option<String>,
        #[command(flatten)]
        flags: FlagSet,
    },
}

/// Command-line mirror of the config keys.
#[derive(Args, Default)]
struct FlagSet {
    /// Scenario name; usually given positionally instead.
    #[arg(long)]
    scenario: Option<String>,
    /// Mesh resolution: per-edge subdivisions, or profile intervals.
    #[arg(long)]
    resolution: Option<usize>,
    /// Cone orders, space separated, e.g. "-0.5 -0.5".
    #[arg(long, allow_hyphen_values = true)]
    divisor: Option<String>,
    /// Triangle angle fractions, space separated, e.g. "0.25 0.25 0.25".
    #[arg(long)]
    alpha: Option<String>,
    /// Football cone order at the first tip.
    #[arg(long, allow_hyphen_values = true)]
    beta1: Option<f64>,
    /// Football cone order at the second tip.
    #[arg(long, allow_hyphen_values = true)]
    beta2: Option<f64>,
    /// Football profile length.
    #[arg(long)]
    length: Option<f64>,
    /// Sup-norm size of the initial perturbation.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Seed for the initial perturbation.
    #[arg(long)]
    seed: Option<u64>,
    /// Target time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time, or the time cap when --steady-tol is set.
    #[arg(long)]
    t_end: Option<f64>,
    /// Stop once sup |du/dt| falls below this.
    #[arg(long)]
    steady_tol: Option<f64>,
    /// Log every n-th accepted step.
    #[arg(long)]
    sample_stride: Option<usize>,
    /// Per-step sup-norm change of u that triggers step halving.
    #[arg(long)]
    max_change: Option<f64>,
    /// Declare blowup when sup |K| exceeds this times 1 + |r|.
    #[arg(long)]
    blowup_threshold: Option<f64>,
    /// Rescale u after every step so the volume stays at V(0).
    #[arg(long, value_name = "BOOL")]
    renormalize_volume: Option<bool>,
    /// March the potential function alongside the flow.
    #[arg(long, value_name = "BOOL")]
    track_potential: Option<bool>,
    /// First truncation level of the sk-study ladder.
    #[arg(long)]
    k_min: Option<i32>,
    /// Last truncation level of the sk-study ladder.
    #[arg(long)]
    k_max: Option<i32>,
    /// Poisson-study resolutions, space separated, e.g. "256 512 1024".
    #[arg(long)]
    resolutions: Option<String>,
    /// Poisson-study cone order, used at both tips.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Distance from the tip at which the gradient is probed.
    #[arg(long)]
    probe_radius: Option<f64>,
    /// Where the artifacts go; default runs/<scenario-name>.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl FlagSet {
    fn into_settings(self) -> Result<Settings, CliError> {
        let floats = |text: Option<String>, flag: &str| -> Result<Option<Vec<f64>>, CliError> {
            text.map(|t| {
                parse_list::<f64>(&t)
                    .map_err(|tok| input(format!("--{flag}: expected numbers, got `{tok}`")))
            })
            .transpose()
        };
        Ok(Settings {
            scenario: self.scenario,
            resolution: self.resolution,
            divisor: floats(self.divisor, "divisor")?,
            alpha: floats(self.alpha, "alpha")?,
            beta1: self.beta1,
            beta2: self.beta2,
            length: self.length,
            amplitude: self.amplitude,
            seed: self.seed,
            dt: self.dt,
            t_end: self.t_end,
            steady_tol: self.steady_tol,
            sample_stride: self.sample_stride,
            max_change: self.max_change,
            blowup_threshold: self.blowup_threshold,
            renormalize_volume: self.renormalize_volume,
            track_potential: self.track_potential,
            k_min: self.k_min,
            k_max: self.k_max,
            resolutions: self
                .resolutions
                .map(|t| {
                    parse_list::<usize>(&t).map_err(|tok| {
                        input(format!("--resolutions: expected integers, got `{tok}`"))
                    })
                })
                .transpose()?,
            beta: self.beta,
            probe_radius: self.probe_radius,
            output_dir: self.output_dir,
        })
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    };
    std::process::exit(code);
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run { target, flags } => cmd_run(&target, flags),
        Command::SkStudy { target, flags } => cmd_sk_study(target.as_deref(), flags),
        Command::PoissonStudy { target, flags } => cmd_poisson_study(target.as_deref(), flags),
    }
}

/// The positional target is either a config file or a scenario name; the
/// flags overlay whatever it provides.
fn resolve(target: Option<&str>, flags: FlagSet) -> Result<Settings, CliError> {
    let flag_settings = flags.into_settings()?;
    let base = match target {
        None => Settings::default(),
        Some(t) => {
            let path = Path::new(t);
            if path.is_file() {
                let text =
                    fs::read_to_string(path).map_err(|e| input(format!("reading {t}: {e}")))?;
                Settings::from_raw(RawConfig::parse(t, &text).map_err(CliError::Input)?)
                    .map_err(CliError::Input)?
            } else if Scenario::from_name(t).is_some() {
                if let Some(other) = flag_settings.scenario.as_deref() {
                    if other != t {
                        return Err(input(format!(
                            "scenario given twice: `{t}` positionally and `{other}` via --scenario"
                        )));
                    }
                }
                Settings {
                    scenario: Some(t.to_string()),
                    ..Settings::default()
                }
            } else {
                return Err(input(format!(
                    "`{t}` is neither a config file nor a scenario name ({SCENARIO_NAMES})"
                )));
            }
        }
    };
    Ok(base.overlaid_with(flag_settings))
}

fn scenario_of(settings: &Settings, default: Option<Scenario>) -> Result<Scenario, CliError> {
    match settings.scenario.as_deref() {
        Some(name) => Scenario::from_name(name).ok_or_else(|| {
            input(format!(
                "unknown scenario `{name}`; expected one of {SCENARIO_NAMES}"
            ))
        }),
        None => default
            .ok_or_else(|| input(format!("no scenario given; expected one of {SCENARIO_NAMES}"))),
    }
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(input(format!("`{key}` must be a positive number, got {v}")))
    }
}

fn nonnegative(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(input(format!("`{key}` must be a nonnegative number, got {v}")))
    }
}

fn exactly<const N: usize>(key: &str, xs: &[f64]) -> Result<[f64; N], CliError> {
    <[f64; N]>::try_from(xs)
        .map_err(|_| input(format!("`{key}` needs exactly {N} entries, got {}", xs.len())))
}

fn build_preset(scenario: Scenario, st: &Settings) -> Result<Preset, CliError> {
    let amplitude = nonnegative("amplitude", st.amplitude.unwrap_or(0.25))?;
    let seed = st.seed.unwrap_or(1);
    let resolution = |fallback: usize| -> Result<usize, CliError> {
        let r = st.resolution.unwrap_or(fallback);
        if r < 2 {
            return Err(input(format!("`resolution` must be at least 2, got {r}")));
        }
        Ok(r)
    };
    let no_cone_keys = |what: &str| -> Result<(), CliError> {
        if st.divisor.is_some() || st.alpha.is_some() || st.beta1.is_some() || st.beta2.is_some() {
            Err(input(format!(
                "{what} has fixed cone data; `divisor`, `alpha`, `beta1`, `beta2` do not apply"
            )))
        } else {
            Ok(())
        }
    };
    let preset = match scenario {
        Scenario::Pillowcase => {
            no_cone_keys("the pillowcase")?;
            presets::pillowcase(resolution(24)?, amplitude, seed)?
        }
        Scenario::HyperbolicTriangle => {
            if st.beta1.is_some() || st.beta2.is_some() {
                return Err(input(
                    "`beta1`/`beta2` are football keys; give the triangle `alpha` or `divisor`",
                ));
            }
            let alphas = match (&st.alpha, &st.divisor) {
                (Some(_), Some(_)) => {
                    return Err(input("give either `alpha` or `divisor`, not both"))
                }
                (Some(a), None) => exactly::<3>("alpha", a)?,
                (None, Some(d)) => {
                    let b = exactly::<3>("divisor", d)?;
                    [1.0 + b[0], 1.0 + b[1], 1.0 + b[2]]
                }
                (None, None) => [0.25; 3],
            };
            presets::hyperbolic_triangle(alphas, resolution(16)?, amplitude, seed)?
        }
        Scenario::Football => {
            if st.alpha.is_some() {
                return Err(input(
                    "`alpha` is a triangle key; give the football `beta1`/`beta2` or `divisor`",
                ));
            }
            let (b1, b2) = match (&st.divisor, st.beta1, st.beta2) {
                (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                    return Err(input("give either `divisor` or `beta1`/`beta2`, not both"))
                }
                (Some(d), None, None) => {
                    let b = exactly::<2>("divisor", d)?;
                    (b[0], b[1])
                }
                (None, b1, b2) => (b1.unwrap_or(-0.5), b2.unwrap_or(-0.5)),
            };
            let length = positive("length", st.length.unwrap_or(1.0))?;
            presets::football(b1, b2, resolution(512)?, length, amplitude, seed)?
        }
        Scenario::Torus => {
            no_cone_keys("the torus")?;
            let n = resolution(16)?;
            presets::flat_torus(n, n, 1.0, 1.0, amplitude, seed)?
        }
    };
    Ok(preset)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Numerical(format!("creating {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text)
        .map_err(|e| CliError::Numerical(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_run(target: &str, flags: FlagSet) -> Result<i32, CliError> {
    let settings = resolve(Some(target), flags)?;
    let scenario = scenario_of(&settings, None)?;
    let preset = build_preset(scenario, &settings)?;

    let dt = positive("dt", settings.dt.unwrap_or(1e-3))?;
    let t_end = positive("t_end", settings.t_end.unwrap_or(5.0))?;
    let stride = settings
        .sample_stride
        .unwrap_or_else(|| ((0.05 / dt).round() as usize).max(1));
    if stride == 0 {
        return Err(input("`sample_stride` must be at least 1"));
    }
    let params = FlowParams {
        dt,
        max_change: positive("max_change", settings.max_change.unwrap_or(0.1))?,
        track_potential: settings.track_potential.unwrap_or(true),
        sample_stride: stride,
        renormalize_volume: settings.renormalize_volume.unwrap_or(false),
        blowup_threshold: positive(
            "blowup_threshold",
            settings.blowup_threshold.unwrap_or(1e6),
        )?,
    };
    let rule = match settings.steady_tol {
        Some(tol) => StopRule::Steady {
            tol: positive("steady_tol", tol)?,
            t_max: t_end,
        },
        None => StopRule::AtTime(t_end),
    };

    let tracked = params.track_potential;
    let mut st = init_flow(preset.surface.clone(), preset.u0.clone(), params)?;
    let (log, reason) = st.run_until(rule)?;

    let summary =
        artifacts::build_summary(&preset.name, &preset.surface, &log, reason, st.r(), dt, tracked);
    let dir = settings
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&preset.name));
    let written = artifacts::write_run_artifacts(&dir, &summary, &st, &log)
        .map_err(|e| CliError::Numerical(format!("writing artifacts: {e}")))?;

    println!(
        "scenario: {} ({} nodes, chi = {:.6}, r = {:.6})",
        summary.scenario, summary.nodes, summary.chi, summary.r
    );
    println!(
        "termination: {} at t = {:.6} ({} samples)",
        summary.termination, summary.t_final, summary.samples
    );
    println!(
        "final sup|K| = {:.3e}, sup|R - r| = {:.3e}, sup|du/dt| = {:.3e}",
        summary.final_sup_abs_k, summary.final_sup_r_minus_r, summary.final_sup_dudt
    );
    if let (Some(rate), Some(r2)) = (summary.decay_rate, summary.decay_fit_r2) {
        println!("decay rate of sup|R - r|: {rate:.4} (fit R^2 = {r2:.4})");
    }
    println!("claim scope: {}", summary.claim_scope);
    print_verdicts(&summary.verdicts);
    for p in &written {
        println!("wrote {}", p.display());
    }

    Ok(if reason == StopReason::Blowup { 4 } else { 0 })
}

fn print_verdicts(v: &artifacts::Verdicts) {
    for (name, verdict) in [
        ("gauss_bonnet", &v.gauss_bonnet),
        ("volume_drift", &v.volume_drift),
        ("lower_curvature_barrier", &v.lower_curvature_barrier),
        ("energy_bounded", &v.energy_bounded),
        ("h_envelope", &v.h_envelope),
        ("potential_identity", &v.potential_identity),
        ("negativity_preserved", &v.negativity_preserved),
    ] {
        println!(
            "verdict {name:<24} {:<14} {}",
            verdict.status, verdict.note
        );
    }
}

fn cmd_sk_study(target: Option<&str>, flags: FlagSet) -> Result<i32, CliError> {
    let settings = resolve(target, flags)?;
    let scenario = scenario_of(&settings, Some(Scenario::Football))?;
    let preset = build_preset(scenario, &settings)?;
    if preset.surface.cones().is_empty() {
        return Err(input(
            "sk-study removes disks around cone tips and this surface has none",
        ));
    }

    let dt = positive("dt", settings.dt.unwrap_or(1e-3))?;
    let t_end = positive("t_end", settings.t_end.unwrap_or(0.05))?;
    let steps = ((t_end / dt).round() as usize).max(1);
    let k_min = settings.k_min.unwrap_or(3);
    let k_max = settings.k_max.unwrap_or(8);
    if k_min < 1 {
        return Err(input(format!("truncation levels start at 1, got {k_min}")));
    }
    if k_min > k_max {
        return Err(input(format!("k_min = {k_min} exceeds k_max = {k_max}")));
    }
    let ks: Vec<i32> = (k_min..=k_max).collect();

    let n = preset.surface.node_count();
    let a = vec![1.0; n];
    let b = vec![0.0; n];
    let f = vec![0.0; n];
    let reports =
        solve_sk_sequence(&preset.surface, &a, &b, &f, &preset.u0, dt, steps, 1.0, &ks)?;

    println!(
        "scenario: {} ({n} nodes); heat problem with dt = {dt:.3e} for {steps} steps",
        preset.name
    );
    println!(
        "{:>3} {:>12} {:>8} {:>14} {:>14}",
        "k", "radius", "active", "gap_to_next", "gap_to_full"
    );
    let mut csv = String::from("k,radius,active_nodes,sup_diff_next,sup_diff_full\n");
    for rep in &reports {
        let next = rep.sup_diff_next.unwrap_or(f64::NAN);
        println!(
            "{:>3} {:>12.6} {:>8} {:>14.6e} {:>14.6e}",
            rep.k, rep.radius, rep.active_nodes, next, rep.sup_diff
        );
        csv.push_str(&format!(
            "{},{:.16e},{},{:.16e},{:.16e}\n",
            rep.k, rep.radius, rep.active_nodes, next, rep.sup_diff
        ));
    }
    let dir = settings
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-sk", preset.name)));
    let path = write_text(&dir, "sk_study.csv", &csv)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_poisson_study(target: Option<&str>, flags: FlagSet) -> Result<i32, CliError> {
    if let Some(t) = target {
        if !Path::new(t).is_file() {
            return Err(input(format!(
                "poisson-study takes a config file; `{t}` is not one"
            )));
        }
    }
    let settings = resolve(target, flags)?;

    let beta = settings.beta.unwrap_or(-0.5);
    let length = positive("length", settings.length.unwrap_or(1.0))?;
    let probe = positive("probe_radius", settings.probe_radius.unwrap_or(0.05))?;
    let resolutions = settings
        .resolutions
        .clone()
        .unwrap_or_else(|| vec![256, 512, 1024]);
    if resolutions.is_empty() {
        return Err(input("`resolutions` must not be empty"));
    }

    println!("cone order beta = {beta} at both tips, probe radius {probe}");
    println!(
        "{:>10} {:>8} {:>18}",
        "resolution", "nodes", "probe_sup_grad_sq"
    );
    let mut csv = String::from("resolution,nodes,probe_sup_grad_sq\n");
    let mut probes: Vec<f64> = Vec::new();
    for &n in &resolutions {
        if n < 2 {
            return Err(input(format!("`resolutions` entries must be at least 2, got {n}")));
        }
        let s = build_football_with_flat(beta, beta, n, length, DEFAULT_FLAT_FRACTION)?;
        let raw: Vec<f64> = (0..=n)
            .map(|i| (std::f64::consts::PI * s.rho(i) / length).cos())
            .collect();
        let surface = Surface::Radial(s);
        let mut f = raw;
        project_mean_zero(&surface, &mut f, None);
        let u = solve_poisson(&surface, &f, None)?;
        let g = gradient_probe(&surface, &u, probe);
        println!("{:>10} {:>8} {:>18.6e}", n, surface.node_count(), g);
        csv.push_str(&format!("{},{},{:.16e}\n", n, surface.node_count(), g));
        probes.push(g);
    }
    let hi = probes.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lo = probes.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    println!("probe spread across resolutions: max/min = {:.4}", hi / lo);

    let dir = settings
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join("poisson-study"));
    let path = write_text(&dir, "poisson_study.csv", &csv)?;
    println!("wrote {}", path.display());
    Ok(0)
}
