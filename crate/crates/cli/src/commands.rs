use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use pwampc::io::{load_model, parse_toml, to_json, ControllerArtifact, TableArtifact};
use pwampc::mpc::{export_explicit, ExplicitOptions, Mpc, MpcOptions};
use pwampc::plant::{identify_static_friction, NonlinearFrictionPlant, PwaModel};
use pwampc::sim::{
    build_controller, measure, run_with, BuiltController, ControllerChoice, Metrics, PlantChoice, Reference, Scenario,
    SimTrace,
};
use pwampc::synthesis::{synthesize, SynthesisOptions};
use pwampc::Error;

use crate::overrides::Overrides;
use crate::plot::{render, Panel, Series, PALETTE};
use crate::Failure;

pub type CmdResult<T = String> = Result<T, Failure>;

fn read(path: &Path) -> CmdResult {
    fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write(out: &Path, name: &str, text: &str) -> CmdResult<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Failure::io(format!("{}: {e}", out.display())))?;
    let path = out.join(name);
    fs::write(&path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.9}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), fmt)
}

pub fn design(model: Option<&Path>, ov: &Overrides, out: &Path) -> CmdResult {
    let mut m = match model {
        Some(p) => load_model(&read(p)?)?,
        None => PwaModel::identified(),
    };
    ov.apply_model(&mut m);
    let mut syn = SynthesisOptions::default();
    ov.apply_synthesis(&mut syn);
    let mut mpc = MpcOptions::default();
    ov.apply_mpc(&mut mpc);
    let terminal = synthesize(&m, &syn)?;
    let artifact = ControllerArtifact::new(&m, syn.weights.clone(), mpc, terminal)?;
    // Catches option errors (horizon, penalty) before the file is written.
    Mpc::new(artifact.mpc_config()?)?;
    let path = write(out, "controller.json", &to_json(&artifact)?)?;
    let t = &artifact.terminal;
    let c = &t.certificates;
    let mut s = String::new();
    let arm = match t.arm {
        pwampc::synthesis::TerminalArm::Lqr => "lqr",
        pwampc::synthesis::TerminalArm::Robust => "robust",
    };
    let _ = writeln!(s, "arm = {arm}");
    let _ = writeln!(s, "gamma = {}", opt(t.gamma));
    let _ = writeln!(s, "hinf_peak = {}", opt(c.hinf_peak));
    let _ = writeln!(s, "position_peak = {}", opt(c.position_peak));
    let _ = writeln!(s, "spectral_radius_1 = {}", fmt(c.spectral_radius_1));
    let _ = writeln!(s, "spectral_radius_2 = {}", fmt(c.spectral_radius_2));
    let _ = writeln!(s, "decrease_residual_1 = {:.3e}", c.decrease_residual_1);
    let _ = writeln!(s, "decrease_residual_2 = {:.3e}", c.decrease_residual_2);
    let _ = writeln!(s, "terminal_facets = {}", c.terminal_rows);
    let _ = writeln!(s, "model_hash = {}", artifact.model_hash);
    let _ = writeln!(s, "controller = {}", path.display());
    write(out, "design.txt", &s)?;
    Ok(s)
}

pub fn load_scenario(path: Option<&Path>, ov: &Overrides) -> CmdResult<Scenario> {
    let mut s: Scenario = match path {
        Some(p) => parse_toml(&read(p)?)?,
        None => Scenario::default(),
    };
    ov.apply_scenario(&mut s);
    s.validate()?;
    Ok(s)
}

/// A controller ready to simulate, with the model used for its predictions.
pub struct Resolved {
    pub label: String,
    pub scenario: Scenario,
    pub built: BuiltController,
    pub model: PwaModel,
}

/// `spec` is a controller kind (`mpc-lqr`, `mpc-robust`, `pid`) or a
/// controller file written by `design`.
pub fn resolve(scenario: &Scenario, spec: Option<&str>, model: Option<&Path>) -> CmdResult<Resolved> {
    let mut sc = scenario.clone();
    let mut m = match model {
        Some(p) => load_model(&read(p)?)?,
        None => sc.controller_model.model(),
    };
    if let Some(spec) = spec {
        if let Ok(choice) = spec.parse::<ControllerChoice>() {
            sc.controller = choice;
        } else {
            let artifact = ControllerArtifact::parse(&read(Path::new(spec))?)?;
            let mut cfg = artifact.mpc_config()?;
            if (cfg.model.ts - sc.ts).abs() > 1e-12 {
                return Err(Error::Invalid(format!(
                    "controller sampled at {} s, scenario at {} s",
                    cfg.model.ts, sc.ts
                ))
                .into());
            }
            cfg.options = artifact.mpc.clone();
            m = cfg.model.clone();
            let mpc = Mpc::new(cfg)?;
            let table = if sc.explicit {
                Some(Box::new(export_explicit(&mpc, &sc.table)?))
            } else {
                None
            };
            let label = Path::new(spec)
                .file_stem()
                .map_or_else(|| "controller".into(), |s| s.to_string_lossy().into_owned());
            return Ok(Resolved {
                label,
                scenario: sc,
                built: BuiltController::Mpc {
                    mpc: Box::new(mpc),
                    table,
                },
                model: m,
            });
        }
    }
    m.ts = sc.ts;
    let built = build_controller(&sc, &m)?;
    Ok(Resolved {
        label: sc.controller.label().into(),
        scenario: sc,
        built,
        model: m,
    })
}

fn plant_of(s: &Scenario) -> Option<PwaModel> {
    match s.plant {
        PlantChoice::Identified => Some(PwaModel::identified()),
        PlantChoice::Assumed => Some(PwaModel::assumed()),
        PlantChoice::Nonlinear => None,
    }
}

pub struct Outcome {
    pub label: String,
    pub trace: SimTrace,
    pub metrics: Option<Metrics>,
}

pub fn simulate_one(r: &Resolved) -> CmdResult<Outcome> {
    let plant = plant_of(&r.scenario);
    let trace = run_with(&r.scenario, &r.built, plant.as_ref(), &r.model)?;
    let metrics = measure(&trace).ok();
    Ok(Outcome {
        label: r.label.clone(),
        trace,
        metrics,
    })
}

fn is_square(s: &Scenario) -> bool {
    matches!(s.reference, Reference::Square { .. })
}

/// Error and velocity panels for steps, tracking and input panels for square waves.
fn panels(scenario: &Scenario, runs: &[&Outcome]) -> Vec<Panel> {
    let series = |f: &dyn Fn(&pwampc::sim::TraceRow) -> f64| -> Vec<Series> {
        runs.iter()
            .enumerate()
            .map(|(i, o)| Series {
                label: o.label.clone(),
                color: PALETTE[i % PALETTE.len()],
                dashed: false,
                points: o.trace.rows.iter().map(|r| (r.t, f(r))).collect(),
            })
            .collect()
    };
    if is_square(scenario) {
        let mut top = series(&|r| r.y);
        if let Some(o) = runs.first() {
            top.push(Series {
                label: "reference".into(),
                color: PALETTE[5],
                dashed: true,
                points: o.trace.rows.iter().map(|r| (r.t, r.r)).collect(),
            });
        }
        vec![
            Panel {
                ylabel: "position (mm)".into(),
                series: top,
            },
            Panel {
                ylabel: "input (V)".into(),
                series: series(&|r| r.u),
            },
        ]
    } else {
        vec![
            Panel {
                ylabel: "error y - r (mm)".into(),
                series: series(&|r| r.y - r.r),
            },
            Panel {
                ylabel: "velocity (mm/s)".into(),
                series: series(&|r| r.v),
            },
        ]
    }
}

fn metrics_text(scenario: &Scenario, o: &Outcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario = {}", scenario.name);
    let _ = writeln!(s, "controller = {}", o.label);
    let _ = writeln!(s, "config_hash = {}", o.trace.config_hash);
    match &o.metrics {
        Some(m) => s.push_str(&m.to_text()),
        None => {
            let _ = writeln!(s, "samples = {}", o.trace.rows.len());
        }
    }
    let _ = writeln!(
        s,
        "fault = {}",
        o.trace
            .fault
            .as_ref()
            .map_or_else(|| "none".into(), |f| format!("step {}: {}", f.step, f.message))
    );
    s
}

fn fault_failure(o: &Outcome) -> Option<Failure> {
    o.trace.fault.as_ref().map(|f| {
        Failure::from(Error::SimulationFault {
            step: f.step,
            message: format!("{}: {}", o.label, f.message),
        })
    })
}

pub fn simulate(
    scenario: Option<&Path>,
    controller: Option<&str>,
    model: Option<&Path>,
    ov: &Overrides,
    out: &Path,
) -> CmdResult {
    let sc = load_scenario(scenario, ov)?;
    let r = resolve(&sc, controller, model)?;
    let o = simulate_one(&r)?;
    write(out, "trace.csv", &o.trace.to_csv())?;
    let text = metrics_text(&r.scenario, &o);
    write(out, "metrics.txt", &text)?;
    let title = format!("{}: {}", r.scenario.name, o.label);
    write(out, "plot.svg", &render(&title, &panels(&r.scenario, &[&o])))?;
    if let Some(f) = fault_failure(&o) {
        return Err(f);
    }
    Ok(text)
}

pub fn compare(
    scenario: Option<&Path>,
    controllers: &[String],
    model: Option<&Path>,
    ov: &Overrides,
    out: &Path,
    jobs: usize,
) -> CmdResult {
    let sc = load_scenario(scenario, ov)?;
    let specs: Vec<String> = if controllers.is_empty() {
        vec!["mpc-lqr".into(), "mpc-robust".into()]
    } else {
        controllers
            .iter()
            .flat_map(|c| c.split(','))
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::from(Error::Invalid(format!("worker pool: {e}"))))?;
    // Each worker owns one controller end to end; results keep input order.
    let results: Vec<CmdResult<Outcome>> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| simulate_one(&resolve(&sc, Some(spec), model)?))
            .collect()
    });
    let runs: Vec<Outcome> = results.into_iter().collect::<CmdResult<_>>()?;

    let mut s = String::new();
    let _ = writeln!(s, "scenario = {}", sc.name);
    let _ = writeln!(
        s,
        "{:<14} {:>14} {:>14} {:>20} {:>16} {:>8}",
        "controller", "overshoot_mm", "rise_time_s", "steady_state_err_mm", "oscillation_mm", "fault"
    );
    for o in &runs {
        let m = o.metrics;
        let g = |f: fn(&Metrics) -> f64| m.as_ref().map_or("nan".to_string(), |m| fmt(f(m)));
        let _ = writeln!(
            s,
            "{:<14} {:>14} {:>14} {:>20} {:>16} {:>8}",
            o.label,
            g(|m| m.overshoot),
            g(|m| m.rise_time),
            g(|m| m.steady_state_error),
            g(|m| m.oscillation_amplitude),
            if o.trace.fault.is_some() { "yes" } else { "no" }
        );
    }
    let osc = |label: &str| {
        runs.iter()
            .find(|o| o.label == label)
            .and_then(|o| o.metrics)
            .map(|m| m.oscillation_amplitude)
    };
    if let (Some(lqr), Some(rob)) = (osc("mpc-lqr"), osc("mpc-robust")) {
        let _ = writeln!(s, "oscillation_ratio (mpc-robust / mpc-lqr) = {}", fmt(rob / lqr));
    }
    for o in &runs {
        write(out, &format!("trace-{}.csv", o.label), &o.trace.to_csv())?;
    }
    write(out, "compare.txt", &s)?;
    let refs: Vec<&Outcome> = runs.iter().collect();
    write(out, "compare.svg", &render(&sc.name, &panels(&sc, &refs)))?;
    if let Some(f) = runs.iter().find_map(fault_failure) {
        return Err(f);
    }
    Ok(s)
}

pub fn export_table(controller: &Path, ov: &Overrides, out: &Path) -> CmdResult {
    let artifact = ControllerArtifact::parse(&read(controller)?)?;
    let mpc = Mpc::new(artifact.mpc_config()?)?;
    let mut opts = ExplicitOptions::default();
    ov.apply_table(&mut opts);
    let table = export_explicit(&mpc, &opts)?;
    let t = TableArtifact::new(&artifact, table)?;
    let path = write(out, "table.json", &to_json(&t)?)?;
    let counts = t.table.region_counts();
    let mut s = String::new();
    let _ = writeln!(s, "regions = {}", t.region_count);
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(s, "regions_omega_{} = {c}", i + 1);
    }
    let _ = writeln!(s, "samples = {}", t.table.samples);
    let _ = writeln!(s, "feasible_samples = {}", t.table.feasible_samples);
    let _ = writeln!(s, "truncated = {}", t.table.truncated);
    let _ = writeln!(s, "controller_hash = {}", t.controller_hash);
    let _ = writeln!(s, "table = {}", path.display());
    write(out, "regions.txt", &s)?;
    Ok(s)
}

pub fn identify(plant: Option<&Path>, ov: &Overrides, out: &Path) -> CmdResult {
    let p: NonlinearFrictionPlant = match plant {
        Some(path) => parse_toml(&read(path)?)?,
        None => NonlinearFrictionPlant::default(),
    };
    let amplitude = ov.float("amplitude").unwrap_or(3.0);
    let frequency = ov.float("frequency").unwrap_or(0.5);
    let ts = ov.float("ts").unwrap_or(1e-3);
    let est = identify_static_friction(&p, amplitude, frequency, ts)?;
    let mut s = String::new();
    let _ = writeln!(s, "f_cp_est = {}", fmt(est.f_cp));
    let _ = writeln!(s, "f_cn_est = {}", fmt(est.f_cn));
    let _ = writeln!(s, "amplitude = {}", fmt(amplitude));
    let _ = writeln!(s, "frequency = {}", fmt(frequency));
    write(out, "identify.txt", &s)?;
    Ok(s)
}
