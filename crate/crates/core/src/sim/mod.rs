//! Closed-loop simulation: scenarios, the fixed-step loop and traces.

mod metrics;

pub use metrics::{measure, segments, Metrics, Segment};

use serde::{Deserialize, Serialize};

use crate::baseline::{PidController, PidGains};
use crate::error::{Error, Result};
use crate::mpc::{export_explicit, DecisionStatus, ExplicitController, ExplicitOptions, Mpc, MpcConfig, MpcController, MpcOptions};
use crate::plant::{NonlinearFrictionPlant, PwaModel, State};
use crate::synthesis::{synthesize, SynthesisOptions, TerminalArm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Identified,
    Assumed,
}

impl ModelChoice {
    pub fn model(self) -> PwaModel {
        match self {
            ModelChoice::Identified => PwaModel::identified(),
            ModelChoice::Assumed => PwaModel::assumed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantChoice {
    Identified,
    Assumed,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerChoice {
    MpcLqr,
    MpcRobust,
    Pid,
}

impl ControllerChoice {
    pub fn label(self) -> &'static str {
        match self {
            ControllerChoice::MpcLqr => "mpc-lqr",
            ControllerChoice::MpcRobust => "mpc-robust",
            ControllerChoice::Pid => "pid",
        }
    }
}

impl std::str::FromStr for ControllerChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpc-lqr" => Ok(Self::MpcLqr),
            "mpc-robust" => Ok(Self::MpcRobust),
            "pid" => Ok(Self::Pid),
            other => Err(Error::Invalid(format!("unknown controller '{other}' (mpc-lqr, mpc-robust, pid)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reference {
    /// `r = amplitude` from `time` on, `0` before.
    Step { amplitude: f64, time: f64 },
    /// Alternates between `amplitude` (first half period) and `0`.
    Square { amplitude: f64, frequency: f64 },
}

impl Default for Reference {
    fn default() -> Self {
        Reference::Step {
            amplitude: 1.0,
            time: 0.0,
        }
    }
}

impl Reference {
    pub fn at(&self, k: usize, ts: f64) -> f64 {
        let t = k as f64 * ts;
        match *self {
            Reference::Step { amplitude, time } => {
                if t + 0.5 * ts >= time {
                    amplitude
                } else {
                    0.0
                }
            }
            Reference::Square { amplitude, frequency } => {
                // Half period counted in whole samples so edges land on the grid.
                let half = (0.5 / (frequency * ts)).round().max(1.0) as usize;
                if (k / half) % 2 == 0 {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Reference::Step { amplitude, time } => amplitude.is_finite() && time.is_finite() && time >= 0.0,
            Reference::Square { amplitude, frequency } => amplitude.is_finite() && frequency > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid reference {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    /// Simulated truth.
    pub plant: PlantChoice,
    /// Model the controller is synthesized on.
    pub controller_model: ModelChoice,
    pub controller: ControllerChoice,
    pub reference: Reference,
    pub duration: f64,
    pub ts: f64,
    pub seed: u64,
    pub initial: State,
    /// Evaluate an explicit table before the online solver.
    pub explicit: bool,
    pub mpc: MpcOptions,
    pub synthesis: SynthesisOptions,
    pub pid: PidGains,
    pub nonlinear: NonlinearFrictionPlant,
    pub table: ExplicitOptions,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "step".into(),
            plant: PlantChoice::Identified,
            controller_model: ModelChoice::Identified,
            controller: ControllerChoice::MpcRobust,
            reference: Reference::default(),
            duration: 1.0,
            ts: 1e-3,
            seed: 0,
            initial: State::default(),
            explicit: false,
            mpc: MpcOptions::default(),
            synthesis: SynthesisOptions::default(),
            pid: PidGains::default(),
            nonlinear: NonlinearFrictionPlant::default(),
            table: ExplicitOptions::default(),
        }
    }
}

impl Scenario {
    /// Controller on the identified model, assumed model as the plant, 1 mm step.
    pub fn mismatch(controller: ControllerChoice) -> Self {
        Self {
            name: "mismatch".into(),
            plant: PlantChoice::Assumed,
            controller_model: ModelChoice::Identified,
            controller,
            duration: 1.0,
            ..Self::default()
        }
    }

    /// 1 Hz, 1 mm square wave on the identified model.
    pub fn square_wave(controller: ControllerChoice) -> Self {
        Self {
            name: "square".into(),
            controller,
            reference: Reference::Square {
                amplitude: 1.0,
                frequency: 1.0,
            },
            duration: 2.0,
            ..Self::default()
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.ts).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::Invalid("ts must be positive".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Invalid("duration must be positive".into()));
        }
        let n = self.duration / self.ts;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::Invalid(format!(
                "duration {} is not a multiple of ts {}",
                self.duration, self.ts
            )));
        }
        if !self.initial.is_finite() {
            return Err(Error::Invalid("initial state must be finite".into()));
        }
        self.reference.validate()?;
        if self.plant == PlantChoice::Nonlinear {
            self.nonlinear.validate()?;
        }
        Ok(())
    }

    /// Synthesis options with the arm implied by the controller choice.
    pub fn synthesis_options(&self) -> SynthesisOptions {
        let mut s = self.synthesis.clone();
        s.arm = match self.controller {
            ControllerChoice::MpcLqr => TerminalArm::Lqr,
            _ => TerminalArm::Robust,
        };
        s
    }
}

/// Prepared controller for a scenario.
#[derive(Debug, Clone)]
pub enum BuiltController {
    Mpc {
        mpc: Box<Mpc>,
        table: Option<Box<ExplicitController>>,
    },
    Pid(PidGains),
}

/// Synthesize the scenario's controller on `model`.
pub fn build_controller(scenario: &Scenario, model: &PwaModel) -> Result<BuiltController> {
    match scenario.controller {
        ControllerChoice::Pid => Ok(BuiltController::Pid(scenario.pid)),
        _ => {
            let opts = scenario.synthesis_options();
            let terminal = synthesize(model, &opts)?;
            let mut pm = model.clone();
            pm.ts = scenario.ts;
            let mpc = Mpc::new(MpcConfig {
                options: scenario.mpc.clone(),
                weights: opts.weights,
                model: pm,
                terminal,
            })?;
            let table = if scenario.explicit {
                Some(Box::new(export_explicit(&mpc, &scenario.table)?))
            } else {
                None
            };
            Ok(BuiltController::Mpc {
                mpc: Box::new(mpc),
                table,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub r: f64,
    pub y: f64,
    pub v: f64,
    pub u: f64,
    /// Region index 1..4 of the PWA plant (the prediction region for the nonlinear plant).
    pub region: u8,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFault {
    pub step: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub ts: f64,
    pub rows: Vec<TraceRow>,
    pub fault: Option<SimFault>,
    pub config_hash: String,
}

pub const CSV_HEADER: &str = "t,r,y,v,u,region,status";

impl SimTrace {
    /// CSV with the fixed header; floats use the shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            use std::fmt::Write;
            let _ = writeln!(s, "{},{},{},{},{},{},{}", r.t, r.r, r.y, r.v, r.u, r.region, r.status);
        }
        s
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y - r.r).collect()
    }
}

enum Truth {
    Pwa(PwaModel),
    Nonlinear(NonlinearFrictionPlant),
}

/// Run a scenario with its built-in models.
pub fn run(scenario: &Scenario) -> Result<SimTrace> {
    scenario.validate()?;
    let model = scenario.controller_model.model();
    let controller = build_controller(scenario, &model)?;
    let plant = match scenario.plant {
        PlantChoice::Identified => Some(PwaModel::identified()),
        PlantChoice::Assumed => Some(PwaModel::assumed()),
        PlantChoice::Nonlinear => None,
    };
    run_with(scenario, &controller, plant.as_ref(), &model)
}

/// Run with a prepared controller. `plant = None` selects the nonlinear plant
/// from the scenario; `model` supplies region labels in that case.
pub fn run_with(
    scenario: &Scenario,
    controller: &BuiltController,
    plant: Option<&PwaModel>,
    model: &PwaModel,
) -> Result<SimTrace> {
    scenario.validate()?;
    let truth = match plant {
        Some(p) => {
            p.validate()?;
            let mut p = p.clone();
            p.ts = scenario.ts;
            Truth::Pwa(p)
        }
        None => Truth::Nonlinear(scenario.nonlinear.clone()),
    };
    let ts = scenario.ts;
    let steps = scenario.steps();
    let mut mpc_ctrl = None;
    let mut pid = None;
    match controller {
        BuiltController::Mpc { mpc, table } => {
            let mut c = MpcController::new(mpc);
            if let Some(t) = table {
                c = c.with_table(t);
            }
            mpc_ctrl = Some(c);
        }
        BuiltController::Pid(g) => {
            let mut g = *g;
            g.u_max = model.constraints.u_max;
            pid = Some(PidController::new(g, ts)?);
        }
    }
    let u_max = model.constraints.u_max;
    let mut x = scenario.initial;
    let mut rows = Vec::with_capacity(steps);
    let mut fault = None;
    for k in 0..steps {
        let r = scenario.reference.at(k, ts);
        let (u, status) = if let Some(c) = mpc_ctrl.as_mut() {
            let d = c.step(x, r);
            (d.u, d.status)
        } else {
            let p = pid.as_mut().expect("one controller is set");
            (p.step(r - x.y), DecisionStatus::Optimal)
        };
        let u = u.clamp(-u_max, u_max);
        let status_label = match (&pid, status) {
            (Some(_), _) => "pid",
            (None, s) => s.label(),
        };
        let stepped = match &truth {
            Truth::Pwa(p) => p.step(x, u, r - x.y).map(|(n, reg)| (n, reg.index())),
            Truth::Nonlinear(p) => p.step(x, u, ts).map(|n| (n, model.region_of(x.v, r - x.y).index())),
        };
        let region = match &stepped {
            Ok((_, reg)) => *reg,
            Err(_) => 0,
        };
        rows.push(TraceRow {
            t: k as f64 * ts,
            r,
            y: x.y,
            v: x.v,
            u,
            region,
            status: status_label.to_string(),
        });
        if status == DecisionStatus::Fault {
            fault = Some(SimFault {
                step: k,
                message: "controller fault".into(),
            });
            break;
        }
        match stepped {
            Ok((next, _)) => x = next,
            Err(e) => {
                fault = Some(SimFault {
                    step: k,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(SimTrace {
        ts,
        rows,
        fault,
        config_hash: crate::io::hash_json(scenario)?,
    })
}
