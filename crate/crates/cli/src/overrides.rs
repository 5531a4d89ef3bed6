//! `--override key=value` parsing. Every pair is parsed and checked against
//! the command's accepted keys before any synthesis runs.

use pwampc::mpc::{ExplicitOptions, MpcOptions};
use pwampc::numerics::diag;
use pwampc::plant::PwaModel;
use pwampc::sim::{Reference, Scenario};
use pwampc::synthesis::{SynthesisOptions, TerminalArm};
use pwampc::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(usize),
    Float(f64),
    Bool(bool),
    Diag(Vec<f64>),
    Arm(TerminalArm),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Bool,
    Diag,
    Arm,
}

const KEYS: &[(&str, Kind)] = &[
    ("horizon", Kind::Int),
    ("q", Kind::Diag),
    ("r", Kind::Float),
    ("epsilon", Kind::Float),
    ("deadband", Kind::Bool),
    ("anti_windup", Kind::Bool),
    ("soft_penalty", Kind::Float),
    ("w_star", Kind::Float),
    ("gamma_lo", Kind::Float),
    ("gamma_hi", Kind::Float),
    ("theta_max", Kind::Float),
    ("u_max", Kind::Float),
    ("arm", Kind::Arm),
    ("duration", Kind::Float),
    ("amplitude", Kind::Float),
    ("frequency", Kind::Float),
    ("seed", Kind::Int),
    ("explicit", Kind::Bool),
    ("kp", Kind::Float),
    ("ki", Kind::Float),
    ("kd", Kind::Float),
    ("samples", Kind::Int),
    ("ts", Kind::Float),
];

/// Keys that shape the synthesized controller.
pub const DESIGN_KEYS: &[&str] = &[
    "horizon",
    "q",
    "r",
    "epsilon",
    "deadband",
    "anti_windup",
    "soft_penalty",
    "w_star",
    "gamma_lo",
    "gamma_hi",
    "theta_max",
    "u_max",
    "arm",
];

pub const SCENARIO_KEYS: &[&str] = &[
    "horizon",
    "q",
    "r",
    "epsilon",
    "deadband",
    "anti_windup",
    "soft_penalty",
    "w_star",
    "gamma_lo",
    "gamma_hi",
    "theta_max",
    "duration",
    "amplitude",
    "frequency",
    "seed",
    "explicit",
    "kp",
    "ki",
    "kd",
    "samples",
];

pub const TABLE_KEYS: &[&str] = &["samples", "seed"];

pub const IDENTIFY_KEYS: &[&str] = &["amplitude", "frequency", "ts"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(Vec<(String, Value)>);

fn parse_value(key: &str, kind: Kind, raw: &str) -> Result<Value> {
    let bad = || Error::Invalid(format!("override {key}: cannot parse '{raw}'"));
    let float = |s: &str| -> Result<f64> {
        let v: f64 = s.trim().parse().map_err(|_| bad())?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad())
        }
    };
    Ok(match kind {
        Kind::Int => Value::Int(raw.trim().parse().map_err(|_| bad())?),
        Kind::Float => Value::Float(float(raw)?),
        Kind::Bool => Value::Bool(raw.trim().parse().map_err(|_| bad())?),
        Kind::Diag => {
            let v: Vec<f64> = raw.split(',').map(float).collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::Invalid(format!("override q needs three diagonal entries, got {}", v.len())));
            }
            Value::Diag(v)
        }
        Kind::Arm => Value::Arm(raw.trim().parse()?),
    })
}

impl Overrides {
    /// Parse `key=value` pairs, accepting only `allowed` keys.
    pub fn parse(pairs: &[String], allowed: &[&str]) -> Result<Self> {
        let mut out = Vec::new();
        for p in pairs {
            let (key, raw) = p
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("override '{p}' is not key=value")))?;
            let key = key.trim();
            let Some(&(_, kind)) = KEYS.iter().find(|(k, _)| *k == key) else {
                return Err(Error::Invalid(format!("unknown override key '{key}'")));
            };
            if !allowed.contains(&key) {
                return Err(Error::Invalid(format!("override '{key}' does not apply to this command")));
            }
            out.push((key.to_string(), parse_value(key, kind, raw)?));
        }
        Ok(Self(out))
    }

    fn each(&self, mut f: impl FnMut(&str, &Value)) {
        for (k, v) in &self.0 {
            f(k, v);
        }
    }

    pub fn apply_synthesis(&self, s: &mut SynthesisOptions) {
        self.each(|k, v| match (k, v) {
            ("q", Value::Diag(d)) => s.weights.q = diag(d),
            ("r", Value::Float(x)) => s.weights.r = *x,
            ("w_star", Value::Float(x)) => s.hinf.w_star = *x,
            ("gamma_lo", Value::Float(x)) => s.hinf.gamma_lo = *x,
            ("gamma_hi", Value::Float(x)) => s.hinf.gamma_hi = *x,
            ("theta_max", Value::Float(x)) => s.terminal_set.theta_max = *x,
            ("arm", Value::Arm(a)) => s.arm = *a,
            _ => {}
        });
    }

    pub fn apply_mpc(&self, m: &mut MpcOptions) {
        self.each(|k, v| match (k, v) {
            ("horizon", Value::Int(n)) => m.horizon = *n,
            ("epsilon", Value::Float(x)) => m.epsilon = *x,
            ("deadband", Value::Bool(b)) => m.deadband = *b,
            ("anti_windup", Value::Bool(b)) => m.anti_windup = *b,
            ("soft_penalty", Value::Float(x)) => m.soft_penalty = *x,
            _ => {}
        });
    }

    pub fn apply_model(&self, m: &mut PwaModel) {
        self.each(|k, v| {
            if let ("u_max", Value::Float(x)) = (k, v) {
                m.constraints.u_max = *x;
            }
        });
    }

    pub fn apply_table(&self, t: &mut ExplicitOptions) {
        self.each(|k, v| match (k, v) {
            ("samples", Value::Int(n)) => t.samples = *n,
            ("seed", Value::Int(n)) => t.seed = *n as u64,
            _ => {}
        });
    }

    pub fn apply_scenario(&self, s: &mut Scenario) {
        self.apply_synthesis(&mut s.synthesis);
        self.apply_mpc(&mut s.mpc);
        self.each(|k, v| match (k, v) {
            ("duration", Value::Float(x)) => s.duration = *x,
            ("seed", Value::Int(n)) => s.seed = *n as u64,
            ("explicit", Value::Bool(b)) => s.explicit = *b,
            ("kp", Value::Float(x)) => s.pid.kp = *x,
            ("ki", Value::Float(x)) => s.pid.ki = *x,
            ("kd", Value::Float(x)) => s.pid.kd = *x,
            ("samples", Value::Int(n)) => s.table.samples = *n,
            ("amplitude", Value::Float(x)) => match &mut s.reference {
                Reference::Step { amplitude, .. } | Reference::Square { amplitude, .. } => *amplitude = *x,
            },
            ("frequency", Value::Float(x)) => {
                if let Reference::Square { frequency, .. } = &mut s.reference {
                    *frequency = *x;
                }
            }
            _ => {}
        });
    }

    pub fn float(&self, key: &str) -> Option<f64> {
        self.0.iter().rev().find_map(|(k, v)| match v {
            Value::Float(x) if k == key => Some(*x),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(p: &[&str]) -> Vec<String> {
        p.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_and_applies() {
        let o = Overrides::parse(&pairs(&["horizon=7", "q=1,2,3", "r=0.01", "arm=lqr"]), DESIGN_KEYS).unwrap();
        let mut s = SynthesisOptions::default();
        o.apply_synthesis(&mut s);
        assert_eq!(s.weights.r, 0.01);
        assert_eq!(s.weights.q[(2, 2)], 3.0);
        assert_eq!(s.arm, TerminalArm::Lqr);
        let mut m = MpcOptions::default();
        o.apply_mpc(&mut m);
        assert_eq!(m.horizon, 7);
    }

    #[test]
    fn rejects_bad_pairs() {
        for bad in ["horizon", "horizon=x", "q=1,2", "nope=1", "r=nan", "duration=1"] {
            assert!(Overrides::parse(&pairs(&[bad]), DESIGN_KEYS).is_err(), "{bad}");
        }
    }

    #[test]
    fn scenario_reference_fields() {
        let o = Overrides::parse(&pairs(&["amplitude=2", "frequency=4", "duration=0.5"]), SCENARIO_KEYS).unwrap();
        let mut s = Scenario::square_wave(pwampc::sim::ControllerChoice::Pid);
        o.apply_scenario(&mut s);
        assert_eq!(
            s.reference,
            Reference::Square {
                amplitude: 2.0,
                frequency: 4.0
            }
        );
        assert_eq!(s.duration, 0.5);
    }
}
