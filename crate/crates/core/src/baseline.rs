//! Relay-tuned PID benchmark.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the raw gains act on the sampled error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PidForm {
    /// `u = Kp e + Ki Σe / Ts + Kd Δe`.
    #[default]
    Sampled,
    /// `u = Kp e + Ki Ts Σe + Kd Δe / Ts`.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub form: PidForm,
    pub u_max: f64,
    pub anti_windup: bool,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 34.96,
            ki: 0.09674,
            kd: 1545.5,
            form: PidForm::Sampled,
            u_max: 10.0,
            anti_windup: true,
        }
    }
}

/// Positional PID on the tracking error `e = r − y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PidController {
    pub gains: PidGains,
    pub ts: f64,
    integral: f64,
    prev_error: Option<f64>,
}

impl PidController {
    pub fn new(gains: PidGains, ts: f64) -> Result<Self> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::Invalid("PID sampling period must be positive".into()));
        }
        if !(gains.u_max > 0.0) || ![gains.kp, gains.ki, gains.kd].iter().all(|g| g.is_finite()) {
            return Err(Error::Invalid(format!("invalid PID gains {gains:?}")));
        }
        Ok(Self {
            gains,
            ts,
            integral: 0.0,
            prev_error: None,
        })
    }

    /// Running error sum.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    fn integral_scale(&self) -> f64 {
        match self.gains.form {
            PidForm::Sampled => self.gains.ki / self.ts,
            PidForm::Continuous => self.gains.ki * self.ts,
        }
    }

    fn derivative_scale(&self) -> f64 {
        match self.gains.form {
            PidForm::Sampled => self.gains.kd,
            PidForm::Continuous => self.gains.kd / self.ts,
        }
    }

    pub fn step(&mut self, e: f64) -> f64 {
        let g = &self.gains;
        let de = self.prev_error.map_or(0.0, |p| e - p);
        self.prev_error = Some(e);
        let pd = g.kp * e + self.derivative_scale() * de;
        let candidate = self.integral + e;
        let u = pd + self.integral_scale() * candidate;
        if !(g.anti_windup && u.abs() > g.u_max) {
            self.integral = candidate;
        }
        u.clamp(-g.u_max, g.u_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_zero_output() {
        let mut pid = PidController::new(PidGains::default(), 1e-3).unwrap();
        for _ in 0..10 {
            assert_eq!(pid.step(0.0), 0.0);
        }
    }

    #[test]
    fn constant_error_winds_to_clamp_and_holds() {
        let mut pid = PidController::new(PidGains::default(), 1e-3).unwrap();
        let mut last = 0.0;
        let mut hit = None;
        for k in 0..1000 {
            let u = pid.step(0.05);
            assert!(u >= last - 1e-12 && u <= 10.0);
            if u == 10.0 && hit.is_none() {
                hit = Some((k, pid.integral()));
            }
            last = u;
        }
        let (_, frozen) = hit.expect("reaches the clamp");
        assert_eq!(pid.integral(), frozen);
    }

    #[test]
    fn first_derivative_is_zero() {
        let g = PidGains {
            kp: 0.0,
            ki: 0.0,
            kd: 1.0,
            ..Default::default()
        };
        let mut pid = PidController::new(g, 1e-3).unwrap();
        assert_eq!(pid.step(0.5), 0.0);
        assert_eq!(pid.step(0.7), 0.7 - 0.5);
    }
}
