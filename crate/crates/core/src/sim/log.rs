use serde::{Deserialize, Serialize};

use crate::dynamics::EntryState;

/// One logged step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub state: EntryState,
    /// Altitude [m]
    pub h: f64,
    /// Downrange flown so far [m]
    pub s: f64,
    /// Measured drag [m/s²]
    pub drag: f64,
    /// Onboard drag rate [m/s³]
    pub drag_rate: f64,
    pub d_star: f64,
    pub d_star_dot: f64,
    pub d_star_ddot: f64,
    /// `D − D*`
    pub x1: f64,
    /// `Ḋ − Ḋ*` from the onboard drag-rate model
    pub x2: f64,
    pub sigma: f64,
    pub u_raw: f64,
    pub u: f64,
    pub saturated: bool,
    /// The law was not inverted (`|g0|` below floor) and σ was held.
    pub held: bool,
    pub xhat1: f64,
    pub xhat2: f64,
    pub f: f64,
    pub g0: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }

    /// Column `f` over every record.
    pub fn column(&self, f: impl Fn(&LogRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

/// Terminal metrics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Reached `v ≤ V_f` before `max_time`.
    pub terminated: bool,
    pub t_final: f64,
    pub terminal_state: EntryState,
    pub h_final: f64,
    pub s_final: f64,
    /// `s_final − s_target` [m]
    pub downrange_error: f64,
    /// `h_final − h_f` [m]
    pub altitude_error: f64,
    pub saturation_fraction: f64,
    pub hold_fraction: f64,
    /// Largest `|D − D*|` after the last saturated or held step [m/s²]
    pub max_abs_x1_after_transient: f64,
    pub steps: usize,
}
