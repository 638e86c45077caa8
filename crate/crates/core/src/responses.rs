// SPDX-License-Identifier: MIT OR Apache-2.0

//! Human response records collected by the experiment service.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Current response payload version.
pub const RESPONSE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelChoice {
    Correct,
    Incorrect,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One trial outcome. Latencies are milliseconds; detection latency counts
/// from sentence onset, panel latency from panel onset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub v: u32,
    pub participant_id: String,
    pub session_id: String,
    pub trial_id: String,
    /// The in-sentence key was pressed.
    pub detection_pressed: bool,
    #[serde(default)]
    pub detection_latency_ms: Option<f64>,
    /// Presses after the first one.
    #[serde(default)]
    pub extra_presses: u32,
    pub panel_choice: PanelChoice,
    #[serde(default)]
    pub panel_latency_ms: Option<f64>,
    /// Side that held the "correct" label.
    pub correct_side: Side,
    pub timestamp: String,
    /// Frame timing drifted beyond the client's tolerance.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub timing_flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn err(field: &str, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.to_string(),
        message: message.into(),
    }
}

const FIELDS: [&str; 12] = [
    "v",
    "participant_id",
    "session_id",
    "trial_id",
    "detection_pressed",
    "detection_latency_ms",
    "extra_presses",
    "panel_choice",
    "panel_latency_ms",
    "correct_side",
    "timestamp",
    "timing_flagged",
];

impl ResponseRecord {
    /// Key used for idempotent storage.
    pub fn key(&self) -> (&str, &str) {
        (&self.participant_id, &self.trial_id)
    }

    /// Parses and validates a JSON body, reporting every offending field.
    pub fn from_json(value: &Value) -> Result<Self, Vec<FieldError>> {
        let Some(obj) = value.as_object() else {
            return Err(vec![err("", "body must be a JSON object")]);
        };
        let mut errors = Vec::new();
        for k in obj.keys() {
            if !FIELDS.contains(&k.as_str()) {
                errors.push(err(k, "unknown field"));
            }
        }
        let string = |f: &str, errors: &mut Vec<FieldError>| match obj.get(f) {
            Some(Value::String(s)) if !s.is_empty() => {}
            Some(Value::String(_)) => errors.push(err(f, "must be nonempty")),
            Some(_) => errors.push(err(f, "must be a string")),
            None => errors.push(err(f, "missing")),
        };
        for f in ["participant_id", "session_id", "trial_id", "timestamp"] {
            string(f, &mut errors);
        }
        match obj.get("v").and_then(Value::as_u64) {
            Some(v) if v == u64::from(RESPONSE_VERSION) => {}
            Some(v) => errors.push(err("v", format!("unsupported version {v}"))),
            None => errors.push(err("v", "missing or not an integer")),
        }
        let pressed = match obj.get("detection_pressed") {
            Some(Value::Bool(b)) => Some(*b),
            _ => {
                errors.push(err("detection_pressed", "must be a boolean"));
                None
            }
        };
        let latency = |f: &str, errors: &mut Vec<FieldError>| -> Option<f64> {
            match obj.get(f) {
                None | Some(Value::Null) => None,
                Some(v) => match v.as_f64() {
                    Some(x) if x.is_finite() && x >= 0.0 => Some(x),
                    Some(_) => {
                        errors.push(err(f, "latency must be a finite number >= 0"));
                        None
                    }
                    None => {
                        errors.push(err(f, "latency must be a number"));
                        None
                    }
                },
            }
        };
        let det = latency("detection_latency_ms", &mut errors);
        let panel = latency("panel_latency_ms", &mut errors);
        if pressed == Some(false) && det.is_some() {
            errors.push(err("detection_latency_ms", "latency given without a press"));
        }
        if obj.get("timing_flagged").is_some_and(|v| !v.is_boolean()) {
            errors.push(err("timing_flagged", "must be a boolean"));
        }
        if let Some(v) = obj.get("extra_presses") {
            if v.as_u64().is_none_or(|n| n > u64::from(u32::MAX)) {
                errors.push(err("extra_presses", "must be a nonnegative integer"));
            }
        }
        let choice = obj.get("panel_choice").cloned().map(serde_json::from_value::<PanelChoice>);
        match choice {
            Some(Ok(PanelChoice::Timeout)) if panel.is_some() => {
                errors.push(err("panel_latency_ms", "timeout responses carry no panel latency"))
            }
            Some(Ok(_)) => {}
            _ => errors.push(err("panel_choice", "must be one of correct, incorrect, timeout")),
        }
        if obj
            .get("correct_side")
            .cloned()
            .map(serde_json::from_value::<Side>)
            .is_none_or(|r| r.is_err())
        {
            errors.push(err("correct_side", "must be left or right"));
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        serde_json::from_value(value.clone()).map_err(|e| vec![err("", e.to_string())])
    }

    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        Self::from_json(&serde_json::to_value(self).expect("record serializes")).map(|_| ())
    }
}
