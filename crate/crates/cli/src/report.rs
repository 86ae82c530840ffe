use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA: &str = "fundgap.report";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One audited inequality or numerical check.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Evidence {
    pub stage: String,
    pub check: String,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub tolerance: Option<f64>,
    pub residual: Option<f64>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

impl Evidence {
    pub fn new(stage: &str, check: &str, passed: bool) -> Self {
        Self {
            stage: stage.into(),
            check: check.into(),
            value: None,
            bound: None,
            tolerance: None,
            residual: None,
            passed,
            detail: Value::Null,
        }
    }

    pub fn value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    pub fn bound(mut self, v: f64) -> Self {
        self.bound = Some(v);
        self
    }

    pub fn tolerance(mut self, v: f64) -> Self {
        self.tolerance = Some(v);
        self
    }

    pub fn residual(mut self, v: f64) -> Self {
        self.residual = Some(v);
        self
    }

    pub fn detail(mut self, v: Value) -> Self {
        self.detail = v;
        self
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Report {
    pub schema: String,
    pub schema_version: u32,
    pub command: String,
    pub inputs: Value,
    pub results: Value,
    pub evidence: Vec<Evidence>,
    pub verdict: Verdict,
    pub caveats: Vec<String>,
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl Report {
    pub fn new(command: &str, inputs: Value) -> Self {
        Self {
            schema: SCHEMA.into(),
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            inputs,
            results: Value::Null,
            evidence: Vec::new(),
            verdict: Verdict::Pass,
            caveats: Vec::new(),
            artifacts: Vec::new(),
            wall_time_s: None,
        }
    }

    pub fn push(&mut self, e: Evidence) {
        self.evidence.push(e);
    }

    pub fn caveat(&mut self, text: impl Into<String>) {
        self.caveats.push(text.into());
    }

    /// Sets the verdict from the evidence chain.
    pub fn settle(&mut self) {
        self.verdict = if self.evidence.iter().all(|e| e.passed) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
    }

    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Pass => 0,
            Verdict::Fail => 2,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}
