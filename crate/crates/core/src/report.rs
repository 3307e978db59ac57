//! Harness reports and Monte Carlo settings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::Result;
use crate::seed::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Pass,
    Fail,
}

impl Decision {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Decision::Pass
        } else {
            Decision::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Decision::Pass
    }
}

/// Outcome of one statistical harness. Serialises to a single JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub harness: String,
    pub params: Map<String, Value>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Option<f64>,
    pub p: Option<f64>,
    pub n: u64,
    pub seed: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn new(harness: &str, mc: &MonteCarlo) -> Self {
        Self {
            harness: harness.to_string(),
            params: Map::new(),
            estimate: Vec::new(),
            se: Vec::new(),
            z: None,
            p: None,
            n: mc.replicas as u64,
            seed: mc.seed.to_string(),
            decision: Decision::Fail,
            verdict: None,
            notes: Vec::new(),
        }
    }

    pub fn param<V: Into<Value>>(mut self, key: &str, value: V) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.decision.passed()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports contain only plain data")
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let est: Vec<String> = self.estimate.iter().map(|x| format!("{x:.6}")).collect();
        let se: Vec<String> = self.se.iter().map(|x| format!("{x:.2e}")).collect();
        let mut s = format!(
            "[{}] {} est=[{}] se=[{}]",
            if self.passed() { "PASS" } else { "FAIL" },
            self.harness,
            est.join(", "),
            se.join(", ")
        );
        if let Some(z) = self.z {
            s.push_str(&format!(" z={z:.3}"));
        }
        if let Some(p) = self.p {
            s.push_str(&format!(" p={p:.4}"));
        }
        if let Some(v) = &self.verdict {
            s.push_str(&format!(" verdict={v}"));
        }
        s
    }
}

/// Replica count, root seed and acceptance thresholds shared by the harnesses.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub replicas: usize,
    pub seed: SeedStream,
    /// Two-sided z-test threshold.
    pub z_max: f64,
    /// Minimum p-value for chi-square and KS tests.
    pub p_min: f64,
}

impl MonteCarlo {
    pub fn new(replicas: usize, seed: u64) -> Self {
        Self { replicas, seed: SeedStream::new(seed), z_max: 3.0, p_min: 0.01 }
    }

    pub fn with_seed(&self, seed: SeedStream) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Evaluate `f` on replicas `0..replicas` of the stream `tag`, in parallel.
    /// Results come back in replica order so downstream sums are reproducible.
    pub fn run<T, F>(&self, tag: &str, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&SeedStream) -> Result<T> + Sync + Send,
    {
        let base = self.seed.fork(tag);
        (0..self.replicas as u64).into_par_iter().map(|i| f(&base.child(i))).collect()
    }
}
