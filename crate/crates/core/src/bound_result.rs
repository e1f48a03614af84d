use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// How a bound value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Chernoff,
    Sandwich,
    WeightedSum,
    ClosedForm,
    ZeroRegion,
    BoundaryExact,
    Pz,
    // Wire name fixed by the report schema.
    #[serde(rename = "pz_paper")]
    PzExplicit,
    ReverseChernoff,
    Compose,
    RateForm,
    Trivial,
    None,
}

/// A tail bound with provenance.
///
/// `certified` is true only when every inequality behind `value` holds for
/// the given inputs with explicit constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub value: f64,
    #[serde(with = "crate::json::ext_f64")]
    pub log_value: f64,
    pub method: Method,
    pub certified: bool,
    pub cite: String,
    #[serde(with = "crate::json::ext_f64_map")]
    pub params_used: BTreeMap<String, f64>,
    /// Set when `x` lies outside the formula's validity window and the value
    /// fell back to the trivial bound.
    #[serde(default)]
    pub outside_window: Option<String>,
}

impl BoundResult {
    /// A result from a log-value; the value is clamped to `[0, 1]`.
    pub fn from_log(log_value: f64, method: Method, certified: bool, cite: &str) -> Self {
        let log_value = log_value.min(0.0);
        Self {
            value: log_value.exp(),
            log_value,
            method,
            certified,
            cite: cite.to_string(),
            params_used: BTreeMap::new(),
            outside_window: None,
        }
    }

    pub fn trivial_upper(cite: &str) -> Self {
        Self::from_log(0.0, Method::Trivial, true, cite)
    }

    /// The certified lower bound 0, used for exact zero regions.
    pub fn zero(method: Method, cite: &str) -> Self {
        Self::from_log(f64::NEG_INFINITY, method, true, cite)
    }

    /// No positive certificate was found.
    pub fn none(cite: &str) -> Self {
        Self::from_log(f64::NEG_INFINITY, Method::None, false, cite)
    }

    pub fn with_param(mut self, key: &str, v: f64) -> Self {
        self.params_used.insert(key.to_string(), v);
        self
    }

    pub fn with_window_flag(mut self, window: impl Into<String>) -> Self {
        self.outside_window = Some(window.into());
        self
    }
}
