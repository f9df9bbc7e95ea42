//! Scenario files: the communities, join schedule, minting regime, rate
//! provider and run length of one simulation.
//!
//! Scenarios are JSON or TOML, chosen by file extension. Currency indices in
//! scenario files are 1-based; agents are named by strings and receive ids in
//! order of first appearance (community members first, then joins).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::{mrs_matrix, EconomyError, ExchangeRateMatrix, MrsMatrix, PreferenceProfile, SolverConfig};
use crate::justice::{predicted_mint_fraction, theorem_bounds, theorem_condition};
use crate::ledger::{AgentId, Currency};
use crate::minting::{MintingRegime, Strategy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported scenario format `{0}` (expected .json or .toml)")]
    UnsupportedFormat(String),
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialCoins {
    #[default]
    None,
    /// The same number of coins for every member.
    Each { each: u64 },
    /// Per-member counts drawn uniformly from `[lo, hi]` with the scenario seed.
    Uniform { uniform: [u64; 2] },
    /// Explicit counts by agent name.
    Explicit(BTreeMap<String, u64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunitySpec {
    pub members: Vec<String>,
    #[serde(default)]
    pub initial_coins: InitialCoins,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinSpec {
    pub step: u64,
    pub agent: String,
    /// 1-based community index.
    pub community: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    /// First step the segment applies to.
    pub from: u64,
    /// Relative currency values; `MRS_ij = values_i / values_j`.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    /// An explicit MRS matrix.
    #[serde(default)]
    pub mrs: Option<Vec<Vec<f64>>>,
}

/// Exogenous MRS over time. `constant` and `converging` describe `MRS_12` of a
/// two-currency network; `piecewise` works for any number of currencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MrsSchedule {
    Constant { mrs12: f64 },
    /// `limit + (start - limit) * 2^(-t / half_life)`.
    Converging { start: f64, limit: f64, half_life: f64 },
    Piecewise { segments: Vec<Segment> },
}

fn two_by_two(m: f64) -> Result<MrsMatrix, EconomyError> {
    MrsMatrix::from_rows(&[vec![1.0, m], vec![1.0 / m, 1.0]])
}

impl MrsSchedule {
    pub fn mrs_at(&self, t: u64) -> Result<MrsMatrix, EconomyError> {
        match self {
            MrsSchedule::Constant { mrs12 } => two_by_two(*mrs12),
            MrsSchedule::Converging { start, limit, half_life } => {
                two_by_two(limit + (start - limit) * (-(t as f64) / half_life).exp2())
            }
            MrsSchedule::Piecewise { segments } => {
                let seg = segments
                    .iter()
                    .rev()
                    .find(|s| s.from <= t)
                    .ok_or_else(|| EconomyError::InvalidRates(format!("no schedule segment covers step {t}")))?;
                match (&seg.values, &seg.mrs) {
                    (Some(v), None) => mrs_matrix(v),
                    (None, Some(m)) => MrsMatrix::from_rows(m),
                    _ => Err(EconomyError::InvalidRates("a segment needs exactly one of `values` or `mrs`".into())),
                }
            }
        }
    }

    /// The `MRS_12` the schedule settles on, if it is a two-currency schedule.
    pub fn limit12(&self) -> Option<f64> {
        match self {
            MrsSchedule::Constant { mrs12 } => Some(*mrs12),
            MrsSchedule::Converging { limit, .. } => Some(*limit),
            MrsSchedule::Piecewise { segments } => {
                let last = segments.iter().max_by_key(|s| s.from)?;
                let m = match (&last.values, &last.mrs) {
                    (Some(v), None) if v.len() == 2 => mrs_matrix(v).ok()?,
                    (None, Some(m)) if m.len() == 2 => MrsMatrix::from_rows(m).ok()?,
                    _ => return None,
                };
                Some(m.get(Currency::new(0), Currency::new(1)))
            }
        }
    }

    fn k(&self) -> Option<usize> {
        match self {
            MrsSchedule::Constant { .. } | MrsSchedule::Converging { .. } => Some(2),
            MrsSchedule::Piecewise { segments } => segments
                .first()
                .and_then(|s| s.values.as_ref().map(Vec::len).or(s.mrs.as_ref().map(Vec::len))),
        }
    }
}

fn default_tolerance() -> f64 {
    SolverConfig::default().tolerance
}

fn default_max_iterations() -> usize {
    SolverConfig::default().max_iterations
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    /// Rates from the Cobb-Douglas equilibrium of the current diluted balances.
    Endogenous {
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default = "default_max_iterations")]
        max_iterations: usize,
    },
    /// Rates from a scripted MRS and the current coin volumes.
    Exogenous { schedule: MrsSchedule },
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec::Endogenous { tolerance: default_tolerance(), max_iterations: default_max_iterations() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceSpec {
    /// Cobb-Douglas weights by agent name, one per currency.
    pub weights: BTreeMap<String, Vec<f64>>,
    /// Weights used before `fix_step`; agents not listed use `weights`.
    #[serde(default)]
    pub prefix_weights: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub fix_step: u64,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub communities: Vec<CommunitySpec>,
    #[serde(default)]
    pub joins: Vec<JoinSpec>,
    pub regime: MintingRegime,
    /// Coins granted on every join after step 0, in any regime. Defaults to
    /// the regime's own grant.
    #[serde(default)]
    pub birth_grant: Option<u64>,
    #[serde(default)]
    pub rates: RateSpec,
    /// Equilibrate every this many steps.
    #[serde(default = "one")]
    pub equilibration_interval: u64,
    /// Realize each equilibrium allocation by payments.
    #[serde(default)]
    pub settle: bool,
    /// Exchange rates in force before the first equilibrium; all ones if absent.
    #[serde(default)]
    pub bootstrap: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub preferences: Option<PreferenceSpec>,
    /// Random payments per step.
    #[serde(default)]
    pub trade_noise: u32,
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    /// Trailing fraction used for limit estimates.
    #[serde(default)]
    pub window: Option<f64>,
    /// `[person, agent]` pairs; every agent is its own person if empty.
    #[serde(default)]
    pub owners: Vec<(String, String)>,
    /// Keep a network snapshot every this many steps.
    #[serde(default)]
    pub snapshot_every: Option<u64>,
    /// Record justice values every this many steps (and always at the last).
    #[serde(default = "one")]
    pub sample_every: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            Some("toml") => Self::from_toml(&text),
            other => Err(ConfigError::UnsupportedFormat(other.unwrap_or("").to_string())),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })
    }

    pub fn k(&self) -> usize {
        self.communities.len()
    }

    /// Agent names in id order.
    pub fn agent_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        let all = self.communities.iter().flat_map(|c| c.members.iter()).chain(self.joins.iter().map(|j| &j.agent));
        for name in all {
            if seen.insert(name.as_str()) {
                names.push(name.clone());
            }
        }
        names
    }

    pub fn agent_ids(&self) -> BTreeMap<String, AgentId> {
        self.agent_names().into_iter().enumerate().map(|(i, n)| (n, AgentId(i as u32))).collect()
    }

    /// The grant paid to each joiner.
    pub fn grant(&self) -> u64 {
        self.birth_grant.or(self.regime.birth_grant()).unwrap_or(0)
    }

    pub fn window_fraction(&self) -> f64 {
        self.window.unwrap_or(crate::justice::DEFAULT_WINDOW)
    }

    pub fn solver(&self) -> Option<SolverConfig> {
        match self.rates {
            RateSpec::Endogenous { tolerance, max_iterations } => Some(SolverConfig { tolerance, max_iterations }),
            RateSpec::Exogenous { .. } => None,
        }
    }

    /// Members of each community over the whole run.
    pub fn final_members(&self) -> Vec<BTreeSet<AgentId>> {
        let ids = self.agent_ids();
        let mut out: Vec<BTreeSet<AgentId>> =
            self.communities.iter().map(|c| c.members.iter().map(|m| ids[m]).collect()).collect();
        for j in &self.joins {
            if let Some(set) = j.community.checked_sub(1).and_then(|i| out.get_mut(i)) {
                set.insert(ids[&j.agent]);
            }
        }
        out
    }

    /// Preference profile in force at step `t`.
    pub fn preferences_at(&self, t: u64) -> Result<Option<PreferenceProfile>, EconomyError> {
        let Some(spec) = &self.preferences else { return Ok(None) };
        let ids = self.agent_ids();
        let mut weights = BTreeMap::new();
        for (name, w) in &spec.weights {
            let id = *ids
                .get(name)
                .ok_or_else(|| EconomyError::InvalidPreferences(format!("unknown agent `{name}`")))?;
            let w = if t < spec.fix_step { spec.prefix_weights.get(name).unwrap_or(w) } else { w };
            weights.insert(id, w.clone());
        }
        PreferenceProfile::new(self.k(), weights).map(Some)
    }

    pub fn bootstrap_rates(&self) -> Result<ExchangeRateMatrix, EconomyError> {
        match &self.bootstrap {
            Some(rows) => ExchangeRateMatrix::from_rows(rows),
            None => Ok(ExchangeRateMatrix::ones(self.k())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Info,
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.level {
            Level::Info => "info",
            Level::Warning => "warning",
            Level::Error => "error",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Static checks of a scenario. Errors make the scenario unrunnable; warnings
/// flag settings under which the convergence results do not apply.
pub fn validate_config(config: &ScenarioConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut error = |m: String| out.push(Diagnostic { level: Level::Error, message: m });
    let k = config.k();
    let ids = config.agent_ids();

    if k == 0 {
        error("no communities".into());
    }
    if config.steps == 0 {
        error("steps must be at least 1".into());
    }
    if config.equilibration_interval == 0 {
        error("equilibration_interval must be at least 1".into());
    }
    if config.sample_every == 0 {
        error("sample_every must be at least 1".into());
    }
    if config.snapshot_every == Some(0) {
        error("snapshot_every must be at least 1".into());
    }
    if let Some(w) = config.window {
        if !(w > 0.0 && w <= 1.0) {
            error(format!("window {w} must lie in (0, 1]"));
        }
    }
    for (i, c) in config.communities.iter().enumerate() {
        let label = i + 1;
        if c.members.is_empty() {
            error(format!("community {label} has no initial members"));
        }
        let unique: BTreeSet<&String> = c.members.iter().collect();
        if unique.len() != c.members.len() {
            error(format!("community {label} lists a member twice"));
        }
        match &c.initial_coins {
            InitialCoins::Explicit(map) => {
                for name in map.keys().filter(|n| !unique.contains(n)) {
                    error(format!("community {label}: initial coins for non-member `{name}`"));
                }
            }
            InitialCoins::Uniform { uniform: [lo, hi] } if lo > hi => {
                error(format!("community {label}: empty range [{lo}, {hi}]"));
            }
            _ => {}
        }
    }
    for j in &config.joins {
        if j.community == 0 || j.community > k {
            error(format!("join of `{}` names community {} of {k}", j.agent, j.community));
        }
        if j.step == 0 || j.step > config.steps {
            error(format!("join of `{}` at step {} lies outside 1..={}", j.agent, j.step, config.steps));
        }
    }
    let in_range = |c: Currency| c.index() < k;
    match config.regime {
        MintingRegime::EgalitarianSingle(c) | MintingRegime::JointEgalitarian(Strategy::Fixed(c)) if !in_range(c) => {
            error(format!("regime {} names a missing community", config.regime));
        }
        MintingRegime::JointEgalitarian(Strategy::Fixed(c)) => {
            // Joint regimes have every agent mint from its first step on.
            let label = c.label();
            let founders: BTreeSet<&String> = config.communities.iter().flat_map(|s| &s.members).collect();
            let mut first: BTreeMap<&String, u64> = BTreeMap::new();
            for j in config.joins.iter().filter(|j| !founders.contains(&j.agent)) {
                let s = first.entry(&j.agent).or_insert(j.step);
                *s = (*s).min(j.step);
            }
            let in_fixed = |name: &String, step: u64| {
                config.communities[c.index()].members.contains(name)
                    || config.joins.iter().any(|j| &j.agent == name && j.community == label && j.step <= step)
            };
            for name in &founders {
                if !in_fixed(name, 0) {
                    error(format!("regime {} needs `{name}` in community {label} from step 0", config.regime));
                }
            }
            for (name, &step) in &first {
                if !in_fixed(name, step) {
                    error(format!("regime {} needs `{name}` in community {label} from step {step}", config.regime));
                }
            }
        }
        _ => {}
    }
    if let Err(e) = config.bootstrap_rates() {
        error(format!("bootstrap rates: {e}"));
    } else if config.bootstrap_rates().is_ok_and(|r| r.k() != k) {
        error(format!("bootstrap rates are not {k}x{k}"));
    }
    for (p, a) in &config.owners {
        if !ids.contains_key(a) {
            error(format!("owner `{p}` owns unknown agent `{a}`"));
        }
    }

    let members = config.final_members();
    // a single currency is always worth itself, so it needs no solver
    let needs_prefs = (matches!(config.rates, RateSpec::Endogenous { .. }) && k > 1)
        || config.regime == MintingRegime::JointEgalitarian(Strategy::Egocentric);
    match (&config.preferences, needs_prefs) {
        (None, true) => error("endogenous rates and egocentric minting need preferences".into()),
        (Some(spec), _) => {
            let steps = if spec.fix_step > 0 { vec![0, spec.fix_step] } else { vec![spec.fix_step] };
            for t in steps {
                match config.preferences_at(t) {
                    Err(e) => error(format!("preferences: {e}")),
                    Ok(Some(prefs)) => {
                        if needs_prefs {
                            for (name, id) in &ids {
                                if prefs.weights(*id).is_none() {
                                    error(format!("no preferences for agent `{name}`"));
                                }
                            }
                        }
                        for c in Currency::all(k) {
                            let valued = members[c.index()]
                                .iter()
                                .any(|a| prefs.weights(*a).is_some_and(|w| w[c.index()] > 0.0));
                            if !valued && matches!(config.rates, RateSpec::Endogenous { .. }) && k > 1 {
                                error(format!("{}", EconomyError::DegenerateEconomy(c)));
                            }
                        }
                    }
                    Ok(None) => {}
                }
            }
        }
        _ => {}
    }

    if let RateSpec::Exogenous { schedule } = &config.rates {
        if schedule.k() != Some(k) {
            error(format!("exogenous schedule does not describe {k} currencies"));
        } else if let Err(e) = schedule.mrs_at(0).and_then(|_| schedule.mrs_at(config.steps)) {
            error(format!("exogenous schedule: {e}"));
        }
        if let MrsSchedule::Piecewise { segments } = schedule {
            if let Some(s) = segments.iter().find(|s| s.values.as_ref().is_some_and(|v| v.len() != k)
                || s.mrs.as_ref().is_some_and(|m| m.len() != k))
            {
                error(format!("schedule segment from step {} has the wrong size", s.from));
            }
        }
    }
    if let RateSpec::Endogenous { tolerance, .. } = config.rates {
        if !(tolerance.is_finite() && tolerance > 0.0) {
            error("solver tolerance must be positive".into());
        }
    }

    let mut note = |level, message| out.push(Diagnostic { level, message });
    if config.regime.birth_grant().is_some() && config.joins.is_empty() {
        note(Level::Warning, "total minting is bounded: no joins under a birth-grant regime, so initial endowments never dilute".to_string());
    }
    if let MintingRegime::EgalitarianSingle(c) = config.regime {
        if k > 1 {
            note(Level::Warning, format!("only {c} is minted; other currencies keep their initial volume"));
        }
    }
    if k == 2 && config.regime == MintingRegime::JointEgalitarian(Strategy::Myopic) {
        if let RateSpec::Exogenous { schedule } = &config.rates {
            if let Some(limit) = schedule.limit12() {
                let (lower, upper) = theorem_bounds(&members[0], &members[1]);
                if !theorem_condition(&members[0], &members[1], limit) {
                    note(
                        Level::Warning,
                        format!("condition violated: MRS_12 limit {limit} lies outside [{lower}, {upper}]"),
                    );
                } else if let Ok(p) = predicted_mint_fraction(&members[0], &members[1], limit) {
                    note(
                        Level::Info,
                        format!("MRS_12 limit {limit} lies in [{lower}, {upper}]; predicted x = {}", round(p.fraction)),
                    );
                }
            }
        }
    }
    out
}

// Trims float noise such as 0.7000000000000001 for display.
fn round(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[cfg(test)]
mod tests {
    use super::*;

    const THM1: &str = r#"{
        "name": "thm1",
        "communities": [{"members": ["a", "b", "c"]}, {"members": ["b", "c", "d"]}],
        "regime": "joint_myopic",
        "rates": {"mode": "exogenous", "schedule": {"kind": "constant", "mrs12": 1.5}},
        "steps": 100
    }"#;

    fn errors(c: &ScenarioConfig) -> Vec<String> {
        validate_config(c).into_iter().filter(|d| d.level == Level::Error).map(|d| d.message).collect()
    }

    #[test]
    fn parses_json_and_reports_prediction() {
        let c = ScenarioConfig::from_json(THM1).unwrap();
        assert_eq!(c.agent_names(), vec!["a", "b", "c", "d"]);
        let diags = validate_config(&c);
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].level, Level::Info);
        assert!(diags[0].message.contains("predicted x = 0.7"), "{}", diags[0].message);
    }

    #[test]
    fn parses_toml() {
        let text = r#"
            name = "lemma"
            regime = "egalitarian_single"
            steps = 10
            [[communities]]
            members = ["a", "b"]
            initial_coins = { uniform = [0, 5] }
            [[joins]]
            step = 3
            agent = "c"
            community = 1
        "#;
        let c = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!(c.communities[0].initial_coins, InitialCoins::Uniform { uniform: [0, 5] });
        assert!(validate_config(&c).is_empty());
    }

    #[test]
    fn parse_errors_name_the_field() {
        let bad = THM1.replace("\"joint_myopic\"", "\"joint_greedy\"");
        match ScenarioConfig::from_json(&bad) {
            Err(ConfigError::Parse { path, message }) => {
                assert_eq!(path, "regime");
                assert!(message.contains("joint_greedy"));
            }
            other => panic!("{other:?}"),
        }
        let bad = THM1.replace("\"steps\": 100", "\"steps\": -1");
        assert!(matches!(ScenarioConfig::from_json(&bad), Err(ConfigError::Parse { path, .. }) if path == "steps"));
        let bad = THM1.replace("\"steps\"", "\"stepz\"");
        assert!(ScenarioConfig::from_json(&bad).is_err());
    }

    #[test]
    fn fixed_strategy_needs_membership_from_the_first_step() {
        let text = r#"{"name": "f", "regime": "joint_fixed:1", "steps": 10,
            "rates": {"mode": "exogenous", "schedule": {"kind": "constant", "mrs12": 1.0}},
            "communities": [{"members": ["a"]}, {"members": ["b"]}],
            "joins": [{"step": 2, "agent": "c", "community": 1}, {"step": 4, "agent": "b", "community": 1}]}"#;
        let errors: Vec<String> = validate_config(&ScenarioConfig::from_json(text).unwrap())
            .into_iter()
            .filter(|d| d.level == Level::Error)
            .map(|d| d.message)
            .collect();
        assert_eq!(errors, vec!["regime joint_fixed:1 needs `b` in community 1 from step 0"]);
    }

    #[test]
    fn condition_violation_is_a_warning() {
        let text = THM1.replace("1.5", "3.5");
        let diags = validate_config(&ScenarioConfig::from_json(&text).unwrap());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].level, Level::Warning);
        assert!(diags[0].message.starts_with("condition violated"));
    }

    #[test]
    fn unvalued_currency_is_an_error() {
        let text = r#"{
            "name": "x", "regime": "joint_myopic", "steps": 5,
            "communities": [{"members": ["a", "b"]}, {"members": ["b"]}],
            "preferences": {"weights": {"a": [1.0, 0.0], "b": [1.0, 0.0]}}
        }"#;
        let errs = errors(&ScenarioConfig::from_json(text).unwrap());
        assert_eq!(errs, vec!["degenerate economy: C2 has no positive value"]);
    }

    #[test]
    fn structural_errors() {
        let text = r#"{
            "name": "x", "regime": "joint_fixed:3", "steps": 5,
            "communities": [{"members": ["a", "a"], "initial_coins": {"z": 1}}],
            "joins": [{"step": 9, "agent": "b", "community": 2}],
            "rates": {"mode": "exogenous", "schedule": {"kind": "constant", "mrs12": 1.0}}
        }"#;
        let errs = errors(&ScenarioConfig::from_json(text).unwrap());
        assert_eq!(errs.len(), 6, "{errs:?}");
    }

    #[test]
    fn schedules() {
        let s = MrsSchedule::Converging { start: 1.0, limit: 1.5, half_life: 10.0 };
        let at = |t| s.mrs_at(t).unwrap().get(Currency::new(0), Currency::new(1));
        assert_eq!(at(0), 1.0);
        assert!((at(10) - 1.25).abs() < 1e-12);
        assert!((at(1000) - 1.5).abs() < 1e-12);
        let p = MrsSchedule::Piecewise {
            segments: vec![
                Segment { from: 0, values: Some(vec![1.0, 1.0, 1.0]), mrs: None },
                Segment { from: 5, values: Some(vec![3.0, 2.0, 1.0]), mrs: None },
            ],
        };
        assert_eq!(p.mrs_at(4).unwrap().get(Currency::new(0), Currency::new(2)), 1.0);
        assert_eq!(p.mrs_at(5).unwrap().get(Currency::new(0), Currency::new(2)), 3.0);
        assert_eq!(p.limit12(), None);
    }
}
