//! Distributive and asymptotic justice metrics, and the two-community
//! convergence condition with its predicted limits.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::accounting::{AccountingError, History};
use crate::economy::ExchangeRateMatrix;
use crate::ledger::{AgentId, Currency};

/// Default trailing window for limit estimates: the last 10% of a series.
pub const DEFAULT_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JusticeError {
    #[error(transparent)]
    Accounting(#[from] AccountingError),
    #[error("expected a single-community history, found {0} communities")]
    NotSingleCommunity(usize),
    #[error("invalid rates: {0}")]
    InvalidRates(String),
    #[error("no coins exist at step {0}")]
    NoCoins(u64),
    #[error("both communities must be nonempty")]
    EmptyCommunity,
    #[error("the communities share no agent")]
    EmptyIntersection,
    #[error("MRS limit {mrs} lies outside [{lower}, {upper}]")]
    ConditionViolated { mrs: f64, lower: f64, upper: f64 },
    #[error("series of length {len} is too short for a trailing window of {window}")]
    TooShort { len: usize, window: f64 },
}

pub type Result<T, E = JusticeError> = std::result::Result<T, E>;

/// `(b_t(v) - cashflow_t(v)) / |C_t|` in a single-community history.
pub fn justice_value_single(history: &History, t: u64, agent: AgentId) -> Result<f64> {
    if history.k() != 1 {
        return Err(JusticeError::NotSingleCommunity(history.k()));
    }
    let c = Currency::new(0);
    let total = history.coin_count(t, c)?;
    if total == 0 {
        return Err(JusticeError::NoCoins(t));
    }
    let row = history.counters(t, agent, c)?;
    Ok((row.balance as i64 - row.cashflow) as f64 / total as f64)
}

/// The network quotient `sum_i (b^i - cf^i) EX_ij / sum_i |C^i| EX_ij`.
pub fn justice_value_network(
    history: &History,
    t: u64,
    agent: AgentId,
    ex: &ExchangeRateMatrix,
    reference: Currency,
) -> Result<f64> {
    let k = history.k();
    if ex.k() != k || reference.index() >= k {
        return Err(JusticeError::InvalidRates(format!(
            "{0}x{0} rates with reference {reference} for {k} currencies",
            ex.k()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in Currency::all(k) {
        let row = history.counters(t, agent, c)?;
        let rate = ex.get(c, reference);
        num += (row.balance as i64 - row.cashflow) as f64 * rate;
        den += history.coin_count(t, c)? as f64 * rate;
    }
    if den == 0.0 {
        return Err(JusticeError::NoCoins(t));
    }
    Ok(num / den)
}

struct Split {
    only1: usize,
    only2: usize,
    both: usize,
    n1: usize,
    n2: usize,
}

fn split(v1: &BTreeSet<AgentId>, v2: &BTreeSet<AgentId>) -> Split {
    let both = v1.intersection(v2).count();
    Split { only1: v1.len() - both, only2: v2.len() - both, both, n1: v1.len(), n2: v2.len() }
}

/// The interval `[|V1 \ V2| / |V2|, |V1| / |V2 \ V1|]` the MRS limit must lie in;
/// the upper bound is infinite when `V2` is contained in `V1`.
pub fn theorem_bounds(v1: &BTreeSet<AgentId>, v2: &BTreeSet<AgentId>) -> (f64, f64) {
    let s = split(v1, v2);
    let lower = s.only1 as f64 / s.n2 as f64;
    let upper = if s.only2 == 0 { f64::INFINITY } else { s.n1 as f64 / s.only2 as f64 };
    (lower, upper)
}

/// Whether two communities with this MRS limit are guaranteed an asymptotically
/// just history under myopic joint egalitarian minting.
pub fn theorem_condition(v1: &BTreeSet<AgentId>, v2: &BTreeSet<AgentId>, mrs_limit: f64) -> bool {
    if v1.is_empty() || v2.is_empty() || !(mrs_limit.is_finite() && mrs_limit > 0.0) {
        return false;
    }
    let (lower, upper) = theorem_bounds(v1, v2);
    lower <= mrs_limit && mrs_limit <= upper
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MintPrediction {
    /// Limiting fraction of steps in which shared agents mint currency 1;
    /// also the limit of `a_t / t`.
    pub fraction: f64,
    /// Limit of `|C^1_t| / |C^2_t|`, which equals the MRS limit so that `EX_12 -> 1`.
    pub coin_ratio: f64,
}

/// Solves `mrs = (|V1\V2| + x |V1∩V2|) / (|V2\V1| + (1 - x) |V1∩V2|)` for `x`.
pub fn predicted_mint_fraction(
    v1: &BTreeSet<AgentId>,
    v2: &BTreeSet<AgentId>,
    mrs_limit: f64,
) -> Result<MintPrediction> {
    if v1.is_empty() || v2.is_empty() {
        return Err(JusticeError::EmptyCommunity);
    }
    let s = split(v1, v2);
    if s.both == 0 {
        return Err(JusticeError::EmptyIntersection);
    }
    if !theorem_condition(v1, v2, mrs_limit) {
        let (lower, upper) = theorem_bounds(v1, v2);
        return Err(JusticeError::ConditionViolated { mrs: mrs_limit, lower, upper });
    }
    let (a, b, i) = (s.only1 as f64, s.only2 as f64, s.both as f64);
    let x = (mrs_limit * (b + i) - a) / (i * (1.0 + mrs_limit));
    Ok(MintPrediction { fraction: x.clamp(0.0, 1.0), coin_ratio: mrs_limit })
}

/// The ratio the fraction `x` produces; the inverse of [`predicted_mint_fraction`].
pub fn mint_fraction_ratio(v1: &BTreeSet<AgentId>, v2: &BTreeSet<AgentId>, x: f64) -> f64 {
    let s = split(v1, v2);
    let i = s.both as f64;
    (s.only1 as f64 + x * i) / (s.only2 as f64 + (1.0 - x) * i)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Convergence {
    /// Mean over the trailing window.
    pub limit: f64,
    /// Largest distance of a window entry from the mean.
    pub max_deviation: f64,
    /// Number of trailing entries used.
    pub window: usize,
}

/// Trailing-window limit estimate over the last `fraction` of `series`.
pub fn convergence_report(series: &[f64], fraction: f64) -> Result<Convergence> {
    let len = series.len();
    let exact = len as f64 * fraction;
    if !(fraction > 0.0 && fraction <= 1.0) || exact < 1.0 {
        return Err(JusticeError::TooShort { len, window: fraction });
    }
    let window = exact.ceil() as usize;
    let tail = &series[len - window..];
    let limit = tail.iter().sum::<f64>() / window as f64;
    let max_deviation = tail.iter().map(|x| (x - limit).abs()).fold(0.0, f64::max);
    Ok(Convergence { limit, max_deviation, window })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JusticeSample {
    pub t: u64,
    pub agent: AgentId,
    pub value: f64,
    /// `1 / |V_t|` for the agents present at `t`.
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentJustice {
    pub agent: AgentId,
    pub name: String,
    pub last: f64,
    pub trailing_mean: f64,
    /// `|last - target|`.
    pub deviation: f64,
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JusticeSummary {
    pub target: f64,
    pub window: f64,
    pub tolerance: Option<f64>,
    pub max_deviation: f64,
    pub agents: Vec<AgentJustice>,
    pub pass: Option<bool>,
}

/// Per-agent justice trajectories, measured against the equal share of the
/// final agent set.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct JusticeReport {
    pub samples: Vec<JusticeSample>,
}

impl JusticeReport {
    pub fn push(&mut self, sample: JusticeSample) {
        self.samples.push(sample);
    }

    pub fn agents(&self) -> Vec<AgentId> {
        let set: BTreeSet<AgentId> = self.samples.iter().map(|s| s.agent).collect();
        set.into_iter().collect()
    }

    pub fn series(&self, agent: AgentId) -> Vec<f64> {
        self.samples.iter().filter(|s| s.agent == agent).map(|s| s.value).collect()
    }

    /// The latest value of every agent.
    pub fn last_values(&self) -> Vec<(AgentId, f64)> {
        let Some(t) = self.samples.last().map(|s| s.t) else { return Vec::new() };
        self.samples.iter().filter(|s| s.t == t).map(|s| (s.agent, s.value)).collect()
    }

    pub fn target(&self) -> Option<f64> {
        self.samples.last().map(|s| s.target)
    }

    pub fn summary(&self, window: f64, tolerance: Option<f64>, name: impl Fn(AgentId) -> String) -> JusticeSummary {
        let target = self.target().unwrap_or(0.0);
        let mut agents = Vec::new();
        let mut max_deviation: f64 = 0.0;
        for (agent, last) in self.last_values() {
            let series = self.series(agent);
            let trailing_mean = convergence_report(&series, window).map_or(last, |c| c.limit);
            let deviation = (last - target).abs();
            max_deviation = max_deviation.max(deviation);
            agents.push(AgentJustice {
                agent,
                name: name(agent),
                last,
                trailing_mean,
                deviation,
                pass: tolerance.map(|tol| deviation < tol),
            });
        }
        JusticeSummary {
            target,
            window,
            tolerance,
            max_deviation,
            pass: tolerance.map(|tol| max_deviation < tol),
            agents,
        }
    }

    /// Long-format CSV: `t,agent,value,target,deviation`.
    pub fn write_csv<W: Write>(&self, out: W, name: impl Fn(AgentId) -> String) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "agent", "value", "target", "deviation"])?;
        for s in &self.samples {
            w.write_record([
                s.t.to_string(),
                name(s.agent),
                s.value.to_string(),
                s.target.to_string(),
                (s.value - s.target).abs().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
