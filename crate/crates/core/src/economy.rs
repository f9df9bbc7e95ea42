//! Pure exchange economy over diluted currency portfolios.
//!
//! Agents hold Cobb-Douglas preferences over the fractions of each currency
//! they own. The competitive equilibrium prices give the marginal rates of
//! substitution between whole currencies; dividing by coin volumes turns
//! those into per-coin exchange rates.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ledger::{AgentId, Currency, CurrencyNetwork, Hop, LedgerError};

/// Relative tolerance for the arbitrage-free and reciprocity axioms.
pub const RATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconomyError {
    #[error("currency {0} has no coins")]
    EmptyCurrency(Currency),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("degenerate economy: {0} has no positive value")]
    DegenerateEconomy(Currency),
    #[error("disconnected economy: no trade ties the value of {0} to that of {1}")]
    DisconnectedEconomy(Currency, Currency),
    #[error("price of {0} is not positive")]
    NonPositivePrice(Currency),
    #[error("currency {0} has zero coins; coin rates are undefined")]
    ZeroCoins(Currency),
    #[error("invalid rates: {0}")]
    InvalidRates(String),
    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(String),
    #[error("no preferences for agent {0}")]
    MissingPreferences(AgentId),
    #[error("invalid preferences: {0}")]
    InvalidPreferences(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

pub type Result<T, E = EconomyError> = std::result::Result<T, E>;

/// Rows are agents (ascending), columns are currencies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentMatrix {
    agents: Vec<AgentId>,
    k: usize,
    values: Vec<f64>,
}

impl AgentMatrix {
    pub fn new(agents: Vec<AgentId>, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != agents.len() * k {
            return Err(EconomyError::Shape(format!(
                "{} values for {} agents x {k} currencies",
                values.len(),
                agents.len()
            )));
        }
        Ok(AgentMatrix { agents, k, values })
    }

    pub fn from_rows(rows: Vec<(AgentId, Vec<f64>)>) -> Result<Self> {
        let k = rows.first().map_or(0, |r| r.1.len());
        let mut agents = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * k);
        for (a, row) in rows {
            if row.len() != k {
                return Err(EconomyError::Shape(format!("row of {a} has {} entries, expected {k}", row.len())));
            }
            agents.push(a);
            values.extend(row);
        }
        Ok(AgentMatrix { agents, k, values })
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.k..(r + 1) * self.k]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.k + c]
    }

    pub fn row_of(&self, agent: AgentId) -> Option<&[f64]> {
        self.agents.iter().position(|&a| a == agent).map(|r| self.row(r))
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for r in 0..self.agents.len() {
            for (c, s) in sums.iter_mut().enumerate() {
                *s += self.get(r, c);
            }
        }
        sums
    }
}

/// Each agent's coin count per currency divided by that currency's volume.
pub fn diluted_balances(network: &CurrencyNetwork) -> Result<AgentMatrix> {
    let k = network.k();
    let counts = network.coin_counts();
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(EconomyError::EmptyCurrency(Currency::new(i)));
    }
    let agents: Vec<AgentId> = network.agents().into_iter().collect();
    let mut values = Vec::with_capacity(agents.len() * k);
    for &a in &agents {
        for c in Currency::all(k) {
            values.push(network.balance(a, c) as f64 / counts[c.index()] as f64);
        }
    }
    AgentMatrix::new(agents, k, values)
}

/// Cobb-Douglas weights per agent. Weights are nonnegative and sum to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreferenceProfile {
    k: usize,
    weights: BTreeMap<AgentId, Vec<f64>>,
}

impl PreferenceProfile {
    pub fn new(k: usize, weights: BTreeMap<AgentId, Vec<f64>>) -> Result<Self> {
        for (a, w) in &weights {
            if w.len() != k {
                return Err(EconomyError::InvalidPreferences(format!(
                    "{a} has {} weights, expected {k}",
                    w.len()
                )));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(EconomyError::InvalidPreferences(format!("{a} has a negative or non-finite weight")));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(EconomyError::InvalidPreferences(format!("weights of {a} sum to {sum}, not 1")));
            }
        }
        Ok(PreferenceProfile { k, weights })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self, agent: AgentId) -> Option<&[f64]> {
        self.weights.get(&agent).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, &[f64])> {
        self.weights.iter().map(|(a, w)| (*a, w.as_slice()))
    }

    /// Zeroes weights on currencies an agent does not belong to and
    /// renormalizes. Agents outside the network are dropped.
    pub fn restricted_to(&self, network: &CurrencyNetwork) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for a in network.agents() {
            let w = self.weights.get(&a).ok_or(EconomyError::MissingPreferences(a))?;
            let masked: Vec<f64> = Currency::all(self.k)
                .map(|c| if network.is_member(a, c) { w[c.index()] } else { 0.0 })
                .collect();
            let sum: f64 = masked.iter().sum();
            if sum <= 0.0 {
                return Err(EconomyError::InvalidPreferences(format!(
                    "{a} puts no weight on any currency it belongs to"
                )));
            }
            weights.insert(a, masked.into_iter().map(|x| x / sum).collect());
        }
        Ok(PreferenceProfile { k: self.k, weights })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tolerance: 1e-12, max_iterations: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Equilibrium {
    /// Normalized to sum to one.
    pub prices: Vec<f64>,
    pub allocation: AgentMatrix,
    pub iterations: usize,
    /// Sup-norm distance between the prices and their image under the spending map.
    pub residual: f64,
}

/// Competitive equilibrium of the Cobb-Douglas exchange economy.
///
/// Prices are a fixed point of the spending map `p -> sum_v alpha_v * (p . e_v)`.
/// The map is column-stochastic, so the fixed point is its Perron vector; the
/// iteration averages each image with the previous iterate, which keeps the
/// same fixed point and converges even when the plain map is periodic.
pub fn solve_equilibrium(
    endowment: &AgentMatrix,
    prefs: &PreferenceProfile,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Equilibrium> {
    solve_equilibrium_from(endowment, prefs, SolverConfig { tolerance, max_iterations }, None)
}

/// As [`solve_equilibrium`], optionally warm-started from earlier prices.
pub fn solve_equilibrium_from(
    endowment: &AgentMatrix,
    prefs: &PreferenceProfile,
    config: SolverConfig,
    initial: Option<&[f64]>,
) -> Result<Equilibrium> {
    let k = endowment.k;
    if prefs.k != k {
        return Err(EconomyError::Shape(format!("{k} currencies but preferences over {}", prefs.k)));
    }
    let n = endowment.agents.len();
    let mut alphas = Vec::with_capacity(n);
    for &a in &endowment.agents {
        alphas.push(prefs.weights(a).ok_or(EconomyError::MissingPreferences(a))?);
    }
    for (i, s) in endowment.column_sums().into_iter().enumerate() {
        if (s - 1.0).abs() > 1e-9 {
            return Err(EconomyError::InfeasibleAllocation(format!(
                "endowment of {} sums to {s}, not 1",
                Currency::new(i)
            )));
        }
    }
    for i in 0..k {
        if alphas.iter().all(|w| w[i] <= 0.0) {
            return Err(EconomyError::DegenerateEconomy(Currency::new(i)));
        }
    }

    // spending[i][j] = sum_v alpha_{v,i} e_{v,j}
    let mut spending = vec![0.0; k * k];
    for (r, w) in alphas.iter().enumerate() {
        let e = endowment.row(r);
        for i in 0..k {
            if w[i] == 0.0 {
                continue;
            }
            for j in 0..k {
                spending[i * k + j] += w[i] * e[j];
            }
        }
    }
    check_connected(k, &spending)?;

    let apply = |p: &[f64], out: &mut [f64]| {
        for i in 0..k {
            out[i] = (0..k).map(|j| spending[i * k + j] * p[j]).sum();
        }
    };

    let mut p: Vec<f64> = match initial {
        Some(init) if init.len() == k && init.iter().all(|x| *x > 0.0 && x.is_finite()) => {
            let s: f64 = init.iter().sum();
            init.iter().map(|x| x / s).collect()
        }
        _ => vec![1.0 / k as f64; k],
    };
    let mut image = vec![0.0; k];
    let mut iterations = 0;
    let residual = loop {
        apply(&p, &mut image);
        let residual = p.iter().zip(&image).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // (Mp)_i / p_i - 1 is the excess demand for currency i, so the relative
        // change bounds the market-clearing error as well as the residual.
        let relative = p.iter().zip(&image).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
        if relative < config.tolerance {
            break residual;
        }
        if iterations >= config.max_iterations {
            return Err(EconomyError::NoConvergence { iterations, residual });
        }
        for (x, y) in p.iter_mut().zip(&image) {
            *x = 0.5 * (*x + y);
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        iterations += 1;
    };
    if let Some(i) = p.iter().position(|&x| x <= config.tolerance) {
        return Err(EconomyError::DegenerateEconomy(Currency::new(i)));
    }

    let mut values = Vec::with_capacity(n * k);
    for (r, w) in alphas.iter().enumerate() {
        let wealth: f64 = endowment.row(r).iter().zip(&p).map(|(e, q)| e * q).sum();
        values.extend((0..k).map(|i| w[i] * wealth / p[i]));
    }
    let allocation = AgentMatrix::new(endowment.agents.clone(), k, values)?;
    Ok(Equilibrium { prices: p, allocation, iterations, residual })
}

/// Value spent on currency `i` comes from holders of every `j` with
/// `spending[i][j] > 0`. The fixed point is strictly positive and unique exactly
/// when every currency can pass value to every other, so anything else is
/// rejected before iterating.
fn check_connected(k: usize, spending: &[f64]) -> Result<()> {
    // reach[j][i]: value held in j eventually reaches i
    let mut reach: Vec<Vec<bool>> =
        (0..k).map(|j| (0..k).map(|i| i == j || spending[i * k + j] > 0.0).collect()).collect();
    for m in 0..k {
        let through = reach[m].clone();
        for row in reach.iter_mut().filter(|row| row[m]) {
            for (r, &t) in row.iter_mut().zip(&through) {
                *r |= t;
            }
        }
    }
    // A currency whose value can leave for good is priced at zero.
    if let Some(j) = (0..k).find(|&j| (0..k).any(|i| reach[j][i] && !reach[i][j])) {
        return Err(EconomyError::DegenerateEconomy(Currency::new(j)));
    }
    if let Some(i) = (1..k).find(|&i| !reach[0][i]) {
        return Err(EconomyError::DisconnectedEconomy(Currency::new(0), Currency::new(i)));
    }
    Ok(())
}

fn check_square(k: usize, values: &[f64]) -> Result<()> {
    if values.len() != k * k {
        return Err(EconomyError::Shape(format!("{} entries for a {k}x{k} matrix", values.len())));
    }
    Ok(())
}

// Fungibility exactly; arbitrage-freeness and reciprocity to RATE_TOLERANCE.
fn check_rate_axioms(k: usize, m: &[f64]) -> Result<(), String> {
    let at = |i: usize, j: usize| m[i * k + j];
    for i in 0..k {
        for j in 0..k {
            let x = at(i, j);
            if !(x.is_finite() && x > 0.0) {
                return Err(format!("entry ({}, {}) = {x} is not a positive number", i + 1, j + 1));
            }
        }
    }
    for i in 0..k {
        if at(i, i) != 1.0 {
            return Err(format!("fungibility: entry ({0}, {0}) = {1}", i + 1, at(i, i)));
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() <= RATE_TOLERANCE * a.abs().max(b.abs()).max(1.0);
    for i in 0..k {
        for j in 0..k {
            if !close(at(i, j) * at(j, i), 1.0) {
                return Err(format!("reciprocity fails for ({}, {})", i + 1, j + 1));
            }
            for l in 0..k {
                if !close(at(i, j) * at(j, l), at(i, l)) {
                    return Err(format!("arbitrage through ({}, {}, {})", i + 1, j + 1, l + 1));
                }
            }
        }
    }
    Ok(())
}

fn from_rows(rows: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(EconomyError::Shape("matrix rows must all have length k".into()));
    }
    Ok((k, rows.concat()))
}

/// Marginal rates of substitution between whole currencies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MrsMatrix {
    k: usize,
    values: Vec<f64>,
}

impl MrsMatrix {
    /// Checks the unit-diagonal and chain-rule axioms.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (k, values) = from_rows(rows)?;
        check_rate_axioms(k, &values).map_err(EconomyError::InvalidRates)?;
        Ok(MrsMatrix { k, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: Currency, j: Currency) -> f64 {
        self.values[i.index() * self.k + j.index()]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.k).map(<[f64]>::to_vec).collect()
    }
}

/// `MRS_ij = p_i / p_j`.
pub fn mrs_matrix(prices: &[f64]) -> Result<MrsMatrix> {
    if let Some(i) = prices.iter().position(|&p| !(p.is_finite() && p > 0.0)) {
        return Err(EconomyError::NonPositivePrice(Currency::new(i)));
    }
    let k = prices.len();
    let mut values = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            values.push(if i == j { 1.0 } else { prices[i] / prices[j] });
        }
    }
    Ok(MrsMatrix { k, values })
}

/// Per-coin exchange rates: `EX_ij` coins of currency `j` trade for one coin of `i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExchangeRateMatrix {
    k: usize,
    values: Vec<f64>,
}

impl ExchangeRateMatrix {
    /// The all-ones matrix used before the first equilibrium.
    pub fn ones(k: usize) -> Self {
        ExchangeRateMatrix { k, values: vec![1.0; k * k] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (k, values) = from_rows(rows)?;
        Self::from_values(k, values)
    }

    fn from_values(k: usize, values: Vec<f64>) -> Result<Self> {
        check_square(k, &values)?;
        check_rate_axioms(k, &values).map_err(EconomyError::InvalidRates)?;
        Ok(ExchangeRateMatrix { k, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: Currency, j: Currency) -> f64 {
        self.values[i.index() * self.k + j.index()]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn validate(&self) -> Result<()> {
        check_square(self.k, &self.values)?;
        check_rate_axioms(self.k, &self.values).map_err(EconomyError::InvalidRates)
    }
}

/// `EX_ij = MRS_ij * |C^j| / |C^i|`, evaluated as `MRS_ij / (|C^i| / |C^j|)` so
/// that volumes in exact proportion to the MRS give a rate of exactly one.
pub fn coin_exchange_rates(mrs: &MrsMatrix, coin_counts: &[u64]) -> Result<ExchangeRateMatrix> {
    let k = mrs.k;
    if coin_counts.len() != k {
        return Err(EconomyError::Shape(format!("{} coin counts for {k} currencies", coin_counts.len())));
    }
    if let Some(i) = coin_counts.iter().position(|&c| c == 0) {
        return Err(EconomyError::ZeroCoins(Currency::new(i)));
    }
    let mut values = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            values.push(if i == j {
                1.0
            } else {
                mrs.values[i * k + j] / (coin_counts[i] as f64 / coin_counts[j] as f64)
            });
        }
    }
    ExchangeRateMatrix::from_values(k, values)
}

fn check_rates_for(network: &CurrencyNetwork, ex: &ExchangeRateMatrix) -> Result<()> {
    if ex.k != network.k() {
        return Err(EconomyError::InvalidRates(format!(
            "{}x{0} rates for a network of {} currencies",
            ex.k,
            network.k()
        )));
    }
    Ok(())
}

/// Value of the agent's coins as a fraction of the whole network, measured in
/// the first currency.
pub fn fractional_equity(network: &CurrencyNetwork, ex: &ExchangeRateMatrix, agent: AgentId) -> Result<f64> {
    fractional_equity_in(network, ex, agent, Currency::new(0))
}

pub fn fractional_equity_in(
    network: &CurrencyNetwork,
    ex: &ExchangeRateMatrix,
    agent: AgentId,
    reference: Currency,
) -> Result<f64> {
    check_rates_for(network, ex)?;
    network.community(reference)?;
    let mut held = 0.0;
    let mut total = 0.0;
    for c in Currency::all(network.k()) {
        let rate = ex.get(c, reference);
        held += network.balance(agent, c) as f64 * rate;
        total += network.coin_count(c) as f64 * rate;
    }
    if total == 0.0 {
        return Err(EconomyError::EmptyCurrency(reference));
    }
    Ok(held / total)
}

/// Integer apportionment of `total` by `shares` using largest remainders;
/// ties go to the earlier position. The result always sums to `total`.
pub fn largest_remainder(shares: &[f64], total: u64) -> Result<Vec<u64>> {
    if shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(EconomyError::InfeasibleAllocation("negative or non-finite share".into()));
    }
    let raw: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut out: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    if assigned > total {
        return Err(EconomyError::InfeasibleAllocation(format!("shares exceed the total of {total}")));
    }
    let missing = (total - assigned) as usize;
    if missing > out.len() {
        return Err(EconomyError::InfeasibleAllocation(format!("shares fall short of the total of {total}")));
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (raw[a] - raw[a].floor(), raw[b] - raw[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(missing) {
        out[i] += 1;
    }
    Ok(out)
}

/// Payments realizing `allocation` with whole coins: every agent ends up with
/// the largest-remainder rounding of its share times the currency volume.
/// Surplus holders pay their smallest coins to deficit agents, both in agent order.
pub fn settlement_plan(network: &CurrencyNetwork, allocation: &AgentMatrix) -> Result<Vec<Hop>> {
    let k = network.k();
    if allocation.k != k {
        return Err(EconomyError::Shape(format!("allocation over {} currencies, network has {k}", allocation.k)));
    }
    for a in network.agents() {
        if !allocation.agents.contains(&a) && Currency::all(k).any(|c| network.balance(a, c) > 0) {
            return Err(EconomyError::InfeasibleAllocation(format!("{a} holds coins but has no allocation row")));
        }
    }
    let mut work = network.clone();
    let mut hops = Vec::new();
    for c in Currency::all(k) {
        let column: Vec<f64> = (0..allocation.agents.len()).map(|r| allocation.get(r, c.index())).collect();
        let sum: f64 = column.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(EconomyError::InfeasibleAllocation(format!("allocation of {c} sums to {sum}")));
        }
        let targets = largest_remainder(&column, network.coin_count(c))?;
        let mut surplus = Vec::new();
        let mut deficit = Vec::new();
        for (&a, &target) in allocation.agents.iter().zip(&targets) {
            if target > 0 && !network.is_member(a, c) {
                return Err(EconomyError::InfeasibleAllocation(format!("{a} would hold {c} without membership")));
            }
            let held = network.balance(a, c);
            if held > target {
                surplus.push((a, held - target));
            } else if target > held {
                deficit.push((a, target - held));
            }
        }
        let mut deficit = deficit.into_iter();
        let mut need = deficit.next();
        for (payer, mut excess) in surplus {
            while excess > 0 {
                let Some((payee, gap)) = need.as_mut() else { break };
                let coin = work.min_coin(payer, c).expect("surplus agent holds coins");
                work.apply_pay(coin, payer, *payee)?;
                hops.push(Hop::new(coin, payer, *payee));
                excess -= 1;
                *gap -= 1;
                if *gap == 0 {
                    need = deficit.next();
                }
            }
        }
    }
    Ok(hops)
}

/// Applies [`settlement_plan`] to a copy of the network.
pub fn settle_trades(network: &CurrencyNetwork, allocation: &AgentMatrix) -> Result<CurrencyNetwork> {
    let hops = settlement_plan(network, allocation)?;
    let mut next = network.clone();
    for h in hops {
        next.apply_pay(h.coin, h.payer, h.payee)?;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::fixtures::v;

    fn c(i: usize) -> Currency {
        Currency::new(i)
    }

    fn two_by_two(alpha_a: f64, alpha_b: f64, a_endow: (f64, f64)) -> (AgentMatrix, PreferenceProfile) {
        let e = AgentMatrix::from_rows(vec![
            (v(0), vec![a_endow.0, a_endow.1]),
            (v(1), vec![1.0 - a_endow.0, 1.0 - a_endow.1]),
        ])
        .unwrap();
        let prefs = PreferenceProfile::new(
            2,
            BTreeMap::from([(v(0), vec![alpha_a, 1.0 - alpha_a]), (v(1), vec![alpha_b, 1.0 - alpha_b])]),
        )
        .unwrap();
        (e, prefs)
    }

    // Independent oracle: bisection on the excess demand for currency 1 with p2 = 1 - p1.
    fn bisection_price(alpha: [f64; 2], e: [[f64; 2]; 2]) -> f64 {
        let excess = |p1: f64| {
            let demand: f64 = (0..2).map(|v| alpha[v] * (p1 * e[v][0] + (1.0 - p1) * e[v][1]) / p1).sum();
            demand - 1.0
        };
        let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn single_currency_is_trivial() {
        let e = AgentMatrix::from_rows(vec![(v(0), vec![0.3]), (v(1), vec![0.7])]).unwrap();
        let prefs = PreferenceProfile::new(1, BTreeMap::from([(v(0), vec![1.0]), (v(1), vec![1.0])])).unwrap();
        let eq = solve_equilibrium(&e, &prefs, 1e-12, 100).unwrap();
        assert_eq!(eq.prices, vec![1.0]);
        assert_eq!(eq.allocation, e);
    }

    #[test]
    fn symmetric_swap_splits_evenly() {
        let (e, prefs) = two_by_two(0.5, 0.5, (1.0, 0.0));
        let eq = solve_equilibrium(&e, &prefs, 1e-12, 10_000).unwrap();
        assert!((eq.prices[0] - 0.5).abs() < 1e-12);
        for x in &eq.allocation.values {
            assert!((x - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn asymmetric_case_matches_oracle() {
        // a owns currency 1 and prefers it 3:1, b the mirror image
        let (e, prefs) = two_by_two(0.75, 0.25, (1.0, 0.0));
        let eq = solve_equilibrium(&e, &prefs, 1e-13, 10_000).unwrap();
        let p1 = bisection_price([0.75, 0.25], [[1.0, 0.0], [0.0, 1.0]]);
        assert!((p1 - 0.5).abs() < 1e-12);
        assert!((eq.prices[0] - p1).abs() < 1e-10);
        let expect = [0.75, 0.25, 0.25, 0.75];
        for (x, y) in eq.allocation.values.iter().zip(expect) {
            assert!((x - y).abs() < 1e-10);
        }
        let mrs = mrs_matrix(&eq.prices).unwrap();
        assert!((mrs.get(c(0), c(1)) - p1 / (1.0 - p1)).abs() < 1e-9);
    }

    #[test]
    fn solver_agrees_with_bisection_on_grid() {
        for ia in 1..10 {
            for ib in 1..10 {
                for endow in [(1.0, 0.0), (0.5, 0.5), (0.2, 0.9)] {
                    let (aa, ab) = (ia as f64 / 10.0, ib as f64 / 10.0);
                    let (e, prefs) = two_by_two(aa, ab, endow);
                    let eq = solve_equilibrium(&e, &prefs, 1e-14, 100_000).unwrap();
                    let oracle = bisection_price(
                        [aa, ab],
                        [[endow.0, endow.1], [1.0 - endow.0, 1.0 - endow.1]],
                    );
                    assert!((eq.prices[0] - oracle).abs() < 1e-9, "{aa} {ab} {endow:?}");
                    for (s, _) in eq.allocation.column_sums().iter().zip(0..) {
                        assert!((s - 1.0).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn equilibrium_weakly_improves_every_agent() {
        let (e, prefs) = two_by_two(0.8, 0.3, (0.9, 0.1));
        let eq = solve_equilibrium(&e, &prefs, 1e-13, 10_000).unwrap();
        let utility = |w: &[f64], x: &[f64]| -> f64 {
            w.iter().zip(x).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * b.ln()).sum()
        };
        for r in 0..2 {
            let w = prefs.weights(e.agents()[r]).unwrap();
            assert!(utility(w, eq.allocation.row(r)) >= utility(w, e.row(r)) - 1e-12);
        }
    }

    #[test]
    fn periodic_spending_map_still_converges() {
        // each agent owns one currency and only values the other
        let (e, prefs) = two_by_two(0.0, 1.0, (1.0, 0.0));
        let eq = solve_equilibrium(&e, &prefs, 1e-12, 10_000).unwrap();
        assert!((eq.prices[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unvalued_currency_is_degenerate() {
        let (e, prefs) = two_by_two(1.0, 1.0, (1.0, 0.0));
        assert_eq!(solve_equilibrium(&e, &prefs, 1e-12, 100), Err(EconomyError::DegenerateEconomy(c(1))));
    }

    #[test]
    fn draining_currency_is_degenerate() {
        // b holds all of currency 2 and values only it, so value spent on
        // currency 2 never comes back to currency 1
        let (e, prefs) = two_by_two(0.5, 0.0, (1.0, 0.0));
        assert_eq!(solve_equilibrium(&e, &prefs, 1e-12, 100_000), Err(EconomyError::DegenerateEconomy(c(0))));
    }

    #[test]
    fn separate_markets_are_disconnected() {
        let (e, prefs) = two_by_two(1.0, 0.0, (1.0, 0.0));
        assert_eq!(
            solve_equilibrium(&e, &prefs, 1e-12, 100_000),
            Err(EconomyError::DisconnectedEconomy(c(0), c(1)))
        );
    }

    #[test]
    fn small_prices_still_clear_the_market() {
        // a holds a sliver of currency 1 and spends almost all on currency 2
        let (e, prefs) = two_by_two(0.001, 0.999, (0.999, 0.0));
        let eq = solve_equilibrium(&e, &prefs, 1e-12, 1_000_000).unwrap();
        for s in eq.allocation.column_sums() {
            assert!((s - 1.0).abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let (e, prefs) = two_by_two(0.9, 0.3, (1.0, 0.0));
        assert!(matches!(
            solve_equilibrium(&e, &prefs, 1e-15, 0),
            Err(EconomyError::NoConvergence { iterations: 0, .. })
        ));
    }

    #[test]
    fn mrs_from_prices() {
        let m = mrs_matrix(&[0.5, 0.5]).unwrap();
        assert!(m.rows().iter().flatten().all(|x| *x == 1.0));
        let m = mrs_matrix(&[0.6, 0.3, 0.1]).unwrap();
        assert!((m.get(c(0), c(2)) - 6.0).abs() < 1e-12);
        assert!((m.get(c(0), c(1)) * m.get(c(1), c(2)) - 6.0).abs() < 1e-12);
        assert_eq!(mrs_matrix(&[0.5, 0.0]), Err(EconomyError::NonPositivePrice(c(1))));
    }

    #[test]
    fn coin_rates_from_mrs_and_volumes() {
        let mrs = mrs_matrix(&[2.0, 1.0]).unwrap();
        let ex = coin_exchange_rates(&mrs, &[200, 100]).unwrap();
        assert_eq!(ex.get(c(0), c(1)), 1.0);

        let ex = coin_exchange_rates(&mrs_matrix(&[1.0, 1.0]).unwrap(), &[7, 7]).unwrap();
        assert!(ex.rows().iter().flatten().all(|x| *x == 1.0));

        let ex = coin_exchange_rates(&mrs_matrix(&[1.5, 1.0]).unwrap(), &[100, 100]).unwrap();
        assert!((ex.get(c(0), c(1)) - 1.5).abs() < 1e-15);
        assert_eq!(coin_exchange_rates(&mrs, &[0, 1]), Err(EconomyError::ZeroCoins(c(0))));
    }

    #[test]
    fn rate_axioms_rejected() {
        assert!(ExchangeRateMatrix::from_rows(&[vec![1.0, 2.0], vec![0.4, 1.0]]).is_err());
        assert!(ExchangeRateMatrix::from_rows(&[vec![1.1, 2.0], vec![0.5, 1.0]]).is_err());
        assert!(MrsMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 1.0]]).is_ok());
    }

    fn two_currency_net() -> CurrencyNetwork {
        let mut net = CurrencyNetwork::with_members([vec![v(0), v(1)], vec![v(0), v(1)]]).unwrap();
        for _ in 0..3 {
            net.mint(c(0), v(0)).unwrap();
        }
        net.mint(c(0), v(1)).unwrap();
        net.mint(c(1), v(0)).unwrap();
        for _ in 0..3 {
            net.mint(c(1), v(1)).unwrap();
        }
        net
    }

    #[test]
    fn equity_hand_computed() {
        let net = two_currency_net();
        let ex = coin_exchange_rates(&mrs_matrix(&[2.0, 1.0]).unwrap(), &[1, 1]).unwrap();
        // v0: 3 coins worth 2 + 1 coin worth 1 = 7 out of 4*2 + 4 = 12
        let e0 = fractional_equity(&net, &ex, v(0)).unwrap();
        assert!((e0 - 7.0 / 12.0).abs() < 1e-12);
        let e0_in2 = fractional_equity_in(&net, &ex, v(0), c(1)).unwrap();
        assert!((e0 - e0_in2).abs() < 1e-12);
        let e1 = fractional_equity(&net, &ex, v(1)).unwrap();
        assert!((e0 + e1 - 1.0).abs() < 1e-12);

        let ones = ExchangeRateMatrix::ones(2);
        let mut half = CurrencyNetwork::with_members([vec![v(0), v(1)], vec![v(0), v(1)]]).unwrap();
        half.mint(c(0), v(0)).unwrap();
        half.mint(c(0), v(1)).unwrap();
        half.mint(c(1), v(0)).unwrap();
        half.mint(c(1), v(1)).unwrap();
        assert_eq!(fractional_equity(&half, &ones, v(0)).unwrap(), 0.5);
    }

    #[test]
    fn diluted_columns_sum_to_one() {
        let d = diluted_balances(&two_currency_net()).unwrap();
        assert_eq!(d.row(0), &[0.75, 0.25]);
        for s in d.column_sums() {
            assert!((s - 1.0).abs() < 1e-15);
        }
        let empty = CurrencyNetwork::with_members([vec![v(0)]]).unwrap();
        assert_eq!(diluted_balances(&empty), Err(EconomyError::EmptyCurrency(c(0))));
    }

    #[test]
    fn rounding_prefers_earlier_agent_on_ties() {
        assert_eq!(largest_remainder(&[0.25, 0.75], 10).unwrap(), vec![3, 7]);
        assert_eq!(largest_remainder(&[0.5, 0.5], 10).unwrap(), vec![5, 5]);
        assert_eq!(largest_remainder(&[1.0 / 3.0; 3], 10).unwrap(), vec![4, 3, 3]);
    }

    #[test]
    fn settlement_realizes_rounded_allocation() {
        let mut net = CurrencyNetwork::with_members([vec![v(0), v(1)]]).unwrap();
        for _ in 0..10 {
            net.mint(c(0), v(0)).unwrap();
        }
        let same = diluted_balances(&net).unwrap();
        assert!(settlement_plan(&net, &same).unwrap().is_empty());

        let alloc = AgentMatrix::from_rows(vec![(v(0), vec![0.5]), (v(1), vec![0.5])]).unwrap();
        let plan = settlement_plan(&net, &alloc).unwrap();
        assert_eq!(plan.len(), 5);
        let settled = settle_trades(&net, &alloc).unwrap();
        assert_eq!((settled.balance(v(0), c(0)), settled.balance(v(1), c(0))), (5, 5));

        let alloc = AgentMatrix::from_rows(vec![(v(0), vec![0.25]), (v(1), vec![0.75])]).unwrap();
        let settled = settle_trades(&net, &alloc).unwrap();
        assert_eq!((settled.balance(v(0), c(0)), settled.balance(v(1), c(0))), (3, 7));
    }

    #[test]
    fn settlement_rejects_outsider_allocation() {
        let mut net = CurrencyNetwork::with_members([vec![v(0)], vec![v(0), v(1)]]).unwrap();
        net.mint(c(0), v(0)).unwrap();
        net.mint(c(1), v(0)).unwrap();
        let alloc =
            AgentMatrix::from_rows(vec![(v(0), vec![0.0, 1.0]), (v(1), vec![1.0, 0.0])]).unwrap();
        assert!(matches!(settlement_plan(&net, &alloc), Err(EconomyError::InfeasibleAllocation(_))));
    }
}
