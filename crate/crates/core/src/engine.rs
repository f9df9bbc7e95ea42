//! The simulation loop.
//!
//! Each step `t` processes, in order: joins (with birth grants), minting at
//! the rates in force, random trade noise, and, every `equilibration_interval`
//! steps, a new equilibrium with optional settlement. Minting at `t` uses the
//! rates of the last equilibrium strictly before `t`; metrics recorded at `t`
//! use the rates of the last equilibrium at or before `t`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::accounting::{AccountingError, History};
use crate::economy::{
    coin_exchange_rates, diluted_balances, mrs_matrix, settlement_plan, solve_equilibrium_from, EconomyError,
    ExchangeRateMatrix, MrsMatrix, PreferenceProfile,
};
use crate::identity::{sybil_locality_report, IdentityError, OwnershipMap, PersonId, SybilReport};
use crate::justice::{justice_value_network, justice_value_single, JusticeError, JusticeReport, JusticeSample, JusticeSummary};
use crate::ledger::{AgentId, Currency, CurrencyNetwork, LedgerError};
use crate::minting::{mint_plan, MintingError};
use crate::scenario::{validate_config, ConfigError, InitialCoins, Level, RateSpec, ScenarioConfig};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("step {t}: {source}")]
    Step { t: u64, source: StepError },
    #[error(transparent)]
    Identity(#[from] IdentityError),
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Minting(#[from] MintingError),
    #[error(transparent)]
    Economy(#[from] EconomyError),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
    #[error(transparent)]
    Justice(#[from] JusticeError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

fn at<E: Into<StepError>>(t: u64) -> impl FnOnce(E) -> EngineError {
    move |e| EngineError::Step { t, source: e.into() }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub t: u64,
    /// Coins minted this step, per currency.
    pub minted: Vec<u64>,
    pub coin_counts: Vec<u64>,
    /// Rates this step's minting used.
    pub rates_in_force: ExchangeRateMatrix,
    /// Rates after this step's equilibrium, if any.
    pub rates: ExchangeRateMatrix,
    pub equilibrated: bool,
    pub mrs12: Option<f64>,
    pub ex12: Option<f64>,
    /// Steps up to `t` whose rates in force had `EX_12 >= 1`.
    pub a_t: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverRecord {
    pub t: u64,
    /// Iterations and residual are zero for scripted rates.
    pub endogenous: bool,
    pub iterations: usize,
    pub residual: f64,
    pub prices: Vec<f64>,
    pub mrs: Vec<Vec<f64>>,
    pub ex: Vec<Vec<f64>>,
    /// Payments made to settle the equilibrium allocation.
    pub payments: usize,
}

/// An equilibration step that left the rates in force unchanged: some
/// currency had no coins yet, or its equilibrium price would be zero.
#[derive(Clone, Debug, Serialize)]
pub struct SkippedEquilibrium {
    pub t: u64,
    pub reason: String,
}

impl SkippedEquilibrium {
    fn new(t: u64, reason: EconomyError) -> Self {
        SkippedEquilibrium { t, reason: reason.to_string() }
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub names: Vec<String>,
    pub history: History,
    pub records: Vec<StepRecord>,
    pub equilibria: Vec<SolverRecord>,
    /// Equilibration steps that kept the rates in force.
    pub skipped: Vec<SkippedEquilibrium>,
    pub justice: JusticeReport,
    pub ownership: OwnershipMap,
}

struct Rates {
    ex: ExchangeRateMatrix,
    mrs: Option<MrsMatrix>,
    prices: Option<Vec<f64>>,
}

enum Equilibration {
    Solved(Rates, SolverRecord),
    Skipped(EconomyError),
}

struct Runner<'a> {
    config: &'a ScenarioConfig,
    prefix_prefs: Option<PreferenceProfile>,
    prefs: Option<PreferenceProfile>,
}

impl Runner<'_> {
    fn prefs_at(&self, t: u64) -> Option<&PreferenceProfile> {
        let fix = self.config.preferences.as_ref().map_or(0, |p| p.fix_step);
        if t < fix {
            self.prefix_prefs.as_ref()
        } else {
            self.prefs.as_ref()
        }
    }

    /// New rates for the network at `t`, or the reason the rates in force stay.
    fn equilibrate(&self, t: u64, net: &CurrencyNetwork, previous: &Rates) -> Result<Equilibration, StepError> {
        let k = net.k();
        let counts = net.coin_counts();
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Ok(Equilibration::Skipped(EconomyError::EmptyCurrency(Currency::new(i))));
        }
        if k == 1 {
            let ex = ExchangeRateMatrix::ones(1);
            let record = SolverRecord {
                t,
                endogenous: false,
                iterations: 0,
                residual: 0.0,
                prices: vec![1.0],
                mrs: vec![vec![1.0]],
                ex: ex.rows(),
                payments: 0,
            };
            return Ok(Equilibration::Solved(Rates { ex, mrs: None, prices: None }, record));
        }
        let (mrs, prices, iterations, residual, endogenous) = match &self.config.rates {
            RateSpec::Exogenous { schedule } => (schedule.mrs_at(t)?, Vec::new(), 0, 0.0, false),
            RateSpec::Endogenous { .. } => {
                let prefs = self.prefs_at(t).ok_or_else(|| EconomyError::InvalidPreferences("none given".into()))?;
                let prefs = prefs.restricted_to(net)?;
                let endowment = diluted_balances(net)?;
                let solver = self.config.solver().expect("endogenous rates have a solver");
                let eq = match solve_equilibrium_from(&endowment, &prefs, solver, previous.prices.as_deref()) {
                    Ok(eq) => eq,
                    Err(e @ (EconomyError::DegenerateEconomy(_) | EconomyError::DisconnectedEconomy(..))) => {
                        return Ok(Equilibration::Skipped(e));
                    }
                    Err(e) => return Err(e.into()),
                };
                (mrs_matrix(&eq.prices)?, eq.prices, eq.iterations, eq.residual, true)
            }
        };
        let ex = coin_exchange_rates(&mrs, &counts)?;
        let record = SolverRecord {
            t,
            endogenous,
            iterations,
            residual,
            prices: prices.clone(),
            mrs: mrs.rows(),
            ex: ex.rows(),
            payments: 0,
        };
        let prices = if endogenous { Some(prices) } else { None };
        Ok(Equilibration::Solved(Rates { ex, mrs: Some(mrs), prices }, record))
    }
}

fn initial_network(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<CurrencyNetwork, LedgerError> {
    let ids = config.agent_ids();
    let mut net = CurrencyNetwork::with_members(
        config.communities.iter().map(|c| c.members.iter().map(|m| ids[m]).collect::<Vec<_>>()),
    )?;
    for (i, community) in config.communities.iter().enumerate() {
        let c = Currency::new(i);
        for name in &community.members {
            let n = match &community.initial_coins {
                InitialCoins::None => 0,
                InitialCoins::Each { each } => *each,
                InitialCoins::Uniform { uniform: [lo, hi] } => rng.gen_range(*lo..=*hi),
                InitialCoins::Explicit(map) => map.get(name).copied().unwrap_or(0),
            };
            for _ in 0..n {
                net.mint(c, ids[name])?;
            }
        }
    }
    Ok(net)
}

fn ownership(config: &ScenarioConfig, network: &CurrencyNetwork, names: &[String]) -> OwnershipMap {
    if config.owners.is_empty() {
        return OwnershipMap::one_to_one(network, |a| names[a.0 as usize].clone());
    }
    let ids = config.agent_ids();
    OwnershipMap::new(config.owners.iter().map(|(p, a)| (PersonId(p.clone()), ids[a])))
}

// One random payment: a random currency with coins, a random holder of it, and
// a random other member as payee. The payer spends its smallest coin.
fn random_payment(net: &CurrencyNetwork, rng: &mut ChaCha8Rng) -> Option<(crate::ledger::CoinId, AgentId, AgentId)> {
    let with_coins: Vec<Currency> = Currency::all(net.k()).filter(|&c| net.coin_count(c) > 0).collect();
    if with_coins.is_empty() {
        return None;
    }
    let c = with_coins[rng.gen_range(0..with_coins.len())];
    let members: Vec<AgentId> = net.community(c).ok()?.members().iter().copied().collect();
    let holders: Vec<AgentId> = members.iter().copied().filter(|&a| net.balance(a, c) > 0).collect();
    let payer = holders[rng.gen_range(0..holders.len())];
    if members.len() < 2 {
        return None;
    }
    let mut payee = members[rng.gen_range(0..members.len() - 1)];
    if payee >= payer {
        // skip over the payer to draw uniformly from the others
        let pos = members.iter().position(|&a| a == payee).expect("payee is a member");
        payee = members[pos + 1];
    }
    Some((net.min_coin(payer, c)?, payer, payee))
}

/// Runs a scenario to completion.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput, EngineError> {
    let errors: Vec<String> = validate_config(config)
        .into_iter()
        .filter(|d| d.level == Level::Error)
        .map(|d| d.message)
        .collect();
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors).into());
    }
    let to_config = |e: EconomyError| EngineError::Config(ConfigError::Invalid(vec![e.to_string()]));
    let fix = config.preferences.as_ref().map_or(0, |p| p.fix_step);
    let runner = Runner {
        config,
        prefix_prefs: if fix > 0 { config.preferences_at(0).map_err(to_config)? } else { None },
        prefs: config.preferences_at(fix).map_err(to_config)?,
    };

    let k = config.k();
    let names = config.agent_names();
    let ids = config.agent_ids();
    let mut joins: BTreeMap<u64, Vec<(AgentId, Currency)>> = BTreeMap::new();
    for j in &config.joins {
        joins.entry(j.step).or_default().push((ids[&j.agent], Currency::new(j.community - 1)));
    }
    let grant = config.grant();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = initial_network(config, &mut rng).map_err(at(0))?;
    let mut history = History::new(initial);
    if let Some(every) = config.snapshot_every {
        history = history.with_snapshot_every(every);
    }

    let mut current = Rates { ex: config.bootstrap_rates().map_err(to_config)?, mrs: None, prices: None };
    let mut equilibria = Vec::new();
    let mut skipped = Vec::new();
    match runner.equilibrate(0, history.current(), &current).map_err(at(0))? {
        Equilibration::Solved(rates, record) => {
            current = rates;
            equilibria.push(record);
        }
        Equilibration::Skipped(e) => skipped.push(SkippedEquilibrium::new(0, e)),
    }

    let mut records = Vec::with_capacity(config.steps as usize);
    let mut justice = JusticeReport::default();
    let mut a_t = 0;
    for t in 1..=config.steps {
        let in_force = current.ex.clone();
        let mut step = history.begin_step();
        for &(agent, c) in joins.get(&t).into_iter().flatten() {
            if step.join(agent, c).map_err(at(t))? {
                for _ in 0..grant {
                    step.mint(c, agent).map_err(at(t))?;
                }
            }
        }
        let plan = mint_plan(step.network(), config.regime, &in_force, runner.prefs_at(t), &mut rng)
            .map_err(at(t))?;
        let mut minted = vec![0; k];
        for (agent, c) in plan {
            step.mint(c, agent).map_err(at(t))?;
            minted[c.index()] += 1;
        }
        for _ in 0..config.trade_noise {
            if let Some((coin, payer, payee)) = random_payment(step.network(), &mut rng) {
                step.pay(coin, payer, payee).map_err(at(t))?;
            }
        }
        let mut equilibrated = false;
        if t % config.equilibration_interval == 0 {
            let solved = match runner.equilibrate(t, step.network(), &current).map_err(at(t))? {
                Equilibration::Solved(rates, record) => Some((rates, record)),
                Equilibration::Skipped(e) => {
                    skipped.push(SkippedEquilibrium::new(t, e));
                    None
                }
            };
            if let Some((rates, mut record)) = solved {
                if config.settle && record.endogenous {
                    let endowment = diluted_balances(step.network()).map_err(at(t))?;
                    let prefs = runner.prefs_at(t).expect("endogenous rates have preferences");
                    let prefs = prefs.restricted_to(step.network()).map_err(at(t))?;
                    let solver = config.solver().expect("endogenous rates have a solver");
                    let eq = solve_equilibrium_from(&endowment, &prefs, solver, rates.prices.as_deref())
                        .map_err(at(t))?;
                    let hops = settlement_plan(step.network(), &eq.allocation).map_err(at(t))?;
                    record.payments = hops.len();
                    for h in hops {
                        step.pay(h.coin, h.payer, h.payee).map_err(at(t))?;
                    }
                }
                current = rates;
                equilibria.push(record);
                equilibrated = true;
            }
        }
        step.commit();

        if k == 2 && in_force.get(Currency::new(0), Currency::new(1)) >= 1.0 {
            a_t += 1;
        }
        let net = history.current();
        if t % config.sample_every == 0 || t == config.steps {
            let agents = net.agents();
            let target = 1.0 / agents.len() as f64;
            for agent in agents {
                let value = if k == 1 {
                    justice_value_single(&history, t, agent)
                } else {
                    justice_value_network(&history, t, agent, &current.ex, Currency::new(0))
                };
                match value {
                    Ok(value) => justice.push(JusticeSample { t, agent, value, target }),
                    Err(JusticeError::NoCoins(_)) => {}
                    Err(e) => return Err(at(t)(e)),
                }
            }
        }
        let (mrs12, ex12) = if k >= 2 {
            let (c1, c2) = (Currency::new(0), Currency::new(1));
            (current.mrs.as_ref().map(|m| m.get(c1, c2)), Some(current.ex.get(c1, c2)))
        } else {
            (None, None)
        };
        records.push(StepRecord {
            t,
            minted,
            coin_counts: net.coin_counts(),
            rates_in_force: in_force,
            rates: current.ex.clone(),
            equilibrated,
            mrs12,
            ex12,
            a_t,
        });
    }

    let ownership = ownership(config, history.current(), &names);
    Ok(RunOutput { config: config.clone(), names, history, records, equilibria, skipped, justice, ownership })
}

fn csv_err(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

impl RunOutput {
    pub fn name(&self, agent: AgentId) -> String {
        self.names.get(agent.0 as usize).cloned().unwrap_or_else(|| agent.to_string())
    }

    pub fn agent(&self, name: &str) -> Option<AgentId> {
        self.names.iter().position(|n| n == name).map(|i| AgentId(i as u32))
    }

    pub fn ex12_series(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.ex12).collect()
    }

    pub fn mrs12_series(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.mrs12).collect()
    }

    pub fn a_over_t_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.a_t as f64 / r.t as f64).collect()
    }

    /// Minted coins per (agent, currency) at step `t`.
    pub fn minted(&self, t: u64) -> Result<BTreeMap<(AgentId, Currency), u64>, AccountingError> {
        Ok(self.history.accounts(t)?.minted())
    }

    pub fn final_rates(&self) -> &ExchangeRateMatrix {
        match self.records.last() {
            Some(r) => &r.rates,
            None => panic!("a run has at least one step"),
        }
    }

    pub fn justice_summary(&self, tolerance: Option<f64>) -> JusticeSummary {
        self.justice.summary(self.config.window_fraction(), tolerance, |a| self.name(a))
    }

    pub fn sybil_report(&self) -> Result<SybilReport, IdentityError> {
        sybil_locality_report(&self.history, self.history.last_t(), self.final_rates(), &self.ownership)
    }

    /// `t,agent,currency,balance,income,revenue,expenses,cumulative_cashflow`.
    pub fn write_metrics_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.history.write_metrics_csv(out, |a| self.name(a)).map_err(csv_err)
    }

    /// `t,from,to,in_force,rate`: the rates minting used at `t` and the rates after `t`.
    pub fn write_rates_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "from", "to", "in_force", "rate"]).map_err(csv_err)?;
        for r in &self.records {
            for i in Currency::all(r.rates.k()) {
                for j in Currency::all(r.rates.k()) {
                    w.write_record([
                        r.t.to_string(),
                        i.label().to_string(),
                        j.label().to_string(),
                        r.rates_in_force.get(i, j).to_string(),
                        r.rates.get(i, j).to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        w.flush()
    }

    /// Long format `t,metric,entity,value` with metrics `coins` and `minted`
    /// per currency, and `mrs12`, `ex12`, `a_t`, `a_t_over_t` for two or more currencies.
    pub fn write_series_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "metric", "entity", "value"]).map_err(csv_err)?;
        for r in &self.records {
            let t = r.t.to_string();
            for (i, n) in r.coin_counts.iter().enumerate() {
                w.write_record([t.as_str(), "coins", &(i + 1).to_string(), &n.to_string()]).map_err(csv_err)?;
            }
            for (i, n) in r.minted.iter().enumerate() {
                w.write_record([t.as_str(), "minted", &(i + 1).to_string(), &n.to_string()]).map_err(csv_err)?;
            }
            if let Some(m) = r.mrs12 {
                w.write_record([t.as_str(), "mrs12", "", &m.to_string()]).map_err(csv_err)?;
            }
            if let Some(x) = r.ex12 {
                w.write_record([t.as_str(), "ex12", "", &x.to_string()]).map_err(csv_err)?;
                w.write_record([t.as_str(), "a_t", "", &r.a_t.to_string()]).map_err(csv_err)?;
                let ratio = r.a_t as f64 / r.t as f64;
                w.write_record([t.as_str(), "a_t_over_t", "", &ratio.to_string()]).map_err(csv_err)?;
            }
        }
        w.flush()
    }

    /// `t,endogenous,iterations,residual,payments,p1..pk,ex12`, one row per equilibrium.
    pub fn write_solver_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let k = self.config.k();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["t", "endogenous", "iterations", "residual", "payments"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=k).map(|i| format!("p{i}")));
        header.push("ex12".into());
        w.write_record(&header).map_err(csv_err)?;
        for e in &self.equilibria {
            let mut row = vec![
                e.t.to_string(),
                e.endogenous.to_string(),
                e.iterations.to_string(),
                e.residual.to_string(),
                e.payments.to_string(),
            ];
            row.extend((0..k).map(|i| e.prices.get(i).map_or(String::new(), |p| p.to_string())));
            row.push(e.ex.first().and_then(|r| r.get(1)).map_or(String::new(), |x| x.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()
    }

    pub fn write_justice_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.justice.write_csv(out, |a| self.name(a)).map_err(csv_err)
    }
}
