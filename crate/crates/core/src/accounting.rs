//! Monotone network histories and per-step accounting.
//!
//! A [`History`] keeps, for every step, the balance/income/revenue/expenses
//! counters of every (agent, currency) pair together with the event records
//! (joins, mints, payments) that produced the step. Full network snapshots
//! are kept for step 0, the latest step, and optionally every `n`-th step.
//!
//! Steps enter the history through one of two routes:
//! * [`History::append_step`] takes a complete next network and derives the
//!   counters by diffing holder maps, exactly as the definitions read.
//! * [`History::begin_step`] hands out a [`StepBuilder`] that mutates the
//!   working network through joins, mints and payments and derives the same
//!   counters from the coins it touched. The engine uses this route.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::ledger::{AgentId, CoinId, Currency, CurrencyNetwork, Hop, LedgerError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccountingError {
    #[error("step {t} is outside the history (last step {last})")]
    BadIndex { t: u64, last: u64 },
    #[error("monotonicity violated at step {t}: {detail}")]
    MonotonicityViolation { t: u64, detail: String },
    #[error("step {t} is inconsistent: {detail}")]
    InconsistentStep { t: u64, detail: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

pub type Result<T, E = AccountingError> = std::result::Result<T, E>;

/// Accounting quantities of one (agent, currency) pair at one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub member: bool,
    pub balance: u64,
    pub income: u64,
    pub revenue: u64,
    pub expenses: u64,
    /// Sum of revenue minus expenses over steps 1..=t.
    pub cashflow: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepEvent {
    Join { agent: AgentId, currency: Currency },
    Mint { coin: CoinId, minter: AgentId },
    Pay { coin: CoinId, payer: AgentId, payee: AgentId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mint {
    pub coin: CoinId,
    pub minter: AgentId,
}

/// Input to [`History::append_step`]: the complete network at step `t` plus
/// the events that led to it from step `t - 1`.
#[derive(Clone, Debug)]
pub struct HistoryStep {
    pub t: u64,
    pub network: CurrencyNetwork,
    pub mints: Vec<Mint>,
    pub joins: BTreeSet<(AgentId, Currency)>,
    pub payments: Vec<Hop>,
}

impl HistoryStep {
    /// Minted coin counts per (minter, currency).
    pub fn minted(&self) -> BTreeMap<(AgentId, Currency), u64> {
        let mut out = BTreeMap::new();
        for m in &self.mints {
            *out.entry((m.minter, m.coin.currency)).or_insert(0) += 1;
        }
        out
    }
}

/// The stored form of one step.
#[derive(Clone, Debug)]
pub struct StepAccounts {
    t: u64,
    coin_counts: Vec<u64>,
    member_counts: Vec<usize>,
    agent_count: usize,
    // slot-major: rows[slot * k + currency]
    rows: Vec<Counters>,
    events: Vec<StepEvent>,
}

impl StepAccounts {
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn coin_counts(&self) -> &[u64] {
        &self.coin_counts
    }

    pub fn member_counts(&self) -> &[usize] {
        &self.member_counts
    }

    /// Number of distinct agents in the network at this step.
    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn events(&self) -> &[StepEvent] {
        &self.events
    }

    /// Minted coin counts per (minter, currency).
    pub fn minted(&self) -> BTreeMap<(AgentId, Currency), u64> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            if let StepEvent::Mint { coin, minter } = e {
                *out.entry((*minter, coin.currency)).or_insert(0) += 1;
            }
        }
        out
    }

    pub fn joins(&self) -> BTreeSet<(AgentId, Currency)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                StepEvent::Join { agent, currency } => Some((*agent, *currency)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct History {
    k: usize,
    agents: Vec<AgentId>,
    slots: BTreeMap<AgentId, usize>,
    steps: Vec<StepAccounts>,
    current: CurrencyNetwork,
    snapshots: BTreeMap<u64, CurrencyNetwork>,
    snapshot_every: Option<u64>,
}

impl History {
    /// Starts a history at step 0. Every initial membership is recorded as a
    /// join at step 0; initial coins are endowments, not income.
    pub fn new(initial: CurrencyNetwork) -> Self {
        let k = initial.k();
        let mut history = History {
            k,
            agents: Vec::new(),
            slots: BTreeMap::new(),
            steps: Vec::new(),
            current: initial.clone(),
            snapshots: BTreeMap::from([(0, initial)]),
            snapshot_every: None,
        };
        history.register_agents();
        let events = history
            .current
            .communities()
            .iter()
            .flat_map(|c| c.members().iter().map(|&agent| StepEvent::Join { agent, currency: c.index() }))
            .collect();
        let accounts = history.tally(0, &BTreeMap::new(), &BTreeSet::new(), events);
        history.steps.push(accounts);
        history
    }

    /// Keep a full snapshot every `every` steps (in addition to step 0 and the latest).
    pub fn with_snapshot_every(mut self, every: u64) -> Self {
        self.snapshot_every = Some(every.max(1));
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Index of the latest step.
    pub fn last_t(&self) -> u64 {
        self.steps.len() as u64 - 1
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Network at the latest step.
    pub fn current(&self) -> &CurrencyNetwork {
        &self.current
    }

    pub fn snapshot(&self, t: u64) -> Option<&CurrencyNetwork> {
        if t == self.last_t() {
            return Some(&self.current);
        }
        self.snapshots.get(&t)
    }

    /// Every agent that appeared anywhere in the history, in order of first appearance.
    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn steps(&self) -> &[StepAccounts] {
        &self.steps
    }

    pub fn accounts(&self, t: u64) -> Result<&StepAccounts> {
        self.steps
            .get(t as usize)
            .ok_or(AccountingError::BadIndex { t, last: self.last_t() })
    }

    /// Counters of `agent` in `currency` at step `t`; all zero for agents that
    /// are not (yet) members.
    pub fn counters(&self, t: u64, agent: AgentId, currency: Currency) -> Result<Counters> {
        let step = self.accounts(t)?;
        if currency.index() >= self.k {
            return Err(LedgerError::UnknownCurrency(currency).into());
        }
        Ok(self
            .slots
            .get(&agent)
            .and_then(|&s| step.rows.get(s * self.k + currency.index()))
            .copied()
            .unwrap_or_default())
    }

    pub fn coin_count(&self, t: u64, currency: Currency) -> Result<u64> {
        let step = self.accounts(t)?;
        step.coin_counts
            .get(currency.index())
            .copied()
            .ok_or_else(|| LedgerError::UnknownCurrency(currency).into())
    }

    pub fn begin_step(&mut self) -> StepBuilder<'_> {
        StepBuilder {
            t: self.last_t() + 1,
            history: self,
            events: Vec::new(),
            touched: BTreeMap::new(),
            minted: BTreeSet::new(),
            committed: false,
        }
    }

    /// Appends a complete snapshot. Counters are derived by diffing the
    /// holder maps of steps `t - 1` and `t`.
    pub fn append_step(&mut self, step: HistoryStep) -> Result<()> {
        let t = step.t;
        let expected = self.last_t() + 1;
        if t != expected {
            return Err(AccountingError::BadIndex { t, last: self.last_t() });
        }
        let next = &step.network;
        next.validate()?;
        if next.k() != self.k {
            return Err(AccountingError::MonotonicityViolation {
                t,
                detail: format!("community count changed from {} to {}", self.k, next.k()),
            });
        }
        let mut new_memberships = BTreeSet::new();
        let mut new_coins = BTreeSet::new();
        for (prev, cur) in self.current.communities().iter().zip(next.communities()) {
            if let Some(gone) = prev.members().difference(cur.members()).next() {
                return Err(AccountingError::MonotonicityViolation {
                    t,
                    detail: format!("agent {gone} left {}", prev.index()),
                });
            }
            if let Some(gone) = prev.coins().difference(cur.coins()).next() {
                return Err(AccountingError::MonotonicityViolation {
                    t,
                    detail: format!("coin {gone} disappeared"),
                });
            }
            new_memberships.extend(cur.members().difference(prev.members()).map(|&a| (a, cur.index())));
            new_coins.extend(cur.coins().difference(prev.coins()).copied());
        }
        if step.joins != new_memberships {
            return Err(AccountingError::InconsistentStep {
                t,
                detail: "recorded joins differ from the new memberships".into(),
            });
        }
        let recorded: BTreeSet<CoinId> = step.mints.iter().map(|m| m.coin).collect();
        if recorded.len() != step.mints.len() || recorded != new_coins {
            return Err(AccountingError::InconsistentStep {
                t,
                detail: "recorded mints differ from the new coins".into(),
            });
        }
        if let Some(m) = step.mints.iter().find(|m| !next.is_member(m.minter, m.coin.currency)) {
            return Err(AccountingError::InconsistentStep {
                t,
                detail: format!("minter {} is not a member of {}", m.minter, m.coin.currency),
            });
        }

        let mut touched = BTreeMap::new();
        for (&coin, &before) in self.current.holder_map() {
            if next.holder(coin) != Some(before) {
                touched.insert(coin, before);
            }
        }
        let mut events: Vec<StepEvent> = step
            .joins
            .iter()
            .map(|&(agent, currency)| StepEvent::Join { agent, currency })
            .collect();
        events.extend(step.mints.iter().map(|m| StepEvent::Mint { coin: m.coin, minter: m.minter }));
        events.extend(step.payments.iter().map(|h| StepEvent::Pay { coin: h.coin, payer: h.payer, payee: h.payee }));

        self.current = step.network;
        self.register_agents();
        let accounts = self.tally(t, &touched, &new_coins, events);
        self.push(accounts);
        Ok(())
    }

    fn register_agents(&mut self) {
        for a in self.current.agents() {
            if !self.slots.contains_key(&a) {
                self.slots.insert(a, self.agents.len());
                self.agents.push(a);
            }
        }
    }

    // Counters for step `t` from the current network. `touched` maps coins
    // that existed at `t - 1` to their holder then; `minted` are the new coins.
    fn tally(
        &self,
        t: u64,
        touched: &BTreeMap<CoinId, AgentId>,
        minted: &BTreeSet<CoinId>,
        events: Vec<StepEvent>,
    ) -> StepAccounts {
        let k = self.k;
        let net = &self.current;
        let mut rows = vec![Counters::default(); self.agents.len() * k];
        for (slot, &agent) in self.agents.iter().enumerate() {
            for c in Currency::all(k) {
                let row = &mut rows[slot * k + c.index()];
                row.member = net.is_member(agent, c);
                row.balance = net.balance(agent, c);
            }
        }
        for &coin in minted {
            let holder = net.holder(coin).expect("minted coin has a holder");
            rows[self.slots[&holder] * k + coin.currency.index()].income += 1;
        }
        for (&coin, &before) in touched {
            let after = net.holder(coin).expect("existing coin has a holder");
            if after != before {
                rows[self.slots[&before] * k + coin.currency.index()].expenses += 1;
                rows[self.slots[&after] * k + coin.currency.index()].revenue += 1;
            }
        }
        if let Some(prev) = self.steps.last() {
            for (i, row) in rows.iter_mut().enumerate() {
                let before = prev.rows.get(i).map_or(0, |r| r.cashflow);
                row.cashflow = before + row.revenue as i64 - row.expenses as i64;
            }
        }
        StepAccounts {
            t,
            coin_counts: net.coin_counts(),
            member_counts: net.communities().iter().map(|c| c.members().len()).collect(),
            agent_count: net.agents().len(),
            rows,
            events,
        }
    }

    fn push(&mut self, accounts: StepAccounts) {
        let t = accounts.t;
        self.steps.push(accounts);
        if let Some(every) = self.snapshot_every {
            if t.is_multiple_of(every) {
                self.snapshots.insert(t, self.current.clone());
            }
        }
    }

    /// The per-step accounting table, one row per (step, member agent, currency).
    pub fn metric_rows<'a>(&'a self, name: impl Fn(AgentId) -> String) -> impl Iterator<Item = MetricRow> + 'a {
        let names: Vec<String> = self.agents.iter().map(|&a| name(a)).collect();
        let k = self.k;
        self.steps.iter().flat_map(move |step| {
            let names = names.clone();
            step.rows.chunks(k).enumerate().flat_map(move |(slot, chunk)| {
                let agent = names[slot].clone();
                chunk.iter().enumerate().filter(|(_, row)| row.member).map(move |(i, row)| MetricRow {
                    t: step.t,
                    agent: agent.clone(),
                    currency: Currency::new(i),
                    balance: row.balance,
                    income: row.income,
                    revenue: row.revenue,
                    expenses: row.expenses,
                    cumulative_cashflow: row.cashflow,
                })
            })
        })
    }

    /// Writes [`History::metric_rows`] as CSV with columns
    /// `t,agent,currency,balance,income,revenue,expenses,cumulative_cashflow`.
    pub fn write_metrics_csv<W: Write>(&self, out: W, name: impl Fn(AgentId) -> String) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.metric_rows(name) {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MetricRow {
    pub t: u64,
    pub agent: String,
    pub currency: Currency,
    pub balance: u64,
    pub income: u64,
    pub revenue: u64,
    pub expenses: u64,
    pub cumulative_cashflow: i64,
}

/// Mutable view of the step being built. Dropping it without calling
/// [`StepBuilder::commit`] rolls the working network back.
pub struct StepBuilder<'a> {
    history: &'a mut History,
    t: u64,
    events: Vec<StepEvent>,
    touched: BTreeMap<CoinId, AgentId>,
    minted: BTreeSet<CoinId>,
    committed: bool,
}

impl StepBuilder<'_> {
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn network(&self) -> &CurrencyNetwork {
        &self.history.current
    }

    /// Admits `agent` to `currency`; returns false if it already was a member.
    pub fn join(&mut self, agent: AgentId, currency: Currency) -> Result<bool> {
        let added = self.history.current.add_member(agent, currency)?;
        if added {
            self.events.push(StepEvent::Join { agent, currency });
        }
        Ok(added)
    }

    pub fn mint(&mut self, currency: Currency, minter: AgentId) -> Result<CoinId> {
        let coin = self.history.current.mint(currency, minter)?;
        self.minted.insert(coin);
        self.events.push(StepEvent::Mint { coin, minter });
        Ok(coin)
    }

    pub fn pay(&mut self, coin: CoinId, payer: AgentId, payee: AgentId) -> Result<()> {
        self.history.current.apply_pay(coin, payer, payee)?;
        if !self.minted.contains(&coin) {
            self.touched.entry(coin).or_insert(payer);
        }
        self.events.push(StepEvent::Pay { coin, payer, payee });
        Ok(())
    }

    pub fn commit(mut self) {
        let events = std::mem::take(&mut self.events);
        let history = &mut *self.history;
        history.register_agents();
        let accounts = history.tally(self.t, &self.touched, &self.minted, events);
        history.push(accounts);
        self.committed = true;
    }
}

impl Drop for StepBuilder<'_> {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        let net = &mut self.history.current;
        for e in self.events.drain(..).rev() {
            match e {
                StepEvent::Pay { coin, payer, payee } => {
                    net.apply_pay(coin, payee, payer).expect("undoing a recorded payment");
                }
                StepEvent::Mint { coin, .. } => net.unmint(coin),
                StepEvent::Join { agent, currency } => net.remove_member(agent, currency),
            }
        }
    }
}

fn check_range(history: &History, t: u64) -> Result<()> {
    if t > history.last_t() {
        return Err(AccountingError::BadIndex { t, last: history.last_t() });
    }
    Ok(())
}

fn check_flow_step(history: &History, t: u64) -> Result<()> {
    check_range(history, t)?;
    if t == 0 {
        return Err(AccountingError::BadIndex { t, last: history.last_t() });
    }
    Ok(())
}

/// Coins of `currency` held by `agent` at step `t`.
pub fn balance(history: &History, t: u64, agent: AgentId, currency: Currency) -> Result<u64> {
    Ok(history.counters(t, agent, currency)?.balance)
}

/// Newly minted coins of `currency` held by `agent` at step `t >= 1`.
pub fn income(history: &History, t: u64, agent: AgentId, currency: Currency) -> Result<u64> {
    check_flow_step(history, t)?;
    Ok(history.counters(t, agent, currency)?.income)
}

pub fn revenue(history: &History, t: u64, agent: AgentId, currency: Currency) -> Result<u64> {
    check_flow_step(history, t)?;
    Ok(history.counters(t, agent, currency)?.revenue)
}

pub fn expenses(history: &History, t: u64, agent: AgentId, currency: Currency) -> Result<u64> {
    check_flow_step(history, t)?;
    Ok(history.counters(t, agent, currency)?.expenses)
}

/// Sum of revenue minus expenses over steps `1..=t`.
pub fn cumulative_cashflow(history: &History, t: u64, agent: AgentId, currency: Currency) -> Result<i64> {
    Ok(history.counters(t, agent, currency)?.cashflow)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// income + revenue - expenses differs from the balance change.
    BalanceDifference,
    /// balance differs from the initial endowment plus all flows so far.
    BalanceSum,
    /// balances of a currency do not add up to its coin count.
    Conservation,
    /// stored flows differ from the flows implied by the recorded events.
    EventFlows,
    /// stored balance differs from the balance implied by the recorded events.
    EventBalance,
    /// a recorded payment or mint cannot be replayed.
    InvalidEvent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub t: u64,
    pub agent: Option<AgentId>,
    pub currency: Currency,
    pub kind: ViolationKind,
    pub expected: i64,
    pub found: i64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AccountingReport {
    pub steps_checked: u64,
    pub violations: Vec<Violation>,
}

impl AccountingReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the balance-difference and balance-sum identities for every
/// (step, agent, currency), coin conservation per currency, and that the
/// recorded events replay to the stored balances and flows.
pub fn check_accounting_identity(history: &History) -> AccountingReport {
    let mut report = AccountingReport::default();
    let k = history.k;
    let initial = history.snapshots.get(&0).expect("step 0 snapshot is always kept");
    let mut holder: BTreeMap<CoinId, AgentId> = initial.holder_map().clone();
    let mut replay_balance: BTreeMap<(AgentId, Currency), i64> = BTreeMap::new();
    for (&coin, &a) in &holder {
        *replay_balance.entry((a, coin.currency)).or_insert(0) += 1;
    }

    let mut running: BTreeMap<(AgentId, Currency), i64> = BTreeMap::new();
    let mut push = |t, agent, currency, kind, expected: i64, found: i64| {
        report.violations.push(Violation { t, agent, currency, kind, expected, found });
    };

    for step in &history.steps {
        let t = step.t;
        let mut flows: BTreeMap<(AgentId, Currency), (i64, i64, i64)> = BTreeMap::new();
        if t > 0 {
            let mut touched: BTreeMap<CoinId, AgentId> = BTreeMap::new();
            let mut minted: BTreeSet<CoinId> = BTreeSet::new();
            for e in &step.events {
                match *e {
                    StepEvent::Join { .. } => {}
                    StepEvent::Mint { coin, minter } => {
                        if holder.insert(coin, minter).is_some() {
                            push(t, Some(minter), coin.currency, ViolationKind::InvalidEvent, 0, 1);
                        }
                        minted.insert(coin);
                    }
                    StepEvent::Pay { coin, payer, payee } => match holder.get_mut(&coin) {
                        Some(h) if *h == payer => {
                            if !minted.contains(&coin) {
                                touched.entry(coin).or_insert(payer);
                            }
                            *h = payee;
                        }
                        _ => push(t, Some(payer), coin.currency, ViolationKind::InvalidEvent, 1, 0),
                    },
                }
            }
            for coin in &minted {
                flows.entry((holder[coin], coin.currency)).or_default().0 += 1;
            }
            for (coin, before) in &touched {
                let after = holder[coin];
                if after != *before {
                    flows.entry((after, coin.currency)).or_default().1 += 1;
                    flows.entry((*before, coin.currency)).or_default().2 += 1;
                    *replay_balance.entry((after, coin.currency)).or_insert(0) += 1;
                    *replay_balance.entry((*before, coin.currency)).or_insert(0) -= 1;
                }
            }
            for coin in &minted {
                *replay_balance.entry((holder[coin], coin.currency)).or_insert(0) += 1;
            }
        }

        let prev = (t > 0).then(|| &history.steps[t as usize - 1]);
        let mut totals = vec![0u64; k];
        for (slot, &agent) in history.agents.iter().enumerate() {
            for c in Currency::all(k) {
                let idx = slot * k + c.index();
                let row = step.rows.get(idx).copied().unwrap_or_default();
                totals[c.index()] += row.balance;
                let replayed = replay_balance.get(&(agent, c)).copied().unwrap_or(0);
                if replayed != row.balance as i64 {
                    push(t, Some(agent), c, ViolationKind::EventBalance, replayed, row.balance as i64);
                }
                if t == 0 {
                    continue;
                }
                let before = prev.and_then(|p| p.rows.get(idx)).map_or(0, |r| r.balance) as i64;
                let delta = row.income as i64 + row.revenue as i64 - row.expenses as i64;
                if delta != row.balance as i64 - before {
                    push(t, Some(agent), c, ViolationKind::BalanceDifference, row.balance as i64 - before, delta);
                }
                let sum = running.entry((agent, c)).or_insert(0);
                *sum += delta;
                let b0 = history.steps[0].rows.get(idx).map_or(0, |r| r.balance) as i64;
                if b0 + *sum != row.balance as i64 {
                    push(t, Some(agent), c, ViolationKind::BalanceSum, row.balance as i64, b0 + *sum);
                }
                let (m, rev, exp) = flows.get(&(agent, c)).copied().unwrap_or_default();
                if (m, rev, exp) != (row.income as i64, row.revenue as i64, row.expenses as i64) {
                    push(t, Some(agent), c, ViolationKind::EventFlows, m + rev - exp, delta);
                }
            }
        }
        for c in Currency::all(k) {
            if totals[c.index()] != step.coin_counts[c.index()] {
                push(t, None, c, ViolationKind::Conservation, step.coin_counts[c.index()] as i64, totals[c.index()] as i64);
            }
        }
        report.steps_checked += 1;
    }
    report
}
