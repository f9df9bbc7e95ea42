//! People, the agents they own, and how sybils stay local to the community
//! that harbours them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::History;
use crate::economy::{fractional_equity, EconomyError, ExchangeRateMatrix};
use crate::justice::{justice_value_network, JusticeError};
use crate::ledger::{AgentId, Currency, CurrencyNetwork};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentityError {
    #[error("agent {0} has no owner")]
    UnknownAgent(AgentId),
    #[error("unknown person `{0}`")]
    UnknownPerson(PersonId),
    #[error(transparent)]
    Economy(#[from] EconomyError),
    #[error(transparent)]
    Justice(#[from] JusticeError),
}

pub type Result<T, E = IdentityError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(pub String);

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PersonId {
    fn from(s: &str) -> Self {
        PersonId(s.to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OwnershipMap {
    owners: BTreeMap<AgentId, BTreeSet<PersonId>>,
    owned: BTreeMap<PersonId, BTreeSet<AgentId>>,
}

impl OwnershipMap {
    pub fn new(pairs: impl IntoIterator<Item = (PersonId, AgentId)>) -> Self {
        let mut map = OwnershipMap::default();
        for (p, a) in pairs {
            map.owners.entry(a).or_default().insert(p.clone());
            map.owned.entry(p).or_default().insert(a);
        }
        map
    }

    /// Every agent owned by a person of the same name.
    pub fn one_to_one(network: &CurrencyNetwork, name: impl Fn(AgentId) -> String) -> Self {
        Self::new(network.agents().into_iter().map(|a| (PersonId(name(a)), a)))
    }

    pub fn owners(&self, agent: AgentId) -> Option<&BTreeSet<PersonId>> {
        self.owners.get(&agent)
    }

    pub fn agents_of(&self, person: &PersonId) -> Option<&BTreeSet<AgentId>> {
        self.owned.get(person)
    }

    pub fn persons(&self) -> impl Iterator<Item = &PersonId> {
        self.owned.keys()
    }

    /// Agents of the network nobody owns.
    pub fn unowned(&self, network: &CurrencyNetwork) -> Vec<AgentId> {
        network.agents().into_iter().filter(|a| !self.owners.contains_key(a)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Classification {
    /// Exactly one owner.
    pub unique: bool,
    /// No owner of the agent owns another agent.
    pub singular: bool,
    pub genuine: bool,
}

/// Classifies `agent` against every agent in the ownership map.
pub fn classify(ownership: &OwnershipMap, agent: AgentId) -> Result<Classification> {
    classify_within(ownership, agent, None)
}

/// As [`classify`], but singularity only looks at other agents in `scope`.
pub fn classify_within(
    ownership: &OwnershipMap,
    agent: AgentId,
    scope: Option<&BTreeSet<AgentId>>,
) -> Result<Classification> {
    let owners = ownership.owners(agent).ok_or(IdentityError::UnknownAgent(agent))?;
    let unique = owners.len() == 1;
    let singular = owners.iter().all(|p| {
        ownership.owned[p]
            .iter()
            .all(|&other| other == agent || scope.is_some_and(|s| !s.contains(&other)))
    });
    Ok(Classification { unique, singular, genuine: unique && singular })
}

/// A community is genuine when each member is genuine among its fellow members.
pub fn genuine_community(ownership: &OwnershipMap, network: &CurrencyNetwork, currency: Currency) -> bool {
    let Ok(community) = network.community(currency) else { return false };
    let members = community.members();
    members
        .iter()
        .all(|&a| classify_within(ownership, a, Some(members)).is_ok_and(|c| c.genuine))
}

/// Genuine communities, taken in index order, skipping any in which some
/// owner also owns a different agent of an already accepted community.
pub fn genuine_subnet(ownership: &OwnershipMap, network: &CurrencyNetwork) -> BTreeSet<Currency> {
    let mut accepted = BTreeSet::new();
    let mut claimed: BTreeMap<&PersonId, AgentId> = BTreeMap::new();
    for community in network.communities() {
        let c = community.index();
        if !genuine_community(ownership, network, c) {
            continue;
        }
        let owners_here: Vec<(&PersonId, AgentId)> = community
            .members()
            .iter()
            .flat_map(|&a| ownership.owners(a).into_iter().flatten().map(move |p| (p, a)))
            .collect();
        if owners_here.iter().any(|(p, a)| claimed.get(p).is_some_and(|b| b != a)) {
            continue;
        }
        claimed.extend(owners_here);
        accepted.insert(c);
    }
    accepted
}

/// Sum of the person's agents' fractional equity, splitting co-owned agents
/// equally among their owners.
pub fn owner_equity(
    network: &CurrencyNetwork,
    ex: &ExchangeRateMatrix,
    ownership: &OwnershipMap,
    person: &PersonId,
) -> Result<f64> {
    let agents = ownership.agents_of(person).ok_or_else(|| IdentityError::UnknownPerson(person.clone()))?;
    let mut total = 0.0;
    for &a in agents {
        let share = ownership.owners[&a].len() as f64;
        total += fractional_equity(network, ex, a)? / share;
    }
    Ok(total)
}

/// A person's network justice value: the co-owner-split sum of their agents'
/// `(balance - cashflow)` value shares at step `t`.
pub fn owner_justice_value(
    history: &History,
    t: u64,
    ex: &ExchangeRateMatrix,
    ownership: &OwnershipMap,
    person: &PersonId,
) -> Result<f64> {
    let agents = ownership.agents_of(person).ok_or_else(|| IdentityError::UnknownPerson(person.clone()))?;
    let mut total = 0.0;
    for &a in agents {
        let share = ownership.owners[&a].len() as f64;
        total += justice_value_network(history, t, a, ex, Currency::new(0))? / share;
    }
    Ok(total)
}

// (balance - cashflow) of the person's agents in one currency, over |C|.
fn currency_share(history: &History, t: u64, ownership: &OwnershipMap, person: &PersonId, c: Currency) -> Result<f64> {
    let total = history.coin_count(t, c).map_err(JusticeError::from)? as f64;
    if total == 0.0 {
        return Err(JusticeError::NoCoins(t).into());
    }
    let mut sum = 0.0;
    for &a in &ownership.owned[person] {
        let row = history.counters(t, a, c).map_err(JusticeError::from)?;
        sum += (row.balance as i64 - row.cashflow) as f64 / ownership.owners[&a].len() as f64;
    }
    Ok(sum / total)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OwnerValue {
    pub person: PersonId,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DuplicateShare {
    pub currency: Currency,
    pub person: PersonId,
    pub agents: Vec<AgentId>,
    /// The person's `(balance - cashflow)` share of this currency.
    pub share: f64,
    /// Mean share of genuine owners whose agents belong to this community only
    /// (or of all genuine owners in it, if there are none such).
    pub reference_share: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SybilReport {
    pub t: u64,
    pub subnet: Vec<Currency>,
    /// Network justice value of each owner with an agent in the genuine subnet.
    pub genuine_owners: Vec<OwnerValue>,
    /// Largest minus smallest of `genuine_owners`.
    pub genuine_spread: f64,
    /// Owners holding several agents in a community outside the subnet.
    pub duplicates: Vec<DuplicateShare>,
}

/// Compares the owners of genuine communities with the duplicate owners of
/// the others at step `t`.
pub fn sybil_locality_report(
    history: &History,
    t: u64,
    ex: &ExchangeRateMatrix,
    ownership: &OwnershipMap,
) -> Result<SybilReport> {
    let network = history.snapshot(t).unwrap_or(history.current());
    if let Some(&a) = ownership.unowned(network).first() {
        return Err(IdentityError::UnknownAgent(a));
    }
    let subnet = genuine_subnet(ownership, network);

    let mut persons = BTreeSet::new();
    for &c in &subnet {
        for a in network.community(c).map_err(EconomyError::from)?.members() {
            persons.extend(ownership.owners[a].iter().cloned());
        }
    }
    let mut genuine_owners = Vec::new();
    for p in persons {
        let value = owner_justice_value(history, t, ex, ownership, &p)?;
        genuine_owners.push(OwnerValue { person: p, value });
    }
    let (lo, hi) = genuine_owners
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.value), hi.max(o.value)));
    let genuine_spread = if genuine_owners.is_empty() { 0.0 } else { hi - lo };

    let mut duplicates = Vec::new();
    for community in network.communities() {
        let c = community.index();
        if subnet.contains(&c) {
            continue;
        }
        let members = community.members();
        let mut by_owner: BTreeMap<&PersonId, Vec<AgentId>> = BTreeMap::new();
        for &a in members {
            for p in &ownership.owners[&a] {
                by_owner.entry(p).or_default().push(a);
            }
        }
        let genuine: Vec<AgentId> = members
            .iter()
            .copied()
            .filter(|&a| classify_within(ownership, a, Some(members)).is_ok_and(|x| x.genuine))
            .collect();
        let exclusive: Vec<AgentId> =
            genuine.iter().copied().filter(|&a| network.memberships(a).len() == 1).collect();
        let reference_agents = if exclusive.is_empty() { &genuine } else { &exclusive };
        if reference_agents.is_empty() {
            continue;
        }
        let mut reference_share = 0.0;
        for &a in reference_agents {
            let p = ownership.owners[&a].first().expect("genuine agents have an owner");
            reference_share += currency_share(history, t, ownership, p, c)?;
        }
        reference_share /= reference_agents.len() as f64;
        for (p, agents) in by_owner {
            if agents.len() < 2 {
                continue;
            }
            let share = currency_share(history, t, ownership, p, c)?;
            duplicates.push(DuplicateShare {
                currency: c,
                person: p.clone(),
                agents,
                share,
                reference_share,
                ratio: share / reference_share,
            });
        }
    }
    Ok(SybilReport { t, subnet: subnet.into_iter().collect(), genuine_owners, genuine_spread, duplicates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::fixtures::v;

    fn p(s: &str) -> PersonId {
        PersonId::from(s)
    }

    fn c(i: usize) -> Currency {
        Currency::new(i)
    }

    #[test]
    fn classification_cases() {
        let map = OwnershipMap::new([(p("ann"), v(0)), (p("bob"), v(1)), (p("bob"), v(2)), (p("cat"), v(3)), (p("dan"), v(3))]);
        assert_eq!(classify(&map, v(0)).unwrap(), Classification { unique: true, singular: true, genuine: true });
        let sybil = classify(&map, v(1)).unwrap();
        assert!(sybil.unique && !sybil.singular && !sybil.genuine);
        let shared = classify(&map, v(3)).unwrap();
        assert!(!shared.unique && shared.singular && !shared.genuine);
        assert_eq!(classify(&map, v(9)), Err(IdentityError::UnknownAgent(v(9))));
        let scope = BTreeSet::from([v(1), v(0)]);
        assert!(classify_within(&map, v(1), Some(&scope)).unwrap().genuine);
    }

    #[test]
    fn subnet_excludes_sybil_community() {
        // green = {g1, g2, o1, o2}, blue = {o1, o2, b1, s1, s2} with s1, s2 owned by one person
        let net = CurrencyNetwork::with_members([
            vec![v(0), v(1), v(2), v(3)],
            vec![v(2), v(3), v(4), v(5), v(6)],
        ])
        .unwrap();
        let map = OwnershipMap::new([
            (p("g1"), v(0)),
            (p("g2"), v(1)),
            (p("o1"), v(2)),
            (p("o2"), v(3)),
            (p("b1"), v(4)),
            (p("s"), v(5)),
            (p("s"), v(6)),
        ]);
        assert!(genuine_community(&map, &net, c(0)));
        assert!(!genuine_community(&map, &net, c(1)));
        assert_eq!(genuine_subnet(&map, &net), BTreeSet::from([c(0)]));

        let all = OwnershipMap::one_to_one(&net, |a| a.to_string());
        assert_eq!(genuine_subnet(&all, &net), BTreeSet::from([c(0), c(1)]));
    }

    #[test]
    fn cross_community_owner_keeps_lower_index() {
        let net = CurrencyNetwork::with_members([vec![v(0), v(1)], vec![v(2), v(3)], vec![v(4)]]).unwrap();
        let map = OwnershipMap::new([
            (p("a"), v(0)),
            (p("x"), v(1)),
            (p("b"), v(2)),
            (p("x"), v(3)),
            (p("c"), v(4)),
        ]);
        assert_eq!(genuine_subnet(&map, &net), BTreeSet::from([c(0), c(2)]));
    }

    #[test]
    fn owner_equity_splits_and_sums() {
        let mut net = CurrencyNetwork::with_members([vec![v(0), v(1), v(2), v(3)]]).unwrap();
        for (a, n) in [(0, 1), (1, 1), (2, 4), (3, 4)] {
            for _ in 0..n {
                net.mint(c(0), v(a)).unwrap();
            }
        }
        let ex = ExchangeRateMatrix::ones(1);
        let map = OwnershipMap::new([(p("x"), v(0)), (p("x"), v(1)), (p("y"), v(2)), (p("z"), v(2)), (p("w"), v(3))]);
        assert!((owner_equity(&net, &ex, &map, &p("x")).unwrap() - 0.2).abs() < 1e-12);
        assert!((owner_equity(&net, &ex, &map, &p("y")).unwrap() - 0.2).abs() < 1e-12);
        let total: f64 = map.persons().map(|q| owner_equity(&net, &ex, &map, q).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(owner_equity(&net, &ex, &map, &p("nobody")), Err(IdentityError::UnknownPerson(p("nobody"))));
    }

    #[test]
    fn genuine_report_matches_agent_values() {
        let mut net = CurrencyNetwork::with_members([vec![v(0), v(1)], vec![v(1), v(2)]]).unwrap();
        net.mint(c(0), v(0)).unwrap();
        net.mint(c(1), v(1)).unwrap();
        net.mint(c(1), v(2)).unwrap();
        let h = History::new(net.clone());
        let ex = ExchangeRateMatrix::ones(2);
        let map = OwnershipMap::one_to_one(&net, |a| a.to_string());
        let report = sybil_locality_report(&h, 0, &ex, &map).unwrap();
        assert_eq!(report.subnet, vec![c(0), c(1)]);
        assert!(report.duplicates.is_empty());
        for o in &report.genuine_owners {
            let agent = *map.agents_of(&o.person).unwrap().first().unwrap();
            assert_eq!(o.value, justice_value_network(&h, 0, agent, &ex, c(0)).unwrap());
        }
    }
}
