//! Core state model: agents, coins, currency communities and networks.
//!
//! A [`CurrencyNetwork`] is a value. The functional operations ([`CurrencyNetwork::pay`],
//! [`CurrencyNetwork::chain_pay`], ...) return a new network and leave the receiver
//! untouched; the `apply_*` variants mutate in place and are what the simulation
//! engine uses on its working copy.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("agent {payer} does not hold coin {coin}")]
    NotHolder { coin: CoinId, payer: AgentId },
    #[error("agent {agent} is not a member of {currency}")]
    NotMember { agent: AgentId, currency: Currency },
    #[error("unknown coin {0}")]
    UnknownCoin(CoinId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown currency {0}")]
    UnknownCurrency(Currency),
    #[error("chain broken at hop {index}: previous payee differs from payer")]
    BrokenChain { index: usize },
    #[error("hop {index} failed: {source}")]
    Hop {
        index: usize,
        #[source]
        source: Box<LedgerError>,
    },
    #[error("invalid network: {0}")]
    Invalid(String),
}

pub type Result<T, E = LedgerError> = std::result::Result<T, E>;

/// Opaque agent identifier. The numeric order is the total order used for
/// every deterministic tie-break in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Currency index. Stored zero-based; every external format (JSON, CSV,
/// scenario tags, display) uses the one-based label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Currency(usize);

impl Currency {
    pub const fn new(index: usize) -> Self {
        Currency(index)
    }

    /// From a one-based label; `None` for zero.
    pub fn from_label(label: usize) -> Option<Self> {
        label.checked_sub(1).map(Currency)
    }

    pub const fn index(self) -> usize {
        self.0
    }

    pub const fn label(self) -> usize {
        self.0 + 1
    }

    pub fn all(k: usize) -> impl Iterator<Item = Currency> {
        (0..k).map(Currency)
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.label())
    }
}

impl Serialize for Currency {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u64(self.label() as u64)
    }
}

impl<'de> Deserialize<'de> for Currency {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let label = usize::deserialize(d)?;
        Currency::from_label(label)
            .ok_or_else(|| serde::de::Error::custom("currency labels start at 1"))
    }
}

/// A coin: its currency plus a serial number unique within that currency.
/// Serials are never reused because coins are never destroyed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoinId {
    pub currency: Currency,
    pub serial: u64,
}

impl CoinId {
    pub fn new(currency: Currency, serial: u64) -> Self {
        CoinId { currency, serial }
    }
}

impl fmt::Display for CoinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.currency.label(), self.serial)
    }
}

impl FromStr for CoinId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (cur, serial) = s
            .split_once(':')
            .ok_or_else(|| format!("coin id `{s}` is not of the form <currency>:<serial>"))?;
        let label: usize = cur.parse().map_err(|_| format!("bad currency in coin id `{s}`"))?;
        let currency =
            Currency::from_label(label).ok_or_else(|| format!("currency 0 in coin id `{s}`"))?;
        let serial = serial.parse().map_err(|_| format!("bad serial in coin id `{s}`"))?;
        Ok(CoinId { currency, serial })
    }
}

impl Serialize for CoinId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CoinId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One direct payment inside a chain payment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub coin: CoinId,
    pub payer: AgentId,
    pub payee: AgentId,
}

impl Hop {
    pub fn new(coin: CoinId, payer: AgentId, payee: AgentId) -> Self {
        Hop { coin, payer, payee }
    }

    /// The payment that undoes this one.
    pub fn reversed(self) -> Self {
        Hop { coin: self.coin, payer: self.payee, payee: self.payer }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurrencyCommunity {
    index: Currency,
    members: BTreeSet<AgentId>,
    coins: BTreeSet<CoinId>,
}

impl CurrencyCommunity {
    pub fn index(&self) -> Currency {
        self.index
    }

    pub fn members(&self) -> &BTreeSet<AgentId> {
        &self.members
    }

    pub fn coins(&self) -> &BTreeSet<CoinId> {
        &self.coins
    }
}

/// A tuple of currency communities with disjoint coin sets and a global
/// holder map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurrencyNetwork {
    communities: Vec<CurrencyCommunity>,
    holder: BTreeMap<CoinId, AgentId>,
    // index of `holder`; never contains empty sets
    holdings: BTreeMap<(AgentId, Currency), BTreeSet<CoinId>>,
}

impl CurrencyNetwork {
    /// A coinless network with one community per member list.
    pub fn with_members<I, M>(communities: I) -> Result<Self>
    where
        I: IntoIterator<Item = M>,
        M: IntoIterator<Item = AgentId>,
    {
        let communities: Vec<CurrencyCommunity> = communities
            .into_iter()
            .enumerate()
            .map(|(i, members)| CurrencyCommunity {
                index: Currency(i),
                members: members.into_iter().collect(),
                coins: BTreeSet::new(),
            })
            .collect();
        if communities.is_empty() {
            return Err(LedgerError::Invalid("a network needs at least one community".into()));
        }
        if let Some(c) = communities.iter().find(|c| c.members.is_empty()) {
            return Err(LedgerError::Invalid(format!("community {} has no members", c.index)));
        }
        Ok(CurrencyNetwork { communities, holder: BTreeMap::new(), holdings: BTreeMap::new() })
    }

    /// Builds a network from member lists and an explicit holder map,
    /// checking every structural invariant.
    pub fn from_parts(
        members: Vec<BTreeSet<AgentId>>,
        holder: BTreeMap<CoinId, AgentId>,
    ) -> Result<Self> {
        let mut net = Self::with_members(members)?;
        for (&coin, &agent) in &holder {
            let i = coin.currency.index();
            let community = net.communities.get_mut(i).ok_or_else(|| {
                LedgerError::Invalid(format!("coin {coin} names a currency outside the network"))
            })?;
            if !community.members.contains(&agent) {
                return Err(LedgerError::Invalid(format!(
                    "coin {coin} is held by {agent}, who is not a member of {}",
                    coin.currency
                )));
            }
            community.coins.insert(coin);
            net.holdings.entry((agent, coin.currency)).or_default().insert(coin);
        }
        net.holder = holder;
        Ok(net)
    }

    pub fn k(&self) -> usize {
        self.communities.len()
    }

    pub fn communities(&self) -> &[CurrencyCommunity] {
        &self.communities
    }

    pub fn community(&self, currency: Currency) -> Result<&CurrencyCommunity> {
        self.communities
            .get(currency.index())
            .ok_or(LedgerError::UnknownCurrency(currency))
    }

    pub fn holder(&self, coin: CoinId) -> Option<AgentId> {
        self.holder.get(&coin).copied()
    }

    pub fn holder_map(&self) -> &BTreeMap<CoinId, AgentId> {
        &self.holder
    }

    /// All agents of the network, in agent order.
    pub fn agents(&self) -> BTreeSet<AgentId> {
        self.communities.iter().flat_map(|c| c.members.iter().copied()).collect()
    }

    pub fn contains_agent(&self, agent: AgentId) -> bool {
        self.communities.iter().any(|c| c.members.contains(&agent))
    }

    pub fn is_member(&self, agent: AgentId, currency: Currency) -> bool {
        self.communities
            .get(currency.index())
            .is_some_and(|c| c.members.contains(&agent))
    }

    /// Currencies whose community contains `agent`, ascending.
    pub fn memberships(&self, agent: AgentId) -> Vec<Currency> {
        self.communities
            .iter()
            .filter(|c| c.members.contains(&agent))
            .map(|c| c.index)
            .collect()
    }

    pub fn coin_count(&self, currency: Currency) -> u64 {
        self.communities.get(currency.index()).map_or(0, |c| c.coins.len() as u64)
    }

    pub fn coin_counts(&self) -> Vec<u64> {
        self.communities.iter().map(|c| c.coins.len() as u64).collect()
    }

    /// Number of coins of `currency` held by `agent`; zero for non-members.
    pub fn balance(&self, agent: AgentId, currency: Currency) -> u64 {
        self.holdings.get(&(agent, currency)).map_or(0, |s| s.len() as u64)
    }

    /// The coins of `currency` held by `agent`.
    pub fn holdings(&self, agent: AgentId, currency: Currency) -> Result<BTreeSet<CoinId>> {
        self.community(currency)?;
        if !self.contains_agent(agent) {
            return Err(LedgerError::UnknownAgent(agent));
        }
        Ok(self.holdings.get(&(agent, currency)).cloned().unwrap_or_default())
    }

    /// Smallest coin of `currency` held by `agent`, if any.
    pub fn min_coin(&self, agent: AgentId, currency: Currency) -> Option<CoinId> {
        self.holdings.get(&(agent, currency)).and_then(|s| s.first().copied())
    }

    pub fn pay(&self, coin: CoinId, payer: AgentId, payee: AgentId) -> Result<Self> {
        let mut next = self.clone();
        next.apply_pay(coin, payer, payee)?;
        Ok(next)
    }

    /// Undoes a payment: `reverse(pay(n, c, u, v), c, v, u) == n`.
    pub fn reverse(&self, coin: CoinId, payer: AgentId, payee: AgentId) -> Result<Self> {
        self.pay(coin, payer, payee)
    }

    pub fn chain_pay(&self, hops: &[Hop]) -> Result<Self> {
        let mut next = self.clone();
        next.apply_chain_pay(hops)?;
        Ok(next)
    }

    /// Undoes a chain payment by paying each hop back in the opposite order.
    pub fn reverse_chain(&self, hops: &[Hop]) -> Result<Self> {
        let back: Vec<Hop> = hops.iter().rev().map(|h| h.reversed()).collect();
        self.chain_pay(&back)
    }

    pub fn apply_pay(&mut self, coin: CoinId, payer: AgentId, payee: AgentId) -> Result<()> {
        let holder = *self.holder.get(&coin).ok_or(LedgerError::UnknownCoin(coin))?;
        if holder != payer {
            return Err(LedgerError::NotHolder { coin, payer });
        }
        if !self.is_member(payee, coin.currency) {
            return Err(LedgerError::NotMember { agent: payee, currency: coin.currency });
        }
        if payer == payee {
            return Ok(());
        }
        self.detach(coin, payer);
        self.holder.insert(coin, payee);
        self.holdings.entry((payee, coin.currency)).or_default().insert(coin);
        Ok(())
    }

    /// Applies all hops or none.
    pub fn apply_chain_pay(&mut self, hops: &[Hop]) -> Result<()> {
        for (index, pair) in hops.windows(2).enumerate() {
            if pair[0].payee != pair[1].payer {
                return Err(LedgerError::BrokenChain { index: index + 1 });
            }
        }
        for (index, hop) in hops.iter().enumerate() {
            if let Err(e) = self.apply_pay(hop.coin, hop.payer, hop.payee) {
                for done in hops[..index].iter().rev() {
                    self.apply_pay(done.coin, done.payee, done.payer)
                        .expect("undoing an applied hop cannot fail");
                }
                return Err(LedgerError::Hop { index, source: Box::new(e) });
            }
        }
        Ok(())
    }

    /// Shortest chain payment from `from` to `to`, planned breadth-first over
    /// agents in agent order. Each hop uses the smallest coin the payer holds
    /// that the next agent accepts. `Some(vec![])` when `from == to`.
    pub fn find_payment_path(&self, from: AgentId, to: AgentId) -> Option<Vec<Hop>> {
        if from == to {
            return Some(Vec::new());
        }
        if !self.contains_agent(from) || !self.contains_agent(to) {
            return None;
        }
        let mut parent: BTreeMap<AgentId, Hop> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for (w, coin) in self.acceptors(u) {
                if w == from || parent.contains_key(&w) {
                    continue;
                }
                parent.insert(w, Hop::new(coin, u, w));
                if w == to {
                    let mut path = Vec::new();
                    let mut cur = to;
                    while cur != from {
                        let hop = parent[&cur];
                        path.push(hop);
                        cur = hop.payer;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(w);
            }
        }
        None
    }

    // Agents that accept a coin currently held by `u`, with the smallest such coin.
    fn acceptors(&self, u: AgentId) -> BTreeMap<AgentId, CoinId> {
        let mut out: BTreeMap<AgentId, CoinId> = BTreeMap::new();
        for community in &self.communities {
            let Some(coin) = self.min_coin(u, community.index) else { continue };
            for &w in &community.members {
                if w == u {
                    continue;
                }
                out.entry(w).and_modify(|c| *c = (*c).min(coin)).or_insert(coin);
            }
        }
        out
    }

    /// Admits `agent` to a community. Returns whether it was newly added.
    pub fn add_member(&mut self, agent: AgentId, currency: Currency) -> Result<bool> {
        let community = self
            .communities
            .get_mut(currency.index())
            .ok_or(LedgerError::UnknownCurrency(currency))?;
        Ok(community.members.insert(agent))
    }

    /// Creates a fresh coin of `currency` held by `holder`.
    pub fn mint(&mut self, currency: Currency, holder: AgentId) -> Result<CoinId> {
        let community = self
            .communities
            .get_mut(currency.index())
            .ok_or(LedgerError::UnknownCurrency(currency))?;
        if !community.members.contains(&holder) {
            return Err(LedgerError::NotMember { agent: holder, currency });
        }
        let serial = community.coins.last().map_or(0, |c| c.serial + 1);
        let coin = CoinId { currency, serial };
        community.coins.insert(coin);
        self.holder.insert(coin, holder);
        self.holdings.entry((holder, currency)).or_default().insert(coin);
        Ok(coin)
    }

    // Rollback helpers for the history step builder.
    pub(crate) fn unmint(&mut self, coin: CoinId) {
        if let Some(holder) = self.holder.remove(&coin) {
            self.detach(coin, holder);
            self.communities[coin.currency.index()].coins.remove(&coin);
        }
    }

    pub(crate) fn remove_member(&mut self, agent: AgentId, currency: Currency) {
        if let Some(c) = self.communities.get_mut(currency.index()) {
            c.members.remove(&agent);
        }
    }

    fn detach(&mut self, coin: CoinId, holder: AgentId) {
        let key = (holder, coin.currency);
        if let Some(set) = self.holdings.get_mut(&key) {
            set.remove(&coin);
            if set.is_empty() {
                self.holdings.remove(&key);
            }
        }
    }

    /// Checks the structural invariants; used after deserialization and in tests.
    pub fn validate(&self) -> Result<()> {
        let mut seen = 0usize;
        for (i, c) in self.communities.iter().enumerate() {
            if c.index.index() != i {
                return Err(LedgerError::Invalid(format!("community {i} carries index {}", c.index)));
            }
            if c.members.is_empty() {
                return Err(LedgerError::Invalid(format!("community {} has no members", c.index)));
            }
            for coin in &c.coins {
                if coin.currency != c.index {
                    return Err(LedgerError::Invalid(format!("coin {coin} listed under {}", c.index)));
                }
                let h = self
                    .holder
                    .get(coin)
                    .ok_or_else(|| LedgerError::Invalid(format!("coin {coin} has no holder")))?;
                if !c.members.contains(h) {
                    return Err(LedgerError::Invalid(format!("coin {coin} held by non-member {h}")));
                }
            }
            seen += c.coins.len();
        }
        if seen != self.holder.len() {
            return Err(LedgerError::Invalid("holder map has coins outside every community".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CommunityDoc {
    index: Currency,
    members: BTreeSet<AgentId>,
    coins: BTreeSet<CoinId>,
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    communities: Vec<CommunityDoc>,
    holder: BTreeMap<CoinId, AgentId>,
}

impl Serialize for CurrencyNetwork {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDoc {
            communities: self
                .communities
                .iter()
                .map(|c| CommunityDoc {
                    index: c.index,
                    members: c.members.clone(),
                    coins: c.coins.clone(),
                })
                .collect(),
            holder: self.holder.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CurrencyNetwork {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let doc = NetworkDoc::deserialize(d)?;
        let mut members = Vec::with_capacity(doc.communities.len());
        for (i, c) in doc.communities.iter().enumerate() {
            if c.index.index() != i {
                return Err(D::Error::custom(format!(
                    "communities must be listed in index order; position {} has index {}",
                    i + 1,
                    c.index.label()
                )));
            }
            members.push(c.members.clone());
        }
        let net = CurrencyNetwork::from_parts(members, doc.holder).map_err(D::Error::custom)?;
        for (c, doc_c) in net.communities.iter().zip(&doc.communities) {
            if c.coins != doc_c.coins {
                return Err(D::Error::custom(format!(
                    "coins of community {} disagree with the holder map",
                    c.index.label()
                )));
            }
        }
        Ok(net)
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn pay_moves_single_coin() {
        let net = seven_agents();
        let next = net.pay(coin(1, 0), v(5), v(1)).unwrap();
        assert_eq!(next.holder(coin(1, 0)), Some(v(1)));
        assert_eq!(next.holder(coin(2, 0)), Some(v(5)));
        assert_eq!(net.holder(coin(1, 0)), Some(v(5)));
        assert_eq!(next.coin_counts(), net.coin_counts());
    }

    #[test]
    fn self_payment_is_identity() {
        let net = seven_agents();
        assert_eq!(net.pay(coin(2, 0), v(5), v(5)).unwrap(), net);
    }

    #[test]
    fn pay_rejects_wrong_payer_and_outsider() {
        let net = seven_agents();
        assert_eq!(
            net.pay(coin(1, 0), v(1), v(2)),
            Err(LedgerError::NotHolder { coin: coin(1, 0), payer: v(1) })
        );
        assert_eq!(
            net.pay(coin(1, 0), v(5), v(4)),
            Err(LedgerError::NotMember { agent: v(4), currency: Currency::new(0) })
        );
        assert_eq!(net.pay(coin(1, 9), v(5), v(1)), Err(LedgerError::UnknownCoin(coin(1, 9))));
    }

    #[test]
    fn reverse_restores() {
        let net = seven_agents();
        let paid = net.pay(coin(1, 0), v(5), v(2)).unwrap();
        assert_eq!(paid.reverse(coin(1, 0), v(2), v(5)).unwrap(), net);
        assert!(matches!(net.reverse(coin(1, 0), v(2), v(5)), Err(LedgerError::NotHolder { .. })));
    }

    #[test]
    fn chain_pay_sequence_and_reverse() {
        let net = seven_agents().pay(coin(1, 0), v(5), v(1)).unwrap();
        let hops = [Hop::new(coin(1, 0), v(1), v(5)), Hop::new(coin(2, 0), v(5), v(4))];
        let done = net.chain_pay(&hops).unwrap();
        assert_eq!(done.holder(coin(1, 0)), Some(v(5)));
        assert_eq!(done.holder(coin(2, 0)), Some(v(4)));
        assert_eq!(done.reverse_chain(&hops).unwrap(), net);
        assert_eq!(net.chain_pay(&[]).unwrap(), net);
    }

    #[test]
    fn chain_pay_broken_and_atomic() {
        let net = seven_agents().pay(coin(1, 0), v(5), v(1)).unwrap();
        let broken = [Hop::new(coin(1, 0), v(1), v(5)), Hop::new(coin(2, 0), v(6), v(4))];
        assert_eq!(net.chain_pay(&broken), Err(LedgerError::BrokenChain { index: 1 }));

        // second hop fails (v7 is not in community 2); first hop must be undone
        let mut work = net.clone();
        let bad = [Hop::new(coin(1, 0), v(1), v(5)), Hop::new(coin(2, 0), v(5), v(7))];
        let err = work.apply_chain_pay(&bad).unwrap_err();
        assert!(matches!(err, LedgerError::Hop { index: 1, .. }));
        assert_eq!(work, net);
    }

    #[test]
    fn path_through_intermediary() {
        let net = seven_agents().pay(coin(1, 0), v(5), v(1)).unwrap();
        let path = net.find_payment_path(v(1), v(4)).unwrap();
        assert_eq!(path, vec![Hop::new(coin(1, 0), v(1), v(5)), Hop::new(coin(2, 0), v(5), v(4))]);
        assert!(net.chain_pay(&path).is_ok());
        assert_eq!(net.find_payment_path(v(3), v(3)), Some(vec![]));
        // v3 holds nothing, so it cannot pay anybody
        assert_eq!(net.find_payment_path(v(3), v(1)), None);
    }

    #[test]
    fn path_needs_acceptable_coin() {
        // v5 gives its community-2 coin away: no route from v1 to v4 any more
        let net = seven_agents()
            .pay(coin(1, 0), v(5), v(1))
            .unwrap()
            .pay(coin(2, 0), v(5), v(6))
            .unwrap();
        assert_eq!(net.find_payment_path(v(1), v(4)), None);
    }

    #[test]
    fn disjoint_communities_have_no_path() {
        let mut net = CurrencyNetwork::with_members([vec![v(1), v(2)], vec![v(3), v(4)]]).unwrap();
        net.mint(Currency::new(0), v(1)).unwrap();
        net.mint(Currency::new(1), v(3)).unwrap();
        assert_eq!(net.find_payment_path(v(1), v(3)), None);
        assert_eq!(net.find_payment_path(v(1), v(2)).map(|p| p.len()), Some(1));
    }

    #[test]
    fn holdings_queries() {
        let net = seven_agents();
        assert_eq!(net.holdings(v(5), Currency::new(0)).unwrap(), BTreeSet::from([coin(1, 0)]));
        assert!(net.holdings(v(3), Currency::new(0)).unwrap().is_empty());
        assert_eq!(net.holdings(v(99), Currency::new(0)), Err(LedgerError::UnknownAgent(v(99))));

        let mut fresh = CurrencyNetwork::with_members([vec![v(1), v(2)]]).unwrap();
        let minted: BTreeSet<_> =
            (0..3).map(|_| fresh.mint(Currency::new(0), v(1)).unwrap()).collect();
        assert_eq!(fresh.holdings(v(1), Currency::new(0)).unwrap(), minted);
    }

    #[test]
    fn json_roundtrip_and_field_names() {
        let net = seven_agents();
        let json = serde_json::to_value(&net).unwrap();
        assert!(json.get("communities").is_some());
        assert!(json["communities"][0].get("members").is_some());
        assert!(json["communities"][0].get("coins").is_some());
        assert_eq!(json["holder"]["1:0"], 5);
        let back: CurrencyNetwork = serde_json::from_value(json).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn json_rejects_holder_outside_community() {
        let doc = r#"{"communities":[{"index":1,"members":[1],"coins":["1:0"]}],"holder":{"1:0":2}}"#;
        assert!(serde_json::from_str::<CurrencyNetwork>(doc).is_err());
        let doc = r#"{"communities":[{"index":1,"members":[1],"coins":[]}],"holder":{"1:0":1}}"#;
        assert!(serde_json::from_str::<CurrencyNetwork>(doc).is_err());
    }

    #[test]
    fn mint_uses_fresh_serials() {
        let mut net = seven_agents();
        let c = net.mint(Currency::new(0), v(2)).unwrap();
        assert_eq!(c, coin(1, 1));
        assert!(matches!(net.mint(Currency::new(0), v(4)), Err(LedgerError::NotMember { .. })));
        net.validate().unwrap();
    }
}
