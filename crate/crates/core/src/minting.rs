//! Minting regimes and the coin-choice strategies of joint egalitarian minting.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::accounting::Mint;
use crate::economy::{EconomyError, ExchangeRateMatrix, PreferenceProfile};
use crate::ledger::{AgentId, Currency, CurrencyNetwork, LedgerError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MintingError {
    #[error("invalid rates: {0}")]
    InvalidRates(String),
    #[error("{agent} is not a member of {currency}")]
    NonMember { agent: AgentId, currency: Currency },
    #[error("{0} belongs to no community")]
    NoMemberships(AgentId),
    #[error("no preferences for agent {0}")]
    MissingPreferences(AgentId),
    #[error("unknown minting regime `{0}`")]
    UnknownRegime(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

pub type Result<T, E = MintingError> = std::result::Result<T, E>;

/// How an agent picks the one currency it mints in under joint egalitarian minting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// The currency whose coin is worth most at the rates in force.
    Myopic,
    /// The currency the agent currently holds the fewest coins of.
    Defensive,
    /// The currency with the highest marginal Cobb-Douglas utility per coin.
    Egocentric,
    Fixed(Currency),
    UniformRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MintingRegime {
    /// `x` coins granted to an agent when it joins a community; no per-step minting.
    EqualBirthGrant(u64),
    /// Every member of one community mints one coin of it per step.
    EgalitarianSingle(Currency),
    /// Every agent mints exactly one coin per step, in a currency of its choice.
    JointEgalitarian(Strategy),
}

impl MintingRegime {
    /// Coins granted per join, if this regime grants any.
    pub fn birth_grant(&self) -> Option<u64> {
        match *self {
            MintingRegime::EqualBirthGrant(x) => Some(x),
            _ => None,
        }
    }
}

impl fmt::Display for MintingRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MintingRegime::EqualBirthGrant(x) => write!(f, "equal_birth_grant:{x}"),
            MintingRegime::EgalitarianSingle(c) => write!(f, "egalitarian_single:{}", c.label()),
            MintingRegime::JointEgalitarian(s) => match s {
                Strategy::Myopic => f.write_str("joint_myopic"),
                Strategy::Defensive => f.write_str("joint_defensive"),
                Strategy::Egocentric => f.write_str("joint_egocentric"),
                Strategy::Fixed(c) => write!(f, "joint_fixed:{}", c.label()),
                Strategy::UniformRandom => f.write_str("joint_random"),
            },
        }
    }
}

/// Parses the config tags. Currency arguments are 1-based; `equal_birth_grant`
/// without an amount grants one coin and `egalitarian_single` without an index
/// means the first currency.
impl FromStr for MintingRegime {
    type Err = MintingError;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || MintingError::UnknownRegime(s.to_string());
        let (tag, arg) = match s.split_once(':') {
            Some((t, a)) => (t, Some(a)),
            None => (s, None),
        };
        let currency = |a: &str| a.parse::<usize>().ok().and_then(Currency::from_label).ok_or_else(unknown);
        let regime = match (tag, arg) {
            ("equal_birth_grant", None) => MintingRegime::EqualBirthGrant(1),
            ("equal_birth_grant", Some(a)) => match a.parse::<u64>() {
                Ok(x) if x > 0 => MintingRegime::EqualBirthGrant(x),
                _ => return Err(unknown()),
            },
            ("egalitarian_single", None) => MintingRegime::EgalitarianSingle(Currency::new(0)),
            ("egalitarian_single", Some(a)) => MintingRegime::EgalitarianSingle(currency(a)?),
            ("joint_myopic", None) => MintingRegime::JointEgalitarian(Strategy::Myopic),
            ("joint_defensive", None) => MintingRegime::JointEgalitarian(Strategy::Defensive),
            ("joint_egocentric", None) => MintingRegime::JointEgalitarian(Strategy::Egocentric),
            ("joint_random", None) => MintingRegime::JointEgalitarian(Strategy::UniformRandom),
            ("joint_fixed", Some(a)) => MintingRegime::JointEgalitarian(Strategy::Fixed(currency(a)?)),
            _ => return Err(unknown()),
        };
        Ok(regime)
    }
}

impl Serialize for MintingRegime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MintingRegime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tag = String::deserialize(d)?;
        tag.parse().map_err(de::Error::custom)
    }
}

/// The membership whose coin is worth most against the last currency; ties go
/// to the lower index. Under arbitrage-free rates the choice does not depend
/// on the reference, and with two currencies currency 1 wins iff `EX_12 >= 1`.
pub fn most_valued_coin(rates: &ExchangeRateMatrix, memberships: &[Currency]) -> Result<Currency> {
    let k = rates.k();
    if k == 0 {
        return Err(MintingError::InvalidRates("empty rate matrix".into()));
    }
    most_valued_coin_in(rates, memberships, Currency::new(k - 1))
}

pub fn most_valued_coin_in(
    rates: &ExchangeRateMatrix,
    memberships: &[Currency],
    reference: Currency,
) -> Result<Currency> {
    if reference.index() >= rates.k() {
        return Err(MintingError::InvalidRates(format!("reference {reference} outside a {0}x{0} matrix", rates.k())));
    }
    let mut best: Option<(Currency, f64)> = None;
    for &c in memberships {
        if c.index() >= rates.k() {
            return Err(MintingError::InvalidRates(format!("{c} outside a {0}x{0} matrix", rates.k())));
        }
        let value = rates.get(c, reference);
        match best {
            Some((b, v)) if value < v || (value == v && b < c) => {}
            _ => best = Some((c, value)),
        }
    }
    best.map(|(c, _)| c).ok_or_else(|| MintingError::InvalidRates("no memberships to choose from".into()))
}

/// Maximizes `alpha_i / b~_i * 1 / |C^i|` (which is `alpha_i / b_i`) over the
/// agent's memberships. A currency the agent values but holds none of wins
/// outright; ties go to the lower index.
pub fn egocentric_choice(prefs: &PreferenceProfile, agent: AgentId, network: &CurrencyNetwork) -> Result<Currency> {
    let weights = prefs.weights(agent).ok_or(MintingError::MissingPreferences(agent))?;
    let memberships = network.memberships(agent);
    let score = |c: Currency| {
        let alpha = weights.get(c.index()).copied().unwrap_or(0.0);
        let held = network.balance(agent, c);
        if alpha <= 0.0 {
            0.0
        } else if held == 0 {
            f64::INFINITY
        } else {
            alpha / held as f64
        }
    };
    let mut best: Option<(Currency, f64)> = None;
    for c in memberships {
        let s = score(c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best.map(|(c, _)| c).ok_or(MintingError::NoMemberships(agent))
}

/// The currency `agent` mints in under joint egalitarian minting.
pub fn choose_currency<R: Rng + ?Sized>(
    strategy: Strategy,
    network: &CurrencyNetwork,
    agent: AgentId,
    rates: &ExchangeRateMatrix,
    prefs: Option<&PreferenceProfile>,
    rng: &mut R,
) -> Result<Currency> {
    let memberships = network.memberships(agent);
    if memberships.is_empty() {
        return Err(MintingError::NoMemberships(agent));
    }
    match strategy {
        Strategy::Myopic => most_valued_coin(rates, &memberships),
        Strategy::Defensive => Ok(*memberships
            .iter()
            .min_by_key(|&&c| (network.balance(agent, c), c))
            .expect("memberships are nonempty")),
        Strategy::Egocentric => {
            egocentric_choice(prefs.ok_or(MintingError::MissingPreferences(agent))?, agent, network)
        }
        Strategy::Fixed(c) if network.is_member(agent, c) => Ok(c),
        Strategy::Fixed(currency) => Err(MintingError::NonMember { agent, currency }),
        Strategy::UniformRandom => Ok(memberships[rng.gen_range(0..memberships.len())]),
    }
}

/// Who mints which currency this step, decided simultaneously against the
/// network as it stands, in agent order.
pub fn mint_plan<R: Rng + ?Sized>(
    network: &CurrencyNetwork,
    regime: MintingRegime,
    rates: &ExchangeRateMatrix,
    prefs: Option<&PreferenceProfile>,
    rng: &mut R,
) -> Result<Vec<(AgentId, Currency)>> {
    if rates.k() != network.k() {
        return Err(MintingError::InvalidRates(format!(
            "{0}x{0} rates for {1} currencies",
            rates.k(),
            network.k()
        )));
    }
    match regime {
        MintingRegime::EqualBirthGrant(_) => Ok(Vec::new()),
        MintingRegime::EgalitarianSingle(c) => {
            Ok(network.community(c)?.members().iter().map(|&a| (a, c)).collect())
        }
        MintingRegime::JointEgalitarian(strategy) => {
            if strategy == Strategy::Myopic {
                rates.validate().map_err(|e| match e {
                    EconomyError::InvalidRates(s) => MintingError::InvalidRates(s),
                    other => MintingError::InvalidRates(other.to_string()),
                })?;
            }
            network
                .agents()
                .into_iter()
                .map(|a| Ok((a, choose_currency(strategy, network, a, rates, prefs, rng)?)))
                .collect()
        }
    }
}

/// Applies one step of minting to a copy of the network.
pub fn mint_step<R: Rng + ?Sized>(
    network: &CurrencyNetwork,
    regime: MintingRegime,
    rates: &ExchangeRateMatrix,
    prefs: Option<&PreferenceProfile>,
    rng: &mut R,
) -> Result<(CurrencyNetwork, Vec<Mint>)> {
    let plan = mint_plan(network, regime, rates, prefs, rng)?;
    let mut next = network.clone();
    let mut mints = Vec::with_capacity(plan.len());
    for (minter, c) in plan {
        let coin = next.mint(c, minter)?;
        mints.push(Mint { coin, minter });
    }
    Ok((next, mints))
}
