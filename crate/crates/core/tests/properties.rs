use std::collections::{BTreeMap, BTreeSet};

use currencynet::economy::{
    coin_exchange_rates, diluted_balances, fractional_equity_in, mrs_matrix, settlement_plan, solve_equilibrium,
    AgentMatrix, PreferenceProfile,
};
use currencynet::justice::{mint_fraction_ratio, predicted_mint_fraction};
use currencynet::ledger::{AgentId, CoinId, Currency, CurrencyNetwork, Hop};
use proptest::prelude::*;

/// Member lists (each nonempty) and one holder index per coin.
fn network() -> impl Strategy<Value = CurrencyNetwork> {
    (1usize..=3, 2u32..=8)
        .prop_flat_map(|(k, n)| {
            let community = (prop::collection::btree_set(0..n, 1..=n as usize), prop::collection::vec(any::<prop::sample::Index>(), 1..25));
            prop::collection::vec(community, k)
        })
        .prop_map(|communities| {
            let mut members = Vec::new();
            let mut holder = BTreeMap::new();
            for (i, (m, coins)) in communities.into_iter().enumerate() {
                let list: Vec<AgentId> = m.into_iter().map(AgentId).collect();
                for (serial, pick) in coins.into_iter().enumerate() {
                    holder.insert(CoinId::new(Currency::new(i), serial as u64), *pick.get(&list));
                }
                members.push(list.into_iter().collect::<BTreeSet<_>>());
            }
            CurrencyNetwork::from_parts(members, holder).unwrap()
        })
}

/// Turns index picks into valid hops, applying them as it goes.
fn hops(net: &CurrencyNetwork, picks: &[(prop::sample::Index, prop::sample::Index)]) -> Vec<Hop> {
    let mut scratch = net.clone();
    let mut out = Vec::new();
    for (coin_pick, payee_pick) in picks {
        let coins: Vec<(CoinId, AgentId)> = scratch.holder_map().iter().map(|(c, a)| (*c, *a)).collect();
        let (coin, payer) = *coin_pick.get(&coins);
        let members: Vec<AgentId> = scratch.community(coin.currency).unwrap().members().iter().copied().collect();
        let payee = *payee_pick.get(&members);
        scratch.apply_pay(coin, payer, payee).unwrap();
        out.push(Hop::new(coin, payer, payee));
    }
    out
}

fn economy(k: usize) -> impl Strategy<Value = (Vec<Vec<u64>>, Vec<Vec<f64>>)> {
    (2usize..=6).prop_flat_map(move |n| {
        (
            prop::collection::vec(prop::collection::vec(1u64..50, k), n),
            prop::collection::vec(prop::collection::vec(0.05f64..1.0, k), n),
        )
    })
}

fn build(holdings: &[Vec<u64>], raw: &[Vec<f64>]) -> (AgentMatrix, PreferenceProfile, Vec<u64>) {
    let k = holdings[0].len();
    let counts: Vec<u64> = (0..k).map(|i| holdings.iter().map(|h| h[i]).sum()).collect();
    let rows = holdings
        .iter()
        .enumerate()
        .map(|(a, h)| (AgentId(a as u32), (0..k).map(|i| h[i] as f64 / counts[i] as f64).collect()))
        .collect();
    let weights = raw
        .iter()
        .enumerate()
        .map(|(a, w)| {
            let s: f64 = w.iter().sum();
            (AgentId(a as u32), w.iter().map(|x| x / s).collect())
        })
        .collect();
    (AgentMatrix::from_rows(rows).unwrap(), PreferenceProfile::new(k, weights).unwrap(), counts)
}

proptest! {
    #[test]
    fn single_payments_reverse(net in network(), picks in prop::collection::vec(any::<(prop::sample::Index, prop::sample::Index)>(), 1..20)) {
        let hops = hops(&net, &picks);
        let mut state = net.clone();
        for h in &hops {
            state = state.pay(h.coin, h.payer, h.payee).unwrap();
        }
        for h in hops.iter().rev() {
            state = state.reverse(h.coin, h.payee, h.payer).unwrap();
        }
        prop_assert_eq!(state, net);
    }

    #[test]
    fn payments_conserve_coins(net in network(), picks in prop::collection::vec(any::<(prop::sample::Index, prop::sample::Index)>(), 1..20)) {
        let mut state = net.clone();
        for h in hops(&net, &picks) {
            state.apply_pay(h.coin, h.payer, h.payee).unwrap();
        }
        prop_assert_eq!(state.coin_counts(), net.coin_counts());
        prop_assert!(state.validate().is_ok());
    }

    #[test]
    fn rates_satisfy_the_axioms(prices in prop::collection::vec(1e-3f64..1.0, 2..=5), counts in prop::collection::vec(1u64..100_000, 5)) {
        let k = prices.len();
        let ex = coin_exchange_rates(&mrs_matrix(&prices).unwrap(), &counts[..k]).unwrap();
        prop_assert!(ex.validate().is_ok(), "{:?}", ex.rows());
    }

    #[test]
    fn balanced_volumes_give_unit_rates(values in prop::collection::vec(1u64..1000, 2..=5), scale in 1u64..100_000) {
        let prices: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let counts: Vec<u64> = values.iter().map(|&v| v * scale).collect();
        let ex = coin_exchange_rates(&mrs_matrix(&prices).unwrap(), &counts).unwrap();
        prop_assert!(ex.rows().iter().flatten().all(|&x| x == 1.0), "{:?}", ex.rows());
    }

    #[test]
    fn predicted_fraction_round_trips(only1 in 0u32..6, only2 in 0u32..6, both in 1u32..6, x in 0.001f64..0.999) {
        let v1: BTreeSet<AgentId> = (0..only1 + both).map(AgentId).collect();
        let v2: BTreeSet<AgentId> = (only1..only1 + both + only2).map(AgentId).collect();
        let mrs = mint_fraction_ratio(&v1, &v2, x);
        let back = predicted_mint_fraction(&v1, &v2, mrs).unwrap();
        prop_assert!((back.fraction - x).abs() < 1e-12, "{} vs {x}", back.fraction);
    }

    #[test]
    fn equity_sums_to_one_in_any_reference(net in network(), prices in prop::collection::vec(0.05f64..1.0, 3)) {
        let k = net.k();
        let ex = coin_exchange_rates(&mrs_matrix(&prices[..k]).unwrap(), &net.coin_counts()).unwrap();
        let mut total = 0.0;
        for a in net.agents() {
            let first = fractional_equity_in(&net, &ex, a, Currency::new(0)).unwrap();
            let last = fractional_equity_in(&net, &ex, a, Currency::new(k - 1)).unwrap();
            prop_assert!((first - last).abs() < 1e-9);
            total += first;
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equilibrium_clears_markets((holdings, raw) in (2usize..=4).prop_flat_map(economy)) {
        let (endowment, prefs, _) = build(&holdings, &raw);
        let eq = solve_equilibrium(&endowment, &prefs, 1e-12, 1_000_000).unwrap();
        prop_assert!(eq.residual < 1e-12);
        prop_assert!((eq.prices.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for s in eq.allocation.column_sums() {
            prop_assert!((s - 1.0).abs() < 1e-8, "{s}");
        }
    }

    #[test]
    fn equilibrium_rates_satisfy_the_axioms((holdings, raw) in (2usize..=4).prop_flat_map(economy)) {
        let (endowment, prefs, counts) = build(&holdings, &raw);
        let eq = solve_equilibrium(&endowment, &prefs, 1e-12, 1_000_000).unwrap();
        let ex = coin_exchange_rates(&mrs_matrix(&eq.prices).unwrap(), &counts).unwrap();
        prop_assert!(ex.validate().is_ok());
    }

    #[test]
    fn settlement_realizes_the_rounded_allocation((holdings, raw) in (2usize..=3).prop_flat_map(economy)) {
        let k = holdings[0].len();
        // every agent belongs to every community, so any allocation is payable
        let members: Vec<BTreeSet<AgentId>> = (0..k).map(|_| (0..holdings.len() as u32).map(AgentId).collect()).collect();
        let mut holder = BTreeMap::new();
        for (a, h) in holdings.iter().enumerate() {
            for (i, &count) in h.iter().enumerate() {
                let start = holder.keys().filter(|c: &&CoinId| c.currency == Currency::new(i)).count() as u64;
                for s in 0..count {
                    holder.insert(CoinId::new(Currency::new(i), start + s), AgentId(a as u32));
                }
            }
        }
        let net = CurrencyNetwork::from_parts(members, holder).unwrap();
        let (_, prefs, _) = build(&holdings, &raw);
        let eq = solve_equilibrium(&diluted_balances(&net).unwrap(), &prefs, 1e-12, 1_000_000).unwrap();
        let hops = settlement_plan(&net, &eq.allocation).unwrap();
        let mut settled = net.clone();
        for h in &hops {
            settled.apply_pay(h.coin, h.payer, h.payee).unwrap();
        }
        prop_assert_eq!(settled.coin_counts(), net.coin_counts());
        for (r, &a) in eq.allocation.agents().iter().enumerate() {
            for c in Currency::all(k) {
                let target = eq.allocation.get(r, c.index()) * net.coin_count(c) as f64;
                prop_assert!((settled.balance(a, c) as f64 - target).abs() < 1.0 + 1e-9);
            }
        }
    }
}
