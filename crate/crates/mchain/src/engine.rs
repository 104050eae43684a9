//! The dynamic auction loop: admission pricing by counterfactual replay
//! against past period markets, per-period Virtual Market matching, and
//! survival of losers that are not priced out.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::mcafee::mcafee;
use crate::model::{
    AuctionOutcome, FinalState, GroupId, HistoryEntry, LifecycleState, Period, ProblemInstance,
    ReportedType, Role, UserId,
};
use crate::vm::{vm_match, VmConfig};

pub type History = BTreeMap<Period, Vec<HistoryEntry>>;

/// The reported values of every user seen so far, recorded at her arrival
/// (whether or not she was admitted), with the length reached at the end
/// of each period.
///
/// Admission replay at t' runs against everyone who had arrived by t'.
/// Basing the record on arrivals rather than on per-period market
/// snapshots matters in both directions: a user who was present at t' is
/// part of the record even if she was still live (undecided) then, so a
/// delayed arrival cannot dodge the price her side of that market implies;
/// and the record only ever thickens as reports accumulate, so one user's
/// timing cannot flip another user's replay from a thick, binding market
/// to a thin, unconstrained one.
#[derive(Debug, Clone, Default)]
pub struct MarketHistory {
    values: Vec<(Role, f64)>,
    period_end: BTreeMap<Period, usize>,
}

impl MarketHistory {
    pub fn record(&mut self, role: Role, value: f64) {
        self.values.push((role, value));
    }

    /// Marks the end of period `t`; everything recorded so far is visible
    /// to replays at t' ≥ t.
    pub fn seal(&mut self, t: Period) {
        self.period_end.insert(t, self.values.len());
    }

    /// Everyone finalized by the end of period `t`.
    pub fn as_of(&self, t: Period) -> &[(Role, f64)] {
        let end = self
            .period_end
            .range(..=t)
            .next_back()
            .map_or(0, |(_, &n)| n);
        &self.values[..end]
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

/// Safe-to-Not-Trade set: empty when both sides have at least two active
/// users, otherwise every active user.
pub fn snt(active_b: &BTreeSet<UserId>, active_s: &BTreeSet<UserId>) -> BTreeSet<UserId> {
    if active_b.len().min(active_s.len()) >= 2 {
        BTreeSet::new()
    } else {
        active_b.union(active_s).copied().collect()
    }
}

/// What the market of period t' would have imposed on `user` had she
/// joined it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Counterfactual {
    /// The clearing price on her side of the joined market: at most her
    /// report when she would win, at least her report when she would be
    /// priced out. Defined whether or not any pair actually trades.
    Price(f64),
    /// The joined market does not constrain her: no trade clears even
    /// against an infinitely eager entrant.
    Safe,
}

/// Replays the McAfee stage of the period over the recorded market with an
/// extreme report injected on the user's side: bid +∞ for a buyer, ask 0
/// for a seller. Group structure is ignored on purpose: the user had no
/// groups before her arrival, and the uniform prices are set by the McAfee
/// stage alone.
///
/// The extreme report holds rank 1, which never sets a McAfee price, so
/// the returned price is independent of the user's own report — she cannot
/// tilt her admission price by shading her value. A market that cannot
/// clear even against an infinitely eager counterparty — no trade, or a
/// price driven to ±∞ by the dummy rank extension — implies no finite
/// price at all and leaves her unconstrained.
pub fn counterfactual_payment(user: &ReportedType, market: &[(Role, f64)]) -> Counterfactual {
    let mut bids = Vec::new();
    let mut asks = Vec::new();
    for &(role, value) in market {
        match role {
            Role::Buyer => bids.push(value),
            Role::Seller => asks.push(value),
        }
    }
    match user.role {
        Role::Buyer => bids.push(f64::INFINITY),
        Role::Seller => asks.push(0.0),
    }
    let r = mcafee(&bids, &asks);
    if !r.traded {
        return Counterfactual::Safe;
    }
    let price = match user.role {
        Role::Buyer => r.buyer_price,
        Role::Seller => r.seller_price,
    };
    if price.is_finite() {
        Counterfactual::Price(price)
    } else {
        Counterfactual::Safe
    }
}

/// Prices a newly reported user against the market window
/// W = [d̂ − K, â − 1] (periods before 0 dropped), returning her admission
/// price q on the extended reals: a winning buyer later pays at least q, a
/// winning seller receives at most q, and a matched pair whose capped
/// payment would leave a member's own report dissolves instead of trading.
///
/// An empty window — exactly the patience-equals-K case — leaves her
/// unconstrained: a full-patience report is only reachable by a truly
/// full-patience user, because every reported period must carry a group
/// and groups cannot be invented past the true departure. Otherwise q is
/// the worst counterfactual price over the window: the maximum for a buyer,
/// the minimum for a seller. Since d̂ cannot exceed the true departure,
/// delaying arrival only widens the window; every market the user walked
/// past enters q and takes back what the delay would have saved.
pub fn admission_price(user: &ReportedType, markets: &MarketHistory, max_patience: u32) -> f64 {
    let unconstrained = match user.role {
        Role::Buyer => f64::NEG_INFINITY,
        Role::Seller => f64::INFINITY,
    };
    let start = user.departure.saturating_sub(max_patience);
    let mut q = unconstrained;
    for t in start..user.arrival {
        match counterfactual_payment(user, markets.as_of(t)) {
            Counterfactual::Price(p) => {
                q = match user.role {
                    Role::Buyer => q.max(p),
                    Role::Seller => q.min(p),
                };
            }
            Counterfactual::Safe => {}
        }
    }
    q
}

/// Runs the full dynamic auction over the instance. `reports` overrides
/// individual users' reported types (defaulting each to her truthful type);
/// total gains from trade are always computed from TRUE values.
pub fn run_mchain(
    instance: &ProblemInstance,
    reports: Option<&BTreeMap<UserId, ReportedType>>,
    cfg: &VmConfig,
) -> Result<AuctionOutcome, EngineError> {
    let problems = instance.validate();
    if !problems.is_empty() {
        return Err(EngineError::InvalidInstance(problems.join("; ")));
    }

    let reported: BTreeMap<UserId, ReportedType> = instance
        .users
        .iter()
        .map(|u| {
            let r = reports
                .and_then(|m| m.get(&u.id).cloned())
                .unwrap_or_else(|| ReportedType::truthful(u));
            (u.id, r)
        })
        .collect();

    let t_max = reported
        .values()
        .map(|r| r.departure)
        .max()
        .map_or(instance.horizon, |d| d.max(instance.horizon));

    let mut active: BTreeMap<UserId, ReportedType> = BTreeMap::new();
    let mut admission_prices: BTreeMap<UserId, f64> = BTreeMap::new();
    let mut markets = MarketHistory::default();
    let mut outcome = AuctionOutcome::default();

    for t in 0..=t_max {
        // Price the period's arrivals against the markets seen so far.
        // Everyone joins the pool; q binds later, at payment time.
        for r in reported.values().filter(|r| r.arrival == t) {
            let q = admission_price(r, &markets, instance.max_patience);
            markets.record(r.role, r.value);
            active.insert(r.id, r.clone());
            let unconstrained = match r.role {
                Role::Buyer => f64::NEG_INFINITY,
                Role::Seller => f64::INFINITY,
            };
            if q != unconstrained {
                admission_prices.insert(r.id, q);
            }
        }

        let buyers: Vec<ReportedType> = active
            .values()
            .filter(|u| u.role == Role::Buyer)
            .cloned()
            .collect();
        let sellers: Vec<ReportedType> = active
            .values()
            .filter(|u| u.role == Role::Seller)
            .cloned()
            .collect();

        // Reported group structure restricted to this period's actives.
        let mut by_group: BTreeMap<GroupId, BTreeSet<UserId>> = BTreeMap::new();
        for u in active.values() {
            if let Some(gs) = u.groups_at(t) {
                for &g in gs {
                    by_group.entry(g).or_default().insert(u.id);
                }
            }
        }
        let groups: Vec<BTreeSet<UserId>> = by_group.into_values().collect();

        let period = vm_match(t, &buyers, &sellers, &groups, &admission_prices, cfg);
        if period.heuristic_fallback {
            outcome.heuristic_fallback_periods.push(t);
        }

        for trade in &period.trades {
            let true_b = instance.user(trade.buyer).expect("buyer exists").value;
            let true_s = instance.user(trade.seller).expect("seller exists").value;
            outcome.total_value += true_b - true_s;
            for (id, payment) in [
                (trade.buyer, trade.buyer_payment),
                (trade.seller, trade.seller_payment),
            ] {
                let u = active.remove(&id).expect("winner was active");
                outcome.history.entry(t).or_default().push(HistoryEntry {
                    id,
                    role: u.role,
                    reported_value: u.value,
                    state: FinalState::Winning,
                    payment: Some(payment),
                });
                outcome
                    .lifecycle
                    .entry(id)
                    .or_default()
                    .insert(t, LifecycleState::Winning);
            }
            outcome.trades.push(trade.clone());
        }

        // Losers survive only while safe-to-not-trade and not yet departing.
        let active_b: BTreeSet<UserId> = buyers.iter().map(|u| u.id).collect();
        let active_s: BTreeSet<UserId> = sellers.iter().map(|u| u.id).collect();
        let safe = snt(&active_b, &active_s);
        let losers: Vec<UserId> = active.keys().copied().collect();
        for id in losers {
            let u = &active[&id];
            if safe.contains(&id) && u.departure > t {
                outcome
                    .lifecycle
                    .entry(id)
                    .or_default()
                    .insert(t, LifecycleState::Survived);
            } else {
                outcome.history.entry(t).or_default().push(HistoryEntry {
                    id,
                    role: u.role,
                    reported_value: u.value,
                    state: FinalState::PricedOut,
                    payment: None,
                });
                outcome
                    .lifecycle
                    .entry(id)
                    .or_default()
                    .insert(t, LifecycleState::PricedOut);
                active.remove(&id);
                admission_prices.remove(&id);
            }
        }
        markets.seal(t);
    }

    debug_assert!(active.is_empty(), "every user is finalized by max departure");
    Ok(outcome)
}
