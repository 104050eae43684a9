//! Virtual Market single-period matching rule: pool every group into one
//! market, select candidates and uniform prices with the McAfee auction,
//! pick winners with Group Matching, then finalize per-user payments
//! against admission prices.

use std::collections::{BTreeMap, BTreeSet};

use crate::matching::{group_match, group_match_heuristic, MatchingError, DEFAULT_ENUMERATION_CAP};
use crate::mcafee::mcafee;
use crate::model::{Period, ReportedType, Role, Trade, UserId, EPSILON};

#[derive(Debug, Clone)]
pub struct VmConfig {
    /// Maximum number of maximum matchings to enumerate exactly before the
    /// degree-greedy heuristic takes over.
    pub enumeration_cap: usize,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig {
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// Outcome of one period of the Virtual Market rule.
#[derive(Debug, Clone)]
pub struct PeriodResult {
    pub trades: Vec<Trade>,
    pub candidate_buyers: BTreeSet<UserId>,
    pub candidate_sellers: BTreeSet<UserId>,
    pub winning_buyers: BTreeSet<UserId>,
    pub winning_sellers: BTreeSet<UserId>,
    /// Uniform McAfee prices; NaN when the auction did not trade.
    pub buyer_price: f64,
    pub seller_price: f64,
    /// True when matching-enumeration exceeded the cap and the heuristic
    /// decided the winners instead.
    pub heuristic_fallback: bool,
}

impl PeriodResult {
    fn empty() -> Self {
        PeriodResult {
            trades: Vec::new(),
            candidate_buyers: BTreeSet::new(),
            candidate_sellers: BTreeSet::new(),
            winning_buyers: BTreeSet::new(),
            winning_sellers: BTreeSet::new(),
            buyer_price: f64::NAN,
            seller_price: f64::NAN,
            heuristic_fallback: false,
        }
    }
}

/// Runs the Virtual Market rule for one period.
///
/// `admission_prices` maps each active user to her admission price q;
/// missing entries mean the unconstrained price (−∞ for buyers, +∞ for
/// sellers). A winning buyer pays max{McAfee price, q_i}; a winning seller
/// receives min{McAfee price, q_j}. Admission prices enter only at payment
/// finalization, never at candidate selection or matching; a matched pair
/// whose capped payment would leave a member's own report dissolves
/// instead of trading.
pub fn vm_match(
    period: Period,
    active_b: &[ReportedType],
    active_s: &[ReportedType],
    groups: &[BTreeSet<UserId>],
    admission_prices: &BTreeMap<UserId, f64>,
    cfg: &VmConfig,
) -> PeriodResult {
    debug_assert!(active_b.iter().all(|u| u.role == Role::Buyer));
    debug_assert!(active_s.iter().all(|u| u.role == Role::Seller));

    // Deterministic pooling order regardless of caller ordering.
    let mut buyers: Vec<&ReportedType> = active_b.iter().collect();
    let mut sellers: Vec<&ReportedType> = active_s.iter().collect();
    buyers.sort_by_key(|u| u.id);
    sellers.sort_by_key(|u| u.id);

    let bids: Vec<f64> = buyers.iter().map(|u| u.value).collect();
    let asks: Vec<f64> = sellers.iter().map(|u| u.value).collect();
    let auction = mcafee(&bids, &asks);
    if !auction.traded {
        return PeriodResult::empty();
    }

    // Every McAfee winner is a candidate; admission prices play no part in
    // selecting or matching them, so no user's admission price can reshape
    // anyone else's market.
    let candidate_buyers: BTreeSet<UserId> =
        auction.winning_bids.iter().map(|&i| buyers[i].id).collect();
    let candidate_sellers: BTreeSet<UserId> =
        auction.winning_asks.iter().map(|&j| sellers[j].id).collect();

    let value_of = |id: UserId| -> f64 {
        buyers
            .iter()
            .chain(sellers.iter())
            .find(|u| u.id == id)
            .expect("winner is an active user")
            .value
    };

    let (selection, heuristic_fallback) =
        match group_match(&candidate_buyers, &candidate_sellers, groups, cfg.enumeration_cap) {
            Ok(r) => (r, false),
            Err(MatchingError::EnumerationCapExceeded(_)) => (
                group_match_heuristic(&candidate_buyers, &candidate_sellers, groups),
                true,
            ),
        };

    // A matched pair whose q-capped payment would leave a member's own
    // report dissolves: neither side trades this period. Dissolution
    // happens after matching on purpose — it removes only the pair itself
    // and leaves every other pair exactly as matched.
    let mut trades = Vec::new();
    let mut winning_buyers = BTreeSet::new();
    let mut winning_sellers = BTreeSet::new();
    for &(b, s) in &selection.pairs {
        let q_b = admission_prices.get(&b).copied().unwrap_or(f64::NEG_INFINITY);
        let q_s = admission_prices.get(&s).copied().unwrap_or(f64::INFINITY);
        let buyer_payment = auction.buyer_price.max(q_b);
        let seller_payment = auction.seller_price.min(q_s);
        if buyer_payment > value_of(b) + EPSILON || seller_payment < value_of(s) - EPSILON {
            continue;
        }
        winning_buyers.insert(b);
        winning_sellers.insert(s);
        trades.push(Trade {
            buyer: b,
            seller: s,
            period,
            buyer_payment,
            seller_payment,
        });
    }

    PeriodResult {
        trades,
        candidate_buyers,
        candidate_sellers,
        winning_buyers,
        winning_sellers,
        buyer_price: auction.buyer_price,
        seller_price: auction.seller_price,
        heuristic_fallback,
    }
}
