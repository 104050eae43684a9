//! Domain types shared by every other module: users, groups, periods,
//! problem instances, trades and auction outcomes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Absolute tolerance for payment/utility comparisons.
pub const EPSILON: f64 = 1e-9;

/// Discrete period index, starting at 0.
pub type Period = u32;

/// Group identifier, unique within one period.
pub type GroupId = u32;

/// Opaque user identifier, unique per instance. The total order on ids is
/// used for deterministic tie-breaking everywhere ties are otherwise
/// arbitrary.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Buyer,
    Seller,
}

/// A participant's type: role, value, presence window and per-period group
/// membership. The same shape is used for true types; see [`ReportedType`]
/// for what a user may claim instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserType {
    pub id: UserId,
    pub role: Role,
    /// True valuation: the bid for a buyer, the ask for a seller.
    pub value: f64,
    pub arrival: Period,
    pub departure: Period,
    /// Group ids the user is in, per period of her stay.
    /// Periods absent from the map mean "in no group that period".
    pub groups: BTreeMap<Period, BTreeSet<GroupId>>,
}

impl UserType {
    /// Stay duration `departure - arrival`.
    pub fn patience(&self) -> u32 {
        self.departure - self.arrival
    }

    pub fn present_at(&self, t: Period) -> bool {
        self.arrival <= t && t <= self.departure
    }

    pub fn groups_at(&self, t: Period) -> Option<&BTreeSet<GroupId>> {
        self.groups.get(&t)
    }
}

/// What a user claims about herself. Same fields as [`UserType`], but only
/// some deviations from the truth are physically possible: arrival can only
/// be delayed, and group membership can only shrink. Departure and value are
/// unconstrained relative to the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedType {
    pub id: UserId,
    pub role: Role,
    pub value: f64,
    pub arrival: Period,
    pub departure: Period,
    pub groups: BTreeMap<Period, BTreeSet<GroupId>>,
}

impl ReportedType {
    /// The truthful report for a user.
    pub fn truthful(user: &UserType) -> Self {
        ReportedType {
            id: user.id,
            role: user.role,
            value: user.value,
            arrival: user.arrival,
            departure: user.departure,
            groups: user.groups.clone(),
        }
    }

    pub fn patience(&self) -> u32 {
        self.departure - self.arrival
    }

    pub fn groups_at(&self, t: Period) -> Option<&BTreeSet<GroupId>> {
        self.groups.get(&t)
    }

    /// Checks that this report is a physically possible deviation from
    /// `truth`: arrival not earlier, groups per period a nonempty subset of
    /// the true ones on every reported period, window well formed and
    /// patience within `max_patience`.
    ///
    /// The nonempty-group requirement is what pins the reported window to
    /// reality: a present user always sits in at least one group (isolated
    /// users form singleton cliques), and she cannot invent membership in
    /// periods she never attended — so a reported departure past the true
    /// one is unreachable.
    pub fn validate_against(&self, truth: &UserType, max_patience: u32) -> Vec<String> {
        let mut v = Vec::new();
        if self.id != truth.id {
            v.push(format!("report id {} does not match user {}", self.id, truth.id));
        }
        if self.role != truth.role {
            v.push(format!("{}: role cannot be misreported", self.id));
        }
        if self.arrival < truth.arrival {
            v.push(format!("{}: reported arrival earlier than true arrival", self.id));
        }
        if self.arrival > self.departure {
            v.push(format!("{}: reported arrival after reported departure", self.id));
        }
        if self.arrival <= self.departure && self.departure - self.arrival > max_patience {
            v.push(format!("{}: reported patience exceeds K", self.id));
        }
        if self.value < 0.0 {
            v.push(format!("{}: negative reported value", self.id));
        }
        for (&t, gs) in &self.groups {
            if t < self.arrival || t > self.departure {
                v.push(format!("{}: reported groups outside reported window at t={t}", self.id));
            }
            let truth_gs = truth.groups_at(t);
            let ok = match truth_gs {
                Some(tg) => gs.is_subset(tg),
                None => gs.is_empty(),
            };
            if !ok {
                v.push(format!("{}: reported groups at t={t} not a subset of true groups", self.id));
            }
        }
        for t in self.arrival..=self.departure {
            if self.groups_at(t).map_or(true, |gs| gs.is_empty()) {
                v.push(format!("{}: no reported group at t={t} inside reported window", self.id));
            }
        }
        v
    }
}

/// The set of groups per period; each group is a set of user ids (a maximal
/// clique of the proximity graph). Derived from the users' membership maps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupSchedule {
    /// period -> group id -> members
    pub periods: BTreeMap<Period, BTreeMap<GroupId, BTreeSet<UserId>>>,
}

impl GroupSchedule {
    /// Groups at period `t` as member sets, ordered by group id.
    pub fn groups_at(&self, t: Period) -> Vec<BTreeSet<UserId>> {
        self.periods
            .get(&t)
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default()
    }
}

/// A full problem instance: the users (with true types), the horizon `T`
/// (maximum period index) and the maximum patience `K`. The group schedule
/// is derived from the users' membership maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub users: Vec<UserType>,
    pub horizon: Period,
    pub max_patience: u32,
}

impl ProblemInstance {
    pub fn user(&self, id: UserId) -> Option<&UserType> {
        self.users.iter().find(|u| u.id == id)
    }

    /// Inverts the per-user membership maps into the per-period group view.
    pub fn group_schedule(&self) -> GroupSchedule {
        let mut periods: BTreeMap<Period, BTreeMap<GroupId, BTreeSet<UserId>>> = BTreeMap::new();
        for u in &self.users {
            for (&t, gs) in &u.groups {
                let slot = periods.entry(t).or_default();
                for &g in gs {
                    slot.entry(g).or_default().insert(u.id);
                }
            }
        }
        GroupSchedule { periods }
    }

    /// Checks every instance invariant and returns all violations found.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut seen = BTreeSet::new();
        for u in &self.users {
            if !seen.insert(u.id) {
                v.push(format!("duplicate user id {}", u.id));
            }
            if u.arrival > u.departure {
                v.push(format!("{}: arrival after departure", u.id));
            } else if u.patience() > self.max_patience {
                v.push(format!(
                    "{}: patience {} exceeds K={}",
                    u.id,
                    u.patience(),
                    self.max_patience
                ));
            }
            if u.arrival > self.horizon {
                v.push(format!("{}: arrival past horizon T={}", u.id, self.horizon));
            }
            if u.value < 0.0 {
                v.push(format!("{}: negative value", u.id));
            }
            if u.role == Role::Buyer && u.value <= 0.0 {
                v.push(format!("{}: buyer value must be positive", u.id));
            }
            for &t in u.groups.keys() {
                if t < u.arrival || t > u.departure {
                    v.push(format!("{}: member absent, group membership at t={t} outside [{}, {}]", u.id, u.arrival, u.departure));
                }
            }
            // A present user always belongs to at least one group: isolated
            // users are singleton cliques of the proximity graph.
            if u.arrival <= u.departure {
                for t in u.arrival..=u.departure {
                    if u.groups_at(t).map_or(true, |gs| gs.is_empty()) {
                        v.push(format!("{}: present but in no group at t={t}", u.id));
                    }
                }
            }
        }
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// One matched buyer-seller pair with the period it traded in and both
/// payments (buyer pays the auctioneer, the auctioneer pays the seller).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub buyer: UserId,
    pub seller: UserId,
    pub period: Period,
    pub buyer_payment: f64,
    pub seller_payment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleState {
    /// Live in the market and unresolved (only possible when the horizon
    /// ends before the user's departure).
    Active,
    Winning,
    /// Lost this period but stays for the next one (in the SNT set).
    Survived,
    PricedOut,
    /// Past the user's final period (used when rendering full tables).
    Departed,
}

/// Terminal disposition of a user recorded in the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalState {
    Winning,
    PricedOut,
}

/// One row of the per-period history H(t): a user finalized (won or priced
/// out) at t, with the value she reported and her payment if she won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub id: UserId,
    pub role: Role,
    pub reported_value: f64,
    pub state: FinalState,
    pub payment: Option<f64>,
}

/// Full record of one auction run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub trades: Vec<Trade>,
    /// Per user, per period of her stay, the state she ended the period in.
    pub lifecycle: BTreeMap<UserId, BTreeMap<Period, LifecycleState>>,
    /// H(t): users finalized at t.
    pub history: BTreeMap<Period, Vec<HistoryEntry>>,
    /// Total gains from trade, recomputed from true values.
    pub total_value: f64,
    /// Periods where matching fell back to the degree-greedy heuristic
    /// because the enumeration cap was exceeded.
    pub heuristic_fallback_periods: Vec<Period>,
}

impl AuctionOutcome {
    pub fn winner_payment(&self, id: UserId) -> Option<f64> {
        self.trades.iter().find_map(|t| {
            if t.buyer == id {
                Some(t.buyer_payment)
            } else if t.seller == id {
                Some(t.seller_payment)
            } else {
                None
            }
        })
    }

    /// Renders the outcome as structured text: a trades table followed by a
    /// lifecycle table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# trades\n");
        out.push_str("period,buyer,seller,buyer_payment,seller_payment\n");
        for t in &self.trades {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.period, t.buyer.0, t.seller.0, t.buyer_payment, t.seller_payment
            ));
        }
        out.push_str("# lifecycle\n");
        out.push_str("user,period,state\n");
        for (id, states) in &self.lifecycle {
            for (t, s) in states {
                let s = match s {
                    LifecycleState::Active => "active",
                    LifecycleState::Winning => "winning",
                    LifecycleState::Survived => "survived",
                    LifecycleState::PricedOut => "priced_out",
                    LifecycleState::Departed => "departed",
                };
                out.push_str(&format!("{},{},{}\n", id.0, t, s));
            }
        }
        out.push_str(&format!("# total_value,{}\n", self.total_value));
        out
    }
}

/// Quasi-linear utility of `user` under `outcome`, always computed from the
/// user's TRUE value even when her report was manipulated.
pub fn utility(user: &UserType, outcome: &AuctionOutcome) -> f64 {
    match outcome.winner_payment(user.id) {
        Some(p) => match user.role {
            Role::Buyer => user.value - p,
            Role::Seller => p - user.value,
        },
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(id: u64, role: Role, value: f64, a: Period, d: Period) -> UserType {
        // One shared group across the whole stay keeps fixtures well formed.
        let groups = (a..=d).map(|t| (t, BTreeSet::from([0]))).collect();
        UserType {
            id: UserId(id),
            role,
            value,
            arrival: a,
            departure: d,
            groups,
        }
    }

    #[test]
    fn patience_same_period_stay() {
        assert_eq!(user(1, Role::Buyer, 1.0, 3, 3).patience(), 0);
    }

    #[test]
    fn patience_boundary_equals_k() {
        let u = user(1, Role::Buyer, 1.0, 2, 8);
        assert_eq!(u.patience(), 6);
        let inst = ProblemInstance {
            users: vec![u],
            horizon: 10,
            max_patience: 6,
        };
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn patience_exceeding_k_fails_validation() {
        let inst = ProblemInstance {
            users: vec![user(1, Role::Buyer, 1.0, 1, 9)],
            horizon: 10,
            max_patience: 6,
        };
        let v = inst.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("patience"), "{v:?}");
    }

    #[test]
    fn validate_member_absent() {
        let mut u = user(1, Role::Buyer, 1.0, 0, 2);
        u.groups.insert(3, BTreeSet::from([0]));
        let inst = ProblemInstance {
            users: vec![u],
            horizon: 5,
            max_patience: 6,
        };
        let v = inst.validate();
        assert!(v.iter().any(|m| m.contains("member absent")), "{v:?}");
    }

    #[test]
    fn validate_well_formed_two_users() {
        let mut b = user(1, Role::Buyer, 10.0, 0, 1);
        let mut s = user(2, Role::Seller, 2.0, 0, 1);
        b.groups.insert(0, BTreeSet::from([0]));
        s.groups.insert(0, BTreeSet::from([0]));
        let inst = ProblemInstance {
            users: vec![b, s],
            horizon: 1,
            max_patience: 6,
        };
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn utility_of_winning_buyer_and_seller() {
        let b = user(1, Role::Buyer, 10.0, 0, 0);
        let s = user(2, Role::Seller, 1.0, 0, 0);
        let outcome = AuctionOutcome {
            trades: vec![Trade {
                buyer: UserId(1),
                seller: UserId(2),
                period: 0,
                buyer_payment: 2.5,
                seller_payment: 4.0,
            }],
            ..Default::default()
        };
        assert_eq!(utility(&b, &outcome), 7.5);
        assert_eq!(utility(&s, &outcome), 3.0);
        let loser = user(3, Role::Buyer, 99.0, 0, 0);
        assert_eq!(utility(&loser, &outcome), 0.0);
    }

    #[test]
    fn instance_json_round_trip() {
        let mut b = user(1, Role::Buyer, 10.0, 0, 2);
        b.groups.insert(0, BTreeSet::from([0, 1]));
        let inst = ProblemInstance {
            users: vec![b],
            horizon: 2,
            max_patience: 6,
        };
        let back = ProblemInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn report_validation_catches_earlier_arrival_and_extra_groups() {
        let mut truth = user(1, Role::Buyer, 10.0, 2, 4);
        truth.groups.insert(2, BTreeSet::from([0]));
        let mut rep = ReportedType::truthful(&truth);
        rep.arrival = 1;
        assert!(!rep.validate_against(&truth, 6).is_empty());

        let mut rep = ReportedType::truthful(&truth);
        rep.groups.insert(2, BTreeSet::from([0, 1]));
        assert!(!rep.validate_against(&truth, 6).is_empty());

        let rep = ReportedType::truthful(&truth);
        assert!(rep.validate_against(&truth, 6).is_empty());
    }
}
