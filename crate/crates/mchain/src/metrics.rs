//! Efficiency metrics, seed aggregation, the non-truthful sequential
//! per-group baseline, and the truthfulness fuzzer.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::engine::run_mchain;
use crate::mcafee::mcafee;
use crate::model::{
    utility, AuctionOutcome, FinalState, GroupId, HistoryEntry, LifecycleState, Period,
    ProblemInstance, ReportedType, Role, Trade, UserId, UserType, EPSILON,
};
use crate::vm::VmConfig;

/// Normalized allocative efficiency V_mechanism / V_opt; undefined when the
/// offline optimum is zero.
pub fn efficiency(v_mechanism: f64, v_opt: f64) -> Option<f64> {
    if v_opt == 0.0 {
        None
    } else {
        Some(v_mechanism / v_opt)
    }
}

/// Price of truthfulness (V_g − V_mChain) / V_opt; undefined when V_opt = 0.
pub fn truthfulness_loss(v_g: f64, v_mchain: f64, v_opt: f64) -> Option<f64> {
    if v_opt == 0.0 {
        None
    } else {
        Some((v_g - v_mchain) / v_opt)
    }
}

/// One simulation run's raw values plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub mean_interarrival: f64,
    pub volatility: f64,
    pub groups_per_user: u32,
    pub v_mchain: f64,
    pub v_opt: f64,
    pub v_g: f64,
}

impl RunMetrics {
    pub fn efficiency(&self) -> Option<f64> {
        efficiency(self.v_mchain, self.v_opt)
    }

    pub fn loss(&self) -> Option<f64> {
        truthfulness_loss(self.v_g, self.v_mchain, self.v_opt)
    }
}

/// Per-cell aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mean_interarrival: f64,
    pub volatility: f64,
    pub groups_per_user: u32,
    pub runs: usize,
    pub mean_e: Option<f64>,
    pub std_e: Option<f64>,
    pub mean_l: Option<f64>,
    pub std_l: Option<f64>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Groups runs by parameter cell (interarrival, γ, ℓ) and reports mean and
/// standard deviation of E and L over the seeds of each cell. Runs with
/// V_opt = 0 contribute no E/L sample.
pub fn aggregate(metrics: &[RunMetrics]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(u64, u64, u32), Vec<&RunMetrics>> = BTreeMap::new();
    for m in metrics {
        cells
            .entry((m.mean_interarrival.to_bits(), m.volatility.to_bits(), m.groups_per_user))
            .or_default()
            .push(m);
    }
    cells
        .into_values()
        .map(|runs| {
            let es: Vec<f64> = runs.iter().filter_map(|m| m.efficiency()).collect();
            let ls: Vec<f64> = runs.iter().filter_map(|m| m.loss()).collect();
            let (mean_e, std_e) = mean_std(&es);
            let (mean_l, std_l) = mean_std(&ls);
            CellSummary {
                mean_interarrival: runs[0].mean_interarrival,
                volatility: runs[0].volatility,
                groups_per_user: runs[0].groups_per_user,
                runs: runs.len(),
                mean_e,
                std_e,
                mean_l,
                std_l,
            }
        })
        .collect()
}

/// The mechanisms the fuzzer can attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    MChain,
    /// Clears each group with its own McAfee auction, groups visited in id
    /// order; winners exit, losers stay for later groups and periods. Not
    /// truthful: hiding a group can reroute a user to a cheaper market.
    PerGroupMcafeeSequential,
}

/// Runs the sequential per-group McAfee baseline over reported types.
pub fn per_group_mcafee_sequential(
    instance: &ProblemInstance,
    reports: Option<&BTreeMap<UserId, ReportedType>>,
) -> AuctionOutcome {
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

    let mut outcome = AuctionOutcome::default();
    let mut matched: BTreeSet<UserId> = BTreeSet::new();
    for t in 0..=t_max {
        // Reported group structure of this period.
        let mut by_group: BTreeMap<GroupId, Vec<&ReportedType>> = BTreeMap::new();
        for r in reported.values() {
            if matched.contains(&r.id) || t < r.arrival || t > r.departure {
                continue;
            }
            if let Some(gs) = r.groups_at(t) {
                for &g in gs {
                    by_group.entry(g).or_default().push(r);
                }
            }
        }
        for (_, members) in by_group {
            let buyers: Vec<&ReportedType> = members
                .iter()
                .filter(|r| r.role == Role::Buyer && !matched.contains(&r.id))
                .copied()
                .collect();
            let sellers: Vec<&ReportedType> = members
                .iter()
                .filter(|r| r.role == Role::Seller && !matched.contains(&r.id))
                .copied()
                .collect();
            let bids: Vec<f64> = buyers.iter().map(|r| r.value).collect();
            let asks: Vec<f64> = sellers.iter().map(|r| r.value).collect();
            let r = mcafee(&bids, &asks);
            for (&bi, &si) in r.winning_bids.iter().zip(&r.winning_asks) {
                let b = buyers[bi].id;
                let s = sellers[si].id;
                matched.insert(b);
                matched.insert(s);
                outcome.total_value += instance.user(b).map_or(0.0, |u| u.value)
                    - instance.user(s).map_or(0.0, |u| u.value);
                outcome.trades.push(Trade {
                    buyer: b,
                    seller: s,
                    period: t,
                    buyer_payment: r.buyer_price,
                    seller_payment: r.seller_price,
                });
                for (id, role, value, payment) in [
                    (b, Role::Buyer, bids[bi], r.buyer_price),
                    (s, Role::Seller, asks[si], r.seller_price),
                ] {
                    outcome.history.entry(t).or_default().push(HistoryEntry {
                        id,
                        role,
                        reported_value: value,
                        state: FinalState::Winning,
                        payment: Some(payment),
                    });
                    outcome
                        .lifecycle
                        .entry(id)
                        .or_default()
                        .insert(t, LifecycleState::Winning);
                }
            }
        }
    }
    outcome
}

/// Runs the chosen mechanism under the given reports.
pub fn run_mechanism(
    mechanism: Mechanism,
    instance: &ProblemInstance,
    reports: Option<&BTreeMap<UserId, ReportedType>>,
    cfg: &VmConfig,
) -> AuctionOutcome {
    match mechanism {
        Mechanism::MChain => run_mchain(instance, reports, cfg).expect("valid fuzz instance"),
        Mechanism::PerGroupMcafeeSequential => per_group_mcafee_sequential(instance, reports),
    }
}

/// One single-user misreport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manipulation {
    pub target: UserId,
    pub kind: ManipulationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManipulationKind {
    /// Arrive δ ≥ 1 periods later than the truth.
    LaterArrival { delta: u32 },
    /// Report a different departure within [arrival, arrival + K].
    Departure { departure: Period },
    /// Report a different value.
    Value { value: f64 },
    /// Report per-period subsets of the true groups.
    GroupSubset {
        groups: BTreeMap<Period, BTreeSet<GroupId>>,
    },
}

/// Builds the manipulated report, or None when the manipulation is
/// physically impossible for this user: arrival pushed past departure, a
/// departure claimed beyond the true stay (no group evidence exists there),
/// or a group subset that empties a present period.
pub fn apply_manipulation(
    truth: &UserType,
    kind: &ManipulationKind,
    max_patience: u32,
) -> Option<ReportedType> {
    let mut r = ReportedType::truthful(truth);
    match kind {
        ManipulationKind::LaterArrival { delta } => {
            if *delta == 0 {
                return None;
            }
            let arrival = truth.arrival + delta;
            if arrival > truth.departure {
                return None;
            }
            r.arrival = arrival;
            r.groups.retain(|&t, _| t >= arrival);
        }
        ManipulationKind::Departure { departure } => {
            if *departure == truth.departure {
                return None;
            }
            r.departure = *departure;
            r.groups.retain(|&t, _| t <= *departure);
        }
        ManipulationKind::Value { value } => {
            if (*value - truth.value).abs() < EPSILON {
                return None;
            }
            r.value = *value;
        }
        ManipulationKind::GroupSubset { groups } => {
            if groups == &r.groups {
                return None;
            }
            r.groups = groups.clone();
        }
    }
    if r.validate_against(truth, max_patience).is_empty() {
        Some(r)
    } else {
        None
    }
}

/// Every candidate manipulation for `target`: all later arrivals, all
/// alternative departures, the 17-point geometric value grid from 0.25× to
/// 4× plus probes just below/at/above each observed clearing price, and —
/// when `exhaustive_groups` — every per-period group-subset combination.
pub fn candidate_manipulations(
    target: &UserType,
    max_patience: u32,
    observed_prices: &[f64],
    exhaustive_groups: bool,
) -> Vec<ManipulationKind> {
    let mut out = Vec::new();
    for delta in 1..=target.departure.saturating_sub(target.arrival) {
        out.push(ManipulationKind::LaterArrival { delta });
    }
    for d in target.arrival..=target.arrival + max_patience {
        if d != target.departure {
            out.push(ManipulationKind::Departure { departure: d });
        }
    }
    for i in 0..17 {
        // Geometric grid: 0.25 · 16^(i/16) spans 0.25× to 4×.
        let factor = 0.25 * 16f64.powf(i as f64 / 16.0);
        out.push(ManipulationKind::Value {
            value: target.value * factor,
        });
    }
    for &p in observed_prices {
        for probe in [p - 1e-6, p, p + 1e-6] {
            if probe > 0.0 {
                out.push(ManipulationKind::Value { value: probe });
            }
        }
    }

    // Group subsets: per-period power sets, combined across periods.
    let periods: Vec<Period> = target.groups.keys().copied().collect();
    // Nonempty subsets only: a present user is always in at least one group.
    let subsets_of = |gs: &BTreeSet<GroupId>| -> Vec<BTreeSet<GroupId>> {
        let items: Vec<GroupId> = gs.iter().copied().collect();
        (1..(1u32 << items.len()))
            .map(|mask| {
                items
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &g)| g)
                    .collect()
            })
            .collect()
    };
    if exhaustive_groups {
        let mut combos: Vec<BTreeMap<Period, BTreeSet<GroupId>>> = vec![BTreeMap::new()];
        for &t in &periods {
            let subsets = subsets_of(&target.groups[&t]);
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    subsets.iter().map(move |s| {
                        let mut c = c.clone();
                        c.insert(t, s.clone());
                        c
                    })
                })
                .collect();
            if combos.len() > 8192 {
                break;
            }
        }
        for groups in combos {
            out.push(ManipulationKind::GroupSubset { groups });
        }
    } else if !periods.is_empty() {
        // A light default: at each period with several groups, hide each
        // single group, and keep-only-one; plus dropping the first group
        // everywhere it is not the last one standing.
        for &t in &periods {
            let real = &target.groups[&t];
            if real.len() < 2 {
                continue;
            }
            for &g in real {
                let mut hidden = target.groups.clone();
                hidden.get_mut(&t).unwrap().remove(&g);
                out.push(ManipulationKind::GroupSubset { groups: hidden });
                let mut only: BTreeMap<Period, BTreeSet<GroupId>> = target.groups.clone();
                only.insert(t, [g].into_iter().collect());
                out.push(ManipulationKind::GroupSubset { groups: only });
            }
        }
        if let Some(&g) = target.groups[&periods[0]].iter().next() {
            let mut groups = target.groups.clone();
            for gs in groups.values_mut() {
                if gs.len() >= 2 {
                    gs.remove(&g);
                }
            }
            out.push(ManipulationKind::GroupSubset { groups });
        }
    }
    out
}

/// All distinct clearing prices of a truthful run, for boundary probing.
pub fn observed_prices(outcome: &AuctionOutcome) -> Vec<f64> {
    let mut ps: Vec<f64> = outcome
        .trades
        .iter()
        .flat_map(|t| [t.buyer_payment, t.seller_payment])
        .collect();
    ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ps.dedup();
    ps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub instance_digest: u64,
    pub manipulation: Manipulation,
    pub utility_truth: f64,
    pub utility_lie: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub mechanism: Mechanism,
    pub trials: u64,
    /// Total (manipulation, instance) utility comparisons performed.
    pub comparisons: u64,
    pub violations: Vec<Violation>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Samples a small instance: ≤ 8 users, ≤ 4 periods, ≤ 3 groups.
pub fn sample_fuzz_instance<R: Rng>(rng: &mut R) -> ProblemInstance {
    let n_users = rng.random_range(2..=8usize);
    let horizon: Period = rng.random_range(0..=3);
    let max_patience: u32 = rng.random_range(0..=3);
    let num_groups: u32 = rng.random_range(1..=3);
    let mut users = Vec::with_capacity(n_users);
    for i in 0..n_users {
        let arrival = rng.random_range(0..=horizon);
        let departure = arrival + rng.random_range(0..=max_patience);
        let role = if rng.random::<bool>() {
            Role::Buyer
        } else {
            Role::Seller
        };
        let value = rng.random_range(1.0..=20.0f64);
        let mut groups: BTreeMap<Period, BTreeSet<GroupId>> = BTreeMap::new();
        for t in arrival..=departure {
            let mut gs = BTreeSet::new();
            for g in 0..num_groups {
                if rng.random::<bool>() {
                    gs.insert(g);
                }
            }
            if gs.is_empty() {
                gs.insert(rng.random_range(0..num_groups));
            }
            groups.insert(t, gs);
        }
        users.push(UserType {
            id: UserId(i as u64 + 1),
            role,
            value,
            arrival,
            departure,
            groups,
        });
    }
    ProblemInstance {
        users,
        horizon,
        max_patience,
    }
}

/// Checks one manipulation: returns the violation if lying beats truth.
pub fn check_manipulation(
    mechanism: Mechanism,
    instance: &ProblemInstance,
    truth_outcome: &AuctionOutcome,
    manipulation: &Manipulation,
    cfg: &VmConfig,
) -> Option<Violation> {
    let target = instance.user(manipulation.target)?;
    let report = apply_manipulation(target, &manipulation.kind, instance.max_patience)?;
    let mut reports = BTreeMap::new();
    reports.insert(target.id, report);
    let lie_outcome = run_mechanism(mechanism, instance, Some(&reports), cfg);
    let u_truth = utility(target, truth_outcome);
    let u_lie = utility(target, &lie_outcome);
    if u_lie > u_truth + EPSILON {
        Some(Violation {
            instance_digest: fnv1a(instance.to_json().as_bytes()),
            manipulation: manipulation.clone(),
            utility_truth: u_truth,
            utility_lie: u_lie,
        })
    } else {
        None
    }
}

/// Tries every candidate manipulation of every user on one instance.
/// Returns all violations found and the number of comparisons made.
pub fn exhaustive_deviation_search(
    mechanism: Mechanism,
    instance: &ProblemInstance,
    cfg: &VmConfig,
) -> (Vec<Violation>, u64) {
    let truth_outcome = run_mechanism(mechanism, instance, None, cfg);
    let prices = observed_prices(&truth_outcome);
    let mut violations = Vec::new();
    let mut comparisons = 0;
    for u in &instance.users {
        for kind in candidate_manipulations(u, instance.max_patience, &prices, true) {
            let m = Manipulation {
                target: u.id,
                kind,
            };
            comparisons += 1;
            if let Some(v) = check_manipulation(mechanism, instance, &truth_outcome, &m, cfg) {
                violations.push(v);
            }
        }
    }
    (violations, comparisons)
}

/// Fuzzes the mechanism: each trial samples an instance, a target user and
/// one random manipulation, and compares utilities under truth and lie.
pub fn fuzz_truthfulness(
    mechanism: Mechanism,
    trials: u64,
    seed: u64,
    cfg: &VmConfig,
) -> FuzzReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut report = FuzzReport {
        mechanism,
        trials,
        comparisons: 0,
        violations: Vec::new(),
    };
    for _ in 0..trials {
        let instance = sample_fuzz_instance(&mut rng);
        let truth_outcome = run_mechanism(mechanism, &instance, None, cfg);
        let prices = observed_prices(&truth_outcome);
        let target = &instance.users[rng.random_range(0..instance.users.len())];
        let candidates = candidate_manipulations(target, instance.max_patience, &prices, false);
        if candidates.is_empty() {
            continue;
        }
        let kind = candidates[rng.random_range(0..candidates.len())].clone();
        let m = Manipulation {
            target: target.id,
            kind,
        };
        report.comparisons += 1;
        if let Some(v) = check_manipulation(mechanism, &instance, &truth_outcome, &m, cfg) {
            report.violations.push(v);
        }
    }
    report
}

/// The two-group market of the motivating example: buyers b1..b4 (12, 10,
/// 2, 1) and sellers s1..s5 (1, 1, 4, 3, 5); group 1 holds {b1, b2, b3,
/// s1, s3} and group 2 holds everyone but s1 and s3.
pub fn two_group_example() -> ProblemInstance {
    let mk = |id: u64, role, value: f64, gs: &[GroupId]| UserType {
        id: UserId(id),
        role,
        value,
        arrival: 0,
        departure: 0,
        groups: [(0, gs.iter().copied().collect())].into_iter().collect(),
    };
    ProblemInstance {
        users: vec![
            mk(1, Role::Buyer, 12.0, &[1, 2]),
            mk(2, Role::Buyer, 10.0, &[1, 2]),
            mk(3, Role::Buyer, 2.0, &[1, 2]),
            mk(4, Role::Buyer, 1.0, &[2]),
            mk(5, Role::Seller, 1.0, &[1]),
            mk(6, Role::Seller, 1.0, &[2]),
            mk(7, Role::Seller, 4.0, &[1]),
            mk(8, Role::Seller, 3.0, &[2]),
            mk(9, Role::Seller, 5.0, &[2]),
        ],
        horizon: 0,
        max_patience: 0,
    }
}
