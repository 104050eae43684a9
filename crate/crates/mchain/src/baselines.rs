//! Offline optimal allocation (the efficiency yardstick) and the online
//! random-greedy baseline.

use std::collections::BTreeSet;

use ordered_float::OrderedFloat;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::model::{Period, ProblemInstance, Role, UserId};

/// A buyer-seller pair that could trade in some period: presence windows
/// overlap in both directions and some period puts them in a shared group.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasiblePair {
    pub buyer: UserId,
    pub seller: UserId,
    /// Gains from trade b − s; may be negative.
    pub weight: f64,
}

pub fn feasible_pairs(instance: &ProblemInstance) -> Vec<FeasiblePair> {
    let buyers: Vec<_> = instance.users.iter().filter(|u| u.role == Role::Buyer).collect();
    let sellers: Vec<_> = instance.users.iter().filter(|u| u.role == Role::Seller).collect();
    let mut pairs = Vec::new();
    for b in &buyers {
        for s in &sellers {
            if b.arrival > s.departure || s.arrival > b.departure {
                continue;
            }
            let overlap_start = b.arrival.max(s.arrival);
            let overlap_end = b.departure.min(s.departure);
            let shared = (overlap_start..=overlap_end).any(|t| {
                match (b.groups_at(t), s.groups_at(t)) {
                    (Some(gb), Some(gs)) => gb.intersection(gs).next().is_some(),
                    _ => false,
                }
            });
            if shared {
                pairs.push(FeasiblePair {
                    buyer: b.id,
                    seller: s.id,
                    weight: b.value - s.value,
                });
            }
        }
    }
    pairs
}

/// Exact offline optimum: the maximum total gains from trade over any set
/// of disjoint feasible pairs. Pairs with non-positive gains never help, so
/// this reduces to maximum-weight bipartite matching over the positive
/// pairs (solved with the Hungarian algorithm).
pub fn offline_optimal(instance: &ProblemInstance) -> (f64, Vec<(UserId, UserId)>) {
    let pairs: Vec<FeasiblePair> = feasible_pairs(instance)
        .into_iter()
        .filter(|p| p.weight > 0.0)
        .collect();
    if pairs.is_empty() {
        return (0.0, Vec::new());
    }

    let buyers: Vec<UserId> = pairs.iter().map(|p| p.buyer).collect::<BTreeSet<_>>().into_iter().collect();
    let sellers: Vec<UserId> = pairs.iter().map(|p| p.seller).collect::<BTreeSet<_>>().into_iter().collect();

    // The assignment solver wants a complete rows ≤ columns matrix; absent
    // pairs and dummy columns get weight 0, meaning "leave unmatched".
    let rows = buyers.len();
    let cols = sellers.len().max(rows);
    let mut weights = Matrix::new(rows, cols, OrderedFloat(0.0f64));
    for p in &pairs {
        let i = buyers.binary_search(&p.buyer).unwrap();
        let j = sellers.binary_search(&p.seller).unwrap();
        weights[(i, j)] = OrderedFloat(p.weight);
    }

    let (total, assignment) = kuhn_munkres(&weights);
    let mut matching = Vec::new();
    for (i, j) in assignment.into_iter().enumerate() {
        if weights[(i, j)].0 > 0.0 {
            matching.push((buyers[i], sellers[j]));
        }
    }
    (total.0, matching)
}

/// Greedy clearing of one group: sort bids descending and asks ascending,
/// pair rank by rank while the bid strictly exceeds the ask. Returns index
/// pairs into the input slices.
pub fn single_group_greedy(bids: &[f64], asks: &[f64]) -> Vec<(usize, usize)> {
    let mut bid_rank: Vec<usize> = (0..bids.len()).collect();
    bid_rank.sort_by(|&i, &j| bids[j].partial_cmp(&bids[i]).unwrap().then(i.cmp(&j)));
    let mut ask_rank: Vec<usize> = (0..asks.len()).collect();
    ask_rank.sort_by(|&i, &j| asks[i].partial_cmp(&asks[j]).unwrap().then(i.cmp(&j)));
    bid_rank
        .into_iter()
        .zip(ask_rank)
        .take_while(|&(i, j)| bids[i] > asks[j])
        .collect()
}

/// Online greedy baseline: each period visits the groups in a random order
/// and clears each with `single_group_greedy` over its not-yet-matched
/// members. Matched users leave; everyone else stays until departure.
/// Returns total gains from trade and the matched pairs per period.
pub fn random_greedy(
    instance: &ProblemInstance,
    seed: u64,
) -> (f64, Vec<(Period, UserId, UserId)>) {
    let schedule = instance.group_schedule();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut matched: BTreeSet<UserId> = BTreeSet::new();
    let mut total = 0.0;
    let mut trades = Vec::new();

    let periods: Vec<Period> = schedule.periods.keys().copied().collect();
    for t in periods {
        let mut groups = schedule.groups_at(t);
        groups.shuffle(&mut rng);
        for g in groups {
            let mut buyers = Vec::new();
            let mut sellers = Vec::new();
            for &id in &g {
                if matched.contains(&id) {
                    continue;
                }
                let u = instance.user(id).expect("group member exists");
                match u.role {
                    Role::Buyer => buyers.push((id, u.value)),
                    Role::Seller => sellers.push((id, u.value)),
                }
            }
            let bids: Vec<f64> = buyers.iter().map(|&(_, v)| v).collect();
            let asks: Vec<f64> = sellers.iter().map(|&(_, v)| v).collect();
            for (i, j) in single_group_greedy(&bids, &asks) {
                let (b, bv) = buyers[i];
                let (s, sv) = sellers[j];
                matched.insert(b);
                matched.insert(s);
                total += bv - sv;
                trades.push((t, b, s));
            }
        }
    }
    (total, trades)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UserType;
    use std::collections::BTreeMap;

    fn user(
        id: u64,
        role: Role,
        value: f64,
        a: Period,
        d: Period,
        groups: &[(Period, &[u32])],
    ) -> UserType {
        UserType {
            id: UserId(id),
            role,
            value,
            arrival: a,
            departure: d,
            groups: groups
                .iter()
                .map(|&(t, gs)| (t, gs.iter().copied().collect()))
                .collect(),
        }
    }

    /// Single-period toy market: buyers 1..5 (12,10,9,8,1), sellers 6..10
    /// (1,2,3,4,11), groups {2,3,6}, {1,7}, {4,8,9}, {5}, {10}.
    fn toy_instance() -> ProblemInstance {
        let g = |ids: &[u32]| -> Vec<(Period, Vec<u32>)> { vec![(0, ids.to_vec())] };
        let mk = |id: u64, role, v: f64, gs: Vec<(Period, Vec<u32>)>| UserType {
            id: UserId(id),
            role,
            value: v,
            arrival: 0,
            departure: 0,
            groups: gs
                .into_iter()
                .map(|(t, ids)| (t, ids.into_iter().collect()))
                .collect(),
        };
        ProblemInstance {
            users: vec![
                mk(1, Role::Buyer, 12.0, g(&[2])),
                mk(2, Role::Buyer, 10.0, g(&[1])),
                mk(3, Role::Buyer, 9.0, g(&[1])),
                mk(4, Role::Buyer, 8.0, g(&[3])),
                mk(5, Role::Buyer, 1.0, g(&[4])),
                mk(6, Role::Seller, 1.0, g(&[1])),
                mk(7, Role::Seller, 2.0, g(&[2])),
                mk(8, Role::Seller, 3.0, g(&[3])),
                mk(9, Role::Seller, 4.0, g(&[3])),
                mk(10, Role::Seller, 11.0, g(&[5])),
            ],
            horizon: 0,
            max_patience: 0,
        }
    }

    #[test]
    fn disjoint_windows_are_infeasible() {
        let instance = ProblemInstance {
            users: vec![
                user(1, Role::Buyer, 10.0, 1, 2, &[(1, &[1]), (2, &[1])]),
                user(2, Role::Seller, 1.0, 3, 4, &[(3, &[1]), (4, &[1])]),
            ],
            horizon: 4,
            max_patience: 1,
        };
        assert!(feasible_pairs(&instance).is_empty());
    }

    #[test]
    fn no_shared_group_is_infeasible() {
        let instance = ProblemInstance {
            users: vec![
                user(1, Role::Buyer, 10.0, 0, 1, &[(0, &[1]), (1, &[1])]),
                user(2, Role::Seller, 1.0, 0, 1, &[(0, &[2]), (1, &[2])]),
            ],
            horizon: 1,
            max_patience: 1,
        };
        assert!(feasible_pairs(&instance).is_empty());
    }

    #[test]
    fn toy_pairs_match_candidate_graph_edges() {
        let pairs = feasible_pairs(&toy_instance());
        let got: BTreeSet<(UserId, UserId)> =
            pairs.iter().map(|p| (p.buyer, p.seller)).collect();
        let want: BTreeSet<(UserId, UserId)> = [(2, 6), (3, 6), (1, 7), (4, 8), (4, 9)]
            .into_iter()
            .map(|(b, s)| (UserId(b), UserId(s)))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn optimum_of_two_disjoint_pairs() {
        let instance = ProblemInstance {
            users: vec![
                user(1, Role::Buyer, 12.0, 0, 0, &[(0, &[1])]),
                user(2, Role::Buyer, 10.0, 0, 0, &[(0, &[1])]),
                user(3, Role::Seller, 1.0, 0, 0, &[(0, &[1])]),
                user(4, Role::Seller, 1.0, 0, 0, &[(0, &[1])]),
            ],
            horizon: 0,
            max_patience: 0,
        };
        let (v, m) = offline_optimal(&instance);
        assert_eq!(v, 20.0);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn optimum_zero_without_positive_pairs() {
        let instance = ProblemInstance {
            users: vec![
                user(1, Role::Buyer, 1.0, 0, 0, &[(0, &[1])]),
                user(2, Role::Seller, 5.0, 0, 0, &[(0, &[1])]),
            ],
            horizon: 0,
            max_patience: 0,
        };
        let (v, m) = offline_optimal(&instance);
        assert_eq!(v, 0.0);
        assert!(m.is_empty());
    }

    #[test]
    fn optimum_picks_the_better_partner() {
        // One seller, two buyers: the optimum pairs the seller with the
        // higher bid.
        let instance = ProblemInstance {
            users: vec![
                user(1, Role::Buyer, 12.0, 0, 0, &[(0, &[1])]),
                user(2, Role::Buyer, 10.0, 0, 0, &[(0, &[1])]),
                user(3, Role::Seller, 1.0, 0, 0, &[(0, &[1])]),
            ],
            horizon: 0,
            max_patience: 0,
        };
        let (v, m) = offline_optimal(&instance);
        assert_eq!(v, 11.0);
        assert_eq!(m, vec![(UserId(1), UserId(3))]);
    }

    #[test]
    fn greedy_stops_at_first_unprofitable_rank() {
        let pairs = single_group_greedy(&[12.0, 10.0, 2.0], &[1.0, 3.0, 5.0]);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn greedy_boundary_cases() {
        assert!(single_group_greedy(&[1.0], &[5.0]).is_empty());
        // Strict inequality: equal values do not trade.
        assert!(single_group_greedy(&[4.0], &[4.0]).is_empty());
        assert!(single_group_greedy(&[], &[]).is_empty());
    }

    #[test]
    fn random_greedy_single_group_equals_plain_greedy() {
        let instance = ProblemInstance {
            users: vec![
                user(1, Role::Buyer, 12.0, 0, 0, &[(0, &[1])]),
                user(2, Role::Buyer, 10.0, 0, 0, &[(0, &[1])]),
                user(3, Role::Buyer, 2.0, 0, 0, &[(0, &[1])]),
                user(4, Role::Seller, 1.0, 0, 0, &[(0, &[1])]),
                user(5, Role::Seller, 3.0, 0, 0, &[(0, &[1])]),
                user(6, Role::Seller, 5.0, 0, 0, &[(0, &[1])]),
            ],
            horizon: 0,
            max_patience: 0,
        };
        let (v, trades) = random_greedy(&instance, 7);
        assert_eq!(v, (12.0 - 1.0) + (10.0 - 3.0));
        assert_eq!(trades.len(), 2);
    }

    #[test]
    fn random_greedy_is_deterministic_per_seed() {
        let instance = toy_instance();
        let a = random_greedy(&instance, 42);
        let b = random_greedy(&instance, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn random_greedy_never_exceeds_optimum() {
        let instance = toy_instance();
        let (v_opt, _) = offline_optimal(&instance);
        for seed in 0..20 {
            let (v_g, _) = random_greedy(&instance, seed);
            assert!(v_g <= v_opt + 1e-9);
        }
    }
}
