//! Brute-force reference implementations used to cross-check the library's
//! algorithms. Deliberately written with different techniques than the
//! production code: plain recursion over buyers instead of augmenting
//! paths, and a bitmask DP instead of the Hungarian algorithm.

use std::collections::BTreeSet;

use mchain::matching::{BipartiteGraph, Matching};
use mchain::model::{ProblemInstance, Role, UserId};

/// Every maximum-cardinality matching, by trying each buyer against every
/// free adjacent seller (or leaving her unmatched) and keeping the largest.
pub fn brute_force_max_matchings(graph: &BipartiteGraph) -> Vec<Matching> {
    fn recurse(
        buyers: &[UserId],
        i: usize,
        edges: &BTreeSet<(UserId, UserId)>,
        sellers: &[UserId],
        used: &mut BTreeSet<UserId>,
        current: &mut Matching,
        out: &mut BTreeSet<Matching>,
    ) {
        if i == buyers.len() {
            out.insert(current.clone());
            return;
        }
        let b = buyers[i];
        recurse(buyers, i + 1, edges, sellers, used, current, out);
        for &s in sellers {
            if !used.contains(&s) && edges.contains(&(b, s)) {
                used.insert(s);
                current.insert((b, s));
                recurse(buyers, i + 1, edges, sellers, used, current, out);
                current.remove(&(b, s));
                used.remove(&s);
            }
        }
    }

    let mut all = BTreeSet::new();
    recurse(
        &graph.buyers,
        0,
        &graph.edges,
        &graph.sellers,
        &mut BTreeSet::new(),
        &mut Matching::new(),
        &mut all,
    );
    let best = all.iter().map(|m| m.len()).max().unwrap_or(0);
    all.into_iter().filter(|m| m.len() == best).collect()
}

/// Exact offline optimum by bitmask DP over sellers; feasibility recomputed
/// from scratch (window overlap in both directions plus a shared group in
/// some period both attend).
pub fn brute_force_offline_optimal(instance: &ProblemInstance) -> f64 {
    let buyers: Vec<_> = instance
        .users
        .iter()
        .filter(|u| u.role == Role::Buyer)
        .collect();
    let sellers: Vec<_> = instance
        .users
        .iter()
        .filter(|u| u.role == Role::Seller)
        .collect();
    assert!(sellers.len() <= 16, "bitmask oracle limited to 16 sellers");

    let mut weight = vec![vec![None; sellers.len()]; buyers.len()];
    for (i, b) in buyers.iter().enumerate() {
        for (j, s) in sellers.iter().enumerate() {
            if b.arrival > s.departure || s.arrival > b.departure {
                continue;
            }
            let lo = b.arrival.max(s.arrival);
            let hi = b.departure.min(s.departure);
            let shared = (lo..=hi).any(|t| match (b.groups_at(t), s.groups_at(t)) {
                (Some(gb), Some(gs)) => gb.intersection(gs).next().is_some(),
                _ => false,
            });
            if shared {
                weight[i][j] = Some(b.value - s.value);
            }
        }
    }

    fn best(
        i: usize,
        used: u32,
        weight: &[Vec<Option<f64>>],
        memo: &mut std::collections::HashMap<(usize, u32), f64>,
    ) -> f64 {
        if i == weight.len() {
            return 0.0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut v = best(i + 1, used, weight, memo);
        for (j, w) in weight[i].iter().enumerate() {
            if let Some(w) = w {
                if used & (1 << j) == 0 && *w > 0.0 {
                    v = v.max(w + best(i + 1, used | (1 << j), weight, memo));
                }
            }
        }
        memo.insert((i, used), v);
        v
    }

    best(0, 0, &weight, &mut std::collections::HashMap::new())
}
