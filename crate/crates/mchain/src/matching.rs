//! Bipartite graph construction over candidate winners, enumeration of all
//! maximum matchings, the Group Matching selection rule, its degree-greedy
//! heuristic, and the weighted heterogeneous variant.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{UserId, EPSILON};

/// Default cap on the number of enumerated maximum matchings before the
/// engine falls back to the heuristic.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

/// A matching as a set of (buyer, seller) edges. `BTreeSet` ordering gives
/// the lexicographic comparison of sorted edge lists used for the final
/// deterministic tie-break.
pub type Matching = BTreeSet<(UserId, UserId)>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchingError {
    #[error("maximum-matching enumeration exceeded the cap of {0}")]
    EnumerationCapExceeded(usize),
}

/// Bipartite graph between candidate buyers and candidate sellers. An edge
/// means the two share at least one reported group this period.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub buyers: Vec<UserId>,
    pub sellers: Vec<UserId>,
    pub edges: BTreeSet<(UserId, UserId)>,
    /// Optional positive edge weights (quality of service).
    pub weights: Option<BTreeMap<(UserId, UserId), f64>>,
}

impl BipartiteGraph {
    pub fn degree(&self, id: UserId) -> usize {
        self.edges.iter().filter(|(b, s)| *b == id || *s == id).count()
    }
}

/// Selected winners: the chosen matching plus its two vertex sets.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Matching,
    pub winning_buyers: BTreeSet<UserId>,
    pub winning_sellers: BTreeSet<UserId>,
}

impl MatchResult {
    fn from_matching(pairs: Matching) -> Self {
        let winning_buyers = pairs.iter().map(|&(b, _)| b).collect();
        let winning_sellers = pairs.iter().map(|&(_, s)| s).collect();
        MatchResult {
            pairs,
            winning_buyers,
            winning_sellers,
        }
    }
}

/// Builds the candidate bipartite graph: edge (b, s) present iff some group
/// contains both.
pub fn build_bipartite(
    candidates_b: &BTreeSet<UserId>,
    candidates_s: &BTreeSet<UserId>,
    groups: &[BTreeSet<UserId>],
) -> BipartiteGraph {
    let mut edges = BTreeSet::new();
    for g in groups {
        for &b in candidates_b.iter().filter(|b| g.contains(b)) {
            for &s in candidates_s.iter().filter(|s| g.contains(s)) {
                edges.insert((b, s));
            }
        }
    }
    BipartiteGraph {
        buyers: candidates_b.iter().copied().collect(),
        sellers: candidates_s.iter().copied().collect(),
        edges,
        weights: None,
    }
}

/// Internal index-based view used by the enumerator.
struct IndexGraph {
    adj_b: Vec<BTreeSet<usize>>,
    adj_s: Vec<BTreeSet<usize>>,
}

impl IndexGraph {
    fn remove_edge(&mut self, b: usize, s: usize) {
        self.adj_b[b].remove(&s);
        self.adj_s[s].remove(&b);
    }

    fn insert_edge(&mut self, b: usize, s: usize) {
        self.adj_b[b].insert(s);
        self.adj_s[s].insert(b);
    }

    /// Detaches a vertex pair, returning the removed incident edges for
    /// later restoration.
    fn detach_pair(&mut self, b: usize, s: usize) -> Vec<(usize, usize)> {
        let mut removed = Vec::new();
        for t in self.adj_b[b].clone() {
            self.remove_edge(b, t);
            removed.push((b, t));
        }
        for u in self.adj_s[s].clone() {
            self.remove_edge(u, s);
            removed.push((u, s));
        }
        removed
    }
}

struct Enumerator {
    g: IndexGraph,
    match_b: Vec<Option<usize>>,
    match_s: Vec<Option<usize>>,
    forced: Vec<(usize, usize)>,
    out: Vec<Vec<(usize, usize)>>,
    cap: usize,
    overflow: bool,
}

impl Enumerator {
    /// Alternating DFS from an exposed buyer; augments on success.
    fn try_augment(&mut self, b: usize, used: &mut Vec<bool>) -> bool {
        if used[b] {
            return false;
        }
        used[b] = true;
        for &s in self.g.adj_b[b].clone().iter() {
            match self.match_s[s] {
                None => {
                    self.match_b[b] = Some(s);
                    self.match_s[s] = Some(b);
                    return true;
                }
                Some(b2) => {
                    if self.try_augment(b2, used) {
                        self.match_b[b] = Some(s);
                        self.match_s[s] = Some(b);
                        return true;
                    }
                }
            }
        }
        false
    }

}

/// Enumerates every maximum-cardinality matching of the graph exactly once,
/// in deterministic (lexicographic) order.
///
/// A graph with no edges has exactly one maximum matching: the empty one.
/// Returns an error when more than `cap` matchings exist.
pub fn enumerate_max_matchings(
    graph: &BipartiteGraph,
    cap: usize,
) -> Result<Vec<Matching>, MatchingError> {
    let nb = graph.buyers.len();
    let ns = graph.sellers.len();
    let b_index: BTreeMap<UserId, usize> =
        graph.buyers.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let s_index: BTreeMap<UserId, usize> =
        graph.sellers.iter().enumerate().map(|(i, &u)| (u, i)).collect();

    let mut g = IndexGraph {
        adj_b: vec![BTreeSet::new(); nb],
        adj_s: vec![BTreeSet::new(); ns],
    };
    for (b, s) in &graph.edges {
        g.insert_edge(b_index[b], s_index[s]);
    }

    // Initial maximum matching via repeated augmenting-path search.
    let mut en = Enumerator {
        g,
        match_b: vec![None; nb],
        match_s: vec![None; ns],
        forced: Vec::new(),
        out: Vec::new(),
        cap,
        overflow: false,
    };
    for b in 0..nb {
        let mut used = vec![false; nb];
        en.try_augment(b, &mut used);
    }

    enumerate_from(&mut en);
    if en.overflow {
        return Err(MatchingError::EnumerationCapExceeded(cap));
    }

    let mut result: Vec<Matching> = en
        .out
        .into_iter()
        .map(|pairs| {
            pairs
                .into_iter()
                .map(|(b, s)| (graph.buyers[b], graph.sellers[s]))
                .collect()
        })
        .collect();
    result.sort();
    Ok(result)
}

/// Branches on the smallest matched edge: either it is in the output
/// matching (endpoints removed) or it is excluded (edge removed and the
/// matching repaired by one augmenting-path search, pruning the branch if no
/// equal-size matching avoids the edge). Clone-on-branch matching state
/// keeps the backtracking straightforward.
fn enumerate_from(en: &mut Enumerator) {
    if en.overflow {
        return;
    }
    let e = en
        .match_b
        .iter()
        .enumerate()
        .find_map(|(b, s)| s.map(|s| (b, s)));
    let (b, s) = match e {
        Some(e) => e,
        None => {
            if en.out.len() >= en.cap {
                en.overflow = true;
            } else {
                en.out.push(en.forced.clone());
            }
            return;
        }
    };

    // Branch 1: matchings containing (b, s).
    let saved_mb = en.match_b.clone();
    let saved_ms = en.match_s.clone();
    en.match_b[b] = None;
    en.match_s[s] = None;
    let removed = en.g.detach_pair(b, s);
    en.forced.push((b, s));
    enumerate_from(en);
    en.forced.pop();
    for (u, v) in removed {
        en.g.insert_edge(u, v);
    }
    en.match_b = saved_mb.clone();
    en.match_s = saved_ms.clone();

    // Branch 2: matchings excluding (b, s). Repair with one augmenting-path
    // search; prune the branch if no equal-size matching avoids the edge.
    // The replacement path must touch a newly exposed endpoint, but it may
    // start at any exposed buyer (and end at s), so try them all.
    en.g.remove_edge(b, s);
    en.match_b[b] = None;
    en.match_s[s] = None;
    let exposed: Vec<usize> = (0..en.match_b.len())
        .filter(|&i| en.match_b[i].is_none())
        .collect();
    let repaired = exposed.into_iter().any(|eb| {
        let mut used = vec![false; en.match_b.len()];
        en.try_augment(eb, &mut used)
    });
    if repaired {
        enumerate_from(en);
    }
    en.g.insert_edge(b, s);
    en.match_b = saved_mb;
    en.match_s = saved_ms;
}

/// Algorithm steps shared by the plain and weighted rules: given the set of
/// candidate matchings, seed with the edges common to all of them, then
/// filter by descending vertex degree, skipping a vertex whose removal would
/// empty the set, and finally break any remaining tie by the
/// lexicographically smallest sorted edge list.
fn select_among(matchings: Vec<Matching>, graph: &BipartiteGraph) -> Matching {
    debug_assert!(!matchings.is_empty());
    if matchings.len() == 1 {
        return matchings.into_iter().next().unwrap();
    }

    let union: Matching = matchings.iter().flatten().copied().collect();
    let inter: Matching = matchings
        .iter()
        .skip(1)
        .fold(matchings[0].clone(), |acc, m| {
            acc.intersection(m).copied().collect()
        });

    let b_inter: BTreeSet<UserId> = inter.iter().map(|&(b, _)| b).collect();
    let s_inter: BTreeSet<UserId> = inter.iter().map(|&(_, s)| s).collect();
    let mut undetermined: Vec<UserId> = union
        .iter()
        .map(|&(b, _)| b)
        .filter(|b| !b_inter.contains(b))
        .chain(union.iter().map(|&(_, s)| s).filter(|s| !s_inter.contains(s)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    undetermined.sort_by_key(|&u| (std::cmp::Reverse(graph.degree(u)), u));

    let covers = |m: &Matching, u: UserId| m.iter().any(|&(b, s)| b == u || s == u);

    let mut pool = matchings;
    for u in undetermined {
        if pool.len() == 1 {
            break;
        }
        let kept: Vec<Matching> = pool.iter().filter(|m| covers(m, u)).cloned().collect();
        // A node no remaining matching covers is skipped so the pool never
        // empties; higher-degree nodes were already given priority.
        if !kept.is_empty() {
            pool = kept;
        }
    }

    pool.into_iter().min().unwrap()
}

/// Group Matching: picks the final winners among the candidates so that a
/// node's chance of winning never decreases when it reports more groups.
pub fn group_match(
    candidates_b: &BTreeSet<UserId>,
    candidates_s: &BTreeSet<UserId>,
    groups: &[BTreeSet<UserId>],
    cap: usize,
) -> Result<MatchResult, MatchingError> {
    let graph = build_bipartite(candidates_b, candidates_s, groups);
    let matchings = enumerate_max_matchings(&graph, cap)?;
    Ok(MatchResult::from_matching(select_among(matchings, &graph)))
}

/// Weighted variant: restrict to the maximum matchings of maximum total edge
/// weight, then continue with the same degree filter on the tied set.
pub fn group_match_weighted(
    candidates_b: &BTreeSet<UserId>,
    candidates_s: &BTreeSet<UserId>,
    groups: &[BTreeSet<UserId>],
    weights: &BTreeMap<(UserId, UserId), f64>,
    cap: usize,
) -> Result<MatchResult, MatchingError> {
    let graph = build_bipartite(candidates_b, candidates_s, groups);
    let matchings = enumerate_max_matchings(&graph, cap)?;
    let weight_of = |m: &Matching| -> f64 {
        m.iter()
            .map(|e| weights.get(e).copied().expect("every edge has a weight"))
            .sum()
    };
    let max_w = matchings
        .iter()
        .map(&weight_of)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<Matching> = matchings
        .into_iter()
        .filter(|m| weight_of(m) >= max_w - EPSILON)
        .collect();
    Ok(MatchResult::from_matching(select_among(tied, &graph)))
}

/// Polynomial-time fallback: pair nodes from the two degree-sorted lists,
/// highest degree first, each with the highest-degree opposite node sharing
/// a group. May return fewer pairs than the exact rule but keeps the
/// higher-degree-wins priority that makes group reports truthful.
pub fn group_match_heuristic(
    candidates_b: &BTreeSet<UserId>,
    candidates_s: &BTreeSet<UserId>,
    groups: &[BTreeSet<UserId>],
) -> MatchResult {
    let graph = build_bipartite(candidates_b, candidates_s, groups);
    let mut order_b: Vec<UserId> = graph.buyers.clone();
    let mut order_s: Vec<UserId> = graph.sellers.clone();
    order_b.sort_by_key(|&u| (std::cmp::Reverse(graph.degree(u)), u));
    order_s.sort_by_key(|&u| (std::cmp::Reverse(graph.degree(u)), u));
    // Nodes with no edge at all can never be paired.
    order_b.retain(|&u| graph.degree(u) > 0);
    order_s.retain(|&u| graph.degree(u) > 0);

    let mut alive: BTreeSet<UserId> = order_b.iter().chain(order_s.iter()).copied().collect();
    let mut pairs = Matching::new();
    let mut ib = 0;
    let mut is = 0;
    loop {
        while ib < order_b.len() && !alive.contains(&order_b[ib]) {
            ib += 1;
        }
        while is < order_s.len() && !alive.contains(&order_s[is]) {
            is += 1;
        }
        if ib >= order_b.len() || is >= order_s.len() {
            break;
        }
        let hb = order_b[ib];
        let hs = order_s[is];
        let buyer_leads = match graph.degree(hb).cmp(&graph.degree(hs)) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => hb < hs,
        };
        let paired = if buyer_leads {
            match order_s
                .iter()
                .find(|&&s| alive.contains(&s) && graph.edges.contains(&(hb, s)))
            {
                Some(&s) => {
                    pairs.insert((hb, s));
                    alive.remove(&hb);
                    alive.remove(&s);
                    true
                }
                None => {
                    alive.remove(&hb);
                    false
                }
            }
        } else {
            match order_b
                .iter()
                .find(|&&b| alive.contains(&b) && graph.edges.contains(&(b, hs)))
            {
                Some(&b) => {
                    pairs.insert((b, hs));
                    alive.remove(&b);
                    alive.remove(&hs);
                    true
                }
                None => {
                    alive.remove(&hs);
                    false
                }
            }
        };
        let _ = paired;
    }
    MatchResult::from_matching(pairs)
}
