//! Workload sources: synthetic instances (Poisson arrivals, drifting value
//! mean, random group assignment) and proximity-trace ingestion (maximal
//! cliques as groups, presence runs as sessions).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GroupId, Period, ProblemInstance, Role, UserId, UserType};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parameters of the synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// Mean inter-arrival time in (fractional) periods.
    pub mean_interarrival: f64,
    /// Maximum patience K.
    pub max_patience: u32,
    pub num_groups: u32,
    /// Groups each present user joins per period (ℓ).
    pub groups_per_user: u32,
    /// Per-period multiplicative drift e^{±γ} of the value mean.
    pub volatility: f64,
    pub initial_mean: f64,
    pub total_users: u64,
    pub buyer_fraction: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            mean_interarrival: 0.5,
            max_patience: 6,
            num_groups: 10,
            groups_per_user: 2,
            volatility: 0.01,
            initial_mean: 20.0,
            total_users: 10_000,
            buyer_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SynthParams {
    /// Hard errors only; the documented ranges are defaults, not limits.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let fail = |msg: &str| Err(WorkloadError::InvalidParams(msg.to_string()));
        if !(self.mean_interarrival > 0.0) {
            return fail("mean_interarrival must be positive");
        }
        if self.num_groups == 0 {
            return fail("num_groups must be positive");
        }
        if self.groups_per_user == 0 || self.groups_per_user > self.num_groups {
            return fail("groups_per_user must be in [1, num_groups]");
        }
        if self.volatility < 0.0 {
            return fail("volatility must be non-negative");
        }
        if !(self.initial_mean > 0.0) {
            return fail("initial_mean must be positive");
        }
        if !(0.0..=1.0).contains(&self.buyer_fraction) {
            return fail("buyer_fraction must be in [0, 1]");
        }
        Ok(())
    }

    /// Values outside the documented experiment ranges; callers may warn.
    pub fn range_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !(0.1..=1.5).contains(&self.mean_interarrival) {
            w.push(format!(
                "mean_interarrival {} outside the documented range [0.1, 1.5]",
                self.mean_interarrival
            ));
        }
        if !(0.01..=0.15).contains(&self.volatility) && self.volatility != 0.0 {
            w.push(format!(
                "volatility {} outside the documented range [0.01, 0.15]",
                self.volatility
            ));
        }
        w
    }
}

/// One multiplicative drift step of the value mean: μ·e^{+γ} or μ·e^{−γ},
/// each with probability 1/2.
pub fn drift_mean<R: Rng>(mu: f64, gamma: f64, rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        mu * gamma.exp()
    } else {
        mu * (-gamma).exp()
    }
}

/// Independent per-concern random streams derived from one seed, so that
/// changing e.g. the group count re-randomizes only group assignment while
/// arrivals and values stay identical across sweep cells (common random
/// numbers).
fn stream(seed: u64, concern: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(concern);
    rng
}

/// Generates a synthetic instance. Arrivals follow a Poisson process binned
/// into integer periods; patience is uniform on {0..K}; values are uniform
/// within ±20% of the arrival period's mean, which drifts once per period.
pub fn gen_instance(params: &SynthParams) -> Result<ProblemInstance, WorkloadError> {
    params.validate()?;
    if params.total_users == 0 {
        return Ok(ProblemInstance {
            users: Vec::new(),
            horizon: 0,
            max_patience: params.max_patience,
        });
    }

    let mut arrival_rng = stream(params.seed, 0);
    let mut patience_rng = stream(params.seed, 1);
    let mut role_rng = stream(params.seed, 2);
    let mut value_rng = stream(params.seed, 3);
    let mut group_rng = stream(params.seed, 4);
    let mut drift_rng = stream(params.seed, 5);

    // Exponential inter-arrival times; user arrives in period ⌊τ⌋.
    let mut arrivals = Vec::with_capacity(params.total_users as usize);
    let mut tau = 0.0f64;
    for _ in 0..params.total_users {
        let u: f64 = arrival_rng.random();
        tau += -params.mean_interarrival * (1.0 - u).ln();
        arrivals.push(tau as Period);
    }
    let horizon = *arrivals.last().expect("at least one user");

    // Value mean per period, drifting multiplicatively.
    let mut means = Vec::with_capacity(horizon as usize + 1);
    let mut mu = params.initial_mean;
    for _ in 0..=horizon {
        means.push(mu);
        mu = drift_mean(mu, params.volatility, &mut drift_rng);
    }

    let mut users = Vec::with_capacity(arrivals.len());
    for (i, &a) in arrivals.iter().enumerate() {
        let patience: u32 = patience_rng.random_range(0..=params.max_patience);
        let departure = a + patience;
        let role = if role_rng.random::<f64>() < params.buyer_fraction {
            Role::Buyer
        } else {
            Role::Seller
        };
        let mean = means[a as usize];
        let value = value_rng.random_range(0.8 * mean..=1.2 * mean);
        let mut groups: BTreeMap<Period, BTreeSet<GroupId>> = BTreeMap::new();
        for t in a..=departure {
            let chosen = rand::seq::index::sample(
                &mut group_rng,
                params.num_groups as usize,
                params.groups_per_user as usize,
            );
            groups.insert(t, chosen.iter().map(|g| g as GroupId).collect());
        }
        users.push(UserType {
            id: UserId(i as u64 + 1),
            role,
            value,
            arrival: a,
            departure,
            groups,
        });
    }

    Ok(ProblemInstance {
        users,
        horizon,
        max_patience: params.max_patience,
    })
}

/// A proximity trace: per period, the undirected edges detected between
/// users (each edge stored with the smaller id first).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProximityTrace {
    pub edges: BTreeMap<Period, BTreeSet<(UserId, UserId)>>,
}

impl ProximityTrace {
    pub fn users_at(&self, t: Period) -> BTreeSet<UserId> {
        self.edges
            .get(&t)
            .map(|es| es.iter().flat_map(|&(a, b)| [a, b]).collect())
            .unwrap_or_default()
    }

    /// FNV-1a hash over the canonical `period,a,b` line serialization; used
    /// to tag metrics rows with the trace they came from.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (t, es) in &self.edges {
            for (a, b) in es {
                eat(format!("{t},{},{}\n", a.0, b.0).as_bytes());
            }
        }
        h
    }
}

/// Parses the trace CSV (`period,user_a,user_b` per line; a header line is
/// skipped if present). Reports malformed lines with their line number.
pub fn load_trace(path: &Path) -> Result<ProximityTrace, WorkloadError> {
    parse_trace(&std::fs::read_to_string(path)?)
}

pub fn parse_trace(text: &str) -> Result<ProximityTrace, WorkloadError> {
    let mut trace = ProximityTrace::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if i == 0 && l.chars().next().is_some_and(|c| !c.is_ascii_digit()) {
            continue; // header
        }
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(WorkloadError::Trace {
                line,
                msg: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<u64, WorkloadError> {
            s.parse().map_err(|_| WorkloadError::Trace {
                line,
                msg: format!("non-integer {what} {s:?}"),
            })
        };
        let t = parse(fields[0], "period")? as Period;
        let a = parse(fields[1], "user")?;
        let b = parse(fields[2], "user")?;
        if a == b {
            return Err(WorkloadError::Trace {
                line,
                msg: format!("self-edge on user {a}"),
            });
        }
        let e = (UserId(a.min(b)), UserId(a.max(b)));
        trace.edges.entry(t).or_default().insert(e);
    }
    Ok(trace)
}

/// All maximal cliques of the undirected graph (Bron–Kerbosch with
/// pivoting), plus a singleton group for every vertex with no edge.
pub fn cliques_to_groups(
    vertices: &BTreeSet<UserId>,
    edges: &BTreeSet<(UserId, UserId)>,
) -> Vec<BTreeSet<UserId>> {
    let mut adj: BTreeMap<UserId, BTreeSet<UserId>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().insert(b);
        adj.entry(b).or_default().insert(a);
    }
    fn bron_kerbosch(
        r: &mut BTreeSet<UserId>,
        mut p: BTreeSet<UserId>,
        mut x: BTreeSet<UserId>,
        adj: &BTreeMap<UserId, BTreeSet<UserId>>,
        empty: &BTreeSet<UserId>,
        out: &mut Vec<BTreeSet<UserId>>,
    ) {
        let nbrs = |u: &UserId| adj.get(u).unwrap_or(empty);
        if p.is_empty() && x.is_empty() {
            if !r.is_empty() {
                out.push(r.clone());
            }
            return;
        }
        let pivot = p
            .union(&x)
            .max_by_key(|u| nbrs(u).intersection(&p).count())
            .copied()
            .expect("p ∪ x nonempty");
        let candidates: Vec<UserId> = p.difference(nbrs(&pivot)).copied().collect();
        for v in candidates {
            let nv = nbrs(&v).clone();
            r.insert(v);
            bron_kerbosch(
                r,
                p.intersection(&nv).copied().collect(),
                x.intersection(&nv).copied().collect(),
                adj,
                empty,
                out,
            );
            r.remove(&v);
            p.remove(&v);
            x.insert(v);
        }
    }

    let mut out = Vec::new();
    let connected: BTreeSet<UserId> = adj.keys().copied().collect();
    let empty = BTreeSet::new();
    bron_kerbosch(
        &mut BTreeSet::new(),
        connected.clone(),
        BTreeSet::new(),
        &adj,
        &empty,
        &mut out,
    );
    for &v in vertices.difference(&connected) {
        out.push([v].into_iter().collect());
    }
    out.sort();
    out
}

/// Value/role synthesis knobs for trace-derived instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceValueParams {
    pub initial_mean: f64,
    pub volatility: f64,
    pub buyer_fraction: f64,
}

impl Default for TraceValueParams {
    fn default() -> Self {
        TraceValueParams {
            initial_mean: 20.0,
            volatility: 0.01,
            buyer_fraction: 0.5,
        }
    }
}

/// Turns a proximity trace into a problem instance.
///
/// A trace user's run of consecutive present periods becomes a session;
/// runs longer than K+1 periods split into consecutive sessions so that
/// patience ≤ K holds. Each session gets a fresh UserId; the returned map
/// records which trace user each session came from. Groups per period are
/// the maximal cliques of that period's proximity graph; values and roles
/// follow the synthetic value model.
pub fn trace_to_instance(
    trace: &ProximityTrace,
    params: &TraceValueParams,
    max_patience: u32,
    seed: u64,
) -> (ProblemInstance, BTreeMap<UserId, UserId>) {
    let horizon = trace.edges.keys().max().copied().unwrap_or(0);

    // Per-period groups over trace ids, in deterministic order.
    let mut groups_by_period: BTreeMap<Period, Vec<BTreeSet<UserId>>> = BTreeMap::new();
    for (&t, edges) in &trace.edges {
        let vertices = trace.users_at(t);
        groups_by_period.insert(t, cliques_to_groups(&vertices, edges));
    }

    // Presence periods per trace user.
    let mut presence: BTreeMap<UserId, Vec<Period>> = BTreeMap::new();
    for (&t, _) in &trace.edges {
        for u in trace.users_at(t) {
            presence.entry(u).or_default().push(t);
        }
    }

    // Sessions: maximal consecutive runs, chopped to ≤ K+1 periods.
    struct Session {
        trace_id: UserId,
        arrival: Period,
        departure: Period,
    }
    let mut sessions = Vec::new();
    for (&u, periods) in &presence {
        let mut run_start = periods[0];
        let mut prev = periods[0];
        let flush = |start: Period, end: Period, sessions: &mut Vec<Session>| {
            let mut a = start;
            while a <= end {
                let d = end.min(a + max_patience);
                sessions.push(Session {
                    trace_id: u,
                    arrival: a,
                    departure: d,
                });
                a = d + 1;
            }
        };
        for &t in &periods[1..] {
            if t != prev + 1 {
                flush(run_start, prev, &mut sessions);
                run_start = t;
            }
            prev = t;
        }
        flush(run_start, prev, &mut sessions);
    }
    sessions.sort_by_key(|s| (s.arrival, s.trace_id));

    let mut role_rng = stream(seed, 2);
    let mut value_rng = stream(seed, 3);
    let mut drift_rng = stream(seed, 5);
    let mut means = Vec::with_capacity(horizon as usize + 1);
    let mut mu = params.initial_mean;
    for _ in 0..=horizon {
        means.push(mu);
        mu = drift_mean(mu, params.volatility, &mut drift_rng);
    }

    // Sessions inherit group ids straight from their trace user's cliques:
    // two sessions share a group id at t exactly when the underlying trace
    // users shared the clique.
    let mut users = Vec::with_capacity(sessions.len());
    let mut provenance = BTreeMap::new();
    for (i, s) in sessions.iter().enumerate() {
        let sid = UserId(i as u64 + 1);
        provenance.insert(sid, s.trace_id);
        let role = if role_rng.random::<f64>() < params.buyer_fraction {
            Role::Buyer
        } else {
            Role::Seller
        };
        let mean = means[s.arrival as usize];
        let value = value_rng.random_range(0.8 * mean..=1.2 * mean);
        let mut groups: BTreeMap<Period, BTreeSet<GroupId>> = BTreeMap::new();
        for t in s.arrival..=s.departure {
            let mut mine = BTreeSet::new();
            if let Some(gs) = groups_by_period.get(&t) {
                for (gi, g) in gs.iter().enumerate() {
                    if g.contains(&s.trace_id) {
                        mine.insert(gi as GroupId);
                    }
                }
            }
            groups.insert(t, mine);
        }
        users.push(UserType {
            id: sid,
            role,
            value,
            arrival: s.arrival,
            departure: s.departure,
            groups,
        });
    }

    (
        ProblemInstance {
            users,
            horizon,
            max_patience,
        },
        provenance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_identity_at_zero_volatility() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(drift_mean(20.0, 0.0, &mut rng), 20.0);
    }

    #[test]
    fn drift_step_values() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let hi = 20.0 * 0.01f64.exp();
        let lo = 20.0 * (-0.01f64).exp();
        for _ in 0..20 {
            let m = drift_mean(20.0, 0.01, &mut rng);
            assert!((m - hi).abs() < 1e-12 || (m - lo).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_product_stays_within_exponential_bounds() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (mu0, gamma, n) = (20.0, 0.15, 50);
        let mut mu = mu0;
        for _ in 0..n {
            mu = drift_mean(mu, gamma, &mut rng);
        }
        assert!(mu >= mu0 * (-(n as f64) * gamma).exp());
        assert!(mu <= mu0 * (n as f64 * gamma).exp());
    }

    #[test]
    fn empty_workload() {
        let params = SynthParams {
            total_users: 0,
            ..SynthParams::default()
        };
        let inst = gen_instance(&params).unwrap();
        assert!(inst.users.is_empty());
        assert_eq!(inst.horizon, 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let params = SynthParams {
            total_users: 200,
            seed: 9,
            ..SynthParams::default()
        };
        let a = gen_instance(&params).unwrap();
        let b = gen_instance(&params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_instances_validate() {
        for seed in 0..3 {
            let params = SynthParams {
                total_users: 300,
                seed,
                ..SynthParams::default()
            };
            let inst = gen_instance(&params).unwrap();
            assert!(inst.validate().is_empty(), "{:?}", inst.validate());
            for u in &inst.users {
                // Exactly ℓ groups each present period; value within ±20%.
                for t in u.arrival..=u.departure {
                    assert_eq!(u.groups_at(t).unwrap().len(), 2);
                }
            }
        }
    }

    #[test]
    fn horizon_tracks_mean_interarrival() {
        let mut ratios = Vec::new();
        for seed in 0..5 {
            let params = SynthParams {
                mean_interarrival: 0.5,
                total_users: 10_000,
                seed,
                ..SynthParams::default()
            };
            let inst = gen_instance(&params).unwrap();
            ratios.push(inst.horizon as f64 / 5_000.0);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean ratio {mean}");
    }

    #[test]
    fn parse_small_trace() {
        let t = parse_trace("0,1,2\n0,2,3\n1,1,2\n").unwrap();
        assert_eq!(t.edges.len(), 2);
        assert_eq!(t.edges[&0].len(), 2);
        assert_eq!(t.edges[&1].len(), 1);
    }

    #[test]
    fn parse_empty_and_header() {
        assert!(parse_trace("").unwrap().edges.is_empty());
        let t = parse_trace("period,user_a,user_b\n3,7,8\n").unwrap();
        assert!(t.edges[&3].contains(&(UserId(7), UserId(8))));
    }

    #[test]
    fn parse_self_edge_fails_with_line() {
        match parse_trace("0,5,5") {
            Err(WorkloadError::Trace { line: 1, msg }) => assert!(msg.contains("self-edge")),
            other => panic!("expected self-edge error, got {other:?}"),
        }
    }

    #[test]
    fn parse_bad_field_count() {
        assert!(matches!(
            parse_trace("0,1\n"),
            Err(WorkloadError::Trace { line: 1, .. })
        ));
    }

    fn ids(ns: &[u64]) -> BTreeSet<UserId> {
        ns.iter().map(|&n| UserId(n)).collect()
    }

    #[test]
    fn cliques_of_overlapping_topology() {
        // u1u2u3u7 clique, u2u5 edge, u3u4u6u7 clique → exactly 3 groups.
        let mut edges = BTreeSet::new();
        let clique = |edges: &mut BTreeSet<(UserId, UserId)>, vs: &[u64]| {
            for (i, &a) in vs.iter().enumerate() {
                for &b in &vs[i + 1..] {
                    edges.insert((UserId(a.min(b)), UserId(a.max(b))));
                }
            }
        };
        clique(&mut edges, &[1, 2, 3, 7]);
        clique(&mut edges, &[2, 5]);
        clique(&mut edges, &[3, 4, 6, 7]);
        let vertices = ids(&[1, 2, 3, 4, 5, 6, 7]);
        let groups = cliques_to_groups(&vertices, &edges);
        assert_eq!(
            groups,
            vec![ids(&[1, 2, 3, 7]), ids(&[2, 5]), ids(&[3, 4, 6, 7])]
        );
    }

    #[test]
    fn cliques_triangle_and_path() {
        let tri: BTreeSet<_> = [(UserId(1), UserId(2)), (UserId(1), UserId(3)), (UserId(2), UserId(3))]
            .into_iter()
            .collect();
        assert_eq!(cliques_to_groups(&ids(&[1, 2, 3]), &tri), vec![ids(&[1, 2, 3])]);
        let path: BTreeSet<_> = [(UserId(1), UserId(2)), (UserId(2), UserId(3))]
            .into_iter()
            .collect();
        assert_eq!(
            cliques_to_groups(&ids(&[1, 2, 3]), &path),
            vec![ids(&[1, 2]), ids(&[2, 3])]
        );
    }

    #[test]
    fn isolated_vertices_become_singletons() {
        let edges: BTreeSet<_> = [(UserId(1), UserId(2))].into_iter().collect();
        let groups = cliques_to_groups(&ids(&[1, 2, 9]), &edges);
        assert_eq!(groups, vec![ids(&[1, 2]), ids(&[9])]);
    }

    #[test]
    fn short_presence_is_one_session() {
        let t = parse_trace("0,1,2\n1,1,2\n2,1,2\n").unwrap();
        let (inst, prov) = trace_to_instance(&t, &TraceValueParams::default(), 6, 0);
        assert_eq!(inst.users.len(), 2);
        for u in &inst.users {
            assert_eq!((u.arrival, u.departure), (0, 2));
        }
        assert_eq!(prov.len(), 2);
    }

    #[test]
    fn long_presence_splits_at_patience_bound() {
        let text: String = (0..=13).map(|t| format!("{t},1,2\n")).collect();
        let t = parse_trace(&text).unwrap();
        let (inst, prov) = trace_to_instance(&t, &TraceValueParams::default(), 6, 0);
        let mut windows: Vec<(Period, Period)> = inst
            .users
            .iter()
            .filter(|u| prov[&u.id] == UserId(1))
            .map(|u| (u.arrival, u.departure))
            .collect();
        windows.sort();
        assert_eq!(windows, vec![(0, 6), (7, 13)]);
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn trace_instance_validates_and_shares_groups() {
        let t = parse_trace("0,1,2\n0,2,3\n1,2,3\n").unwrap();
        let (inst, _) = trace_to_instance(&t, &TraceValueParams::default(), 6, 1);
        assert!(inst.validate().is_empty());
        // At period 0 the path 1–2–3 yields cliques {1,2} and {2,3}; the
        // sessions of users 1 and 2 must share a group id there.
        let schedule = inst.group_schedule();
        let groups = schedule.groups_at(0);
        assert_eq!(groups.len(), 2);
    }
}
