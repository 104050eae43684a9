//! A multi-market dynamic double auction for ad-hoc crowd services.
//!
//! The mechanism admits arriving buyers and sellers against prices replayed
//! from the market history, clears each period by pooling all groups into
//! one McAfee auction, and resolves group feasibility with a matching rule
//! that never punishes reporting more groups. Alongside the mechanism live
//! its offline optimal oracle, greedy baselines, synthetic and trace-based
//! workload generators, and a truthfulness fuzzer.

pub mod baselines;
pub mod engine;
pub mod matching;
pub mod mcafee;
pub mod metrics;
pub mod model;
pub mod vm;
pub mod workload;

pub use engine::{admission_price, counterfactual_payment, run_mchain, snt};
pub use matching::{enumerate_max_matchings, group_match, group_match_weighted};
pub use mcafee::mcafee;
pub use model::{AuctionOutcome, ProblemInstance, ReportedType, Role, Trade, UserId, UserType};
pub use vm::{vm_match, VmConfig};
