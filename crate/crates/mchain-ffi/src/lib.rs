//! C ABI over the simulator core: opaque handles, status codes, and plain
//! C structs for trades and auction results. Every function is
//! null-checked; ownership moves only through the `_free` functions.

use std::ffi::{c_char, CStr};

use mchain::baselines::offline_optimal;
use mchain::mcafee::mcafee;
use mchain::model::{AuctionOutcome, ProblemInstance};
use mchain::run_mchain;
use mchain::vm::VmConfig;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MchainStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The instance JSON did not parse.
    InvalidJson = 3,
    /// The instance parsed but violates a model invariant.
    InvalidInstance = 4,
    /// An index argument was out of range.
    OutOfRange = 5,
}

/// Opaque problem-instance handle. Create with
/// `mchain_instance_from_json`, destroy with `mchain_instance_free`.
pub struct MchainInstance(ProblemInstance);

/// Opaque auction-outcome handle. Create with `mchain_run`, destroy with
/// `mchain_outcome_free`.
pub struct MchainOutcome(AuctionOutcome);

/// One executed trade.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MchainTrade {
    pub buyer_id: u64,
    pub seller_id: u64,
    pub period: u32,
    pub buyer_payment: f64,
    pub seller_payment: f64,
}

/// Result of a single McAfee double auction.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MchainMcafeeResult {
    pub traded: bool,
    /// Number of (buyer, seller) pairs that trade.
    pub num_trades: usize,
    /// Uniform prices; NaN when `traded` is false.
    pub buyer_price: f64,
    pub seller_price: f64,
}

/// Returns a static, null-terminated description of a status code.
#[no_mangle]
pub extern "C" fn mchain_status_message(status: MchainStatus) -> *const c_char {
    let msg: &'static CStr = match status {
        MchainStatus::Ok => c"ok",
        MchainStatus::NullArgument => c"a required pointer argument was null",
        MchainStatus::InvalidUtf8 => c"string argument was not valid UTF-8",
        MchainStatus::InvalidJson => c"instance JSON did not parse",
        MchainStatus::InvalidInstance => c"instance violates a model invariant",
        MchainStatus::OutOfRange => c"index out of range",
    };
    msg.as_ptr()
}

/// Parses a problem instance from JSON and returns an owned handle in
/// `*out`.
///
/// # Safety
///
/// `json` must point to a null-terminated string and `out` to writable
/// storage for one pointer. On success the caller owns the handle and must
/// release it with `mchain_instance_free`.
#[no_mangle]
pub unsafe extern "C" fn mchain_instance_from_json(
    json: *const c_char,
    out: *mut *mut MchainInstance,
) -> MchainStatus {
    if json.is_null() || out.is_null() {
        return MchainStatus::NullArgument;
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => return MchainStatus::InvalidUtf8,
    };
    let instance = match ProblemInstance::from_json(text) {
        Ok(i) => i,
        Err(_) => return MchainStatus::InvalidJson,
    };
    if !instance.validate().is_empty() {
        return MchainStatus::InvalidInstance;
    }
    *out = Box::into_raw(Box::new(MchainInstance(instance)));
    MchainStatus::Ok
}

/// Releases an instance handle. A null handle is a no-op.
///
/// # Safety
///
/// `instance` must be a handle returned by `mchain_instance_from_json`
/// that has not been freed already.
#[no_mangle]
pub unsafe extern "C" fn mchain_instance_free(instance: *mut MchainInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Writes the number of users in the instance to `*out`.
///
/// # Safety
///
/// `instance` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mchain_instance_user_count(
    instance: *const MchainInstance,
    out: *mut usize,
) -> MchainStatus {
    if instance.is_null() || out.is_null() {
        return MchainStatus::NullArgument;
    }
    *out = (*instance).0.users.len();
    MchainStatus::Ok
}

/// Runs the dynamic mechanism on truthful reports and returns an owned
/// outcome handle in `*out`.
///
/// # Safety
///
/// `instance` must be a live handle and `out` writable storage for one
/// pointer. On success the caller owns the outcome and must release it
/// with `mchain_outcome_free`.
#[no_mangle]
pub unsafe extern "C" fn mchain_run(
    instance: *const MchainInstance,
    out: *mut *mut MchainOutcome,
) -> MchainStatus {
    if instance.is_null() || out.is_null() {
        return MchainStatus::NullArgument;
    }
    match run_mchain(&(*instance).0, None, &VmConfig::default()) {
        Ok(outcome) => {
            *out = Box::into_raw(Box::new(MchainOutcome(outcome)));
            MchainStatus::Ok
        }
        Err(_) => MchainStatus::InvalidInstance,
    }
}

/// Releases an outcome handle. A null handle is a no-op.
///
/// # Safety
///
/// `outcome` must be a handle returned by `mchain_run` that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn mchain_outcome_free(outcome: *mut MchainOutcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}

/// Writes the total gains from trade to `*out`.
///
/// # Safety
///
/// `outcome` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mchain_outcome_total_value(
    outcome: *const MchainOutcome,
    out: *mut f64,
) -> MchainStatus {
    if outcome.is_null() || out.is_null() {
        return MchainStatus::NullArgument;
    }
    *out = (*outcome).0.total_value;
    MchainStatus::Ok
}

/// Writes the number of executed trades to `*out`.
///
/// # Safety
///
/// `outcome` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mchain_outcome_trade_count(
    outcome: *const MchainOutcome,
    out: *mut usize,
) -> MchainStatus {
    if outcome.is_null() || out.is_null() {
        return MchainStatus::NullArgument;
    }
    *out = (*outcome).0.trades.len();
    MchainStatus::Ok
}

/// Copies trade number `index` (0-based) into `*out`.
///
/// # Safety
///
/// `outcome` must be a live handle and `out` writable storage for one
/// `MchainTrade`.
#[no_mangle]
pub unsafe extern "C" fn mchain_outcome_trade(
    outcome: *const MchainOutcome,
    index: usize,
    out: *mut MchainTrade,
) -> MchainStatus {
    if outcome.is_null() || out.is_null() {
        return MchainStatus::NullArgument;
    }
    let trade = match (&(*outcome).0.trades).get(index) {
        Some(t) => t,
        None => return MchainStatus::OutOfRange,
    };
    *out = MchainTrade {
        buyer_id: trade.buyer.0,
        seller_id: trade.seller.0,
        period: trade.period,
        buyer_payment: trade.buyer_payment,
        seller_payment: trade.seller_payment,
    };
    MchainStatus::Ok
}

/// Writes the offline optimal total gains from trade to `*out`.
///
/// # Safety
///
/// `instance` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mchain_offline_optimal(
    instance: *const MchainInstance,
    out: *mut f64,
) -> MchainStatus {
    if instance.is_null() || out.is_null() {
        return MchainStatus::NullArgument;
    }
    let (v_opt, _) = offline_optimal(&(*instance).0);
    *out = v_opt;
    MchainStatus::Ok
}

/// Runs one McAfee double auction over `num_bids` bids and `num_asks`
/// asks and writes the summary to `*out`.
///
/// # Safety
///
/// `bids` and `asks` must point to arrays of at least `num_bids` and
/// `num_asks` doubles (null is allowed only with a zero length), and
/// `out` must be writable storage for one `MchainMcafeeResult`.
#[no_mangle]
pub unsafe extern "C" fn mchain_mcafee(
    bids: *const f64,
    num_bids: usize,
    asks: *const f64,
    num_asks: usize,
    out: *mut MchainMcafeeResult,
) -> MchainStatus {
    if out.is_null() || (bids.is_null() && num_bids > 0) || (asks.is_null() && num_asks > 0) {
        return MchainStatus::NullArgument;
    }
    let bids = if num_bids == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(bids, num_bids)
    };
    let asks = if num_asks == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(asks, num_asks)
    };
    let r = mcafee(bids, asks);
    *out = MchainMcafeeResult {
        traded: r.traded,
        num_trades: r.winning_bids.len(),
        buyer_price: r.buyer_price,
        seller_price: r.seller_price,
    };
    MchainStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_messages_are_null_terminated_statics() {
        for s in [
            MchainStatus::Ok,
            MchainStatus::NullArgument,
            MchainStatus::InvalidUtf8,
            MchainStatus::InvalidJson,
            MchainStatus::InvalidInstance,
            MchainStatus::OutOfRange,
        ] {
            let p = mchain_status_message(s);
            assert!(!p.is_null());
            let text = unsafe { CStr::from_ptr(p) }.to_str().unwrap();
            assert!(!text.is_empty());
        }
    }
}
