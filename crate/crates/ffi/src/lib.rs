//! C ABI over `mrac-core`.
//!
//! Every handle is opaque and owned by the caller once returned; release it
//! with the matching `*_free`. Functions return an [`MracStatus`] and write
//! results through out-pointers. On failure the message is kept per thread
//! and can be read with [`mrac_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mrac_core::belief::{Agent, CellBelief, ObsModel, Observation};
use mrac_core::config::RunConfig;
use mrac_core::estimators;
use mrac_core::scenario::build_scenario;
use mrac_core::sim::{run_episode, EpisodeMetrics};
use mrac_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MracStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    RuntimeError = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// A validated run configuration.
pub struct MracConfig {
    inner: RunConfig,
}

/// The outcome of one simulated episode.
pub struct MracEpisode {
    inner: EpisodeMetrics,
}

/// A factored Bernoulli belief over grid cells with a fixed sensor model.
pub struct MracBelief {
    inner: CellBelief,
    model: ObsModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MracEpisodeSummary {
    pub seed: u64,
    pub horizon: u32,
    pub not_ac_count: u32,
    pub comm_count: u32,
    pub mean_j: f64,
    pub evaluated: u64,
}

/// One step of an episode. Probabilities that the algorithm does not
/// report are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MracStepRecord {
    pub t: u32,
    pub action_r: u32,
    pub action_rp: u32,
    pub not_ac: bool,
    pub comms: u32,
    pub rounds: u32,
    pub j_r: f64,
    pub j_rp: f64,
    pub p_r: u32,
    pub p_rp: u32,
    pub declared: bool,
    pub forced: bool,
    pub p_ac: f64,
    pub p_not_ac: f64,
    pub p_comm: f64,
    pub p_ac_lb: f64,
    pub p_ac_ub: f64,
    pub evaluated: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MracStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidInput(_) => MracStatus::ConfigError,
            Error::CellOutOfRange { .. } => MracStatus::OutOfRange,
            _ => MracStatus::RuntimeError,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MracStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MracStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside mrac".into());
            MracStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(MracStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread, or NULL after a
/// successful call. The pointer stays valid until the next call on the
/// same thread.
#[no_mangle]
pub extern "C" fn mrac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a TOML run configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrac_config_from_toml(toml: *const c_char, out: *mut *mut MracConfig) -> MracStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|_| Failure(MracStatus::InvalidArgument, "toml is not UTF-8".into()))?;
        let inner = RunConfig::from_toml_str(text, &[])?;
        write_out(out, Box::into_raw(Box::new(MracConfig { inner })))
    })
}

/// # Safety
/// `config` must come from [`mrac_config_from_toml`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mrac_config_free(config: *mut MracConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Number of seeds listed in the configuration.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrac_config_seed_count(config: *const MracConfig, out: *mut usize) -> MracStatus {
    guard(|| {
        let c = as_ref(config, "config")?;
        write_out(out, c.inner.execution.seeds.len())
    })
}

/// Runs one episode of the configured scenario and algorithm.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrac_run_episode(config: *const MracConfig, seed: u64, out: *mut *mut MracEpisode) -> MracStatus {
    guard(|| {
        let c = as_ref(config, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scenario = build_scenario(&c.inner.scenario, seed)?;
        let inner = run_episode(&scenario, &c.inner.algorithm)?;
        write_out(out, Box::into_raw(Box::new(MracEpisode { inner })))
    })
}

/// # Safety
/// `episode` must come from [`mrac_run_episode`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mrac_episode_free(episode: *mut MracEpisode) {
    if !episode.is_null() {
        drop(Box::from_raw(episode));
    }
}

/// # Safety
/// `episode` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrac_episode_summary(episode: *const MracEpisode, out: *mut MracEpisodeSummary) -> MracStatus {
    guard(|| {
        let e = &as_ref(episode, "episode")?.inner;
        write_out(
            out,
            MracEpisodeSummary {
                seed: e.seed,
                horizon: e.horizon,
                not_ac_count: e.not_ac_count,
                comm_count: e.comm_count,
                mean_j: e.mean_j(),
                evaluated: e.evaluated(),
            },
        )
    })
}

/// Copies step `index` (zero-based; step `t = index + 1`).
///
/// # Safety
/// `episode` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrac_episode_step(episode: *const MracEpisode, index: usize, out: *mut MracStepRecord) -> MracStatus {
    guard(|| {
        let e = &as_ref(episode, "episode")?.inner;
        let r = e
            .records
            .get(index)
            .ok_or_else(|| Failure(MracStatus::OutOfRange, format!("step {index} out of range for {} steps", e.records.len())))?;
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        write_out(
            out,
            MracStepRecord {
                t: r.t,
                action_r: r.actions[0].0 as u32,
                action_rp: r.actions[1].0 as u32,
                not_ac: r.not_ac,
                comms: r.comms,
                rounds: r.rounds,
                j_r: r.j[0],
                j_rp: r.j[1],
                p_r: r.p[0],
                p_rp: r.p[1],
                declared: r.declared,
                forced: r.forced,
                p_ac: nan(r.p_ac),
                p_not_ac: nan(r.p_not_ac),
                p_comm: nan(r.p_comm),
                p_ac_lb: nan(r.p_ac_lb),
                p_ac_ub: nan(r.p_ac_ub),
                evaluated: r.evaluated,
            },
        )
    })
}

/// A belief of `cells` cells, each with prior `p`, under the sensor model
/// `(p_detect, p_false_alarm)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrac_belief_new(cells: usize, p: f64, p_detect: f64, p_false_alarm: f64, out: *mut *mut MracBelief) -> MracStatus {
    guard(|| {
        let model = ObsModel::new(p_detect, p_false_alarm)?;
        let inner = CellBelief::uniform(cells, p)?;
        write_out(out, Box::into_raw(Box::new(MracBelief { inner, model })))
    })
}

/// # Safety
/// `belief` must come from [`mrac_belief_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mrac_belief_free(belief: *mut MracBelief) {
    if !belief.is_null() {
        drop(Box::from_raw(belief));
    }
}

/// # Safety
/// `belief` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrac_belief_get(belief: *const MracBelief, cell: usize, out: *mut f64) -> MracStatus {
    guard(|| {
        let b = &as_ref(belief, "belief")?.inner;
        if cell >= b.len() {
            return Err(Error::CellOutOfRange { cell, cells: b.len() }.into());
        }
        write_out(out, b.get(cell))
    })
}

/// Bayes update of one cell with a binary observation.
///
/// # Safety
/// `belief` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mrac_belief_update(belief: *mut MracBelief, cell: usize, value: bool) -> MracStatus {
    guard(|| {
        let b = as_mut(belief, "belief")?;
        let model = b.model;
        b.inner.update_in_place(cell, value, &model)?;
        Ok(())
    })
}

/// Removes a previously applied observation of one cell.
///
/// # Safety
/// `belief` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mrac_belief_downdate(belief: *mut MracBelief, cell: usize, value: bool) -> MracStatus {
    guard(|| {
        let b = as_mut(belief, "belief")?;
        let o = Observation::new(0, Agent::R, cell, value);
        b.inner = b.inner.bayes_downdate(&o, &b.model)?;
        Ok(())
    })
}

/// Negative entropy of the belief, in nats.
///
/// # Safety
/// `belief` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrac_belief_entropy_reward(belief: *const MracBelief, out: *mut f64) -> MracStatus {
    guard(|| {
        let b = &as_ref(belief, "belief")?.inner;
        write_out(out, b.entropy_reward())
    })
}

/// Hoeffding half-width `sqrt(ln(2/delta) / 2n)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrac_hoeffding_half_width(n: usize, delta: f64, out: *mut f64) -> MracStatus {
    guard(|| {
        let h = estimators::hoeffding_half_width(n, delta).map_err(|e| Failure(MracStatus::InvalidArgument, e.to_string()))?;
        write_out(out, h)
    })
}
