//! C ABI over the gestnav scene generator, simulator, gesture synthesizer
//! and policy runtime.
//!
//! Every function returns a [`GnStatus`]. On failure the message is kept in
//! a thread-local slot readable with [`gn_last_error_message`]. Handles are
//! opaque, created by `*_new`/`*_generate`/`*_load` and released by the
//! matching `*_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use gestnav::gesture::{referencing_gesture, GestureAnatomy};
use gestnav::policy::{load_checkpoint, AgentState, GestureCache, PolicyParams};
use gestnav::scene::{generate_scene, Scene, SceneGenParams, SceneType};
use gestnav::sim::{Action, Condition, EpisodeSampler, GestureBank, NavEnv, Observation};
use gestnav::tensor::Categorical;
use gestnav::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GN_VISION_LEN: usize = 352;
pub const GN_GESTURE_LEN: usize = 9500;
pub const GN_NUM_ACTIONS: usize = 4;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    EpisodeFinished = 4,
    GenerationFailed = 5,
    Io = 6,
    Checkpoint = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnCondition {
    Baseline = 0,
    Referencing = 1,
    Intervention = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnAction {
    MoveForward = 0,
    TurnLeft = 1,
    TurnRight = 2,
    Stop = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GnPose {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GnStepResult {
    pub reward: f64,
    pub collided: bool,
    pub stopped: bool,
    pub stop_eligible: bool,
    pub done: bool,
    pub success: bool,
}

/// A generated or loaded scene.
pub struct GnScene {
    scene: Arc<Scene>,
}

/// A simulator that samples episodes in one scene.
pub struct GnEnv {
    sampler: EpisodeSampler,
    env: NavEnv,
    obs: Observation,
}

/// A trained policy with its recurrent state.
pub struct GnPolicy {
    params: PolicyParams,
    state: AgentState,
    cache: GestureCache,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> GnStatus {
    match err {
        Error::InvalidParams(_) | Error::InvalidSpec(_) | Error::Config(_) | Error::ShapeMismatch(_) | Error::EmptyInput => {
            GnStatus::InvalidArgument
        }
        Error::IndexOutOfRange { .. } => GnStatus::OutOfRange,
        Error::EpisodeFinished => GnStatus::EpisodeFinished,
        Error::GenerationFailed(_) | Error::Unreachable | Error::EmptyEligibleSet(_) => GnStatus::GenerationFailed,
        Error::Io(_) => GnStatus::Io,
        Error::Checkpoint(_) => GnStatus::Checkpoint,
        _ => GnStatus::Internal,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (GnStatus, String)>) -> GnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GnStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GnStatus::Internal
        }
    }
}

fn lib_err(err: Error) -> (GnStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (GnStatus, String) {
    (GnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (GnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GnStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], (GnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err((GnStatus::BufferTooSmall, format!("{what} holds {len} values, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

fn condition_of(c: GnCondition) -> Condition {
    match c {
        GnCondition::Baseline => Condition::Baseline,
        GnCondition::Referencing => Condition::Referencing,
        GnCondition::Intervention => Condition::Intervention,
    }
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len - 1` bytes). Returns the full message
/// length in bytes, excluding the terminator.
#[no_mangle]
pub unsafe extern "C" fn gn_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Generates a scene. `scene_type` is one of "kitchen", "living_room",
/// "bedroom", "bathroom".
#[no_mangle]
pub unsafe extern "C" fn gn_scene_generate(seed: u64, scene_type: *const c_char, out: *mut *mut GnScene) -> GnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let st: SceneType = str_arg(scene_type, "scene_type")?.parse().map_err(lib_err)?;
        let scene = generate_scene(seed, st, &SceneGenParams::default()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GnScene { scene: Arc::new(scene) }));
        Ok(())
    })
}

/// Parses a scene from its JSON file format.
#[no_mangle]
pub unsafe extern "C" fn gn_scene_from_json(json: *const c_char, out: *mut *mut GnScene) -> GnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scene = Scene::from_json(str_arg(json, "json")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GnScene { scene: Arc::new(scene) }));
        Ok(())
    })
}

/// Grid size in cells and number of object instances.
#[no_mangle]
pub unsafe extern "C" fn gn_scene_info(
    scene: *const GnScene,
    cols: *mut usize,
    rows: *mut usize,
    num_objects: *mut usize,
) -> GnStatus {
    guard(|| {
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        if cols.is_null() || rows.is_null() || num_objects.is_null() {
            return Err(null("output"));
        }
        *cols = s.scene.cols();
        *rows = s.scene.rows();
        *num_objects = s.scene.objects().len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gn_scene_free(scene: *mut GnScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Creates a simulator over `scene` and samples its first episode. The
/// scene handle may be freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn gn_env_new(
    scene: *const GnScene,
    condition: GnCondition,
    anatomy_seed: u64,
    noise_sigma: f64,
    seed: u64,
    out: *mut *mut GnEnv,
) -> GnStatus {
    guard(|| {
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let bank = Arc::new(GestureBank::new(GestureAnatomy::from_seed(anatomy_seed)));
        let mut sampler = EpisodeSampler::new(vec![s.scene.clone()], condition_of(condition), bank.clone(), noise_sigma, seed)
            .map_err(lib_err)?;
        let (env, obs) = NavEnv::reset(sampler.sample().map_err(lib_err)?, bank).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GnEnv { sampler, env, obs }));
        Ok(())
    })
}

/// Starts the next sampled episode.
#[no_mangle]
pub unsafe extern "C" fn gn_env_reset(env: *mut GnEnv) -> GnStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let spec = e.sampler.sample().map_err(lib_err)?;
        let (next, obs) = NavEnv::reset(spec, e.sampler.bank().clone()).map_err(lib_err)?;
        e.env = next;
        e.obs = obs;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gn_env_step(env: *mut GnEnv, action: GnAction, out: *mut GnStepResult) -> GnStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let a = Action::from_index(action as usize).map_err(lib_err)?;
        let (obs, o) = e.env.step(a).map_err(lib_err)?;
        e.obs = obs;
        if let Some(r) = out.as_mut() {
            *r = GnStepResult {
                reward: o.reward,
                collided: o.collided,
                stopped: o.stopped,
                stop_eligible: o.stop_eligible,
                done: o.done,
                success: o.success,
            };
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gn_env_pose(env: *const GnEnv, out: *mut GnPose) -> GnStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let r = out.as_mut().ok_or_else(|| null("out"))?;
        let p = e.env.pose();
        let c = p.position();
        *r = GnPose {
            x: c.x,
            y: c.y,
            heading_deg: p.heading_deg(),
        };
        Ok(())
    })
}

/// Copies the current observation. `vision` needs `GN_VISION_LEN` values;
/// `gesture` is optional (may be null) and needs `GN_GESTURE_LEN`.
#[no_mangle]
pub unsafe extern "C" fn gn_env_observation(
    env: *const GnEnv,
    vision: *mut f64,
    vision_len: usize,
    gesture: *mut f64,
    gesture_len: usize,
    target: *mut u32,
) -> GnStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let v = out_slice(vision, vision_len, e.obs.vision.len(), "vision")?;
        v.copy_from_slice(&e.obs.vision);
        if !gesture.is_null() {
            let src = e.obs.gesture.as_slice();
            out_slice(gesture, gesture_len, src.len(), "gesture")?.copy_from_slice(src);
        }
        if let Some(t) = target.as_mut() {
            *t = e.obs.target.index() as u32;
        }
        Ok(())
    })
}

/// Steps taken, whether the episode is done and whether it succeeded.
#[no_mangle]
pub unsafe extern "C" fn gn_env_status(env: *const GnEnv, steps: *mut u32, done: *mut bool, success: *mut bool) -> GnStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        if steps.is_null() || done.is_null() || success.is_null() {
            return Err(null("output"));
        }
        *steps = e.env.steps();
        *done = e.env.done();
        *success = e.env.success();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gn_env_free(env: *mut GnEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Loads a policy checkpoint.
#[no_mangle]
pub unsafe extern "C" fn gn_policy_load(path: *const c_char, out: *mut *mut GnPolicy) -> GnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (params, _) = load_checkpoint(Path::new(str_arg(path, "path")?)).map_err(lib_err)?;
        let state = AgentState::new(params.config.hidden);
        *out = Box::into_raw(Box::new(GnPolicy {
            params,
            state,
            cache: GestureCache::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
        }));
        Ok(())
    })
}

/// Clears the recurrent state before a new episode and reseeds sampling.
#[no_mangle]
pub unsafe extern "C" fn gn_policy_reset(policy: *mut GnPolicy, seed: u64) -> GnStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| null("policy"))?;
        p.state.reset();
        p.cache.clear();
        p.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(())
    })
}

/// Samples an action for the env's current observation and advances the
/// policy's recurrent state. Does not step the env.
#[no_mangle]
pub unsafe extern "C" fn gn_policy_act(policy: *mut GnPolicy, env: *const GnEnv, action: *mut GnAction) -> GnStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| null("policy"))?;
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let a = action.as_mut().ok_or_else(|| null("action"))?;
        let out = p
            .params
            .step_batch(&[&e.obs], &p.state.hidden, &[false], Some(&mut p.cache))
            .map_err(lib_err)?;
        p.state.hidden = out.hidden;
        let dist = Categorical::from_logits(&out.logits).map_err(lib_err)?;
        *a = match dist.sample(&mut p.rng) {
            0 => GnAction::MoveForward,
            1 => GnAction::TurnLeft,
            2 => GnAction::TurnRight,
            _ => GnAction::Stop,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gn_policy_free(policy: *mut GnPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Synthesizes a referencing gesture toward `bearing_rad` into `out`
/// (`GN_GESTURE_LEN` values, step-major).
#[no_mangle]
pub unsafe extern "C" fn gn_referencing_gesture(
    bearing_rad: f64,
    anatomy_seed: u64,
    style_seed: u64,
    noise_sigma: f64,
    out: *mut f64,
    len: usize,
) -> GnStatus {
    guard(|| {
        if !bearing_rad.is_finite() {
            return Err((GnStatus::InvalidArgument, "bearing must be finite".into()));
        }
        let dst = out_slice(out, len, GN_GESTURE_LEN, "out")?;
        let g = referencing_gesture(bearing_rad, &GestureAnatomy::from_seed(anatomy_seed), style_seed, noise_sigma)
            .map_err(lib_err)?;
        dst.copy_from_slice(g.as_slice());
        Ok(())
    })
}
