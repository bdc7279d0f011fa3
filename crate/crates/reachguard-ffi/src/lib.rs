//! C ABI for reachguard.
//!
//! Every object crosses the boundary as an opaque handle created by a
//! `rg_*_new`/`rg_*_load` function and released by the matching `rg_*_free`.
//! Fallible calls return an [`RgStatus`]; on failure the message is kept per
//! thread and can be copied out with [`rg_last_error_message`].
//!
//! Array arguments are `(pointer, length)` pairs of `double`. Output arrays are
//! written only when the call returns [`RgStatus::Ok`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::{DMatrix, DVector, Vector3};
use reachguard::conformal::{CalibrationResult, ConformalSfo};
use reachguard::distance::Obstacle;
use reachguard::kinematics::RobotModel;
use reachguard::neural::NeuralSfo;
use reachguard::planner::{plan_episode, solve, EpisodeLog, PlanProblem, PlanStatus, PlannerConfig, Termination};
use reachguard::trajectory::TrajectoryConfig;
use reachguard::zonotope::Zonotope;
use reachguard::Error;
use serde::Deserialize;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    OutOfRange = 4,
    Degenerate = 5,
    Format = 6,
    Io = 7,
    Numerical = 8,
    Panic = 9,
}

/// Outcome of a planning episode.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgTermination {
    GoalReached = 0,
    Stuck = 1,
    Collision = 2,
    IterationLimit = 3,
}

impl From<Termination> for RgTermination {
    fn from(t: Termination) -> Self {
        match t {
            Termination::GoalReached => Self::GoalReached,
            Termination::Stuck => Self::Stuck,
            Termination::Collision => Self::Collision,
            Termination::IterationLimit => Self::IterationLimit,
        }
    }
}

/// Kinematic chain with its collision spheres.
pub struct RgRobot {
    model: RobotModel,
}

/// A set of convex zonotopic obstacles.
pub struct RgScene {
    obstacles: Vec<Obstacle>,
}

/// A neural occupancy surrogate together with its calibration.
pub struct RgSurrogate {
    inner: ConformalSfo,
}

/// Robot, scene, optional surrogate and planner settings, owned by value.
pub struct RgPlanner {
    model: RobotModel,
    obstacles: Vec<Obstacle>,
    surrogate: Option<ConformalSfo>,
    traj: TrajectoryConfig,
    config: PlannerConfig,
}

/// Log of one receding-horizon episode.
pub struct RgEpisode {
    log: EpisodeLog,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct PlannerSettings {
    planner: PlannerConfig,
    trajectory: TrajectoryConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RgStatus {
    match err {
        Error::DimensionMismatch { .. } => RgStatus::DimensionMismatch,
        Error::OutOfRange { .. } => RgStatus::OutOfRange,
        Error::Degenerate { .. } => RgStatus::Degenerate,
        Error::InvalidArgument(_) => RgStatus::InvalidArgument,
        Error::Format(_) | Error::Json(_) => RgStatus::Format,
        Error::Io(_) => RgStatus::Io,
        Error::TrigWidth(_) | Error::Diverged(_) | Error::RejectionBudget(_) => RgStatus::Numerical,
    }
}

struct Failure(RgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(RgStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> Failure {
    Failure(RgStatus::InvalidArgument, msg.into())
}

/// Run `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> FfiResult<()>) -> RgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            RgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| bad(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn drop_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn check_len(got: usize, expected: usize) -> FfiResult<()> {
    if got != expected {
        return Err(Error::DimensionMismatch { expected, got }.into());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap - 1` bytes). Returns the full message length without the
/// terminator, or 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rg_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && cap > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by an `rg_*` function and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a robot by built-in name (`planar2`, `spatial3`, `kinova7`) or JSON file path.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_robot_load(name: *const c_char, out: *mut *mut RgRobot) -> RgStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        put(out, RgRobot { model: RobotModel::load(name)? })
    })
}

/// Build a robot from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_robot_from_json(json: *const c_char, out: *mut *mut RgRobot) -> RgStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        put(out, RgRobot { model: RobotModel::from_json(json)? })
    })
}

/// # Safety
/// `robot` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_robot_free(robot: *mut RgRobot) {
    drop_handle(robot);
}

/// Number of joints, or 0 for a null handle.
///
/// # Safety
/// `robot` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_robot_dof(robot: *const RgRobot) -> usize {
    robot.as_ref().map_or(0, |r| r.model.n_q())
}

/// Upper bound on the distance from the base to any point of the robot.
///
/// # Safety
/// `robot` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_robot_reach(robot: *const RgRobot) -> f64 {
    robot.as_ref().map_or(f64::NAN, |r| r.model.reach())
}

/// Joint sphere centers at configuration `q`, base first, written as
/// `x, y, z` triples into `out` (`out_len` must be `3 * (dof + 1)`).
///
/// # Safety
/// `robot` must be a live handle; `q` and `out` must hold `q_len` and `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_robot_sphere_centers(
    robot: *const RgRobot,
    q: *const f64,
    q_len: usize,
    out: *mut f64,
    out_len: usize,
) -> RgStatus {
    guard(|| {
        let robot = handle(robot, "robot")?;
        let q = slice_arg(q, q_len, "q")?;
        check_len(out_len, 3 * (robot.model.n_q() + 1))?;
        let centers = robot.model.sphere_centers(q)?;
        let out = out_slice(out, out_len, "out")?;
        for (dst, c) in out.chunks_exact_mut(3).zip(&centers) {
            dst.copy_from_slice(c.as_slice());
        }
        Ok(())
    })
}

/// Sphere radii, base first (`out_len` must be `dof + 1`).
///
/// # Safety
/// `robot` must be a live handle; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_robot_sphere_radii(robot: *const RgRobot, out: *mut f64, out_len: usize) -> RgStatus {
    guard(|| {
        let robot = handle(robot, "robot")?;
        let radii = robot.model.sphere_radii();
        check_len(out_len, radii.len())?;
        out_slice(out, out_len, "out")?.copy_from_slice(&radii);
        Ok(())
    })
}

/// Create an empty scene.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_scene_new(out: *mut *mut RgScene) -> RgStatus {
    guard(|| put(out, RgScene { obstacles: Vec::new() }))
}

/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_scene_free(scene: *mut RgScene) {
    drop_handle(scene);
}

/// Number of obstacles, or 0 for a null handle.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_scene_len(scene: *const RgScene) -> usize {
    scene.as_ref().map_or(0, |s| s.obstacles.len())
}

/// Add an axis-aligned cube.
///
/// # Safety
/// `scene` must be a live handle; `center` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_scene_add_cube(scene: *mut RgScene, center: *const f64, half_width: f64) -> RgStatus {
    guard(|| {
        let scene = scene.as_mut().ok_or_else(|| null("scene"))?;
        let c = slice_arg(center, 3, "center")?;
        scene.obstacles.push(Obstacle::cube([c[0], c[1], c[2]], half_width)?);
        Ok(())
    })
}

/// Add a full-dimensional 3D zonotope. `generators` holds `n_generators`
/// columns of 3 doubles each.
///
/// # Safety
/// `scene` must be a live handle; `center` must hold 3 doubles and
/// `generators` `3 * n_generators` doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_scene_add_zonotope(
    scene: *mut RgScene,
    center: *const f64,
    generators: *const f64,
    n_generators: usize,
) -> RgStatus {
    guard(|| {
        let scene = scene.as_mut().ok_or_else(|| null("scene"))?;
        let c = slice_arg(center, 3, "center")?;
        let g = slice_arg(generators, 3 * n_generators, "generators")?;
        let z = Zonotope::new(DVector::from_column_slice(c), DMatrix::from_column_slice(3, n_generators, g))?;
        scene.obstacles.push(Obstacle::new(z)?);
        Ok(())
    })
}

/// Signed distance from `point` to the nearest obstacle (negative inside).
/// An empty scene yields `+inf`.
///
/// # Safety
/// `scene` must be a live handle; `point` must hold 3 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_scene_signed_distance(scene: *const RgScene, point: *const f64, out: *mut f64) -> RgStatus {
    guard(|| {
        let scene = handle(scene, "scene")?;
        let p = slice_arg(point, 3, "point")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = Vector3::new(p[0], p[1], p[2]);
        *out = scene
            .obstacles
            .iter()
            .map(|o| o.signed_distance(&p))
            .fold(f64::INFINITY, f64::min);
        Ok(())
    })
}

/// Load a trained surrogate directory that also contains `calibration.json`.
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_surrogate_load(dir: *const c_char, out: *mut *mut RgSurrogate) -> RgStatus {
    guard(|| {
        let dir = Path::new(str_arg(dir, "dir")?);
        let sfo = NeuralSfo::load(dir)?;
        let text = std::fs::read_to_string(dir.join("calibration.json")).map_err(Error::from)?;
        let calibration = CalibrationResult::from_json(&text)?;
        put(out, RgSurrogate { inner: ConformalSfo::new(sfo, calibration)? })
    })
}

/// # Safety
/// `surrogate` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_surrogate_free(surrogate: *mut RgSurrogate) {
    drop_handle(surrogate);
}

/// Create a planner that copies the robot, the scene and the surrogate.
///
/// `settings_json` may be null for defaults, or an object with optional
/// `planner` and `trajectory` members. A non-null `surrogate` selects the
/// conformalized neural mode unless the settings name a mode explicitly.
///
/// # Safety
/// `robot` and `scene` must be live handles; `surrogate` and `settings_json`
/// may be null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_planner_new(
    robot: *const RgRobot,
    scene: *const RgScene,
    surrogate: *const RgSurrogate,
    settings_json: *const c_char,
    out: *mut *mut RgPlanner,
) -> RgStatus {
    guard(|| {
        let robot = handle(robot, "robot")?;
        let scene = handle(scene, "scene")?;
        let surrogate = surrogate.as_ref().map(|s| s.inner.clone());
        let settings = if settings_json.is_null() {
            let mut s = PlannerSettings::default();
            if surrogate.is_some() {
                s.planner.mode = reachguard::planner::PlanMode::ConformalizedNeural;
            }
            s
        } else {
            serde_json::from_str(str_arg(settings_json, "settings_json")?).map_err(Error::from)?
        };
        let planner = RgPlanner {
            model: robot.model.clone(),
            obstacles: scene.obstacles.clone(),
            surrogate,
            traj: settings.trajectory,
            config: settings.planner,
        };
        planner.problem()?;
        put(out, planner)
    })
}

impl RgPlanner {
    fn problem(&self) -> reachguard::Result<PlanProblem<'_>> {
        PlanProblem::new(&self.model, &self.obstacles, self.traj, self.surrogate.as_ref(), self.config)
    }
}

/// # Safety
/// `planner` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_planner_free(planner: *mut RgPlanner) {
    drop_handle(planner);
}

/// Solve one planning iteration from `(q0, qd0)` toward `waypoint`.
///
/// On success `*feasible` is 1 and `k_out` holds the certified trajectory
/// parameter, or `*feasible` is 0 and `k_out` is left untouched.
///
/// # Safety
/// `planner` must be a live handle; every array must hold `n` doubles;
/// `feasible` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_planner_solve(
    planner: *const RgPlanner,
    q0: *const f64,
    qd0: *const f64,
    waypoint: *const f64,
    n: usize,
    stream: u64,
    k_out: *mut f64,
    feasible: *mut i32,
) -> RgStatus {
    guard(|| {
        let planner = handle(planner, "planner")?;
        check_len(n, planner.model.n_q())?;
        let q0 = slice_arg(q0, n, "q0")?;
        let qd0 = slice_arg(qd0, n, "qd0")?;
        let waypoint = slice_arg(waypoint, n, "waypoint")?;
        if feasible.is_null() {
            return Err(null("feasible"));
        }
        let k_out = out_slice(k_out, n, "k_out")?;
        let result = solve(&planner.problem()?, q0, qd0, waypoint, stream)?;
        match result.status {
            PlanStatus::Feasible(k) => {
                k_out.copy_from_slice(&k);
                *feasible = 1;
            }
            PlanStatus::Infeasible => *feasible = 0,
        }
        Ok(())
    })
}

/// Run a receding-horizon episode from rest at `q_start` toward `q_goal`.
///
/// # Safety
/// `planner` must be a live handle; `q_start` and `q_goal` must hold `n`
/// doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_planner_run_episode(
    planner: *const RgPlanner,
    q_start: *const f64,
    q_goal: *const f64,
    n: usize,
    max_iters: usize,
    out: *mut *mut RgEpisode,
) -> RgStatus {
    guard(|| {
        let planner = handle(planner, "planner")?;
        check_len(n, planner.model.n_q())?;
        let q_start = slice_arg(q_start, n, "q_start")?;
        let q_goal = slice_arg(q_goal, n, "q_goal")?;
        let log = plan_episode(&planner.problem()?, q_start, q_goal, max_iters)?;
        put(out, RgEpisode { log })
    })
}

/// # Safety
/// `episode` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_episode_free(episode: *mut RgEpisode) {
    drop_handle(episode);
}

/// How the episode ended.
///
/// # Safety
/// `episode` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_episode_termination(episode: *const RgEpisode, out: *mut RgTermination) -> RgStatus {
    guard(|| {
        let episode = handle(episode, "episode")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = episode.log.termination.into();
        Ok(())
    })
}

/// Number of planning iterations, or 0 for a null handle.
///
/// # Safety
/// `episode` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_episode_iterations(episode: *const RgEpisode) -> usize {
    episode.as_ref().map_or(0, |e| e.log.iterations.len())
}

/// Executed duration in seconds, or NaN for a null handle.
///
/// # Safety
/// `episode` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_episode_executed_time(episode: *const RgEpisode) -> f64 {
    episode.as_ref().map_or(f64::NAN, |e| e.log.executed_time())
}

/// Final configuration (`n` must equal the robot's joint count).
///
/// # Safety
/// `episode` must be a live handle; `q_out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_episode_final_q(episode: *const RgEpisode, q_out: *mut f64, n: usize) -> RgStatus {
    guard(|| {
        let episode = handle(episode, "episode")?;
        check_len(n, episode.log.final_q.len())?;
        out_slice(q_out, n, "q_out")?.copy_from_slice(&episode.log.final_q);
        Ok(())
    })
}

/// Full episode log as JSON. Release the string with [`rg_string_free`].
///
/// # Safety
/// `episode` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_episode_to_json(episode: *const RgEpisode, out: *mut *mut c_char) -> RgStatus {
    guard(|| {
        let episode = handle(episode, "episode")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = episode.log.to_json()?;
        *out = CString::new(json).map_err(|_| bad("episode JSON contains NUL"))?.into_raw();
        Ok(())
    })
}
