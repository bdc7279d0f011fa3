#ifndef REACHGUARD_H
#define REACHGUARD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum RgStatus {
  RG_STATUS_OK = 0,
  RG_STATUS_NULL_POINTER = 1,
  RG_STATUS_INVALID_ARGUMENT = 2,
  RG_STATUS_DIMENSION_MISMATCH = 3,
  RG_STATUS_OUT_OF_RANGE = 4,
  RG_STATUS_DEGENERATE = 5,
  RG_STATUS_FORMAT = 6,
  RG_STATUS_IO = 7,
  RG_STATUS_NUMERICAL = 8,
  RG_STATUS_PANIC = 9,
} RgStatus;

// Outcome of a planning episode.
typedef enum RgTermination {
  RG_TERMINATION_GOAL_REACHED = 0,
  RG_TERMINATION_STUCK = 1,
  RG_TERMINATION_COLLISION = 2,
  RG_TERMINATION_ITERATION_LIMIT = 3,
} RgTermination;

// Log of one receding-horizon episode.
typedef struct RgEpisode RgEpisode;

// Robot, scene, optional surrogate and planner settings, owned by value.
typedef struct RgPlanner RgPlanner;

// Kinematic chain with its collision spheres.
typedef struct RgRobot RgRobot;

// A set of convex zonotopic obstacles.
typedef struct RgScene RgScene;

// A neural occupancy surrogate together with its calibration.
typedef struct RgSurrogate RgSurrogate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rg_version(void);

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `cap - 1` bytes). Returns the full message length without the
// terminator, or 0 when the last call succeeded.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t rg_last_error_message(char *buf, size_t cap);

// Release a string returned by this library.
//
// # Safety
// `s` must be null or a string returned by an `rg_*` function and not yet freed.
void rg_string_free(char *s);

// Load a robot by built-in name (`planar2`, `spatial3`, `kinova7`) or JSON file path.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum RgStatus rg_robot_load(const char *name, struct RgRobot **out);

// Build a robot from its JSON description.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum RgStatus rg_robot_from_json(const char *json, struct RgRobot **out);

// # Safety
// `robot` must be null or a live handle.
void rg_robot_free(struct RgRobot *robot);

// Number of joints, or 0 for a null handle.
//
// # Safety
// `robot` must be null or a live handle.
size_t rg_robot_dof(const struct RgRobot *robot);

// Upper bound on the distance from the base to any point of the robot.
//
// # Safety
// `robot` must be null or a live handle.
double rg_robot_reach(const struct RgRobot *robot);

// Joint sphere centers at configuration `q`, base first, written as
// `x, y, z` triples into `out` (`out_len` must be `3 * (dof + 1)`).
//
// # Safety
// `robot` must be a live handle; `q` and `out` must hold `q_len` and `out_len` doubles.
enum RgStatus rg_robot_sphere_centers(const struct RgRobot *robot,
                                      const double *q,
                                      size_t q_len,
                                      double *out,
                                      size_t out_len);

// Sphere radii, base first (`out_len` must be `dof + 1`).
//
// # Safety
// `robot` must be a live handle; `out` must hold `out_len` doubles.
enum RgStatus rg_robot_sphere_radii(const struct RgRobot *robot, double *out, size_t out_len);

// Create an empty scene.
//
// # Safety
// `out` must be writable.
enum RgStatus rg_scene_new(struct RgScene **out);

// # Safety
// `scene` must be null or a live handle.
void rg_scene_free(struct RgScene *scene);

// Number of obstacles, or 0 for a null handle.
//
// # Safety
// `scene` must be null or a live handle.
size_t rg_scene_len(const struct RgScene *scene);

// Add an axis-aligned cube.
//
// # Safety
// `scene` must be a live handle; `center` must hold 3 doubles.
enum RgStatus rg_scene_add_cube(struct RgScene *scene, const double *center, double half_width);

// Add a full-dimensional 3D zonotope. `generators` holds `n_generators`
// columns of 3 doubles each.
//
// # Safety
// `scene` must be a live handle; `center` must hold 3 doubles and
// `generators` `3 * n_generators` doubles.
enum RgStatus rg_scene_add_zonotope(struct RgScene *scene,
                                    const double *center,
                                    const double *generators,
                                    size_t n_generators);

// Signed distance from `point` to the nearest obstacle (negative inside).
// An empty scene yields `+inf`.
//
// # Safety
// `scene` must be a live handle; `point` must hold 3 doubles; `out` must be writable.
enum RgStatus rg_scene_signed_distance(const struct RgScene *scene,
                                       const double *point,
                                       double *out);

// Load a trained surrogate directory that also contains `calibration.json`.
//
// # Safety
// `dir` must be a NUL-terminated path; `out` must be writable.
enum RgStatus rg_surrogate_load(const char *dir, struct RgSurrogate **out);

// # Safety
// `surrogate` must be null or a live handle.
void rg_surrogate_free(struct RgSurrogate *surrogate);

// Create a planner that copies the robot, the scene and the surrogate.
//
// `settings_json` may be null for defaults, or an object with optional
// `planner` and `trajectory` members. A non-null `surrogate` selects the
// conformalized neural mode unless the settings name a mode explicitly.
//
// # Safety
// `robot` and `scene` must be live handles; `surrogate` and `settings_json`
// may be null; `out` must be writable.
enum RgStatus rg_planner_new(const struct RgRobot *robot,
                             const struct RgScene *scene,
                             const struct RgSurrogate *surrogate,
                             const char *settings_json,
                             struct RgPlanner **out);

// # Safety
// `planner` must be null or a live handle.
void rg_planner_free(struct RgPlanner *planner);

// Solve one planning iteration from `(q0, qd0)` toward `waypoint`.
//
// On success `*feasible` is 1 and `k_out` holds the certified trajectory
// parameter, or `*feasible` is 0 and `k_out` is left untouched.
//
// # Safety
// `planner` must be a live handle; every array must hold `n` doubles;
// `feasible` must be writable.
enum RgStatus rg_planner_solve(const struct RgPlanner *planner,
                               const double *q0,
                               const double *qd0,
                               const double *waypoint,
                               size_t n,
                               uint64_t stream,
                               double *k_out,
                               int32_t *feasible);

// Run a receding-horizon episode from rest at `q_start` toward `q_goal`.
//
// # Safety
// `planner` must be a live handle; `q_start` and `q_goal` must hold `n`
// doubles; `out` must be writable.
enum RgStatus rg_planner_run_episode(const struct RgPlanner *planner,
                                     const double *q_start,
                                     const double *q_goal,
                                     size_t n,
                                     size_t max_iters,
                                     struct RgEpisode **out);

// # Safety
// `episode` must be null or a live handle.
void rg_episode_free(struct RgEpisode *episode);

// How the episode ended.
//
// # Safety
// `episode` must be a live handle; `out` must be writable.
enum RgStatus rg_episode_termination(const struct RgEpisode *episode, enum RgTermination *out);

// Number of planning iterations, or 0 for a null handle.
//
// # Safety
// `episode` must be null or a live handle.
size_t rg_episode_iterations(const struct RgEpisode *episode);

// Executed duration in seconds, or NaN for a null handle.
//
// # Safety
// `episode` must be null or a live handle.
double rg_episode_executed_time(const struct RgEpisode *episode);

// Final configuration (`n` must equal the robot's joint count).
//
// # Safety
// `episode` must be a live handle; `q_out` must hold `n` doubles.
enum RgStatus rg_episode_final_q(const struct RgEpisode *episode, double *q_out, size_t n);

// Full episode log as JSON. Release the string with [`rg_string_free`].
//
// # Safety
// `episode` must be a live handle; `out` must be writable.
enum RgStatus rg_episode_to_json(const struct RgEpisode *episode, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REACHGUARD_H */
