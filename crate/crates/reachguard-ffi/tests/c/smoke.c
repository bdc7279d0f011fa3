#include <math.h>
#include <stdio.h>
#include "reachguard.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      char msg[256];                                                  \
      rg_last_error_message(msg, sizeof msg);                         \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, msg); \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  RgRobot *robot = NULL;
  RgScene *scene = NULL;
  RgPlanner *planner = NULL;
  RgEpisode *episode = NULL;
  double center[3] = {0.0, -0.45, 0.3};
  double probe[3] = {0.0, -0.45, 0.0};
  double q_start[3] = {0.0, 0.4, 0.3};
  double q_goal[3] = {0.6, 0.2, -0.2};
  double dist = 0.0;
  RgTermination term = RG_TERMINATION_STUCK;

  CHECK(rg_robot_load("spatial3", &robot) == RG_STATUS_OK);
  CHECK(rg_robot_dof(robot) == 3);
  CHECK(rg_robot_load(NULL, &robot) == RG_STATUS_NULL_POINTER);
  CHECK(rg_scene_new(&scene) == RG_STATUS_OK);
  CHECK(rg_scene_add_cube(scene, center, 0.1) == RG_STATUS_OK);
  CHECK(rg_scene_signed_distance(scene, probe, &dist) == RG_STATUS_OK);
  CHECK(fabs(dist - 0.2) < 1e-9);
  CHECK(rg_planner_new(robot, scene, NULL, NULL, &planner) == RG_STATUS_OK);
  CHECK(rg_planner_run_episode(planner, q_start, q_goal, 3, 50, &episode) == RG_STATUS_OK);
  CHECK(rg_episode_termination(episode, &term) == RG_STATUS_OK);
  CHECK(term == RG_TERMINATION_GOAL_REACHED);
  printf("reachguard %s: goal reached in %zu iterations\n", rg_version(), rg_episode_iterations(episode));

  rg_episode_free(episode);
  rg_planner_free(planner);
  rg_scene_free(scene);
  rg_robot_free(robot);
  return 0;
}
