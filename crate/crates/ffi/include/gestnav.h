#ifndef GESTNAV_H
#define GESTNAV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define GN_VISION_LEN 352

#define GN_GESTURE_LEN 9500

#define GN_NUM_ACTIONS 4

typedef enum GnStatus {
  GN_STATUS_OK = 0,
  GN_STATUS_NULL_POINTER = 1,
  GN_STATUS_INVALID_ARGUMENT = 2,
  GN_STATUS_OUT_OF_RANGE = 3,
  GN_STATUS_EPISODE_FINISHED = 4,
  GN_STATUS_GENERATION_FAILED = 5,
  GN_STATUS_IO = 6,
  GN_STATUS_CHECKPOINT = 7,
  GN_STATUS_BUFFER_TOO_SMALL = 8,
  GN_STATUS_INTERNAL = 9,
} GnStatus;

typedef enum GnCondition {
  GN_CONDITION_BASELINE = 0,
  GN_CONDITION_REFERENCING = 1,
  GN_CONDITION_INTERVENTION = 2,
} GnCondition;

typedef enum GnAction {
  GN_ACTION_MOVE_FORWARD = 0,
  GN_ACTION_TURN_LEFT = 1,
  GN_ACTION_TURN_RIGHT = 2,
  GN_ACTION_STOP = 3,
} GnAction;

/**
 * A simulator that samples episodes in one scene.
 */
typedef struct GnEnv GnEnv;

/**
 * A trained policy with its recurrent state.
 */
typedef struct GnPolicy GnPolicy;

/**
 * A generated or loaded scene.
 */
typedef struct GnScene GnScene;

typedef struct GnStepResult {
  double reward;
  bool collided;
  bool stopped;
  bool stop_eligible;
  bool done;
  bool success;
} GnStepResult;

typedef struct GnPose {
  double x;
  double y;
  double heading_deg;
} GnPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len - 1` bytes). Returns the full message
 * length in bytes, excluding the terminator.
 */
size_t gn_last_error_message(char *buf, size_t len);

/**
 * Generates a scene. `scene_type` is one of "kitchen", "living_room",
 * "bedroom", "bathroom".
 */
enum GnStatus gn_scene_generate(uint64_t seed, const char *scene_type, struct GnScene **out);

/**
 * Parses a scene from its JSON file format.
 */
enum GnStatus gn_scene_from_json(const char *json, struct GnScene **out);

/**
 * Grid size in cells and number of object instances.
 */
enum GnStatus gn_scene_info(const struct GnScene *scene,
                            size_t *cols,
                            size_t *rows,
                            size_t *num_objects);

void gn_scene_free(struct GnScene *scene);

/**
 * Creates a simulator over `scene` and samples its first episode. The
 * scene handle may be freed afterwards.
 */
enum GnStatus gn_env_new(const struct GnScene *scene,
                         enum GnCondition condition,
                         uint64_t anatomy_seed,
                         double noise_sigma,
                         uint64_t seed,
                         struct GnEnv **out);

/**
 * Starts the next sampled episode.
 */
enum GnStatus gn_env_reset(struct GnEnv *env);

enum GnStatus gn_env_step(struct GnEnv *env, enum GnAction action, struct GnStepResult *out);

enum GnStatus gn_env_pose(const struct GnEnv *env, struct GnPose *out);

/**
 * Copies the current observation. `vision` needs `GN_VISION_LEN` values;
 * `gesture` is optional (may be null) and needs `GN_GESTURE_LEN`.
 */
enum GnStatus gn_env_observation(const struct GnEnv *env,
                                 double *vision,
                                 size_t vision_len,
                                 double *gesture,
                                 size_t gesture_len,
                                 uint32_t *target);

/**
 * Steps taken, whether the episode is done and whether it succeeded.
 */
enum GnStatus gn_env_status(const struct GnEnv *env, uint32_t *steps, bool *done, bool *success);

void gn_env_free(struct GnEnv *env);

/**
 * Loads a policy checkpoint.
 */
enum GnStatus gn_policy_load(const char *path, struct GnPolicy **out);

/**
 * Clears the recurrent state before a new episode and reseeds sampling.
 */
enum GnStatus gn_policy_reset(struct GnPolicy *policy, uint64_t seed);

/**
 * Samples an action for the env's current observation and advances the
 * policy's recurrent state. Does not step the env.
 */
enum GnStatus gn_policy_act(struct GnPolicy *policy,
                            const struct GnEnv *env,
                            enum GnAction *action);

void gn_policy_free(struct GnPolicy *policy);

/**
 * Synthesizes a referencing gesture toward `bearing_rad` into `out`
 * (`GN_GESTURE_LEN` values, step-major).
 */
enum GnStatus gn_referencing_gesture(double bearing_rad,
                                     uint64_t anatomy_seed,
                                     uint64_t style_seed,
                                     double noise_sigma,
                                     double *out,
                                     size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GESTNAV_H */
