#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "axe/image.hpp"
#include "axe/rng.hpp"

namespace axe::env {

enum class EnvName { reacher2d, runner1d, cartpole_swingup };

EnvName parse_env_name(const std::string& s);
std::string to_string(EnvName name);

struct EnvConfig {
  EnvName name = EnvName::reacher2d;
  int height = 64;
  int width = 64;
  int frame_stack = 3;
  int action_repeat = 1;
  int episode_len = 200;
  int distractor = 0;          // 0 = none, 1..3 = procedural videos
  std::string distractor_dir;  // folder of frame_%05d.ppm, overrides distractor id
  double dt = 0.02;
  std::uint64_t seed = 0;
  bool reacher_dense = false;  // dense-reward debugging variant

  void validate() const;
};

// Frame stack of F RGB frames, oldest first, laid out 3F x H x W.
struct Observation {
  int frames = 0, h = 0, w = 0;
  std::vector<float> px;

  std::size_t frame_size() const { return static_cast<std::size_t>(3) * h * w; }
  const float* frame(int i) const { return px.data() + frame_size() * i; }
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
};

// Procedural looping background: 5 bouncing rectangles over a drifting
// sinusoidal gradient, fully determined by (video_id, frame_index mod loop).
// Loop length is round(20 s / dt) frames.
Frame distractor_frame(int video_id, std::int64_t frame_index, int h, int w, double dt);
std::int64_t distractor_loop_len(double dt);

struct EnvState {
  // reacher2d
  double theta[2] = {0, 0}, omega[2] = {0, 0}, target[2] = {0, 0};
  // runner1d
  double x = 0, vx = 0;
  // cartpole_swingup
  double cart_x = 0, cart_vx = 0, pole_theta = 0, pole_omega = 0;
};

class Env {
 public:
  explicit Env(EnvConfig cfg);

  int action_dim() const;
  const EnvConfig& config() const { return cfg_; }

  Observation reset(std::uint64_t episode_seed);
  StepResult step(const std::vector<double>& action);

  bool done() const { return step_count_ >= cfg_.episode_len; }
  int episode_step() const { return step_count_; }

  // monotone count of physics steps taken, across resets
  std::int64_t odometer() const { return odometer_; }

  Frame render_frame() const;
  const EnvState& state() const { return state_; }
  EnvState& mutable_state() { return state_; }  // test/diagnostic use
  Observation observation() const;

 private:
  void physics_step(const std::vector<double>& action);
  double instant_reward() const;
  Frame background() const;

  EnvConfig cfg_;
  EnvState state_;
  int step_count_ = 0;
  std::int64_t odometer_ = 0;
  std::vector<Frame> stack_;
  std::vector<Frame> custom_video_;
  bool has_reset_ = false;
};

Env make_env(const EnvConfig& cfg);

}  // namespace axe::env
