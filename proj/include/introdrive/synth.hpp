#ifndef INTRODRIVE_SYNTH_HPP
#define INTRODRIVE_SYNTH_HPP

// Deterministic synthetic driving clips with known causal structure. Each
// clip has exactly one designated causal element (traffic light, stop sign,
// lead vehicle, or road curvature) that fully determines the scripted
// control trace and the template description/explanation pair. Ground-truth
// causal masks mark the feature-grid cells covering that element per frame.
// Optional distractors (a bright billboard) are salient but carry no causal
// information.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "introdrive/bddx.hpp"
#include "introdrive/dataset.hpp"
#include "introdrive/image.hpp"
#include "introdrive/signal_prep.hpp"

namespace introdrive {

enum class ActionClass { kForward, kSlow, kStop, kAccelerate, kTurnLeft, kTurnRight };

inline const char* action_name(ActionClass a) {
  switch (a) {
    case ActionClass::kForward: return "forward";
    case ActionClass::kSlow: return "slow";
    case ActionClass::kStop: return "stop";
    case ActionClass::kAccelerate: return "accelerate";
    case ActionClass::kTurnLeft: return "turn-left";
    case ActionClass::kTurnRight: return "turn-right";
  }
  return "?";
}

enum class CauseKind { kGreenLight, kLightTurnsGreen, kRedLight, kStopSign, kLeadVehicle, kRoadCurve };

inline const char* cause_name(CauseKind c) {
  switch (c) {
    case CauseKind::kGreenLight: return "green-light";
    case CauseKind::kLightTurnsGreen: return "light-turns-green";
    case CauseKind::kRedLight: return "red-light";
    case CauseKind::kStopSign: return "stop-sign";
    case CauseKind::kLeadVehicle: return "lead-vehicle";
    case CauseKind::kRoadCurve: return "road-curve";
  }
  return "?";
}

struct Scenario {
  std::uint64_t seed = 0;
  ActionClass action = ActionClass::kForward;
  CauseKind cause = CauseKind::kGreenLight;
  double duration_s = 2.6;
  bool distractor = false;

  // sampled parameters (filled by sample())
  double v0 = 10.0;          // initial speed, m/s
  double course0 = 90.0;     // initial course, degrees
  int side = 1;              // roadside of light/sign: +1 right, -1 left
  double d0 = 30.0;          // initial distance to the causal object, m
  double t_begin = 0.4;      // action onset
  double t_ramp = 1.2;       // action ramp duration
  double delta_v = 4.0;      // speed change magnitude
  double turn_deg = 30.0;    // total course change for turns
  double margin = 5.0;       // stop margin before the object
  double light_switch_t = 0.8;
  double distractor_x = 30.0, distractor_y = 12.0;

  /// Draws every free parameter from the scenario seed in one fixed order.
  static Scenario sample(std::uint64_t seed, ActionClass action, CauseKind cause,
                         bool distractor, double duration_s = 2.6) {
    Scenario s;
    s.seed = seed;
    s.action = action;
    s.cause = cause;
    s.distractor = distractor;
    s.duration_s = duration_s;
    std::mt19937_64 rng(seed);
    auto uni = [&rng](double lo, double hi) {
      return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    s.course0 = uni(75.0, 105.0);
    s.side = (rng() & 1) ? 1 : -1;
    switch (action) {
      // speed ranges overlap across classes and action onsets vary widely, so
      // the control trace is not recoverable from the priors alone; the class
      // and the timing have to be read off the causal object
      case ActionClass::kForward:
        s.v0 = uni(6.5, 11.5);
        s.d0 = s.v0 * duration_s + uni(8.0, 20.0);
        break;
      case ActionClass::kAccelerate:
        s.v0 = uni(4.0, 7.0);
        s.light_switch_t = uni(0.4, 1.0);
        s.t_begin = s.light_switch_t + 0.15;
        s.t_ramp = uni(1.0, 1.2);
        s.delta_v = uni(3.0, 4.5);
        s.d0 = uni(11.0, 17.0);
        break;
      case ActionClass::kSlow:
        s.v0 = uni(7.5, 11.5);
        s.t_begin = uni(0.3, 0.9);
        s.t_ramp = uni(1.1, 1.4);
        s.delta_v = uni(3.5, 5.0);
        s.d0 = uni(15.0, 21.0);  // initial gap to the lead vehicle
        break;
      case ActionClass::kStop:
        s.v0 = uni(6.5, 9.5);
        s.t_begin = uni(0.2, 0.7);
        s.t_ramp = uni(1.3, 1.7);
        s.margin = uni(4.0, 7.0);
        s.d0 = s.v0 * s.t_begin + s.v0 * s.t_ramp / 2.0 + s.margin;
        break;
      case ActionClass::kTurnLeft:
      case ActionClass::kTurnRight:
        s.v0 = uni(6.5, 11.0);
        s.t_begin = uni(0.3, 0.7);
        s.t_ramp = uni(1.3, 1.7);
        s.turn_deg = uni(10.0, 16.0);
        break;
    }
    // billboard on the opposite side of the causal object, in the sky band
    const int dside = (action == ActionClass::kTurnLeft)    ? 1
                      : (action == ActionClass::kTurnRight) ? -1
                                                            : -s.side;
    s.distractor_x = dside > 0 ? uni(112.0, 138.0) : uni(20.0, 46.0);
    s.distractor_y = uni(7.0, 16.0);
    return s;
  }
};

struct SynthClip {
  std::string id;
  std::vector<Image> frames;
  SensorLog log;
  std::vector<double> script_accel;  // central-difference of the scripted speed
  AnnotatedClip annotation;
  std::vector<std::vector<std::uint8_t>> masks;
  ClipMeta meta;
};

namespace synth_detail {

inline double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * (3.0 - 2.0 * u);
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

struct Rgb {
  std::uint8_t r, g, b;
};

inline void fill_rect(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  x0 = clampi(x0, 0, img.width - 1);
  x1 = clampi(x1, 0, img.width - 1);
  y0 = clampi(y0, 0, img.height - 1);
  y1 = clampi(y1, 0, img.height - 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      std::uint8_t* p = img.px(y, x);
      p[0] = c.r;
      p[1] = c.g;
      p[2] = c.b;
    }
}

inline void fill_disc(Image& img, double cx, double cy, double radius, Rgb c) {
  const int x0 = clampi(static_cast<int>(cx - radius - 1), 0, img.width - 1);
  const int x1 = clampi(static_cast<int>(cx + radius + 1), 0, img.width - 1);
  const int y0 = clampi(static_cast<int>(cy - radius - 1), 0, img.height - 1);
  const int y1 = clampi(static_cast<int>(cy + radius + 1), 0, img.height - 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) {
        std::uint8_t* p = img.px(y, x);
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
      }
}

struct Box {
  double x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  bool valid() const { return x1 >= x0 && y1 >= y0; }
  void include(double x, double y) {
    if (!valid()) {
      x0 = x1 = x;
      y0 = y1 = y;
    } else {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
};

inline constexpr int kHorizonY = 34;

/// Perspective progress of an object at distance d: 0 at the horizon,
/// 1 right in front of the camera.
inline double progress(double d) {
  const double far = 48.0, near = 4.0;
  return std::clamp((far - d) / (far - near), 0.0, 1.0);
}

inline double road_half_width(double p) { return 6.0 + 54.0 * p; }

/// Lateral deviation of the road center at row progress p for a bending
/// road; largest at the horizon, zero at the camera.
inline double road_dev(double p, double bend) { return bend * std::pow(1.0 - p, 1.5); }

inline void draw_road(Image& img, double bend) {
  fill_rect(img, 0, 0, img.width - 1, kHorizonY - 1, {98, 118, 148});           // sky
  fill_rect(img, 0, kHorizonY, img.width - 1, img.height - 1, {96, 138, 92});   // ground
  for (int y = kHorizonY; y < img.height; ++y) {
    const double p = static_cast<double>(y - kHorizonY) / (img.height - 1 - kHorizonY);
    const double cx = 80.0 + road_dev(p, bend);
    const double hw = road_half_width(p);
    fill_rect(img, static_cast<int>(cx - hw), y, static_cast<int>(cx + hw), y, {72, 72, 76});
    if ((y / 6) % 2 == 0) {
      const int lw = std::max(1, static_cast<int>(1 + 2 * p));
      fill_rect(img, static_cast<int>(cx) - lw / 2, y, static_cast<int>(cx) + lw / 2, y,
                {208, 208, 96});
    }
  }
}

inline Box draw_light(Image& img, double d, int side, bool green) {
  const double p = progress(d);
  const double xa = 80.0 + side * (10.0 + 52.0 * p);
  const double ya = kHorizonY - 1 - 25.0 * p;
  const int w = static_cast<int>(3 + 11 * p);
  const int h = static_cast<int>(1.5 * w);
  const int pole_w = std::max(1, static_cast<int>(1 + 2 * p));
  fill_rect(img, static_cast<int>(xa) - pole_w / 2, static_cast<int>(ya + h),
            static_cast<int>(xa) + pole_w / 2, static_cast<int>(kHorizonY + 26 * p), {58, 58, 60});
  fill_rect(img, static_cast<int>(xa - w / 2.0), static_cast<int>(ya),
            static_cast<int>(xa + w / 2.0), static_cast<int>(ya + h), {40, 40, 46});
  const Rgb col = green ? Rgb{66, 228, 82} : Rgb{235, 58, 48};
  fill_disc(img, xa, ya + 0.32 * h, std::max(1.0, 0.38 * w), col);
  Box b;
  b.include(xa - w / 2.0 - 1, ya - 1);
  b.include(xa + w / 2.0 + 1, ya + h + 1);
  return b;
}

inline Box draw_sign(Image& img, double d, int side) {
  const double p = progress(d);
  const double xa = 80.0 + side * (9.0 + 49.0 * p);
  const double yc = kHorizonY - 1 - 12.0 * p;
  const double r = 2.0 + 7.0 * p;
  const int pole_w = std::max(1, static_cast<int>(1 + 2 * p));
  fill_rect(img, static_cast<int>(xa) - pole_w / 2, static_cast<int>(yc + r),
            static_cast<int>(xa) + pole_w / 2, static_cast<int>(kHorizonY + 20 * p), {70, 70, 72});
  fill_disc(img, xa, yc, r, {235, 235, 235});
  fill_disc(img, xa, yc, std::max(1.0, r - std::max(1.0, r / 3.0)), {214, 32, 32});
  Box b;
  b.include(xa - r - 1, yc - r - 1);
  b.include(xa + r + 1, yc + r + 1);
  return b;
}

inline Box draw_lead(Image& img, double gap) {
  const double p = progress(gap);
  const double yb = kHorizonY + 2 + 38.0 * p;
  const double w = 5.0 + 38.0 * p;
  const double h = 0.55 * w;
  const double cx = 80.0;
  fill_rect(img, static_cast<int>(cx - w / 2), static_cast<int>(yb - h),
            static_cast<int>(cx + w / 2), static_cast<int>(yb), {44, 58, 148});
  fill_rect(img, static_cast<int>(cx - w / 2 + w * 0.12), static_cast<int>(yb - h),
            static_cast<int>(cx + w / 2 - w * 0.12), static_cast<int>(yb - h + h * 0.3),
            {96, 116, 196});
  const int wheel = std::max(1, static_cast<int>(h * 0.2));
  fill_rect(img, static_cast<int>(cx - w / 2), static_cast<int>(yb - wheel),
            static_cast<int>(cx - w / 2 + wheel), static_cast<int>(yb), {15, 15, 15});
  fill_rect(img, static_cast<int>(cx + w / 2 - wheel), static_cast<int>(yb - wheel),
            static_cast<int>(cx + w / 2), static_cast<int>(yb), {15, 15, 15});
  Box b;
  b.include(cx - w / 2 - 1, yb - h - 1);
  b.include(cx + w / 2 + 1, yb + 1);
  return b;
}

inline void draw_billboard(Image& img, double cx, double cy) {
  fill_rect(img, static_cast<int>(cx - 9), static_cast<int>(cy - 6), static_cast<int>(cx + 9),
            static_cast<int>(cy + 6), {250, 250, 250});
  fill_rect(img, static_cast<int>(cx - 7), static_cast<int>(cy - 4), static_cast<int>(cx + 7),
            static_cast<int>(cy + 4), {252, 214, 36});
  fill_rect(img, static_cast<int>(cx) - 1, static_cast<int>(cy + 6), static_cast<int>(cx) + 1,
            static_cast<int>(cy + 12), {120, 120, 120});
}

/// Feature-grid cells (12x20 over 90x160) whose tile intersects the box,
/// inflated by 2 px.
inline std::vector<std::uint8_t> box_to_mask(const Box& box) {
  std::vector<std::uint8_t> mask(kFeatureRegions, 0);
  if (!box.valid()) return mask;
  const double cell_h = static_cast<double>(kFrameHeight) / kFeatureGridH;
  const double cell_w = static_cast<double>(kFrameWidth) / kFeatureGridW;
  for (int r = 0; r < kFeatureGridH; ++r)
    for (int c = 0; c < kFeatureGridW; ++c) {
      const double y0 = r * cell_h, y1 = (r + 1) * cell_h;
      const double x0 = c * cell_w, x1 = (c + 1) * cell_w;
      if (x1 >= box.x0 - 2 && x0 <= box.x1 + 2 && y1 >= box.y0 - 2 && y0 <= box.y1 + 2)
        mask[r * kFeatureGridW + c] = 1;
    }
  return mask;
}

/// Mask for a curving road: cells where the bent road surface differs from
/// the straight one.
inline std::vector<std::uint8_t> curve_mask(double bend) {
  std::vector<std::uint8_t> mask(kFeatureRegions, 0);
  const double cell_h = static_cast<double>(kFrameHeight) / kFeatureGridH;
  const double cell_w = static_cast<double>(kFrameWidth) / kFeatureGridW;
  for (int y = kHorizonY; y < kFrameHeight; ++y) {
    const double p = static_cast<double>(y - kHorizonY) / (kFrameHeight - 1 - kHorizonY);
    const double dev = road_dev(p, bend);
    if (std::abs(dev) < 2.0) continue;
    const double hw = road_half_width(p);
    // the two edges that moved: [80-hw, 80-hw+dev] and [80+hw, 80+hw+dev]
    for (double edge : {80.0 - hw, 80.0 + hw}) {
      const double lo = std::min(edge, edge + dev), hi = std::max(edge, edge + dev);
      const int c0 = clampi(static_cast<int>(lo / cell_w), 0, kFeatureGridW - 1);
      const int c1 = clampi(static_cast<int>(hi / cell_w), 0, kFeatureGridW - 1);
      const int r = clampi(static_cast<int>(y / cell_h), 0, kFeatureGridH - 1);
      for (int c = c0; c <= c1; ++c) mask[r * kFeatureGridW + c] = 1;
    }
  }
  return mask;
}

}  // namespace synth_detail

// ---------------------------------------------------------------------------
// Scripted signals
// ---------------------------------------------------------------------------

/// Speed (m/s) of the scripted ego vehicle at time t.
inline double scripted_speed(const Scenario& s, double t) {
  using synth_detail::smoothstep;
  switch (s.action) {
    case ActionClass::kForward:
      return s.v0;
    case ActionClass::kAccelerate:
      return s.v0 + s.delta_v * smoothstep((t - s.t_begin) / s.t_ramp);
    case ActionClass::kSlow:
      return s.v0 - s.delta_v * smoothstep((t - s.t_begin) / s.t_ramp);
    case ActionClass::kStop: {
      if (t <= s.t_begin) return s.v0;
      if (t >= s.t_begin + s.t_ramp) return 0.0;
      return s.v0 * (1.0 + std::cos(M_PI * (t - s.t_begin) / s.t_ramp)) / 2.0;
    }
    case ActionClass::kTurnLeft:
    case ActionClass::kTurnRight:
      return s.v0;
  }
  return s.v0;
}

inline double scripted_course(const Scenario& s, double t) {
  using synth_detail::smoothstep;
  double course = s.course0;
  if (s.action == ActionClass::kTurnLeft)
    course -= s.turn_deg * smoothstep((t - s.t_begin) / s.t_ramp);
  else if (s.action == ActionClass::kTurnRight)
    course += s.turn_deg * smoothstep((t - s.t_begin) / s.t_ramp);
  return wrap_deg_360(course);
}

struct SentencePair {
  std::string description;
  std::string justification;
};

inline SentencePair template_sentences(ActionClass action, CauseKind cause) {
  switch (action) {
    case ActionClass::kForward:
      return {"the car drives forward", "because the light is green"};
    case ActionClass::kAccelerate:
      return {"the car accelerates", "because the light turned green"};
    case ActionClass::kSlow:
      return {"the car slows down", "because there is a car in front of it"};
    case ActionClass::kStop:
      return cause == CauseKind::kStopSign
                 ? SentencePair{"the car stops", "because there is a stop sign"}
                 : SentencePair{"the car stops", "because the light is red"};
    case ActionClass::kTurnLeft:
      return {"the car turns left", "because the road curves to the left"};
    case ActionClass::kTurnRight:
      return {"the car turns right", "because the road curves to the right"};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

inline SynthClip generate(const Scenario& s, const std::string& clip_id) {
  using namespace synth_detail;
  if (s.duration_s < 1.0) throw ContractError("scenario duration too short");
  SynthClip clip;
  clip.id = clip_id;
  const int n = static_cast<int>(std::lround(s.duration_s * kSampleRateHz));
  const double dt = 1.0 / kSampleRateHz;

  // sensor log on the exact 10 Hz grid
  std::vector<double> speed(n), course(n);
  for (int i = 0; i < n; ++i) {
    speed[i] = scripted_speed(s, i * dt);
    course[i] = scripted_course(s, i * dt);
  }
  double x_m = 0.0, y_m = 0.0;
  for (int i = 0; i < n; ++i) {
    SensorSample sample;
    sample.t = i * dt;
    sample.speed = speed[i];
    sample.course = course[i];
    sample.lat = 37.77 + y_m * 9.0e-6;
    sample.lon = -122.41 + x_m * 1.1e-5;
    clip.log.samples.push_back(sample);
    const double heading = (90.0 - course[i]) * M_PI / 180.0;
    x_m += speed[i] * dt * std::cos(heading);
    y_m += speed[i] * dt * std::sin(heading);
  }
  clip.script_accel.resize(n);
  clip.script_accel[0] = (speed[1] - speed[0]) / dt;
  for (int i = 1; i + 1 < n; ++i) clip.script_accel[i] = (speed[i + 1] - speed[i - 1]) / (2 * dt);
  clip.script_accel[n - 1] = (speed[n - 1] - speed[n - 2]) / dt;

  // object distance over time
  std::vector<double> dist(n, 0.0);
  {
    double d = s.d0;
    for (int i = 0; i < n; ++i) {
      dist[i] = std::max(d, 3.5);
      double closing = speed[i];
      if (s.action == ActionClass::kSlow) closing = speed[i] - (s.v0 - s.delta_v);
      d -= closing * dt;
    }
  }

  // The rendered road curvature tracks the change-of-course signal, so the
  // regression target is readable from the current frame: a bending road
  // ahead means the heading is changing now.
  const bool is_turn =
      s.action == ActionClass::kTurnLeft || s.action == ActionClass::kTurnRight;
  std::vector<double> course_change(n, 0.0);
  {
    double rbar = course[0];
    for (int i = 1; i < n; ++i) {
      rbar = 0.01 * course[i] + 0.99 * rbar;
      course_change[i] = wrap_deg_180(course[i] - rbar);
    }
  }
  constexpr double kBendPerDeg = 2.2;
  double cc_peak = 0.0;
  for (double c : course_change) cc_peak = std::max(cc_peak, std::abs(c));
  const double mask_bend =
      is_turn ? kBendPerDeg * cc_peak * (s.action == ActionClass::kTurnLeft ? -1.0 : 1.0) : 0.0;

  for (int i = 0; i < n; ++i) {
    Image img = Image::filled(kFrameHeight, kFrameWidth, 0, 0, 0);
    draw_road(img, is_turn ? kBendPerDeg * course_change[i] : 0.0);
    if (s.distractor) draw_billboard(img, s.distractor_x, s.distractor_y);
    Box causal_box;
    switch (s.action) {
      case ActionClass::kForward:
        causal_box = draw_light(img, dist[i], s.side, /*green=*/true);
        break;
      case ActionClass::kAccelerate:
        causal_box = draw_light(img, dist[i], s.side, i * dt >= s.light_switch_t);
        break;
      case ActionClass::kStop:
        causal_box = s.cause == CauseKind::kStopSign ? draw_sign(img, dist[i], s.side)
                                                     : draw_light(img, dist[i], s.side, false);
        break;
      case ActionClass::kSlow:
        causal_box = draw_lead(img, dist[i]);
        break;
      case ActionClass::kTurnLeft:
      case ActionClass::kTurnRight:
        break;
    }
    clip.frames.push_back(std::move(img));
    if (is_turn)
      clip.masks.push_back(curve_mask(mask_bend));
    else
      clip.masks.push_back(box_to_mask(causal_box));
    bool any = false;
    for (auto m : clip.masks.back()) any = any || m;
    if (!any) throw ContractError(clip_id + ": degenerate causal mask at frame " +
                                  std::to_string(i));
  }

  SentencePair sent = template_sentences(s.action, s.cause);
  AnnotatedInterval iv;
  iv.start_s = 0.1;
  iv.end_s = (n - 1) * dt - 0.05;
  iv.description = sent.description;
  iv.justification = sent.justification;
  clip.annotation.video_id = clip_id;
  clip.annotation.intervals.push_back(iv);

  clip.meta.action = action_name(s.action);
  clip.meta.cause = cause_name(s.cause);
  clip.meta.distractor = s.distractor;
  return clip;
}

inline CauseKind cause_for(ActionClass action, int stop_variant) {
  switch (action) {
    case ActionClass::kForward: return CauseKind::kGreenLight;
    case ActionClass::kAccelerate: return CauseKind::kLightTurnsGreen;
    case ActionClass::kSlow: return CauseKind::kLeadVehicle;
    case ActionClass::kStop:
      return stop_variant % 2 == 0 ? CauseKind::kRedLight : CauseKind::kStopSign;
    case ActionClass::kTurnLeft:
    case ActionClass::kTurnRight: return CauseKind::kRoadCurve;
  }
  return CauseKind::kGreenLight;
}

struct MakeDatasetConfig {
  int n_clips = 60;
  std::uint64_t seed = 0;
  double distractor_rate = 0.0;
  double duration_s = 2.6;
};

/// Writes a complete dataset directory with balanced action classes; clip i
/// gets class i mod 6, stop clips alternate red-light / stop-sign causes.
inline void make_dataset(const std::string& out_dir, const MakeDatasetConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.n_clips < 1) throw ContractError("make_dataset needs n_clips >= 1");
  static const ActionClass kClasses[6] = {ActionClass::kForward,  ActionClass::kSlow,
                                          ActionClass::kStop,     ActionClass::kAccelerate,
                                          ActionClass::kTurnLeft, ActionClass::kTurnRight};
  fs::create_directories(out_dir + "/clips");
  std::vector<AnnotatedClip> annotations;
  int stop_count = 0;
  for (int i = 0; i < cfg.n_clips; ++i) {
    const ActionClass action = kClasses[i % 6];
    const CauseKind cause = cause_for(action, action == ActionClass::kStop ? stop_count++ : 0);
    std::mt19937_64 gate(mix_seed(cfg.seed, 0xD15B0A3Du + i));
    const bool distractor =
        std::uniform_real_distribution<double>(0.0, 1.0)(gate) < cfg.distractor_rate;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "clip%06d", i);
    Scenario sc = Scenario::sample(mix_seed(cfg.seed, i), action, cause, distractor,
                                   cfg.duration_s);
    SynthClip clip = generate(sc, idbuf);

    const std::string clip_dir = out_dir + "/clips/" + clip.id;
    fs::create_directories(clip_dir + "/frames");
    for (std::size_t f = 0; f < clip.frames.size(); ++f)
      write_ppm(clip_dir + "/frames/" + frame_file_name(static_cast<int>(f)), clip.frames[f]);
    std::vector<double> ts;
    for (const auto& sm : clip.log.samples) ts.push_back(sm.t);
    write_frames_csv(clip_dir + "/frames.csv", ts);
    write_sensor_csv(clip_dir + "/sensor.csv", clip.log);
    write_masks_csv(clip_dir + "/masks.csv", clip.masks);
    {
      nlohmann::json meta;
      meta["action"] = clip.meta.action;
      meta["cause"] = clip.meta.cause;
      meta["distractor"] = clip.meta.distractor;
      std::ofstream out(clip_dir + "/meta.json", std::ios::trunc);
      out << meta.dump(2) << "\n";
    }
    annotations.push_back(clip.annotation);
  }
  write_annotations(out_dir + "/annotations.jsonl", annotations);
  nlohmann::json manifest;
  manifest["format"] = "introdrive-synth-v1";
  manifest["n_clips"] = cfg.n_clips;
  manifest["seed"] = cfg.seed;
  manifest["distractor_rate"] = cfg.distractor_rate;
  manifest["duration_s"] = cfg.duration_s;
  manifest["fps"] = kSampleRateHz;
  std::ofstream out(out_dir + "/dataset.json", std::ios::trunc);
  out << manifest.dump(2) << "\n";
}

}  // namespace introdrive

#endif
