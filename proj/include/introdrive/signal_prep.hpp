#ifndef INTRODRIVE_SIGNAL_PREP_HPP
#define INTRODRIVE_SIGNAL_PREP_HPP

// Sensor-log preparation: resampling to a uniform rate, acceleration from
// the speed derivative, change-of-course against an exponentially smoothed
// course, and frame normalization/stacking.

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "introdrive/image.hpp"
#include "introdrive/tensor.hpp"

namespace introdrive {

inline double wrap_deg_360(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  return r;
}

/// Signed shortest-arc representative in [-180, 180].
inline double wrap_deg_180(double deg) {
  double r = std::fmod(deg + 180.0, 360.0);
  if (r < 0.0) r += 360.0;
  return r - 180.0;
}

struct SensorSample {
  double t = 0.0;        // seconds
  double speed = 0.0;    // m/s
  double course = 0.0;   // degrees, [0, 360)
  double lat = 0.0;
  double lon = 0.0;
};

struct SensorLog {
  std::vector<SensorSample> samples;

  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (i > 0 && !(s.t > samples[i - 1].t))
        throw ContractError("sensor log timestamps must be strictly increasing (row " +
                            std::to_string(i) + ")");
      if (s.speed < 0.0)
        throw ContractError("negative speed at t=" + std::to_string(s.t));
      if (s.course < 0.0 || s.course >= 360.0)
        throw ContractError("course outside [0,360) at t=" + std::to_string(s.t));
    }
  }

  /// Maximum deviation from uniform spacing, used as the uniform-rate check.
  double spacing_jitter() const {
    if (samples.size() < 3) return 0.0;
    const double dt = samples[1].t - samples[0].t;
    double worst = 0.0;
    for (std::size_t i = 2; i < samples.size(); ++i)
      worst = std::max(worst, std::abs(samples[i].t - samples[i - 1].t - dt));
    return worst;
  }
};

inline constexpr const char* kSensorCsvHeader = "timestamp_s,speed_mps,course_deg,lat,lon";

inline void write_sensor_csv(const std::string& path, const SensorLog& log);
inline SensorLog read_sensor_csv(const std::string& path);

/// Continuous course series (jumps across the 0/360 seam removed).
inline std::vector<double> unwrap_course(const std::vector<double>& course) {
  std::vector<double> out(course.size());
  if (course.empty()) return out;
  out[0] = course[0];
  for (std::size_t i = 1; i < course.size(); ++i)
    out[i] = out[i - 1] + wrap_deg_180(course[i] - course[i - 1]);
  return out;
}

/// Uniform grid from the first to the last timestamp; linear interpolation of
/// speed and position, shortest-arc interpolation of course.
inline SensorLog resample(const SensorLog& log, double rate_hz) {
  if (log.samples.size() < 2)
    throw ContractError("resample needs at least 2 samples (insufficient data)");
  if (rate_hz <= 0.0) throw ContractError("resample rate must be positive");
  log.validate();

  const std::vector<SensorSample>& src = log.samples;
  std::vector<double> unwrapped(src.size());
  {
    std::vector<double> courses(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) courses[i] = src[i].course;
    unwrapped = unwrap_course(courses);
  }

  const double t0 = src.front().t, t1 = src.back().t;
  const double dt = 1.0 / rate_hz;
  const int n = static_cast<int>(std::floor((t1 - t0) / dt + 1e-9)) + 1;

  SensorLog out;
  out.samples.reserve(n);
  std::size_t seg = 0;
  for (int i = 0; i < n; ++i) {
    const double t = t0 + i * dt;
    while (seg + 2 < src.size() && src[seg + 1].t <= t) ++seg;
    const auto& a = src[seg];
    const auto& b = src[seg + 1];
    const double u = (t - a.t) / (b.t - a.t);
    SensorSample s;
    s.t = t;
    s.speed = a.speed + u * (b.speed - a.speed);
    s.course = wrap_deg_360(unwrapped[seg] + u * (unwrapped[seg + 1] - unwrapped[seg]));
    s.lat = a.lat + u * (b.lat - a.lat);
    s.lon = a.lon + u * (b.lon - a.lon);
    out.samples.push_back(s);
  }
  return out;
}

/// a_t = (v_{t+1} - v_{t-1}) / (2 dt), one-sided at the boundaries.
inline std::vector<double> derive_accel(const SensorLog& log) {
  const auto& s = log.samples;
  if (s.size() < 2) throw ContractError("derive_accel needs at least 2 samples");
  if (log.spacing_jitter() > 1e-6)
    throw ContractError("derive_accel requires a uniform-rate log; resample first");
  const double dt = s[1].t - s[0].t;
  std::vector<double> a(s.size());
  a[0] = (s[1].speed - s[0].speed) / dt;
  for (std::size_t i = 1; i + 1 < s.size(); ++i)
    a[i] = (s[i + 1].speed - s[i - 1].speed) / (2.0 * dt);
  a.back() = (s[s.size() - 1].speed - s[s.size() - 2].speed) / dt;
  return a;
}

/// c_t = r_t - rbar_t where rbar is the exponentially smoothed course,
/// rbar_0 = r_0 and rbar_t = alpha_s * r_t + (1 - alpha_s) * rbar_{t-1}.
/// Smoothing runs on the unwrapped series; the result is wrapped to
/// [-180, 180]. alpha_s = 1 reproduces the original series, so c_t == 0.
inline std::vector<double> derive_course_change(const SensorLog& log, double alpha_s = 0.01) {
  if (alpha_s < 0.0 || alpha_s > 1.0) throw ContractError("alpha_s must lie in [0,1]");
  const auto& s = log.samples;
  if (s.empty()) throw ContractError("derive_course_change of empty log");
  if (log.spacing_jitter() > 1e-6)
    throw ContractError("derive_course_change requires a uniform-rate log; resample first");
  std::vector<double> course(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) course[i] = s[i].course;
  const std::vector<double> r = unwrap_course(course);
  std::vector<double> c(s.size());
  double rbar = r[0];
  c[0] = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i) {
    rbar = alpha_s * r[i] + (1.0 - alpha_s) * rbar;
    c[i] = wrap_deg_180(r[i] - rbar);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

struct ChannelStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

inline constexpr int kFrameHeight = 90;
inline constexpr int kFrameWidth = 160;
inline constexpr int kStackFrames = 4;

/// Nearest-neighbor resize to (out_h, out_w), scale bytes to [0,1], then
/// standardize per channel. Output layout is [3, out_h, out_w].
inline Tensor preprocess_frame(const Image& raw, const ChannelStats& stats,
                               int out_h = kFrameHeight, int out_w = kFrameWidth) {
  if (raw.height < 1 || raw.width < 1) throw ContractError("preprocess_frame on empty image");
  for (int c = 0; c < 3; ++c)
    if (!(stats.stddev[c] > 1e-12))
      throw ContractError("degenerate normalization stats: channel " + std::to_string(c) +
                          " has zero standard deviation");
  const Image img = (raw.height == out_h && raw.width == out_w)
                        ? raw
                        : resize_nearest(raw, out_h, out_w);
  std::vector<double> out(static_cast<std::size_t>(3) * out_h * out_w);
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int r = 0; r < out_h; ++r)
    for (int c = 0; c < out_w; ++c) {
      const std::uint8_t* p = img.px(r, c);
      const std::size_t at = static_cast<std::size_t>(r) * out_w + c;
      for (int ch = 0; ch < 3; ++ch)
        out[ch * plane + at] = (p[ch] / 255.0 - stats.mean[ch]) / stats.stddev[ch];
    }
  return Tensor::from({3, out_h, out_w}, std::move(out));
}

/// Stack the 4 most recent preprocessed frames, oldest first, into a
/// [12, H, W] input tensor.
inline Tensor stack_frames(const std::vector<Tensor>& oldest_first) {
  if (oldest_first.size() != kStackFrames)
    throw ContractError("frame stack needs exactly " + std::to_string(kStackFrames) + " frames");
  const Shape& s0 = oldest_first.front().shape();
  std::vector<double> data;
  data.reserve(numel(s0) * kStackFrames);
  for (const auto& f : oldest_first) {
    if (f.shape() != s0) throw ShapeError("frame stack: inconsistent frame shapes");
    data.insert(data.end(), f.values().begin(), f.values().end());
  }
  return Tensor::from({s0[0] * kStackFrames, s0[1], s0[2]}, std::move(data));
}

/// Streaming accumulator for per-channel dataset statistics over [0,1] pixels.
class ChannelStatsAccumulator {
 public:
  void add(const Image& img) {
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        const double v = img.rgb[i + c] / 255.0;
        sum_[c] += v;
        sum_sq_[c] += v * v;
      }
      ++count_;
    }
  }

  ChannelStats finish() const {
    if (count_ == 0) throw ContractError("channel stats over zero pixels");
    ChannelStats s;
    for (int c = 0; c < 3; ++c) {
      s.mean[c] = sum_[c] / count_;
      const double var = std::max(0.0, sum_sq_[c] / count_ - s.mean[c] * s.mean[c]);
      s.stddev[c] = std::sqrt(var);
    }
    return s;
  }

 private:
  std::array<double, 3> sum_{0, 0, 0};
  std::array<double, 3> sum_sq_{0, 0, 0};
  std::int64_t count_ = 0;
};

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

inline void write_sensor_csv(const std::string& path, const SensorLog& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write sensor log: " + path);
  out << kSensorCsvHeader << "\n";
  for (const auto& s : log.samples)
    out << format_double(s.t) << "," << format_double(s.speed) << ","
        << format_double(s.course) << "," << format_double(s.lat) << ","
        << format_double(s.lon) << "\n";
  if (!out) throw IoError("short write: " + path);
}

inline SensorLog read_sensor_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sensor log: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (line != kSensorCsvHeader)
    throw ParseError(path + ":1: expected header '" + kSensorCsvHeader + "'");
  SensorLog log;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    SensorSample s;
    char c1, c2, c3, c4;
    if (!(ss >> s.t >> c1 >> s.speed >> c2 >> s.course >> c3 >> s.lat >> c4 >> s.lon) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',')
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed row");
    log.samples.push_back(s);
  }
  log.validate();
  return log;
}

}  // namespace introdrive

#endif
