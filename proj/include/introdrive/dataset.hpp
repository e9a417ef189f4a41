#ifndef INTRODRIVE_DATASET_HPP
#define INTRODRIVE_DATASET_HPP

// On-disk dataset layout and the `prep` stage.
//
//   dataset_dir/
//     dataset.json              generator manifest (synthetic sets)
//     annotations.jsonl         BDD-X-format intervals
//     clips/<id>/frames/NNNNNN.ppm
//     clips/<id>/frames.csv     index,timestamp_s
//     clips/<id>/sensor.csv     timestamp_s,speed_mps,course_deg,lat,lon
//     clips/<id>/masks.csv      optional causal masks: frame_index,240x'0'/'1'
//     clips/<id>/meta.json      optional scenario metadata
//
//   prep_dir/
//     stats.json                channel/prior/control statistics (train split)
//     splits.json               train/val/test clip ids
//     vocab.txt                 joint vocabulary, one token per line
//     targets/<id>.csv          t,accel,course_change,prior_speed,prior_course

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "introdrive/bddx.hpp"
#include "introdrive/image.hpp"
#include "introdrive/signal_prep.hpp"
#include "introdrive/text.hpp"

namespace introdrive {

inline constexpr double kSampleRateHz = 10.0;
inline constexpr int kFeatureGridH = 12;
inline constexpr int kFeatureGridW = 20;
inline constexpr int kFeatureRegions = kFeatureGridH * kFeatureGridW;

struct PriorStats {
  double speed_mean = 0.0, speed_std = 1.0;
  double course_mean = 0.0, course_std = 1.0;
};

struct ControlStats {
  double accel_mean = 0.0, accel_std = 1.0;
  double course_change_mean = 0.0, course_change_std = 1.0;
};

struct PrepStats {
  ChannelStats channels;
  PriorStats prior;
  ControlStats control;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["channel_mean"] = channels.mean;
    j["channel_std"] = channels.stddev;
    j["prior"] = {{"speed_mean", prior.speed_mean},
                  {"speed_std", prior.speed_std},
                  {"course_mean", prior.course_mean},
                  {"course_std", prior.course_std}};
    j["control"] = {{"accel_mean", control.accel_mean},
                    {"accel_std", control.accel_std},
                    {"course_change_mean", control.course_change_mean},
                    {"course_change_std", control.course_change_std}};
    return j;
  }

  static PrepStats from_json(const nlohmann::json& j) {
    PrepStats s;
    s.channels.mean = j.at("channel_mean").get<std::array<double, 3>>();
    s.channels.stddev = j.at("channel_std").get<std::array<double, 3>>();
    const auto& p = j.at("prior");
    s.prior = {p.at("speed_mean"), p.at("speed_std"), p.at("course_mean"), p.at("course_std")};
    const auto& c = j.at("control");
    s.control = {c.at("accel_mean"), c.at("accel_std"), c.at("course_change_mean"),
                 c.at("course_change_std")};
    return s;
  }
};

struct ClipMeta {
  std::string action;
  std::string cause;
  bool distractor = false;
};

/// One clip fully prepared for training: resized raw frames plus the 10 Hz
/// regression targets aligned to them.
struct ClipTensors {
  std::string id;
  std::vector<Image> frames;  // 90x160 u8
  std::vector<double> frame_ts;
  std::vector<double> accel;
  std::vector<double> course_change;
  std::vector<double> prior_speed;
  std::vector<double> prior_course;
  std::vector<std::vector<std::uint8_t>> masks;  // per frame, kFeatureRegions cells; may be empty
  AnnotatedInterval annotation;
  ClipMeta meta;

  int n_frames() const { return static_cast<int>(frames.size()); }
};

// ---------------------------------------------------------------------------
// Small file helpers
// ---------------------------------------------------------------------------

inline std::string frame_file_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d.ppm", index);
  return buf;
}

inline void write_frames_csv(const std::string& path, const std::vector<double>& ts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "index,timestamp_s\n";
  for (std::size_t i = 0; i < ts.size(); ++i) out << i << "," << format_double(ts[i]) << "\n";
}

inline std::vector<double> read_frames_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "index,timestamp_s") throw ParseError(path + ": bad header");
  std::vector<double> ts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path + ": malformed row");
    ts.push_back(std::stod(line.substr(comma + 1)));
  }
  return ts;
}

inline void write_masks_csv(const std::string& path,
                            const std::vector<std::vector<std::uint8_t>>& masks) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "frame_index,cells\n";
  for (std::size_t i = 0; i < masks.size(); ++i) {
    out << i << ",";
    for (std::uint8_t m : masks[i]) out << (m ? '1' : '0');
    out << "\n";
  }
}

inline std::vector<std::vector<std::uint8_t>> read_masks_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "frame_index,cells") throw ParseError(path + ": bad header");
  std::vector<std::vector<std::uint8_t>> masks;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path + ": malformed row");
    const std::string bits = line.substr(comma + 1);
    std::vector<std::uint8_t> m(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) m[i] = bits[i] == '1' ? 1 : 0;
    masks.push_back(std::move(m));
  }
  return masks;
}

struct TargetRows {
  std::vector<double> t, accel, course_change, prior_speed, prior_course;
};

inline constexpr const char* kTargetsCsvHeader =
    "t,accel_mps2,course_change_deg,prior_speed_mps,prior_course_deg";

inline void write_targets_csv(const std::string& path, const TargetRows& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << kTargetsCsvHeader << "\n";
  for (std::size_t i = 0; i < rows.t.size(); ++i)
    out << format_double(rows.t[i]) << "," << format_double(rows.accel[i]) << ","
        << format_double(rows.course_change[i]) << "," << format_double(rows.prior_speed[i])
        << "," << format_double(rows.prior_course[i]) << "\n";
}

inline TargetRows read_targets_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != kTargetsCsvHeader) throw ParseError(path + ": bad header");
  TargetRows rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    double t, a, c, ps, pc;
    char c1, c2, c3, c4;
    if (!(ss >> t >> c1 >> a >> c2 >> c >> c3 >> ps >> c4 >> pc))
      throw ParseError(path + ": malformed row");
    rows.t.push_back(t);
    rows.accel.push_back(a);
    rows.course_change.push_back(c);
    rows.prior_speed.push_back(ps);
    rows.prior_course.push_back(pc);
  }
  return rows;
}

inline ClipMeta read_clip_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {};
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) return {};
  ClipMeta m;
  m.action = j.value("action", "");
  m.cause = j.value("cause", "");
  m.distractor = j.value("distractor", false);
  return m;
}

// ---------------------------------------------------------------------------
// The prep stage
// ---------------------------------------------------------------------------

struct PrepConfig {
  std::uint64_t seed = 0;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double alpha_s = 0.01;  // course smoothing factor
  int vocab_min_freq = 2;
};

/// Resample logs, derive targets, compute train-split statistics, build the
/// vocabulary, and write the prep directory. Returns the split.
inline DatasetSplit prep_dataset(const std::string& dataset_dir, const std::string& prep_dir,
                                 const PrepConfig& cfg) {
  namespace fs = std::filesystem;
  const auto clips = parse_annotations(dataset_dir + "/annotations.jsonl");
  if (clips.empty()) throw ContractError("dataset has no annotated clips");

  std::vector<std::string> ids;
  for (const auto& c : clips) ids.push_back(c.video_id);
  DatasetSplit split = make_split(ids, cfg.seed, cfg.train_frac, cfg.val_frac);

  fs::create_directories(prep_dir + "/targets");

  // per-clip regression targets on the 10 Hz grid
  std::map<std::string, TargetRows> all_rows;
  for (const auto& id : ids) {
    const std::string clip_dir = dataset_dir + "/clips/" + id;
    if (!fs::exists(clip_dir)) throw IoError("annotated clip has no data directory: " + clip_dir);
    SensorLog grid = resample(read_sensor_csv(clip_dir + "/sensor.csv"), kSampleRateHz);
    TargetRows rows;
    rows.accel = derive_accel(grid);
    rows.course_change = derive_course_change(grid, cfg.alpha_s);
    for (const auto& s : grid.samples) {
      rows.t.push_back(s.t);
      rows.prior_speed.push_back(s.speed);
      rows.prior_course.push_back(s.course);
    }
    const std::vector<double> frame_ts = read_frames_csv(clip_dir + "/frames.csv");
    if (frame_ts.size() != rows.t.size())
      throw ContractError(id + ": " + std::to_string(frame_ts.size()) + " frames vs " +
                          std::to_string(rows.t.size()) + " resampled sensor rows; frame " +
                          "timestamps must ride the 10 Hz grid");
    for (std::size_t i = 0; i < frame_ts.size(); ++i)
      if (std::abs(frame_ts[i] - rows.t[i]) > 1e-6)
        throw ContractError(id + ": frame " + std::to_string(i) + " timestamp is off-grid");
    write_targets_csv(prep_dir + "/targets/" + id + ".csv", rows);
    all_rows.emplace(id, std::move(rows));
  }

  // statistics over the training split only
  PrepStats stats;
  {
    ChannelStatsAccumulator acc;
    std::vector<std::string> train_sorted = split.train;
    std::sort(train_sorted.begin(), train_sorted.end());
    for (const auto& id : train_sorted) {
      const std::string frames_dir = dataset_dir + "/clips/" + id + "/frames";
      const int n = static_cast<int>(all_rows.at(id).t.size());
      for (int i = 0; i < n; ++i) {
        Image img = read_ppm(frames_dir + "/" + frame_file_name(i));
        if (img.height != kFrameHeight || img.width != kFrameWidth)
          img = resize_nearest(img, kFrameHeight, kFrameWidth);
        acc.add(img);
      }
    }
    stats.channels = acc.finish();
    for (auto& s : stats.channels.stddev) s = std::max(s, 1e-6);

    auto moments = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m += x;
      m /= v.size();
      double var = 0.0;
      for (double x : v) var += (x - m) * (x - m);
      return std::pair<double, double>(m, std::max(std::sqrt(var / v.size()), 1e-6));
    };
    std::vector<double> sp, co, ac, cc;
    for (const auto& id : train_sorted) {
      const auto& rows = all_rows.at(id);
      sp.insert(sp.end(), rows.prior_speed.begin(), rows.prior_speed.end());
      co.insert(co.end(), rows.prior_course.begin(), rows.prior_course.end());
      ac.insert(ac.end(), rows.accel.begin(), rows.accel.end());
      cc.insert(cc.end(), rows.course_change.begin(), rows.course_change.end());
    }
    if (sp.empty()) throw ContractError("training split is empty");
    std::tie(stats.prior.speed_mean, stats.prior.speed_std) = moments(sp);
    std::tie(stats.prior.course_mean, stats.prior.course_std) = moments(co);
    std::tie(stats.control.accel_mean, stats.control.accel_std) = moments(ac);
    std::tie(stats.control.course_change_mean, stats.control.course_change_std) = moments(cc);
  }

  // vocabulary from training-split annotations
  {
    std::set<std::string> train_ids(split.train.begin(), split.train.end());
    std::vector<std::string> sentences;
    for (const auto& c : clips) {
      if (!train_ids.count(c.video_id)) continue;
      for (const auto& iv : c.intervals) {
        sentences.push_back(iv.description);
        sentences.push_back(iv.justification);
      }
    }
    Vocabulary::build(sentences, cfg.vocab_min_freq).save(prep_dir + "/vocab.txt");
  }

  {
    std::ofstream out(prep_dir + "/stats.json", std::ios::trunc);
    out << stats.to_json().dump(2) << "\n";
  }
  {
    std::ofstream out(prep_dir + "/splits.json", std::ios::trunc);
    out << split.to_json().dump(2) << "\n";
  }
  return split;
}

// ---------------------------------------------------------------------------
// Loading prepared clips
// ---------------------------------------------------------------------------

struct PreparedDataset {
  std::string dataset_dir;
  std::string prep_dir;
  PrepStats stats;
  DatasetSplit split;
  Vocabulary vocab;
  std::map<std::string, AnnotatedClip> annotations;

  static PreparedDataset open(const std::string& dataset_dir, const std::string& prep_dir) {
    PreparedDataset d;
    d.dataset_dir = dataset_dir;
    d.prep_dir = prep_dir;
    {
      std::ifstream in(prep_dir + "/stats.json");
      if (!in) throw IoError("missing " + prep_dir + "/stats.json (run prep first)");
      d.stats = PrepStats::from_json(nlohmann::json::parse(in));
    }
    {
      std::ifstream in(prep_dir + "/splits.json");
      if (!in) throw IoError("missing " + prep_dir + "/splits.json");
      d.split = DatasetSplit::from_json(nlohmann::json::parse(in));
    }
    d.vocab = Vocabulary::load(prep_dir + "/vocab.txt");
    for (auto& clip : parse_annotations(dataset_dir + "/annotations.jsonl"))
      d.annotations.emplace(clip.video_id, std::move(clip));
    return d;
  }

  ClipTensors load_clip(const std::string& id) const {
    namespace fs = std::filesystem;
    ClipTensors clip;
    clip.id = id;
    const std::string clip_dir = dataset_dir + "/clips/" + id;
    TargetRows rows = read_targets_csv(prep_dir + "/targets/" + id + ".csv");
    clip.frame_ts = rows.t;
    clip.accel = rows.accel;
    clip.course_change = rows.course_change;
    clip.prior_speed = rows.prior_speed;
    clip.prior_course = rows.prior_course;
    clip.frames.reserve(rows.t.size());
    for (std::size_t i = 0; i < rows.t.size(); ++i) {
      Image img = read_ppm(clip_dir + "/frames/" + frame_file_name(static_cast<int>(i)));
      if (img.height != kFrameHeight || img.width != kFrameWidth)
        img = resize_nearest(img, kFrameHeight, kFrameWidth);
      clip.frames.push_back(std::move(img));
    }
    if (fs::exists(clip_dir + "/masks.csv")) clip.masks = read_masks_csv(clip_dir + "/masks.csv");
    clip.meta = read_clip_meta(clip_dir + "/meta.json");
    auto it = annotations.find(id);
    if (it == annotations.end() || it->second.intervals.empty())
      throw ContractError("clip " + id + " has no annotation");
    clip.annotation = it->second.intervals.front();
    return clip;
  }
};

/// Standardized prior pair for frame index t of a clip.
inline std::pair<double, double> standardized_priors(const ClipTensors& clip, int t,
                                                     const PriorStats& s) {
  return {(clip.prior_speed[t] - s.speed_mean) / s.speed_std,
          (clip.prior_course[t] - s.course_mean) / s.course_std};
}

/// Frame stack input tensor for timestep t: frames [t-3, t] oldest first,
/// clamped at the clip start (the first frame repeats).
inline Tensor clip_stack(const ClipTensors& clip, int t, const ChannelStats& stats) {
  std::vector<Tensor> frames;
  for (int k = kStackFrames - 1; k >= 0; --k) {
    const int idx = std::max(0, t - k);
    frames.push_back(preprocess_frame(clip.frames[idx], stats));
  }
  return stack_frames(frames);
}

}  // namespace introdrive

#endif
