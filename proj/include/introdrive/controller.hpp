#ifndef INTRODRIVE_CONTROLLER_HPP
#define INTRODRIVE_CONTROLLER_HPP

// Spatially-attentive vehicle controller. Per timestep: encode the frame
// stack into a feature cube, score each region from [x_i ; h_prev] through a
// fully-connected layer + spatial softmax, pool the attended context
// y_t = sum_i alpha_i x_i, advance the LSTM, and regress acceleration and
// change of course from [y_t ; h_t ; priors] through ReLU MLP heads.
// The training objective is
//   L_c = sum_t ( (a - a_hat)^2 + (c - c_hat)^2 + lambda_c * H(alpha_t) ).

#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "introdrive/dataset.hpp"
#include "introdrive/optim.hpp"
#include "introdrive/perception.hpp"

namespace introdrive {

struct ControllerConfig {
  EncoderConfig encoder;
  int hidden = 64;  // M; the paper never states the controller LSTM width
  std::vector<int> head_dims = {100, 50, 10};
  double dropout = 0.5;
  // Heads regress in standardized space and are mapped back to raw units
  // (a_hat = mean + std * f); the loss itself stays in raw units. Defaults
  // are the identity; training fills these from the training split.
  ControlStats output_stats;

  nlohmann::json to_json() const {
    return nlohmann::json{{"encoder", encoder.to_json()},
                          {"hidden", hidden},
                          {"head_dims", head_dims},
                          {"dropout", dropout},
                          {"output_stats",
                           {{"accel_mean", output_stats.accel_mean},
                            {"accel_std", output_stats.accel_std},
                            {"course_change_mean", output_stats.course_change_mean},
                            {"course_change_std", output_stats.course_change_std}}}};
  }
  static ControllerConfig from_json(const nlohmann::json& j) {
    ControllerConfig c;
    c.encoder = EncoderConfig::from_json(j.at("encoder"));
    c.hidden = j.at("hidden").get<int>();
    c.head_dims = j.at("head_dims").get<std::vector<int>>();
    c.dropout = j.at("dropout").get<double>();
    const auto& s = j.at("output_stats");
    c.output_stats = {s.at("accel_mean"), s.at("accel_std"), s.at("course_change_mean"),
                      s.at("course_change_std")};
    return c;
  }
};

struct ControlPrediction {
  double accel = 0.0;
  double course_change = 0.0;
};

struct ControlTruth {
  double accel = 0.0;
  double course_change = 0.0;
};

/// Training-mode context: when set, dropout is applied at the hidden-state
/// consumers (attention scores and regression heads).
struct TrainMode {
  std::mt19937_64* rng = nullptr;
  double dropout = 0.0;
  bool active() const { return rng != nullptr && dropout > 0.0; }
};

class ControllerModel {
 public:
  ControllerModel() = default;
  ControllerModel(const ControllerConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    std::mt19937_64 rng(init_seed);
    encoder_ = Encoder(params_, "enc", cfg.encoder, rng);
    const int d = cfg.encoder.composed().d;
    const int m = cfg.hidden;
    init_c_ = Affine(params_, "ctrl.init_c", d, m, rng);
    init_h_ = Affine(params_, "ctrl.init_h", d, m, rng);
    attn_wx_ = params_.create("ctrl.attn.wx", {d, 1});
    // attention scores start small so the map stays near uniform while the
    // encoder features are still immature; an early hard collapse onto one
    // region is effectively absorbing (off-peak regions stop getting
    // gradient through the softmax)
    xavier_fill(attn_wx_, d, 1, rng);
    for (std::int64_t i = 0; i < attn_wx_.size(); ++i) attn_wx_.mutable_data()[i] *= 0.25;
    attn_wh_ = params_.create("ctrl.attn.wh", {m, 1});
    xavier_fill(attn_wh_, m, 1, rng);
    attn_b_ = params_.create("ctrl.attn.b", {1});
    lstm_ = LstmCell(params_, "ctrl.lstm", d, m, rng);
    head_a_ = MlpHead(params_, "ctrl.head_a", d + m + 2, cfg.head_dims, 1, rng);
    head_c_ = MlpHead(params_, "ctrl.head_c", d + m + 2, cfg.head_dims, 1, rng);
  }

  const ControllerConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Encoder& encoder() const { return encoder_; }

  struct State {
    Tensor h, c;
    bool initialized = false;
  };

  FeatureCube encode(Tape* tape, const Tensor& stack) const { return encoder_.encode(tape, stack); }

  /// h_0, c_0 from the mean feature slice of the sequence's first frame,
  /// each through its own tanh init layer.
  State init_state(Tape* tape, const FeatureCube& first) const {
    const int l = first.l();
    Tensor ones = Tensor::full({1, l}, 1.0 / l);
    Tensor mean_slice = reshape(tape, matmul(tape, ones, first.regions), {first.d()});
    State s;
    s.h = tanh_op(tape, init_h_(tape, mean_slice));
    s.c = tanh_op(tape, init_c_(tape, mean_slice));
    s.initialized = true;
    return s;
  }

  struct Attended {
    Tensor alpha;    // l, softmax-normalized
    Tensor context;  // d
  };

  /// Spatial attention over the cube conditioned on the previous hidden
  /// state; context is the alpha-weighted sum of region features.
  Attended attend(Tape* tape, const FeatureCube& cube, const Tensor& h_prev,
                  TrainMode train = {}) const {
    const int l = cube.l();
    Tensor h_in = train.active() ? dropout(tape, h_prev, train.dropout, *train.rng, true) : h_prev;
    Tensor region_scores = reshape(tape, matmul(tape, cube.regions, attn_wx_), {l});
    Tensor h_score =
        add_rowvec(tape, matmul(tape, reshape(tape, h_in, {1, cfg_.hidden}), attn_wh_), attn_b_);
    Tensor alpha =
        softmax(tape, add_scalar_bcast(tape, region_scores, reshape(tape, h_score, {1})));
    Tensor context =
        reshape(tape, matmul(tape, reshape(tape, alpha, {1, l}), cube.regions), {cube.d()});
    return {alpha, context};
  }

  struct StepOut {
    Tensor a_hat, c_hat;  // scalars
  };

  /// LSTM update followed by the two regression heads over
  /// [context ; h_t ; standardized priors].
  StepOut step(Tape* tape, const Tensor& context, std::pair<double, double> priors, State& state,
               TrainMode train = {}) const {
    if (!state.initialized)
      throw ContractError("controller step on an uninitialized state; call init_state first");
    LstmState next = lstm_step(tape, lstm_, context, state.h, state.c);
    state.h = next.h;
    state.c = next.c;
    Tensor h_in = train.active() ? dropout(tape, next.h, train.dropout, *train.rng, true) : next.h;
    Tensor head_in =
        concat(tape, {context, h_in, Tensor::from({2}, {priors.first, priors.second})});
    const ControlStats& os = cfg_.output_stats;
    StepOut out;
    out.a_hat = add(tape, scale(tape, reshape(tape, head_a_(tape, head_in), {1}), os.accel_std),
                    Tensor::scalar(os.accel_mean));
    out.c_hat =
        add(tape, scale(tape, reshape(tape, head_c_(tape, head_in), {1}), os.course_change_std),
            Tensor::scalar(os.course_change_mean));
    return out;
  }

 private:
  ControllerConfig cfg_;
  ParamStore params_;
  Encoder encoder_;
  Affine init_c_, init_h_;
  Tensor attn_wx_, attn_wh_, attn_b_;
  LstmCell lstm_;
  MlpHead head_a_, head_c_;
};

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

inline double attention_entropy_unchecked(const std::vector<double>& alpha) {
  double h = 0.0;
  for (double v : alpha)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

/// Eq-style controller loss on plain values (evaluation/report path).
inline double controller_loss(const std::vector<ControlPrediction>& pred,
                              const std::vector<ControlTruth>& truth,
                              const std::vector<std::vector<double>>& alphas, double lambda_c) {
  if (pred.size() != truth.size() || pred.size() != alphas.size())
    throw ContractError("controller_loss: series length mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const double da = truth[t].accel - pred[t].accel;
    const double dc = truth[t].course_change - pred[t].course_change;
    total += da * da + dc * dc + lambda_c * attention_entropy_unchecked(alphas[t]);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Rollout (inference over a full clip)
// ---------------------------------------------------------------------------

struct FrameRollout {
  std::vector<double> alpha;    // spatial attention, length l
  std::vector<double> context;  // attended features, length d
  double a_hat = 0.0;
  double c_hat = 0.0;
  double entropy = 0.0;
};

/// Deterministic full-clip forward pass without gradient recording.
inline std::vector<FrameRollout> rollout_controller(const ControllerModel& model,
                                                    const ClipTensors& clip,
                                                    const PrepStats& stats) {
  std::vector<FrameRollout> out;
  ControllerModel::State state;
  for (int t = 0; t < clip.n_frames(); ++t) {
    FeatureCube cube = model.encode(nullptr, clip_stack(clip, t, stats.channels));
    if (t == 0) state = model.init_state(nullptr, cube);
    auto att = model.attend(nullptr, cube, state.h);
    auto pred = model.step(nullptr, att.context, standardized_priors(clip, t, stats.prior), state);
    FrameRollout fr;
    fr.alpha = att.alpha.values();
    fr.context = att.context.values();
    fr.a_hat = pred.a_hat.item();
    fr.c_hat = pred.c_hat.item();
    fr.entropy = attention_entropy_unchecked(fr.alpha);
    out.push_back(std::move(fr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct ControllerTrainConfig {
  double lambda_c = 0.0;
  double lr = 1e-3;
  int epochs = 4;
  int window = 6;  // timesteps unrolled per optimization step
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  double dropout = 0.5;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double mse_accel = 0.0;
  double mse_course = 0.0;
  double entropy = 0.0;
};

inline constexpr const char* kLossCsvHeader = "epoch,loss,mse_accel,mse_course,mean_entropy";

inline void write_loss_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << kLossCsvHeader << "\n";
  for (const auto& row : log)
    out << row.epoch << "," << format_double(row.loss) << "," << format_double(row.mse_accel)
        << "," << format_double(row.mse_course) << "," << format_double(row.entropy) << "\n";
}

/// Behavioral-cloning training over windows sampled from each clip, Adam with
/// global-norm clipping, single writer, fully deterministic under the seed.
/// Throws EvalError with diagnostics if the loss diverges to a non-finite
/// value.
inline std::vector<EpochLog> train_controller(ControllerModel& model,
                                              std::vector<ClipTensors>& clips,
                                              const PrepStats& stats,
                                              const ControllerTrainConfig& cfg,
                                              std::ostream* progress = nullptr) {
  if (clips.empty()) throw ContractError("train_controller on an empty dataset");
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.clip_norm = cfg.clip_norm;
  Adam adam(model.params(), adam_cfg);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xC0117801u));

  std::vector<EpochLog> logs;
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    int n_terms = 0;
    for (std::size_t idx : order) {
      const ClipTensors& clip = clips[idx];
      const int n = clip.n_frames();
      const int window = std::min(cfg.window, n);
      const int start =
          n == window ? 0 : static_cast<int>(rng() % static_cast<std::uint64_t>(n - window + 1));

      Tape tape;
      model.params().watch_all(tape);
      TrainMode train{&rng, cfg.dropout};
      ControllerModel::State state;
      Tensor loss = Tensor::scalar(0.0);
      for (int t = start; t < start + window; ++t) {
        FeatureCube cube = model.encode(&tape, clip_stack(clip, t, stats.channels));
        if (t == start) state = model.init_state(&tape, cube);
        auto att = model.attend(&tape, cube, state.h, train);
        auto pred =
            model.step(&tape, att.context, standardized_priors(clip, t, stats.prior), state, train);
        Tensor da = sub(&tape, pred.a_hat, Tensor::scalar(clip.accel[t]));
        Tensor dc = sub(&tape, pred.c_hat, Tensor::scalar(clip.course_change[t]));
        Tensor h_term = entropy_op(&tape, att.alpha);
        loss = add(&tape, loss,
                   add(&tape, add(&tape, square(&tape, da), square(&tape, dc)),
                       scale(&tape, h_term, cfg.lambda_c)));
        log.mse_accel += da.item() * da.item();
        log.mse_course += dc.item() * dc.item();
        log.entropy += h_term.item();
        ++n_terms;
      }
      if (loss.has_nonfinite())
        throw EvalError("controller training diverged (non-finite loss) at epoch " +
                        std::to_string(epoch) + ", clip " + clip.id);
      log.loss += loss.item();
      tape.backward(loss);
      adam.step(tape);
    }
    log.loss /= clips.size();
    log.mse_accel /= n_terms;
    log.mse_course /= n_terms;
    log.entropy /= n_terms;
    logs.push_back(log);
    if (progress)
      (*progress) << "epoch " << epoch << " loss " << log.loss << " mse_a " << log.mse_accel
                  << " mse_c " << log.mse_course << " H " << log.entropy << "\n";
  }
  return logs;
}

}  // namespace introdrive

#endif
