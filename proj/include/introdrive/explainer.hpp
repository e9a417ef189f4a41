#ifndef INTRODRIVE_EXPLAINER_HPP
#define INTRODRIVE_EXPLAINER_HPP

// Textual description+explanation generator. Consumes the frozen
// controller's per-frame outputs: its attended contexts (SAA) or its feature
// cubes through an own spatial attention map alpha_j (WAA/rationalization),
// each conditioned with the predicted control tuple. A temporal attention
// over the frame contexts feeds a word LSTM that emits the token sequence
// "description <sep> explanation". Weak alignment adds
//   L_a = lambda_a * sum_t KL(alpha_c_t || alpha_j_t)
// with gradients flowing into alpha_j only; rationalization is the same
// architecture with lambda_a = 0; SAA has no spatial parameters at all.
//
// The controller is frozen by construction here: its outputs enter as plain
// detached arrays, so no gradient can reach it.

#include <array>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "introdrive/controller.hpp"
#include "introdrive/text.hpp"

namespace introdrive {

enum class ExplainerMode { kSaa, kWaa, kRationalization };

inline const char* mode_name(ExplainerMode m) {
  switch (m) {
    case ExplainerMode::kSaa: return "saa";
    case ExplainerMode::kWaa: return "waa";
    case ExplainerMode::kRationalization: return "rat";
  }
  return "?";
}

inline ExplainerMode mode_from_name(const std::string& name) {
  if (name == "saa") return ExplainerMode::kSaa;
  if (name == "waa") return ExplainerMode::kWaa;
  if (name == "rat") return ExplainerMode::kRationalization;
  throw ConfigError("unknown explainer mode: " + name + " (expected saa|waa|rat)");
}

struct ExplainerConfig {
  ExplainerMode mode = ExplainerMode::kWaa;
  double lambda_a = 10.0;
  int feat_dim = 64;   // d
  int regions = 240;   // l
  int hidden = 128;    // word-LSTM state size
  int embed_dim = 128;
  int vocab_size = 0;
  int max_frames = 32;            // temporal subsample cap
  int max_tokens_per_field = 20;  // decode cap per description/explanation
  double dropout = 0.5;
  ControlStats control_stats;  // standardization of the conditioning tuple

  int context_dim() const { return feat_dim + 2; }

  void validate() const {
    if (vocab_size < 6) throw ConfigError("explainer vocabulary too small");
    if (mode == ExplainerMode::kSaa && lambda_a != 0.0)
      throw ConfigError("SAA shares the controller attention; lambda_a does not apply");
    if (mode == ExplainerMode::kRationalization && lambda_a != 0.0)
      throw ConfigError("rationalization requires lambda_a = 0");
    if (max_frames < 1 || max_frames > 32)
      throw ConfigError("max_frames must lie in [1, 32]");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"mode", mode_name(mode)},
                          {"lambda_a", lambda_a},
                          {"feat_dim", feat_dim},
                          {"regions", regions},
                          {"hidden", hidden},
                          {"embed_dim", embed_dim},
                          {"vocab_size", vocab_size},
                          {"max_frames", max_frames},
                          {"max_tokens_per_field", max_tokens_per_field},
                          {"dropout", dropout},
                          {"control_stats",
                           {{"accel_mean", control_stats.accel_mean},
                            {"accel_std", control_stats.accel_std},
                            {"course_change_mean", control_stats.course_change_mean},
                            {"course_change_std", control_stats.course_change_std}}}};
  }

  static ExplainerConfig from_json(const nlohmann::json& j) {
    ExplainerConfig c;
    c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.lambda_a = j.at("lambda_a").get<double>();
    c.feat_dim = j.at("feat_dim").get<int>();
    c.regions = j.at("regions").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_frames = j.at("max_frames").get<int>();
    c.max_tokens_per_field = j.at("max_tokens_per_field").get<int>();
    c.dropout = j.at("dropout").get<double>();
    const auto& s = j.at("control_stats");
    c.control_stats = {s.at("accel_mean"), s.at("accel_std"), s.at("course_change_mean"),
                       s.at("course_change_std")};
    return c;
  }
};

// ---------------------------------------------------------------------------
// Frozen controller outputs per clip
// ---------------------------------------------------------------------------

struct ExplainerFrame {
  std::vector<float> cube;         // l*d feature cube, empty in SAA mode
  std::vector<double> alpha_c;     // controller spatial attention
  std::vector<double> y_c;         // controller context vector
  double a_hat = 0.0, c_hat = 0.0; // controller predictions (raw units)
  double truth_a = 0.0, truth_c = 0.0;
  std::vector<std::uint8_t> mask;  // causal cells, for evaluation only
};

struct PreparedClip {
  std::string id;
  std::vector<ExplainerFrame> frames;
  std::vector<int> target;  // description <sep> justification <end>
  std::string description, justification;
  ClipMeta meta;
};

/// Evenly spaced index subsample of [0, n) capped at k entries.
inline std::vector<int> evenly_spaced(int n, int k) {
  std::vector<int> idx;
  if (n <= 0) return idx;
  if (n <= k) {
    for (int i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  for (int i = 0; i < k; ++i)
    idx.push_back(static_cast<int>(static_cast<std::int64_t>(i) * (n - 1) / (k - 1)));
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

/// Run the frozen controller over the clip and keep its outputs at evenly
/// spaced frames inside the annotated interval.
inline PreparedClip prepare_clip(const ControllerModel& controller, const ClipTensors& clip,
                                 const PrepStats& stats, const Vocabulary& vocab, int max_frames,
                                 bool keep_cubes) {
  PreparedClip out;
  out.id = clip.id;
  out.description = clip.annotation.description;
  out.justification = clip.annotation.justification;
  out.meta = clip.meta;
  out.target = encode_target(vocab, clip.annotation.description, clip.annotation.justification);

  std::vector<int> in_interval;
  for (int t = 0; t < clip.n_frames(); ++t)
    if (clip.frame_ts[t] >= clip.annotation.start_s - 1e-9 &&
        clip.frame_ts[t] <= clip.annotation.end_s + 1e-9)
      in_interval.push_back(t);
  if (in_interval.empty())
    throw ContractError(clip.id + ": no frames inside the annotated interval");
  std::vector<int> chosen;
  for (int k : evenly_spaced(static_cast<int>(in_interval.size()), max_frames))
    chosen.push_back(in_interval[k]);

  ControllerModel::State state;
  std::size_t next = 0;
  for (int t = 0; t < clip.n_frames(); ++t) {
    FeatureCube cube = controller.encode(nullptr, clip_stack(clip, t, stats.channels));
    if (t == 0) state = controller.init_state(nullptr, cube);
    auto att = controller.attend(nullptr, cube, state.h);
    auto pred =
        controller.step(nullptr, att.context, standardized_priors(clip, t, stats.prior), state);
    if (next < chosen.size() && chosen[next] == t) {
      ExplainerFrame fr;
      if (keep_cubes) {
        fr.cube.resize(cube.regions.size());
        for (std::int64_t i = 0; i < cube.regions.size(); ++i)
          fr.cube[i] = static_cast<float>(cube.regions.data()[i]);
      }
      fr.alpha_c = att.alpha.values();
      fr.y_c = att.context.values();
      fr.a_hat = pred.a_hat.item();
      fr.c_hat = pred.c_hat.item();
      fr.truth_a = clip.accel[t];
      fr.truth_c = clip.course_change[t];
      if (!clip.masks.empty()) fr.mask = clip.masks[t];
      ++next;
      out.frames.push_back(std::move(fr));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conditioning
// ---------------------------------------------------------------------------

/// y' = [y ; a_std ; c_std]; slicing y' recovers the parts exactly.
inline Tensor condition_context(Tape* tape, const Tensor& y, double a_hat, double c_hat,
                                const ControlStats& s) {
  const double a_std = (a_hat - s.accel_mean) / s.accel_std;
  const double c_std = (c_hat - s.course_change_mean) / s.course_change_std;
  return concat(tape, {y, Tensor::from({2}, {a_std, c_std})});
}

/// Series form with the length contract from the interface spec.
inline std::vector<Tensor> condition_contexts(Tape* tape, const std::vector<Tensor>& ys,
                                              const std::vector<ControlPrediction>& preds,
                                              const ControlStats& s) {
  if (ys.size() != preds.size())
    throw ContractError("condition_contexts: " + std::to_string(ys.size()) + " contexts vs " +
                        std::to_string(preds.size()) + " predictions");
  std::vector<Tensor> out;
  out.reserve(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i)
    out.push_back(condition_context(tape, ys[i], preds[i].accel, preds[i].course_change, s));
  return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class ExplainerModel {
 public:
  ExplainerModel() = default;
  ExplainerModel(const ExplainerConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(init_seed);
    const int ctx = cfg_.context_dim();
    if (cfg_.mode != ExplainerMode::kSaa) {
      attnj_w_ = params_.create("expl.attnj.w", {cfg_.feat_dim, 1});
      xavier_fill(attnj_w_, cfg_.feat_dim, 1, rng);
      attnj_b_ = params_.create("expl.attnj.b", {1});
    }
    init_c_ = Affine(params_, "expl.init_c", ctx, cfg_.hidden, rng);
    init_h_ = Affine(params_, "expl.init_h", ctx, cfg_.hidden, rng);
    embed_ = params_.create("expl.embed", {cfg_.vocab_size, cfg_.embed_dim});
    xavier_fill(embed_, cfg_.vocab_size, cfg_.embed_dim, rng);
    tattn_wy_ = params_.create("expl.tattn.wy", {ctx, 1});
    xavier_fill(tattn_wy_, ctx, 1, rng);
    tattn_wh_ = params_.create("expl.tattn.wh", {cfg_.hidden, 1});
    xavier_fill(tattn_wh_, cfg_.hidden, 1, rng);
    tattn_b_ = params_.create("expl.tattn.b", {1});
    lstm_ = LstmCell(params_, "expl.lstm", cfg_.embed_dim + ctx, cfg_.hidden, rng);
    out_ = Affine(params_, "expl.out", cfg_.hidden + ctx, cfg_.vocab_size, rng);
  }

  const ExplainerConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct SpatialOut {
    Tensor alpha;  // l
    Tensor context;  // d
  };

  /// The explainer's own spatial attention over a feature cube; only exists
  /// in WAA/rationalization mode. Conditioned on the cube alone.
  SpatialOut spatial_attend_j(Tape* tape, const Tensor& cube_regions) const {
    if (cfg_.mode == ExplainerMode::kSaa)
      throw ContractError("spatial_attend_j called in SAA mode, which has no own attention");
    const int l = cube_regions.dim(0);
    Tensor scores = reshape(tape, matmul(tape, cube_regions, attnj_w_), {l});
    Tensor alpha = softmax(tape, add_scalar_bcast(tape, scores, attnj_b_));
    Tensor context = reshape(
        tape, matmul(tape, reshape(tape, alpha, {1, l}), cube_regions), {cube_regions.dim(1)});
    return {alpha, context};
  }

  struct State {
    Tensor h, c;
  };

  /// h_0, c_0 from the mean of the conditioned contexts, same scheme as the
  /// controller's initialization.
  State init_state(Tape* tape, const Tensor& contexts) const {
    const int t = contexts.dim(0);
    Tensor ones = Tensor::full({1, t}, 1.0 / t);
    Tensor mean_ctx = reshape(tape, matmul(tape, ones, contexts), {cfg_.context_dim()});
    return {tanh_op(tape, init_h_(tape, mean_ctx)), tanh_op(tape, init_c_(tape, mean_ctx))};
  }

  struct TemporalOut {
    Tensor beta;  // T
    Tensor z;     // context_dim
  };

  /// beta over frame contexts from [y'_t ; h_prev], z = sum_t beta_t y'_t.
  TemporalOut temporal_attend(Tape* tape, const Tensor& contexts, const Tensor& h_prev,
                              TrainMode train = {}) const {
    const int t = contexts.dim(0);
    Tensor h_in = train.active() ? dropout(tape, h_prev, train.dropout, *train.rng, true) : h_prev;
    Tensor scores = reshape(tape, matmul(tape, contexts, tattn_wy_), {t});
    Tensor h_score =
        add_rowvec(tape, matmul(tape, reshape(tape, h_in, {1, cfg_.hidden}), tattn_wh_), tattn_b_);
    Tensor beta = softmax(tape, add_scalar_bcast(tape, scores, reshape(tape, h_score, {1})));
    Tensor z = reshape(tape, matmul(tape, reshape(tape, beta, {1, t}), contexts),
                       {cfg_.context_dim()});
    return {beta, z};
  }

  struct DecodeOut {
    Tensor logits;
    State state;
  };

  /// Embed the previous token, advance the word LSTM on [embedding ; z], and
  /// map [h ; z] to vocabulary logits.
  DecodeOut decode_step(Tape* tape, const Tensor& z, int prev_token, const State& state,
                        TrainMode train = {}) const {
    if (prev_token < 0 || prev_token >= cfg_.vocab_size)
      throw ContractError("decode_step: invalid token id " + std::to_string(prev_token));
    Tensor e = embed_row(tape, embed_, prev_token);
    LstmState next = lstm_step(tape, lstm_, concat(tape, {e, z}), state.h, state.c);
    Tensor h_in = train.active() ? dropout(tape, next.h, train.dropout, *train.rng, true) : next.h;
    Tensor logits = out_(tape, concat(tape, {h_in, z}));
    return {logits, {next.h, next.c}};
  }

  /// Conditioned context matrix (T x context_dim) for a prepared clip. In
  /// WAA/rationalization mode alpha_j rows are also returned (tracked on the
  /// tape when recording).
  struct ContextsOut {
    Tensor contexts;
    std::vector<Tensor> alpha_j;  // empty in SAA
  };

  ContextsOut build_contexts(Tape* tape, const PreparedClip& clip) const {
    if (clip.frames.empty()) throw ContractError(clip.id + ": prepared clip has no frames");
    ContextsOut out;
    std::vector<Tensor> rows;
    for (const auto& fr : clip.frames) {
      Tensor y;
      if (cfg_.mode == ExplainerMode::kSaa) {
        y = Tensor::from({cfg_.feat_dim}, fr.y_c);
      } else {
        if (fr.cube.empty())
          throw ContractError(clip.id + ": prepared without cubes but mode needs alpha_j");
        std::vector<double> cube_values(fr.cube.begin(), fr.cube.end());
        Tensor cube = Tensor::from({cfg_.regions, cfg_.feat_dim}, std::move(cube_values));
        SpatialOut sp = spatial_attend_j(tape, cube);
        out.alpha_j.push_back(sp.alpha);
        y = sp.context;
      }
      rows.push_back(condition_context(tape, y, fr.a_hat, fr.c_hat, cfg_.control_stats));
    }
    out.contexts = concat_rows(tape, rows);
    return out;
  }

 private:
  ExplainerConfig cfg_;
  ParamStore params_;
  Tensor attnj_w_, attnj_b_;
  Affine init_c_, init_h_;
  Tensor embed_;
  Tensor tattn_wy_, tattn_wh_, tattn_b_;
  LstmCell lstm_;
  Affine out_;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct ExplainerLossBreakdown {
  Tensor total;      // tracked scalar: NLL + L_a
  double nll = 0.0;  // teacher-forced negative log-likelihood (sum over tokens)
  double kl = 0.0;   // sum_t KL(alpha_c || alpha_j), before lambda_a
  double lc = 0.0;   // frozen-controller loss, reported only
};

/// Alignment loss L_a = lambda_a * sum_t KL(alpha_c_t || alpha_j_t); the
/// controller maps are constants, so gradients flow into alpha_j only.
inline Tensor alignment_loss(Tape* tape, const std::vector<std::vector<double>>& alpha_c,
                             const std::vector<Tensor>& alpha_j, double lambda_a) {
  if (alpha_c.size() != alpha_j.size())
    throw ContractError("alignment_loss: series length mismatch");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < alpha_c.size(); ++t)
    total = add(tape, total, kl_const_p(tape, alpha_c[t], alpha_j[t]));
  return scale(tape, total, lambda_a);
}

/// Teacher-forced loss for one clip: NLL of the target sequence plus the
/// alignment term in WAA mode. The controller term L_c is computed from the
/// frozen outputs for reporting and contributes no gradient.
inline ExplainerLossBreakdown teacher_forced_loss(Tape* tape, const ExplainerModel& model,
                                                  const PreparedClip& clip,
                                                  double lambda_c_report = 0.0,
                                                  TrainMode train = {}) {
  const ExplainerConfig& cfg = model.config();
  ExplainerLossBreakdown out;
  auto ctx = model.build_contexts(tape, clip);
  ExplainerModel::State state = model.init_state(tape, ctx.contexts);

  Tensor nll = Tensor::scalar(0.0);
  int prev = Vocabulary::kStart;
  for (int target : clip.target) {
    auto tmp = model.temporal_attend(tape, ctx.contexts, state.h, train);
    auto dec = model.decode_step(tape, tmp.z, prev, state, train);
    state = dec.state;
    nll = sub(tape, nll, pick(tape, log_softmax(tape, dec.logits), target));
    prev = target;
  }
  out.nll = nll.item();

  Tensor total = nll;
  if (cfg.mode == ExplainerMode::kWaa) {
    std::vector<std::vector<double>> alpha_c;
    for (const auto& fr : clip.frames) alpha_c.push_back(fr.alpha_c);
    Tensor la = alignment_loss(tape, alpha_c, ctx.alpha_j, cfg.lambda_a);
    out.kl = cfg.lambda_a > 0.0 ? la.item() / cfg.lambda_a : 0.0;
    total = add(tape, total, la);
  }
  out.total = total;

  for (const auto& fr : clip.frames) {
    const double da = fr.truth_a - fr.a_hat;
    const double dc = fr.truth_c - fr.c_hat;
    out.lc += da * da + dc * dc + lambda_c_report * attention_entropy_unchecked(fr.alpha_c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenerationResult {
  std::vector<int> token_ids;  // emitted stream, <end> stripped
  std::vector<std::string> description_tokens;
  std::vector<std::string> explanation_tokens;
  bool sep_missing = false;
  std::vector<std::vector<double>> betas;    // one row per emitted token
  std::vector<std::vector<double>> alpha_j;  // per frame, WAA/rationalization only
  std::vector<std::array<double, 2>> control;  // (a_hat, c_hat) per frame
  std::string rendered;  // single line, separator shown as '+'

  std::string description() const { return join(description_tokens); }
  std::string explanation() const { return join(explanation_tokens); }

  static std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
      if (!out.empty()) out += ' ';
      out += t;
    }
    return out;
  }
};

/// Beam search over the word LSTM; width 1 follows the greedy path exactly.
/// Argmax and beam ordering both break ties toward the lowest token id.
inline GenerationResult generate(const ExplainerModel& model, const PreparedClip& clip,
                                 const Vocabulary& vocab, int beam_width = 1) {
  if (beam_width < 1) throw ContractError("beam width must be >= 1");
  const ExplainerConfig& cfg = model.config();
  auto ctx = model.build_contexts(nullptr, clip);
  const int max_total = 2 * cfg.max_tokens_per_field + 1;

  struct Hyp {
    double logp = 0.0;
    std::vector<int> tokens;
    ExplainerModel::State state;
    std::vector<std::vector<double>> betas;
    bool done = false;
  };
  std::vector<Hyp> beam(1);
  beam[0].state = model.init_state(nullptr, ctx.contexts);

  for (int step = 0; step < max_total; ++step) {
    std::vector<Hyp> next;
    bool all_done = true;
    for (const auto& hyp : beam) {
      if (hyp.done) {
        next.push_back(hyp);
        continue;
      }
      all_done = false;
      const int prev = hyp.tokens.empty() ? Vocabulary::kStart : hyp.tokens.back();
      auto tmp = model.temporal_attend(nullptr, ctx.contexts, hyp.state.h);
      auto dec = model.decode_step(nullptr, tmp.z, prev, hyp.state);
      Tensor logp = log_softmax(nullptr, dec.logits);
      for (int tok = 0; tok < cfg.vocab_size; ++tok) {
        if (tok == Vocabulary::kStart || tok == Vocabulary::kPad) continue;
        Hyp h = hyp;
        h.logp += logp.data()[tok];
        h.state = dec.state;
        h.betas.push_back(tmp.beta.values());
        if (tok == Vocabulary::kEnd)
          h.done = true;
        else
          h.tokens.push_back(tok);
        next.push_back(std::move(h));
      }
    }
    if (all_done) break;
    std::sort(next.begin(), next.end(), [](const Hyp& a, const Hyp& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      return a.tokens < b.tokens;
    });
    if (static_cast<int>(next.size()) > beam_width) next.resize(beam_width);
    beam = std::move(next);
  }

  const Hyp& best = beam.front();
  GenerationResult res;
  res.token_ids = best.tokens;
  // the final beta row of a finished hypothesis belongs to <end>; keep rows
  // only for emitted tokens
  res.betas.assign(best.betas.begin(), best.betas.begin() + best.tokens.size());

  std::vector<int> desc_ids, expl_ids;
  bool seen_sep = false;
  for (int tok : best.tokens) {
    if (tok == Vocabulary::kSep && !seen_sep) {
      seen_sep = true;
      continue;
    }
    (seen_sep ? expl_ids : desc_ids).push_back(tok);
  }
  res.sep_missing = !seen_sep;
  if (static_cast<int>(desc_ids.size()) > cfg.max_tokens_per_field)
    desc_ids.resize(cfg.max_tokens_per_field);
  if (static_cast<int>(expl_ids.size()) > cfg.max_tokens_per_field)
    expl_ids.resize(cfg.max_tokens_per_field);
  for (int id : desc_ids) res.description_tokens.push_back(vocab.token(id));
  for (int id : expl_ids) res.explanation_tokens.push_back(vocab.token(id));

  for (int tok : best.tokens) {
    if (!res.rendered.empty()) res.rendered += ' ';
    res.rendered += tok == Vocabulary::kSep ? "+" : vocab.token(tok);
  }
  for (const auto& a : ctx.alpha_j) res.alpha_j.push_back(a.values());
  for (const auto& fr : clip.frames) res.control.push_back({fr.a_hat, fr.c_hat});
  return res;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct ExplainerTrainConfig {
  double lr = 1e-3;
  int epochs = 30;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  double dropout = 0.5;
  double lambda_c_report = 0.0;
};

struct ExplainerEpochLog {
  int epoch = 0;
  double total = 0.0;
  double nll = 0.0;
  double kl = 0.0;
  double lc = 0.0;
};

inline constexpr const char* kExplainerLossCsvHeader = "epoch,total,nll,kl,lc_report";

inline void write_explainer_loss_csv(const std::string& path,
                                     const std::vector<ExplainerEpochLog>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << kExplainerLossCsvHeader << "\n";
  for (const auto& row : log)
    out << row.epoch << "," << format_double(row.total) << "," << format_double(row.nll) << ","
        << format_double(row.kl) << "," << format_double(row.lc) << "\n";
}

inline std::vector<ExplainerEpochLog> train_explainer(ExplainerModel& model,
                                                      std::vector<PreparedClip>& clips,
                                                      const ExplainerTrainConfig& cfg,
                                                      std::ostream* progress = nullptr) {
  if (clips.empty()) throw ContractError("train_explainer on an empty dataset");
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.clip_norm = cfg.clip_norm;
  Adam adam(model.params(), adam_cfg);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xEA9101AEu));

  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<ExplainerEpochLog> logs;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    ExplainerEpochLog log;
    log.epoch = epoch;
    for (std::size_t idx : order) {
      Tape tape;
      model.params().watch_all(tape);
      TrainMode train{&rng, cfg.dropout};
      auto loss = teacher_forced_loss(&tape, model, clips[idx], cfg.lambda_c_report, train);
      if (loss.total.has_nonfinite())
        throw EvalError("explainer training diverged (non-finite loss) at epoch " +
                        std::to_string(epoch) + ", clip " + clips[idx].id);
      log.total += loss.total.item();
      log.nll += loss.nll;
      log.kl += loss.kl;
      log.lc += loss.lc;
      tape.backward(loss.total);
      adam.step(tape);
    }
    const double n = static_cast<double>(clips.size());
    log.total /= n;
    log.nll /= n;
    log.kl /= n;
    log.lc /= n;
    logs.push_back(log);
    if (progress)
      (*progress) << "epoch " << epoch << " total " << log.total << " nll " << log.nll << " kl "
                  << log.kl << "\n";
  }
  return logs;
}

}  // namespace introdrive

#endif
