#ifndef INTRODRIVE_METRICS_HPP
#define INTRODRIVE_METRICS_HPP

// Quantitative evaluation: control regression error (MAE + distance
// correlation), corpus caption metrics (BLEU-4, CIDEr-D) and temporal-IoU
// based inter-annotator agreement. Everything here is a pure function of its
// inputs.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "introdrive/bddx.hpp"
#include "introdrive/common.hpp"
#include "introdrive/tensor.hpp"

namespace introdrive {

// ---------------------------------------------------------------------------
// Regression metrics
// ---------------------------------------------------------------------------

struct RegressionScore {
  double mae = 0.0;
  double dcor = 0.0;
  bool degenerate = false;  // a constant series makes dCor undefined; reported as 0
};

inline double mean_absolute_error(const std::vector<double>& pred,
                                  const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw ContractError("MAE needs equal nonzero-length series");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / pred.size();
}

/// Sample distance correlation via double-centered distance matrices.
inline RegressionScore mae_and_dcor(const std::vector<double>& pred,
                                    const std::vector<double>& truth) {
  RegressionScore out;
  out.mae = mean_absolute_error(pred, truth);

  const std::size_t n = pred.size();
  auto centered = [n](const std::vector<double>& x) {
    std::vector<double> d(n * n);
    std::vector<double> row_mean(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        d[i * n + j] = std::abs(x[i] - x[j]);
        row_mean[i] += d[i * n + j];
      }
    for (std::size_t i = 0; i < n; ++i) {
      row_mean[i] /= n;
      grand += row_mean[i];
    }
    grand /= n;
    // |x_i - x_j| is symmetric, so column means equal row means
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += grand - row_mean[i] - row_mean[j];
    return d;
  };

  const std::vector<double> a = centered(pred);
  const std::vector<double> b = centered(truth);
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += a[i] * b[i];
    var_a += a[i] * a[i];
    var_b += b[i] * b[i];
  }
  cov /= static_cast<double>(n) * n;
  var_a /= static_cast<double>(n) * n;
  var_b /= static_cast<double>(n) * n;
  if (var_a <= 0.0 || var_b <= 0.0) {
    out.dcor = 0.0;
    out.degenerate = true;
    return out;
  }
  const double r2 = std::max(0.0, cov) / std::sqrt(var_a * var_b);
  out.dcor = std::min(1.0, std::sqrt(r2));
  return out;
}

// ---------------------------------------------------------------------------
// N-gram machinery
// ---------------------------------------------------------------------------

using TokenSeq = std::vector<std::string>;

namespace detail {

inline std::map<std::string, int> ngram_counts(const TokenSeq& tokens, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BLEU-4
// ---------------------------------------------------------------------------

/// Corpus-level BLEU with n up to 4: geometric mean of clipped n-gram
/// precisions times the brevity penalty. Unsmoothed by default; the
/// smoothing flag applies add-one smoothing to every precision, for tiny
/// corpora where a zero 4-gram count would zero the score.
inline double bleu4(const std::vector<TokenSeq>& candidates,
                    const std::vector<std::vector<TokenSeq>>& references, bool smooth = false) {
  if (candidates.empty() || candidates.size() != references.size())
    throw ContractError("bleu4 needs a nonempty corpus with references per candidate");
  constexpr int kMaxN = 4;
  double match[kMaxN] = {0, 0, 0, 0};
  double total[kMaxN] = {0, 0, 0, 0};
  std::int64_t cand_len = 0, ref_len = 0;

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw ContractError("bleu4: candidate without references");
    cand_len += static_cast<std::int64_t>(cand.size());
    // closest reference length; ties resolved toward the shorter reference
    std::int64_t best = static_cast<std::int64_t>(refs[0].size());
    for (const auto& r : refs) {
      const auto len = static_cast<std::int64_t>(r.size());
      const auto d_new = std::llabs(len - static_cast<std::int64_t>(cand.size()));
      const auto d_old = std::llabs(best - static_cast<std::int64_t>(cand.size()));
      if (d_new < d_old || (d_new == d_old && len < best)) best = len;
    }
    ref_len += best;

    for (int n = 1; n <= kMaxN; ++n) {
      const auto cand_counts = detail::ngram_counts(cand, n);
      std::map<std::string, int> max_ref;
      for (const auto& r : refs)
        for (const auto& [g, c] : detail::ngram_counts(r, n))
          max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : cand_counts) {
        total[n - 1] += c;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) match[n - 1] += std::min(c, it->second);
      }
    }
  }

  double log_p = 0.0;
  for (int n = 0; n < kMaxN; ++n) {
    double m = match[n], t = total[n];
    if (smooth) {
      m += 1.0;
      t += 1.0;
    }
    if (m <= 0.0 || t <= 0.0) return 0.0;
    log_p += std::log(m / t) / kMaxN;
  }
  if (cand_len == 0) return 0.0;
  const double bp = cand_len >= ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / cand_len);
  return bp * std::exp(log_p);
}

// ---------------------------------------------------------------------------
// CIDEr-D
// ---------------------------------------------------------------------------

struct CiderResult {
  double score = 0.0;                  // [0, 10]
  std::vector<double> per_candidate;   // same scale
  bool degenerate_idf = false;         // singleton corpus: idf collapses to 0
};

/// CIDEr-D: for each n in 1..4, tf-idf vectors over n-grams; similarity is
/// the candidate-clipped dot product normalized by both norms, damped by a
/// Gaussian penalty on the sentence-length difference; the mean over n and
/// references is scaled by 10. Document frequency counts, per n-gram, the
/// number of corpus items whose reference set contains it.
inline CiderResult cider_d(const std::vector<TokenSeq>& candidates,
                           const std::vector<std::vector<TokenSeq>>& references,
                           double sigma = 6.0) {
  if (candidates.empty() || candidates.size() != references.size())
    throw ContractError("cider_d needs a nonempty corpus with references per candidate");
  constexpr int kMaxN = 4;
  CiderResult out;
  out.degenerate_idf = candidates.size() < 2;

  std::map<std::string, int> df[kMaxN];
  for (const auto& refs : references) {
    for (int n = 1; n <= kMaxN; ++n) {
      std::map<std::string, int> seen;
      for (const auto& r : refs)
        for (const auto& [g, c] : detail::ngram_counts(r, n)) seen[g] = 1;
      for (const auto& [g, _] : seen) ++df[n - 1][g];
    }
  }
  const double log_items = std::log(static_cast<double>(candidates.size()));

  struct TfIdf {
    std::map<std::string, double> w;
    double norm = 0.0;
  };
  auto vectorize = [&](const TokenSeq& s, int n) {
    TfIdf v;
    for (const auto& [g, c] : detail::ngram_counts(s, n)) {
      auto it = df[n - 1].find(g);
      const double d = it == df[n - 1].end() ? 0.0 : it->second;
      const double idf = log_items - std::log(std::max(1.0, d));
      v.w[g] = c * idf;
      v.norm += v.w[g] * v.w[g];
    }
    v.norm = std::sqrt(v.norm);
    return v;
  };

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw ContractError("cider_d: candidate without references");
    double item_score = 0.0;
    for (const auto& ref : refs) {
      const double delta = static_cast<double>(cand.size()) - static_cast<double>(ref.size());
      const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
      double mean_n = 0.0;
      for (int n = 1; n <= kMaxN; ++n) {
        const TfIdf vc = vectorize(cand, n);
        const TfIdf vr = vectorize(ref, n);
        double dot = 0.0;
        for (const auto& [g, wc] : vc.w) {
          auto it = vr.w.find(g);
          if (it != vr.w.end()) dot += std::min(wc, it->second) * it->second;
        }
        if (vc.norm > 0.0 && vr.norm > 0.0) mean_n += dot / (vc.norm * vr.norm);
      }
      item_score += penalty * (mean_n / kMaxN);
    }
    out.per_candidate.push_back(10.0 * item_score / refs.size());
    out.score += out.per_candidate.back();
  }
  out.score /= candidates.size();
  return out;
}

// ---------------------------------------------------------------------------
// Temporal IoU
// ---------------------------------------------------------------------------

struct TimedInterval {
  double start_s = 0.0;
  double end_s = 0.0;
};

inline double interval_iou(const TimedInterval& a, const TimedInterval& b) {
  const double inter = std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
  const double uni = std::max(a.end_s, b.end_s) - std::min(a.start_s, b.start_s);
  return uni > 0.0 ? inter / uni : 0.0;
}

struct IouMatching {
  double mean_iou = 0.0;
  std::vector<std::tuple<int, int, double>> pairs;  // (index_a, index_b, iou)
  bool empty_input = false;
};

/// Greedy highest-IoU matching; ties resolved by earliest start (then the
/// remaining interval endpoints), symmetric in the two arguments. Unmatched
/// intervals contribute zero; the mean divides by the larger set size.
inline IouMatching temporal_iou(const std::vector<TimedInterval>& a,
                                const std::vector<TimedInterval>& b) {
  IouMatching out;
  if (a.empty() || b.empty()) {
    out.empty_input = true;
    return out;
  }
  struct Cand {
    double iou;
    double key1, key2, key3, key4;
    int i, j;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double iou = interval_iou(a[i], b[j]);
      if (iou <= 0.0) continue;
      cands.push_back({iou, std::min(a[i].start_s, b[j].start_s),
                       std::max(a[i].start_s, b[j].start_s), std::min(a[i].end_s, b[j].end_s),
                       std::max(a[i].end_s, b[j].end_s), static_cast<int>(i),
                       static_cast<int>(j)});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.iou != y.iou) return x.iou > y.iou;
    if (x.key1 != y.key1) return x.key1 < y.key1;
    if (x.key2 != y.key2) return x.key2 < y.key2;
    if (x.key3 != y.key3) return x.key3 < y.key3;
    return x.key4 < y.key4;
  });
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  double total = 0.0;
  for (const auto& c : cands) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = true;
    used_b[c.j] = true;
    out.pairs.emplace_back(c.i, c.j, c.iou);
    total += c.iou;
  }
  out.mean_iou = total / std::max(a.size(), b.size());
  return out;
}

// ---------------------------------------------------------------------------
// Inter-annotator agreement
// ---------------------------------------------------------------------------

struct AgreementReport {
  int n_videos = 0;
  int n_candidate_videos = 0;  // videos present for both workers
  int n_matched_pairs = 0;
  double mean_iou = 0.0;
  double cider_descriptions = 0.0;    // [0, 10]
  double cider_justifications = 0.0;  // [0, 10]
  bool no_pairs = false;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_videos"] = n_videos;
    j["n_candidate_videos"] = n_candidate_videos;
    j["n_matched_pairs"] = n_matched_pairs;
    j["mean_iou"] = mean_iou;
    j["cider_d"] = {{"descriptions", cider_descriptions},
                    {"justifications", cider_justifications}};
    // percentage-style view of the same numbers (x10), for comparison with
    // schemes that report CIDEr on a 0..100+ scale
    j["cider_d_pct"] = {{"descriptions", cider_descriptions * 10.0},
                        {"justifications", cider_justifications * 10.0}};
    j["no_pairs"] = no_pairs;
    return j;
  }
};

/// Pairs the two workers' intervals per video (greedy IoU), keeps pairs above
/// the threshold, and scores worker A's texts against worker B's with CIDEr-D.
inline AgreementReport agreement_report(const std::vector<AnnotatedClip>& worker_a,
                                        const std::vector<AnnotatedClip>& worker_b,
                                        double iou_threshold = 0.5) {
  AgreementReport rep;
  std::map<std::string, const AnnotatedClip*> by_id;
  for (const auto& c : worker_b) by_id[c.video_id] = &c;
  rep.n_videos = static_cast<int>(worker_a.size());

  std::vector<TokenSeq> cand_desc, cand_just;
  std::vector<std::vector<TokenSeq>> ref_desc, ref_just;
  double iou_sum = 0.0;
  int iou_count = 0;

  for (const auto& ca : worker_a) {
    auto it = by_id.find(ca.video_id);
    if (it == by_id.end()) continue;
    ++rep.n_candidate_videos;
    const AnnotatedClip& cb = *it->second;
    std::vector<TimedInterval> ia, ib;
    for (const auto& iv : ca.intervals) ia.push_back({iv.start_s, iv.end_s});
    for (const auto& iv : cb.intervals) ib.push_back({iv.start_s, iv.end_s});
    IouMatching m = temporal_iou(ia, ib);
    iou_sum += m.mean_iou;
    ++iou_count;
    for (const auto& [i, j, iou] : m.pairs) {
      if (iou <= iou_threshold) continue;
      ++rep.n_matched_pairs;
      cand_desc.push_back(tokenize(ca.intervals[i].description));
      cand_just.push_back(tokenize(ca.intervals[i].justification));
      ref_desc.push_back({tokenize(cb.intervals[j].description)});
      ref_just.push_back({tokenize(cb.intervals[j].justification)});
    }
  }
  rep.mean_iou = iou_count ? iou_sum / iou_count : 0.0;
  if (rep.n_matched_pairs == 0) {
    rep.no_pairs = true;
    return rep;
  }
  rep.cider_descriptions = cider_d(cand_desc, ref_desc).score;
  rep.cider_justifications = cider_d(cand_just, ref_just).score;
  return rep;
}

// ---------------------------------------------------------------------------
// Attention map diagnostics (shared by reports and tests)
// ---------------------------------------------------------------------------

/// Validating entropy of a normalized attention map, in nats.
inline double attention_entropy(const std::vector<double>& alpha, double tol = 1e-6) {
  double s = 0.0;
  for (double v : alpha) {
    if (v < 0.0) throw ContractError("attention weight below zero");
    s += v;
  }
  if (std::abs(s - 1.0) > tol)
    throw ContractError("attention weights sum to " + format_double(s) + ", expected 1");
  double h = 0.0;
  for (double v : alpha)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

/// KL divergence between two normalized maps with the same epsilon floor as
/// the training loss.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ContractError("kl_divergence: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0)
      d += p[i] * (std::log(std::max(p[i], kKlEps)) - std::log(std::max(q[i], kKlEps)));
  return d;
}

}  // namespace introdrive

#endif
