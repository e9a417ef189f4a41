#ifndef INTRODRIVE_PERCEPTION_HPP
#define INTRODRIVE_PERCEPTION_HPP

// Convolutional feature encoder: a five-layer, pooling-free CNN mapping a
// stacked frame tensor to a feature cube of l = out_h*out_w region vectors
// of dimension d. Region index i maps to (row = i / out_w, col = i % out_w).

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "introdrive/layers.hpp"
#include "introdrive/tensor.hpp"

namespace introdrive {

struct ConvLayerSpec {
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
};

struct EncoderConfig {
  int in_channels = 12;  // 4 stacked RGB frames
  int in_h = 90;
  int in_w = 160;
  // Kernels/strides/padding are chosen so the composed output of the 90x160
  // input is exactly 12x20x64. The layer schedule itself is a documented
  // choice; the reference design fixes only the depth (5), the absence of
  // pooling and the output cube size. 3x3 kernels keep the composed
  // receptive field at 47 px, so one attended cell cannot cover the whole
  // frame and attention maps stay spatially meaningful.
  std::vector<ConvLayerSpec> layers = {
      {24, 3, 2, 1}, {36, 3, 2, 1}, {48, 3, 2, 1}, {64, 3, 1, 1}, {64, 3, 1, 1}};
  // expected composed output; 0 disables the check (toy configurations)
  int expect_out_h = 12;
  int expect_out_w = 20;

  struct Composed {
    int h = 0, w = 0, d = 0;
    int regions() const { return h * w; }
  };

  Composed composed() const {
    int h = in_h, w = in_w;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.filters < 1 || l.kernel < 1 || l.stride < 1 || l.pad < 0)
        throw ConfigError("encoder layer " + std::to_string(i) + " has invalid spec");
      if (l.kernel > h + 2 * l.pad || l.kernel > w + 2 * l.pad)
        throw ConfigError("encoder layer " + std::to_string(i) +
                          " kernel exceeds padded input");
      h = (h + 2 * l.pad - l.kernel) / l.stride + 1;
      w = (w + 2 * l.pad - l.kernel) / l.stride + 1;
    }
    Composed out;
    out.h = h;
    out.w = w;
    out.d = layers.back().filters;
    return out;
  }

  void validate() const {
    Composed c = composed();
    if (expect_out_h > 0 && expect_out_w > 0 && (c.h != expect_out_h || c.w != expect_out_w))
      throw ConfigError("encoder output " + std::to_string(c.h) + "x" + std::to_string(c.w) +
                        " does not match the required " + std::to_string(expect_out_h) + "x" +
                        std::to_string(expect_out_w) + " feature grid");
  }

  /// Half-width of the composed receptive field around an output cell center,
  /// and the input-pixel stride between neighboring cells.
  struct ReceptiveField {
    int size = 1;
    int jump = 1;
  };
  ReceptiveField receptive_field() const {
    ReceptiveField rf;
    for (const auto& l : layers) {
      rf.size += (l.kernel - 1) * rf.jump;
      rf.jump *= l.stride;
    }
    return rf;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["in_channels"] = in_channels;
    j["in_h"] = in_h;
    j["in_w"] = in_w;
    j["expect_out_h"] = expect_out_h;
    j["expect_out_w"] = expect_out_w;
    nlohmann::json ls = nlohmann::json::array();
    for (const auto& l : layers)
      ls.push_back({{"filters", l.filters},
                    {"kernel", l.kernel},
                    {"stride", l.stride},
                    {"pad", l.pad}});
    j["layers"] = ls;
    return j;
  }

  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig cfg;
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.in_h = j.at("in_h").get<int>();
    cfg.in_w = j.at("in_w").get<int>();
    cfg.expect_out_h = j.at("expect_out_h").get<int>();
    cfg.expect_out_w = j.at("expect_out_w").get<int>();
    cfg.layers.clear();
    for (const auto& l : j.at("layers")) {
      cfg.layers.push_back({l.at("filters").get<int>(), l.at("kernel").get<int>(),
                            l.at("stride").get<int>(), l.at("pad").get<int>()});
    }
    return cfg;
  }
};

/// Per-frame feature cube, stored region-major (l x d).
struct FeatureCube {
  Tensor regions;  // l x d
  int grid_h = 0;
  int grid_w = 0;
  int l() const { return grid_h * grid_w; }
  int d() const { return regions.dim(1); }
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(ParamStore& ps, const std::string& prefix, const EncoderConfig& cfg,
          std::mt19937_64& rng)
      : cfg_(cfg) {
    cfg_.validate();
    int channels = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
      const auto& l = cfg_.layers[i];
      Tensor& k = ps.create(prefix + ".conv" + std::to_string(i + 1) + ".w",
                            {l.filters, channels, l.kernel, l.kernel});
      he_fill(k, channels * l.kernel * l.kernel, rng);
      kernels_.push_back(k);
      biases_.push_back(ps.create(prefix + ".conv" + std::to_string(i + 1) + ".b", {l.filters}));
      channels = l.filters;
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  /// Raw [d, out_h, out_w] activation map.
  Tensor encode_map(Tape* tape, const Tensor& stack) const {
    if (stack.shape() != Shape{cfg_.in_channels, cfg_.in_h, cfg_.in_w})
      throw ShapeError("encoder input " + shape_str(stack.shape()) + ", configured for " +
                       shape_str({cfg_.in_channels, cfg_.in_h, cfg_.in_w}));
    Tensor cur = stack;
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
      const auto& l = cfg_.layers[i];
      cur = relu(tape, add_channel_bias(
                           tape, conv2d(tape, cur, kernels_[i], l.stride, l.stride, l.pad, l.pad),
                           biases_[i]));
    }
    return cur;
  }

  /// Feature cube reshaped to l x d, region i = row * out_w + col.
  FeatureCube encode(Tape* tape, const Tensor& stack) const {
    Tensor map = encode_map(tape, stack);
    const int d = map.dim(0), h = map.dim(1), w = map.dim(2);
    FeatureCube cube;
    cube.regions = transpose2d(tape, reshape(tape, map, {d, h * w}));
    cube.grid_h = h;
    cube.grid_w = w;
    return cube;
  }

 private:
  EncoderConfig cfg_;
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

}  // namespace introdrive

#endif
