// Copyright 2026 The shadowfit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "shadowfit/errors.hpp"
#include "shadowfit/geometry.hpp"
#include "shadowfit/random.hpp"

namespace shadowfit {

/// Fourier feature spec: per octave k the features are sin/cos of
/// base_freq * 2^k times each normalized coordinate. Encoded length is
/// 2 + 4 * octaves (the raw coordinates are always included).
struct EncodingSpec {
  int octaves = 6;
  double base_freq = M_PI;
};

struct DepthFieldConfig {
  int image_width = 0;
  int image_height = 0;
  EncodingSpec encoding;
  int hidden_width = 128;
  int affine_layers = 6;  // sine activation on all but the last
  double omega0 = 30.0;
  // Output transform d = depth_offset + depth_scale * softplus(raw); keeps the
  // field positive and lets callers match the scene's depth range.
  double depth_offset = 0.0;
  double depth_scale = 1.0;

  int encoded_dim() const { return 2 + 4 * encoding.octaves; }
};

struct FieldGradients {
  Eigen::VectorXd d_params;
};

namespace detail {

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// Implicit depth map: pixel coordinates -> positive depth, parameterized by a
/// sine-activated MLP over positionally encoded, [-1,1]-normalized inputs.
/// Parameters live in one flat vector so the optimizer can treat the field as
/// a plain vector of weights.
class DepthField {
 public:
  explicit DepthField(const DepthFieldConfig& config) : config_(config) {
    if (config.image_width <= 0 || config.image_height <= 0)
      throw InvalidParams("DepthField: image size must be positive");
    if (config.encoding.octaves < 0) throw InvalidParams("DepthField: octaves must be >= 0");
    if (config.affine_layers < 2) throw InvalidParams("DepthField: need at least two affine maps");
    if (config.hidden_width < 1) throw InvalidParams("DepthField: hidden width must be positive");
    if (config.depth_offset < 0.0 || config.depth_scale <= 0.0)
      throw InvalidParams("DepthField: depth transform requires offset >= 0 and scale > 0");
    dims_.push_back(config.encoded_dim());
    for (int l = 1; l < config.affine_layers; ++l) dims_.push_back(config.hidden_width);
    dims_.push_back(1);
    offsets_.resize(dims_.size());
    int total = 0;
    for (size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_[l] = total;
      total += dims_[l] * dims_[l + 1] + dims_[l + 1];
    }
    params_ = Eigen::VectorXd::Zero(total);
  }

  /// Layer weights drawn per the sine-network initialization: the first layer
  /// uniform in [-1/n, 1/n], hidden layers in [-sqrt(6/n)/omega0, +], and the
  /// final linear map in [-sqrt(6/n), +] so the raw output has unit variance.
  /// Biases use their layer's bound.
  static DepthField init(const DepthFieldConfig& config, uint64_t seed) {
    DepthField field(config);
    Rng rng(seed);
    for (int l = 0; l < field.n_affine(); ++l) {
      const int fan_in = field.dims_[l];
      double bound;
      if (l == 0)
        bound = 1.0 / double(fan_in);
      else if (l + 1 < field.n_affine())
        bound = std::sqrt(6.0 / double(fan_in)) / config.omega0;
      else
        bound = std::sqrt(6.0 / double(fan_in));
      const int count = field.dims_[l] * field.dims_[l + 1] + field.dims_[l + 1];
      double* p = field.params_.data() + field.offsets_[l];
      for (int i = 0; i < count; ++i) p[i] = rng.uniform(-bound, bound);
    }
    return field;
  }

  const DepthFieldConfig& config() const { return config_; }
  int n_affine() const { return int(dims_.size()) - 1; }
  int param_count() const { return int(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const {
    return Eigen::Map<const Eigen::MatrixXd>(params_.data() + offsets_[layer], dims_[layer + 1],
                                             dims_[layer]);
  }
  Eigen::Map<Eigen::MatrixXd> weight(int layer) {
    return Eigen::Map<Eigen::MatrixXd>(params_.data() + offsets_[layer], dims_[layer + 1],
                                       dims_[layer]);
  }
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const {
    return Eigen::Map<const Eigen::VectorXd>(
        params_.data() + offsets_[layer] + dims_[layer] * dims_[layer + 1], dims_[layer + 1]);
  }
  Eigen::Map<Eigen::VectorXd> bias(int layer) {
    return Eigen::Map<Eigen::VectorXd>(
        params_.data() + offsets_[layer] + dims_[layer] * dims_[layer + 1], dims_[layer + 1]);
  }

  /// Index range [begin, end) of layer `l` in the flat parameter vector.
  std::pair<int, int> layer_span(int layer) const {
    const int begin = offsets_[layer];
    return {begin, begin + dims_[layer] * dims_[layer + 1] + dims_[layer + 1]};
  }

  double normalize_u(double u) const {
    return config_.image_width > 1 ? 2.0 * (u / double(config_.image_width - 1)) - 1.0 : 0.0;
  }
  double normalize_v(double v) const {
    return config_.image_height > 1 ? 2.0 * (v / double(config_.image_height - 1)) - 1.0 : 0.0;
  }

  Eigen::VectorXd encode(const ImagePoint& u) const {
    Eigen::VectorXd out(config_.encoded_dim());
    encode_into(u, out.data());
    return out;
  }

  struct EvalTape {
    Eigen::MatrixXd x0;                   // encoded inputs, encoded_dim x B
    std::vector<Eigen::MatrixXd> preact;  // z_l per sine layer
    std::vector<Eigen::MatrixXd> act;     // sin(omega0 * z_l) per sine layer
    Eigen::VectorXd raw;                  // pre-transform outputs, length B
  };

  Eigen::VectorXd eval_batch(std::span<const ImagePoint> points) const {
    EvalTape tape;
    return eval_batch_with_tape(points, tape);
  }

  void encode_points(std::span<const ImagePoint> points, EvalTape& tape) const {
    if (points.empty()) throw InvalidParams("eval_batch: batch must be non-empty");
    const int B = int(points.size());
    tape.x0.resize(config_.encoded_dim(), B);
    for (int i = 0; i < B; ++i) encode_into(points[size_t(i)], tape.x0.col(i).data());
  }

  /// Encodes every pixel center, row-major. The encoding depends only on the
  /// image size, so a tape prepared once can be re-run with forward_encoded
  /// after each parameter update.
  void encode_grid(EvalTape& tape) const {
    const int W = config_.image_width, H = config_.image_height;
    tape.x0.resize(config_.encoded_dim(), W * H);
    for (int v = 0; v < H; ++v)
      for (int u = 0; u < W; ++u)
        encode_into(ImagePoint(double(u), double(v)), tape.x0.col(v * W + u).data());
  }

  /// Forward pass over the already-encoded inputs in tape.x0.
  Eigen::VectorXd forward_encoded(EvalTape& tape) const { return forward_from_encoded(tape); }

  Eigen::VectorXd eval_batch_with_tape(std::span<const ImagePoint> points, EvalTape& tape) const {
    encode_points(points, tape);
    return forward_from_encoded(tape);
  }

  double eval(const ImagePoint& u) const {
    const ImagePoint pts[1] = {u};
    return eval_batch(std::span<const ImagePoint>(pts, 1))[0];
  }

  /// Evaluates every pixel center, row-major.
  Eigen::VectorXd eval_grid_with_tape(EvalTape& tape) const {
    encode_grid(tape);
    return forward_from_encoded(tape);
  }

  FieldGradients backward(const EvalTape& tape, const Eigen::VectorXd& d_depths) const {
    FieldGradients g{Eigen::VectorXd::Zero(params_.size())};
    backward_into(tape, d_depths, g.d_params);
    return g;
  }

  /// Accumulates d(sum_i d_depths[i] * depth_i)/d(params) into `accum`.
  void backward_into(const EvalTape& tape, const Eigen::VectorXd& d_depths,
                     Eigen::VectorXd& accum) const {
    const int B = int(tape.raw.size());
    if (d_depths.size() != B) throw DimensionMismatch("backward: upstream size mismatch");
    const int L = n_affine();
    // d depth / d raw = scale * sigmoid(raw)
    Eigen::RowVectorXd g_raw(B);
    for (int i = 0; i < B; ++i)
      g_raw(i) = d_depths(i) * config_.depth_scale * detail::sigmoid(tape.raw(i));

    const Eigen::MatrixXd& last_in = (L >= 2) ? tape.act[size_t(L - 2)] : tape.x0;
    auto w_out = weight(L - 1);
    grad_weight(L - 1, accum).noalias() += g_raw * last_in.transpose();
    grad_bias(L - 1, accum)(0) += g_raw.sum();

    Eigen::MatrixXd g = w_out.transpose() * g_raw;  // hidden x B
    for (int l = L - 2; l >= 0; --l) {
      const Eigen::MatrixXd& in = (l == 0) ? tape.x0 : tape.act[size_t(l - 1)];
      Eigen::MatrixXd dz =
          g.array() * (config_.omega0 * (config_.omega0 * tape.preact[size_t(l)].array()).cos());
      grad_weight(l, accum).noalias() += dz * in.transpose();
      grad_bias(l, accum).noalias() += dz.rowwise().sum();
      if (l > 0) g.noalias() = weight(l).transpose() * dz;
    }
  }

  /// Checkpoint blob: magic + dimensions header, then parameters as
  /// little-endian float32.
  void save(std::ostream& os) const {
    os.write(kMagic, 8);
    write_u32(os, uint32_t(n_affine()));
    for (int d : dims_) write_u32(os, uint32_t(d));
    write_u32(os, uint32_t(config_.encoding.octaves));
    write_f64(os, config_.encoding.base_freq);
    write_f64(os, config_.omega0);
    write_f64(os, config_.depth_offset);
    write_f64(os, config_.depth_scale);
    write_u32(os, uint32_t(config_.image_width));
    write_u32(os, uint32_t(config_.image_height));
    for (int i = 0; i < params_.size(); ++i) write_f32(os, float(params_[i]));
  }

  static DepthField load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != kMagic)
      throw BadConfig("field checkpoint: bad magic, not a field parameter file");
    const uint32_t n_affine = read_u32(is);
    if (n_affine < 2 || n_affine > 64) throw BadConfig("field checkpoint: corrupt layer count");
    std::vector<int> dims(n_affine + 1);
    for (auto& d : dims) d = int(read_u32(is));
    DepthFieldConfig cfg;
    cfg.affine_layers = int(n_affine);
    cfg.hidden_width = dims.size() > 2 ? dims[1] : 1;
    cfg.encoding.octaves = int(read_u32(is));
    cfg.encoding.base_freq = read_f64(is);
    cfg.omega0 = read_f64(is);
    cfg.depth_offset = read_f64(is);
    cfg.depth_scale = read_f64(is);
    cfg.image_width = int(read_u32(is));
    cfg.image_height = int(read_u32(is));
    if (cfg.encoded_dim() != dims[0] || dims.back() != 1)
      throw BadConfig("field checkpoint: layer sizes disagree with encoding");
    DepthField field(cfg);
    for (int i = 0; i < field.params_.size(); ++i) field.params_[i] = double(read_f32(is));
    if (!is) throw BadConfig("field checkpoint: truncated parameter blob");
    return field;
  }

 private:
  static constexpr const char* kMagic = "SFLDMLP1";

  void encode_into(const ImagePoint& p, double* out) const {
    const double x = normalize_u(p.x());
    const double y = normalize_v(p.y());
    out[0] = x;
    out[1] = y;
    double freq = config_.encoding.base_freq;
    for (int k = 0; k < config_.encoding.octaves; ++k) {
      out[2 + 4 * k + 0] = std::sin(freq * x);
      out[2 + 4 * k + 1] = std::cos(freq * x);
      out[2 + 4 * k + 2] = std::sin(freq * y);
      out[2 + 4 * k + 3] = std::cos(freq * y);
      freq *= 2.0;
    }
  }

  Eigen::VectorXd forward_from_encoded(EvalTape& tape) const {
    const int B = int(tape.x0.cols());
    const int L = n_affine();
    tape.preact.resize(size_t(L - 1));
    tape.act.resize(size_t(L - 1));
    const Eigen::MatrixXd* in = &tape.x0;
    for (int l = 0; l < L - 1; ++l) {
      Eigen::MatrixXd& z = tape.preact[size_t(l)];
      z.noalias() = weight(l) * (*in);
      z.colwise() += bias(l);
      tape.act[size_t(l)] = (config_.omega0 * z.array()).sin();
      in = &tape.act[size_t(l)];
    }
    Eigen::RowVectorXd raw = weight(L - 1).row(0) * (*in);
    raw.array() += bias(L - 1)(0);
    tape.raw = raw.transpose();
    Eigen::VectorXd out(B);
    for (int i = 0; i < B; ++i)
      out(i) = config_.depth_offset + config_.depth_scale * detail::softplus(tape.raw(i));
    return out;
  }

  Eigen::Map<Eigen::MatrixXd> grad_weight(int layer, Eigen::VectorXd& grads) const {
    return Eigen::Map<Eigen::MatrixXd>(grads.data() + offsets_[layer], dims_[layer + 1],
                                       dims_[layer]);
  }
  Eigen::Map<Eigen::VectorXd> grad_bias(int layer, Eigen::VectorXd& grads) const {
    return Eigen::Map<Eigen::VectorXd>(
        grads.data() + offsets_[layer] + dims_[layer] * dims_[layer + 1], dims_[layer + 1]);
  }

  static void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  static uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
  }
  static void write_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
  }
  static float read_f32(std::istream& is) {
    const uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  static void write_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u32(os, uint32_t(bits));
    write_u32(os, uint32_t(bits >> 32));
  }
  static double read_f64(std::istream& is) {
    const uint64_t lo = read_u32(is);
    const uint64_t hi = read_u32(is);
    const uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  DepthFieldConfig config_;
  std::vector<int> dims_;
  std::vector<int> offsets_;
  Eigen::VectorXd params_;
};

}  // namespace shadowfit
