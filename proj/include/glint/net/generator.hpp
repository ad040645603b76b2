// PixelGenerator: a per-pixel MLP mapping G-buffer attributes plus the scene
// vector and camera to outgoing radiance.
//
// Layer 1 sees only the world position. The conditioning block is
// concatenated to the hidden state entering layer 2 and again entering layer
// hidden_layers/2 + 2 (1-based, when that layer exists). Hidden activations
// are leaky rectifiers (slope 0.01); the 3-channel head is linear. Emission is
// added to the head output, and pixels with no hit output emission only.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "glint/core.hpp"
#include "glint/net/batch.hpp"

namespace glint {

inline constexpr double kLeakySlope = 0.01;

/// Contiguous batch columns that form one patch.
struct ColumnRange {
  Eigen::Index begin = 0;
  Eigen::Index count = 0;
};

struct GeneratorShape {
  int scene_dim = 0;
  int hidden_width = 64;
  int hidden_layers = 4;

  friend bool operator==(const GeneratorShape&, const GeneratorShape&) = default;
};

template <typename Scalar>
class PixelGenerator {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  /// Forward activations kept for the backward pass.
  struct Cache {
    std::vector<Matrix> inputs;  // input of every layer, head included
    std::vector<Matrix> pre;     // pre-activation of every hidden layer
    Eigen::Array<Scalar, 1, Eigen::Dynamic> mask;
  };

  PixelGenerator() = default;

  PixelGenerator(GeneratorShape shape, std::uint64_t seed) : shape_(shape) {
    if (shape.scene_dim < 0 || shape.hidden_width < 1 || shape.hidden_layers < 2)
      throw ConfigError("generator needs hidden_width >= 1 and hidden_layers >= 2");
    layout();
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const double bound = std::sqrt(6.0 / layers_[k].in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      auto w = weights(k);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
    }
  }

  /// Rebuilds a generator of `shape` around an existing parameter vector.
  static PixelGenerator from_parameters(GeneratorShape shape, std::vector<Scalar> params) {
    PixelGenerator g;
    g.shape_ = shape;
    g.layout();
    if (params.size() != g.params_.size())
      throw DimensionError("parameter vector has " + std::to_string(params.size()) + " entries, expected " +
                           std::to_string(g.params_.size()));
    g.params_ = std::move(params);
    return g;
  }

  static std::size_t parameter_count(GeneratorShape shape) {
    PixelGenerator g;
    g.shape_ = shape;
    g.layout();
    return g.params_.size();
  }

  template <typename Other>
  PixelGenerator<Other> cast() const {
    std::vector<Other> p(params_.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<Other>(params_[i]);
    return PixelGenerator<Other>::from_parameters(shape_, std::move(p));
  }

  const GeneratorShape& shape() const { return shape_; }
  int conditioning_width() const { return conditioning_dim(shape_.scene_dim); }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }
  std::size_t layer_count() const { return layers_.size(); }

  /// 0-based hidden layer index that receives the conditioning block.
  bool is_skip_layer(int k) const {
    const int second = shape_.hidden_layers / 2 + 1;
    return k == 1 || (k == second && second < shape_.hidden_layers);
  }

  Matrix forward(const PixelBatch<Scalar>& batch, Cache* cache = nullptr) const {
    check_batch(batch);
    const int hidden = shape_.hidden_layers;
    if (cache) {
      cache->inputs.assign(layers_.size(), Matrix());
      cache->pre.assign(hidden, Matrix());
      cache->mask = batch.mask;
    }
    Matrix a = batch.position;
    for (int k = 0; k < hidden; ++k) {
      Matrix x;
      if (is_skip_layer(k)) {
        x.resize(a.rows() + batch.conditioning.rows(), a.cols());
        x << a, batch.conditioning;
      } else {
        x = std::move(a);
      }
      Matrix z = weights(k) * x;
      z.colwise() += bias(k);
      a = z.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : Scalar(kLeakySlope) * v; });
      if (cache) {
        cache->inputs[k] = std::move(x);
        cache->pre[k] = std::move(z);
      }
    }
    Matrix y = weights(hidden) * a;
    y.colwise() += bias(hidden);
    if (cache) cache->inputs[hidden] = std::move(a);
    y.array().rowwise() *= batch.mask;
    y += batch.emission;
    return y;
  }

  /// Gradients of the loss whose output gradient is `d_out`, one column per
  /// entry of `groups`, each using only that group's columns.
  Matrix backward(const Cache& cache, const Matrix& d_out, std::span<const ColumnRange> groups) const {
    const int hidden = shape_.hidden_layers;
    const auto n_groups = static_cast<Eigen::Index>(groups.size());
    Matrix grads = Matrix::Zero(static_cast<Eigen::Index>(params_.size()), n_groups);
    Matrix d = d_out;
    d.array().rowwise() *= cache.mask;
    accumulate(hidden, d, cache.inputs[hidden], groups, grads);
    Matrix d_act = weights(hidden).transpose() * d;
    for (int k = hidden - 1; k >= 0; --k) {
      const Matrix& z = cache.pre[k];
      Matrix dz = d_act.binaryExpr(z, [](Scalar g, Scalar v) { return v > Scalar(0) ? g : Scalar(kLeakySlope) * g; });
      accumulate(k, dz, cache.inputs[k], groups, grads);
      if (k > 0) {
        Matrix dx = weights(k).transpose() * dz;
        d_act = dx.topRows(shape_.hidden_width);
      }
    }
    return grads;
  }

  /// Gradient of the whole batch (one group spanning all columns).
  Vector backward(const Cache& cache, const Matrix& d_out) const {
    const ColumnRange all{0, d_out.cols()};
    return backward(cache, d_out, std::span<const ColumnRange>(&all, 1)).col(0);
  }

 private:
  struct Layer {
    Eigen::Index in = 0, out = 0;
    std::size_t weight_offset = 0, bias_offset = 0;
  };

  void layout() {
    layers_.clear();
    std::size_t offset = 0;
    auto add = [&](Eigen::Index in, Eigen::Index out) {
      Layer l{in, out, offset, offset + static_cast<std::size_t>(in * out)};
      offset = l.bias_offset + static_cast<std::size_t>(out);
      layers_.push_back(l);
    };
    const Eigen::Index h = shape_.hidden_width;
    add(3, h);
    for (int k = 1; k < shape_.hidden_layers; ++k) add(h + (is_skip_layer(k) ? conditioning_width() : 0), h);
    add(h, 3);
    params_.assign(offset, Scalar(0));
  }

  void check_batch(const PixelBatch<Scalar>& b) const {
    if (b.position.rows() != 3 || b.emission.rows() != 3 || b.conditioning.rows() != conditioning_width() ||
        b.conditioning.cols() != b.position.cols() || b.emission.cols() != b.position.cols() ||
        b.mask.size() != b.position.cols())
      throw DimensionError("pixel batch does not match a generator for " + std::to_string(shape_.scene_dim) +
                           " scene parameters (conditioning rows " + std::to_string(b.conditioning.rows()) +
                           ", expected " + std::to_string(conditioning_width()) + ")");
  }

  Eigen::Map<const RowMajor> weights(std::size_t k) const {
    const Layer& l = layers_[k];
    return {params_.data() + l.weight_offset, l.out, l.in};
  }
  Eigen::Map<RowMajor> weights(std::size_t k) {
    const Layer& l = layers_[k];
    return {params_.data() + l.weight_offset, l.out, l.in};
  }
  Eigen::Map<const Vector> bias(std::size_t k) const {
    const Layer& l = layers_[k];
    return {params_.data() + l.bias_offset, l.out};
  }

  void accumulate(std::size_t k, const Matrix& dz, const Matrix& x, std::span<const ColumnRange> groups,
                  Matrix& grads) const {
    const Layer& l = layers_[k];
    for (Eigen::Index g = 0; g < static_cast<Eigen::Index>(groups.size()); ++g) {
      const auto& r = groups[g];
      Eigen::Map<RowMajor> dw(grads.col(g).data() + l.weight_offset, l.out, l.in);
      dw.noalias() = dz.middleCols(r.begin, r.count) * x.middleCols(r.begin, r.count).transpose();
      Eigen::Map<Vector> db(grads.col(g).data() + l.bias_offset, l.out);
      db = dz.middleCols(r.begin, r.count).rowwise().sum();
    }
  }

  GeneratorShape shape_;
  std::vector<Layer> layers_;
  std::vector<Scalar> params_;
};

}  // namespace glint
