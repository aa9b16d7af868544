#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace winseg {

// Pre-LN transformer encoder over a stack of token rows. Dense types are
// templated on the scalar so the same code runs in float and double.
template <typename Scalar>
struct LayerNorm {
  using Vector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Vector gain;
  Vector bias;
  Scalar eps = Scalar(1e-5);

  Matrix operator()(const Matrix& x) const {
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Scalar mean = x.row(r).mean();
      const auto centered = (x.row(r).array() - mean).matrix();
      const Scalar var = centered.squaredNorm() / Scalar(x.cols());
      y.row(r) = (centered.array() / std::sqrt(var + eps) * gain.array() + bias.array()).matrix();
    }
    return y;
  }
};

template <typename Scalar>
struct TransformerLayer {
  using Vector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  LayerNorm<Scalar> ln1, ln2;
  Matrix w_qkv;  // width x 3*width
  Vector b_qkv;
  Matrix w_out;  // width x width
  Vector b_out;
  Matrix w_fc;  // width x hidden
  Vector b_fc;
  Matrix w_proj;  // hidden x width
  Vector b_proj;
};

// Deterministic uniform weights from raw mt19937_64 output, so weights do not
// depend on the standard library's distribution implementations.
class WeightSource {
 public:
  explicit WeightSource(std::uint64_t seed) : rng_(seed) {}

  double uniform() {  // [-1, 1)
    return static_cast<double>(rng_() >> 11) * 0x1.0p-52 - 1.0;
  }

  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> matrix(Eigen::Index rows, Eigen::Index cols,
                                                                                 double scale) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(scale * uniform());
    return m;
  }

 private:
  std::mt19937_64 rng_;
};

template <typename Scalar>
class Transformer {
 public:
  using Vector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Transformer() = default;

  static Transformer random(int width, int heads, int depth, int mlp_ratio, WeightSource& src) {
    Transformer t;
    t.width_ = width;
    t.heads_ = heads;
    const double s_in = 1.0 / std::sqrt(double(width));
    const double s_hidden = 1.0 / std::sqrt(double(width * mlp_ratio));
    for (int d = 0; d < depth; ++d) {
      TransformerLayer<Scalar> l;
      l.ln1 = {Vector::Ones(width), Vector::Zero(width)};
      l.ln2 = {Vector::Ones(width), Vector::Zero(width)};
      l.w_qkv = src.matrix<Scalar>(width, 3 * width, s_in);
      l.b_qkv = src.matrix<Scalar>(1, 3 * width, 0.02);
      l.w_out = src.matrix<Scalar>(width, width, s_in);
      l.b_out = src.matrix<Scalar>(1, width, 0.02);
      l.w_fc = src.matrix<Scalar>(width, width * mlp_ratio, s_in);
      l.b_fc = src.matrix<Scalar>(1, width * mlp_ratio, 0.02);
      l.w_proj = src.matrix<Scalar>(width * mlp_ratio, width, s_hidden);
      l.b_proj = src.matrix<Scalar>(1, width, 0.02);
      t.layers_.push_back(std::move(l));
    }
    return t;
  }

  int width() const { return width_; }

  // Runs every layer over x, whose rows form consecutive independent
  // sequences of `block` tokens each. `bias`, when non-null, is a block x block
  // additive attention bias (0 or -inf) shared by all sequences.
  Matrix forward(Matrix x, Eigen::Index block, const Matrix* bias = nullptr) const {
    for (const auto& l : layers_) {
      x += attention(l, l.ln1(x), block, bias);
      Matrix h = (l.ln2(x) * l.w_fc).rowwise() + l.b_fc;
      h = h.unaryExpr([](Scalar v) { return gelu(v); });
      x += (h * l.w_proj).rowwise() + l.b_proj;
    }
    return x;
  }

 private:
  static Scalar gelu(Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v / std::sqrt(Scalar(2)))); }

  Matrix attention(const TransformerLayer<Scalar>& l, const Matrix& x, Eigen::Index block, const Matrix* bias) const {
    const Matrix qkv = (x * l.w_qkv).rowwise() + l.b_qkv;
    const int head_dim = width_ / heads_;
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(head_dim));
    Matrix ctx(x.rows(), width_);
    for (Eigen::Index start = 0; start < x.rows(); start += block) {
      for (int h = 0; h < heads_; ++h) {
        const auto q = qkv.block(start, h * head_dim, block, head_dim);
        const auto k = qkv.block(start, width_ + h * head_dim, block, head_dim);
        const auto v = qkv.block(start, 2 * width_ + h * head_dim, block, head_dim);
        Matrix logits = (q * k.transpose()) * scale;
        if (bias) logits += *bias;
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
          const Scalar m = logits.row(r).maxCoeff();
          logits.row(r) = (logits.row(r).array() - m).exp().matrix();
          logits.row(r) /= logits.row(r).sum();
        }
        ctx.block(start, h * head_dim, block, head_dim).noalias() = logits * v;
      }
    }
    return (ctx * l.w_out).rowwise() + l.b_out;
  }

  int width_ = 0;
  int heads_ = 1;
  std::vector<TransformerLayer<Scalar>> layers_;
};

}  // namespace winseg
