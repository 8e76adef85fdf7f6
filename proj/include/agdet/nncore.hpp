#pragma once

// Minimal dense math for the decoder: matmul, row softmax, multi-head
// attention, a two-layer rectifier MLP and a sinusoidal point embedding.
// Row-vector convention throughout: a layer with weight W (in x out) maps
// x (n x in) to x * W (n x out).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "agdet/core.hpp"
#include "agdet/matrix.hpp"

namespace agdet {

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::ShapeError, "matmul " + shape_string(a) + " * " + shape_string(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      const auto brow = b.row(p);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  }
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeError, "add " + shape_string(a) + " + " + shape_string(b));
  Matrix out = a;
  auto o = out.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return out;
}

/// Adds `bias` to every row.
inline Matrix add_row(const Matrix& a, std::span<const double> bias) {
  if (bias.size() != a.cols()) throw Error(ErrorCode::ShapeError, "bias length does not match columns");
  Matrix out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
  return out;
}

/// Columns [begin, begin + count).
inline Matrix column_block(const Matrix& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.cols()) throw Error(ErrorCode::ShapeError, "column block out of range");
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < count; ++j) out(i, j) = m(i, begin + j);
  }
  return out;
}

/// In-place stable softmax of one row.
inline void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double peak = *std::ranges::max_element(row);
  double total = 0.0;
  for (double& v : row) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : row) v /= total;
}

inline Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// Multi-head attention
// ---------------------------------------------------------------------------

/// Projections for multi-head attention. All four are (C x C); head h uses
/// columns [h*C/heads, (h+1)*C/heads) of the query/key/value projections.
struct AttentionParams {
  Matrix wq;
  Matrix wk;
  Matrix wv;
  Matrix wo;
  std::size_t heads = 1;

  std::size_t dim() const noexcept { return wq.rows(); }

  void validate() const {
    const std::size_t c = wq.rows();
    if (heads == 0 || c == 0 || c % heads != 0) {
      throw Error(ErrorCode::ShapeError, "model dim must be a positive multiple of the head count");
    }
    for (const Matrix* m : {&wq, &wk, &wv, &wo}) {
      if (m->rows() != c || m->cols() != c) {
        throw Error(ErrorCode::ShapeError, "attention projection must be " + std::to_string(c) + "x" +
                                               std::to_string(c) + ", got " + shape_string(*m));
      }
    }
  }

  static AttentionParams identity(std::size_t c, std::size_t heads = 1) {
    AttentionParams p{Matrix::identity(c), Matrix::identity(c), Matrix::identity(c), Matrix::identity(c), heads};
    p.validate();
    return p;
  }
};

namespace detail {

inline void check_attention_inputs(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionParams& p) {
  p.validate();
  const std::size_t c = p.dim();
  if (q.cols() != c || k.cols() != c || v.cols() != c) {
    throw Error(ErrorCode::ShapeError, "attention inputs must have " + std::to_string(c) + " columns");
  }
  if (k.rows() != v.rows()) throw Error(ErrorCode::ShapeError, "keys and values differ in row count");
  if (k.rows() == 0) throw Error(ErrorCode::ShapeError, "attention needs at least one key");
}

}  // namespace detail

/// Per-head attention distributions, each (Nq x Nk).
inline std::vector<Matrix> attention_weights(const Matrix& q, const Matrix& k, const AttentionParams& p) {
  detail::check_attention_inputs(q, k, k, p);
  const std::size_t dh = p.dim() / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix qp = matmul(q, p.wq);
  const Matrix kp = matmul(k, p.wk);
  std::vector<Matrix> out;
  out.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Matrix scores = matmul(column_block(qp, h * dh, dh), transpose(column_block(kp, h * dh, dh)));
    for (double& s : scores.data()) s *= scale;
    out.push_back(softmax_rows(scores));
  }
  return out;
}

/// Multi-head scaled dot-product attention; returns (Nq x C).
inline Matrix mha(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionParams& p) {
  detail::check_attention_inputs(q, k, v, p);
  const std::size_t dh = p.dim() / p.heads;
  const auto weights = attention_weights(q, k, p);
  const Matrix vp = matmul(v, p.wv);
  Matrix concat(q.rows(), p.dim());
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Matrix head = matmul(weights[h], column_block(vp, h * dh, dh));
    for (std::size_t i = 0; i < head.rows(); ++i) {
      for (std::size_t j = 0; j < dh; ++j) concat(i, h * dh + j) = head(i, j);
    }
  }
  return matmul(concat, p.wo);
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

struct MlpParams {
  Matrix w1;  // C x H
  std::vector<double> b1;
  Matrix w2;  // H x out
  std::vector<double> b2;

  std::size_t in_dim() const noexcept { return w1.rows(); }
  std::size_t hidden_dim() const noexcept { return w1.cols(); }
  std::size_t out_dim() const noexcept { return w2.cols(); }

  void validate() const {
    if (b1.size() != w1.cols() || w2.rows() != w1.cols() || b2.size() != w2.cols()) {
      throw Error(ErrorCode::ShapeError, "inconsistent MLP shapes");
    }
    const auto finite = [](std::span<const double> xs) { return std::ranges::all_of(xs, [](double x) { return std::isfinite(x); }); };
    if (!w1.all_finite() || !w2.all_finite() || !finite(b1) || !finite(b2)) {
      throw Error(ErrorCode::NonFinite, "MLP parameter is not finite");
    }
  }

  static MlpParams zeros(std::size_t in, std::size_t hidden, std::size_t out) {
    return MlpParams{Matrix(in, hidden), std::vector<double>(hidden, 0.0), Matrix(hidden, out),
                     std::vector<double>(out, 0.0)};
  }
};

/// Hidden pre-activations x * w1 + b1.
inline Matrix mlp_hidden_pre(const Matrix& x, const MlpParams& p) {
  p.validate();
  if (x.cols() != p.in_dim()) {
    throw Error(ErrorCode::ShapeError, "MLP input has " + std::to_string(x.cols()) + " columns, expected " +
                                           std::to_string(p.in_dim()));
  }
  return add_row(matmul(x, p.w1), p.b1);
}

/// relu(x * w1 + b1) * w2 + b2.
inline Matrix mlp(const Matrix& x, const MlpParams& p) {
  Matrix hidden = mlp_hidden_pre(x, p);
  for (double& v : hidden.data()) v = std::max(v, 0.0);
  return add_row(matmul(hidden, p.w2), p.b2);
}

// ---------------------------------------------------------------------------
// Point embedding
// ---------------------------------------------------------------------------

/// Sinusoidal Fourier features. With B = C / 6 bands per axis, column
/// 2*(axis*B + j) holds sin(2^j * p[axis]) and the next column the cosine.
/// Columns past 6*B are zero.
inline Matrix embed_points(std::span<const Vec3> points, std::size_t dim) {
  if (dim < 6 || dim % 2 != 0) throw Error(ErrorCode::ShapeError, "embedding dim must be even and at least 6");
  const std::size_t bands = dim / 6;
  Matrix out(points.size(), dim);
  for (std::size_t r = 0; r < points.size(); ++r) {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      for (std::size_t j = 0; j < bands; ++j) {
        const double arg = std::ldexp(points[r][axis], static_cast<int>(j));
        const std::size_t col = 2 * (axis * bands + j);
        out(r, col) = std::sin(arg);
        out(r, col + 1) = std::cos(arg);
      }
    }
  }
  return out;
}

/// Initial object queries for the sampled points.
inline Matrix init_queries(const PointCloud& cloud, const SampleSet& samples, std::size_t dim) {
  std::vector<Vec3> pts;
  pts.reserve(samples.size());
  for (std::size_t idx : samples.indices()) pts.push_back(cloud[idx]);
  return embed_points(pts, dim);
}

}  // namespace agdet
