#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gns/core/tensor.hpp"

// Differentiable operators over Var. All operate on rank <= 2 tensors viewed
// as (rows x cols) matrices.

namespace gns {

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline ConstMatMap view(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MatMap view(std::vector<double>& buf, std::size_t rows, std::size_t cols) {
  return MatMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstMatMap view(const std::vector<double>& buf, std::size_t rows, std::size_t cols) {
  return ConstMatMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::matrix(m, n);
  detail::MatMap(out.data(), m, n).noalias() = detail::view(a.value()) * detail::view(b.value());
  return Var::from_op(std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto dout = detail::view(self.grad, m, n);
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    if (pa.requires_grad) detail::view(pa.grad_buffer(), m, k).noalias() += dout * detail::view(pb.value).transpose();
    if (pb.requires_grad) detail::view(pb.grad_buffer(), k, n).noalias() += detail::view(pa.value).transpose() * dout;
  });
}

/// x * W + b with b broadcast over rows.
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.rows() || bias.size() != weight.cols()) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + ", weight " + shape_string(weight.shape()) +
                     ", bias " + shape_string(bias.shape()));
  }
  const std::size_t m = x.rows(), k = x.cols(), n = weight.cols();
  Tensor out = Tensor::matrix(m, n);
  auto o = detail::MatMap(out.data(), m, n);
  o.noalias() = detail::view(x.value()) * detail::view(weight.value());
  o.rowwise() += detail::ConstMatMap(bias.value().data(), 1, n).row(0);
  return Var::from_op(std::move(out), {x, weight, bias}, [m, k, n](detail::Node& self) {
    auto dout = detail::view(self.grad, m, n);
    auto& px = detail::parent(self, 0);
    auto& pw = detail::parent(self, 1);
    auto& pb = detail::parent(self, 2);
    if (px.requires_grad) detail::view(px.grad_buffer(), m, k).noalias() += dout * detail::view(pw.value).transpose();
    if (pw.requires_grad) detail::view(pw.grad_buffer(), k, n).noalias() += detail::view(px.value).transpose() * dout;
    if (pb.requires_grad) {
      double* g = pb.grad_buffer().data();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c];
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& par = detail::parent(self, p);
      if (!par.requires_grad) continue;
      auto& g = par.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return Var::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Var::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

inline Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  return Var::from_op(std::move(out), {a}, [factor](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

/// Per-column affine map x[:, c] * mul[c] + offset[c] with constant coefficients.
inline Var column_affine(const Var& x, std::span<const double> mul_by, std::span<const double> offset) {
  const std::size_t m = x.rows(), n = x.cols();
  if (mul_by.size() != n || offset.size() != n) throw ShapeError("column_affine: coefficient width mismatch");
  Tensor out = x.value();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = out[r * n + c] * mul_by[c] + offset[c];
  std::vector<double> k(mul_by.begin(), mul_by.end());
  return Var::from_op(std::move(out), {x}, [m, n, k = std::move(k)](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[r * n + c] * k[c];
  });
}

inline Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return Var::from_op(std::move(out), {x}, [](detail::Node& self) {
    auto& px = detail::parent(self, 0);
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (px.value[i] > 0.0) g[i] += self.grad[i];
  });
}

/// Elementwise clamp to [lo, hi]; gradient passes only where the input is strictly inside.
inline Var clamp(const Var& x, double lo, double hi) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  return Var::from_op(std::move(out), {x}, [lo, hi](detail::Node& self) {
    auto& px = detail::parent(self, 0);
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (px.value[i] > lo && px.value[i] < hi) g[i] += self.grad[i];
  });
}

inline Var square(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v * v;
  return Var::from_op(std::move(out), {x}, [](detail::Node& self) {
    auto& px = detail::parent(self, 0);
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * px.value[i] * self.grad[i];
  });
}

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return Var::from_op(Tensor::scalar(s), {x}, [](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

inline Var mean(const Var& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

/// Euclidean norm of every row, as an (rows x 1) column. The gradient at a
/// zero row is taken to be zero.
inline Var row_norm(const Var& x) {
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::matrix(m, 1);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += x.value()[r * n + c] * x.value()[r * n + c];
    out[r] = std::sqrt(s);
  }
  return Var::from_op(std::move(out), {x}, [m, n](detail::Node& self) {
    auto& px = detail::parent(self, 0);
    auto& g = px.grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      const double norm = self.value[r];
      if (norm == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[r] * px.value[r * n + c] / norm;
    }
  });
}

/// Horizontal concatenation of blocks that share a row count.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out = Tensor::matrix(m, total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + off);
    off += widths[k];
  }
  return Var::from_op(std::move(out), parts, [m, total, widths](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& par = detail::parent(self, k);
      if (par.requires_grad) {
        auto& g = par.grad_buffer();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += self.grad[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

inline Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  const std::size_t m = x.rows(), n = x.cols();
  if (begin + count > n) throw ShapeError("slice_cols out of range");
  Tensor out = Tensor::matrix(m, count);
  for (std::size_t r = 0; r < m; ++r) std::copy_n(x.value().data() + r * n + begin, count, out.data() + r * count);
  return Var::from_op(std::move(out), {x}, [m, n, begin, count](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < count; ++c) g[r * n + begin + c] += self.grad[r * count + c];
  });
}

/// out[i, :] = x[index[i], :]
inline Var gather_rows(const Var& x, std::span<const std::uint32_t> index) {
  const std::size_t n = x.cols(), src_rows = x.rows();
  Tensor out = Tensor::matrix(index.size(), n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= src_rows) throw ContractError("gather_rows: index out of range");
    std::copy_n(x.value().data() + index[i] * n, n, out.data() + i * n);
  }
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return Var::from_op(std::move(out), {x}, [n, idx = std::move(idx)](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double* dst = g.data() + idx[i] * n;
      const double* src = self.grad.data() + i * n;
      for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
    }
  });
}

/// linear(concat_cols({e, h[senders], h[receivers]}), weight, bias) without
/// materializing the concatenation: node rows are projected once and then
/// gathered per edge. weight is [e.cols + 2 h.cols, out].
inline Var edge_node_linear(const Var& e, const Var& h, std::span<const std::uint32_t> senders,
                            std::span<const std::uint32_t> receivers, const Var& weight, const Var& bias) {
  const std::size_t m = e.rows(), le = e.cols(), n = h.rows(), lh = h.cols(), out_dim = weight.cols();
  if (senders.size() != m || receivers.size() != m || weight.rows() != le + 2 * lh || bias.size() != out_dim) {
    throw ShapeError("edge_node_linear: edges " + shape_string(e.shape()) + ", nodes " + shape_string(h.shape()) +
                     ", weight " + shape_string(weight.shape()));
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (senders[k] >= n || receivers[k] >= n) throw ContractError("edge_node_linear: index out of range");
  }
  const auto W = detail::view(weight.value());
  detail::RowMatrix hs = detail::view(h.value()) * W.middleRows(le, lh);
  detail::RowMatrix hr = detail::view(h.value()) * W.middleRows(le + lh, lh);
  Tensor out = Tensor::matrix(m, out_dim);
  auto o = detail::MatMap(out.data(), m, out_dim);
  o.noalias() = detail::view(e.value()) * W.topRows(le);
  const double* b = bias.value().data();
  for (std::size_t k = 0; k < m; ++k) {
    double* row = out.data() + k * out_dim;
    const double* a = hs.data() + senders[k] * out_dim;
    const double* c = hr.data() + receivers[k] * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) row[j] += a[j] + c[j] + b[j];
  }
  std::vector<std::uint32_t> snd(senders.begin(), senders.end()), rcv(receivers.begin(), receivers.end());
  return Var::from_op(std::move(out), {e, h, weight, bias},
                      [m, le, n, lh, out_dim, snd = std::move(snd), rcv = std::move(rcv)](detail::Node& self) {
    auto dout = detail::view(self.grad, m, out_dim);
    auto& pe = detail::parent(self, 0);
    auto& ph = detail::parent(self, 1);
    auto& pw = detail::parent(self, 2);
    auto& pb = detail::parent(self, 3);
    const auto W = detail::view(pw.value);
    if (pe.requires_grad) detail::view(pe.grad_buffer(), m, le).noalias() += dout * W.topRows(le).transpose();
    if (pw.requires_grad) {
      detail::view(pw.grad_buffer(), le + 2 * lh, out_dim).topRows(le).noalias() +=
          detail::view(pe.value).transpose() * dout;
    }
    if (ph.requires_grad || pw.requires_grad) {
      detail::RowMatrix ds = detail::RowMatrix::Zero(n, out_dim), dr = detail::RowMatrix::Zero(n, out_dim);
      for (std::size_t k = 0; k < m; ++k) {
        const double* g = self.grad.data() + k * out_dim;
        double* a = ds.data() + snd[k] * out_dim;
        double* c = dr.data() + rcv[k] * out_dim;
        for (std::size_t j = 0; j < out_dim; ++j) {
          a[j] += g[j];
          c[j] += g[j];
        }
      }
      if (ph.requires_grad) {
        auto dh = detail::view(ph.grad_buffer(), n, lh);
        dh.noalias() += ds * W.middleRows(le, lh).transpose();
        dh.noalias() += dr * W.middleRows(le + lh, lh).transpose();
      }
      if (pw.requires_grad) {
        auto dw = detail::view(pw.grad_buffer(), le + 2 * lh, out_dim);
        const auto hv = detail::view(ph.value);
        dw.middleRows(le, lh).noalias() += hv.transpose() * ds;
        dw.middleRows(le + lh, lh).noalias() += hv.transpose() * dr;
      }
    }
    if (pb.requires_grad) {
      double* g = pb.grad_buffer().data();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < out_dim; ++c) g[c] += self.grad[r * out_dim + c];
    }
  });
}

/// out[index[i], :] += x[i, :], summed in increasing i so the result is
/// independent of scheduling.
inline Var scatter_add_rows(const Var& x, std::span<const std::uint32_t> index, std::size_t out_rows) {
  if (index.size() != x.rows()) throw ShapeError("scatter_add_rows: index length != rows");
  const std::size_t n = x.cols();
  Tensor out = Tensor::matrix(out_rows, n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= out_rows) throw ContractError("scatter_add_rows: index out of range");
    double* dst = out.data() + index[i] * n;
    const double* src = x.value().data() + i * n;
    for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
  }
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return Var::from_op(std::move(out), {x}, [n, idx = std::move(idx)](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double* src = self.grad.data() + idx[i] * n;
      double* dst = g.data() + i * n;
      for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
    }
  });
}

/// Row-wise select: row r comes from `when_true` if mask[r] else from `when_false`.
inline Var select_rows(const std::vector<bool>& mask, const Var& when_true, const Var& when_false) {
  detail::require_same_shape(when_true, when_false, "select_rows");
  if (mask.size() != when_true.rows()) throw ShapeError("select_rows: mask length != rows");
  const std::size_t n = when_true.cols();
  Tensor out = when_false.value();
  for (std::size_t r = 0; r < mask.size(); ++r)
    if (mask[r]) std::copy_n(when_true.value().data() + r * n, n, out.data() + r * n);
  return Var::from_op(std::move(out), {when_true, when_false}, [mask, n](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& par = detail::parent(self, p);
      if (!par.requires_grad) continue;
      auto& g = par.grad_buffer();
      const bool take = (p == 0);
      for (std::size_t r = 0; r < mask.size(); ++r)
        if (mask[r] == take)
          for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[r * n + c];
    }
  });
}

/// Per-row layer normalization with population variance over the columns.
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  const std::size_t m = x.rows(), d = x.cols();
  if (d == 0) throw ShapeError("layer_norm: zero feature width");
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("layer_norm: gain/bias width " + std::to_string(gain.size()) + " != features " + std::to_string(d));
  }
  Tensor out = Tensor::matrix(m, d);
  std::vector<double> xhat(m * d), inv_std(m);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mu) * is;
      xhat[r * d + c] = h;
      out[r * d + c] = h * gain.value()[c] + bias.value()[c];
    }
  }
  return Var::from_op(std::move(out), {x, gain, bias},
                      [m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
                        auto& px = detail::parent(self, 0);
                        auto& pg = detail::parent(self, 1);
                        auto& pb = detail::parent(self, 2);
                        if (pg.requires_grad) {
                          auto& g = pg.grad_buffer();
                          for (std::size_t r = 0; r < m; ++r)
                            for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c] * xhat[r * d + c];
                        }
                        if (pb.requires_grad) {
                          auto& g = pb.grad_buffer();
                          for (std::size_t r = 0; r < m; ++r)
                            for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
                        }
                        if (px.requires_grad) {
                          auto& g = px.grad_buffer();
                          const auto& gain_v = pg.value;
                          const double inv_d = 1.0 / static_cast<double>(d);
                          for (std::size_t r = 0; r < m; ++r) {
                            double mean_dh = 0.0, mean_dh_h = 0.0;
                            for (std::size_t c = 0; c < d; ++c) {
                              const double dh = self.grad[r * d + c] * gain_v[c];
                              mean_dh += dh;
                              mean_dh_h += dh * xhat[r * d + c];
                            }
                            mean_dh *= inv_d;
                            mean_dh_h *= inv_d;
                            for (std::size_t c = 0; c < d; ++c) {
                              const double dh = self.grad[r * d + c] * gain_v[c];
                              g[r * d + c] += inv_std[r] * (dh - mean_dh - xhat[r * d + c] * mean_dh_h);
                            }
                          }
                        }
                      });
}

}  // namespace gns
