#include "plab/autodiff/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "plab/util/error.hpp"

namespace plab::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

MapC as_mat(const Tensor& t) { return MapC(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }
MapM as_mat(Tensor& t) { return MapM(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }

Tape& tape_of(Var a) {
  PLAB_REQUIRE(a.valid(), "invalid Var");
  return *a.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw ContractError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

void axpy(Tensor& dst, const Tensor& src, double alpha = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += alpha * s[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Var add(Var a, Var b) {
  auto& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  axpy(out, bv);
  return t.push(std::move(out), {a, b}, [a, b](const Tape&, const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(a)) axpy(acc.at(a), g);
    if (acc.wants(b)) axpy(acc.at(b), g);
  }, "add");
}

Var sub(Var a, Var b) {
  auto& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  axpy(out, bv, -1.0);
  return t.push(std::move(out), {a, b}, [a, b](const Tape&, const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(a)) axpy(acc.at(a), g);
    if (acc.wants(b)) axpy(acc.at(b), g, -1.0);
  }, "sub");
}

Var mul(Var a, Var b) {
  auto& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.push(std::move(out), {a, b}, [a, b](const Tape& tp, const Tensor& g, GradAccumulator& acc) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    if (acc.wants(a)) {
      auto& ga = acc.at(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (acc.wants(b)) {
      auto& gb = acc.at(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  }, "mul");
}

Var scale(Var a, double c) {
  auto& t = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.data()) v *= c;
  return t.push(std::move(out), {a}, [a, c](const Tape&, const Tensor& g, GradAccumulator& acc) {
    axpy(acc.at(a), g, c);
  }, "scale");
}

Var add_scalar(Var a, Var s) {
  auto& t = tape_of(a);
  const double sv = s.value().item();
  Tensor out = a.value();
  for (auto& v : out.data()) v += sv;
  return t.push(std::move(out), {a, s}, [a, s](const Tape&, const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(a)) axpy(acc.at(a), g);
    if (acc.wants(s)) {
      double total = 0.0;
      for (double v : g.data()) total += v;
      acc.at(s)[0] += total;
    }
  }, "add_scalar");
}

Var exp(Var a) {
  auto& t = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.data()) v = std::exp(v);
  Tensor saved = out;
  return t.push(std::move(out), {a}, [a, saved = std::move(saved)](const Tape&, const Tensor& g, GradAccumulator& acc) {
    auto& ga = acc.at(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * saved[i];
  }, "exp");
}

Var sigmoid(Var a) {
  auto& t = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.data()) {
    v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tensor saved = out;
  return t.push(std::move(out), {a}, [a, saved = std::move(saved)](const Tape&, const Tensor& g, GradAccumulator& acc) {
    auto& ga = acc.at(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * saved[i] * (1.0 - saved[i]);
  }, "sigmoid");
}

Var gelu(Var a) {
  auto& t = tape_of(a);
  Tensor out = a.value();
  for (auto& x : out.data()) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    x = 0.5 * x * (1.0 + std::tanh(u));
  }
  return t.push(std::move(out), {a}, [a](const Tape& tp, const Tensor& g, GradAccumulator& acc) {
    const Tensor& xv = tp.value(a);
    auto& ga = acc.at(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = xv[i];
      const double u = kGeluC * (x + 0.044715 * x * x * x);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
      ga[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
    }
  }, "gelu");
}

Var sum(Var a) {
  auto& t = tape_of(a);
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return t.push(Tensor::scalar(total), {a}, [a](const Tape&, const Tensor& g, GradAccumulator& acc) {
    const double gv = g[0];
    for (auto& v : acc.at(a).data()) v += gv;
  }, "sum");
}

Var dot(Var a, Var b) {
  auto& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  PLAB_REQUIRE(av.size() == bv.size(), "dot: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i] * bv[i];
  return t.push(Tensor::scalar(total), {a, b}, [a, b](const Tape& tp, const Tensor& g, GradAccumulator& acc) {
    const double gv = g[0];
    if (acc.wants(a)) axpy(acc.at(a), tp.value(b), gv);
    if (acc.wants(b)) axpy(acc.at(b), tp.value(a), gv);
  }, "dot");
}

Var element(Var a, std::size_t index) {
  auto& t = tape_of(a);
  PLAB_REQUIRE(index < a.value().size(), "element: index out of range");
  return t.push(Tensor::scalar(a.value()[index]), {a}, [a, index](const Tape&, const Tensor& g, GradAccumulator& acc) {
    acc.at(a)[index] += g[0];
  }, "element");
}

Var matmul(Var a, Var b) {
  auto& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ContractError("matmul: inner dims differ " + shape_str(av.shape()) + " @ " + shape_str(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  return t.push(std::move(out), {a, b}, [a, b](const Tape& tp, const Tensor& g, GradAccumulator& acc) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    if (acc.wants(a)) as_mat(acc.at(a)).noalias() += as_mat(g) * as_mat(bv).transpose();
    if (acc.wants(b)) as_mat(acc.at(b)).noalias() += as_mat(av).transpose() * as_mat(g);
  }, "matmul");
}

Var matmul_nt(Var a, Var b) {
  auto& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul_nt");
  require_rank2(bv, "matmul_nt");
  if (av.cols() != bv.cols()) {
    throw ContractError("matmul_nt: inner dims differ " + shape_str(av.shape()) + " @ " + shape_str(bv.shape()) + "^T");
  }
  Tensor out({av.rows(), bv.rows()});
  as_mat(out).noalias() = as_mat(av) * as_mat(bv).transpose();
  return t.push(std::move(out), {a, b}, [a, b](const Tape& tp, const Tensor& g, GradAccumulator& acc) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    if (acc.wants(a)) as_mat(acc.at(a)).noalias() += as_mat(g) * as_mat(bv);
    if (acc.wants(b)) as_mat(acc.at(b)).noalias() += as_mat(g).transpose() * as_mat(av);
  }, "matmul_nt");
}

Var add_bias(Var x, Var b) {
  auto& t = tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  require_rank2(xv, "add_bias");
  PLAB_REQUIRE(bv.size() == xv.cols(), "add_bias: bias length must equal column count");
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return t.push(std::move(out), {x, b}, [x, b](const Tape&, const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(x)) axpy(acc.at(x), g);
    if (acc.wants(b)) {
      auto& gb = acc.at(b);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
    }
  }, "add_bias");
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  auto& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank2(xv, "layer_norm");
  const std::size_t n = xv.cols();
  PLAB_REQUIRE(gamma.value().size() == n && beta.value().size() == n, "layer_norm: affine size mismatch");
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) o[c] = (in[c] - mu) * rstd * gv[c] + bv[c];
  }
  return t.push(std::move(out), {x, gamma, beta}, [x, gamma, beta, eps](const Tape& tp, const Tensor& g, GradAccumulator& acc) {
    const Tensor& xv = tp.value(x);
    const Tensor& gv = tp.value(gamma);
    const std::size_t n = xv.cols();
    std::vector<double> xhat(n), dxhat(n);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      auto in = xv.row(r);
      auto go = g.row(r);
      double mu = 0.0;
      for (double v : in) mu += v;
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (double v : in) var += (v - mu) * (v - mu);
      var /= static_cast<double>(n);
      const double rstd = 1.0 / std::sqrt(var + eps);
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        xhat[c] = (in[c] - mu) * rstd;
        dxhat[c] = go[c] * gv[c];
        mean_d += dxhat[c];
        mean_dx += dxhat[c] * xhat[c];
      }
      mean_d /= static_cast<double>(n);
      mean_dx /= static_cast<double>(n);
      if (acc.wants(x)) {
        auto gx = acc.at(x).row(r);
        for (std::size_t c = 0; c < n; ++c) gx[c] += rstd * (dxhat[c] - mean_d - xhat[c] * mean_dx);
      }
      if (acc.wants(gamma)) {
        auto& gg = acc.at(gamma);
        for (std::size_t c = 0; c < n; ++c) gg[c] += go[c] * xhat[c];
      }
      if (acc.wants(beta)) {
        auto& gb = acc.at(beta);
        for (std::size_t c = 0; c < n; ++c) gb[c] += go[c];
      }
    }
  }, "layer_norm");
}

Var embedding(Var table, std::span<const std::int32_t> ids) {
  auto& t = tape_of(table);
  const Tensor& tv = table.value();
  require_rank2(tv, "embedding");
  const std::size_t d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " out of range");
    }
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return t.push(std::move(out), {table}, [table, saved = std::move(saved)](const Tape&, const Tensor& g, GradAccumulator& acc) {
    auto& gt = acc.at(table);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      auto dst = gt.row(static_cast<std::size_t>(saved[i]));
      auto src = g.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }, "embedding");
}

Var slice_cols(Var x, std::size_t start, std::size_t len) {
  auto& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_cols");
  PLAB_REQUIRE(start + len <= xv.cols(), "slice_cols: range out of bounds");
  Tensor out({xv.rows(), len});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto src = xv.row(r).subspan(start, len);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return t.push(std::move(out), {x}, [x, start, len](const Tape&, const Tensor& g, GradAccumulator& acc) {
    auto& gx = acc.at(x);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto dst = gx.row(r).subspan(start, len);
      auto src = g.row(r);
      for (std::size_t c = 0; c < len; ++c) dst[c] += src[c];
    }
  }, "slice_cols");
}

Var concat_cols(std::span<const Var> parts) {
  PLAB_REQUIRE(!parts.empty(), "concat_cols: no inputs");
  auto& t = tape_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_cols");
    PLAB_REQUIRE(p.value().rows() == rows, "concat_cols: row count mismatch");
    offsets.push_back(cols);
    cols += p.value().cols();
  }
  Tensor out({rows, cols});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = pv.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offsets[k]));
    }
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [saved, offsets](const Tape&, const Tensor& g, GradAccumulator& acc) {
    for (std::size_t k = 0; k < saved.size(); ++k) {
      if (!acc.wants(saved[k])) continue;
      auto& gp = acc.at(saved[k]);
      const std::size_t w = gp.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto src = g.row(r).subspan(offsets[k], w);
        auto dst = gp.row(r);
        for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
      }
    }
  }, "concat_cols");
}

Var row(Var x, std::size_t r) {
  auto& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank2(xv, "row");
  PLAB_REQUIRE(r < xv.rows(), "row: index out of range");
  auto src = xv.row(r);
  Tensor out = Tensor::vector(std::vector<double>(src.begin(), src.end()));
  return t.push(std::move(out), {x}, [x, r](const Tape&, const Tensor& g, GradAccumulator& acc) {
    auto dst = acc.at(x).row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[c];
  }, "row");
}

Var causal_softmax(Var scores, std::span<const std::uint8_t> blocked) {
  auto& t = tape_of(scores);
  const Tensor& sv = scores.value();
  require_rank2(sv, "causal_softmax");
  const std::size_t n = sv.rows();
  PLAB_REQUIRE(sv.cols() == n, "causal_softmax: scores must be square");
  PLAB_REQUIRE(blocked.empty() || blocked.size() == n * n, "causal_softmax: mask size mismatch");
  Tensor out({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= i; ++j) {
      if (!blocked.empty() && blocked[i * n + j]) continue;
      mx = std::max(mx, sv.at(i, j));
    }
    if (!std::isfinite(mx)) continue;  // fully blocked row stays 0
    double z = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      if (!blocked.empty() && blocked[i * n + j]) continue;
      const double e = std::exp(sv.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j <= i; ++j) out.at(i, j) /= z;
  }
  Tensor saved = out;
  return t.push(std::move(out), {scores}, [scores, saved = std::move(saved)](const Tape&, const Tensor& g, GradAccumulator& acc) {
    auto& gs = acc.at(scores);
    const std::size_t n = saved.rows();
    // dx_ij = y_ij * (g_ij - sum_k y_ik g_ik)
    for (std::size_t i = 0; i < n; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j <= i; ++j) inner += saved.at(i, j) * g.at(i, j);
      for (std::size_t j = 0; j <= i; ++j) gs.at(i, j) += saved.at(i, j) * (g.at(i, j) - inner);
    }
  }, "causal_softmax");
}

Var zero_entries(Var a, std::span<const std::uint8_t> flags) {
  auto& t = tape_of(a);
  PLAB_REQUIRE(flags.size() == a.value().size(), "zero_entries: mask size mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (flags[i]) out[i] = 0.0;
  }
  std::vector<std::uint8_t> saved(flags.begin(), flags.end());
  return t.push(std::move(out), {a}, [a, saved = std::move(saved)](const Tape&, const Tensor& g, GradAccumulator& acc) {
    auto& ga = acc.at(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!saved[i]) ga[i] += g[i];
    }
  }, "zero_entries");
}

Var scale_entries(Var a, Var s, std::span<const std::uint8_t> edges) {
  auto& t = tape_of(a);
  PLAB_REQUIRE(edges.size() == a.value().size(), "scale_entries: mask size mismatch");
  const double factor = 1.0 + s.value().item();
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (edges[i]) out[i] = out[i] * factor;
  }
  std::vector<std::uint8_t> saved(edges.begin(), edges.end());
  return t.push(std::move(out), {a, s}, [a, s, factor, saved = std::move(saved)](const Tape& tp, const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(a)) {
      auto& ga = acc.at(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += saved[i] ? g[i] * factor : g[i];
    }
    if (acc.wants(s)) {
      const Tensor& av = tp.value(a);
      double total = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (saved[i]) total += g[i] * av[i];
      }
      acc.at(s)[0] += total;
    }
  }, "scale_entries");
}

Var perturb_entry(Var a, std::size_t index, double delta) {
  auto& t = tape_of(a);
  PLAB_REQUIRE(index < a.value().size(), "perturb_entry: index out of range");
  Tensor out = a.value();
  out[index] += delta;
  return t.push(std::move(out), {a}, [a](const Tape&, const Tensor& g, GradAccumulator& acc) {
    axpy(acc.at(a), g);
  }, "perturb_entry");
}

Var cross_entropy(Var logits, std::span<const std::int32_t> targets) {
  auto& t = tape_of(logits);
  const Tensor& lv = logits.value();
  require_rank2(lv, "cross_entropy");
  PLAB_REQUIRE(targets.size() == lv.rows(), "cross_entropy: one target per row required");
  const std::size_t V = lv.cols();
  double total = 0.0;
  std::size_t count = 0;
  Tensor probs(lv.shape(), 0.0);
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (targets[r] < 0) continue;
    PLAB_REQUIRE(static_cast<std::size_t>(targets[r]) < V, "cross_entropy: target out of range");
    auto in = lv.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    auto p = probs.row(r);
    for (std::size_t c = 0; c < V; ++c) {
      p[c] = std::exp(in[c] - mx);
      z += p[c];
    }
    for (auto& v : p) v /= z;
    total += std::log(z) + mx - in[static_cast<std::size_t>(targets[r])];
    ++count;
  }
  PLAB_REQUIRE(count > 0, "cross_entropy: no rows with a target");
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<std::int32_t> saved(targets.begin(), targets.end());
  return t.push(Tensor::scalar(total * inv), {logits},
                [logits, inv, probs = std::move(probs), saved = std::move(saved)](const Tape&, const Tensor& g, GradAccumulator& acc) {
                  auto& gl = acc.at(logits);
                  const double gv = g[0] * inv;
                  for (std::size_t r = 0; r < probs.rows(); ++r) {
                    if (saved[r] < 0) continue;
                    auto p = probs.row(r);
                    auto dst = gl.row(r);
                    for (std::size_t c = 0; c < p.size(); ++c) dst[c] += gv * p[c];
                    dst[static_cast<std::size_t>(saved[r])] -= gv;
                  }
                }, "cross_entropy");
}

Var bce_with_logits(Var logit, double label) {
  auto& t = tape_of(logit);
  const double x = logit.value().item();
  // softplus(x) - label * x, evaluated stably
  const double loss = std::max(x, 0.0) - label * x + std::log1p(std::exp(-std::abs(x)));
  return t.push(Tensor::scalar(loss), {logit}, [logit, label](const Tape& tp, const Tensor& g, GradAccumulator& acc) {
    const double x = tp.value(logit).item();
    const double p = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    acc.at(logit)[0] += g[0] * (p - label);
  }, "bce_with_logits");
}

}  // namespace plab::ad
