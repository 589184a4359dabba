#include "cari/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cari {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void require_same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ConfigError("tensor op: operands must live on the same tape");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch " +
                      shape_str(a.rows(), a.cols()) + " vs " +
                      shape_str(b.rows(), b.cols()));
  }
}

}  // namespace

std::size_t Tensor::rows() const { return tape_->node(id_).rows; }
std::size_t Tensor::cols() const { return tape_->node(id_).cols; }
const std::vector<double>& Tensor::value() const { return tape_->node(id_).value; }
std::vector<double>& Tensor::mutable_value() { return tape_->node(id_).value; }
const std::vector<double>& Tensor::grad() const { return tape_->node(id_).grad; }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw ConfigError("Tensor::item: tensor is " + shape_str(rows(), cols()) +
                      ", expected 1x1");
  }
  return value()[0];
}

Tensor Tape::leaf(std::size_t rows, std::size_t cols, std::vector<double> value) {
  if (value.size() != rows * cols) {
    throw ConfigError("Tape::leaf: got " + std::to_string(value.size()) +
                      " values for shape " + shape_str(rows, cols));
  }
  return emplace(rows, cols, std::move(value), -1, -1, {});
}

Tensor Tape::leaf(std::size_t rows, std::size_t cols, double fill) {
  return emplace(rows, cols, std::vector<double>(rows * cols, fill), -1, -1, {});
}

Tensor Tape::emplace(std::size_t rows, std::size_t cols, std::vector<double> value,
                     int parent0, int parent1, std::function<void(Tape&)> backward_fn) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  n.grad.assign(n.value.size(), 0.0);
  n.parent0 = parent0;
  n.parent1 = parent1;
  n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) {
    throw ConfigError("Tape::backward: loss lives on a different tape");
  }
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ConfigError("Tape::backward: loss must be 1x1, got " +
                      shape_str(loss.rows(), loss.cols()));
  }
  // Mark the ancestry of the loss so unrelated subgraphs on the same tape
  // (e.g. values computed only for logging) receive no gradient.
  std::vector<char> reachable(nodes_.size(), 0);
  std::vector<int> stack{loss.id()};
  reachable[static_cast<std::size_t>(loss.id())] = 1;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (const int p : {node(id).parent0, node(id).parent1}) {
      if (p >= 0 && !reachable[static_cast<std::size_t>(p)]) {
        reachable[static_cast<std::size_t>(p)] = 1;
        stack.push_back(p);
      }
    }
  }
  // Leaf gradients accumulate across calls; interior nodes are scratch for
  // this pass and start from zero so a second backward doubles, not triples.
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (reachable[id] && nodes_[id].backward_fn) {
      std::fill(nodes_[id].grad.begin(), nodes_[id].grad.end(), 0.0);
    }
  }
  node(loss.id()).grad[0] += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    if (reachable[static_cast<std::size_t>(id)] && node(id).backward_fn) {
      node(id).backward_fn(*this);
    }
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

// ---- elementwise and scalar ops -------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor make_unary(const Tensor& x, Fwd fwd, Bwd bwd_factory) {
  Tape& t = *x.tape();
  std::vector<double> out(x.size());
  const std::vector<double>& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  const int xid = x.id();
  Tensor y = t.emplace(x.rows(), x.cols(), std::move(out), xid, -1, {});
  t.node(y.id()).backward_fn = bwd_factory(xid, y.id());
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  Tape& t = *a.tape();
  std::vector<double> out(a.size());
  const auto &av = a.value(), &bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const int aid = a.id(), bid = b.id();
  Tensor y = t.emplace(a.rows(), a.cols(), std::move(out), aid, bid, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, bid, yid](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& ga = tp.node(aid).grad;
    auto& gb = tp.node(bid).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  std::vector<double> out(a.size());
  const auto &av = a.value(), &bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const int aid = a.id(), bid = b.id();
  Tensor y = t.emplace(a.rows(), a.cols(), std::move(out), aid, bid, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, bid, yid](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& ga = tp.node(aid).grad;
    auto& gb = tp.node(bid).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  std::vector<double> out(a.size());
  const auto &av = a.value(), &bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const int aid = a.id(), bid = b.id();
  Tensor y = t.emplace(a.rows(), a.cols(), std::move(out), aid, bid, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, bid, yid](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    const auto& av2 = tp.node(aid).value;
    const auto& bv2 = tp.node(bid).value;
    auto& ga = tp.node(aid).grad;
    auto& gb = tp.node(bid).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv2[i];
      gb[i] += g[i] * av2[i];
    }
  };
  return y;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tape& t = *a.tape();
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  const int aid = a.id();
  Tensor y = t.emplace(a.rows(), a.cols(), std::move(out), aid, -1, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, yid](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& ga = tp.node(aid).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return y;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tape& t = *a.tape();
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  const int aid = a.id();
  Tensor y = t.emplace(a.rows(), a.cols(), std::move(out), aid, -1, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, yid, c](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& ga = tp.node(aid).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  };
  return y;
}

Tensor elu(const Tensor& x) {
  return make_unary(
      x, [](double v) { return v >= 0.0 ? v : std::expm1(v); },
      [](int xid, int yid) {
        return [xid, yid](Tape& tp) {
          const auto& g = tp.node(yid).grad;
          const auto& xv = tp.node(xid).value;
          const auto& yv = tp.node(yid).value;
          auto& gx = tp.node(xid).grad;
          for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i] * (xv[i] >= 0.0 ? 1.0 : yv[i] + 1.0);
          }
        };
      });
}

Tensor sigmoid(const Tensor& x) {
  return make_unary(
      x,
      [](double v) {
        // Evaluate via the non-overflowing branch for either sign.
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](int xid, int yid) {
        return [xid, yid](Tape& tp) {
          const auto& g = tp.node(yid).grad;
          const auto& yv = tp.node(yid).value;
          auto& gx = tp.node(xid).grad;
          for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
          }
        };
      });
}

Tensor exp_elem(const Tensor& x) {
  return make_unary(
      x, [](double v) { return std::exp(v); },
      [](int xid, int yid) {
        return [xid, yid](Tape& tp) {
          const auto& g = tp.node(yid).grad;
          const auto& yv = tp.node(yid).value;
          auto& gx = tp.node(xid).grad;
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i];
        };
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lo must be <= hi");
  Tape& t = *x.tape();
  std::vector<double> out(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  const int xid = x.id();
  Tensor y = t.emplace(x.rows(), x.cols(), std::move(out), xid, -1, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [xid, yid, lo, hi](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    const auto& xv2 = tp.node(xid).value;
    auto& gx = tp.node(xid).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv2[i] >= lo && xv2[i] <= hi) gx[i] += g[i];
    }
  };
  return y;
}

// ---- structural ops --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ConfigError("matmul: inner dimensions disagree, " +
                      shape_str(a.rows(), a.cols()) + " * " +
                      shape_str(b.rows(), b.cols()));
  }
  Tape& t = *a.tape();
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  {
    const auto &av = a.value(), &bv = b.value();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        const double* brow = &bv[p * n];
        double* orow = &out[i * n];
        for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
      }
    }
  }
  const int aid = a.id(), bid = b.id();
  Tensor y = t.emplace(m, n, std::move(out), aid, bid, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, bid, yid, m, k, n](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    const auto& av = tp.node(aid).value;
    const auto& bv = tp.node(bid).value;
    auto& ga = tp.node(aid).grad;
    auto& gb = tp.node(bid).grad;
    // dA = g * B^T
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g[i * n + j];
        const double* brow = &bv[0] + j;  // column j of B, stride n
        double* garow = &ga[i * k];
        for (std::size_t p = 0; p < k; ++p) garow[p] += gij * brow[p * n];
      }
    }
    // dB = A^T * g
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t i = 0; i < m; ++i) {
        const double aip = av[i * k + p];
        const double* grow = &g[i * n];
        double* gbrow = &gb[p * n];
        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
      }
    }
  };
  return y;
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw ConfigError("add_rowvec: expected (n x d) + (1 x d), got " +
                      shape_str(a.rows(), a.cols()) + " + " +
                      shape_str(b.rows(), b.cols()));
  }
  Tape& t = *a.tape();
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n * d);
  const auto &av = a.value(), &bv = b.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = av[i * d + j] + bv[j];
  }
  const int aid = a.id(), bid = b.id();
  Tensor y = t.emplace(n, d, std::move(out), aid, bid, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, bid, yid, n, d](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& ga = tp.node(aid).grad;
    auto& gb = tp.node(bid).grad;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        ga[i * d + j] += g[i * d + j];
        gb[j] += g[i * d + j];
      }
    }
  };
  return y;
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.size()) {
    throw ConfigError("reshape: cannot view " + shape_str(a.rows(), a.cols()) +
                      " as " + shape_str(rows, cols));
  }
  Tape& t = *a.tape();
  const int aid = a.id();
  Tensor y = t.emplace(rows, cols, a.value(), aid, -1, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, yid](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& ga = tp.node(aid).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return y;
}

Tensor slice_cols(const Tensor& a, std::size_t col0, std::size_t ncols) {
  if (col0 + ncols > a.cols()) {
    throw ConfigError("slice_cols: range [" + std::to_string(col0) + ", " +
                      std::to_string(col0 + ncols) + ") exceeds " +
                      std::to_string(a.cols()) + " columns");
  }
  Tape& t = *a.tape();
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n * ncols);
  const auto& av = a.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ncols; ++j) out[i * ncols + j] = av[i * d + col0 + j];
  }
  const int aid = a.id();
  Tensor y = t.emplace(n, ncols, std::move(out), aid, -1, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, yid, n, d, col0, ncols](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& ga = tp.node(aid).grad;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < ncols; ++j) ga[i * d + col0 + j] += g[i * ncols + j];
    }
  };
  return y;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) {
    throw ConfigError("concat_cols: row counts disagree, " +
                      shape_str(a.rows(), a.cols()) + " vs " +
                      shape_str(b.rows(), b.cols()));
  }
  Tape& t = *a.tape();
  const std::size_t n = a.rows(), da = a.cols(), db = b.cols(), d = da + db;
  std::vector<double> out(n * d);
  const auto &av = a.value(), &bv = b.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < da; ++j) out[i * d + j] = av[i * da + j];
    for (std::size_t j = 0; j < db; ++j) out[i * d + da + j] = bv[i * db + j];
  }
  const int aid = a.id(), bid = b.id();
  Tensor y = t.emplace(n, d, std::move(out), aid, bid, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, bid, yid, n, da, db, d](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& ga = tp.node(aid).grad;
    auto& gb = tp.node(bid).grad;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < da; ++j) ga[i * da + j] += g[i * d + j];
      for (std::size_t j = 0; j < db; ++j) gb[i * db + j] += g[i * d + da + j];
    }
  };
  return y;
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& indices) {
  const std::size_t num = table.rows(), d = table.cols();
  for (const std::size_t ix : indices) {
    if (ix >= num) {
      throw ConfigError("gather_rows: index " + std::to_string(ix) +
                        " out of range for " + std::to_string(num) + " rows");
    }
  }
  Tape& t = *table.tape();
  const std::size_t n = indices.size();
  std::vector<double> out(n * d);
  const auto& tv = table.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = tv[indices[i] * d + j];
  }
  const int tid = table.id();
  Tensor y = t.emplace(n, d, std::move(out), tid, -1, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [tid, yid, indices, d](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& gt = tp.node(tid).grad;
    for (std::size_t i = 0; i < indices.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) gt[indices[i] * d + j] += g[i * d + j];
    }
  };
  return y;
}

// ---- reductions and classification loss ------------------------------------

Tensor sum_all(const Tensor& a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (const double v : a.value()) s += v;
  const int aid = a.id();
  Tensor y = t.emplace(1, 1, std::vector<double>{s}, aid, -1, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [aid, yid](Tape& tp) {
    const double g = tp.node(yid).grad[0];
    auto& ga = tp.node(aid).grad;
    for (double& v : ga) v += g;
  };
  return y;
}

Tensor mean_all(const Tensor& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor pick_log_softmax(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) {
    throw ConfigError("pick_log_softmax: " + std::to_string(labels.size()) +
                      " labels for " + std::to_string(n) + " rows");
  }
  for (const int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw ConfigError("pick_log_softmax: label " + std::to_string(l) +
                        " out of range for " + std::to_string(c) + " classes");
    }
  }
  Tape& t = *logits.tape();
  const auto& lv = logits.value();
  std::vector<double> out(n);
  std::vector<double> probs(n * c);  // cached for the backward pass
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &lv[i * c];
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    out[i] = row[static_cast<std::size_t>(labels[i])] - lse;
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
  }
  const int lid = logits.id();
  Tensor y = t.emplace(n, 1, std::move(out), lid, -1, {});
  const int yid = y.id();
  t.node(yid).backward_fn = [lid, yid, labels, probs, n, c](Tape& tp) {
    const auto& g = tp.node(yid).grad;
    auto& gl = tp.node(lid).grad;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) gl[i * c + j] -= g[i] * probs[i * c + j];
      gl[i * c + static_cast<std::size_t>(labels[i])] += g[i];
    }
  };
  return y;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  return mul_scalar(mean_all(pick_log_softmax(logits, labels)), -1.0);
}

// ---- finite difference check ------------------------------------------------

GradCheckResult gradient_check(
    const std::function<Tensor(Tape&, const Tensor&)>& build,
    std::size_t rows, std::size_t cols, const std::vector<double>& x0,
    double eps) {
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor x = tape.leaf(rows, cols, x0);
    Tensor loss = build(tape, x);
    tape.backward(loss);
    analytic = x.grad();
  }
  const auto eval = [&](const std::vector<double>& xv) {
    Tape tape;
    Tensor x = tape.leaf(rows, cols, xv);
    return build(tape, x).item();
  };
  GradCheckResult res;
  std::vector<double> xv = x0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double keep = xv[i];
    xv[i] = keep + eps;
    const double fp = eval(xv);
    xv[i] = keep - eps;
    const double fm = eval(xv);
    xv[i] = keep;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double abs_err = std::abs(analytic[i] - numeric);
    const double rel_err =
        abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-2});
    res.max_abs_err = std::max(res.max_abs_err, abs_err);
    res.max_rel_err = std::max(res.max_rel_err, rel_err);
  }
  return res;
}

}  // namespace cari
