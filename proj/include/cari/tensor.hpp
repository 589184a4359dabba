#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "cari/errors.hpp"

namespace cari {

class Tape;

// Handle to a node on a Tape.  Cheap to copy; the tape owns all storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }

  const std::vector<double>& value() const;
  // Mutable view of the value buffer.  Only meaningful for leaves that have
  // no dependent nodes yet; downstream values are not recomputed.
  std::vector<double>& mutable_value();
  const std::vector<double>& grad() const;

  // Value of a 1x1 tensor.
  double item() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Record of one computation.  Nodes are appended in construction order, so
// index order is a valid topological order and the reverse sweep visits every
// node after all of its consumers.
class Tape {
 public:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;  // same length as value, starts at zero
    int parent0 = -1;
    int parent1 = -1;
    std::function<void(Tape&)> backward_fn;  // empty for leaves
  };

  Tensor leaf(std::size_t rows, std::size_t cols, std::vector<double> value);
  Tensor leaf(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor scalar(double v) { return leaf(1, 1, std::vector<double>{v}); }

  // Accumulates d(loss)/d(leaf) into every leaf gradient reachable from
  // `loss`, which must be 1x1 and live on this tape.  Leaf gradients add up
  // across repeated calls (interior node gradients are per-pass scratch);
  // use zero_grad() to reset everything between passes.
  void backward(const Tensor& loss);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  Tensor emplace(std::size_t rows, std::size_t cols, std::vector<double> value,
                 int parent0, int parent1, std::function<void(Tape&)> backward_fn);

 private:
  // Deque keeps references to existing nodes stable while new nodes are
  // appended, so Tensor::value()/grad() references survive op creation.
  std::deque<Node> nodes_;
};

// ---- elementwise and scalar ops -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor elu(const Tensor& x);      // x>=0: x, x<0: exp(x)-1; derivative 1 at 0
Tensor sigmoid(const Tensor& x);
Tensor exp_elem(const Tensor& x);
// Clamps values to [lo, hi]; gradient passes through on the closed interval.
Tensor clamp(const Tensor& x, double lo, double hi);

// ---- structural ops --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// (n x d) + (1 x d), the row vector broadcast over rows (bias add).
Tensor add_rowvec(const Tensor& a, const Tensor& b);
// Same data, new shape; rows*cols must be preserved.
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
Tensor slice_cols(const Tensor& a, std::size_t col0, std::size_t ncols);
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Output row r is `table` row indices[r]; gradients scatter-add back, so
// repeated indices accumulate (embedding lookup semantics).
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& indices);

// ---- reductions and classification loss ------------------------------------

Tensor sum_all(const Tensor& a);   // 1x1
Tensor mean_all(const Tensor& a);  // 1x1

// Row-wise log softmax evaluated at the label index: out[i] =
// logits[i][labels[i]] - logsumexp(logits[i]).  Stable under large logits.
Tensor pick_log_softmax(const Tensor& logits, const std::vector<int>& labels);
// Mean negative log likelihood of the labels under softmax(logits), 1x1.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// ---- finite difference check ------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

// Compares the tape gradient of build(tape, x) against central finite
// differences, coordinate by coordinate.  Relative error is
// |a - n| / max(|a|, |n|, 1e-2); the floor keeps finite-difference noise on
// near-zero coordinates from dominating.
GradCheckResult gradient_check(
    const std::function<Tensor(Tape&, const Tensor&)>& build,
    std::size_t rows, std::size_t cols, const std::vector<double>& x0,
    double eps = 1e-5);

}  // namespace cari
