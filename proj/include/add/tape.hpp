#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "add/tensor.hpp"

namespace add {

/// Reverse-mode tape over the fixed kernel set. Nodes are immutable once
/// recorded; backward() accumulates vector-Jacobian products into every
/// node reachable from an input().
class Tape {
 public:
  using Id = int;

  Id input(Tensor v);     // leaf that receives gradient
  Id constant(Tensor v);  // leaf without gradient

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);  // elementwise
  Id add_bias(Id x, Id bias);
  Id scale(Id a, double s);
  Id relu(Id a);
  Id softmax_rows(Id a);
  Id transpose(Id a);
  Id slice_cols(Id a, std::size_t c0, std::size_t c1);
  Id concat_cols(const std::vector<Id>& parts);
  Id reshape(Id a, std::vector<std::size_t> shape);
  Id bilinear_resize(Id a, std::size_t out_h, std::size_t out_w);
  Id embedding_lookup(Id table, IndexMap idx);
  Id sum_squares(Id a);  // scalar, shape {1}
  Id mlp(Id x, const std::vector<std::pair<Id, Id>>& layers,
         const std::vector<Activation>& acts);

  const Tensor& value(Id id) const { return nodes_[id].value; }
  void backward(Id root, const Tensor& seed);
  void backward(Id root);  // scalar root, implicit seed {1}
  const Tensor& grad(Id id) const;

 private:
  enum class Op {
    Leaf,
    Matmul,
    Add,
    Sub,
    Mul,
    AddBias,
    Scale,
    Relu,
    Softmax,
    Transpose,
    SliceCols,
    ConcatCols,
    Reshape,
    Bilinear,
    Lookup,
    SumSquares,
  };
  struct Node {
    Op op = Op::Leaf;
    Tensor value;
    Tensor grad;  // empty until backward touches it
    bool needs_grad = false;
    std::vector<Id> parents;
    double aux = 0.0;
    std::vector<std::size_t> dims;
    IndexMap idx;
  };

  Id push(Node n);
  Tensor& ensure_grad(Id id);
  void accumulate(Id id, const Tensor& g);
  void backprop_node(Id id);

  std::vector<Node> nodes_;
};

/// Max relative error between analytic input gradients and central
/// differences of seed-weighted output, over all input coordinates.
/// Throws NumericError if any evaluation is non-finite.
double vjp_check(
    const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
    const std::vector<Tensor>& inputs, const Tensor& seed, double eps);

}  // namespace add
