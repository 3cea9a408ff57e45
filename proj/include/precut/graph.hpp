#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "precut/tensor.hpp"

namespace precut {

struct NodeId {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Token-merge routing data for one frame: flat indices of kept and merged
// tokens, and for each merged token the position (into `keep`) it folds into.
struct MergeSpec {
  std::vector<int> keep;
  std::vector<int> merge;
  std::vector<int> dst;
};

Tensor merge_rows_kernel(const Tensor& features, const Tensor& scores, const MergeSpec& spec);

// User-definable elementwise op, mainly an extension seam (and the hook the
// gradient-check tests use to inject a corrupted backward rule).
struct UnaryOp {
  std::function<Tensor(const Tensor&)> forward;
  // (input, output, output_grad) -> input_grad
  std::function<Tensor(const Tensor&, const Tensor&, const Tensor&)> backward;
};

// Reverse-mode automatic differentiation over f64 tensors. Ops evaluate
// eagerly and append to a tape; backward() replays the tape once in reverse
// creation order (a topological order by construction). Non-finite values are
// rejected at the op that produced them.
class Graph {
 public:
  NodeId parameter(const Tensor& t, std::string name);
  NodeId constant(Tensor t);

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);
  NodeId add_rowvec(NodeId a, NodeId v);
  NodeId mul_rowvec(NodeId a, NodeId v);
  NodeId softmax_rows(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId gelu(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId abs(NodeId a);
  NodeId clamp(NodeId a, double lo, double hi);
  NodeId layer_norm_rows(NodeId a, double eps = 1e-5);
  NodeId sum_all(NodeId a);
  NodeId mean_all(NodeId a);
  NodeId slice_rows(NodeId a, int start, int len);
  NodeId slice_cols(NodeId a, int start, int len);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId gather_rows(NodeId a, std::vector<int> idx);
  NodeId depthwise3x3(NodeId x, NodeId k, int h, int w);
  NodeId grad_x(NodeId x, int h, int w);
  NodeId grad_y(NodeId x, int h, int w);
  NodeId huber(NodeId a, double delta);
  NodeId merge_rows(NodeId features, NodeId scores, MergeSpec spec);
  NodeId custom_unary(NodeId x, UnaryOp op);

  // Batch normalization over the rows of [n x C]. In training mode the batch
  // statistics normalize and the external running stats are updated in place
  // (momentum convention: running = (1-m)*running + m*batch, unbiased batch
  // variance in the running estimate). In eval mode the running stats
  // normalize and nothing is updated.
  NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, Tensor& running_mean, Tensor& running_var, bool training,
                    double momentum = 0.1, double eps = 1e-5);

  // matmul + row-broadcast bias
  NodeId linear(NodeId x, NodeId w, NodeId b) { return add_rowvec(matmul(x, w), b); }

  const Tensor& value(NodeId id) const;
  // Gradient of the last backward() target w.r.t. this node; a zero tensor of
  // the node's shape if nothing flowed here.
  Tensor grad(NodeId id) const;

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. `loss` must be
  // a single-element tensor. Resets all gradients first, so repeated calls
  // against different targets on one graph are independent.
  void backward(NodeId loss);

  // name -> gradient for every registered parameter (zeros where untouched).
  std::map<std::string, Tensor> parameter_grads() const;

  size_t size() const { return nodes_.size(); }
  bool requires_grad(NodeId id) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::string param_name;
    std::function<void(Graph&, int)> backward;
  };

  NodeId emplace(Tensor value, const std::vector<NodeId>& parents, std::function<void(Graph&, int)> bwd);
  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  void accumulate(NodeId id, const Tensor& contribution);
  Tensor& grad_buf(NodeId id);

  std::vector<Node> nodes_;
};

// Registers every tensor of `params` as a graph parameter, returning the node
// handles keyed by the same names.
std::map<std::string, NodeId> register_params(Graph& g, const std::map<std::string, Tensor>& params);

}  // namespace precut
