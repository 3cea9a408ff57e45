#pragma once

#include <string>

#include "precut/checkpoint.hpp"
#include "precut/graph.hpp"

namespace precut {

enum class Schedule { Stage1Only, Stage2Only, Joint, TwoStage };

std::string schedule_name(Schedule s);
Schedule schedule_from_name(const std::string& name);

struct LossWeights {
  double distill = 1.0;    // weight on the score-matching term
  double restore = 1.0;    // weight on restored-token MSE
  double task = 0.1;       // weight on the camera/depth/point terms
  double sigma_reg = 0.1;  // log-variance regularizer inside the dense losses
  double huber_delta = 1.0;
};

// Frozen readouts on top of the backbone: the camera token row maps to the
// 8-dim camera vector, each restored patch row maps to depth, a world-space
// point, and two log-uncertainty channels (depth, point).
struct HeadParams {
  Tensor w_cam, b_cam;      // [D' x 8], [8]
  Tensor w_dense, b_dense;  // [D' x 6], [6]; cols: depth, point xyz, log sigma_d, log sigma_p

  static HeadParams init(int model_dim, uint64_t seed);
  static size_t count_for(int model_dim);
  void to_params(ParamMap& out, const std::string& prefix) const;

  // One-time least-squares fit of the readout weights against ground truth
  // computed on unpruned forward passes, so the frozen task losses measure
  // pruning damage instead of an arbitrary random projection. The
  // log-uncertainty columns are left at their random initialization.
  void calibrate_dense(const Tensor& patch_outputs, const Tensor& depth_and_point, double ridge);
  void calibrate_camera(const Tensor& camera_outputs, const Tensor& camera_targets, double ridge);
};

struct HeadNodes {
  NodeId w_cam, b_cam, w_dense, b_dense;
};
HeadNodes head_constants(Graph& g, const HeadParams& p);

struct DenseOutputs {
  NodeId depth;        // [P x 1]
  NodeId point;        // [P x 3]
  NodeId log_sigma_d;  // [P x 1]
  NodeId log_sigma_p;  // [P x 1]
};
DenseOutputs split_dense(Graph& g, NodeId dense);

// Sum of Huber(pred - target) over all entries.
NodeId camera_loss(Graph& g, NodeId pred, NodeId target, double delta);

// Uncertainty-weighted L1 on values and forward spatial differences:
//   sum |sigma * diff| + sum |sigma * dx diff| + sum |sigma * dy diff|
//   - beta * sum(log_sigma),   sigma = exp(log_sigma), broadcast over columns.
NodeId dense_map_loss(Graph& g, NodeId pred, NodeId target, NodeId log_sigma, int h, int w, double beta);

// Mean squared difference over all entries.
NodeId mse_loss(Graph& g, NodeId pred, NodeId target);

// Ridge-regularized least squares W = (X^T X + l*I)^-1 X^T Y via Gaussian
// elimination with partial pivoting. X [n x d], Y [n x k] -> W [d x k].
Tensor ridge_solve(const Tensor& x, const Tensor& y, double lambda);

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr) : lr_(lr) {}

  // Applies one update to every tensor in `params` using the gradient of the
  // same name. Missing gradients are an error; state is keyed by name.
  void step(const std::map<std::string, Tensor*>& params, const ParamMap& grads);

  double lr() const { return lr_; }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  ParamMap m_, v_;
};

}  // namespace precut
