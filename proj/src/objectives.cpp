#include "precut/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "precut/rng.hpp"

namespace precut {

std::string schedule_name(Schedule s) {
  switch (s) {
    case Schedule::Stage1Only: return "stage1-only";
    case Schedule::Stage2Only: return "stage2-only";
    case Schedule::Joint: return "joint";
    case Schedule::TwoStage: return "two-stage";
  }
  throw std::runtime_error("unknown schedule");
}

Schedule schedule_from_name(const std::string& name) {
  if (name == "stage1-only") return Schedule::Stage1Only;
  if (name == "stage2-only") return Schedule::Stage2Only;
  if (name == "joint") return Schedule::Joint;
  if (name == "two-stage") return Schedule::TwoStage;
  throw std::runtime_error("unknown schedule name: " + name);
}

HeadParams HeadParams::init(int model_dim, uint64_t seed) {
  Rng rng(seed);
  HeadParams p;
  const double std_cam = 1.0 / std::sqrt(static_cast<double>(model_dim));
  p.w_cam = Tensor::zeros({model_dim, 8});
  for (int i = 0; i < p.w_cam.numel(); ++i) p.w_cam.data()[i] = rng.normal() * std_cam;
  p.b_cam = Tensor::zeros({8});
  p.w_dense = Tensor::zeros({model_dim, 6});
  for (int i = 0; i < p.w_dense.numel(); ++i) p.w_dense.data()[i] = rng.normal() * std_cam;
  // keep the log-uncertainty columns near zero so sigma starts close to 1
  for (int r = 0; r < model_dim; ++r) {
    p.w_dense.at(r, 4) *= 0.01;
    p.w_dense.at(r, 5) *= 0.01;
  }
  p.b_dense = Tensor::zeros({6});
  return p;
}

size_t HeadParams::count_for(int model_dim) {
  return static_cast<size_t>(model_dim) * 8 + 8 + static_cast<size_t>(model_dim) * 6 + 6;
}

void HeadParams::to_params(ParamMap& out, const std::string& prefix) const {
  out[prefix + ".w_cam"] = w_cam;
  out[prefix + ".b_cam"] = b_cam;
  out[prefix + ".w_dense"] = w_dense;
  out[prefix + ".b_dense"] = b_dense;
}

namespace {

// Appends a bias column of ones to X so the solve yields weights + bias.
Tensor with_bias_col(const Tensor& x) {
  Tensor out = Tensor::zeros({x.rows(), x.cols() + 1});
  for (int r = 0; r < x.rows(); ++r) {
    for (int c = 0; c < x.cols(); ++c) out.at(r, c) = x.at(r, c);
    out.at(r, x.cols()) = 1.0;
  }
  return out;
}

}  // namespace

Tensor ridge_solve(const Tensor& x, const Tensor& y, double lambda) {
  if (x.rows() != y.rows()) throw std::runtime_error("ridge_solve: row mismatch");
  const int d = x.cols();
  const int k = y.cols();
  Tensor xtx = matmul(transposed(x), x);
  for (int i = 0; i < d; ++i) xtx.at(i, i) += lambda;
  Tensor xty = matmul(transposed(x), y);

  // Gaussian elimination with partial pivoting on the augmented system.
  Tensor aug = Tensor::zeros({d, d + k});
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) aug.at(r, c) = xtx.at(r, c);
    for (int c = 0; c < k; ++c) aug.at(r, d + c) = xty.at(r, c);
  }
  for (int col = 0; col < d; ++col) {
    int pivot = col;
    double best = std::fabs(aug.at(col, col));
    for (int r = col + 1; r < d; ++r) {
      const double v = std::fabs(aug.at(r, col));
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best == 0.0) throw std::runtime_error("ridge_solve: singular system");
    if (pivot != col) {
      for (int c = 0; c < d + k; ++c) std::swap(aug.at(col, c), aug.at(pivot, c));
    }
    const double inv = 1.0 / aug.at(col, col);
    for (int c = col; c < d + k; ++c) aug.at(col, c) *= inv;
    for (int r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = aug.at(r, col);
      if (f == 0.0) continue;
      for (int c = col; c < d + k; ++c) aug.at(r, c) -= f * aug.at(col, c);
    }
  }
  Tensor w = Tensor::zeros({d, k});
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < k; ++c) w.at(r, c) = aug.at(r, d + c);
  }
  w.ensure_finite("ridge_solve");
  return w;
}

void HeadParams::calibrate_dense(const Tensor& patch_outputs, const Tensor& depth_and_point, double ridge) {
  if (depth_and_point.cols() != 4) throw std::runtime_error("calibrate_dense: expected depth + xyz targets");
  const int dim = patch_outputs.cols();
  Tensor w = ridge_solve(with_bias_col(patch_outputs), depth_and_point, ridge);  // [(D'+1) x 4]
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < 4; ++c) w_dense.at(r, c) = w.at(r, c);
  }
  for (int c = 0; c < 4; ++c) b_dense.data()[c] = w.at(dim, c);
}

void HeadParams::calibrate_camera(const Tensor& camera_outputs, const Tensor& camera_targets, double ridge) {
  if (camera_targets.cols() != 8) throw std::runtime_error("calibrate_camera: expected 8-dim camera targets");
  const int dim = camera_outputs.cols();
  Tensor w = ridge_solve(with_bias_col(camera_outputs), camera_targets, ridge);  // [(D'+1) x 8]
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < 8; ++c) w_cam.at(r, c) = w.at(r, c);
  }
  for (int c = 0; c < 8; ++c) b_cam.data()[c] = w.at(dim, c);
}

HeadNodes head_constants(Graph& g, const HeadParams& p) {
  HeadNodes n;
  n.w_cam = g.constant(p.w_cam);
  n.b_cam = g.constant(p.b_cam);
  n.w_dense = g.constant(p.w_dense);
  n.b_dense = g.constant(p.b_dense);
  return n;
}

DenseOutputs split_dense(Graph& g, NodeId dense) {
  DenseOutputs out;
  out.depth = g.slice_cols(dense, 0, 1);
  out.point = g.slice_cols(dense, 1, 3);
  out.log_sigma_d = g.slice_cols(dense, 4, 1);
  out.log_sigma_p = g.slice_cols(dense, 5, 1);
  return out;
}

NodeId camera_loss(Graph& g, NodeId pred, NodeId target, double delta) {
  return g.sum_all(g.huber(g.sub(pred, target), delta));
}

NodeId dense_map_loss(Graph& g, NodeId pred, NodeId target, NodeId log_sigma, int h, int w, double beta) {
  const int cols = g.value(pred).cols();
  NodeId sigma = g.exp(log_sigma);
  if (cols > 1) {
    std::vector<NodeId> copies(static_cast<size_t>(cols), sigma);
    sigma = g.concat_cols(copies);
  }
  NodeId diff = g.sub(pred, target);
  NodeId value_term = g.sum_all(g.abs(g.mul(sigma, diff)));
  NodeId gx_term = g.sum_all(g.abs(g.mul(sigma, g.grad_x(diff, h, w))));
  NodeId gy_term = g.sum_all(g.abs(g.mul(sigma, g.grad_y(diff, h, w))));
  NodeId reg = g.scale(g.sum_all(log_sigma), -beta);
  return g.add(g.add(value_term, gx_term), g.add(gy_term, reg));
}

NodeId mse_loss(Graph& g, NodeId pred, NodeId target) {
  NodeId diff = g.sub(pred, target);
  return g.mean_all(g.mul(diff, diff));
}

void AdamOptimizer::step(const std::map<std::string, Tensor*>& params, const ParamMap& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, tensor] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw std::runtime_error("optimizer: missing gradient for " + name);
    const Tensor& grad = git->second;
    if (grad.numel() != tensor->numel()) throw std::runtime_error("optimizer: gradient shape mismatch for " + name);
    auto [mit, fresh_m] = m_.try_emplace(name, Tensor::zeros(tensor->shape()));
    auto [vit, fresh_v] = v_.try_emplace(name, Tensor::zeros(tensor->shape()));
    (void)fresh_m;
    (void)fresh_v;
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (int i = 0; i < tensor->numel(); ++i) {
      const double gval = grad.data()[i];
      m.data()[i] = beta1_ * m.data()[i] + (1.0 - beta1_) * gval;
      v.data()[i] = beta2_ * v.data()[i] + (1.0 - beta2_) * gval * gval;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      tensor->data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    tensor->ensure_finite(("optimizer update for " + name).c_str());
  }
}

}  // namespace precut
