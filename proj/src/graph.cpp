#include "precut/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace precut {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("graph: " + msg); }

}  // namespace

Tensor merge_rows_kernel(const Tensor& features, const Tensor& scores, const MergeSpec& spec) {
  const int d = features.cols();
  const int k = static_cast<int>(spec.keep.size());
  if (spec.merge.size() != spec.dst.size()) fail("merge spec: merge/dst length mismatch");
  // kept rows seeded as-is, then weighted residual rows folded in
  Tensor out({k, d});
  std::vector<double> weight(k, 1.0);
  for (int i = 0; i < k; ++i) {
    const int src = spec.keep[i];
    if (src < 0 || src >= features.rows()) fail("merge spec: keep index out of range");
    for (int j = 0; j < d; ++j) out.at(i, j) = features.at(src, j);
  }
  for (size_t m = 0; m < spec.merge.size(); ++m) {
    const int src = spec.merge[m];
    const int into = spec.dst[m];
    if (src < 0 || src >= features.rows()) fail("merge spec: merge index out of range");
    if (into < 0 || into >= k) fail("merge spec: destination out of range");
    const double s = scores[src];
    weight[into] += s;
    for (int j = 0; j < d; ++j) out.at(into, j) += s * features.at(src, j);
  }
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) /= weight[i];
  out.ensure_finite("merge_rows");
  return out;
}

Graph::Node& Graph::node(NodeId id) {
  if (!id.valid() || id.idx >= static_cast<int>(nodes_.size())) fail("invalid node id");
  return nodes_[id.idx];
}

const Graph::Node& Graph::node(NodeId id) const {
  if (!id.valid() || id.idx >= static_cast<int>(nodes_.size())) fail("invalid node id");
  return nodes_[id.idx];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

bool Graph::requires_grad(NodeId id) const { return node(id).requires_grad; }

Tensor Graph::grad(NodeId id) const {
  const Node& n = node(id);
  if (!n.has_grad) return Tensor::zeros(n.value.shape());
  return n.grad;
}

Tensor& Graph::grad_buf(NodeId id) {
  Node& n = node(id);
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::accumulate(NodeId id, const Tensor& contribution) {
  Node& n = node(id);
  if (!n.requires_grad) return;
  if (!contribution.same_shape(n.value)) fail("gradient shape mismatch");
  Tensor& g = grad_buf(id);
  for (int64_t i = 0; i < g.numel(); ++i) g[i] += contribution[i];
}

NodeId Graph::emplace(Tensor value, const std::vector<NodeId>& parents, std::function<void(Graph&, int)> bwd) {
  Node n;
  n.value = std::move(value);
  for (NodeId p : parents) {
    if (node(p).requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(bwd);
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<int>(nodes_.size()) - 1};
}

NodeId Graph::parameter(const Tensor& t, std::string name) {
  if (name.empty()) fail("parameter needs a name");
  Node n;
  n.value = t;
  n.requires_grad = true;
  n.param_name = std::move(name);
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<int>(nodes_.size()) - 1};
}

NodeId Graph::constant(Tensor t) {
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(NodeId loss) {
  if (value(loss).numel() != 1) fail("backward target must be a single element, got " + value(loss).shape_str());
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_buf(loss)[0] = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, i);
  }
}

std::map<std::string, Tensor> Graph::parameter_grads() const {
  std::map<std::string, Tensor> out;
  for (const Node& n : nodes_) {
    if (n.param_name.empty()) continue;
    if (out.count(n.param_name)) fail("duplicate parameter name " + n.param_name);
    out[n.param_name] = n.has_grad ? n.grad : Tensor::zeros(n.value.shape());
  }
  return out;
}

std::map<std::string, NodeId> register_params(Graph& g, const std::map<std::string, Tensor>& params) {
  std::map<std::string, NodeId> out;
  for (const auto& [name, t] : params) out[name] = g.parameter(t, name);
  return out;
}

// ---- ops -------------------------------------------------------------

NodeId Graph::matmul(NodeId a, NodeId b) {
  Tensor v = precut::matmul(value(a), value(b));
  return emplace(std::move(v), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    if (g.node(a).requires_grad) g.accumulate(a, precut::matmul(go, transposed(g.value(b))));
    if (g.node(b).requires_grad) g.accumulate(b, precut::matmul(transposed(g.value(a)), go));
  });
}

NodeId Graph::transpose(NodeId a) {
  return emplace(transposed(value(a)), {a},
                 [a](Graph& g, int self) { g.accumulate(a, transposed(g.nodes_[self].grad)); });
}

NodeId Graph::add(NodeId a, NodeId b) {
  return emplace(precut::add(value(a), value(b)), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    g.accumulate(a, go);
    g.accumulate(b, go);
  });
}

NodeId Graph::sub(NodeId a, NodeId b) {
  return emplace(precut::sub(value(a), value(b)), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    g.accumulate(a, go);
    g.accumulate(b, precut::scale(go, -1.0));
  });
}

NodeId Graph::mul(NodeId a, NodeId b) {
  return emplace(precut::mul(value(a), value(b)), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    if (g.node(a).requires_grad) g.accumulate(a, precut::mul(go, g.value(b)));
    if (g.node(b).requires_grad) g.accumulate(b, precut::mul(go, g.value(a)));
  });
}

NodeId Graph::scale(NodeId a, double c) {
  return emplace(precut::scale(value(a), c), {a},
                 [a, c](Graph& g, int self) { g.accumulate(a, precut::scale(g.nodes_[self].grad, c)); });
}

NodeId Graph::add_const(NodeId a, double c) {
  return emplace(precut::add_const(value(a), c), {a},
                 [a](Graph& g, int self) { g.accumulate(a, g.nodes_[self].grad); });
}

NodeId Graph::add_rowvec(NodeId a, NodeId v) {
  return emplace(precut::add_rowvec(value(a), value(v)), {a, v}, [a, v](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    g.accumulate(a, go);
    if (g.node(v).requires_grad) {
      Tensor dv = Tensor::zeros(g.value(v).shape());
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) dv[j] += go.at(i, j);
      g.accumulate(v, dv);
    }
  });
}

NodeId Graph::mul_rowvec(NodeId a, NodeId v) {
  return emplace(precut::mul_rowvec(value(a), value(v)), {a, v}, [a, v](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& av = g.value(a);
    const Tensor& vv = g.value(v);
    if (g.node(a).requires_grad) {
      Tensor da = go;
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) da.at(i, j) *= vv[j];
      g.accumulate(a, da);
    }
    if (g.node(v).requires_grad) {
      Tensor dv = Tensor::zeros(vv.shape());
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) dv[j] += go.at(i, j) * av.at(i, j);
      g.accumulate(v, dv);
    }
  });
}

NodeId Graph::softmax_rows(NodeId a) {
  Tensor y = precut::softmax_rows(value(a));
  return emplace(std::move(y), {a}, [a](Graph& g, int self) {
    const Tensor& y = g.nodes_[self].value;
    const Tensor& go = g.nodes_[self].grad;
    Tensor dx = Tensor::zeros(y.shape());
    for (int i = 0; i < y.rows(); ++i) {
      double inner = 0.0;
      for (int j = 0; j < y.cols(); ++j) inner += go.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols(); ++j) dx.at(i, j) = y.at(i, j) * (go.at(i, j) - inner);
    }
    g.accumulate(a, dx);
  });
}

NodeId Graph::sigmoid(NodeId a) {
  Tensor y = precut::sigmoid(value(a));
  return emplace(std::move(y), {a}, [a](Graph& g, int self) {
    const Tensor& y = g.nodes_[self].value;
    const Tensor& go = g.nodes_[self].grad;
    Tensor dx = y;
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] = go[i] * y[i] * (1.0 - y[i]);
    g.accumulate(a, dx);
  });
}

NodeId Graph::gelu(NodeId a) {
  Tensor y = precut::gelu_tanh(value(a));
  return emplace(std::move(y), {a}, [a](Graph& g, int self) {
    constexpr double kAlpha = 0.7978845608028653558798921198687;
    const Tensor& x = g.value(a);
    const Tensor& go = g.nodes_[self].grad;
    Tensor dx = x;
    for (int64_t i = 0; i < dx.numel(); ++i) {
      double xi = x[i];
      double u = kAlpha * (xi + 0.044715 * xi * xi * xi);
      double t = std::tanh(u);
      double du = kAlpha * (1.0 + 3.0 * 0.044715 * xi * xi);
      dx[i] = go[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du);
    }
    g.accumulate(a, dx);
  });
}

NodeId Graph::exp(NodeId a) {
  Tensor y = exp_elem(value(a));
  return emplace(std::move(y), {a}, [a](Graph& g, int self) {
    g.accumulate(a, precut::mul(g.nodes_[self].grad, g.nodes_[self].value));
  });
}

NodeId Graph::log(NodeId a) {
  Tensor y = log_elem(value(a));
  return emplace(std::move(y), {a}, [a](Graph& g, int self) {
    const Tensor& x = g.value(a);
    Tensor dx = g.nodes_[self].grad;
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] /= x[i];
    g.accumulate(a, dx);
  });
}

NodeId Graph::abs(NodeId a) {
  Tensor y = abs_elem(value(a));
  return emplace(std::move(y), {a}, [a](Graph& g, int self) {
    const Tensor& x = g.value(a);
    Tensor dx = g.nodes_[self].grad;
    for (int64_t i = 0; i < dx.numel(); ++i) {
      double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
      dx[i] *= s;
    }
    g.accumulate(a, dx);
  });
}

NodeId Graph::clamp(NodeId a, double lo, double hi) {
  Tensor y = clamp_elem(value(a), lo, hi);
  return emplace(std::move(y), {a}, [a, lo, hi](Graph& g, int self) {
    const Tensor& x = g.value(a);
    Tensor dx = g.nodes_[self].grad;
    for (int64_t i = 0; i < dx.numel(); ++i) {
      if (!(x[i] > lo && x[i] < hi)) dx[i] = 0.0;
    }
    g.accumulate(a, dx);
  });
}

NodeId Graph::layer_norm_rows(NodeId a, double eps) {
  const Tensor& x = value(a);
  Tensor y = precut::layer_norm_rows(x, eps);
  // per-row 1/sqrt(var+eps), saved for the backward pass
  const int m = x.rows(), n = x.cols();
  std::vector<double> inv(m);
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += x.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = x.at(i, j) - mean;
      var += d * d;
    }
    inv[i] = 1.0 / std::sqrt(var / n + eps);
  }
  return emplace(std::move(y), {a}, [a, inv](Graph& g, int self) {
    const Tensor& y = g.nodes_[self].value;
    const Tensor& go = g.nodes_[self].grad;
    const int m = y.rows(), n = y.cols();
    Tensor dx = Tensor::zeros(y.shape());
    for (int i = 0; i < m; ++i) {
      double gm = 0.0, gym = 0.0;
      for (int j = 0; j < n; ++j) {
        gm += go.at(i, j);
        gym += go.at(i, j) * y.at(i, j);
      }
      gm /= n;
      gym /= n;
      for (int j = 0; j < n; ++j) dx.at(i, j) = inv[i] * (go.at(i, j) - gm - y.at(i, j) * gym);
    }
    g.accumulate(a, dx);
  });
}

NodeId Graph::sum_all(NodeId a) {
  return emplace(precut::sum_all(value(a)), {a}, [a](Graph& g, int self) {
    g.accumulate(a, Tensor::full(g.value(a).shape(), g.nodes_[self].grad[0]));
  });
}

NodeId Graph::mean_all(NodeId a) {
  return emplace(precut::mean_all(value(a)), {a}, [a](Graph& g, int self) {
    double c = g.nodes_[self].grad[0] / static_cast<double>(g.value(a).numel());
    g.accumulate(a, Tensor::full(g.value(a).shape(), c));
  });
}

NodeId Graph::slice_rows(NodeId a, int start, int len) {
  return emplace(precut::slice_rows(value(a), start, len), {a}, [a, start](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    Tensor da = Tensor::zeros(g.value(a).shape());
    for (int i = 0; i < go.rows(); ++i)
      for (int j = 0; j < go.cols(); ++j) da.at(start + i, j) = go.at(i, j);
    g.accumulate(a, da);
  });
}

NodeId Graph::slice_cols(NodeId a, int start, int len) {
  return emplace(precut::slice_cols(value(a), start, len), {a}, [a, start](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    Tensor da = Tensor::zeros(g.value(a).shape());
    for (int i = 0; i < go.rows(); ++i)
      for (int j = 0; j < go.cols(); ++j) da.at(i, start + j) = go.at(i, j);
    g.accumulate(a, da);
  });
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
  std::vector<Tensor> vals;
  vals.reserve(parts.size());
  for (NodeId p : parts) vals.push_back(value(p));
  Tensor v = precut::concat_rows(vals);
  std::vector<NodeId> ps = parts;
  return emplace(std::move(v), ps, [ps](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    int r = 0;
    for (NodeId p : ps) {
      int pr = g.value(p).rows();
      if (g.node(p).requires_grad) g.accumulate(p, precut::slice_rows(go, r, pr));
      r += pr;
    }
  });
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  std::vector<Tensor> vals;
  vals.reserve(parts.size());
  for (NodeId p : parts) vals.push_back(value(p));
  Tensor v = precut::concat_cols(vals);
  std::vector<NodeId> ps = parts;
  return emplace(std::move(v), ps, [ps](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    int c = 0;
    for (NodeId p : ps) {
      int pc = g.value(p).cols();
      if (g.node(p).requires_grad) g.accumulate(p, precut::slice_cols(go, c, pc));
      c += pc;
    }
  });
}

NodeId Graph::gather_rows(NodeId a, std::vector<int> idx) {
  Tensor v = precut::gather_rows(value(a), idx);
  return emplace(std::move(v), {a}, [a, idx = std::move(idx)](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    Tensor da = Tensor::zeros(g.value(a).shape());
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < go.cols(); ++j) da.at(idx[i], j) += go.at(static_cast<int>(i), j);
    g.accumulate(a, da);
  });
}

NodeId Graph::depthwise3x3(NodeId x, NodeId k, int h, int w) {
  Tensor v = precut::depthwise3x3(value(x), value(k), h, w);
  return emplace(std::move(v), {x, k}, [x, k, h, w](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& xv = g.value(x);
    const Tensor& kv = g.value(k);
    const int c = xv.cols();
    Tensor dx = Tensor::zeros(xv.shape());
    Tensor dk = Tensor::zeros(kv.shape());
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        for (int dy = -1; dy <= 1; ++dy) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          for (int dxo = -1; dxo <= 1; ++dxo) {
            const int sx = xx + dxo;
            if (sx < 0 || sx >= w) continue;
            const int tap = (dy + 1) * 3 + (dxo + 1);
            const int po = y * w + xx;
            const int pi = sy * w + sx;
            for (int ch = 0; ch < c; ++ch) {
              dx.at(pi, ch) += go.at(po, ch) * kv.at(ch, tap);
              dk.at(ch, tap) += go.at(po, ch) * xv.at(pi, ch);
            }
          }
        }
      }
    }
    if (g.node(x).requires_grad) g.accumulate(x, dx);
    if (g.node(k).requires_grad) g.accumulate(k, dk);
  });
}

NodeId Graph::grad_x(NodeId x, int h, int w) {
  Tensor v = precut::grad_x(value(x), h, w);
  return emplace(std::move(v), {x}, [x, h, w](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    Tensor dx = Tensor::zeros(g.value(x).shape());
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx + 1 < w; ++xx)
        for (int c = 0; c < go.cols(); ++c) {
          dx.at(y * w + xx + 1, c) += go.at(y * w + xx, c);
          dx.at(y * w + xx, c) -= go.at(y * w + xx, c);
        }
    g.accumulate(x, dx);
  });
}

NodeId Graph::grad_y(NodeId x, int h, int w) {
  Tensor v = precut::grad_y(value(x), h, w);
  return emplace(std::move(v), {x}, [x, h, w](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    Tensor dx = Tensor::zeros(g.value(x).shape());
    for (int y = 0; y + 1 < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int c = 0; c < go.cols(); ++c) {
          dx.at((y + 1) * w + xx, c) += go.at(y * w + xx, c);
          dx.at(y * w + xx, c) -= go.at(y * w + xx, c);
        }
    g.accumulate(x, dx);
  });
}

NodeId Graph::huber(NodeId a, double delta) {
  Tensor v = huber_elem(value(a), delta);
  return emplace(std::move(v), {a}, [a, delta](Graph& g, int self) {
    const Tensor& x = g.value(a);
    Tensor dx = g.nodes_[self].grad;
    for (int64_t i = 0; i < dx.numel(); ++i) {
      double xi = x[i];
      dx[i] *= std::fabs(xi) <= delta ? xi : (xi > 0.0 ? delta : -delta);
    }
    g.accumulate(a, dx);
  });
}

NodeId Graph::merge_rows(NodeId features, NodeId scores, MergeSpec spec) {
  Tensor v = merge_rows_kernel(value(features), value(scores), spec);
  return emplace(std::move(v), {features, scores}, [features, scores, spec = std::move(spec)](Graph& g, int self) {
    const Tensor& out = g.nodes_[self].value;
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& fv = g.value(features);
    const Tensor& sv = g.value(scores);
    const int k = static_cast<int>(spec.keep.size());
    const int d = fv.cols();
    std::vector<double> weight(k, 1.0);
    for (size_t m = 0; m < spec.merge.size(); ++m) weight[spec.dst[m]] += sv[spec.merge[m]];

    if (g.node(features).requires_grad) {
      Tensor df = Tensor::zeros(fv.shape());
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < d; ++j) df.at(spec.keep[i], j) += go.at(i, j) / weight[i];
      for (size_t m = 0; m < spec.merge.size(); ++m) {
        const int src = spec.merge[m];
        const int into = spec.dst[m];
        for (int j = 0; j < d; ++j) df.at(src, j) += sv[src] * go.at(into, j) / weight[into];
      }
      g.accumulate(features, df);
    }
    if (g.node(scores).requires_grad) {
      Tensor ds = Tensor::zeros(sv.shape());
      for (size_t m = 0; m < spec.merge.size(); ++m) {
        const int src = spec.merge[m];
        const int into = spec.dst[m];
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += go.at(into, j) * (fv.at(src, j) - out.at(into, j));
        ds[src] += acc / weight[into];
      }
      g.accumulate(scores, ds);
    }
  });
}

NodeId Graph::custom_unary(NodeId x, UnaryOp op) {
  Tensor v = op.forward(value(x));
  v.ensure_finite("custom_unary");
  return emplace(std::move(v), {x}, [x, op = std::move(op)](Graph& g, int self) {
    g.accumulate(x, op.backward(g.value(x), g.nodes_[self].value, g.nodes_[self].grad));
  });
}

NodeId Graph::batch_norm(NodeId x, NodeId gamma, NodeId beta, Tensor& running_mean, Tensor& running_var,
                         bool training, double momentum, double eps) {
  const Tensor& xv = value(x);
  const int n = xv.rows(), c = xv.cols();
  if (value(gamma).numel() != c || value(beta).numel() != c) fail("batch_norm: affine size mismatch");
  if (running_mean.numel() != c || running_var.numel() != c) fail("batch_norm: running stat size mismatch");

  Tensor xhat({n, c});
  std::vector<double> inv(c);
  if (training) {
    for (int j = 0; j < c; ++j) {
      double mean = 0.0;
      for (int i = 0; i < n; ++i) mean += xv.at(i, j);
      mean /= n;
      double var = 0.0;
      for (int i = 0; i < n; ++i) {
        double d = xv.at(i, j) - mean;
        var += d * d;
      }
      var /= n;
      inv[j] = 1.0 / std::sqrt(var + eps);
      for (int i = 0; i < n; ++i) xhat.at(i, j) = (xv.at(i, j) - mean) * inv[j];
      double unbiased = n > 1 ? var * n / (n - 1.0) : var;
      running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mean;
      running_var[j] = (1.0 - momentum) * running_var[j] + momentum * unbiased;
    }
  } else {
    for (int j = 0; j < c; ++j) {
      inv[j] = 1.0 / std::sqrt(running_var[j] + eps);
      for (int i = 0; i < n; ++i) xhat.at(i, j) = (xv.at(i, j) - running_mean[j]) * inv[j];
    }
  }
  Tensor y({n, c});
  const Tensor& gv = value(gamma);
  const Tensor& bv = value(beta);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) y.at(i, j) = gv[j] * xhat.at(i, j) + bv[j];
  y.ensure_finite("batch_norm");

  return emplace(std::move(y), {x, gamma, beta},
                 [x, gamma, beta, xhat = std::move(xhat), inv = std::move(inv), training](Graph& g, int self) {
                   const Tensor& go = g.nodes_[self].grad;
                   const int n = go.rows(), c = go.cols();
                   const Tensor& gv = g.value(gamma);
                   if (g.node(gamma).requires_grad) {
                     Tensor dg = Tensor::zeros(gv.shape());
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < c; ++j) dg[j] += go.at(i, j) * xhat.at(i, j);
                     g.accumulate(gamma, dg);
                   }
                   if (g.node(beta).requires_grad) {
                     Tensor db = Tensor::zeros(gv.shape());
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < c; ++j) db[j] += go.at(i, j);
                     g.accumulate(beta, db);
                   }
                   if (g.node(x).requires_grad) {
                     Tensor dx = Tensor::zeros(go.shape());
                     if (training) {
                       // batch statistics participate in the forward pass
                       for (int j = 0; j < c; ++j) {
                         double gm = 0.0, gxm = 0.0;
                         for (int i = 0; i < n; ++i) {
                           gm += go.at(i, j);
                           gxm += go.at(i, j) * xhat.at(i, j);
                         }
                         gm /= n;
                         gxm /= n;
                         for (int i = 0; i < n; ++i)
                           dx.at(i, j) = gv[j] * inv[j] * (go.at(i, j) - gm - xhat.at(i, j) * gxm);
                       }
                     } else {
                       for (int j = 0; j < c; ++j)
                         for (int i = 0; i < n; ++i) dx.at(i, j) = gv[j] * inv[j] * go.at(i, j);
                     }
                     g.accumulate(x, dx);
                   }
                 });
}

}  // namespace precut
