#include "precut/gradcheck.hpp"

#include <cmath>

namespace precut {

namespace {

double eval_loss(const LossBuilder& build, const std::map<std::string, Tensor>& params) {
  Graph g;
  auto nodes = register_params(g, params);
  NodeId loss = build(g, nodes);
  return g.value(loss)[0];
}

}  // namespace

GradCheckReport check_gradients(const LossBuilder& build, const std::map<std::string, Tensor>& params, double step,
                                double tol) {
  GradCheckReport report;
  if (params.empty()) return report;

  Graph g;
  auto nodes = register_params(g, params);
  NodeId loss = build(g, nodes);
  g.backward(loss);
  auto analytic = g.parameter_grads();

  std::map<std::string, Tensor> probe = params;
  for (const auto& [name, t] : params) {
    GradCheckEntry entry;
    entry.param = name;
    const Tensor& a = analytic.at(name);
    Tensor& pt = probe.at(name);
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double orig = pt[i];
      pt[i] = orig + step;
      const double up = eval_loss(build, probe);
      pt[i] = orig - step;
      const double down = eval_loss(build, probe);
      pt[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = std::fabs(a[i] - numeric) / std::max({1.0, std::fabs(a[i]), std::fabs(numeric)});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    entry.pass = entry.max_rel_err <= tol;
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace precut
