#include "precut/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace precut {

std::string routing_mode_name(RoutingMode mode) {
  switch (mode) {
    case RoutingMode::ThreeWay: return "three-way";
    case RoutingMode::PurePrune: return "pure-prune";
    case RoutingMode::FullMerge: return "full-merge";
    case RoutingMode::UniformAlloc: return "uniform-alloc";
  }
  throw std::runtime_error("unknown routing mode");
}

RoutingMode routing_mode_from_name(const std::string& name) {
  if (name == "three-way") return RoutingMode::ThreeWay;
  if (name == "pure-prune") return RoutingMode::PurePrune;
  if (name == "full-merge") return RoutingMode::FullMerge;
  if (name == "uniform-alloc") return RoutingMode::UniformAlloc;
  throw std::runtime_error("unknown routing mode name: " + name);
}

std::vector<std::vector<int>> select_keep(const SaliencyMap& scores, double keep_ratio) {
  if (keep_ratio <= 0.0 || keep_ratio > 1.0) {
    throw std::runtime_error("keep_ratio must lie in (0, 1]");
  }
  const int frames = scores.frames();
  const int patches = scores.patches();
  const int k = static_cast<int>(guarded_ceil(static_cast<double>(patches) * keep_ratio));
  std::vector<std::vector<int>> keep_sets(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    std::vector<int> order(static_cast<size_t>(patches));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double sa = scores.at(f, a);
      const double sb = scores.at(f, b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    order.resize(static_cast<size_t>(k));
    std::sort(order.begin(), order.end());
    keep_sets[static_cast<size_t>(f)] = std::move(order);
  }
  return keep_sets;
}

std::vector<double> frame_importance(const SaliencyMap& scores, const std::vector<std::vector<int>>& keep_sets) {
  const int frames = scores.frames();
  const int patches = scores.patches();
  if (static_cast<int>(keep_sets.size()) != frames) {
    throw std::runtime_error("frame_importance: keep set count does not match score frames");
  }
  std::vector<double> phi(static_cast<size_t>(frames), 0.0);
  for (int f = 0; f < frames; ++f) {
    std::vector<char> kept(static_cast<size_t>(patches), 0);
    for (int idx : keep_sets[static_cast<size_t>(f)]) kept[static_cast<size_t>(idx)] = 1;
    double sum = 0.0;
    int count = 0;
    for (int p = 0; p < patches; ++p) {
      if (!kept[static_cast<size_t>(p)]) {
        sum += scores.at(f, p);
        ++count;
      }
    }
    phi[static_cast<size_t>(f)] = count > 0 ? sum / static_cast<double>(count) : 0.0;
  }
  return phi;
}

std::vector<int> allocate_merge_budget(const std::vector<double>& phi, const std::vector<int>& residual_sizes,
                                       int budget) {
  const size_t n = phi.size();
  if (residual_sizes.size() != n) {
    throw std::runtime_error("allocate_merge_budget: phi and residual size lists disagree");
  }
  long long capacity = 0;
  for (size_t f = 0; f < n; ++f) {
    if (phi[f] < 0.0) throw std::runtime_error("allocate_merge_budget: negative importance");
    if (residual_sizes[f] < 0) throw std::runtime_error("allocate_merge_budget: negative residual size");
    capacity += residual_sizes[f];
  }
  if (budget < 0 || budget > capacity) {
    throw std::runtime_error("allocate_merge_budget: budget outside [0, total residual]");
  }

  std::vector<int> alloc(n, 0);
  std::vector<char> capped(n, 0);
  std::vector<char> active(n, 1);
  int remaining = budget;

  // Cap-and-reapportion: any frame whose proportional share overflows its
  // residual is pinned there and the leftover is re-split among the rest.
  std::vector<double> shares(n, 0.0);
  while (remaining > 0) {
    double weight_sum = 0.0;
    int active_count = 0;
    for (size_t f = 0; f < n; ++f) {
      if (active[f]) {
        weight_sum += phi[f];
        ++active_count;
      }
    }
    if (active_count == 0) {
      throw std::runtime_error("allocate_merge_budget: ran out of capacity");  // unreachable given the budget guard
    }
    const bool uniform = weight_sum <= 0.0;
    bool any_capped = false;
    for (size_t f = 0; f < n; ++f) {
      if (!active[f]) continue;
      const double w = uniform ? 1.0 : phi[f];
      const double denom = uniform ? static_cast<double>(active_count) : weight_sum;
      shares[f] = static_cast<double>(remaining) * w / denom;
      if (shares[f] > static_cast<double>(residual_sizes[f])) {
        alloc[f] = residual_sizes[f];
        remaining -= residual_sizes[f];
        capped[f] = 1;
        active[f] = 0;
        any_capped = true;
      }
    }
    if (!any_capped) break;
  }

  if (remaining > 0) {
    // Integerize the surviving fractional shares by largest remainder.
    std::vector<size_t> live;
    int base_sum = 0;
    std::vector<double> frac(n, 0.0);
    for (size_t f = 0; f < n; ++f) {
      if (!active[f]) continue;
      const double base = guarded_floor(shares[f]);
      alloc[f] = static_cast<int>(base);
      frac[f] = shares[f] - base;
      base_sum += alloc[f];
      live.push_back(f);
    }
    int leftover = remaining - base_sum;
    // Rank by quantized remainder: shares that are equal as exact ratios can
    // round differently once divided through, and the tie must still fall to
    // the lower frame index.
    auto quantized = [&](size_t f) { return std::llround(frac[f] * 1073741824.0); };
    std::stable_sort(live.begin(), live.end(), [&](size_t a, size_t b) {
      const long long qa = quantized(a);
      const long long qb = quantized(b);
      if (qa != qb) return qa > qb;
      return a < b;
    });
    while (leftover > 0) {
      bool placed = false;
      for (size_t f : live) {
        if (leftover == 0) break;
        if (alloc[f] < residual_sizes[f]) {
          ++alloc[f];
          --leftover;
          placed = true;
        }
      }
      if (!placed) {
        throw std::runtime_error("allocate_merge_budget: could not place leftover units");  // unreachable
      }
    }
  }

  long long total = 0;
  for (int a : alloc) total += a;
  if (total != budget) {
    throw std::runtime_error("allocate_merge_budget: allocation does not conserve the budget");
  }
  return alloc;
}

std::vector<int> assign_merge_destinations(const Tensor& features, const std::vector<int>& keep,
                                           const std::vector<int>& merge) {
  const int dim = features.cols();
  const int rows = features.rows();
  if (keep.empty()) {
    throw std::runtime_error("assign_merge_destinations: no kept tokens to merge into");
  }
  auto norm_of = [&](int row) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) {
      const double v = features.at(row, c);
      s += v * v;
    }
    return std::sqrt(s);
  };
  std::vector<double> keep_norm(keep.size());
  for (size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= rows) throw std::runtime_error("assign_merge_destinations: keep index out of range");
    keep_norm[k] = norm_of(keep[k]);
  }
  std::vector<int> dst(merge.size(), 0);
  for (size_t m = 0; m < merge.size(); ++m) {
    if (merge[m] < 0 || merge[m] >= rows) throw std::runtime_error("assign_merge_destinations: merge index out of range");
    const double mn = norm_of(merge[m]);
    double best = -2.0;
    int best_slot = 0;
    for (size_t k = 0; k < keep.size(); ++k) {
      double sim = 0.0;
      if (mn > 0.0 && keep_norm[k] > 0.0) {
        double dotv = 0.0;
        for (int c = 0; c < dim; ++c) dotv += features.at(merge[m], c) * features.at(keep[k], c);
        sim = dotv / (mn * keep_norm[k]);
      }
      if (sim > best) {
        best = sim;
        best_slot = static_cast<int>(k);
      }
    }
    dst[m] = best_slot;
  }
  return dst;
}

RoutingPlan route(const std::vector<TokenGrid>& grids, const SaliencyMap& scores, double keep_ratio,
                  double merge_fraction, RoutingMode mode) {
  if (merge_fraction < 0.0 || merge_fraction > 1.0) {
    throw std::runtime_error("merge_fraction must lie in [0, 1]");
  }
  const int frames = scores.frames();
  const int patches = scores.patches();
  if (static_cast<int>(grids.size()) != frames) {
    throw std::runtime_error("route: grid count does not match score frames");
  }

  RoutingPlan plan;
  plan.mode = mode;
  plan.keep_ratio = keep_ratio;
  plan.merge_fraction = mode == RoutingMode::PurePrune ? 0.0 : merge_fraction;

  auto keep_sets = select_keep(scores, keep_ratio);
  auto phi = frame_importance(scores, keep_sets);

  // Residual tokens per frame, best score first (ties to the lower index), so
  // a prefix of length M_f is exactly the frame's merge set.
  std::vector<std::vector<int>> residual(static_cast<size_t>(frames));
  std::vector<int> residual_sizes(static_cast<size_t>(frames), 0);
  for (int f = 0; f < frames; ++f) {
    std::vector<char> kept(static_cast<size_t>(patches), 0);
    for (int idx : keep_sets[static_cast<size_t>(f)]) kept[static_cast<size_t>(idx)] = 1;
    auto& res = residual[static_cast<size_t>(f)];
    for (int p = 0; p < patches; ++p) {
      if (!kept[static_cast<size_t>(p)]) res.push_back(p);
    }
    std::stable_sort(res.begin(), res.end(), [&](int a, int b) {
      const double sa = scores.at(f, a);
      const double sb = scores.at(f, b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    residual_sizes[static_cast<size_t>(f)] = static_cast<int>(res.size());
  }

  std::vector<int> merge_counts(static_cast<size_t>(frames), 0);
  long long residual_total = 0;
  for (int s : residual_sizes) residual_total += s;

  switch (mode) {
    case RoutingMode::PurePrune:
      plan.total_merge_budget = 0;
      break;
    case RoutingMode::FullMerge:
      merge_counts = residual_sizes;
      plan.total_merge_budget = static_cast<int>(residual_total);
      break;
    case RoutingMode::UniformAlloc: {
      const int per_frame =
          static_cast<int>(guarded_ceil(merge_fraction * static_cast<double>(patches)));
      int total = 0;
      for (int f = 0; f < frames; ++f) {
        merge_counts[static_cast<size_t>(f)] = std::min(per_frame, residual_sizes[static_cast<size_t>(f)]);
        total += merge_counts[static_cast<size_t>(f)];
      }
      plan.total_merge_budget = total;
      break;
    }
    case RoutingMode::ThreeWay: {
      const long long wanted = static_cast<long long>(
          guarded_floor(merge_fraction * static_cast<double>(frames) * static_cast<double>(patches)));
      plan.total_merge_budget = static_cast<int>(std::min(wanted, residual_total));
      merge_counts = allocate_merge_budget(phi, residual_sizes, plan.total_merge_budget);
      break;
    }
  }

  plan.frames.resize(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    FrameRoute& fr = plan.frames[static_cast<size_t>(f)];
    fr.keep = keep_sets[static_cast<size_t>(f)];
    fr.importance = phi[static_cast<size_t>(f)];
    fr.merge_budget = merge_counts[static_cast<size_t>(f)];
    const auto& res = residual[static_cast<size_t>(f)];
    fr.merge.assign(res.begin(), res.begin() + fr.merge_budget);
    fr.prune.assign(res.begin() + fr.merge_budget, res.end());
    std::sort(fr.merge.begin(), fr.merge.end());
    std::sort(fr.prune.begin(), fr.prune.end());
    fr.merge_dst = assign_merge_destinations(grids[static_cast<size_t>(f)].patches, fr.keep, fr.merge);
  }
  plan.validate(patches);
  return plan;
}

void RoutingPlan::validate(int patches) const {
  for (size_t f = 0; f < frames.size(); ++f) {
    const FrameRoute& fr = frames[f];
    std::vector<int> seen(static_cast<size_t>(patches), 0);
    auto mark = [&](const std::vector<int>& ids) {
      for (int idx : ids) {
        if (idx < 0 || idx >= patches) throw std::runtime_error("routing plan: patch index out of range");
        ++seen[static_cast<size_t>(idx)];
      }
    };
    mark(fr.keep);
    mark(fr.merge);
    mark(fr.prune);
    for (int count : seen) {
      if (count != 1) throw std::runtime_error("routing plan: keep/merge/prune must partition the frame");
    }
    if (fr.merge_dst.size() != fr.merge.size()) {
      throw std::runtime_error("routing plan: merge destination list length mismatch");
    }
    for (int slot : fr.merge_dst) {
      if (slot < 0 || slot >= static_cast<int>(fr.keep.size())) {
        throw std::runtime_error("routing plan: merge destination slot out of range");
      }
    }
    if (fr.merge_budget != static_cast<int>(fr.merge.size())) {
      throw std::runtime_error("routing plan: merge budget disagrees with merge set size");
    }
    if (fr.keep.empty()) throw std::runtime_error("routing plan: every frame must keep at least one token");
  }
  long long merged = 0;
  for (const FrameRoute& fr : frames) merged += static_cast<long long>(fr.merge.size());
  if (merged != total_merge_budget) {
    throw std::runtime_error("routing plan: total merge budget disagrees with per-frame sets");
  }
}

std::string RoutingPlan::to_json() const {
  nlohmann::json j;
  j["mode"] = routing_mode_name(mode);
  j["keep_ratio"] = keep_ratio;
  j["merge_fraction"] = merge_fraction;
  j["total_merge_budget"] = total_merge_budget;
  j["frames"] = nlohmann::json::array();
  for (const FrameRoute& fr : frames) {
    nlohmann::json jf;
    jf["keep"] = fr.keep;
    jf["merge"] = fr.merge;
    jf["merge_dst"] = fr.merge_dst;
    jf["prune"] = fr.prune;
    jf["importance"] = fr.importance;
    jf["merge_budget"] = fr.merge_budget;
    j["frames"].push_back(std::move(jf));
  }
  return j.dump(2);
}

RoutingPlan RoutingPlan::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  RoutingPlan plan;
  plan.mode = routing_mode_from_name(j.at("mode").get<std::string>());
  plan.keep_ratio = j.at("keep_ratio").get<double>();
  plan.merge_fraction = j.at("merge_fraction").get<double>();
  plan.total_merge_budget = j.at("total_merge_budget").get<int>();
  for (const auto& jf : j.at("frames")) {
    FrameRoute fr;
    fr.keep = jf.at("keep").get<std::vector<int>>();
    fr.merge = jf.at("merge").get<std::vector<int>>();
    fr.merge_dst = jf.at("merge_dst").get<std::vector<int>>();
    fr.prune = jf.at("prune").get<std::vector<int>>();
    fr.importance = jf.at("importance").get<double>();
    fr.merge_budget = jf.at("merge_budget").get<int>();
    plan.frames.push_back(std::move(fr));
  }
  return plan;
}

MergeSpec merge_spec(const FrameRoute& fr) {
  MergeSpec spec;
  spec.keep = fr.keep;
  spec.merge = fr.merge;
  spec.dst = fr.merge_dst;
  return spec;
}

Tensor merge_frame(const Tensor& features, const Tensor& scores_col, const FrameRoute& fr) {
  return merge_rows_kernel(features, scores_col, merge_spec(fr));
}

}  // namespace precut
