#include "precut/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace precut {

using nlohmann::json;

void save_checkpoint(const std::string& path, const ParamMap& params, const std::map<std::string, std::string>& meta) {
  json root;
  root["meta"] = meta;
  json tensors = json::object();
  for (const auto& [name, t] : params) {
    json entry;
    entry["shape"] = t.shape();
    entry["data"] = t.vec();
    tensors[name] = std::move(entry);
  }
  root["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << root.dump();
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

ParamMap load_checkpoint(const std::string& path, std::map<std::string, std::string>* meta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  json root = json::parse(in);
  if (meta) *meta = root.at("meta").get<std::map<std::string, std::string>>();
  ParamMap params;
  for (const auto& [name, entry] : root.at("tensors").items()) {
    auto shape = entry.at("shape").get<std::vector<int>>();
    auto data = entry.at("data").get<std::vector<double>>();
    params.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  return params;
}

}  // namespace precut
