#pragma once

#include "precut/graph.hpp"
#include "precut/tensor.hpp"

namespace precut {

// The backbone forward is written once against this implicit interface and
// instantiated with either engine: EagerEngine for frozen inference (capture,
// benchmarking), GraphEngine when gradients must flow through the stack back
// to the token stream.

struct EagerEngine {
  using Handle = Tensor;
  Handle constant(Tensor t) { return t; }
  Handle matmul(const Handle& a, const Handle& b) { return precut::matmul(a, b); }
  Handle transpose(const Handle& a) { return transposed(a); }
  Handle add(const Handle& a, const Handle& b) { return precut::add(a, b); }
  Handle add_rowvec(const Handle& a, const Handle& v) { return precut::add_rowvec(a, v); }
  Handle scale(const Handle& a, double c) { return precut::scale(a, c); }
  Handle softmax_rows(const Handle& a) { return precut::softmax_rows(a); }
  Handle layer_norm_rows(const Handle& a) { return precut::layer_norm_rows(a); }
  Handle slice_rows(const Handle& a, int start, int len) { return precut::slice_rows(a, start, len); }
  Handle slice_cols(const Handle& a, int start, int len) { return precut::slice_cols(a, start, len); }
  Handle concat_rows(const std::vector<Handle>& parts) { return precut::concat_rows(parts); }
  Handle concat_cols(const std::vector<Handle>& parts) { return precut::concat_cols(parts); }
  Handle gather_rows(const Handle& a, const std::vector<int>& idx) { return precut::gather_rows(a, idx); }
  Tensor materialize(const Handle& h) { return h; }
};

struct GraphEngine {
  Graph* g = nullptr;
  using Handle = NodeId;
  Handle constant(Tensor t) { return g->constant(std::move(t)); }
  Handle matmul(Handle a, Handle b) { return g->matmul(a, b); }
  Handle transpose(Handle a) { return g->transpose(a); }
  Handle add(Handle a, Handle b) { return g->add(a, b); }
  Handle add_rowvec(Handle a, Handle v) { return g->add_rowvec(a, v); }
  Handle scale(Handle a, double c) { return g->scale(a, c); }
  Handle softmax_rows(Handle a) { return g->softmax_rows(a); }
  Handle layer_norm_rows(Handle a) { return g->layer_norm_rows(a); }
  Handle slice_rows(Handle a, int start, int len) { return g->slice_rows(a, start, len); }
  Handle slice_cols(Handle a, int start, int len) { return g->slice_cols(a, start, len); }
  Handle concat_rows(const std::vector<Handle>& parts) { return g->concat_rows(parts); }
  Handle concat_cols(const std::vector<Handle>& parts) { return g->concat_cols(parts); }
  Handle gather_rows(Handle a, const std::vector<int>& idx) { return g->gather_rows(a, idx); }
  Tensor materialize(Handle h) { return g->value(h); }
};

}  // namespace precut
