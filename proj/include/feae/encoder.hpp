#pragma once

#include <cstdint>
#include <vector>

#include "feae/autograd.hpp"
#include "feae/graph.hpp"

namespace feae {

/// Single-layer edge encoder weights: node layer (d x hidden) and edge layer
/// (2*hidden x hidden). No biases.
template <class T>
struct EncoderParams {
  Param<T> W_agg;
  Param<T> W_edge;

  static EncoderParams init(std::size_t in_dim, std::size_t hidden, Rng& rng) {
    EncoderParams p;
    p.W_agg = Param<T>("W_agg", xavier_init<T>(in_dim, hidden, rng));
    p.W_edge = Param<T>("W_edge", xavier_init<T>(2 * hidden, hidden, rng));
    return p;
  }

  std::size_t in_dim() const { return W_agg.value.rows(); }
  std::size_t hidden() const { return W_agg.value.cols(); }

  void validate() const {
    if (W_edge.value.rows() != 2 * hidden() || W_edge.value.cols() != hidden())
      throw DimensionError("W_edge must be " + Matrix<T>::shape_string(2 * hidden(), hidden()) +
                           ", got " + W_edge.value.shape());
  }

  std::vector<Param<T>*> params() { return {&W_agg, &W_edge}; }

  template <class U>
  EncoderParams<U> cast() const {
    return {W_agg.template cast<U>(), W_edge.template cast<U>()};
  }
};

/// Rows [begin, end) of `a`.
template <class T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t end) {
  auto& t = *a.tape;
  const auto& av = a.value();
  if (begin > end || end > av.rows())
    throw DimensionError("row slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + av.shape());
  Matrix<T> out(end - begin, av.cols());
  std::copy(av.data().begin() + begin * av.cols(), av.data().begin() + end * av.cols(),
            out.data().begin());
  return t.record(std::move(out), t.requires_grad(a), [a, begin](Tape<T>& tp, const Matrix<T>& g) {
    auto& ga = tp.grad(a).data();
    const std::size_t off = begin * g.cols();
    for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g.data()[i];
  });
}

/// out[e] = src_part[edges[e].src] + dst_part[edges[e].dst].
template <class T>
Var<T> edge_endpoint_sum(const FlowGraph& g, Var<T> src_part, Var<T> dst_part) {
  auto& t = *src_part.tape;
  const auto& a = src_part.value();
  const auto& b = dst_part.value();
  if (!a.same_shape(b) || a.rows() != g.num_nodes)
    throw DimensionError("edge_endpoint_sum expects two " +
                         Matrix<T>::shape_string(g.num_nodes, a.cols()) + " inputs");
  Matrix<T> out(g.num_edges(), a.cols());
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    auto o = out.row(e);
    auto x = a.row(g.edges[e].src);
    auto y = b.row(g.edges[e].dst);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] = x[c] + y[c];
  }
  const bool rg = t.requires_grad(src_part) || t.requires_grad(dst_part);
  return t.record(std::move(out), rg, [&g, src_part, dst_part](Tape<T>& tp, const Matrix<T>& grad) {
    const bool ga_on = tp.requires_grad(src_part);
    const bool gb_on = tp.requires_grad(dst_part);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      auto gr = grad.row(e);
      if (ga_on) {
        auto ga = tp.grad(src_part).row(g.edges[e].src);
        for (std::size_t c = 0; c < gr.size(); ++c) ga[c] += gr[c];
      }
      if (gb_on) {
        auto gb = tp.grad(dst_part).row(g.edges[e].dst);
        for (std::size_t c = 0; c < gr.size(); ++c) gb[c] += gr[c];
      }
    }
  });
}

/// Edge embeddings H (|E| x hidden):
///   h_u  = ReLU(sum of incident edge features of u * W_agg)
///   H_uv = [h_u || h_v] * W_edge
/// The concatenated product is evaluated as h_u * W_edge[:hidden] +
/// h_v * W_edge[hidden:], so the edge-layer matmul runs per node instead of
/// per edge. `g` must outlive the tape's backward pass.
template <class T>
Var<T> encode(const FlowGraph& g, Var<T> X, EncoderParams<T>& p,
              Neighborhood mode = Neighborhood::Both) {
  auto& t = *X.tape;
  if (X.cols() != p.in_dim())
    throw DimensionError("encoder expects " + std::to_string(p.in_dim()) + " edge features, got " +
                         std::to_string(X.cols()));
  p.validate();
  const std::size_t hidden = p.hidden();
  auto agg = aggregate_neighbor_edges(g, X, mode);
  auto h = relu(matmul(agg, t.param(p.W_agg)));
  auto w_edge = t.param(p.W_edge);
  auto src_part = matmul(h, slice_rows(w_edge, 0, hidden));
  auto dst_part = matmul(h, slice_rows(w_edge, hidden, 2 * hidden));
  return edge_endpoint_sum(g, src_part, dst_part);
}

/// Forward-only embedding of a graph's own features.
template <class T>
Matrix<T> embed_edges(const FlowGraph& g, const EncoderParams<T>& p,
                      Neighborhood mode = Neighborhood::Both) {
  Tape<T> tape;
  auto copy = p;
  auto H = encode(g, tape.constant(g.X.template cast<T>()), copy, mode);
  return H.value();
}

}  // namespace feae
