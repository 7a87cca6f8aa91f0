#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "feae/autograd.hpp"
#include "feae/errors.hpp"
#include "feae/flow_data.hpp"
#include "feae/matrix.hpp"

namespace feae {

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct EdgeLabel {
  Label label = Label::Benign;
  std::optional<std::string> family;
};

/// Which incident edges a node sums over.
enum class Neighborhood { Both, In };

/// Host multigraph: one node per address, one edge per flow (parallel edges
/// and self-loops kept).
struct FlowGraph {
  std::size_t num_nodes = 0;
  std::vector<std::string> host_keys;
  std::vector<Edge> edges;
  Matrix<float> X;  // |E| x d, entries in [0, 1]
  // Edge ids per node, ascending. A self-loop is listed once.
  std::vector<std::vector<std::uint32_t>> incidence;
  std::vector<std::vector<std::uint32_t>> in_incidence;
  std::vector<EdgeLabel> labels;     // empty when unlabeled
  std::vector<std::int64_t> origin;  // edge id in the source graph, -1 for inserted edges

  std::size_t num_edges() const { return edges.size(); }
  std::size_t num_features() const { return X.cols(); }
  bool has_labels() const { return !labels.empty(); }

  const std::vector<std::uint32_t>& neighbors(std::size_t node, Neighborhood n) const {
    return n == Neighborhood::Both ? incidence[node] : in_incidence[node];
  }

  /// Rebuilds both incidence lists from `edges`.
  void rebuild_incidence() {
    incidence.assign(num_nodes, {});
    in_incidence.assign(num_nodes, {});
    for (std::uint32_t e = 0; e < edges.size(); ++e) {
      const auto [s, d] = edges[e];
      incidence[s].push_back(e);
      if (d != s) incidence[d].push_back(e);
      in_incidence[d].push_back(e);
    }
  }

  void validate() const {
    if (host_keys.size() != num_nodes) throw DimensionError("host key count != num_nodes");
    if (X.rows() != edges.size())
      throw DimensionError("feature rows " + std::to_string(X.rows()) + " != edge count " +
                           std::to_string(edges.size()));
    for (const auto& e : edges)
      if (e.src >= num_nodes || e.dst >= num_nodes) throw DimensionError("edge endpoint out of range");
    for (float v : X.data())
      if (!(v >= 0.0f && v <= 1.0f)) throw PreconditionError("edge feature outside [0, 1]");
    if (!labels.empty() && labels.size() != edges.size())
      throw DimensionError("label count != edge count");
    if (origin.size() != edges.size()) throw DimensionError("origin count != edge count");
  }
};

/// One node per distinct address (first-appearance order), one edge per
/// record in record order. Features must already be normalized to [0, 1].
inline FlowGraph build_graph(const FlowDataset& ds) {
  FlowGraph g;
  std::unordered_map<std::string, std::uint32_t> ids;
  auto node = [&](const std::string& key) {
    auto [it, inserted] = ids.emplace(key, std::uint32_t(g.host_keys.size()));
    if (inserted) g.host_keys.push_back(key);
    return it->second;
  };
  const std::size_t d = ds.num_features();
  g.X = Matrix<float>(ds.size(), d);
  g.edges.reserve(ds.size());
  g.labels.reserve(ds.size());
  g.origin.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records[i];
    if (r.features.size() != d) throw DimensionError("record " + std::to_string(i) + " feature count mismatch");
    const auto s = node(r.src_addr);
    const auto t = node(r.dst_addr);
    g.edges.push_back({s, t});
    for (std::size_t k = 0; k < d; ++k) {
      const double v = r.features[k];
      if (!(v >= 0.0 && v <= 1.0))
        throw PreconditionError("record " + std::to_string(i) +
                                " has a feature outside [0, 1]; apply a scaler first");
      g.X(i, k) = float(v);
    }
    g.labels.push_back({r.label, r.family});
    g.origin.push_back(std::int64_t(i));
  }
  g.num_nodes = g.host_keys.size();
  g.rebuild_incidence();
  return g;
}

/// Row u = sum of the feature rows of edges incident to u, in ascending edge
/// order.
template <class T>
Matrix<T> aggregate_neighbor_edges(const FlowGraph& g, const Matrix<T>& X,
                                   Neighborhood mode = Neighborhood::Both) {
  if (X.rows() != g.num_edges())
    throw DimensionError("aggregate: X has " + std::to_string(X.rows()) + " rows for " +
                         std::to_string(g.num_edges()) + " edges");
  Matrix<T> out(g.num_nodes, X.cols());
  for (std::size_t u = 0; u < g.num_nodes; ++u) {
    auto dst = out.row(u);
    for (auto e : g.neighbors(u, mode)) {
      auto src = X.row(e);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }
  return out;
}

/// Differentiable aggregation; backward scatters each node's gradient to
/// its incident edge rows.
template <class T>
Var<T> aggregate_neighbor_edges(const FlowGraph& g, Var<T> X, Neighborhood mode = Neighborhood::Both) {
  auto& t = *X.tape;
  return t.record(aggregate_neighbor_edges(g, X.value(), mode), t.requires_grad(X),
                  [&g, X, mode](Tape<T>& tp, const Matrix<T>& grad) {
                    auto& gx = tp.grad(X);
                    for (std::size_t u = 0; u < g.num_nodes; ++u) {
                      auto src = grad.row(u);
                      for (auto e : g.neighbors(u, mode)) {
                        auto dst = gx.row(e);
                        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                      }
                    }
                  });
}

}  // namespace feae
