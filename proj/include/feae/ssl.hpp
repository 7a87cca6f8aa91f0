#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "feae/autograd.hpp"
#include "feae/encoder.hpp"
#include "feae/graph.hpp"
#include "feae/rng.hpp"

namespace feae {

/// Discriminator and reconstruction weights.
template <class T>
struct SslParams {
  Param<T> W_disc;  // hidden x hidden
  Param<T> W_rec;   // hidden x d

  /// W_disc starts at zero so the discriminator is uninformative (p = 0.5)
  /// before the first step; W_rec is Glorot-uniform.
  static SslParams init(std::size_t hidden, std::size_t feature_dim, Rng& rng) {
    SslParams p;
    p.W_disc = Param<T>("W_disc", Matrix<T>(hidden, hidden));
    p.W_rec = Param<T>("W_rec", xavier_init<T>(hidden, feature_dim, rng));
    return p;
  }

  std::vector<Param<T>*> params() { return {&W_disc, &W_rec}; }

  template <class U>
  SslParams<U> cast() const {
    return {W_disc.template cast<U>(), W_rec.template cast<U>()};
  }
};

// ---------------------------------------------------------------------------
// Augmentations.

enum class AugmentationKind { Identity, EdgeShuffle, NodeDrop, RandomEdgeAdd, EdgeMask };

struct AugmentationSpec {
  AugmentationKind kind = AugmentationKind::Identity;
  double p = 0.0;  // drop/mask probability or added-edge ratio

  static AugmentationSpec identity() { return {AugmentationKind::Identity, 0.0}; }
  static AugmentationSpec edge_shuffle() { return {AugmentationKind::EdgeShuffle, 0.0}; }
  static AugmentationSpec node_drop(double p) { return {AugmentationKind::NodeDrop, p}; }
  static AugmentationSpec random_edge_add(double r) { return {AugmentationKind::RandomEdgeAdd, r}; }
  static AugmentationSpec edge_mask(double p) { return {AugmentationKind::EdgeMask, p}; }

  void validate() const {
    const bool needs_p = kind == AugmentationKind::NodeDrop || kind == AugmentationKind::RandomEdgeAdd ||
                         kind == AugmentationKind::EdgeMask;
    if (needs_p && !(p > 0.0 && p < 1.0))
      throw PreconditionError("augmentation parameter must be in (0, 1), got " + std::to_string(p));
  }
};

/// Positive and negative transforms for the contrastive objective.
struct AugmentationPair {
  AugmentationSpec positive;
  AugmentationSpec negative;
};

/// dgi_default = (identity, edge_shuffle), aug1 = (node_drop 0.3, edge_shuffle),
/// aug2 = (random_edge_add ratio, edge_mask 0.3).
inline AugmentationPair augmentation_preset(const std::string& name, double edge_add_ratio = 0.1) {
  if (name == "dgi_default") return {AugmentationSpec::identity(), AugmentationSpec::edge_shuffle()};
  if (name == "aug1") return {AugmentationSpec::node_drop(0.3), AugmentationSpec::edge_shuffle()};
  if (name == "aug2")
    return {AugmentationSpec::random_edge_add(edge_add_ratio), AugmentationSpec::edge_mask(0.3)};
  throw ConfigError("unknown augmentation preset '" + name + "'");
}

namespace detail {

inline std::size_t ceil_count(double frac, std::size_t n) {
  return std::size_t(std::ceil(frac * double(n) - 1e-9));
}

inline FlowGraph node_drop(const FlowGraph& g, double p, Rng& rng) {
  const std::size_t n_drop = ceil_count(p, g.num_nodes);
  if (n_drop >= g.num_nodes) throw PreconditionError("node_drop would remove every node");
  std::vector<bool> dropped(g.num_nodes, false);
  for (auto u : rng.sample_without_replacement(g.num_nodes, n_drop)) dropped[u] = true;
  std::vector<std::uint32_t> remap(g.num_nodes, UINT32_MAX);
  FlowGraph out;
  for (std::size_t u = 0; u < g.num_nodes; ++u) {
    if (dropped[u]) continue;
    remap[u] = std::uint32_t(out.host_keys.size());
    out.host_keys.push_back(g.host_keys[u]);
  }
  out.num_nodes = out.host_keys.size();
  std::vector<std::size_t> kept;
  for (std::size_t e = 0; e < g.num_edges(); ++e)
    if (!dropped[g.edges[e].src] && !dropped[g.edges[e].dst]) kept.push_back(e);
  out.X = Matrix<float>(kept.size(), g.num_features());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto e = kept[i];
    out.edges.push_back({remap[g.edges[e].src], remap[g.edges[e].dst]});
    std::copy(g.X.row(e).begin(), g.X.row(e).end(), out.X.row(i).begin());
    if (g.has_labels()) out.labels.push_back(g.labels[e]);
    out.origin.push_back(g.origin[e]);
  }
  out.rebuild_incidence();
  return out;
}

}  // namespace detail

/// Applies one augmentation. Deterministic for a given generator state.
///   identity        same graph
///   edge_shuffle    topology kept, feature rows permuted
///   node_drop(p)    removes ceil(p*|V|) nodes and every incident edge
///   random_edge_add appends ceil(r*|E|) edges between random nodes with U[0,1] features
///   edge_mask(p)    zeroes the feature rows of ceil(p*|E|) edges
inline FlowGraph corrupt(const FlowGraph& g, const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  switch (spec.kind) {
    case AugmentationKind::Identity:
      return g;
    case AugmentationKind::EdgeShuffle: {
      FlowGraph out = g;
      std::vector<std::size_t> perm(g.num_edges());
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      rng.shuffle(perm.begin(), perm.end());
      for (std::size_t e = 0; e < perm.size(); ++e)
        std::copy(g.X.row(perm[e]).begin(), g.X.row(perm[e]).end(), out.X.row(e).begin());
      return out;
    }
    case AugmentationKind::NodeDrop:
      return detail::node_drop(g, spec.p, rng);
    case AugmentationKind::RandomEdgeAdd: {
      if (g.num_nodes == 0) throw PreconditionError("random_edge_add on an empty graph");
      const std::size_t extra = detail::ceil_count(spec.p, g.num_edges());
      FlowGraph out = g;
      const std::size_t d = g.num_features();
      std::vector<float> data = std::move(out.X.data());
      data.reserve((g.num_edges() + extra) * d);
      for (std::size_t i = 0; i < extra; ++i) {
        const auto s = std::uint32_t(rng.uniform_index(g.num_nodes));
        const auto t = std::uint32_t(rng.uniform_index(g.num_nodes));
        out.edges.push_back({s, t});
        for (std::size_t k = 0; k < d; ++k) data.push_back(float(rng.uniform01()));
        if (g.has_labels()) out.labels.push_back({});
        out.origin.push_back(-1);
      }
      out.X = Matrix<float>(out.edges.size(), d, std::move(data));
      out.rebuild_incidence();
      return out;
    }
    case AugmentationKind::EdgeMask: {
      FlowGraph out = g;
      for (auto e : rng.sample_without_replacement(g.num_edges(), detail::ceil_count(spec.p, g.num_edges()))) {
        auto row = out.X.row(e);
        std::fill(row.begin(), row.end(), 0.0f);
      }
      return out;
    }
  }
  throw PreconditionError("unknown augmentation kind");
}

struct AugmentedPair {
  FlowGraph positive;
  FlowGraph negative;
};

/// Positive then negative view, both drawn from `rng` in that order.
inline AugmentedPair augment_pair(const FlowGraph& g, const AugmentationPair& aug, Rng& rng) {
  AugmentedPair out;
  out.positive = corrupt(g, aug.positive, rng);
  out.negative = corrupt(g, aug.negative, rng);
  return out;
}

/// (H, H_neg) from the two views with one shared parameter set. `views` must
/// outlive the tape's backward pass.
template <class T>
std::pair<Var<T>, Var<T>> encode_pair(Tape<T>& tape, const AugmentedPair& views, EncoderParams<T>& p,
                                      Neighborhood mode = Neighborhood::Both) {
  auto H = encode(views.positive, tape.constant(views.positive.X.template cast<T>()), p, mode);
  auto H_neg = encode(views.negative, tape.constant(views.negative.X.template cast<T>()), p, mode);
  return {H, H_neg};
}

// ---------------------------------------------------------------------------
// Contrastive objective.

/// Global summary s = sigmoid(column mean of H), 1 x hidden.
template <class T>
Var<T> readout(Var<T> H) {
  if (H.rows() == 0) throw PreconditionError("readout of an empty embedding matrix");
  return sigmoid(mean_rows(H));
}

/// Per-edge score H_e * W * s^T, |rows| x 1. W * s^T is formed first so the
/// cost is one hidden-sized matrix-vector product per edge.
template <class T>
Var<T> discriminate_logits(Var<T> H, Var<T> s, Var<T> W) {
  if (s.rows() != 1 || W.rows() != H.cols() || W.cols() != s.cols())
    throw DimensionError("discriminator shapes do not chain: H " + H.value().shape() + ", W " +
                         W.value().shape() + ", s " + s.value().shape());
  return matmul(H, matmul_transposed(W, s));
}

/// Per-edge probability sigmoid(H_e * W * s^T), |rows| x 1.
template <class T>
Var<T> discriminate(Var<T> H, Var<T> s, Var<T> W) {
  return sigmoid(discriminate_logits(H, s, W));
}

inline constexpr double kProbClamp = 1e-7;

namespace detail {

template <class T>
T clamp_prob(T p) {
  return std::clamp(p, T(kProbClamp), T(1.0 - kProbClamp));
}

}  // namespace detail

/// -(sum log pos + sum log(1 - neg)) / (|pos| + |neg|), probabilities clamped
/// to [1e-7, 1 - 1e-7]. Clamped entries get no gradient.
template <class T>
Var<T> dgi_loss(Var<T> pos, Var<T> neg) {
  auto& t = *pos.tape;
  const auto& pv = pos.value().data();
  const auto& nv = neg.value().data();
  if (pv.empty() || nv.empty()) throw PreconditionError("dgi_loss needs non-empty positive and negative sets");
  const T inv = T(1) / T(pv.size() + nv.size());
  T acc = T(0);
  for (T p : pv) acc += std::log(detail::clamp_prob(p));
  for (T p : nv) acc += std::log(T(1) - detail::clamp_prob(p));
  const bool rg = t.requires_grad(pos) || t.requires_grad(neg);
  return t.record(Matrix<T>(1, 1, -acc * inv), rg, [pos, neg, inv](Tape<T>& tp, const Matrix<T>& g) {
    const T up = g(0, 0) * inv;
    auto in_range = [](T p) { return p > T(kProbClamp) && p < T(1.0 - kProbClamp); };
    if (tp.requires_grad(pos)) {
      const auto& p = tp.value(pos).data();
      auto& gp = tp.grad(pos).data();
      for (std::size_t i = 0; i < p.size(); ++i)
        if (in_range(p[i])) gp[i] += -up / p[i];
    }
    if (tp.requires_grad(neg)) {
      const auto& p = tp.value(neg).data();
      auto& gn = tp.grad(neg).data();
      for (std::size_t i = 0; i < p.size(); ++i)
        if (in_range(p[i])) gn[i] += up / (T(1) - p[i]);
    }
  });
}

/// log(1 + e^x) without overflow.
template <class T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Mean binary cross-entropy over logits: rows listed in `rows` are compared
/// against `targets` (1 or 0). Equals the clamped-probability form whenever
/// sigmoid(logit) lies inside the clamp range, and keeps a non-zero gradient
/// when it does not.
template <class T>
Var<T> bce_with_logits(Var<T> logits, std::vector<std::uint32_t> rows, std::vector<std::uint8_t> targets) {
  auto& t = *logits.tape;
  if (rows.empty()) throw PreconditionError("binary cross-entropy over an empty set");
  if (rows.size() != targets.size()) throw DimensionError("bce row/target count mismatch");
  const auto& z = logits.value().data();
  T acc = T(0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= z.size()) throw DimensionError("bce row index out of range");
    acc += targets[i] ? softplus(-z[rows[i]]) : softplus(z[rows[i]]);
  }
  const T inv = T(1) / T(rows.size());
  return t.record(Matrix<T>(1, 1, acc * inv), t.requires_grad(logits),
                  [logits, rows = std::move(rows), targets = std::move(targets), inv](Tape<T>& tp,
                                                                                       const Matrix<T>& g) {
                    const auto& z = tp.value(logits).data();
                    auto& gz = tp.grad(logits).data();
                    const T up = g(0, 0) * inv;
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      const T p = sigmoid_scalar(z[rows[i]]);
                      gz[rows[i]] += up * (p - T(targets[i]));
                    }
                  });
}

/// The contrastive loss evaluated on discriminator logits:
/// (sum softplus(-pos) + sum softplus(neg)) / (|pos| + |neg|).
template <class T>
Var<T> dgi_loss_logits(Var<T> pos_logits, Var<T> neg_logits) {
  auto& t = *pos_logits.tape;
  const std::size_t n_pos = pos_logits.value().size();
  const std::size_t n_neg = neg_logits.value().size();
  if (n_pos == 0 || n_neg == 0) throw PreconditionError("dgi_loss needs non-empty positive and negative sets");
  const T inv = T(1) / T(n_pos + n_neg);
  T acc = T(0);
  for (T z : pos_logits.value().data()) acc += softplus(-z);
  for (T z : neg_logits.value().data()) acc += softplus(z);
  const bool rg = t.requires_grad(pos_logits) || t.requires_grad(neg_logits);
  return t.record(Matrix<T>(1, 1, acc * inv), rg, [pos_logits, neg_logits, inv](Tape<T>& tp, const Matrix<T>& g) {
    const T up = g(0, 0) * inv;
    if (tp.requires_grad(pos_logits)) {
      const auto& z = tp.value(pos_logits).data();
      auto& gz = tp.grad(pos_logits).data();
      for (std::size_t i = 0; i < z.size(); ++i) gz[i] += up * (sigmoid_scalar(z[i]) - T(1));
    }
    if (tp.requires_grad(neg_logits)) {
      const auto& z = tp.value(neg_logits).data();
      auto& gz = tp.grad(neg_logits).data();
      for (std::size_t i = 0; i < z.size(); ++i) gz[i] += up * sigmoid_scalar(z[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Few-shot-aware reconstruction.

/// X_hat = sigmoid(H * W_rec).
template <class T>
Var<T> reconstruct(Var<T> H, Var<T> W_rec) {
  if (H.cols() != W_rec.rows())
    throw DimensionError("reconstruct: H " + H.value().shape() + " does not chain with W_rec " +
                         W_rec.value().shape());
  return sigmoid(matmul(H, W_rec));
}

enum class Reduction { Mean, Sum };

/// Which reconstruction term a row feeds.
enum class RowRole : std::uint8_t { NonFew = 0, Few = 1, Skip = 2 };

namespace detail {

/// Squared error over rows with the given role. Mean mode divides by
/// (row count * d); an empty set contributes 0.
template <class T>
Var<T> role_squared_error(Var<T> X_hat, const Matrix<T>& X, const std::vector<RowRole>& roles,
                          RowRole which, Reduction reduction) {
  auto& t = *X_hat.tape;
  const auto& xh = X_hat.value();
  std::size_t count = 0;
  T acc = T(0);
  for (std::size_t r = 0; r < xh.rows(); ++r) {
    if (roles[r] != which) continue;
    ++count;
    for (std::size_t c = 0; c < xh.cols(); ++c) {
      const T diff = X(r, c) - xh(r, c);
      acc += diff * diff;
    }
  }
  const T scale = (reduction == Reduction::Mean && count > 0) ? T(1) / T(count * xh.cols()) : T(1);
  return t.record(Matrix<T>(1, 1, acc * scale), t.requires_grad(X_hat),
                  [X_hat, &X, &roles, which, scale](Tape<T>& tp, const Matrix<T>& g) {
                    const auto& xh = tp.value(X_hat);
                    auto& gx = tp.grad(X_hat);
                    const T k = T(2) * scale * g(0, 0);
                    for (std::size_t r = 0; r < xh.rows(); ++r) {
                      if (roles[r] != which) continue;
                      for (std::size_t c = 0; c < xh.cols(); ++c) gx(r, c) += k * (xh(r, c) - X(r, c));
                    }
                  });
}

}  // namespace detail

/// (l_few, l_nonfew) over rows marked Few / NonFew; Skip rows are ignored.
/// `X` and `roles` must outlive the tape's backward pass.
template <class T>
std::pair<Var<T>, Var<T>> recon_losses(Var<T> X_hat, const Matrix<T>& X, const std::vector<RowRole>& roles,
                                       Reduction reduction = Reduction::Mean) {
  if (!X_hat.value().same_shape(X))
    throw DimensionError("recon_losses: X " + X.shape() + " vs X_hat " + X_hat.value().shape());
  if (roles.size() != X.rows()) throw DimensionError("recon_losses: role count != row count");
  return {detail::role_squared_error(X_hat, X, roles, RowRole::Few, reduction),
          detail::role_squared_error(X_hat, X, roles, RowRole::NonFew, reduction)};
}

inline std::vector<RowRole> roles_from_mask(const std::vector<bool>& mal_mask) {
  std::vector<RowRole> roles(mal_mask.size());
  for (std::size_t i = 0; i < mal_mask.size(); ++i) roles[i] = mal_mask[i] ? RowRole::Few : RowRole::NonFew;
  return roles;
}

struct LossBreakdown {
  double l_dgi = 0.0;
  double l_few = 0.0;
  double l_nonfew = 0.0;
  double l_total = 0.0;
  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// l_total = l_dgi + alpha * l_nonfew - beta * l_few.
inline LossBreakdown feae_loss(double l_dgi, double l_few, double l_nonfew, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw PreconditionError("alpha and beta must be non-negative");
  return {l_dgi, l_few, l_nonfew, l_dgi + alpha * l_nonfew - beta * l_few};
}

template <class T>
Var<T> feae_loss(Var<T> l_dgi, Var<T> l_few, Var<T> l_nonfew, T alpha, T beta) {
  if (alpha < T(0) || beta < T(0)) throw PreconditionError("alpha and beta must be non-negative");
  return linear_combination<T>({l_dgi, l_nonfew, l_few}, {T(1), alpha, -beta});
}

}  // namespace feae
