#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "feae/autograd.hpp"
#include "feae/graph.hpp"
#include "feae/rng.hpp"
#include "feae/ssl.hpp"

namespace feae {

/// Labeled few-shot edges: k malicious edges per attack family plus a random
/// supplement that is assumed benign.
struct FewShotSelection {
  std::vector<std::uint32_t> mal_edges;     // sorted
  std::vector<std::uint32_t> benign_edges;  // sorted, disjoint from mal_edges
  std::vector<std::uint32_t> edges;         // sorted union
  std::vector<std::uint8_t> labels;         // parallel to `edges`; 1 = malicious

  std::size_t size() const { return edges.size(); }

  std::vector<bool> mal_mask(std::size_t num_edges) const {
    std::vector<bool> m(num_edges, false);
    for (auto e : mal_edges) m.at(e) = true;
    return m;
  }
};

struct SelectionOptions {
  std::size_t k = 1;
  double benign_frac = 0.05;
  // Diagnostics only: draw the supplement from truly benign edges.
  bool clean_benign = false;
};

/// For every family present (in name order) picks min(k, family size) edges
/// uniformly; then ceil(benign_frac * |E|) edges outside that set, without
/// reading their labels.
inline FewShotSelection select_few_shot(const FlowGraph& g, const SelectionOptions& opt, Rng& rng) {
  if (!(opt.benign_frac >= 0.0 && opt.benign_frac <= 1.0))
    throw PreconditionError("benign_frac must be in [0, 1]");
  FewShotSelection sel;
  if (opt.k > 0) {
    if (!g.has_labels()) throw PreconditionError("few-shot selection needs attack labels on the graph");
    std::map<std::string, std::vector<std::uint32_t>> by_family;
    for (std::uint32_t e = 0; e < g.num_edges(); ++e)
      if (g.labels[e].label == Label::Attack) by_family[g.labels[e].family.value_or("")].push_back(e);
    for (const auto& [name, members] : by_family)
      for (auto i : rng.sample_without_replacement(members.size(), std::min(opt.k, members.size())))
        sel.mal_edges.push_back(members[i]);
  }
  std::sort(sel.mal_edges.begin(), sel.mal_edges.end());

  std::vector<bool> taken(g.num_edges(), false);
  for (auto e : sel.mal_edges) taken[e] = true;
  std::vector<std::uint32_t> pool;
  for (std::uint32_t e = 0; e < g.num_edges(); ++e) {
    if (taken[e]) continue;
    if (opt.clean_benign && g.labels.at(e).label != Label::Benign) continue;
    pool.push_back(e);
  }
  const auto want = std::size_t(std::ceil(opt.benign_frac * double(g.num_edges()) - 1e-9));
  for (auto i : rng.sample_without_replacement(pool.size(), std::min(want, pool.size())))
    sel.benign_edges.push_back(pool[i]);
  std::sort(sel.benign_edges.begin(), sel.benign_edges.end());

  std::merge(sel.mal_edges.begin(), sel.mal_edges.end(), sel.benign_edges.begin(), sel.benign_edges.end(),
             std::back_inserter(sel.edges));
  sel.labels.reserve(sel.edges.size());
  for (auto e : sel.edges)
    sel.labels.push_back(std::binary_search(sel.mal_edges.begin(), sel.mal_edges.end(), e) ? 1 : 0);
  return sel;
}

// ---------------------------------------------------------------------------
// Decoder.

/// Two-layer MLP: sigmoid(ReLU(H W1 + b1) W2 + b2).
template <class T>
struct DecoderParams {
  Param<T> W1;
  Param<T> b1;
  Param<T> W2;
  Param<T> b2;

  static DecoderParams init(std::size_t in_dim, std::size_t hidden, Rng& rng) {
    DecoderParams p;
    p.W1 = Param<T>("dec_W1", xavier_init<T>(in_dim, hidden, rng));
    p.b1 = Param<T>("dec_b1", Matrix<T>(1, hidden));
    p.W2 = Param<T>("dec_W2", xavier_init<T>(hidden, 1, rng));
    p.b2 = Param<T>("dec_b2", Matrix<T>(1, 1));
    return p;
  }

  std::vector<Param<T>*> params() { return {&W1, &b1, &W2, &b2}; }

  void validate() const {
    const auto h = W1.value.cols();
    if (b1.value.rows() != 1 || b1.value.cols() != h || W2.value.rows() != h || W2.value.cols() != 1 ||
        b2.value.rows() != 1 || b2.value.cols() != 1)
      throw DimensionError("decoder parameter shapes do not chain");
  }

  template <class U>
  DecoderParams<U> cast() const {
    return {W1.template cast<U>(), b1.template cast<U>(), W2.template cast<U>(), b2.template cast<U>()};
  }
};

/// Pre-sigmoid decoder output, |rows| x 1.
template <class T>
Var<T> decode_logits(Var<T> H, DecoderParams<T>& p) {
  p.validate();
  auto& t = *H.tape;
  if (H.cols() != p.W1.value.rows())
    throw DimensionError("decoder expects " + std::to_string(p.W1.value.rows()) + "-wide embeddings, got " +
                         std::to_string(H.cols()));
  auto hidden = relu(add_row_bias(matmul(H, t.param(p.W1)), t.param(p.b1)));
  return add_row_bias(matmul(hidden, t.param(p.W2)), t.param(p.b2));
}

/// Per-row malicious probability, |rows| x 1.
template <class T>
Var<T> decode(Var<T> H, DecoderParams<T>& p) {
  return sigmoid(decode_logits(H, p));
}

template <class T>
std::vector<T> decode_values(const Matrix<T>& H, const DecoderParams<T>& p) {
  Tape<T> tape;
  auto copy = p;
  return decode(tape.constant(H), copy).value().data();
}

/// Selects rows of `a`.
template <class T>
Var<T> gather_rows(Var<T> a, std::vector<std::uint32_t> rows) {
  auto& t = *a.tape;
  const auto& av = a.value();
  Matrix<T> out(rows.size(), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) throw DimensionError("gather_rows index out of range");
    std::copy(av.row(rows[i]).begin(), av.row(rows[i]).end(), out.row(i).begin());
  }
  return t.record(std::move(out), t.requires_grad(a), [a, rows = std::move(rows)](Tape<T>& tp, const Matrix<T>& g) {
    auto& ga = tp.grad(a);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto dst = ga.row(rows[i]);
      auto src = g.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

/// Mean binary cross-entropy of probs[rows[i]] against targets[i], with
/// probabilities clamped to [1e-7, 1 - 1e-7].
template <class T>
Var<T> bce_rows(Var<T> probs, std::vector<std::uint32_t> rows, std::vector<std::uint8_t> targets) {
  auto& t = *probs.tape;
  if (rows.empty()) throw PreconditionError("binary cross-entropy over an empty edge set");
  if (rows.size() != targets.size()) throw DimensionError("bce row/target count mismatch");
  const auto& pv = probs.value().data();
  T acc = T(0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= pv.size()) throw DimensionError("bce row index out of range");
    const T p = detail::clamp_prob(pv[rows[i]]);
    acc += targets[i] ? -std::log(p) : -std::log(T(1) - p);
  }
  const T inv = T(1) / T(rows.size());
  return t.record(Matrix<T>(1, 1, acc * inv), t.requires_grad(probs),
                  [probs, rows = std::move(rows), targets = std::move(targets), inv](Tape<T>& tp,
                                                                                      const Matrix<T>& g) {
                    const auto& p = tp.value(probs).data();
                    auto& gp = tp.grad(probs).data();
                    const T up = g(0, 0) * inv;
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      const T pi = p[rows[i]];
                      if (!(pi > T(kProbClamp) && pi < T(1.0 - kProbClamp))) continue;
                      gp[rows[i]] += targets[i] ? -up / pi : up / (T(1) - pi);
                    }
                  });
}

/// Mean BCE over the few-shot edges; `probs` covers every edge of the graph.
template <class T>
Var<T> decoder_loss(Var<T> probs, const FewShotSelection& sel) {
  return bce_rows(probs, sel.edges, sel.labels);
}

/// Malicious iff p > threshold.
template <class T>
std::vector<Label> classify(const std::vector<T>& probs, double threshold = 0.5) {
  std::vector<Label> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    out[i] = double(probs[i]) > threshold ? Label::Attack : Label::Benign;
  return out;
}

}  // namespace feae
