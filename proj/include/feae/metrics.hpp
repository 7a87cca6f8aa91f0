#pragma once

#include <cstdint>
#include <vector>

#include "feae/errors.hpp"
#include "feae/flow_data.hpp"

namespace feae {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  friend bool operator==(const ClassScores&, const ClassScores&) = default;
};

struct Confusion {
  std::uint64_t tp = 0;  // with respect to the attack class
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct MetricsReport {
  ClassScores benign;
  ClassScores attack;
  double macro_f1 = 0.0;
  double attack_precision = 0.0;
  Confusion confusion;
  double runtime_seconds = 0.0;
};

namespace detail {

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

inline ClassScores scores(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  ClassScores s;
  s.precision = safe_ratio(double(tp), double(tp + fp));
  s.recall = safe_ratio(double(tp), double(tp + fn));
  s.f1 = safe_ratio(2.0 * double(tp), 2.0 * double(tp) + double(fp) + double(fn));
  return s;
}

}  // namespace detail

/// Per-class precision/recall/F1 (0/0 -> 0) and their unweighted macro F1.
inline MetricsReport evaluate(const std::vector<Label>& predictions, const std::vector<Label>& truth) {
  if (predictions.size() != truth.size())
    throw PreconditionError("evaluate: prediction and truth lengths differ");
  if (truth.empty()) throw PreconditionError("evaluate: empty input");
  MetricsReport r;
  auto& c = r.confusion;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predictions[i] == Label::Attack;
    const bool t = truth[i] == Label::Attack;
    if (p && t) ++c.tp;
    else if (p && !t) ++c.fp;
    else if (!p && t) ++c.fn;
    else ++c.tn;
  }
  r.attack = detail::scores(c.tp, c.fp, c.fn);
  r.benign = detail::scores(c.tn, c.fn, c.fp);
  r.macro_f1 = (r.attack.f1 + r.benign.f1) / 2.0;
  r.attack_precision = r.attack.precision;
  return r;
}

}  // namespace feae
