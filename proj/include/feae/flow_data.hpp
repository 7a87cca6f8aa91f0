#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "feae/errors.hpp"
#include "feae/rng.hpp"

namespace feae {

enum class Label : std::uint8_t { Benign = 0, Attack = 1 };

struct FlowRecord {
  std::string src_addr;
  std::string dst_addr;
  std::vector<double> features;
  Label label = Label::Benign;
  std::optional<std::string> family;  // present iff label == Attack
};

struct FlowDataset {
  std::vector<FlowRecord> records;
  std::vector<std::string> schema;  // feature names, in column order
  std::string provenance;

  std::size_t size() const { return records.size(); }
  std::size_t num_features() const { return schema.size(); }
};

/// Numeric NetFlow v2 columns used as edge features. The address columns
/// identify graph nodes and are not part of this list.
inline const std::vector<std::string>& nf_v2_feature_columns() {
  static const std::vector<std::string> cols = {
      "L4_SRC_PORT", "L4_DST_PORT", "PROTOCOL", "L7_PROTO", "IN_BYTES", "IN_PKTS",
      "OUT_BYTES", "OUT_PKTS", "TCP_FLAGS", "CLIENT_TCP_FLAGS", "SERVER_TCP_FLAGS",
      "FLOW_DURATION_MILLISECONDS", "DURATION_IN", "DURATION_OUT", "MIN_TTL", "MAX_TTL",
      "LONGEST_FLOW_PKT", "SHORTEST_FLOW_PKT", "MIN_IP_PKT_LEN", "MAX_IP_PKT_LEN",
      "SRC_TO_DST_SECOND_BYTES", "DST_TO_SRC_SECOND_BYTES", "RETRANSMITTED_IN_BYTES",
      "RETRANSMITTED_IN_PKTS", "RETRANSMITTED_OUT_BYTES", "RETRANSMITTED_OUT_PKTS",
      "SRC_TO_DST_AVG_THROUGHPUT", "DST_TO_SRC_AVG_THROUGHPUT", "NUM_PKTS_UP_TO_128_BYTES",
      "NUM_PKTS_128_TO_256_BYTES", "NUM_PKTS_256_TO_512_BYTES", "NUM_PKTS_512_TO_1024_BYTES",
      "NUM_PKTS_1024_TO_1514_BYTES", "TCP_WIN_MAX_IN", "TCP_WIN_MAX_OUT", "ICMP_TYPE",
      "ICMP_IPV4_TYPE", "DNS_QUERY_ID", "DNS_QUERY_TYPE", "DNS_TTL_ANSWER",
      "FTP_COMMAND_RET_CODE"};
  return cols;
}

/// Which CSV columns hold what.
struct ColumnMapping {
  std::string src = "IPV4_SRC_ADDR";
  std::string dst = "IPV4_DST_ADDR";
  std::string label = "Label";
  std::string family = "Attack";
  std::vector<std::string> features = nf_v2_feature_columns();
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line, std::string& scratch) {
  // Supports double-quoted fields with "" escapes; unquoted fields are views
  // into `line`, quoted ones are unescaped into `scratch`.
  std::vector<std::string_view> out;
  std::vector<std::pair<std::size_t, std::size_t>> quoted;
  scratch.clear();
  std::size_t i = 0;
  while (true) {
    if (i < line.size() && line[i] == '"') {
      const std::size_t start = scratch.size();
      ++i;
      while (i < line.size()) {
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            scratch.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        scratch.push_back(line[i++]);
      }
      quoted.emplace_back(out.size(), start);
      out.emplace_back();
      scratch.push_back('\0');
      while (i < line.size() && line[i] != ',') ++i;
    } else {
      const std::size_t end = std::min(line.find(',', i), line.size());
      out.push_back(line.substr(i, end - i));
      i = end;
    }
    if (i >= line.size()) break;
    ++i;  // comma
    if (i == line.size()) {
      out.emplace_back();
      break;
    }
  }
  for (auto [idx, start] : quoted) out[idx] = std::string_view(scratch.data() + start);
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

/// Reads a comma-separated flow file with a header row. Malformed rows are
/// hard errors; rows are kept in file order.
inline FlowDataset load_flows(std::istream& in, const ColumnMapping& mapping,
                              std::string provenance = "stream") {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("flow file is empty (no header row)");
  std::string scratch;
  std::map<std::string, std::size_t, std::less<>> index;
  {
    auto header = detail::split_csv_line(line, scratch);
    for (std::size_t i = 0; i < header.size(); ++i)
      index.emplace(std::string(detail::trim(header[i])), i);
  }
  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw SchemaError("missing column '" + name + "'");
    return it->second;
  };
  const std::size_t src_col = column(mapping.src);
  const std::size_t dst_col = column(mapping.dst);
  const std::size_t label_col = column(mapping.label);
  const std::size_t family_col = column(mapping.family);
  std::vector<std::size_t> feat_cols;
  feat_cols.reserve(mapping.features.size());
  for (const auto& f : mapping.features) feat_cols.push_back(column(f));

  FlowDataset ds;
  ds.schema = mapping.features;
  ds.provenance = std::move(provenance);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto cells = detail::split_csv_line(line, scratch);
    auto cell = [&](std::size_t c) -> std::string_view {
      if (c >= cells.size())
        throw ParseError("row " + std::to_string(row) + ": expected at least " +
                         std::to_string(c + 1) + " cells, got " + std::to_string(cells.size()));
      return detail::trim(cells[c]);
    };
    FlowRecord rec;
    rec.src_addr = std::string(cell(src_col));
    rec.dst_addr = std::string(cell(dst_col));
    rec.features.reserve(feat_cols.size());
    for (std::size_t k = 0; k < feat_cols.size(); ++k) {
      auto v = detail::parse_double(cell(feat_cols[k]));
      if (!v)
        throw ParseError("row " + std::to_string(row) + ": column '" + mapping.features[k] +
                         "' is not numeric: '" + std::string(cell(feat_cols[k])) + "'");
      rec.features.push_back(*v);
    }
    auto lab = detail::parse_double(cell(label_col));
    if (!lab || (*lab != 0.0 && *lab != 1.0))
      throw ParseError("row " + std::to_string(row) + ": label must be 0 or 1, got '" +
                       std::string(cell(label_col)) + "'");
    rec.label = *lab == 1.0 ? Label::Attack : Label::Benign;
    if (rec.label == Label::Attack) {
      auto fam = cell(family_col);
      if (fam.empty())
        throw ParseError("row " + std::to_string(row) + ": attack row has an empty family");
      rec.family = std::string(fam);
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

inline FlowDataset load_flows(const std::string& path, const ColumnMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open flow file '" + path + "'");
  return load_flows(in, mapping, path);
}

/// Writes the same layout load_flows reads. Benign rows carry "Benign" in the
/// family column, like the NF-v2 files.
inline void write_flows(std::ostream& out, const FlowDataset& ds, const ColumnMapping& mapping) {
  if (mapping.features.size() != ds.num_features())
    throw DimensionError("column mapping has " + std::to_string(mapping.features.size()) +
                         " features, dataset has " + std::to_string(ds.num_features()));
  out << mapping.src << ',' << mapping.dst;
  for (const auto& f : mapping.features) out << ',' << f;
  out << ',' << mapping.label << ',' << mapping.family << '\n';
  for (const auto& r : ds.records) {
    out << r.src_addr << ',' << r.dst_addr;
    for (double v : r.features) out << ',' << detail::format_double(v);
    out << ',' << (r.label == Label::Attack ? 1 : 0) << ',' << r.family.value_or("Benign") << '\n';
  }
}

inline void write_flows(const std::string& path, const FlowDataset& ds, const ColumnMapping& mapping) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write flow file '" + path + "'");
  write_flows(out, ds, mapping);
  if (!out) throw DataError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Normalization.

/// Per-feature quantile clip followed by an affine map onto [0, 1].
struct Scaler {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return lower.size(); }

  double transform(std::size_t feature, double v) const {
    const double lo = lower[feature];
    const double hi = upper[feature];
    if (!(hi > lo)) return 0.0;
    const double c = std::clamp(v, lo, hi);
    return std::clamp((c - lo) / (hi - lo), 0.0, 1.0);
  }
};

namespace detail {

/// Linear-interpolated quantile of sorted values (numpy's default rule).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * double(sorted.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

inline Scaler fit_scaler(const FlowDataset& train, double q_low = 0.01, double q_high = 0.99) {
  if (train.records.empty()) throw PreconditionError("fit_scaler on an empty dataset");
  if (!(q_low >= 0.0 && q_low <= q_high && q_high <= 1.0))
    throw PreconditionError("fit_scaler quantiles must satisfy 0 <= q_low <= q_high <= 1");
  Scaler s;
  const std::size_t d = train.num_features();
  s.lower.resize(d);
  s.upper.resize(d);
  std::vector<double> col(train.size());
  for (std::size_t f = 0; f < d; ++f) {
    for (std::size_t i = 0; i < train.size(); ++i) col[i] = train.records[i].features[f];
    std::sort(col.begin(), col.end());
    s.lower[f] = detail::quantile_sorted(col, q_low);
    s.upper[f] = detail::quantile_sorted(col, q_high);
  }
  return s;
}

inline FlowDataset apply_scaler(const FlowDataset& ds, const Scaler& scaler) {
  if (scaler.size() != ds.num_features())
    throw DimensionError("scaler has " + std::to_string(scaler.size()) + " features, dataset has " +
                         std::to_string(ds.num_features()));
  FlowDataset out = ds;
  for (auto& r : out.records) {
    if (r.features.size() != scaler.size())
      throw DimensionError("record feature count does not match scaler");
    for (std::size_t f = 0; f < r.features.size(); ++f) r.features[f] = scaler.transform(f, r.features[f]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling and splitting. Neither looks at labels.

inline FlowDataset sample_fraction(const FlowDataset& ds, double frac, std::uint64_t seed) {
  if (!(frac > 0.0 && frac <= 1.0))
    throw PreconditionError("sample fraction must be in (0, 1], got " + std::to_string(frac));
  const auto count = std::size_t(std::llround(frac * double(ds.size())));
  Rng rng(seed);
  auto idx = rng.sample_without_replacement(ds.size(), count);
  std::sort(idx.begin(), idx.end());
  FlowDataset out;
  out.schema = ds.schema;
  out.provenance = ds.provenance;
  out.records.reserve(idx.size());
  for (auto i : idx) out.records.push_back(ds.records[i]);
  return out;
}

/// Random disjoint split; the train side gets round(train_frac * n) records.
/// Both sides keep the original relative order.
inline std::pair<FlowDataset, FlowDataset> train_test_split(const FlowDataset& ds, double train_frac,
                                                            std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw PreconditionError("train fraction must be in (0, 1), got " + std::to_string(train_frac));
  const auto n_train = std::size_t(std::llround(train_frac * double(ds.size())));
  Rng rng(seed);
  auto perm = rng.sample_without_replacement(ds.size(), ds.size());
  std::vector<bool> in_train(ds.size(), false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[perm[i]] = true;
  std::pair<FlowDataset, FlowDataset> out;
  for (auto* part : {&out.first, &out.second}) {
    part->schema = ds.schema;
    part->provenance = ds.provenance;
  }
  for (std::size_t i = 0; i < ds.size(); ++i)
    (in_train[i] ? out.first : out.second).records.push_back(ds.records[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic imbalanced flow data.

struct FamilySpec {
  std::string name;
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct SyntheticConfig {
  std::size_t n_flows = 10000;
  std::size_t n_hosts = 400;
  double attack_fraction = 0.02;
  std::vector<FamilySpec> families;
  std::vector<double> benign_mean;
  std::vector<double> benign_stddev;
  std::vector<std::string> feature_names = nf_v2_feature_columns();
  std::size_t heavy_talkers = 8;        // hosts that take part in a large share of benign flows
  double heavy_talker_share = 0.1;      // probability a benign endpoint is a heavy talker
  std::size_t attackers_per_family = 2; // dedicated source hosts per family
  std::uint64_t seed = 0;

  void validate() const {
    const std::size_t d = feature_names.size();
    if (n_flows == 0) throw ConfigError("synthetic n_flows must be positive");
    if (!(attack_fraction > 0.0 && attack_fraction < 0.5))
      throw ConfigError("synthetic attack_fraction must be in (0, 0.5)");
    if (families.empty()) throw ConfigError("synthetic config needs at least one attack family");
    double wsum = 0.0;
    for (const auto& f : families) {
      if (f.weight < 0.0) throw ConfigError("family '" + f.name + "' has a negative weight");
      if (f.mean.size() != d || f.stddev.size() != d)
        throw ConfigError("family '" + f.name + "' mean/stddev length does not match feature count");
      wsum += f.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw ConfigError("family weights must sum to 1");
    if (benign_mean.size() != d || benign_stddev.size() != d)
      throw ConfigError("benign mean/stddev length does not match feature count");
    const std::size_t reserved = families.size() * attackers_per_family;
    if (attackers_per_family == 0 || n_hosts < reserved + 2 || heavy_talkers > n_hosts - reserved)
      throw ConfigError("synthetic n_hosts too small for the requested attacker/heavy-talker hosts");
    if (!(heavy_talker_share >= 0.0 && heavy_talker_share <= 1.0))
      throw ConfigError("heavy_talker_share must be in [0, 1]");
  }
};

/// Largest-remainder apportionment of `total` by `weights`; ties go to the
/// earlier entry.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] * double(total);
    out[i] = std::size_t(std::floor(exact + 1e-12));
    used += out[i];
    rem.emplace_back(exact - double(out[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; used < total && j < rem.size(); ++j, ++used) ++out[rem[j].second];
  return out;
}

inline std::string synthetic_host_name(std::size_t i) {
  return "10." + std::to_string((i >> 16) & 255) + "." + std::to_string((i >> 8) & 255) + "." +
         std::to_string(i & 255);
}

/// Hosts [0, heavy_talkers) are heavy talkers; the last
/// families * attackers_per_family hosts are attack sources and never appear
/// in benign flows. Attack victims follow the benign endpoint distribution.
inline FlowDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t d = cfg.feature_names.size();
  const std::size_t reserved = cfg.families.size() * cfg.attackers_per_family;
  const std::size_t benign_hosts = cfg.n_hosts - reserved;

  auto benign_endpoint = [&]() -> std::size_t {
    if (cfg.heavy_talkers > 0 && rng.uniform01() < cfg.heavy_talker_share)
      return rng.uniform_index(cfg.heavy_talkers);
    return rng.uniform_index(benign_hosts);
  };
  auto draw = [&](const std::vector<double>& mean, const std::vector<double>& sd) {
    std::vector<double> f(d);
    for (std::size_t k = 0; k < d; ++k) f[k] = std::clamp(rng.normal(mean[k], sd[k]), 0.0, 1.0);
    return f;
  };

  const auto n_attack = std::size_t(std::llround(cfg.attack_fraction * double(cfg.n_flows)));
  std::vector<double> weights;
  for (const auto& f : cfg.families) weights.push_back(f.weight);
  const auto per_family = apportion(n_attack, weights);

  FlowDataset ds;
  ds.schema = cfg.feature_names;
  ds.provenance = "synthetic(seed=" + std::to_string(cfg.seed) + ")";
  ds.records.reserve(cfg.n_flows);
  for (std::size_t i = 0; i < cfg.n_flows - n_attack; ++i) {
    FlowRecord r;
    const auto u = benign_endpoint();
    auto v = benign_endpoint();
    while (v == u) v = benign_endpoint();
    r.src_addr = synthetic_host_name(u);
    r.dst_addr = synthetic_host_name(v);
    r.features = draw(cfg.benign_mean, cfg.benign_stddev);
    ds.records.push_back(std::move(r));
  }
  for (std::size_t f = 0; f < cfg.families.size(); ++f) {
    const auto& fam = cfg.families[f];
    for (std::size_t i = 0; i < per_family[f]; ++i) {
      FlowRecord r;
      const auto src = benign_hosts + f * cfg.attackers_per_family +
                       rng.uniform_index(cfg.attackers_per_family);
      r.src_addr = synthetic_host_name(src);
      r.dst_addr = synthetic_host_name(benign_endpoint());
      r.features = draw(fam.mean, fam.stddev);
      r.label = Label::Attack;
      r.family = fam.name;
      ds.records.push_back(std::move(r));
    }
  }
  rng.shuffle(ds.records.begin(), ds.records.end());
  return ds;
}

/// Named synthetic regimes:
///   desk      10k flows, 2% attacks, 3 families
///   cse_like  12% attacks over 6 families
///   unsw_like 4% attacks over 9 families
/// Benign features ~ N(mu, 0.05) with mu in [0.2, 0.5]; each family shifts
/// 8 random features by 3 to 5 standard deviations.
inline SyntheticConfig synthetic_preset(const std::string& name, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.seed = seed;
  std::size_t n_families = 0;
  if (name == "desk") {
    cfg.n_flows = 10000;
    cfg.n_hosts = 400;
    cfg.attack_fraction = 0.02;
    n_families = 3;
  } else if (name == "cse_like") {
    cfg.n_flows = 10000;
    cfg.n_hosts = 400;
    cfg.attack_fraction = 0.12;
    n_families = 6;
  } else if (name == "unsw_like") {
    cfg.n_flows = 10000;
    cfg.n_hosts = 400;
    cfg.attack_fraction = 0.04;
    n_families = 9;
  } else {
    throw ConfigError("unknown synthetic preset '" + name + "'");
  }
  const std::size_t d = cfg.feature_names.size();
  constexpr double kSigma = 0.05;
  constexpr std::size_t kShifted = 8;
  Rng rng(derive_seed(seed, "synthetic-preset"));
  cfg.benign_mean.resize(d);
  cfg.benign_stddev.assign(d, kSigma);
  for (auto& m : cfg.benign_mean) m = rng.uniform(0.2, 0.5);
  for (std::size_t f = 0; f < n_families; ++f) {
    FamilySpec fam;
    fam.name = "family" + std::to_string(f);
    fam.weight = 1.0 / double(n_families);
    fam.mean = cfg.benign_mean;
    fam.stddev.assign(d, kSigma);
    for (auto k : rng.sample_without_replacement(d, kShifted)) {
      const double shift = rng.uniform(3.0, 5.0) * kSigma;
      const double up = fam.mean[k] + shift;
      fam.mean[k] = (up <= 1.0 - 2 * kSigma || fam.mean[k] - shift < 2 * kSigma) ? up
                                                                                 : fam.mean[k] - shift;
    }
    cfg.families.push_back(std::move(fam));
  }
  // Renormalize so the weights sum to exactly 1 in floating point.
  double wsum = 0.0;
  for (const auto& f : cfg.families) wsum += f.weight;
  cfg.families.back().weight += 1.0 - wsum;
  return cfg;
}

}  // namespace feae
