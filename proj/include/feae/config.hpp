#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "feae/errors.hpp"
#include "feae/flow_data.hpp"
#include "feae/graph.hpp"
#include "feae/ssl.hpp"

namespace feae {

using Json = nlohmann::ordered_json;

enum class SslMode { Hybrid, DgiOnly };
enum class DecoderMode { FewShot, Supervised };

struct TrainConfig {
  std::uint64_t hidden = 128;
  std::uint64_t encoder_epochs_max = 600;
  std::uint64_t encoder_patience = 150;
  std::uint64_t decoder_epochs_max = 4000;
  std::uint64_t decoder_patience = 1500;
  double lr_encoder = 1e-3;
  double wd_encoder = 1e-2;
  double lr_decoder = 1e-3;
  double wd_decoder = 1e-5;
  double alpha = 0.2;
  double beta = 0.8;
  std::uint64_t k = 1;
  double benign_frac = 0.05;
  std::string augmentation = "dgi_default";
  SslMode ssl_mode = SslMode::Hybrid;
  DecoderMode decoder_mode = DecoderMode::FewShot;
  Reduction recon_reduction = Reduction::Mean;
  double sample_frac = 0.1;
  double train_frac = 0.7;
  std::uint64_t seed = 0;
  // Not fixed by the method description; exposed for ablations.
  std::uint64_t decoder_hidden = 128;
  double threshold = 0.5;
  Neighborhood neighborhood = Neighborhood::Both;
  double edge_add_ratio = 0.1;
  double min_delta = 1e-5;
  double scaler_q_low = 0.01;
  double scaler_q_high = 0.99;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (hidden == 0 || decoder_hidden == 0) fail("hidden sizes must be positive");
    if (!(lr_encoder > 0 && lr_decoder > 0)) fail("learning rates must be positive");
    if (wd_encoder < 0 || wd_decoder < 0) fail("weight decay must be non-negative");
    if (encoder_patience > encoder_epochs_max) fail("encoder_patience exceeds encoder_epochs_max");
    if (decoder_patience > decoder_epochs_max) fail("decoder_patience exceeds decoder_epochs_max");
    if (alpha < 0 || beta < 0) fail("alpha and beta must be non-negative");
    if (!(benign_frac >= 0 && benign_frac <= 1)) fail("benign_frac must be in [0, 1]");
    if (!(sample_frac > 0 && sample_frac <= 1)) fail("sample_frac must be in (0, 1]");
    if (!(train_frac > 0 && train_frac < 1)) fail("train_frac must be in (0, 1)");
    if (!(threshold >= 0 && threshold <= 1)) fail("threshold must be in [0, 1]");
    if (!(edge_add_ratio > 0 && edge_add_ratio < 1)) fail("edge_add_ratio must be in (0, 1)");
    if (min_delta < 0) fail("min_delta must be non-negative");
    if (!(scaler_q_low >= 0 && scaler_q_low <= scaler_q_high && scaler_q_high <= 1))
      fail("scaler quantiles must satisfy 0 <= q_low <= q_high <= 1");
    augmentation_preset(augmentation, edge_add_ratio);
  }
};

namespace detail {

template <class E>
struct EnumNames;

template <>
struct EnumNames<SslMode> {
  static constexpr std::pair<SslMode, const char*> values[] = {{SslMode::Hybrid, "hybrid"},
                                                                {SslMode::DgiOnly, "dgi_only"}};
};
template <>
struct EnumNames<DecoderMode> {
  static constexpr std::pair<DecoderMode, const char*> values[] = {{DecoderMode::FewShot, "few_shot"},
                                                                    {DecoderMode::Supervised, "supervised"}};
};
template <>
struct EnumNames<Reduction> {
  static constexpr std::pair<Reduction, const char*> values[] = {{Reduction::Mean, "mean"},
                                                                  {Reduction::Sum, "sum"}};
};
template <>
struct EnumNames<Neighborhood> {
  static constexpr std::pair<Neighborhood, const char*> values[] = {{Neighborhood::Both, "both"},
                                                                     {Neighborhood::In, "in"}};
};

template <class E>
std::string enum_name(E v) {
  for (auto [e, n] : EnumNames<E>::values)
    if (e == v) return n;
  throw ConfigError("unnamed enum value");
}

template <class E>
E enum_from(const std::string& field, const std::string& s) {
  std::string allowed;
  for (auto [e, n] : EnumNames<E>::values) {
    if (s == n) return e;
    allowed += allowed.empty() ? n : std::string(", ") + n;
  }
  throw ConfigError("field '" + field + "' must be one of {" + allowed + "}, got '" + s + "'");
}

}  // namespace detail

inline Json to_json(const TrainConfig& c) {
  using detail::enum_name;
  return Json{{"hidden", c.hidden},
              {"encoder_epochs_max", c.encoder_epochs_max},
              {"encoder_patience", c.encoder_patience},
              {"decoder_epochs_max", c.decoder_epochs_max},
              {"decoder_patience", c.decoder_patience},
              {"lr_encoder", c.lr_encoder},
              {"wd_encoder", c.wd_encoder},
              {"lr_decoder", c.lr_decoder},
              {"wd_decoder", c.wd_decoder},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"k", c.k},
              {"benign_frac", c.benign_frac},
              {"augmentation", c.augmentation},
              {"ssl_mode", enum_name(c.ssl_mode)},
              {"decoder_mode", enum_name(c.decoder_mode)},
              {"recon_reduction", enum_name(c.recon_reduction)},
              {"sample_frac", c.sample_frac},
              {"train_frac", c.train_frac},
              {"seed", c.seed},
              {"decoder_hidden", c.decoder_hidden},
              {"threshold", c.threshold},
              {"neighborhood", enum_name(c.neighborhood)},
              {"edge_add_ratio", c.edge_add_ratio},
              {"min_delta", c.min_delta},
              {"scaler_q_low", c.scaler_q_low},
              {"scaler_q_high", c.scaler_q_high}};
}

/// Starts from defaults; unknown keys and mistyped values are config errors.
inline TrainConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  const Json defaults = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!defaults.contains(it.key()) && it.key() != "columns")
      throw ConfigError("unknown config field '" + it.key() + "'");

  auto get_u = [&](const char* key, std::uint64_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_number_unsigned()) out = v.get<std::uint64_t>();
    else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) out = std::uint64_t(v.get<std::int64_t>());
    else throw ConfigError(std::string("field '") + key + "' must be a non-negative integer");
  };
  auto get_d = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
    out = j.at(key).get<double>();
  };
  auto get_s = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_string()) throw ConfigError(std::string("field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
  };

  get_u("hidden", c.hidden);
  get_u("encoder_epochs_max", c.encoder_epochs_max);
  get_u("encoder_patience", c.encoder_patience);
  get_u("decoder_epochs_max", c.decoder_epochs_max);
  get_u("decoder_patience", c.decoder_patience);
  get_d("lr_encoder", c.lr_encoder);
  get_d("wd_encoder", c.wd_encoder);
  get_d("lr_decoder", c.lr_decoder);
  get_d("wd_decoder", c.wd_decoder);
  get_d("alpha", c.alpha);
  get_d("beta", c.beta);
  get_u("k", c.k);
  get_d("benign_frac", c.benign_frac);
  if (auto s = get_s("augmentation")) c.augmentation = *s;
  if (auto s = get_s("ssl_mode")) c.ssl_mode = detail::enum_from<SslMode>("ssl_mode", *s);
  if (auto s = get_s("decoder_mode")) c.decoder_mode = detail::enum_from<DecoderMode>("decoder_mode", *s);
  if (auto s = get_s("recon_reduction")) c.recon_reduction = detail::enum_from<Reduction>("recon_reduction", *s);
  get_d("sample_frac", c.sample_frac);
  get_d("train_frac", c.train_frac);
  get_u("seed", c.seed);
  get_u("decoder_hidden", c.decoder_hidden);
  get_d("threshold", c.threshold);
  if (auto s = get_s("neighborhood")) c.neighborhood = detail::enum_from<Neighborhood>("neighborhood", *s);
  get_d("edge_add_ratio", c.edge_add_ratio);
  get_d("min_delta", c.min_delta);
  get_d("scaler_q_low", c.scaler_q_low);
  get_d("scaler_q_high", c.scaler_q_high);
  c.validate();
  return c;
}

/// Field names accepted in config files and as --key overrides.
inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  const Json j = to_json(TrainConfig{});
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  return keys;
}

namespace detail {

inline void set_typed(Json& j, const std::string& key, const std::string& value) {
  if (!j.contains(key)) throw ConfigError("unknown config field '" + key + "'");
  const Json& cur = j.at(key);
  try {
    std::size_t pos = 0;
    if (cur.is_number_unsigned()) {
      if (!value.empty() && value.front() == '-') throw ConfigError("negative value for '" + key + "'");
      j[key] = std::stoull(value, &pos);
    } else if (cur.is_number()) {
      j[key] = std::stod(value, &pos);
    } else {
      j[key] = value;
      pos = value.size();
    }
    if (pos != value.size()) throw ConfigError("cannot parse '" + value + "' for field '" + key + "'");
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse '" + value + "' for field '" + key + "'");
  }
}

}  // namespace detail

/// Applies textual `--key value` overrides, each typed after its field. The
/// result is validated once, after every override is in place.
inline TrainConfig apply_overrides(const TrainConfig& c, const std::vector<std::pair<std::string, std::string>>& kv) {
  Json j = to_json(c);
  for (const auto& [key, value] : kv) detail::set_typed(j, key, value);
  return config_from_json(j);
}

inline TrainConfig apply_override(const TrainConfig& c, const std::string& key, const std::string& value) {
  return apply_overrides(c, {{key, value}});
}

inline Json column_mapping_to_json(const ColumnMapping& m) {
  return Json{{"src", m.src}, {"dst", m.dst}, {"label", m.label}, {"family", m.family}, {"features", m.features}};
}

inline ColumnMapping column_mapping_from_json(const Json& j) {
  ColumnMapping m;
  try {
    if (j.contains("src")) m.src = j.at("src").get<std::string>();
    if (j.contains("dst")) m.dst = j.at("dst").get<std::string>();
    if (j.contains("label")) m.label = j.at("label").get<std::string>();
    if (j.contains("family")) m.family = j.at("family").get<std::string>();
    if (j.contains("features")) m.features = j.at("features").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad column mapping: ") + e.what());
  }
  if (m.features.empty()) throw ConfigError("column mapping lists no feature columns");
  return m;
}

/// A config file: TrainConfig fields plus an optional "columns" mapping.
struct ConfigFile {
  TrainConfig train;
  ColumnMapping columns;
};

/// Config file contents with `--key value` overrides layered on top; the
/// merged result is validated as a whole.
inline ConfigFile load_config_file(const std::string& path,
                                   const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  Json j = Json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");
  }
  ConfigFile f;
  if (j.contains("columns")) {
    f.columns = column_mapping_from_json(j.at("columns"));
    j.erase("columns");
  }
  Json merged = to_json(TrainConfig{});
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!merged.contains(it.key())) throw ConfigError("unknown config field '" + it.key() + "'");
    merged[it.key()] = it.value();
  }
  for (const auto& [key, value] : overrides) detail::set_typed(merged, key, value);
  f.train = config_from_json(merged);
  return f;
}

}  // namespace feae
