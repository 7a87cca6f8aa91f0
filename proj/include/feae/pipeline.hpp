#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "feae/config.hpp"
#include "feae/encoder.hpp"
#include "feae/fewshot.hpp"
#include "feae/flow_data.hpp"
#include "feae/graph.hpp"
#include "feae/metrics.hpp"
#include "feae/optim.hpp"
#include "feae/ssl.hpp"

namespace feae {

struct TrainHistory {
  std::vector<LossBreakdown> encoder;
  std::vector<double> decoder;
  std::size_t best_encoder_epoch = 0;
  std::size_t best_decoder_epoch = 0;
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

// ---------------------------------------------------------------------------
// Encoder + SSL training.

template <class T>
struct ObjectiveTerms {
  Var<T> total;
  Var<T> dgi;
  Var<T> few;
  Var<T> nonfew;

  LossBreakdown values() const {
    return {double(dgi.value()(0, 0)), double(few.value()(0, 0)), double(nonfew.value()(0, 0)),
            double(total.value()(0, 0))};
  }
};

struct ObjectiveOptions {
  SslMode mode = SslMode::Hybrid;
  double alpha = 0.2;
  double beta = 0.8;
  Reduction reduction = Reduction::Mean;
  Neighborhood neighborhood = Neighborhood::Both;
};

/// Records the full self-supervised objective for one (positive, negative)
/// graph pair. Reconstruction runs on the positive graph; `roles` is per
/// positive edge. In DgiOnly mode the reconstruction terms are still recorded
/// for reporting but do not enter the total. Every argument passed by
/// reference must outlive the tape's backward pass.
template <class T>
ObjectiveTerms<T> feae_objective(Tape<T>& tape, const FlowGraph& pos, const Matrix<T>& X_pos,
                                 const FlowGraph& neg, const Matrix<T>& X_neg, EncoderParams<T>& enc,
                                 SslParams<T>& ssl, const std::vector<RowRole>& roles,
                                 const ObjectiveOptions& opt) {
  auto H = encode(pos, tape.constant(X_pos), enc, opt.neighborhood);
  auto H_neg = encode(neg, tape.constant(X_neg), enc, opt.neighborhood);
  auto s = readout(H);
  auto W_disc = tape.param(ssl.W_disc);
  auto l_dgi = dgi_loss_logits(discriminate_logits(H, s, W_disc), discriminate_logits(H_neg, s, W_disc));
  auto X_hat = reconstruct(H, tape.param(ssl.W_rec));
  auto [l_few, l_nonfew] = recon_losses(X_hat, X_pos, roles, opt.reduction);
  if (opt.mode == SslMode::DgiOnly) return {l_dgi, l_dgi, l_few, l_nonfew};
  return {feae_loss(l_dgi, l_few, l_nonfew, T(opt.alpha), T(opt.beta)), l_dgi, l_few, l_nonfew};
}

/// Per-edge roles for an augmented positive graph: inserted edges are
/// skipped, surviving originals are Few iff they are in `mal_mask`.
inline std::vector<RowRole> positive_roles(const FlowGraph& pos, const std::vector<bool>& mal_mask) {
  std::vector<RowRole> roles(pos.num_edges());
  for (std::size_t e = 0; e < roles.size(); ++e) {
    const auto o = pos.origin[e];
    roles[e] = o < 0 ? RowRole::Skip : (mal_mask.at(std::size_t(o)) ? RowRole::Few : RowRole::NonFew);
  }
  return roles;
}

template <class T>
struct EncoderTraining {
  EncoderParams<T> encoder;
  SslParams<T> ssl;
  TrainHistory history;
};

/// Full-graph epochs of corrupt -> encode pair -> objective -> Adam, with
/// early stopping on l_total. Returns the parameters that produced the best
/// loss.
template <class T = float>
EncoderTraining<T> train_encoder(const FlowGraph& g, const FewShotSelection& sel, const TrainConfig& cfg) {
  cfg.validate();
  g.validate();
  Rng init_rng(derive_seed(cfg.seed, "encoder-init"));
  EncoderTraining<T> out{EncoderParams<T>::init(g.num_features(), cfg.hidden, init_rng),
                         SslParams<T>::init(cfg.hidden, g.num_features(), init_rng),
                         {}};
  auto enc = out.encoder;
  auto ssl = out.ssl;
  std::vector<Param<T>*> params = {&enc.W_agg, &enc.W_edge, &ssl.W_disc, &ssl.W_rec};
  const auto aug = augmentation_preset(cfg.augmentation, cfg.edge_add_ratio);
  const auto mal_mask = sel.mal_mask(g.num_edges());
  const ObjectiveOptions opt{cfg.ssl_mode, cfg.alpha, cfg.beta, cfg.recon_reduction, cfg.neighborhood};
  const AdamOptions adam{cfg.lr_encoder, cfg.wd_encoder};

  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.encoder_epochs_max; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "encoder-augment", epoch));
    const auto views = augment_pair(g, aug, rng);
    const FlowGraph& pos = views.positive;
    const FlowGraph& neg = views.negative;
    if (pos.num_edges() == 0 || neg.num_edges() == 0)
      throw PreconditionError("augmentation left no edges at epoch " + std::to_string(epoch));
    const Matrix<T> X_pos = pos.X.template cast<T>();
    const Matrix<T> X_neg = neg.X.template cast<T>();
    const auto roles = positive_roles(pos, mal_mask);

    Tape<T> tape;
    LossBreakdown lb;
    ObjectiveTerms<T> terms;
    try {
      terms = feae_objective(tape, pos, X_pos, neg, X_neg, enc, ssl, roles, opt);
      lb = terms.values();
    } catch (const NumericError& e) {
      throw NumericError("non-finite value at encoder epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(lb.l_total))
      throw NumericError("non-finite encoder loss at epoch " + std::to_string(epoch) +
                         " (l_dgi=" + std::to_string(lb.l_dgi) + ", l_few=" + std::to_string(lb.l_few) +
                         ", l_nonfew=" + std::to_string(lb.l_nonfew) + ")");
    out.history.encoder.push_back(lb);
    if (lb.l_total < best - cfg.min_delta) {
      best = lb.l_total;
      stale = 0;
      out.encoder = enc;
      out.ssl = ssl;
      out.history.best_encoder_epoch = epoch;
    } else if (++stale >= cfg.encoder_patience) {
      break;
    }
    tape.backward(terms.total);
    adam_step(params, adam);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoder training.

template <class T>
struct DecoderTraining {
  DecoderParams<T> decoder;
  TrainHistory history;
  std::size_t labeled_rows = 0;
};

/// Trains the MLP on frozen embeddings. few_shot mode uses the selected
/// edges and their few-shot labels; supervised mode uses every row of
/// `H_train` with `truth`.
template <class T = float>
DecoderTraining<T> train_decoder(const Matrix<T>& H_train, const FewShotSelection& sel, const TrainConfig& cfg,
                                 const std::vector<EdgeLabel>* truth = nullptr) {
  cfg.validate();
  std::vector<std::uint32_t> rows;
  std::vector<std::uint8_t> targets;
  if (cfg.decoder_mode == DecoderMode::Supervised) {
    if (!truth || truth->size() != H_train.rows())
      throw PreconditionError("supervised decoder training needs a label for every training edge");
    for (std::uint32_t e = 0; e < H_train.rows(); ++e) {
      rows.push_back(e);
      targets.push_back((*truth)[e].label == Label::Attack ? 1 : 0);
    }
  } else {
    rows = sel.edges;
    targets = sel.labels;
  }
  if (rows.empty()) throw PreconditionError("decoder training set is empty");

  Matrix<T> H_sub(rows.size(), H_train.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= H_train.rows()) throw DimensionError("selected edge outside the embedding matrix");
    std::copy(H_train.row(rows[i]).begin(), H_train.row(rows[i]).end(), H_sub.row(i).begin());
  }
  std::vector<std::uint32_t> local(rows.size());
  for (std::uint32_t i = 0; i < local.size(); ++i) local[i] = i;

  Rng init_rng(derive_seed(cfg.seed, "decoder-init"));
  DecoderTraining<T> out{DecoderParams<T>::init(H_train.cols(), cfg.decoder_hidden, init_rng), {}, rows.size()};
  auto dec = out.decoder;
  const AdamOptions adam{cfg.lr_decoder, cfg.wd_decoder};
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.decoder_epochs_max; ++epoch) {
    Tape<T> tape;
    auto loss = bce_with_logits(decode_logits(tape.constant(H_sub), dec), local, targets);
    const double l = double(loss.value()(0, 0));
    if (!std::isfinite(l)) throw NumericError("non-finite decoder loss at epoch " + std::to_string(epoch));
    out.history.decoder.push_back(l);
    if (l < best - cfg.min_delta) {
      best = l;
      stale = 0;
      out.decoder = dec;
      out.history.best_decoder_epoch = epoch;
    } else if (++stale >= cfg.decoder_patience) {
      break;
    }
    tape.backward(loss);
    adam_step(dec.params(), adam);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model persistence.

inline constexpr int kModelFormatVersion = 1;

struct Model {
  TrainConfig config;
  std::vector<std::string> schema;
  Scaler scaler;
  EncoderParams<float> encoder;
  SslParams<float> ssl;
  DecoderParams<float> decoder;
};

namespace detail {

inline Json matrix_to_json(const Matrix<float>& m) {
  Json data = Json::array();
  for (float v : m.data()) data.push_back(double(v));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix<float> matrix_from_json(const Json& j, std::size_t rows, std::size_t cols, const std::string& name) {
  const auto r = j.at("rows").get<std::size_t>();
  const auto c = j.at("cols").get<std::size_t>();
  if (r != rows || c != cols)
    throw FormatError("parameter " + name + " has shape " + Matrix<float>::shape_string(r, c) + ", expected " +
                      Matrix<float>::shape_string(rows, cols));
  const auto& data = j.at("data");
  if (!data.is_array() || data.size() != r * c) throw FormatError("parameter " + name + " data length mismatch");
  Matrix<float> m(r, c);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].is_number()) throw FormatError("parameter " + name + " has a non-numeric entry");
    m.data()[i] = float(data[i].get<double>());
  }
  return m;
}

}  // namespace detail

inline std::string serialize_model(const Model& m) {
  Json params = Json::object();
  auto put = [&](const Param<float>& p) { params[p.name] = detail::matrix_to_json(p.value); };
  put(m.encoder.W_agg);
  put(m.encoder.W_edge);
  put(m.ssl.W_disc);
  put(m.ssl.W_rec);
  put(m.decoder.W1);
  put(m.decoder.b1);
  put(m.decoder.W2);
  put(m.decoder.b2);
  Json j{{"format", "feae-model"},
         {"version", kModelFormatVersion},
         {"config", to_json(m.config)},
         {"schema", m.schema},
         {"scaler", Json{{"lower", m.scaler.lower}, {"upper", m.scaler.upper}}},
         {"params", std::move(params)}};
  return j.dump(1) + "\n";
}

/// Parses a model; any structural problem is a FormatError and no partial
/// model is returned.
inline Model deserialize_model(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "feae-model") throw FormatError("not a feae model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw FormatError("unsupported model format version " + std::to_string(version));
    Model m;
    try {
      m.config = config_from_json(j.at("config"));
    } catch (const ConfigError& e) {
      throw FormatError(std::string("model config: ") + e.what());
    }
    m.schema = j.at("schema").get<std::vector<std::string>>();
    m.scaler.lower = j.at("scaler").at("lower").get<std::vector<double>>();
    m.scaler.upper = j.at("scaler").at("upper").get<std::vector<double>>();
    const std::size_t d = m.schema.size();
    const std::size_t h = m.config.hidden;
    const std::size_t dh = m.config.decoder_hidden;
    if (m.scaler.lower.size() != d || m.scaler.upper.size() != d) throw FormatError("scaler length != schema length");
    const auto& p = j.at("params");
    auto get = [&](const char* name, std::size_t r, std::size_t c) {
      return Param<float>(name, detail::matrix_from_json(p.at(name), r, c, name));
    };
    m.encoder.W_agg = get("W_agg", d, h);
    m.encoder.W_edge = get("W_edge", 2 * h, h);
    m.ssl.W_disc = get("W_disc", h, h);
    m.ssl.W_rec = get("W_rec", h, d);
    m.decoder.W1 = get("dec_W1", h, dh);
    m.decoder.b1 = get("dec_b1", 1, dh);
    m.decoder.W2 = get("dec_W2", dh, 1);
    m.decoder.b2 = get("dec_b2", 1, 1);
    if (p.size() != 8) throw FormatError("model has unexpected parameters");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  out << serialize_model(m);
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

// ---------------------------------------------------------------------------
// Inference and reporting helpers.

struct Prediction {
  FlowGraph graph;
  Matrix<float> embeddings;
  std::vector<float> probs;
  std::vector<Label> labels;
};

/// Scales raw flows with the model's scaler, builds their graph and runs the
/// frozen encoder and decoder.
inline Prediction predict(const Model& m, const FlowDataset& raw) {
  if (raw.num_features() != m.schema.size())
    throw DimensionError("dataset has " + std::to_string(raw.num_features()) + " features, model expects " +
                         std::to_string(m.schema.size()));
  Prediction p;
  p.graph = build_graph(apply_scaler(raw, m.scaler));
  p.embeddings = embed_edges(p.graph, m.encoder, m.config.neighborhood);
  p.probs = decode_values(p.embeddings, m.decoder);
  p.labels = classify(p.probs, m.config.threshold);
  return p;
}

inline std::vector<Label> truth_labels(const FlowGraph& g) {
  std::vector<Label> t(g.num_edges());
  for (std::size_t e = 0; e < t.size(); ++e) t[e] = g.labels.at(e).label;
  return t;
}

/// Mean distance of attack rows to the benign centroid divided by the mean
/// distance of benign rows to it. NaN when either class is absent.
template <class T>
double separation_ratio(const Matrix<T>& H, const std::vector<Label>& truth) {
  std::vector<double> centroid(H.cols(), 0.0);
  std::size_t n_benign = 0;
  for (std::size_t r = 0; r < H.rows(); ++r) {
    if (truth[r] != Label::Benign) continue;
    ++n_benign;
    for (std::size_t c = 0; c < H.cols(); ++c) centroid[c] += double(H(r, c));
  }
  if (n_benign == 0 || n_benign == H.rows()) return std::numeric_limits<double>::quiet_NaN();
  for (auto& v : centroid) v /= double(n_benign);
  double sum_attack = 0.0, sum_benign = 0.0;
  for (std::size_t r = 0; r < H.rows(); ++r) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < H.cols(); ++c) {
      const double diff = double(H(r, c)) - centroid[c];
      d2 += diff * diff;
    }
    (truth[r] == Label::Benign ? sum_benign : sum_attack) += std::sqrt(d2);
  }
  const double mean_attack = sum_attack / double(H.rows() - n_benign);
  const double mean_benign = sum_benign / double(n_benign);
  return mean_benign > 0.0 ? mean_attack / mean_benign : std::numeric_limits<double>::infinity();
}

inline Json metrics_to_json(const MetricsReport& r, bool include_runtime) {
  auto cls = [](const ClassScores& s) {
    return Json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  };
  Json j{{"benign", cls(r.benign)},
         {"attack", cls(r.attack)},
         {"macro_f1", r.macro_f1},
         {"attack_precision", r.attack_precision},
         {"confusion", Json{{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}}};
  if (include_runtime) j["runtime_seconds"] = r.runtime_seconds;
  return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path + "'");
}

/// One row per edge: h0..h{n-1}, label (1 = attack), few_shot flag.
inline void export_embeddings(std::ostream& out, const Matrix<float>& H, const std::vector<Label>& labels,
                              const std::vector<bool>& few_shot) {
  if (labels.size() != H.rows()) throw PreconditionError("embedding export: label count != row count");
  if (!few_shot.empty() && few_shot.size() != H.rows())
    throw PreconditionError("embedding export: few-shot flag count != row count");
  for (std::size_t c = 0; c < H.cols(); ++c) out << 'h' << c << ',';
  out << "label,few_shot\n";
  char buf[32];
  for (std::size_t r = 0; r < H.rows(); ++r) {
    for (float v : H.row(r)) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, p - buf);
      out << ',';
    }
    out << (labels[r] == Label::Attack ? 1 : 0) << ',' << (!few_shot.empty() && few_shot[r] ? 1 : 0) << '\n';
  }
}

inline void export_embeddings(const std::string& path, const Matrix<float>& H, const std::vector<Label>& labels,
                              const std::vector<bool>& few_shot) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding file '" + path + "'");
  export_embeddings(out, H, labels, few_shot);
  if (!out) throw DataError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// End-to-end pipeline.

struct DataSource {
  std::optional<std::string> path;           // flow CSV
  ColumnMapping columns;                     // used with `path`
  std::optional<SyntheticConfig> synthetic;  // used when `path` is empty
};

struct RunResult {
  MetricsReport metrics;
  Model model;
  TrainHistory history;
  FewShotSelection selection;
  FlowGraph train_graph;
  FlowGraph test_graph;
  Matrix<float> train_embeddings;
  Matrix<float> test_embeddings;
  std::vector<float> test_probs;
  double separation_ratio = 0.0;  // on test embeddings
  std::size_t decoder_rows = 0;
};

inline FlowDataset load_source(const DataSource& src) {
  if (src.path) return load_flows(*src.path, src.columns);
  if (src.synthetic) return generate_synthetic(*src.synthetic);
  throw ConfigError("no dataset path or synthetic config given");
}

/// sample -> split -> scale (fit on train) -> graphs -> few-shot selection
/// (train) -> encoder -> embeddings -> decoder -> classify test -> evaluate.
inline RunResult run_pipeline(const TrainConfig& cfg, const FlowDataset& data) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto sampled = sample_fraction(data, cfg.sample_frac, derive_seed(cfg.seed, "sample"));
  auto [train_raw, test_raw] = train_test_split(sampled, cfg.train_frac, derive_seed(cfg.seed, "split"));
  if (train_raw.records.empty() || test_raw.records.empty())
    throw DataError("train/test split left an empty side (" + std::to_string(sampled.size()) + " records)");

  RunResult r;
  r.model.config = cfg;
  r.model.schema = data.schema;
  r.model.scaler = fit_scaler(train_raw, cfg.scaler_q_low, cfg.scaler_q_high);
  r.train_graph = build_graph(apply_scaler(train_raw, r.model.scaler));
  r.test_graph = build_graph(apply_scaler(test_raw, r.model.scaler));

  Rng sel_rng(derive_seed(cfg.seed, "few-shot"));
  r.selection = select_few_shot(r.train_graph, {cfg.k, cfg.benign_frac, false}, sel_rng);

  auto enc = train_encoder<float>(r.train_graph, r.selection, cfg);
  r.model.encoder = enc.encoder;
  r.model.ssl = enc.ssl;
  r.history = enc.history;

  r.train_embeddings = embed_edges(r.train_graph, r.model.encoder, cfg.neighborhood);
  r.test_embeddings = embed_edges(r.test_graph, r.model.encoder, cfg.neighborhood);

  auto dec = train_decoder<float>(r.train_embeddings, r.selection, cfg, &r.train_graph.labels);
  r.model.decoder = dec.decoder;
  r.history.decoder = dec.history.decoder;
  r.history.best_decoder_epoch = dec.history.best_decoder_epoch;
  r.decoder_rows = dec.labeled_rows;

  r.test_probs = decode_values(r.test_embeddings, r.model.decoder);
  const auto truth = truth_labels(r.test_graph);
  r.metrics = evaluate(classify(r.test_probs, cfg.threshold), truth);
  r.separation_ratio = separation_ratio(r.test_embeddings, truth);
  r.metrics.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline RunResult run_pipeline(const TrainConfig& cfg, const DataSource& src) {
  return run_pipeline(cfg, load_source(src));
}

struct SweepRow {
  std::uint64_t k = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double macro_f1 = 0.0;
  double attack_precision = 0.0;
};

/// Runs the pipeline for every k and repeat. Repeat r uses the derived seed
/// derive_seed(cfg.seed, "sweep", r) for all k, so the k values share data
/// splits within a repeat.
inline std::vector<SweepRow> k_sweep(const TrainConfig& cfg, const FlowDataset& data,
                                     const std::vector<std::uint64_t>& ks, std::size_t repeats = 1) {
  std::vector<SweepRow> rows;
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    for (auto k : ks) {
      TrainConfig c = cfg;
      c.k = k;
      c.seed = derive_seed(cfg.seed, "sweep", rep);
      const auto res = run_pipeline(c, data);
      rows.push_back({k, rep, c.seed, res.metrics.macro_f1, res.metrics.attack_precision});
    }
  }
  return rows;
}

inline std::string sweep_table_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "k,repeat,seed,macro_f1,attack_precision\n";
  for (const auto& r : rows)
    out << r.k << ',' << r.repeat << ',' << r.seed << ',' << detail::format_double(r.macro_f1) << ','
        << detail::format_double(r.attack_precision) << '\n';
  return out.str();
}

}  // namespace feae
