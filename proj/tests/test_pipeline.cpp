#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "feae/feae.hpp"
#include "oracles.hpp"

using namespace feae;

namespace {

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.hidden = 24;
  c.decoder_hidden = 16;
  c.encoder_epochs_max = 40;
  c.encoder_patience = 40;
  c.decoder_epochs_max = 200;
  c.decoder_patience = 200;
  c.sample_frac = 1.0;
  return c;
}

FlowDataset small_dataset(std::uint64_t seed, std::size_t flows = 1500) {
  auto s = synthetic_preset("desk", seed);
  s.n_flows = flows;
  s.n_hosts = 120;
  return generate_synthetic(s);
}

FlowGraph small_graph(std::uint64_t seed, std::size_t flows) {
  auto ds = small_dataset(seed, flows);
  return build_graph(apply_scaler(ds, fit_scaler(ds)));
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("feae_test_pipeline_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir / name;
}

const RunResult& shared_run() {
  static const RunResult r = run_pipeline(small_config(3), small_dataset(3));
  return r;
}

}  // namespace

TEST(Config, JsonRoundTripAndOverrides) {
  TrainConfig c;
  c.k = 4;
  c.alpha = 0.35;
  c.ssl_mode = SslMode::DgiOnly;
  c.neighborhood = Neighborhood::In;
  c.seed = 99;
  const auto j = to_json(c);
  EXPECT_EQ(to_json(config_from_json(j)), j);
  auto o = apply_override(c, "beta", "0.5");
  EXPECT_EQ(o.beta, 0.5);
  EXPECT_EQ(apply_override(c, "decoder_mode", "supervised").decoder_mode, DecoderMode::Supervised);
  EXPECT_EQ(apply_override(c, "hidden", "64").hidden, 64u);
  EXPECT_THROW(apply_override(c, "hidden", "-3"), ConfigError);
  EXPECT_THROW(apply_override(c, "hidden", "abc"), ConfigError);
  EXPECT_THROW(apply_override(c, "nope", "1"), ConfigError);
  EXPECT_THROW(apply_override(c, "ssl_mode", "both"), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"unknown_field", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"encoder_patience", 700}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"lr_encoder", 0.0}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"alpha", -0.1}}), ConfigError);
}

TEST(Config, Defaults) {
  TrainConfig c;
  EXPECT_EQ(c.hidden, 128u);
  EXPECT_EQ(c.encoder_epochs_max, 600u);
  EXPECT_EQ(c.encoder_patience, 150u);
  EXPECT_EQ(c.decoder_epochs_max, 4000u);
  EXPECT_EQ(c.decoder_patience, 1500u);
  EXPECT_EQ(c.wd_encoder, 1e-2);
  EXPECT_EQ(c.wd_decoder, 1e-5);
  EXPECT_EQ(c.benign_frac, 0.05);
  EXPECT_EQ(c.train_frac, 0.7);
}

TEST(TrainEncoder, ZeroCoefficientsReproduceDgiOnly) {
  auto g = small_graph(1, 400);
  Rng rng(1);
  auto sel = select_few_shot(g, {1, 0.05, false}, rng);
  auto hybrid = small_config(1);
  hybrid.alpha = 0.0;
  hybrid.beta = 0.0;
  auto dgi = small_config(1);
  dgi.ssl_mode = SslMode::DgiOnly;
  auto a = train_encoder<float>(g, sel, hybrid);
  auto b = train_encoder<float>(g, sel, dgi);
  ASSERT_EQ(a.history.encoder.size(), b.history.encoder.size());
  for (std::size_t i = 0; i < a.history.encoder.size(); ++i) {
    EXPECT_EQ(a.history.encoder[i].l_dgi, b.history.encoder[i].l_dgi);
    EXPECT_EQ(a.history.encoder[i].l_total, b.history.encoder[i].l_total);
  }
  EXPECT_EQ(a.encoder.W_agg.value, b.encoder.W_agg.value);
  EXPECT_EQ(a.encoder.W_edge.value, b.encoder.W_edge.value);
  EXPECT_EQ(a.ssl.W_disc.value, b.ssl.W_disc.value);
}

TEST(TrainEncoder, ContrastiveLossStartsAtLn2AndDrops) {
  auto g = small_graph(2, 200);
  Rng rng(2);
  auto sel = select_few_shot(g, {1, 0.05, false}, rng);
  TrainConfig c;
  c.seed = 2;
  c.encoder_epochs_max = 100;
  c.encoder_patience = 100;
  auto out = train_encoder<float>(g, sel, c);
  ASSERT_FALSE(out.history.encoder.empty());
  const double first = out.history.encoder.front().l_dgi;
  EXPECT_NEAR(first, std::log(2.0), 0.05);
  double best = first;
  for (const auto& lb : out.history.encoder) best = std::min(best, lb.l_dgi);
  EXPECT_LE(best, 0.8 * first);
}

TEST(TrainEncoder, DeterministicHistory) {
  auto g = small_graph(4, 300);
  Rng r1(4), r2(4);
  auto s1 = select_few_shot(g, {1, 0.05, false}, r1);
  auto s2 = select_few_shot(g, {1, 0.05, false}, r2);
  auto c = small_config(4);
  c.augmentation = "aug1";
  auto a = train_encoder<float>(g, s1, c);
  auto b = train_encoder<float>(g, s2, c);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.encoder.W_agg.value, b.encoder.W_agg.value);
}

TEST(TrainEncoder, AllAugmentationPresetsTrain) {
  auto g = small_graph(5, 300);
  Rng rng(5);
  auto sel = select_few_shot(g, {1, 0.05, false}, rng);
  for (const char* aug : {"dgi_default", "aug1", "aug2"}) {
    auto c = small_config(5);
    c.encoder_epochs_max = 10;
    c.encoder_patience = 10;
    c.augmentation = aug;
    auto out = train_encoder<float>(g, sel, c);
    EXPECT_EQ(out.history.encoder.size(), 10u) << aug;
  }
}

TEST(TrainDecoder, SeparableToyReachesLowLoss) {
  const std::size_t d = 8;
  Matrix<float> H(40, d);
  FewShotSelection sel;
  for (std::uint32_t r = 0; r < 40; ++r) {
    const bool mal = r % 4 == 0;
    for (std::size_t c = 0; c < d; ++c) H(r, c) = mal ? 1.0f : -1.0f;
    sel.edges.push_back(r);
    sel.labels.push_back(mal ? 1 : 0);
    (mal ? sel.mal_edges : sel.benign_edges).push_back(r);
  }
  TrainConfig c;
  c.seed = 1;
  auto out = train_decoder<float>(H, sel, c);
  ASSERT_FALSE(out.history.decoder.empty());
  EXPECT_LT(out.history.decoder[out.history.best_decoder_epoch], 1e-2);
  EXPECT_EQ(out.labeled_rows, 40u);
}

TEST(TrainDecoder, EmptySelectionIsRejected) {
  TrainConfig c;
  EXPECT_THROW(train_decoder<float>(Matrix<float>(5, 3), FewShotSelection{}, c), PreconditionError);
  c.decoder_mode = DecoderMode::Supervised;
  EXPECT_THROW(train_decoder<float>(Matrix<float>(5, 3), FewShotSelection{}, c), PreconditionError);
}

TEST(Pipeline, DecoderRowsByMode) {
  const auto& r = shared_run();
  EXPECT_EQ(r.decoder_rows, r.selection.size());
  auto c = small_config(3);
  c.decoder_mode = DecoderMode::Supervised;
  c.encoder_epochs_max = 5;
  c.encoder_patience = 5;
  c.decoder_epochs_max = 5;
  c.decoder_patience = 5;
  auto s = run_pipeline(c, small_dataset(3));
  EXPECT_EQ(s.decoder_rows, s.train_graph.num_edges());
}

TEST(Pipeline, DecoderLeavesEncoderUntouched) {
  const auto& r = shared_run();
  const auto before_agg = r.model.encoder.W_agg.value;
  const auto before_disc = r.model.ssl.W_disc.value;
  auto dec = train_decoder<float>(r.train_embeddings, r.selection, r.model.config);
  EXPECT_EQ(r.model.encoder.W_agg.value, before_agg);
  EXPECT_EQ(r.model.ssl.W_disc.value, before_disc);
  EXPECT_EQ(embed_edges(r.train_graph, r.model.encoder), r.train_embeddings);
}

TEST(Pipeline, SameSeedSameReport) {
  const auto& a = shared_run();
  auto b = run_pipeline(small_config(3), small_dataset(3));
  EXPECT_EQ(metrics_to_json(a.metrics, false).dump(), metrics_to_json(b.metrics, false).dump());
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
}

TEST(Pipeline, HygieneAndMetricRanges) {
  const auto& r = shared_run();
  EXPECT_EQ(r.train_graph.num_edges() + r.test_graph.num_edges(), 1500u);
  for (auto e : r.selection.edges) EXPECT_LT(e, r.train_graph.num_edges());
  EXPECT_EQ(r.test_probs.size(), r.test_graph.num_edges());
  for (double v : {r.metrics.macro_f1, r.metrics.attack_precision, r.metrics.benign.recall}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_LE(r.history.encoder.size(), r.model.config.encoder_epochs_max);
  EXPECT_LE(r.history.decoder.size(), r.model.config.decoder_epochs_max);
  auto truth = truth_labels(r.test_graph);
  auto recomputed = evaluate(classify(r.test_probs, 0.5), truth);
  EXPECT_EQ(recomputed.confusion, r.metrics.confusion);
}

TEST(Pipeline, KZeroRunCompletes) {
  auto c = small_config(6);
  c.k = 0;
  auto r = run_pipeline(c, small_dataset(6));
  EXPECT_TRUE(r.selection.mal_edges.empty());
  for (const auto& lb : r.history.encoder) EXPECT_EQ(lb.l_few, 0.0);
}

TEST(Model, SaveLoadSaveIsByteIdentical) {
  const auto& r = shared_run();
  const auto p1 = temp_path("m1.json"), p2 = temp_path("m2.json");
  save_model(p1.string(), r.model);
  auto loaded = load_model(p1.string());
  save_model(p2.string(), loaded);
  std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(loaded.encoder.W_edge.value, r.model.encoder.W_edge.value);
  EXPECT_EQ(loaded.decoder.b2.value, r.model.decoder.b2.value);
}

TEST(Model, TruncatedOrMismatchedFileIsFormatError) {
  const auto text = serialize_model(shared_run().model);
  EXPECT_THROW(deserialize_model(text.substr(0, text.size() / 2)), FormatError);
  auto j = Json::parse(text);
  j["version"] = 99;
  EXPECT_THROW(deserialize_model(j.dump()), FormatError);
  j = Json::parse(text);
  j["params"]["W_agg"]["rows"] = 3;
  EXPECT_THROW(deserialize_model(j.dump()), FormatError);
  j = Json::parse(text);
  j["params"].erase("dec_W2");
  EXPECT_THROW(deserialize_model(j.dump()), FormatError);
  EXPECT_THROW(load_model(temp_path("missing.json").string()), DataError);
}

TEST(Model, LoadedModelPredictsIdentically) {
  const auto& r = shared_run();
  auto loaded = deserialize_model(serialize_model(r.model));
  auto raw = small_dataset(8, 300);
  auto a = predict(r.model, raw);
  auto b = predict(loaded, raw);
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Embeddings, ExportRowsFlagsAndValues) {
  const auto& r = shared_run();
  std::ostringstream out;
  export_embeddings(out, r.train_embeddings, truth_labels(r.train_graph),
                    r.selection.mal_mask(r.train_graph.num_edges()));
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("h0,", 0), 0u);
  std::size_t rows = 0, flagged = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    ASSERT_EQ(cells.size(), r.train_embeddings.cols() + 2);
    for (std::size_t c = 0; c < r.train_embeddings.cols(); ++c)
      ASSERT_EQ(std::stof(cells[c]), r.train_embeddings(rows, c));
    flagged += cells.back() == "1";
    ++rows;
  }
  EXPECT_EQ(rows, r.train_embeddings.rows());
  EXPECT_EQ(flagged, r.selection.mal_edges.size());
  std::ostringstream sink;
  EXPECT_THROW(export_embeddings(sink, r.train_embeddings, {}, {}), PreconditionError);
}

TEST(Embeddings, FiveThousandRowExport) {
  Matrix<float> H(5000, 4, 0.25f);
  std::ostringstream out;
  export_embeddings(out, H, std::vector<Label>(5000, Label::Benign), {});
  std::size_t lines = 0;
  for (char ch : out.str()) lines += ch == '\n';
  EXPECT_EQ(lines, 5001u);
}

TEST(Sweep, TableHasOneRowPerKAndRepeat) {
  auto c = small_config(7);
  c.encoder_epochs_max = 5;
  c.encoder_patience = 5;
  c.decoder_epochs_max = 20;
  c.decoder_patience = 20;
  auto rows = k_sweep(c, small_dataset(7, 800), {0, 1}, 2);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].seed, rows[1].seed);
  EXPECT_NE(rows[0].seed, rows[2].seed);
  auto csv = sweep_table_csv(rows);
  EXPECT_EQ(csv.rfind("k,repeat,seed,macro_f1,attack_precision\n", 0), 0u);
}

TEST(Separation, RatioOnHandMadeEmbeddings) {
  Matrix<double> H{{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {5, 0}};
  std::vector<Label> t{Label::Benign, Label::Benign, Label::Benign, Label::Benign, Label::Attack};
  EXPECT_DOUBLE_EQ(separation_ratio(H, t), 5.0);
  EXPECT_TRUE(std::isnan(separation_ratio(H, std::vector<Label>(5, Label::Benign))));
}
