// feae: command-line front end.
//
//   feae synth  --preset desk --seed 7 --out flows.csv
//   feae train  --data flows.csv --seed 7 --model model.json --metrics metrics.json
//   feae eval   --model model.json --data test.csv
//   feae embed  --model model.json --data flows.csv --out emb.csv
//   feae sweep  --synthetic desk --seed 7 --ks 0,1,2,4 --repeats 3 --out sweep.csv
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "feae/feae.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file (TrainConfig fields, optional \"columns\")");
  for (const auto& key : feae::config_keys())
    cmd->add_option("--" + key, opts.overrides[key], "override config field '" + key + "'");
}

feae::ConfigFile resolve_config(const CLI::App* cmd, const ConfigOptions& opts) {
  std::vector<std::pair<std::string, std::string>> given;
  for (const auto& [key, value] : opts.overrides)
    if (cmd->count("--" + key) > 0) given.emplace_back(key, value);
  return feae::load_config_file(opts.config_path, given);
}

feae::FlowDataset load_input(const std::string& data_path, const std::string& synthetic, std::uint64_t seed,
                             const feae::ColumnMapping& columns) {
  if (!data_path.empty() && !synthetic.empty()) throw feae::ConfigError("give either --data or --synthetic, not both");
  if (!data_path.empty()) return feae::load_flows(data_path, columns);
  if (!synthetic.empty())
    return feae::generate_synthetic(feae::synthetic_preset(synthetic, feae::derive_seed(seed, "synthetic-data")));
  throw feae::ConfigError("one of --data or --synthetic is required");
}

std::vector<std::uint64_t> parse_k_list(const std::string& s) {
  std::vector<std::uint64_t> ks;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(',', start), s.size());
    const auto tok = s.substr(start, end - start);
    try {
      std::size_t pos = 0;
      if (tok.empty() || tok.front() == '-') throw std::invalid_argument(tok);
      ks.push_back(std::stoull(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw feae::ConfigError("bad k list entry '" + tok + "'");
    }
    start = end + 1;
  }
  return ks;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot self-supervised GNN detector for malicious network flows"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic flow dataset");
  std::string synth_preset = "desk", synth_out;
  std::uint64_t synth_seed = 0;
  synth->add_option("--preset", synth_preset, "desk | cse_like | unsw_like")->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")->required();
  synth->add_option("--out", synth_out, "output CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "train on a dataset and report test metrics");
  ConfigOptions train_cfg;
  add_config_options(train, train_cfg);
  std::string train_data, train_synth, train_model, train_metrics, train_embed;
  bool train_timing = false;
  train->add_option("--data", train_data, "flow CSV");
  train->add_option("--synthetic", train_synth, "synthetic preset instead of a CSV");
  train->add_option("--model", train_model, "output model file")->required();
  train->add_option("--metrics", train_metrics, "output metrics report (default: stdout)");
  train->add_option("--embed", train_embed, "export training-edge embeddings to this CSV");
  train->add_flag("--timing", train_timing, "include runtime_seconds in the metrics report");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a saved model on a labeled dataset");
  std::string eval_model, eval_data, eval_metrics;
  eval->add_option("--model", eval_model, "model file")->required();
  eval->add_option("--data", eval_data, "flow CSV")->required();
  eval->add_option("--metrics", eval_metrics, "output metrics report (default: stdout)");

  // embed
  auto* embed = app.add_subcommand("embed", "export edge embeddings of a dataset");
  std::string embed_model, embed_data, embed_out;
  embed->add_option("--model", embed_model, "model file")->required();
  embed->add_option("--data", embed_data, "flow CSV")->required();
  embed->add_option("--out", embed_out, "output CSV")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "macro F1 and precision as a function of k");
  ConfigOptions sweep_cfg;
  add_config_options(sweep, sweep_cfg);
  std::string sweep_data, sweep_synth, sweep_out, sweep_ks = "0,1,2,4";
  std::size_t sweep_repeats = 1;
  sweep->add_option("--data", sweep_data, "flow CSV");
  sweep->add_option("--synthetic", sweep_synth, "synthetic preset instead of a CSV");
  sweep->add_option("--ks", sweep_ks, "comma-separated k values")->capture_default_str();
  sweep->add_option("--repeats", sweep_repeats, "repeats per k")->capture_default_str();
  sweep->add_option("--out", sweep_out, "output table CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth) {
      const auto ds = feae::generate_synthetic(feae::synthetic_preset(synth_preset, synth_seed));
      feae::write_flows(synth_out, ds, feae::ColumnMapping{});
      std::cerr << "wrote " << ds.size() << " flows to " << synth_out << "\n";
    } else if (*train) {
      if (train->count("--seed") == 0) throw feae::ConfigError("--seed is required for train");
      const auto cf = resolve_config(train, train_cfg);
      const auto data = load_input(train_data, train_synth, cf.train.seed, cf.columns);
      const auto res = feae::run_pipeline(cf.train, data);
      feae::save_model(train_model, res.model);
      const auto report = feae::metrics_to_json(res.metrics, train_timing).dump(2) + "\n";
      if (train_metrics.empty()) std::cout << report;
      else feae::write_text_file(train_metrics, report);
      if (!train_embed.empty())
        feae::export_embeddings(train_embed, res.train_embeddings, feae::truth_labels(res.train_graph),
                                res.selection.mal_mask(res.train_graph.num_edges()));
      std::cerr << "encoder epochs " << res.history.encoder.size() << " (best " << res.history.best_encoder_epoch
                << "), decoder epochs " << res.history.decoder.size() << ", macro F1 " << res.metrics.macro_f1
                << ", runtime " << res.metrics.runtime_seconds << " s\n";
    } else if (*eval) {
      const auto model = feae::load_model(eval_model);
      const auto data = feae::load_flows(eval_data, feae::ColumnMapping{.features = model.schema});
      const auto t0 = std::chrono::steady_clock::now();
      const auto pred = feae::predict(model, data);
      auto metrics = feae::evaluate(pred.labels, feae::truth_labels(pred.graph));
      metrics.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto report = feae::metrics_to_json(metrics, false).dump(2) + "\n";
      if (eval_metrics.empty()) std::cout << report;
      else feae::write_text_file(eval_metrics, report);
    } else if (*embed) {
      const auto model = feae::load_model(embed_model);
      const auto data = feae::load_flows(embed_data, feae::ColumnMapping{.features = model.schema});
      const auto pred = feae::predict(model, data);
      feae::export_embeddings(embed_out, pred.embeddings, feae::truth_labels(pred.graph), {});
      std::cerr << "wrote " << pred.embeddings.rows() << " embeddings to " << embed_out << "\n";
    } else if (*sweep) {
      const auto cf = resolve_config(sweep, sweep_cfg);
      const auto data = load_input(sweep_data, sweep_synth, cf.train.seed, cf.columns);
      const auto rows = feae::k_sweep(cf.train, data, parse_k_list(sweep_ks), sweep_repeats);
      const auto table = feae::sweep_table_csv(rows);
      if (sweep_out.empty()) std::cout << table;
      else feae::write_text_file(sweep_out, table);
    }
  } catch (const feae::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const feae::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const feae::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
