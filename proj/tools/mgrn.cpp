#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <mgrn/checkpoint.hpp>
#include <mgrn/eval.hpp>
#include <mgrn/gradsuite.hpp>
#include <mgrn/pipeline.hpp>
#include <mgrn/synth.hpp>

namespace {

// Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure,
// 4 gradcheck failure.
int exit_code_for(mgrn::Errc c) {
  switch (c) {
    case mgrn::Errc::invalid_config:
    case mgrn::Errc::overlapping_ranges:
    case mgrn::Errc::invalid_q:
      return 1;
    case mgrn::Errc::non_finite:
      return 3;
    default:
      return 2;
  }
}

mgrn::SynthConfig load_synth_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(mgrn::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    mgrn::fail(mgrn::Errc::invalid_config, path + " is not valid JSON: " + e.what());
  }
  return mgrn::synth_config_from_json(j);
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  mgrn::SynthConfig cfg;
  if (!config_path.empty()) cfg = load_synth_config(config_path);
  const mgrn::SynthResult res = mgrn::synth_generate(cfg, out_dir);
  nlohmann::json files;
  for (const auto& [name, path] : res.files) files[name] = path;
  print_json({{"out_dir", out_dir},
              {"n", cfg.n},
              {"d", cfg.d},
              {"days", cfg.days},
              {"truth_graph", cfg.truth_graph},
              {"seed", cfg.seed},
              {"files", files}});
  return 0;
}

// Shared data preparation: load prices/index/news, split, filter the
// universe, aggregate features, and build the configured graphs.
struct PreparedRun {
  mgrn::PriceSeries ps;
  mgrn::TradingCalendar cal;
  mgrn::StockUniverse universe{std::vector<std::string>{"_"}};
  mgrn::SplitDays days;
  std::vector<mgrn::Matrix> x_days;
  std::vector<mgrn::RelationGraph> graphs;
};

PreparedRun prepare_run(const mgrn::RunConfig& cfg) {
  PreparedRun pr;
  pr.ps = mgrn::load_price_series(cfg.prices_path, cfg.index_path);
  std::vector<mgrn::Date> dates;
  for (const auto& [date, value] : pr.ps.index) dates.push_back(date);
  pr.cal = mgrn::TradingCalendar(std::move(dates));

  std::vector<std::string> tickers;
  for (const auto& [ticker, series] : pr.ps.close) tickers.push_back(ticker);
  std::vector<mgrn::NewsRecord> news =
      mgrn::load_news(cfg.news_path, mgrn::StockUniverse(tickers), nullptr, cfg.model.d);

  pr.days = mgrn::split_dataset(pr.cal, cfg.splits);
  pr.universe = mgrn::select_universe(pr.ps, news, pr.cal, pr.days, cfg);

  std::vector<mgrn::NewsRecord> kept;
  for (mgrn::NewsRecord& rec : news)
    if (pr.universe.contains(rec.ticker)) kept.push_back(std::move(rec));
  std::vector<mgrn::DailyFeatures> daily =
      mgrn::aggregate_daily(kept, pr.universe, pr.cal, cfg.model.d);
  pr.x_days.reserve(daily.size());
  for (mgrn::DailyFeatures& f : daily) pr.x_days.push_back(std::move(f.x));

  pr.graphs = mgrn::build_run_graphs(cfg, pr.universe, pr.cal, pr.ps, pr.days.train);
  return pr;
}

int cmd_build_graphs(const std::string& config_path, std::string out_dir) {
  const mgrn::RunConfig cfg = mgrn::load_run_config(config_path);
  const PreparedRun pr = prepare_run(cfg);
  if (out_dir.empty())
    out_dir = (std::filesystem::path(cfg.out_dir) / "graphs").string();
  std::filesystem::create_directories(out_dir);

  nlohmann::json files;
  for (const mgrn::RelationGraph& g : pr.graphs) {
    const std::string csv = (std::filesystem::path(out_dir) / (g.name + ".csv")).string();
    const std::string sidecar = (std::filesystem::path(out_dir) / (g.name + ".json")).string();
    mgrn::write_graph_csv(csv, sidecar, g, pr.universe, /*normalized=*/false);
    files[g.name] = {{"csv", csv}, {"sidecar", sidecar}};
  }
  print_json({{"out_dir", out_dir},
              {"stocks", pr.universe.size()},
              {"graphs", files}});
  return 0;
}

int cmd_train(const std::string& config_path, const std::int64_t seed) {
  mgrn::RunConfig cfg = mgrn::load_run_config(config_path);
  if (seed >= 0) cfg.model.seed = static_cast<std::uint64_t>(seed);
  const mgrn::RunManifest manifest = mgrn::run_pipeline(cfg);
  nlohmann::json j = mgrn::manifest_json(manifest, cfg);
  j["run_dir"] = manifest.run_dir;
  print_json(j);
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::vector<double>& q_list) {
  mgrn::RunConfig cfg = mgrn::load_run_config(config_path);
  const mgrn::Checkpoint ck = mgrn::load_checkpoint(ckpt_path);
  cfg.model = ck.cfg;
  cfg.graphs = ck.graph_names;
  if (!q_list.empty()) cfg.q_list = q_list;

  const PreparedRun pr = prepare_run(cfg);
  const mgrn::SplitSamples test_s =
      mgrn::build_samples(pr.days.test, pr.universe, pr.cal, pr.ps, cfg.model);
  if (test_s.samples.empty()) mgrn::fail(mgrn::Errc::empty_dataset, "no usable test samples");

  const std::vector<double> p_up =
      mgrn::predict_samples(pr.x_days, pr.graphs, test_s.samples, ck.params, cfg.model);
  std::vector<mgrn::PredictionRecord> preds;
  preds.reserve(p_up.size());
  for (std::size_t i = 0; i < p_up.size(); ++i) {
    const mgrn::Sample& s = test_s.samples[i];
    preds.push_back(mgrn::make_prediction(pr.cal.day(s.day), pr.universe.ticker(s.stock),
                                          p_up[i], s.label, test_s.returns[i]));
  }

  nlohmann::json metrics = nlohmann::json::array();
  for (const double q : cfg.q_list) {
    const mgrn::BacktestReport rep = mgrn::backtest(preds, q);
    nlohmann::json entry{{"q", q},
                         {"acc", mgrn::percentile_accuracy(preds, q)},
                         {"ann_return_pct", rep.ann_return_pct}};
    if (rep.sharpe_defined)
      entry["sharpe"] = rep.sharpe;
    else
      entry["sharpe"] = nullptr;
    metrics.push_back(std::move(entry));
  }
  print_json({{"checkpoint", ckpt_path},
              {"graphs", ck.graph_names},
              {"seed", ck.seed},
              {"test_samples", preds.size()},
              {"metrics", metrics}});
  return 0;
}

int cmd_backtest(const std::string& predictions_path, const double q) {
  const std::vector<mgrn::PredictionRecord> preds =
      mgrn::load_predictions_csv(predictions_path);
  print_json(mgrn::backtest_report_json(mgrn::backtest(preds, q)));
  return 0;
}

int cmd_gradcheck(const std::string& size) {
  std::vector<mgrn::GradCheckCase> cases = mgrn::standard_gradcheck_cases();
  if (size == "tiny") cases.resize(2);
  const double tol = 1e-4;
  int failures = 0;
  for (const mgrn::GradCheckCase& c : cases) {
    const auto start = std::chrono::steady_clock::now();
    const mgrn::GradCompare cmp = mgrn::run_gradcheck_case(c);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool ok = cmp.max_rel_err < tol;
    if (!ok) ++failures;
    std::printf("%-16s max_rel_err=%.3e  param[%zu] analytic=%.6e numeric=%.6e  %.2fs  %s\n",
                c.name.c_str(), cmp.max_rel_err, cmp.worst_index, cmp.analytic_at_worst,
                cmp.numeric_at_worst, secs, ok ? "PASS" : "FAIL");
  }
  std::printf("%zu case(s), %d failure(s), tolerance %.0e\n", cases.size(), failures, tol);
  return failures == 0 ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-graph recurrent network pipeline for stock movement prediction"};
  app.require_subcommand(1);

  std::string synth_config, synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset bundle");
  synth->add_option("--config", synth_config, "Synth config JSON (defaults when omitted)");
  synth->add_option("--out", synth_out, "Output directory")->required();

  std::string bg_config, bg_out;
  CLI::App* bg = app.add_subcommand("build-graphs", "Build and export relation graphs");
  bg->add_option("--config", bg_config, "Run config JSON")->required();
  bg->add_option("--out", bg_out, "Output directory (default: <out_dir>/graphs)");

  std::string train_config;
  std::int64_t train_seed = -1;
  CLI::App* train = app.add_subcommand("train", "Train a model and write run artifacts");
  train->add_option("--config", train_config, "Run config JSON")->required();
  train->add_option("--seed", train_seed, "Override model seed")->check(CLI::NonNegativeNumber);

  std::string eval_config, eval_ckpt;
  std::vector<double> eval_q;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval->add_option("--config", eval_config, "Run config JSON")->required();
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval->add_option("--q", eval_q, "Percentile list (default: config q_list)")->delimiter(',');

  std::string bt_preds;
  double bt_q = 10.0;
  CLI::App* bt = app.add_subcommand("backtest", "Backtest an exported predictions CSV");
  bt->add_option("--predictions", bt_preds, "predictions.csv from a run")->required();
  bt->add_option("--q", bt_q, "Percentile of names traded per side");

  std::string gc_size = "full";
  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--size", gc_size, "Suite size")->check(CLI::IsMember({"tiny", "full"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_config, synth_out);
    if (*bg) return cmd_build_graphs(bg_config, bg_out);
    if (*train) return cmd_train(train_config, train_seed);
    if (*eval) return cmd_eval(eval_config, eval_ckpt, eval_q);
    if (*bt) return cmd_backtest(bt_preds, bt_q);
    if (*gc) return cmd_gradcheck(gc_size);
  } catch (const mgrn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
