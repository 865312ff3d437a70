#pragma once

// End-to-end orchestration: config, universe filtering, dataset splitting,
// and the aggregate -> graphs -> train -> evaluate -> backtest run.
//
// Split semantics: a calendar day belongs to the split whose [start, end]
// range contains it (boundary day -> the earlier split via its end date).
// Feature windows may reach back across a split start; labels never leave
// their split, since a sample is usable only when day+delta_t is still
// inside the same range. The correlation graph sees train-range returns
// only.
//
// Every file a run writes is reproducible byte for byte from (config, seed);
// the run directory name carries the only timestamp.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgrn/checkpoint.hpp"
#include "mgrn/csv.hpp"
#include "mgrn/dates.hpp"
#include "mgrn/error.hpp"
#include "mgrn/eval.hpp"
#include "mgrn/graph.hpp"
#include "mgrn/model.hpp"
#include "mgrn/news.hpp"
#include "mgrn/train.hpp"
#include "mgrn/universe.hpp"

namespace mgrn {

// ---------------------------------------------------------------------------
// Configuration

struct DateRange {
  Date start;
  Date end;
  bool contains(const Date& d) const { return start <= d && d <= end; }
};

struct SplitRanges {
  DateRange train, dev, test;
};

struct RunConfig {
  std::string news_path, prices_path, index_path, sector_path, supply_path;
  std::string out_dir = ".";
  std::string run_dir;  // when set, used verbatim instead of run-<timestamp>-<seed>
  double min_avg_news = 0.0;
  bool drop_delisted = true;
  SplitRanges splits;
  ModelConfig model;
  std::vector<std::string> graphs{"sector", "supply-chain", "correlation"};
  int sector_level = 1;
  std::vector<double> q_list{100.0, 50.0, 20.0, 10.0, 2.0};
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::vector<std::string>& known,
                                const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      fail(Errc::invalid_config, "unknown key '" + key + "' in " + where);
}

inline DateRange range_from_json(const nlohmann::json& j, const std::string& name) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_string() || !j[1].is_string())
    fail(Errc::invalid_config, "split '" + name + "' must be [\"start\", \"end\"]");
  DateRange r{Date::parse(j[0].get<std::string>()), Date::parse(j[1].get<std::string>())};
  return r;
}

inline ModelConfig run_model_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{
      "d",   "gcn_dims", "attn_w", "lstm_dims",  "T",    "delta_t",
      "lr",  "beta1",    "beta2",  "eps",        "epochs", "batch_size",
      "seed"};
  reject_unknown_keys(j, known, "model config");
  ModelConfig cfg;
  cfg.d = j.at("d").get<std::size_t>();  // the one field without a default
  cfg.gcn_dims = j.value("gcn_dims", cfg.gcn_dims);
  cfg.attn_w = j.value("attn_w", cfg.attn_w);
  cfg.lstm_dims = j.value("lstm_dims", cfg.lstm_dims);
  cfg.T = j.value("T", cfg.T);
  cfg.delta_t = j.value("delta_t", cfg.delta_t);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.eps = j.value("eps", cfg.eps);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(Errc::invalid_config, "run config must be a JSON object");
  static const std::vector<std::string> known{
      "news",        "prices",       "index",  "sector", "supply",
      "out_dir",     "run_dir",      "min_avg_news", "drop_delisted",
      "splits",      "model",        "graphs", "sector_level", "q_list"};
  detail::reject_unknown_keys(j, known, "run config");

  RunConfig cfg;
  try {
    cfg.news_path = j.at("news").get<std::string>();
    cfg.prices_path = j.at("prices").get<std::string>();
    cfg.index_path = j.at("index").get<std::string>();
    cfg.sector_path = j.value("sector", std::string());
    cfg.supply_path = j.value("supply", std::string());
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.run_dir = j.value("run_dir", cfg.run_dir);
    cfg.min_avg_news = j.value("min_avg_news", cfg.min_avg_news);
    cfg.drop_delisted = j.value("drop_delisted", cfg.drop_delisted);

    const nlohmann::json& sp = j.at("splits");
    detail::reject_unknown_keys(sp, {"train", "dev", "test"}, "splits");
    cfg.splits.train = detail::range_from_json(sp.at("train"), "train");
    cfg.splits.dev = detail::range_from_json(sp.at("dev"), "dev");
    cfg.splits.test = detail::range_from_json(sp.at("test"), "test");

    cfg.model = detail::run_model_from_json(j.at("model"));
    cfg.graphs = j.value("graphs", cfg.graphs);
    cfg.sector_level = j.value("sector_level", cfg.sector_level);
    cfg.q_list = j.value("q_list", cfg.q_list);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_config, std::string("run config: ") + e.what());
  }
  if (cfg.graphs.empty()) fail(Errc::invalid_config, "graph list must not be empty");
  if (cfg.sector_level < 1 || cfg.sector_level > 4)
    fail(Errc::invalid_config, "sector_level must be 1..4");
  if (cfg.q_list.empty()) fail(Errc::invalid_config, "q_list must not be empty");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_config, path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

// Semantic configuration only: output locations are execution details and
// stay out, so identical runs yield byte-identical manifests.
inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  return nlohmann::json{
      {"news", cfg.news_path},
      {"prices", cfg.prices_path},
      {"index", cfg.index_path},
      {"sector", cfg.sector_path},
      {"supply", cfg.supply_path},
      {"min_avg_news", cfg.min_avg_news},
      {"drop_delisted", cfg.drop_delisted},
      {"splits",
       {{"train", {cfg.splits.train.start.str(), cfg.splits.train.end.str()}},
        {"dev", {cfg.splits.dev.start.str(), cfg.splits.dev.end.str()}},
        {"test", {cfg.splits.test.start.str(), cfg.splits.test.end.str()}}}},
      {"model", detail::model_config_to_json(cfg.model)},
      {"graphs", cfg.graphs},
      {"sector_level", cfg.sector_level},
      {"q_list", cfg.q_list}};
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitDays {
  std::vector<std::size_t> train, dev, test;  // calendar day indices, ascending
};

inline SplitDays split_dataset(const TradingCalendar& cal, const SplitRanges& r) {
  const std::pair<const char*, const DateRange*> named[] = {
      {"train", &r.train}, {"dev", &r.dev}, {"test", &r.test}};
  for (const auto& [name, range] : named)
    if (range->end < range->start)
      fail(Errc::overlapping_ranges, std::string(name) + " range ends before it starts");
  if (!(r.train.end < r.dev.start) || !(r.dev.end < r.test.start))
    fail(Errc::overlapping_ranges, "split ranges must be disjoint and ordered train < dev < test");

  SplitDays days;
  for (std::size_t i = 0; i < cal.size(); ++i) {
    const Date& d = cal.day(i);
    if (r.train.contains(d))
      days.train.push_back(i);
    else if (r.dev.contains(d))
      days.dev.push_back(i);
    else if (r.test.contains(d))
      days.test.push_back(i);
  }
  if (days.train.empty() || days.dev.empty() || days.test.empty())
    fail(Errc::overlapping_ranges, "every split range must contain at least one trading day");
  return days;
}

// ---------------------------------------------------------------------------
// Sample construction

struct SplitSamples {
  std::vector<Sample> samples;
  std::vector<double> returns;  // market-adjusted, aligned with samples
  std::size_t data_points = 0;  // n_stocks x trading days in range
  std::size_t skipped_missing_price = 0;
};

// A (stock, day) becomes a sample when the look-back window exists
// (day >= T) and the label day day+delta_t is still inside the same split.
inline SplitSamples build_samples(const std::vector<std::size_t>& split_days,
                                  const StockUniverse& universe, const TradingCalendar& cal,
                                  const PriceSeries& ps, const ModelConfig& cfg) {
  SplitSamples out;
  const std::size_t last = split_days.empty() ? 0 : split_days.back();
  for (const std::size_t day : split_days) {
    for (std::size_t s = 0; s < universe.size(); ++s) {
      ++out.data_points;
      if (day < cfg.T || day + cfg.delta_t > last) continue;
      double r = 0.0;
      try {
        r = market_adjusted_return(ps, universe.ticker(s), cal, day, cfg.delta_t);
      } catch (const Error& e) {
        if (e.code() != Errc::missing_price) throw;
        ++out.skipped_missing_price;
        continue;
      }
      Sample sample;
      sample.day = day;
      sample.stock = s;
      sample.label = make_label(r);
      out.samples.push_back(sample);
      out.returns.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Universe selection

struct UniverseFilterStats {
  std::size_t price_tickers = 0;
  std::size_t dropped_low_news = 0;
  std::size_t dropped_delisted = 0;
};

inline StockUniverse select_universe(const PriceSeries& ps,
                                     const std::vector<NewsRecord>& news,
                                     const TradingCalendar& cal, const SplitDays& days,
                                     const RunConfig& cfg, UniverseFilterStats* stats = nullptr) {
  UniverseFilterStats local;
  local.price_tickers = ps.close.size();

  std::map<std::string, std::size_t> news_per_ticker;
  for (const NewsRecord& rec : news) ++news_per_ticker[rec.ticker];

  std::vector<std::size_t> all_days;
  all_days.insert(all_days.end(), days.train.begin(), days.train.end());
  all_days.insert(all_days.end(), days.dev.begin(), days.dev.end());
  all_days.insert(all_days.end(), days.test.begin(), days.test.end());

  std::vector<std::string> keep;
  for (const auto& [ticker, series] : ps.close) {
    if (cfg.min_avg_news > 0.0) {
      const auto it = news_per_ticker.find(ticker);
      const double total = it == news_per_ticker.end() ? 0.0 : static_cast<double>(it->second);
      if (total / static_cast<double>(cal.size()) < cfg.min_avg_news) {
        ++local.dropped_low_news;
        continue;
      }
    }
    if (cfg.drop_delisted) {
      bool complete = true;
      for (const std::size_t day : all_days)
        if (!series.count(cal.day(day))) {
          complete = false;
          break;
        }
      if (!complete) {
        ++local.dropped_delisted;
        continue;
      }
    }
    keep.push_back(ticker);
  }
  if (stats) *stats = local;
  if (keep.empty()) fail(Errc::empty_dataset, "universe filters removed every ticker");
  return StockUniverse(std::move(keep));
}

// ---------------------------------------------------------------------------
// Graph assembly

inline std::vector<RelationGraph> build_run_graphs(
    const RunConfig& cfg, const StockUniverse& universe, const TradingCalendar& cal,
    const PriceSeries& ps, const std::vector<std::size_t>& train_days) {
  std::vector<RelationGraph> graphs;
  for (const std::string& name : cfg.graphs) {
    if (name == "identity") {
      graphs.push_back(identity_graph(universe.size()));
    } else if (name == "sector") {
      if (cfg.sector_path.empty())
        fail(Errc::invalid_config, "graph 'sector' requires a sector file");
      graphs.push_back(
          build_sector_graph(universe, load_sector_csv(cfg.sector_path), cfg.sector_level));
    } else if (name == "supply" || name == "supply-chain") {
      if (cfg.supply_path.empty())
        fail(Errc::invalid_config, "graph 'supply-chain' requires a supply file");
      graphs.push_back(build_supply_chain_graph(universe, load_supply_csv(cfg.supply_path)));
    } else if (name == "correlation") {
      std::vector<std::vector<double>> series(universe.size());
      for (std::size_t s = 0; s < universe.size(); ++s)
        for (std::size_t i = 0; i + 1 < train_days.size(); ++i)
          series[s].push_back(market_adjusted_return(ps, universe.ticker(s),
                                                     cal.day(train_days[i]),
                                                     cal.day(train_days[i + 1])));
      graphs.push_back(build_correlation_graph(series));
    } else {
      fail(Errc::invalid_config, "unknown graph '" + name + "'");
    }
  }
  return graphs;
}

// ---------------------------------------------------------------------------
// The run

struct SplitStats {
  std::size_t news_count = 0;
  std::size_t data_points = 0;
  std::size_t usable_samples = 0;
  std::size_t skipped_missing_price = 0;
  double zero_vector_rate = 0.0;
};

struct QMetrics {
  double q = 0.0;
  double acc = 0.0;
  double ann_return_pct = 0.0;
  double sharpe = 0.0;
  bool sharpe_defined = false;
};

struct RunManifest {
  nlohmann::json resolved_config;
  std::uint64_t seed = 0;
  SplitStats train_stats, dev_stats, test_stats;
  std::vector<QMetrics> metrics;
  std::size_t best_epoch = 0;
  std::vector<EpochStats> history;
  std::optional<std::string> baseline;  // "RNN" for the identity-only graph list
  std::string run_dir;                  // absolute; not part of the manifest JSON
};

namespace detail {

// News counts and zero-vector rates per split, recomputed directly from the
// raw records so the manifest can be checked against the inputs.
inline void split_news_stats(const std::vector<NewsRecord>& news,
                             const StockUniverse& universe, const TradingCalendar& cal,
                             const SplitDays& days, SplitStats& train, SplitStats& dev,
                             SplitStats& test) {
  std::vector<char> has_news(cal.size() * universe.size(), 0);
  std::vector<int> split_of(cal.size(), -1);
  for (const std::size_t d : days.train) split_of[d] = 0;
  for (const std::size_t d : days.dev) split_of[d] = 1;
  for (const std::size_t d : days.test) split_of[d] = 2;

  SplitStats* stats[3] = {&train, &dev, &test};
  for (const NewsRecord& rec : news) {
    const auto stock = universe.index_of(rec.ticker);
    if (!stock) continue;
    const auto day = cal.day_for_news(rec.ts);
    if (!day) continue;
    has_news[*day * universe.size() + *stock] = 1;
    if (split_of[*day] >= 0) ++stats[split_of[*day]]->news_count;
  }
  for (std::size_t d = 0; d < cal.size(); ++d) {
    if (split_of[d] < 0) continue;
    SplitStats& s = *stats[split_of[d]];
    for (std::size_t i = 0; i < universe.size(); ++i)
      if (!has_news[d * universe.size() + i]) s.zero_vector_rate += 1.0;
  }
  for (int i = 0; i < 3; ++i) {
    const std::size_t cells =
        (i == 0 ? days.train.size() : i == 1 ? days.dev.size() : days.test.size()) *
        universe.size();
    stats[i]->zero_vector_rate = cells ? stats[i]->zero_vector_rate / static_cast<double>(cells) : 0.0;
  }
}

inline nlohmann::json split_stats_json(const SplitStats& s, const DateRange& r) {
  return nlohmann::json{{"start", r.start.str()},
                        {"end", r.end.str()},
                        {"news_count", s.news_count},
                        {"data_points", s.data_points},
                        {"usable_samples", s.usable_samples},
                        {"skipped_missing_price", s.skipped_missing_price},
                        {"zero_vector_rate", s.zero_vector_rate}};
}

inline std::string timestamp_utc_compact() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02d-%02d%02d%02d", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

inline std::filesystem::path pick_run_dir(const RunConfig& cfg) {
  if (!cfg.run_dir.empty()) return cfg.run_dir;
  const std::string base =
      "run-" + timestamp_utc_compact() + "-" + std::to_string(cfg.model.seed);
  std::filesystem::path dir = std::filesystem::path(cfg.out_dir) / base;
  for (int k = 2; std::filesystem::exists(dir); ++k)
    dir = std::filesystem::path(cfg.out_dir) / (base + "-" + std::to_string(k));
  return dir;
}

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    fail(e.code(), std::string(name) + " stage: " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json manifest_json(const RunManifest& m, const RunConfig& cfg) {
  nlohmann::json metrics = nlohmann::json::array();
  for (const QMetrics& q : m.metrics) {
    nlohmann::json entry{{"q", q.q},
                         {"acc", q.acc},
                         {"ann_return_pct", q.ann_return_pct}};
    if (q.sharpe_defined)
      entry["sharpe"] = q.sharpe;
    else
      entry["sharpe"] = nullptr;
    metrics.push_back(std::move(entry));
  }
  nlohmann::json j{
      {"resolved_config", m.resolved_config},
      {"seed", m.seed},
      {"annualization", "mean daily return x 252, simple (not compounded)"},
      {"splits",
       {{"train", detail::split_stats_json(m.train_stats, cfg.splits.train)},
        {"dev", detail::split_stats_json(m.dev_stats, cfg.splits.dev)},
        {"test", detail::split_stats_json(m.test_stats, cfg.splits.test)}}},
      {"best_epoch", m.best_epoch},
      {"metrics", std::move(metrics)},
      {"files",
       {{"checkpoint", "model.ckpt"},
        {"history", "history.csv"},
        {"predictions", "predictions.csv"},
        {"backtest", "backtest.json"}}}};
  if (m.baseline) j["baseline"] = *m.baseline;
  return j;
}

inline RunManifest run_pipeline(const RunConfig& cfg) {
  cfg.model.validate();

  // Load inputs.
  PriceSeries ps;
  TradingCalendar cal;
  std::vector<NewsRecord> news;
  detail::stage("load", [&] {
    ps = load_price_series(cfg.prices_path, cfg.index_path);
    std::vector<Date> dates;
    for (const auto& [date, value] : ps.index) dates.push_back(date);
    cal = TradingCalendar(std::move(dates));
    StockUniverse all_tickers([&] {
      std::vector<std::string> t;
      for (const auto& [ticker, series] : ps.close) t.push_back(ticker);
      return t;
    }());
    news = load_news(cfg.news_path, all_tickers, nullptr, cfg.model.d);
    return 0;
  });

  const SplitDays days = detail::stage("split", [&] { return split_dataset(cal, cfg.splits); });
  const StockUniverse universe =
      detail::stage("universe", [&] { return select_universe(ps, news, cal, days, cfg); });

  // Features over the full calendar; windows may reach back across splits.
  std::vector<DailyFeatures> daily;
  detail::stage("aggregate", [&] {
    std::vector<NewsRecord> kept;
    for (NewsRecord& rec : news)
      if (universe.contains(rec.ticker)) kept.push_back(std::move(rec));
    news = std::move(kept);
    daily = aggregate_daily(news, universe, cal, cfg.model.d);
    return 0;
  });
  std::vector<Matrix> x_days;
  x_days.reserve(daily.size());
  for (DailyFeatures& f : daily) x_days.push_back(std::move(f.x));

  const std::vector<RelationGraph> graphs = detail::stage(
      "graphs", [&] { return build_run_graphs(cfg, universe, cal, ps, days.train); });

  RunManifest manifest;
  manifest.resolved_config = run_config_to_json(cfg);
  manifest.seed = cfg.model.seed;
  detail::split_news_stats(news, universe, cal, days, manifest.train_stats,
                           manifest.dev_stats, manifest.test_stats);
  if (cfg.graphs == std::vector<std::string>{"identity"}) manifest.baseline = "RNN";

  // Samples per split.
  SplitSamples train_s, dev_s, test_s;
  detail::stage("samples", [&] {
    train_s = build_samples(days.train, universe, cal, ps, cfg.model);
    dev_s = build_samples(days.dev, universe, cal, ps, cfg.model);
    test_s = build_samples(days.test, universe, cal, ps, cfg.model);
    if (train_s.samples.empty()) fail(Errc::empty_dataset, "no usable training samples");
    if (test_s.samples.empty()) fail(Errc::empty_dataset, "no usable test samples");
    return 0;
  });
  auto fill = [](SplitStats& st, const SplitSamples& sp) {
    st.data_points = sp.data_points;
    st.usable_samples = sp.samples.size();
    st.skipped_missing_price = sp.skipped_missing_price;
  };
  fill(manifest.train_stats, train_s);
  fill(manifest.dev_stats, dev_s);
  fill(manifest.test_stats, test_s);

  // Train and predict.
  const TrainResult trained = detail::stage(
      "train", [&] { return train(x_days, graphs, train_s.samples, dev_s.samples, cfg.model); });
  manifest.best_epoch = trained.best_epoch;
  manifest.history = trained.history;

  std::vector<PredictionRecord> preds;
  detail::stage("evaluate", [&] {
    const std::vector<double> p_up =
        predict_samples(x_days, graphs, test_s.samples, trained.params, cfg.model);
    preds.reserve(p_up.size());
    for (std::size_t i = 0; i < p_up.size(); ++i) {
      const Sample& s = test_s.samples[i];
      preds.push_back(make_prediction(cal.day(s.day), universe.ticker(s.stock), p_up[i],
                                      s.label, test_s.returns[i]));
    }
    for (const double q : cfg.q_list) {
      QMetrics qm;
      qm.q = q;
      qm.acc = percentile_accuracy(preds, q);
      const BacktestReport rep = backtest(preds, q);
      qm.ann_return_pct = rep.ann_return_pct;
      qm.sharpe = rep.sharpe;
      qm.sharpe_defined = rep.sharpe_defined;
      manifest.metrics.push_back(qm);
    }
    return 0;
  });

  // Artifacts.
  const std::filesystem::path run_dir = detail::pick_run_dir(cfg);
  manifest.run_dir = run_dir.string();
  detail::stage("write", [&] {
    std::filesystem::create_directories(run_dir);
    write_text_file((run_dir / "history.csv").string(), history_csv(trained.history));
    write_predictions_csv((run_dir / "predictions.csv").string(), preds);

    nlohmann::json reports = nlohmann::json::array();
    for (const double q : cfg.q_list) reports.push_back(backtest_report_json(backtest(preds, q)));
    write_text_file((run_dir / "backtest.json").string(), reports.dump(2) + "\n");

    Checkpoint ck;
    ck.cfg = cfg.model;
    for (const RelationGraph& g : graphs) ck.graph_names.push_back(g.name);
    ck.seed = cfg.model.seed;
    ck.params = trained.params;
    save_checkpoint(ck, (run_dir / "model.ckpt").string());

    write_text_file_atomic((run_dir / "manifest.json").string(),
                           manifest_json(manifest, cfg).dump(2) + "\n");
    return 0;
  });
  return manifest;
}

}  // namespace mgrn
