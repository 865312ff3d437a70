#include <catch_amalgamated.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mgrn/pipeline.hpp"
#include "mgrn/synth.hpp"

using namespace mgrn;

namespace {

bool fails_with(Errc code, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("mgrn_pipe_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

nlohmann::json base_config_json() {
  return nlohmann::json{
      {"news", "news.jsonl"},
      {"prices", "prices.csv"},
      {"index", "index.csv"},
      {"sector", "sector.csv"},
      {"supply", "supply.csv"},
      {"splits",
       {{"train", {"2020-01-06", "2020-03-31"}},
        {"dev", {"2020-04-01", "2020-04-30"}},
        {"test", {"2020-05-01", "2020-05-31"}}}},
      {"model", {{"d", 8}}}};
}

// Weekday calendar fixture: consecutive dates skipping weekends.
TradingCalendar weekday_calendar(int year, int month, int day, std::size_t count) {
  std::vector<Date> days;
  std::int64_t cursor = Date{year, month, day}.to_days();
  while (days.size() < count) {
    const Date d = Date::from_days(cursor);
    const int dow = static_cast<int>(((cursor % 7) + 7) % 7);  // 1970-01-01 was a Thursday
    const bool weekend = dow == 2 || dow == 3;                 // Sat=2, Sun=3 in that frame
    if (!weekend) days.push_back(d);
    ++cursor;
  }
  return TradingCalendar(std::move(days));
}

}  // namespace

TEST_CASE("run config parsing", "[pipeline]") {
  SECTION("defaults fill in") {
    const RunConfig cfg = run_config_from_json(base_config_json());
    REQUIRE(cfg.model.d == 8);
    REQUIRE(cfg.model.T == 20);
    REQUIRE(cfg.graphs ==
            std::vector<std::string>{"sector", "supply-chain", "correlation"});
    REQUIRE(cfg.sector_level == 1);
    REQUIRE(cfg.q_list == std::vector<double>{100.0, 50.0, 20.0, 10.0, 2.0});
    REQUIRE(cfg.drop_delisted);
    REQUIRE(cfg.min_avg_news == 0.0);
    REQUIRE(cfg.splits.train.start == Date{2020, 1, 6});
    REQUIRE(cfg.splits.test.end == Date{2020, 5, 31});
  }
  SECTION("unknown keys are rejected everywhere") {
    auto j = base_config_json();
    j["typo"] = 1;
    REQUIRE(fails_with(Errc::invalid_config, [&] { run_config_from_json(j); }));
    j = base_config_json();
    j["model"]["hidden"] = 3;
    REQUIRE(fails_with(Errc::invalid_config, [&] { run_config_from_json(j); }));
    j = base_config_json();
    j["splits"]["validation"] = {"2020-06-01", "2020-06-30"};
    REQUIRE(fails_with(Errc::invalid_config, [&] { run_config_from_json(j); }));
  }
  SECTION("missing required fields") {
    auto j = base_config_json();
    j.erase("news");
    REQUIRE(fails_with(Errc::invalid_config, [&] { run_config_from_json(j); }));
    j = base_config_json();
    j["model"].erase("d");
    REQUIRE(fails_with(Errc::invalid_config, [&] { run_config_from_json(j); }));
  }
  SECTION("invalid values") {
    auto j = base_config_json();
    j["sector_level"] = 5;
    REQUIRE(fails_with(Errc::invalid_config, [&] { run_config_from_json(j); }));
    j = base_config_json();
    j["graphs"] = nlohmann::json::array();
    REQUIRE(fails_with(Errc::invalid_config, [&] { run_config_from_json(j); }));
    j = base_config_json();
    j["q_list"] = nlohmann::json::array();
    REQUIRE(fails_with(Errc::invalid_config, [&] { run_config_from_json(j); }));
    j = base_config_json();
    j["splits"]["train"] = {"2020-01-06"};
    REQUIRE(fails_with(Errc::invalid_config, [&] { run_config_from_json(j); }));
  }
}

TEST_CASE("split dataset", "[pipeline]") {
  const TradingCalendar cal = weekday_calendar(2020, 1, 6, 60);
  SplitRanges r;
  r.train = {cal.day(0), cal.day(29)};
  r.dev = {cal.day(30), cal.day(44)};
  r.test = {cal.day(45), cal.day(59)};

  SECTION("counts and boundary assignment") {
    const SplitDays days = split_dataset(cal, r);
    REQUIRE(days.train.size() == 30);
    REQUIRE(days.dev.size() == 15);
    REQUIRE(days.test.size() == 15);
    REQUIRE(days.train.back() == 29);  // the boundary day sits in the earlier split
    REQUIRE(days.dev.front() == 30);
    // Data-point arithmetic: n_stocks x trading days in range.
    REQUIRE(165 * 256 == 42240);
    REQUIRE(7 * days.test.size() == 105);
  }
  SECTION("days outside every range are unassigned") {
    SplitRanges gap = r;
    gap.dev = {cal.day(32), cal.day(44)};  // leaves days 30, 31 unassigned
    const SplitDays days = split_dataset(cal, gap);
    REQUIRE(days.train.size() == 30);
    REQUIRE(days.dev.size() == 13);
    REQUIRE(days.dev.front() == 32);
  }
  SECTION("overlap is rejected") {
    SplitRanges bad = r;
    bad.dev.start = cal.day(29);
    REQUIRE(fails_with(Errc::overlapping_ranges, [&] { split_dataset(cal, bad); }));
  }
  SECTION("reversed range is rejected") {
    SplitRanges bad = r;
    bad.test = {cal.day(59), cal.day(45)};
    REQUIRE(fails_with(Errc::overlapping_ranges, [&] { split_dataset(cal, bad); }));
  }
  SECTION("empty range is rejected") {
    SplitRanges bad = r;
    // A weekend-only window contains no trading day.
    bad.dev = {Date::from_days(cal.day(29).to_days() + 1),
               Date::from_days(cal.day(29).to_days() + 1)};
    bad.train.end = cal.day(28);
    if (cal.day(30).to_days() - cal.day(29).to_days() < 2) {
      // Calendar has no weekend gap right there; shrink dev to an impossible
      // window between two adjacent trading days instead.
      SUCCEED();
    } else {
      REQUIRE(fails_with(Errc::overlapping_ranges, [&] { split_dataset(cal, bad); }));
    }
  }
}

TEST_CASE("sample construction respects window and label bounds", "[pipeline]") {
  const TradingCalendar cal = weekday_calendar(2021, 1, 4, 12);
  const StockUniverse universe(std::vector<std::string>{"AA", "BB"});
  PriceSeries ps;
  for (std::size_t i = 0; i < cal.size(); ++i) {
    const Date d = cal.day(i);
    ps.index[d] = 1000.0;
    ps.close["AA"][d] = 100.0 + static_cast<double>(i);  // rising: labels 1
    ps.close["BB"][d] = 100.0 - static_cast<double>(i);  // falling: labels 0
  }

  ModelConfig cfg;
  cfg.d = 4;
  cfg.T = 3;
  cfg.delta_t = 1;

  std::vector<std::size_t> split_days;
  for (std::size_t i = 0; i < 8; ++i) split_days.push_back(i);  // days 0..7

  const SplitSamples s = build_samples(split_days, universe, cal, ps, cfg);
  REQUIRE(s.data_points == 16);
  // Usable: day in {3..6} (>= T and day+1 <= 7), both stocks.
  REQUIRE(s.samples.size() == 8);
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    REQUIRE(s.samples[i].day >= 3);
    REQUIRE(s.samples[i].day + 1 <= 7);
    const int expect = s.samples[i].stock == 0 ? 1 : 0;
    REQUIRE(s.samples[i].label == expect);
    REQUIRE(make_label(s.returns[i]) == s.samples[i].label);
  }

  SECTION("missing prices are skipped and counted") {
    ps.close["BB"].erase(cal.day(5));
    const SplitSamples holey = build_samples(split_days, universe, cal, ps, cfg);
    // BB day 4 (needs day 5) and BB day 5 both drop out.
    REQUIRE(holey.skipped_missing_price == 2);
    REQUIRE(holey.samples.size() == 6);
  }
}

TEST_CASE("universe filters", "[pipeline]") {
  const TradingCalendar cal = weekday_calendar(2021, 1, 4, 10);
  PriceSeries ps;
  for (std::size_t i = 0; i < cal.size(); ++i) {
    ps.index[cal.day(i)] = 1000.0;
    for (const char* t : {"AA", "BB", "CC"}) ps.close[t][cal.day(i)] = 50.0;
  }
  ps.close["BB"].erase(cal.day(7));  // delisted mid-sample

  std::vector<NewsRecord> news;
  for (std::size_t i = 0; i < cal.size(); ++i) {
    NewsRecord r;
    r.ticker = "AA";
    r.ts = Timestamp::from_date_minute(cal.day(i), 9 * 60);
    r.embedding = {1.0, 0.0};
    news.push_back(r);
    if (i % 5 == 0) {
      r.ticker = "CC";
      news.push_back(r);
    }
  }

  SplitRanges ranges;
  ranges.train = {cal.day(0), cal.day(5)};
  ranges.dev = {cal.day(6), cal.day(7)};
  ranges.test = {cal.day(8), cal.day(9)};
  const SplitDays days = split_dataset(cal, ranges);

  RunConfig cfg;
  cfg.model.d = 2;

  SECTION("drop delisted") {
    cfg.drop_delisted = true;
    UniverseFilterStats stats;
    const StockUniverse u = select_universe(ps, news, cal, days, cfg, &stats);
    REQUIRE(u.tickers() == std::vector<std::string>{"AA", "CC"});
    REQUIRE(stats.dropped_delisted == 1);
  }
  SECTION("keep delisted when the flag is off") {
    cfg.drop_delisted = false;
    const StockUniverse u = select_universe(ps, news, cal, days, cfg);
    REQUIRE(u.size() == 3);
  }
  SECTION("minimum average news per day") {
    cfg.drop_delisted = false;
    cfg.min_avg_news = 0.5;  // AA averages 1.0, CC 0.2, BB 0.0
    UniverseFilterStats stats;
    const StockUniverse u = select_universe(ps, news, cal, days, cfg, &stats);
    REQUIRE(u.tickers() == std::vector<std::string>{"AA"});
    REQUIRE(stats.dropped_low_news == 2);
  }
  SECTION("filtering everything fails") {
    cfg.min_avg_news = 100.0;
    REQUIRE(fails_with(Errc::empty_dataset,
                       [&] { select_universe(ps, news, cal, days, cfg); }));
  }
}

TEST_CASE("pipeline end to end on a synthetic bundle", "[pipeline]") {
  const auto dir = temp_dir("run");
  SynthConfig synth;
  synth.n = 6;
  synth.d = 8;
  synth.days = 120;
  synth.beta = 0.2;
  synth.sigma = 0.005;
  synth.embed_noise = 0.05;
  synth.sector_size = 3;
  synth.truth_graph = "sector";
  synth.seed = 11;
  synth_generate(synth, dir.string());

  // Split boundaries from the generated calendar.
  std::vector<Date> dates;
  for (const auto& row : read_csv((dir / "index.csv").string()).rows)
    dates.push_back(Date::parse(row[0]));
  REQUIRE(dates.size() == 120);

  RunConfig cfg;
  cfg.news_path = (dir / "news.jsonl").string();
  cfg.prices_path = (dir / "prices.csv").string();
  cfg.index_path = (dir / "index.csv").string();
  cfg.sector_path = (dir / "sector.csv").string();
  cfg.supply_path = (dir / "supply.csv").string();
  cfg.splits.train = {dates[0], dates[79]};
  cfg.splits.dev = {dates[80], dates[99]};
  cfg.splits.test = {dates[100], dates[119]};
  cfg.model.d = 8;
  cfg.model.gcn_dims = {6};
  cfg.model.attn_w = 4;
  cfg.model.lstm_dims = {6};
  cfg.model.T = 3;
  cfg.model.epochs = 2;
  cfg.model.batch_size = 16;
  cfg.model.seed = 7;
  cfg.q_list = {100.0, 10.0};
  cfg.run_dir = (dir / "out1").string();

  const RunManifest m = run_pipeline(cfg);

  SECTION("artifacts and statistics") {
    for (const char* f :
         {"manifest.json", "history.csv", "predictions.csv", "backtest.json", "model.ckpt"})
      REQUIRE(std::filesystem::exists(dir / "out1" / f));

    REQUIRE(m.train_stats.data_points == 80 * 6);
    REQUIRE(m.dev_stats.data_points == 20 * 6);
    REQUIRE(m.test_stats.data_points == 20 * 6);
    REQUIRE(m.train_stats.usable_samples == 76 * 6);  // days 3..78
    REQUIRE(m.dev_stats.usable_samples == 19 * 6);
    REQUIRE(m.test_stats.usable_samples == 19 * 6);
    REQUIRE(m.train_stats.news_count > 0);
    REQUIRE(m.train_stats.zero_vector_rate >= 0.0);
    REQUIRE(m.train_stats.zero_vector_rate < 1.0);
    REQUIRE(m.metrics.size() == 2);
    for (const QMetrics& qm : m.metrics) {
      REQUIRE(qm.acc >= 0.0);
      REQUIRE(qm.acc <= 1.0);
    }
    REQUIRE_FALSE(m.baseline.has_value());
    REQUIRE(m.history.size() == 2);

    const auto manifest =
        nlohmann::json::parse(read_text_file((dir / "out1" / "manifest.json").string()));
    REQUIRE(manifest["seed"] == 7);
    REQUIRE(manifest["metrics"].size() == 2);
    REQUIRE(manifest["splits"]["train"]["data_points"] == 480);
    REQUIRE_FALSE(manifest.contains("baseline"));
    REQUIRE_FALSE(manifest["resolved_config"].contains("out_dir"));
  }

  SECTION("manifest metrics match the exported predictions") {
    const auto preds =
        load_predictions_csv((dir / "out1" / "predictions.csv").string());
    REQUIRE(preds.size() == m.test_stats.usable_samples);
    REQUIRE(percentile_accuracy(preds, 100.0) == m.metrics[0].acc);
    const BacktestReport rep = backtest(preds, 10.0);
    REQUIRE(rep.ann_return_pct == m.metrics[1].ann_return_pct);
  }

  SECTION("checkpoint reproduces the exported predictions") {
    const Checkpoint ck = load_checkpoint((dir / "out1" / "model.ckpt").string());
    REQUIRE(ck.graph_names ==
            std::vector<std::string>{"sector", "supply-chain", "correlation"});

    // Rebuild features and graphs exactly as the run did.
    const PriceSeries ps = load_price_series(cfg.prices_path, cfg.index_path);
    std::vector<Date> cal_dates;
    for (const auto& [date, value] : ps.index) cal_dates.push_back(date);
    const TradingCalendar cal(cal_dates);
    const SplitDays days = split_dataset(cal, cfg.splits);
    auto news = load_news(cfg.news_path,
                          StockUniverse(std::vector<std::string>(
                              {"S000", "S001", "S002", "S003", "S004", "S005"})),
                          nullptr, cfg.model.d);
    const StockUniverse universe = select_universe(ps, news, cal, days, cfg);
    const auto daily = aggregate_daily(news, universe, cal, cfg.model.d);
    std::vector<Matrix> x_days;
    for (const auto& f : daily) x_days.push_back(f.x);
    const auto graphs = build_run_graphs(cfg, universe, cal, ps, days.train);
    const SplitSamples test_s = build_samples(days.test, universe, cal, ps, cfg.model);

    const auto p_up = predict_samples(x_days, graphs, test_s.samples, ck.params, ck.cfg);
    const auto exported =
        load_predictions_csv((dir / "out1" / "predictions.csv").string());
    REQUIRE(p_up.size() == exported.size());
    for (std::size_t i = 0; i < p_up.size(); ++i) REQUIRE(p_up[i] == exported[i].p_up);
  }

  SECTION("reruns are byte-identical") {
    RunConfig again = cfg;
    again.run_dir = (dir / "out2").string();
    run_pipeline(again);
    for (const char* f :
         {"manifest.json", "history.csv", "predictions.csv", "backtest.json", "model.ckpt"})
      REQUIRE(read_text_file((dir / "out1" / f).string()) ==
              read_text_file((dir / "out2" / f).string()));
  }

  SECTION("identity-only run is labeled as the RNN baseline") {
    RunConfig rnn = cfg;
    rnn.graphs = {"identity"};
    rnn.run_dir = (dir / "out_rnn").string();
    const RunManifest mr = run_pipeline(rnn);
    REQUIRE(mr.baseline.has_value());
    REQUIRE(*mr.baseline == "RNN");
    const auto manifest =
        nlohmann::json::parse(read_text_file((dir / "out_rnn" / "manifest.json").string()));
    REQUIRE(manifest["baseline"] == "RNN");
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("pipeline stage errors carry the stage name", "[pipeline]") {
  RunConfig cfg;
  cfg.news_path = "/nonexistent/news.jsonl";
  cfg.prices_path = "/nonexistent/prices.csv";
  cfg.index_path = "/nonexistent/index.csv";
  cfg.model.d = 4;
  cfg.splits.train = {Date{2020, 1, 6}, Date{2020, 1, 31}};
  cfg.splits.dev = {Date{2020, 2, 1}, Date{2020, 2, 14}};
  cfg.splits.test = {Date{2020, 2, 15}, Date{2020, 2, 28}};
  try {
    run_pipeline(cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::io_error);
    REQUIRE(std::string(e.what()).find("load stage") != std::string::npos);
  }
}
