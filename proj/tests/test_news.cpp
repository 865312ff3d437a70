#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "mgrn/csv.hpp"
#include "mgrn/news.hpp"
#include "mgrn/rng.hpp"

using namespace mgrn;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& body) {
  const fs::path dir = fs::temp_directory_path() / "mgrn_news";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  write_text_file(p.string(), body);
  return p;
}

bool fails_with(Errc code, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

}  // namespace

TEST_CASE("load_news parses valid lines", "[news]") {
  StockUniverse universe({"AAA", "BBB"});
  const auto p = temp_file("ok.jsonl",
                           R"({"ticker":"AAA","ts":"2020-01-06T10:00:00Z","embedding":[0.125,-1.5]})"
                           "\n"
                           R"({"ticker":"BBB","ts":"2020-01-06T11:30:00Z","embedding":[2,3]})"
                           "\n"
                           R"({"ticker":"AAA","ts":"2020-01-07T09:00:00Z","embedding":[0,1]})"
                           "\n");
  LoadNewsStats stats;
  auto recs = load_news(p.string(), universe, &stats);
  REQUIRE(recs.size() == 3);
  CHECK(stats.parsed == 3);
  CHECK(stats.skipped_unknown_ticker == 0);
  CHECK(recs[0].ticker == "AAA");
  CHECK(recs[0].embedding == std::vector<double>{0.125, -1.5});
  CHECK(recs[0].ts == Timestamp::parse("2020-01-06T10:00:00Z"));
}

TEST_CASE("load_news rejects bad input", "[news]") {
  StockUniverse universe({"AAA"});
  SECTION("inconsistent embedding dimension") {
    const auto p = temp_file("dim.jsonl",
                             R"({"ticker":"AAA","ts":"2020-01-06T10:00:00Z","embedding":[1,2,3]})"
                             "\n"
                             R"({"ticker":"AAA","ts":"2020-01-06T11:00:00Z","embedding":[1,2]})"
                             "\n");
    REQUIRE(fails_with(Errc::inconsistent_dimension,
                       [&] { load_news(p.string(), universe); }));
  }
  SECTION("malformed JSON names the line") {
    const auto p = temp_file("bad.jsonl",
                             R"({"ticker":"AAA","ts":"2020-01-06T10:00:00Z","embedding":[1]})"
                             "\n{not json\n");
    try {
      load_news(p.string(), universe);
      FAIL("expected malformed_record");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::malformed_record);
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SECTION("missing embedding without fallback") {
    const auto p = temp_file("noemb.jsonl",
                             R"({"ticker":"AAA","ts":"2020-01-06T10:00:00Z"})"
                             "\n");
    REQUIRE(fails_with(Errc::malformed_record, [&] { load_news(p.string(), universe); }));
  }
  SECTION("missing file") {
    REQUIRE(fails_with(Errc::io_error, [&] { load_news("/nonexistent/x.jsonl", universe); }));
  }
}

TEST_CASE("load_news skips unknown tickers with a count", "[news]") {
  StockUniverse universe({"AAA"});
  const auto p = temp_file("skip.jsonl",
                           R"({"ticker":"AAA","ts":"2020-01-06T10:00:00Z","embedding":[1]})"
                           "\n"
                           R"({"ticker":"ZZZ","ts":"2020-01-06T11:00:00Z","embedding":[2]})"
                           "\n");
  LoadNewsStats stats;
  auto recs = load_news(p.string(), universe, &stats);
  REQUIRE(recs.size() == 1);
  CHECK(stats.skipped_unknown_ticker == 1);
}

TEST_CASE("headline fallback embedder", "[news]") {
  SECTION("L2 normalized and deterministic") {
    auto v = embed_headline("Oil rallies as OPEC cuts supply", 16);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    CHECK(norm == Catch::Approx(1.0).margin(1e-12));
    CHECK(v == embed_headline("Oil rallies as OPEC cuts supply", 16));
  }
  SECTION("case and punctuation insensitive tokenization") {
    CHECK(embed_headline("Up, UP!", 8) == embed_headline("up up", 8));
  }
  SECTION("empty headline gives the zero vector") {
    auto v = embed_headline("", 8);
    CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
  }
  SECTION("loads from headline field") {
    StockUniverse universe({"AAA"});
    const auto p = temp_file("head.jsonl",
                             R"({"ticker":"AAA","ts":"2020-01-06T10:00:00Z","headline":"rates jump"})"
                             "\n");
    auto recs = load_news(p.string(), universe, nullptr, 8);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].embedding == embed_headline("rates jump", 8));
  }
}

TEST_CASE("aggregate_daily means and zero rows", "[news]") {
  StockUniverse universe({"AAA", "BBB"});
  TradingCalendar cal({{2020, 1, 6}, {2020, 1, 7}, {2020, 1, 8}});

  SECTION("single item passes through exactly") {
    std::vector<NewsRecord> news{
        {"AAA", Timestamp::parse("2020-01-06T10:00:00Z"), {0.3, -0.7, 2.5}}};
    AggregateReport rep;
    auto feats = aggregate_daily(news, universe, cal, 3, &rep);
    REQUIRE(feats.size() == 3);
    CHECK(feats[0].x(0, 0) == 0.3);
    CHECK(feats[0].x(0, 1) == -0.7);
    CHECK(feats[0].x(0, 2) == 2.5);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(feats[0].x(1, k) == 0.0);
      CHECK(feats[1].x(0, k) == 0.0);
    }
    CHECK(rep.zero_cells == 5);
    CHECK(rep.zero_vector_rate == Catch::Approx(5.0 / 6.0).margin(1e-15));
  }
  SECTION("mean of two embeddings") {
    std::vector<NewsRecord> news{
        {"AAA", Timestamp::parse("2020-01-06T09:00:00Z"), {1.0, 0.0}},
        {"AAA", Timestamp::parse("2020-01-06T10:00:00Z"), {0.0, 1.0}}};
    auto feats = aggregate_daily(news, universe, cal, 2);
    CHECK(feats[0].x(0, 0) == 0.5);
    CHECK(feats[0].x(0, 1) == 0.5);
  }
  SECTION("reported zero rate matches a recount") {
    Rng rng(7);
    std::vector<NewsRecord> news;
    for (int i = 0; i < 40; ++i) {
      const char* ticker = rng.below(2) ? "AAA" : "BBB";
      const Date d = cal.day(rng.below(3));
      Timestamp ts = Timestamp::from_date_minute(d, static_cast<int>(rng.below(16 * 60)));
      news.push_back({ticker, ts, {rng.normal(), rng.normal()}});
    }
    AggregateReport rep;
    auto feats = aggregate_daily(news, universe, cal, 2, &rep);
    std::size_t zero_rows = 0;
    for (const auto& f : feats)
      for (std::size_t s = 0; s < 2; ++s) {
        bool all_zero = true;
        for (std::size_t k = 0; k < 2; ++k) all_zero &= f.x(s, k) == 0.0;
        zero_rows += all_zero;
      }
    CHECK(rep.zero_cells == zero_rows);
    CHECK(rep.zero_vector_rate == Catch::Approx(double(zero_rows) / 6.0).margin(1e-15));
  }
}

TEST_CASE("aggregate_daily cutoff windows", "[news]") {
  StockUniverse universe({"AAA"});
  TradingCalendar cal({{2020, 1, 6}, {2020, 1, 7}}, 16 * 60 + 30);
  const Timestamp close0 = cal.close_instant(0);
  const Timestamp close1 = cal.close_instant(1);

  SECTION("exactly at the close belongs to that day") {
    auto feats = aggregate_daily({{"AAA", close0, {1.0}}}, universe, cal, 1);
    CHECK(feats[0].x(0, 0) == 1.0);
    CHECK(feats[1].x(0, 0) == 0.0);
  }
  SECTION("one millisecond later rolls to the next day") {
    auto feats = aggregate_daily({{"AAA", Timestamp{close0.millis + 1}, {1.0}}}, universe, cal, 1);
    CHECK(feats[0].x(0, 0) == 0.0);
    CHECK(feats[1].x(0, 0) == 1.0);
  }
  SECTION("before the first close attaches to day 0") {
    auto feats = aggregate_daily(
        {{"AAA", Timestamp::parse("2020-01-03T12:00:00Z"), {1.0}}}, universe, cal, 1);
    CHECK(feats[0].x(0, 0) == 1.0);
  }
  SECTION("after the final close is skipped and counted") {
    AggregateReport rep;
    auto feats =
        aggregate_daily({{"AAA", Timestamp{close1.millis + 1}, {1.0}}}, universe, cal, 1, &rep);
    CHECK(feats[0].x(0, 0) == 0.0);
    CHECK(feats[1].x(0, 0) == 0.0);
    CHECK(rep.skipped_after_last_close == 1);
  }
}

TEST_CASE("aggregate_daily order invariance and scaling", "[news]") {
  StockUniverse universe({"AAA", "BBB", "CCC"});
  TradingCalendar cal({{2020, 1, 6}, {2020, 1, 7}, {2020, 1, 8}, {2020, 1, 9}});
  Rng rng(99);
  std::vector<NewsRecord> news;
  for (int i = 0; i < 60; ++i) {
    std::string ticker = universe.ticker(rng.below(3));
    Timestamp ts = Timestamp::from_date_minute(cal.day(rng.below(4)),
                                               static_cast<int>(rng.below(24 * 60)));
    news.push_back({ticker, ts, {rng.normal(), rng.normal(), rng.normal()}});
  }

  auto base = aggregate_daily(news, universe, cal, 3);

  SECTION("input order never changes the result") {
    auto shuffled = news;
    rng.shuffle(shuffled);
    auto reordered = aggregate_daily(shuffled, universe, cal, 3);
    std::reverse(shuffled.begin(), shuffled.end());
    auto reversed = aggregate_daily(shuffled, universe, cal, 3);
    for (std::size_t d = 0; d < base.size(); ++d) {
      REQUIRE(reordered[d].x == base[d].x);
      REQUIRE(reversed[d].x == base[d].x);
    }
  }
  SECTION("scaling all embeddings scales the rows") {
    auto scaled = news;
    for (auto& rec : scaled)
      for (double& v : rec.embedding) v *= 2.0;
    auto feats = aggregate_daily(scaled, universe, cal, 3);
    for (std::size_t d = 0; d < base.size(); ++d)
      for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t k = 0; k < 3; ++k)
          REQUIRE(feats[d].x(s, k) == 2.0 * base[d].x(s, k));
  }
}

TEST_CASE("aggregate_daily empty inputs", "[news]") {
  StockUniverse universe({"AAA"});
  SECTION("no news gives all-zero features") {
    TradingCalendar cal({{2020, 1, 6}});
    AggregateReport rep;
    auto feats = aggregate_daily({}, universe, cal, 4, &rep);
    REQUIRE(feats.size() == 1);
    CHECK(feats[0].x == Matrix(1, 4));
    CHECK(rep.zero_vector_rate == 1.0);
  }
  SECTION("empty calendar is rejected") {
    REQUIRE(fails_with(Errc::empty_input,
                       [&] { aggregate_daily({}, universe, TradingCalendar(), 4); }));
  }
}
