#pragma once

// Labels, scores, percentile accuracy and the dollar-neutral long/short
// simulation.
//
// Selection rule used by both Acc_q and the backtest: per day with m records,
// take the ceil(m*q/200) highest scores and the ceil(m*q/200) lowest scores.
// Ties in score break by ticker in lexicographic order, so every selection is
// deterministic. Long and short sides are equally weighted; each side's
// weights are the rational 1/k and sum to exactly 1 by construction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgrn/csv.hpp"
#include "mgrn/dates.hpp"
#include "mgrn/error.hpp"
#include "mgrn/rng.hpp"
#include "mgrn/universe.hpp"

namespace mgrn {

inline constexpr double kTradingDaysPerYear = 252.0;

// ---------------------------------------------------------------------------
// Prices and returns

struct PriceSeries {
  std::map<std::string, std::map<Date, double>> close;  // ticker -> date -> close
  std::map<Date, double> index;                         // date -> index level
};

inline void load_prices_csv(const std::string& path, PriceSeries& ps) {
  const CsvFile csv = read_csv(path);
  if (csv.header != std::vector<std::string>{"date", "ticker", "close"})
    fail(Errc::bad_format, "prices header must be date,ticker,close in " + path);
  for (const auto& row : csv.rows) {
    if (row.size() != 3) fail(Errc::malformed_record, "bad price row in " + path);
    const Date d = Date::parse(row[0]);
    const double v = parse_double(row[2], "close in " + path);
    if (!(v > 0.0)) fail(Errc::malformed_record, "non-positive close in " + path);
    ps.close[row[1]][d] = v;
  }
}

inline void load_index_csv(const std::string& path, PriceSeries& ps) {
  const CsvFile csv = read_csv(path);
  if (csv.header != std::vector<std::string>{"date", "close"})
    fail(Errc::bad_format, "index header must be date,close in " + path);
  for (const auto& row : csv.rows) {
    if (row.size() != 2) fail(Errc::malformed_record, "bad index row in " + path);
    const Date d = Date::parse(row[0]);
    const double v = parse_double(row[1], "index close in " + path);
    if (!(v > 0.0)) fail(Errc::malformed_record, "non-positive index close in " + path);
    ps.index[d] = v;
  }
}

inline PriceSeries load_price_series(const std::string& prices_path,
                                     const std::string& index_path) {
  PriceSeries ps;
  load_prices_csv(prices_path, ps);
  load_index_csv(index_path, ps);
  return ps;
}

// r = P_s(t+dt)/P_s(t) - P_m(t+dt)/P_m(t)
inline double market_adjusted_return(const PriceSeries& ps, const std::string& ticker,
                                     const Date& t, const Date& t_next) {
  const auto stock = ps.close.find(ticker);
  if (stock == ps.close.end())
    fail(Errc::missing_price, "no prices for ticker '" + ticker + "'");
  const auto p0 = stock->second.find(t);
  const auto p1 = stock->second.find(t_next);
  if (p0 == stock->second.end() || p1 == stock->second.end())
    fail(Errc::missing_price,
         ticker + " lacks a close on " + t.str() + " or " + t_next.str());
  const auto i0 = ps.index.find(t);
  const auto i1 = ps.index.find(t_next);
  if (i0 == ps.index.end() || i1 == ps.index.end())
    fail(Errc::missing_price, "index lacks a close on " + t.str() + " or " + t_next.str());
  return p1->second / p0->second - i1->second / i0->second;
}

inline double market_adjusted_return(const PriceSeries& ps, const std::string& ticker,
                                     const TradingCalendar& cal, std::size_t t,
                                     std::size_t delta_t) {
  if (t + delta_t >= cal.size())
    fail(Errc::missing_price, "return window extends past the calendar");
  return market_adjusted_return(ps, ticker, cal.day(t), cal.day(t + delta_t));
}

inline int make_label(double r) {
  if (!std::isfinite(r)) fail(Errc::non_finite, "label from non-finite return");
  return r > 0.0 ? 1 : 0;
}

inline double score(double p_up) { return (p_up - 0.5) * 2.0; }

// ---------------------------------------------------------------------------
// Predictions

struct PredictionRecord {
  Date date;
  std::string ticker;
  double p_up = 0.5;
  double score = 0.0;
  int label = 0;
  double realized_return = 0.0;
};

inline PredictionRecord make_prediction(const Date& date, std::string ticker, double p_up,
                                        int label, double realized_return) {
  PredictionRecord r;
  r.date = date;
  r.ticker = std::move(ticker);
  r.p_up = p_up;
  r.score = score(p_up);
  r.label = label;
  r.realized_return = realized_return;
  return r;
}

inline std::string predictions_csv(const std::vector<PredictionRecord>& preds) {
  std::string out = "date,ticker,p_up,score,label,realized_return\n";
  for (const PredictionRecord& p : preds) {
    out += p.date.str();
    out += ',';
    out += p.ticker;
    out += ',';
    out += fmt_double(p.p_up);
    out += ',';
    out += fmt_double(p.score);
    out += ',';
    out += std::to_string(p.label);
    out += ',';
    out += fmt_double(p.realized_return);
    out += '\n';
  }
  return out;
}

inline void write_predictions_csv(const std::string& path,
                                  const std::vector<PredictionRecord>& preds) {
  write_text_file(path, predictions_csv(preds));
}

inline std::vector<PredictionRecord> load_predictions_csv(const std::string& path) {
  const CsvFile csv = read_csv(path);
  const std::vector<std::string> want{"date", "ticker", "p_up",
                                      "score", "label",  "realized_return"};
  if (csv.header != want)
    fail(Errc::bad_format, "predictions header mismatch in " + path);
  std::vector<PredictionRecord> preds;
  preds.reserve(csv.rows.size());
  for (const auto& row : csv.rows) {
    if (row.size() != 6) fail(Errc::malformed_record, "bad prediction row in " + path);
    PredictionRecord p;
    p.date = Date::parse(row[0]);
    p.ticker = row[1];
    p.p_up = parse_double(row[2], "p_up in " + path);
    p.score = parse_double(row[3], "score in " + path);
    p.label = static_cast<int>(parse_long(row[4], "label in " + path));
    p.realized_return = parse_double(row[5], "realized_return in " + path);
    if (!(p.p_up > 0.0 && p.p_up < 1.0))
      fail(Errc::malformed_record, "p_up outside (0,1) in " + path);
    if (p.score != score(p.p_up))
      fail(Errc::malformed_record, "score does not equal (p_up-0.5)*2 in " + path);
    if (p.label != 0 && p.label != 1)
      fail(Errc::malformed_record, "label must be 0 or 1 in " + path);
    preds.push_back(std::move(p));
  }
  return preds;
}

// ---------------------------------------------------------------------------
// Per-day selection

namespace detail {

inline std::size_t side_count(std::size_t m, double q) {
  if (!(q > 0.0) || q > 100.0) fail(Errc::invalid_q, "q must lie in (0, 100]");
  const auto k = static_cast<std::size_t>(
      std::ceil(static_cast<double>(m) * q / 200.0));
  return std::min(std::max<std::size_t>(k, 1), m);
}

inline std::map<Date, std::vector<const PredictionRecord*>> group_by_day(
    const std::vector<PredictionRecord>& preds) {
  std::map<Date, std::vector<const PredictionRecord*>> days;
  for (const PredictionRecord& p : preds) days[p.date].push_back(&p);
  return days;
}

struct DaySelection {
  std::vector<const PredictionRecord*> top;
  std::vector<const PredictionRecord*> bottom;
};

inline DaySelection select_day(std::vector<const PredictionRecord*> recs, double q) {
  const std::size_t k = side_count(recs.size(), q);
  DaySelection sel;
  std::sort(recs.begin(), recs.end(), [](const PredictionRecord* a, const PredictionRecord* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->ticker < b->ticker;
  });
  sel.top.assign(recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(recs.begin(), recs.end(), [](const PredictionRecord* a, const PredictionRecord* b) {
    if (a->score != b->score) return a->score < b->score;
    return a->ticker < b->ticker;
  });
  sel.bottom.assign(recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(k));
  return sel;
}

inline bool direction_correct(const PredictionRecord& p) {
  return (p.score > 0.0 && p.label == 1) || (p.score <= 0.0 && p.label == 0);
}

}  // namespace detail

// Fraction of selected records, pooled over days, whose score direction
// matches the label. A record picked by both sides counts once.
inline double percentile_accuracy(const std::vector<PredictionRecord>& preds, double q) {
  if (!(q > 0.0) || q > 100.0) fail(Errc::invalid_q, "q must lie in (0, 100]");
  if (preds.empty()) fail(Errc::empty_dataset, "percentile_accuracy over no predictions");
  std::size_t selected = 0, correct = 0;
  for (const auto& [date, recs] : detail::group_by_day(preds)) {
    const detail::DaySelection sel = detail::select_day(recs, q);
    std::set<const PredictionRecord*> chosen(sel.top.begin(), sel.top.end());
    chosen.insert(sel.bottom.begin(), sel.bottom.end());
    selected += chosen.size();
    for (const PredictionRecord* p : chosen)
      if (detail::direction_correct(*p)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(selected);
}

// ---------------------------------------------------------------------------
// Backtest

struct BacktestDay {
  Date date;
  double r = 0.0;
  std::vector<std::string> longs;
  std::vector<std::string> shorts;
};

struct BacktestReport {
  double q = 0.0;
  double ann_return_pct = 0.0;  // mean daily return x 252, in percent (simple, not compounded)
  double sharpe = std::numeric_limits<double>::quiet_NaN();
  bool sharpe_defined = false;  // false when std(R_d) = 0 or fewer than two days
  std::vector<BacktestDay> days;
};

inline BacktestReport backtest(const std::vector<PredictionRecord>& preds, double q) {
  if (!(q > 0.0) || q > 100.0) fail(Errc::invalid_q, "q must lie in (0, 100]");
  if (preds.empty()) fail(Errc::empty_dataset, "backtest over no predictions");
  BacktestReport rep;
  rep.q = q;
  for (const auto& [date, recs] : detail::group_by_day(preds)) {
    const detail::DaySelection sel = detail::select_day(recs, q);
    BacktestDay day;
    day.date = date;
    double long_sum = 0.0, short_sum = 0.0;
    for (const PredictionRecord* p : sel.top) {
      if (!std::isfinite(p->realized_return))
        fail(Errc::missing_price, "selected " + p->ticker + " lacks a realized return");
      long_sum += p->realized_return;
      day.longs.push_back(p->ticker);
    }
    for (const PredictionRecord* p : sel.bottom) {
      if (!std::isfinite(p->realized_return))
        fail(Errc::missing_price, "selected " + p->ticker + " lacks a realized return");
      short_sum += p->realized_return;
      day.shorts.push_back(p->ticker);
    }
    day.r = long_sum / static_cast<double>(day.longs.size()) -
            short_sum / static_cast<double>(day.shorts.size());
    rep.days.push_back(std::move(day));
  }

  const std::size_t n = rep.days.size();
  double sum = 0.0;
  for (const BacktestDay& d : rep.days) sum += d.r;
  const double mean = sum / static_cast<double>(n);
  rep.ann_return_pct = mean * kTradingDaysPerYear * 100.0;
  if (n >= 2) {
    double ss = 0.0;
    for (const BacktestDay& d : rep.days) ss += (d.r - mean) * (d.r - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd > 0.0) {
      rep.sharpe = mean / sd * std::sqrt(kTradingDaysPerYear);
      rep.sharpe_defined = true;
    }
  }
  return rep;
}

inline nlohmann::json backtest_report_json(const BacktestReport& rep) {
  nlohmann::json daily = nlohmann::json::array();
  for (const BacktestDay& d : rep.days)
    daily.push_back({{"date", d.date.str()},
                     {"r", d.r},
                     {"longs", d.longs},
                     {"shorts", d.shorts}});
  nlohmann::json j{{"q", rep.q},
                   {"ann_return_pct", rep.ann_return_pct},
                   {"days", rep.days.size()},
                   {"daily", std::move(daily)}};
  if (rep.sharpe_defined)
    j["sharpe"] = rep.sharpe;
  else
    j["sharpe"] = nullptr;
  return j;
}

// ---------------------------------------------------------------------------
// Random baseline

inline std::vector<PredictionRecord> random_scorer(const StockUniverse& universe,
                                                   const TradingCalendar& calendar,
                                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PredictionRecord> preds;
  preds.reserve(universe.size() * calendar.size());
  for (std::size_t d = 0; d < calendar.size(); ++d) {
    for (std::size_t s = 0; s < universe.size(); ++s) {
      double u = rng.uniform();
      while (u == 0.0) u = rng.uniform();
      preds.push_back(make_prediction(calendar.day(d), universe.ticker(s), u, 0, 0.0));
    }
  }
  return preds;
}

}  // namespace mgrn
