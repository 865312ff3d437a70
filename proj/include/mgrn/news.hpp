#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgrn/dates.hpp"
#include "mgrn/error.hpp"
#include "mgrn/matrix.hpp"
#include "mgrn/universe.hpp"

namespace mgrn {

// One embedded news item. The sentence encoder is upstream; we only ever see
// the embedding (or, for demo headlines, a hashed bag of tokens).
struct NewsRecord {
  std::string ticker;
  Timestamp ts;
  std::vector<double> embedding;
};

// Per-day feature matrix X_d: row s is stock s's mean news embedding.
struct DailyFeatures {
  Date day;
  Matrix x;
};

struct LoadNewsStats {
  std::size_t parsed = 0;
  std::size_t skipped_unknown_ticker = 0;
};

struct AggregateReport {
  std::size_t news_count = 0;             // records offered
  std::size_t skipped_unknown_ticker = 0;
  std::size_t skipped_after_last_close = 0;
  std::size_t zero_cells = 0;
  std::size_t total_cells = 0;
  double zero_vector_rate = 0.0;

  std::size_t skip_count() const { return skipped_unknown_ticker + skipped_after_last_close; }
};

// Deterministic stand-in for a sentence encoder: lowercase tokens hashed
// (FNV-1a) into d buckets, then L2-normalized. Demo use only.
inline std::vector<double> embed_headline(const std::string& headline, std::size_t d) {
  if (d == 0) fail(Errc::invalid_config, "embedding dimension must be positive");
  std::vector<double> v(d, 0.0);
  std::uint64_t h = 1469598103934665603ULL;
  bool in_token = false;
  auto flush = [&] {
    if (in_token) {
      v[h % d] += 1.0;
      h = 1469598103934665603ULL;
      in_token = false;
    }
  };
  for (unsigned char c : headline) {
    if (std::isalnum(c)) {
      h = (h ^ static_cast<std::uint64_t>(std::tolower(c))) * 1099511628211ULL;
      in_token = true;
    } else {
      flush();
    }
  }
  flush();
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

// Reads a JSON-lines news file: {"ticker", "ts", "embedding"} per line.
// Records for tickers outside the universe are skipped and counted. When a
// line carries "headline" instead of "embedding" and fallback_dim > 0, the
// token-hash embedder fills in.
inline std::vector<NewsRecord> load_news(const std::string& path, const StockUniverse& universe,
                                         LoadNewsStats* stats = nullptr,
                                         std::size_t fallback_dim = 0) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open news file '" + path + "'");

  std::vector<NewsRecord> records;
  LoadNewsStats local;
  std::optional<std::size_t> dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = [&] { return path + ":" + std::to_string(line_no); };
    nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object())
      fail(Errc::malformed_record, "bad JSON at " + where());
    if (!j.contains("ticker") || !j["ticker"].is_string() || !j.contains("ts") ||
        !j["ts"].is_string())
      fail(Errc::malformed_record, "missing ticker/ts at " + where());

    NewsRecord rec;
    rec.ticker = j["ticker"].get<std::string>();
    rec.ts = Timestamp::parse(j["ts"].get<std::string>());

    if (j.contains("embedding")) {
      const auto& e = j["embedding"];
      if (!e.is_array()) fail(Errc::malformed_record, "embedding not an array at " + where());
      rec.embedding.reserve(e.size());
      for (const auto& x : e) {
        if (!x.is_number()) fail(Errc::malformed_record, "non-numeric embedding at " + where());
        const double v = x.get<double>();
        if (!std::isfinite(v)) fail(Errc::malformed_record, "non-finite embedding at " + where());
        rec.embedding.push_back(v);
      }
    } else if (j.contains("headline") && j["headline"].is_string() && fallback_dim > 0) {
      rec.embedding = embed_headline(j["headline"].get<std::string>(), fallback_dim);
    } else {
      fail(Errc::malformed_record, "no embedding at " + where());
    }

    if (!dim) dim = rec.embedding.size();
    if (rec.embedding.size() != *dim)
      fail(Errc::inconsistent_dimension,
           "embedding dim " + std::to_string(rec.embedding.size()) + " != " +
               std::to_string(*dim) + " at " + where());

    ++local.parsed;
    if (!universe.contains(rec.ticker)) {
      ++local.skipped_unknown_ticker;
      continue;
    }
    records.push_back(std::move(rec));
  }
  if (stats) *stats = local;
  return records;
}

// Daily aggregation: stock s's row on day d is the mean of the
// embeddings with timestamp in (close(d-1), close(d)], zero when it has none.
// Records are ordered by (timestamp, embedding) before summation so the
// result is bit-identical regardless of input order.
inline std::vector<DailyFeatures> aggregate_daily(const std::vector<NewsRecord>& news,
                                                  const StockUniverse& universe,
                                                  const TradingCalendar& calendar,
                                                  std::size_t dim,
                                                  AggregateReport* report = nullptr) {
  if (calendar.empty()) fail(Errc::empty_input, "empty trading calendar");
  const std::size_t n = universe.size();
  const std::size_t days = calendar.size();

  AggregateReport rep;
  rep.news_count = news.size();
  rep.total_cells = n * days;

  std::map<std::pair<std::size_t, std::size_t>, std::vector<const NewsRecord*>> cells;
  for (const NewsRecord& rec : news) {
    if (rec.embedding.size() != dim)
      fail(Errc::inconsistent_dimension, "news embedding dim mismatch for " + rec.ticker);
    const auto stock = universe.index_of(rec.ticker);
    if (!stock) {
      ++rep.skipped_unknown_ticker;
      continue;
    }
    const auto day = calendar.day_for_news(rec.ts);
    if (!day) {
      ++rep.skipped_after_last_close;
      continue;
    }
    cells[{*day, *stock}].push_back(&rec);
  }

  std::vector<DailyFeatures> out;
  out.reserve(days);
  for (std::size_t d = 0; d < days; ++d) out.push_back({calendar.day(d), Matrix(n, dim)});

  for (auto& [key, recs] : cells) {
    std::sort(recs.begin(), recs.end(), [](const NewsRecord* a, const NewsRecord* b) {
      if (a->ts != b->ts) return a->ts < b->ts;
      return a->embedding < b->embedding;
    });
    Matrix& x = out[key.first].x;
    const std::size_t s = key.second;
    for (const NewsRecord* rec : recs)
      for (std::size_t k = 0; k < dim; ++k) x(s, k) += rec->embedding[k];
    const double inv = 1.0 / static_cast<double>(recs.size());
    for (std::size_t k = 0; k < dim; ++k) x(s, k) *= inv;
  }

  rep.zero_cells = rep.total_cells - cells.size();
  rep.zero_vector_rate =
      rep.total_cells ? static_cast<double>(rep.zero_cells) / static_cast<double>(rep.total_cells)
                      : 0.0;
  if (report) *report = rep;
  return out;
}

}  // namespace mgrn
