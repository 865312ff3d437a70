#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgrn/csv.hpp"
#include "mgrn/dates.hpp"
#include "mgrn/error.hpp"
#include "mgrn/matrix.hpp"
#include "mgrn/rng.hpp"
#include "mgrn/universe.hpp"

namespace mgrn {

// Synthetic dataset with a planted, graph-propagated signal. Each stock-day
// draws a latent sentiment z; embeddings expose z along a fixed direction u,
// and the next-day market-adjusted return is beta * (neighbor mean of z)
// plus noise, so the label is predictable only through the truth graph.
struct SynthConfig {
  std::size_t n = 20;
  std::size_t d = 16;
  std::size_t days = 400;
  double beta = 0.05;
  double sigma = 0.01;
  std::string truth_graph = "sector";  // sector | supply | correlation | sector+supply
  std::uint64_t seed = 1;

  double embed_noise = 0.1;
  std::size_t sector_size = 5;
  std::size_t news_per_day = 1;
  double news_drop_rate = 0.0;
};

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(Errc::invalid_config, "synth config must be a JSON object");
  static const std::vector<std::string> known{
      "n",          "d",           "days",         "beta",          "sigma", "truth_graph",
      "seed",       "embed_noise", "sector_size",  "news_per_day",  "news_drop_rate"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      fail(Errc::invalid_config, "unknown synth config key '" + key + "'");

  SynthConfig cfg;
  auto get_size = [&](const char* key, std::size_t dflt) {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      fail(Errc::invalid_config, std::string("synth config '") + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
  };
  auto get_real = [&](const char* key, double dflt) {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(key);
    if (!v.is_number()) fail(Errc::invalid_config, std::string("synth config '") + key + "' must be numeric");
    return v.get<double>();
  };
  cfg.n = get_size("n", cfg.n);
  cfg.d = get_size("d", cfg.d);
  cfg.days = get_size("days", cfg.days);
  cfg.beta = get_real("beta", cfg.beta);
  cfg.sigma = get_real("sigma", cfg.sigma);
  if (j.contains("truth_graph")) cfg.truth_graph = j.at("truth_graph").get<std::string>();
  cfg.seed = get_size("seed", cfg.seed);
  cfg.embed_noise = get_real("embed_noise", cfg.embed_noise);
  cfg.sector_size = get_size("sector_size", cfg.sector_size);
  cfg.news_per_day = get_size("news_per_day", cfg.news_per_day);
  cfg.news_drop_rate = get_real("news_drop_rate", cfg.news_drop_rate);
  return cfg;
}

struct SynthResult {
  StockUniverse universe;
  TradingCalendar calendar;
  std::vector<double> u;  // unit direction carrying z in embedding space
  Matrix z;               // days x n latent sentiments
  Matrix returns;         // (days-1) x n market-adjusted next-day returns
  Matrix mix;             // n x n row-stochastic signal mixer: signal = mix * z_day
  std::map<std::string, std::string> files;
};

namespace detail {

inline void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.n < 2 || cfg.d < 1 || cfg.days < 3)
    fail(Errc::invalid_config, "synth needs n >= 2, d >= 1, days >= 3");
  if (cfg.beta < 0.0 || cfg.sigma < 0.0 || cfg.embed_noise < 0.0)
    fail(Errc::invalid_config, "beta, sigma and embed_noise must be non-negative");
  if (cfg.truth_graph != "sector" && cfg.truth_graph != "supply" &&
      cfg.truth_graph != "correlation" && cfg.truth_graph != "sector+supply")
    fail(Errc::invalid_config, "unknown truth_graph '" + cfg.truth_graph + "'");
  if (cfg.sector_size < 1 || cfg.sector_size > cfg.n)
    fail(Errc::invalid_config, "sector_size must be in [1, n]");
  if (cfg.news_per_day < 1) fail(Errc::invalid_config, "news_per_day must be >= 1");
  if (cfg.news_drop_rate < 0.0 || cfg.news_drop_rate >= 1.0)
    fail(Errc::invalid_config, "news_drop_rate must be in [0, 1)");
}

inline std::vector<Date> synth_weekdays(std::size_t count) {
  std::vector<Date> days;
  days.reserve(count);
  std::int64_t serial = Date{2020, 1, 6}.to_days();  // a Monday
  while (days.size() < count) {
    const int dow = static_cast<int>((serial + 4) % 7);  // 0 = Sunday
    if (dow != 0 && dow != 6) days.push_back(Date::from_days(serial));
    ++serial;
  }
  return days;
}

inline void add_uniform_rows(Matrix& mix, const std::vector<std::vector<std::size_t>>& nbrs,
                             double weight) {
  for (std::size_t s = 0; s < nbrs.size(); ++s) {
    const double w = weight / static_cast<double>(nbrs[s].size());
    for (std::size_t j : nbrs[s]) mix(s, j) += w;
  }
}

}  // namespace detail

inline SynthResult synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
  detail::validate_synth_config(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const std::size_t n = cfg.n;
  std::vector<std::string> tickers;
  tickers.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "S%03zu", i);
    tickers.emplace_back(buf);
  }
  StockUniverse universe(tickers);
  TradingCalendar calendar(detail::synth_weekdays(cfg.days));

  // Neighborhood structures. Sector blocks are contiguous runs of
  // sector_size; the supply ring links i with i +- sector_size (mod n), so
  // its neighborhoods cut across the blocks; the "correlation" truth uses
  // interleaved groups matching neither written file and is discovered only
  // through realized return correlations.
  const std::size_t block = cfg.sector_size;
  std::vector<std::vector<std::size_t>> sector_nbrs(n), supply_nbrs(n), interleave_nbrs(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < n; ++j)
      if (j / block == s / block) sector_nbrs[s].push_back(j);
    supply_nbrs[s].push_back(s);
    const std::size_t stride = block % n;
    if (stride != 0) {
      const std::size_t fwd = (s + stride) % n;
      const std::size_t bwd = (s + n - stride) % n;
      if (fwd != s) supply_nbrs[s].push_back(fwd);
      if (bwd != s && bwd != fwd) supply_nbrs[s].push_back(bwd);
    }
    const std::size_t groups = std::max<std::size_t>(2, n / block);
    for (std::size_t j = 0; j < n; ++j)
      if (j % groups == s % groups) interleave_nbrs[s].push_back(j);
  }

  Matrix mix(n, n);
  if (cfg.truth_graph == "sector") {
    detail::add_uniform_rows(mix, sector_nbrs, 1.0);
  } else if (cfg.truth_graph == "supply") {
    detail::add_uniform_rows(mix, supply_nbrs, 1.0);
  } else if (cfg.truth_graph == "correlation") {
    detail::add_uniform_rows(mix, interleave_nbrs, 1.0);
  } else {  // sector+supply
    detail::add_uniform_rows(mix, sector_nbrs, 0.5);
    detail::add_uniform_rows(mix, supply_nbrs, 0.5);
  }

  Rng rng(cfg.seed);

  std::vector<double> u(cfg.d);
  for (double& x : u) x = rng.normal();
  double norm = 0.0;
  for (double x : u) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : u) x /= norm;

  Matrix z(cfg.days, n);
  for (std::size_t day = 0; day < cfg.days; ++day)
    for (std::size_t s = 0; s < n; ++s) z(day, s) = rng.normal();

  // News: one line per item, day-major then stock-major then item index.
  std::string news;
  for (std::size_t day = 0; day < cfg.days; ++day) {
    for (std::size_t s = 0; s < n; ++s) {
      if (cfg.news_drop_rate > 0.0 && rng.uniform() < cfg.news_drop_rate) continue;
      for (std::size_t item = 0; item < cfg.news_per_day; ++item) {
        const Timestamp ts =
            Timestamp::from_date_minute(calendar.day(day), 12 * 60 + static_cast<int>(item));
        news += "{\"ticker\":\"" + universe.ticker(s) + "\",\"ts\":\"" + ts.str() +
                "\",\"embedding\":[";
        for (std::size_t k = 0; k < cfg.d; ++k) {
          const double v = z(day, s) * u[k] + cfg.embed_noise * rng.normal();
          if (k) news += ',';
          news += fmt_double(v);
        }
        news += "]}\n";
      }
    }
  }

  Matrix returns(cfg.days - 1, n);
  for (std::size_t day = 0; day + 1 < cfg.days; ++day)
    for (std::size_t s = 0; s < n; ++s) {
      double signal = 0.0;
      for (std::size_t j = 0; j < n; ++j) signal += mix(s, j) * z(day, j);
      returns(day, s) = cfg.beta * signal + cfg.sigma * rng.normal();
    }

  // Prices walk the planted returns against a flat index, so the
  // market-adjusted return recomputed from files equals returns(day, s)
  // up to float round-trip.
  Matrix prices(cfg.days, n);
  for (std::size_t s = 0; s < n; ++s) prices(0, s) = 100.0;
  for (std::size_t day = 0; day + 1 < cfg.days; ++day)
    for (std::size_t s = 0; s < n; ++s) {
      const double gross = 1.0 + returns(day, s);
      if (gross <= 0.01)
        fail(Errc::invalid_config, "beta/sigma too large: synthetic price went non-positive");
      prices(day + 1, s) = prices(day, s) * gross;
    }

  std::string price_csv = "date,ticker,close\n";
  std::string index_csv = "date,close\n";
  for (std::size_t day = 0; day < cfg.days; ++day) {
    const std::string ds = calendar.day(day).str();
    for (std::size_t s = 0; s < n; ++s)
      price_csv += ds + "," + universe.ticker(s) + "," + fmt_double(prices(day, s)) + "\n";
    index_csv += ds + ",1000\n";
  }

  std::string sector_csv = "ticker,level1,level2,level3,level4\n";
  for (std::size_t s = 0; s < n; ++s) {
    const std::string l1 = std::to_string(10 + s / block);
    sector_csv += universe.ticker(s) + "," + l1 + "," + l1 + "10," + l1 + "1010," + l1 + "101010\n";
  }

  std::string supply_csv = "supplier,customer\n";
  const std::size_t stride = block % n;
  if (stride != 0)
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t customer = (s + stride) % n;
      if (customer != s)
        supply_csv += universe.ticker(s) + "," + universe.ticker(customer) + "\n";
    }

  SynthResult result;
  result.universe = universe;
  result.calendar = calendar;
  result.u = u;
  result.z = std::move(z);
  result.returns = std::move(returns);
  result.mix = std::move(mix);
  const auto emit = [&](const char* name, const std::string& body) {
    const std::string path = (fs::path(out_dir) / name).string();
    write_text_file(path, body);
    result.files[name] = path;
  };
  emit("news.jsonl", news);
  emit("prices.csv", price_csv);
  emit("index.csv", index_csv);
  emit("sector.csv", sector_csv);
  emit("supply.csv", supply_csv);
  return result;
}

}  // namespace mgrn
