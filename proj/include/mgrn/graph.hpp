#pragma once

// Stock relation graphs: correlation (weighted), sector and supply-chain
// (boolean), plus the identity graph used as the no-relation baseline.
// Each graph carries its raw adjacency A (unit diagonal, symmetric) and the
// symmetric normalization A_hat = D^{-1/2} A D^{-1/2} with D the diagonal
// degree matrix D_ii = sum_k A_ik.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgrn/csv.hpp"
#include "mgrn/error.hpp"
#include "mgrn/matrix.hpp"
#include "mgrn/universe.hpp"

namespace mgrn {

enum class GraphKind { boolean_relation, continuous_relation };

inline const char* graph_kind_name(GraphKind k) {
  return k == GraphKind::boolean_relation ? "boolean" : "continuous";
}

inline GraphKind graph_kind_from_name(const std::string& s) {
  if (s == "boolean") return GraphKind::boolean_relation;
  if (s == "continuous") return GraphKind::continuous_relation;
  fail(Errc::invalid_config, "unknown graph kind '" + s + "'");
}

struct RelationGraph {
  std::string name;
  GraphKind kind = GraphKind::boolean_relation;
  Matrix a;      // raw adjacency
  Matrix a_hat;  // normalized adjacency

  std::size_t n() const { return a.rows(); }
};

inline Matrix normalize_adjacency(const Matrix& a) {
  if (a.rows() != a.cols())
    fail(Errc::dimension_mismatch, "adjacency must be square");
  const std::size_t n = a.rows();
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (a(i, k) < 0.0) fail(Errc::invalid_config, "adjacency entries must be nonnegative");
      deg += a(i, k);
    }
    if (deg <= 0.0)
      fail(Errc::zero_degree, "row " + std::to_string(i) + " has zero degree");
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  // Fill the upper triangle and mirror so the result is exactly symmetric.
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = (inv_sqrt_deg[i] * a(i, j)) * inv_sqrt_deg[j];
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

namespace detail {
inline void validate_adjacency(const Matrix& a, GraphKind kind) {
  if (a.rows() != a.cols()) fail(Errc::dimension_mismatch, "adjacency must be square");
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < n; ++i) {
    if (a(i, i) != 1.0) fail(Errc::invalid_config, "adjacency diagonal must be 1");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = a(i, j);
      if (v != a(j, i)) fail(Errc::invalid_config, "adjacency must be symmetric");
      if (kind == GraphKind::boolean_relation) {
        if (v != 0.0 && v != 1.0)
          fail(Errc::invalid_config, "boolean adjacency entries must be 0 or 1");
      } else if (v < 0.0 || v > 1.0 || !std::isfinite(v)) {
        fail(Errc::invalid_config, "continuous adjacency entries must lie in [0,1]");
      }
    }
  }
}
}  // namespace detail

inline RelationGraph make_relation_graph(std::string name, GraphKind kind, Matrix a) {
  detail::validate_adjacency(a, kind);
  Matrix a_hat = normalize_adjacency(a);
  return RelationGraph{std::move(name), kind, std::move(a), std::move(a_hat)};
}

inline RelationGraph identity_graph(std::size_t n) {
  if (n < 1) fail(Errc::invalid_config, "identity graph needs n >= 1");
  RelationGraph g;
  g.name = "identity";
  g.kind = GraphKind::boolean_relation;
  g.a = Matrix::identity(n);
  g.a_hat = Matrix::identity(n);
  return g;
}

// Pearson correlation; nullopt when either series is constant.
inline std::optional<double> pearson(const std::vector<double>& x,
                                     const std::vector<double>& y) {
  if (x.size() != y.size())
    fail(Errc::length_mismatch, "pearson: series lengths differ");
  if (x.size() < 2) fail(Errc::length_mismatch, "pearson: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

struct CorrelationStats {
  std::size_t degenerate_pairs = 0;  // pairs involving a constant series
};

// Weighted graph from aligned per-ticker return series (universe order).
// Negative correlations clamp to zero; pairs with a constant series get 0.
inline RelationGraph build_correlation_graph(const std::vector<std::vector<double>>& returns,
                                             CorrelationStats* stats = nullptr) {
  if (returns.empty()) fail(Errc::empty_input, "no return series");
  const std::size_t n = returns.size();
  const std::size_t len = returns[0].size();
  if (len < 2) fail(Errc::length_mismatch, "return series need at least 2 points");
  for (const auto& r : returns)
    if (r.size() != len) fail(Errc::length_mismatch, "return series lengths differ");

  CorrelationStats local;
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto rho = pearson(returns[i], returns[j]);
      double v = 0.0;
      if (!rho.has_value())
        ++local.degenerate_pairs;
      else
        v = std::max(*rho, 0.0);
      // Guard against rounding just above 1 for near-identical series.
      v = std::min(v, 1.0);
      a(i, j) = v;
      a(j, i) = v;
    }
  }
  if (stats) *stats = local;
  return make_relation_graph("correlation", GraphKind::continuous_relation, std::move(a));
}

// GICS-style membership: one code per level, level 1 coarsest.
struct SectorCodes {
  std::array<std::string, 4> level;
};

inline RelationGraph build_sector_graph(const StockUniverse& universe,
                                        const std::map<std::string, SectorCodes>& membership,
                                        int level) {
  if (level < 1 || level > 4) fail(Errc::invalid_config, "sector level must be 1..4");
  const std::size_t n = universe.size();
  std::vector<const std::string*> code(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = membership.find(universe.ticker(i));
    if (it == membership.end() || it->second.level[level - 1].empty())
      fail(Errc::missing_membership,
           "no level-" + std::to_string(level) + " code for '" + universe.ticker(i) + "'");
    code[i] = &it->second.level[level - 1];
  }
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = (*code[i] == *code[j]) ? 1.0 : 0.0;
      a(i, j) = v;
      a(j, i) = v;
    }
  }
  return make_relation_graph("sector", GraphKind::boolean_relation, std::move(a));
}

struct SupplyChainStats {
  std::size_t skipped_edges = 0;  // edges touching tickers outside the universe
};

// Boolean graph from supplier-customer pairs, symmetrized. Edges naming
// unknown tickers are skipped and counted.
inline RelationGraph build_supply_chain_graph(
    const StockUniverse& universe, const std::vector<std::pair<std::string, std::string>>& edges,
    SupplyChainStats* stats = nullptr) {
  const std::size_t n = universe.size();
  SupplyChainStats local;
  Matrix a = Matrix::identity(n);
  for (const auto& [supplier, customer] : edges) {
    const auto i = universe.index_of(supplier);
    const auto j = universe.index_of(customer);
    if (!i || !j) {
      ++local.skipped_edges;
      continue;
    }
    if (*i == *j) continue;
    a(*i, *j) = 1.0;
    a(*j, *i) = 1.0;
  }
  if (stats) *stats = local;
  return make_relation_graph("supply-chain", GraphKind::boolean_relation, std::move(a));
}

// ---- file formats -------------------------------------------------------

// Sector CSV: ticker,level1,level2,level3,level4.
inline std::map<std::string, SectorCodes> load_sector_csv(const std::string& path) {
  CsvFile csv = read_csv(path);
  std::map<std::string, SectorCodes> out;
  for (const auto& row : csv.rows) {
    if (row.size() != 5)
      fail(Errc::malformed_record, "sector row needs 5 fields in " + path);
    out[row[0]] = SectorCodes{{row[1], row[2], row[3], row[4]}};
  }
  return out;
}

// Supply-chain CSV: supplier,customer.
inline std::vector<std::pair<std::string, std::string>> load_supply_csv(
    const std::string& path) {
  CsvFile csv = read_csv(path);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& row : csv.rows) {
    if (row.size() != 2)
      fail(Errc::malformed_record, "supply row needs 2 fields in " + path);
    out.emplace_back(row[0], row[1]);
  }
  return out;
}

// Matrix CSV with a ticker header row and column, plus a JSON sidecar.
inline void write_graph_csv(const std::string& csv_path, const std::string& sidecar_path,
                            const RelationGraph& graph, const StockUniverse& universe,
                            bool normalized) {
  const Matrix& m = normalized ? graph.a_hat : graph.a;
  if (m.rows() != universe.size())
    fail(Errc::dimension_mismatch, "graph size does not match universe");
  std::ostringstream out;
  for (const auto& t : universe.tickers()) out << ',' << t;
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << universe.ticker(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out << ',' << fmt_double(m(i, j));
    out << '\n';
  }
  write_text_file(csv_path, out.str());

  nlohmann::json sidecar{{"name", graph.name},
                         {"kind", graph_kind_name(graph.kind)},
                         {"n", m.rows()},
                         {"normalized", normalized}};
  write_text_file(sidecar_path, sidecar.dump(2) + "\n");
}

// Loads a raw (non-normalized) adjacency exported by write_graph_csv, or any
// custom graph in the same format. Ticker order must match the universe.
inline RelationGraph load_graph_csv(const std::string& csv_path,
                                    const std::string& sidecar_path,
                                    const StockUniverse& universe) {
  const auto sidecar = nlohmann::json::parse(read_text_file(sidecar_path));
  if (sidecar.value("normalized", false))
    fail(Errc::invalid_config, "expected a raw adjacency export, got a normalized one");
  CsvFile csv = read_csv(csv_path);
  const std::size_t n = universe.size();
  if (csv.header.size() != n + 1 || csv.rows.size() != n)
    fail(Errc::malformed_record, "graph csv shape does not match universe");
  for (std::size_t j = 0; j < n; ++j)
    if (csv.header[j + 1] != universe.ticker(j))
      fail(Errc::invalid_config, "graph csv ticker order differs from universe");
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (csv.rows[i].size() != n + 1 || csv.rows[i][0] != universe.ticker(i))
      fail(Errc::malformed_record, "graph csv row " + std::to_string(i) + " malformed");
    for (std::size_t j = 0; j < n; ++j)
      a(i, j) = parse_double(csv.rows[i][j + 1], csv_path);
  }
  return make_relation_graph(sidecar.value("name", "custom"),
                             graph_kind_from_name(sidecar.value("kind", "continuous")),
                             std::move(a));
}

}  // namespace mgrn
