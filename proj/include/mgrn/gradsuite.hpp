#pragma once

// Reusable finite-difference verification cases for the full model backward
// pass. Shared by the unit tests, the acceptance runner and the gradcheck
// CLI subcommand so they all exercise the same configurations.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mgrn/gradcheck.hpp"
#include "mgrn/graph.hpp"
#include "mgrn/model.hpp"
#include "mgrn/rng.hpp"

namespace mgrn {

struct GradCheckCase {
  std::string name;
  ModelConfig cfg;
  std::vector<RelationGraph> graphs;
  std::vector<Matrix> x_days;
  std::vector<Sample> batch;
};

// Random tiny configuration: g graphs (one identity when g > 1, the rest
// dense symmetric unit-diagonal), T+3 feature days with occasional zero
// rows, and a batch with overlapping windows plus one duplicate sample.
inline GradCheckCase make_gradcheck_case(std::string name, std::uint64_t seed, std::size_t n,
                                         std::size_t d, std::size_t g,
                                         std::vector<std::size_t> gcn_dims,
                                         std::vector<std::size_t> lstm_dims, std::size_t T,
                                         std::size_t attn_w, std::size_t batch_count) {
  GradCheckCase c;
  c.name = std::move(name);
  c.cfg.d = d;
  c.cfg.gcn_dims = std::move(gcn_dims);
  c.cfg.attn_w = attn_w;
  c.cfg.lstm_dims = std::move(lstm_dims);
  c.cfg.T = T;
  c.cfg.seed = seed;

  Rng rng(seed);
  for (std::size_t i = 0; i < g; ++i) {
    if (i == 0 && g > 1) {
      c.graphs.push_back(identity_graph(n));
      continue;
    }
    Matrix a(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      a(r, r) = 1.0;
      for (std::size_t col = r + 1; col < n; ++col) {
        const double v = rng.uniform();
        a(r, col) = v;
        a(col, r) = v;
      }
    }
    c.graphs.push_back(
        make_relation_graph("g" + std::to_string(i), GraphKind::continuous_relation, a));
  }

  const std::size_t days = T + 3;
  for (std::size_t day = 0; day < days; ++day) {
    Matrix x(n, d);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    if (day % 3 == 0)
      for (std::size_t k = 0; k < d; ++k) x(rng.below(n), k) = 0.0;  // no-news row
    c.x_days.push_back(std::move(x));
  }
  for (std::size_t i = 0; i < batch_count; ++i) {
    Sample s;
    s.day = T + rng.below(days - T);
    s.stock = rng.below(n);
    s.label = static_cast<int>(rng.below(2));
    c.batch.push_back(s);
  }
  c.batch.push_back(c.batch.front());  // duplicate to stress shared accumulation
  return c;
}

// The standard suite: five configurations inside the tiny-grid bounds
// (n<=5, d<=8, g in {1,2,3}, gcn<=[6,4], lstm<=[5], T<=3) plus a stacked
// two-layer LSTM for coverage beyond the grid.
inline std::vector<GradCheckCase> standard_gradcheck_cases() {
  std::vector<GradCheckCase> cases;
  cases.push_back(make_gradcheck_case("spot", 1001, 4, 6, 2, {5, 3}, {4}, 2, 3, 5));
  cases.push_back(make_gradcheck_case("single-graph", 1002, 3, 4, 1, {4}, {3}, 1, 2, 4));
  cases.push_back(make_gradcheck_case("three-graph", 1003, 5, 8, 3, {6, 4}, {5}, 3, 4, 6));
  cases.push_back(make_gradcheck_case("deep-gcn", 1004, 4, 5, 2, {6, 4}, {4}, 2, 5, 5));
  cases.push_back(make_gradcheck_case("wide-window", 1005, 3, 7, 2, {5}, {5}, 3, 3, 4));
  cases.push_back(make_gradcheck_case("two-layer-lstm", 1006, 4, 5, 2, {4, 3}, {4, 3}, 2, 3, 4));
  return cases;
}

// Analytic batch gradient vs central differences at h = 1e-5.
inline GradCompare run_gradcheck_case(const GradCheckCase& c) {
  const MgrnParams params = init_params(c.cfg, c.graphs.size());

  MgrnParams grads = zeros_like(params);
  batch_forward_backward(c.x_days, c.graphs, c.batch, params, c.cfg, &grads);
  const std::vector<double> analytic = flatten(grads);

  const MgrnParams shapes = params;
  auto loss_at = [&](const std::vector<double>& flat) {
    MgrnParams p = shapes;
    unflatten_into(flat, p);
    return batch_forward_backward(c.x_days, c.graphs, c.batch, p, c.cfg).loss_sum;
  };
  const std::vector<double> numeric = finite_diff_grad(loss_at, flatten(params), 1e-5);
  return compare_gradients(analytic, numeric);
}

}  // namespace mgrn
