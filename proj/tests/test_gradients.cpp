#include <catch_amalgamated.hpp>

#include <cmath>

#include "mgrn/gradsuite.hpp"

using namespace mgrn;

TEST_CASE("analytic gradients match finite differences", "[gradients]") {
  for (const GradCheckCase& c : standard_gradcheck_cases()) {
    DYNAMIC_SECTION("config " << c.name) {
      const GradCompare cmp = run_gradcheck_case(c);
      INFO("worst index " << cmp.worst_index << ": analytic " << cmp.analytic_at_worst
                          << " numeric " << cmp.numeric_at_worst);
      CHECK(cmp.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("clipped predictions stop the gradient", "[gradients]") {
  GradCheckCase c = make_gradcheck_case("clip", 1100, 3, 4, 1, {3}, {3}, 1, 2, 1);
  c.batch.resize(1);
  c.batch[0].label = 1;

  MgrnParams params = init_params(c.cfg, c.graphs.size());
  params.fc_b = {60.0, -60.0};  // saturate p_up at the clip boundary

  MgrnParams grads = zeros_like(params);
  BatchResult br = batch_forward_backward(c.x_days, c.graphs, c.batch, params, c.cfg, &grads);
  CHECK(br.loss_sum < 1e-9);
  for (double v : flatten(grads)) REQUIRE(v == 0.0);
}

TEST_CASE("gradients stay finite on all-zero features", "[gradients]") {
  // ReLU and softmax corners land exactly at zero here; the backward pass
  // must still produce finite numbers.
  GradCheckCase c = make_gradcheck_case("zeros", 1200, 3, 4, 2, {4, 3}, {3}, 2, 3, 3);
  for (Matrix& x : c.x_days) x.fill(0.0);
  MgrnParams params = init_params(c.cfg, c.graphs.size());
  MgrnParams grads = zeros_like(params);
  batch_forward_backward(c.x_days, c.graphs, c.batch, params, c.cfg, &grads);
  for (double v : flatten(grads)) REQUIRE(std::isfinite(v));
}
