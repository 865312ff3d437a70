#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mgrn/csv.hpp"
#include "mgrn/model.hpp"

namespace mgrn {

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_acc = 0.0;
};

struct TrainResult {
  MgrnParams params;        // best dev-loss epoch
  MgrnParams final_params;  // last epoch
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

struct AdamState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

// One bias-corrected Adam update over the canonical flat parameter order.
inline void adam_step(MgrnParams& params, const MgrnParams& grads, AdamState& state,
                      const ModelConfig& cfg) {
  std::vector<double> flat = flatten(params);
  const std::vector<double> g = flatten(grads);
  if (g.size() != flat.size())
    fail(Errc::shape_mismatch, "gradient size does not match parameter size");
  if (state.m.empty()) {
    state.m.assign(flat.size(), 0.0);
    state.v.assign(flat.size(), 0.0);
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < flat.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    flat[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
  unflatten_into(flat, params);
}

// Direction is up when p_up > 0.5 (score > 0), down otherwise.
inline double direction_accuracy(const std::vector<double>& p_up,
                                 const std::vector<Sample>& samples) {
  if (p_up.size() != samples.size())
    fail(Errc::length_mismatch, "probability/sample count mismatch");
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool up = p_up[i] > 0.5;
    correct += (up && samples[i].label == 1) || (!up && samples[i].label == 0);
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// Minibatch Adam training with per-epoch seeded shuffles. Epoch e shuffles
// with Rng(cfg.seed).fork(e + 1); initialization consumes Rng(cfg.seed)
// directly, so the two streams never overlap.
inline TrainResult train(const std::vector<Matrix>& x_days,
                         const std::vector<RelationGraph>& graphs,
                         const std::vector<Sample>& train_samples,
                         const std::vector<Sample>& dev_samples, const ModelConfig& cfg) {
  cfg.validate();
  if (graphs.empty()) fail(Errc::no_graphs, "training needs at least one graph");
  if (train_samples.empty()) fail(Errc::empty_dataset, "no training samples");

  TrainResult res;
  res.params = init_params(cfg, graphs.size());
  res.final_params = res.params;
  if (cfg.epochs == 0) return res;

  MgrnParams params = res.params;
  AdamState adam;
  double best_dev = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = Rng(cfg.seed).fork(epoch + 1);
    epoch_rng.shuffle(order);

    double loss_acc = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<Sample> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train_samples[order[i]]);
      MgrnParams grads = zeros_like(params);
      BatchResult br = batch_forward_backward(x_days, graphs, batch, params, cfg, &grads);
      if (!std::isfinite(br.loss_sum)) fail(Errc::non_finite, "training loss diverged");
      loss_acc += br.loss_sum;
      adam_step(params, grads, adam, cfg);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_acc / static_cast<double>(train_samples.size());
    if (!dev_samples.empty()) {
      const auto p = predict_samples(x_days, graphs, dev_samples, params, cfg);
      double dev_loss = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) dev_loss += bce_term(p[i], dev_samples[i].label);
      stats.dev_loss = dev_loss / static_cast<double>(dev_samples.size());
      stats.dev_acc = direction_accuracy(p, dev_samples);
    } else {
      stats.dev_loss = std::numeric_limits<double>::quiet_NaN();
      stats.dev_acc = std::numeric_limits<double>::quiet_NaN();
    }
    res.history.push_back(stats);

    if (dev_samples.empty() || stats.dev_loss < best_dev) {
      best_dev = stats.dev_loss;
      res.best_epoch = epoch;
      res.params = params;
    }
  }
  res.final_params = params;
  return res;
}

inline std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,dev_loss,dev_acc\n";
  for (const EpochStats& e : history)
    out += std::to_string(e.epoch) + "," + fmt_double(e.train_loss) + "," +
           fmt_double(e.dev_loss) + "," + fmt_double(e.dev_acc) + "\n";
  return out;
}

}  // namespace mgrn
