#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgrn/error.hpp"
#include "mgrn/graph.hpp"
#include "mgrn/matrix.hpp"
#include "mgrn/rng.hpp"

namespace mgrn {

inline constexpr double kProbClip = 1e-12;

struct ModelConfig {
  std::size_t d = 0;  // news embedding width, required
  std::vector<std::size_t> gcn_dims{128, 64};
  std::size_t attn_w = 64;
  std::vector<std::size_t> lstm_dims{128, 64};
  std::size_t T = 20;
  std::size_t delta_t = 1;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  std::size_t gcn_out() const { return gcn_dims.back(); }
  std::size_t lstm_in() const { return d + gcn_dims.back(); }

  void validate() const {
    if (d < 1) fail(Errc::invalid_config, "model config needs d >= 1");
    if (gcn_dims.empty() || lstm_dims.empty())
      fail(Errc::invalid_config, "gcn_dims and lstm_dims must be non-empty");
    for (std::size_t w : gcn_dims)
      if (w < 1) fail(Errc::invalid_config, "gcn_dims entries must be >= 1");
    for (std::size_t w : lstm_dims)
      if (w < 1) fail(Errc::invalid_config, "lstm_dims entries must be >= 1");
    if (attn_w < 1) fail(Errc::invalid_config, "attn_w must be >= 1");
    if (T < 1) fail(Errc::invalid_config, "T must be >= 1");
    if (delta_t < 1) fail(Errc::invalid_config, "delta_t must be >= 1");
    if (!(lr > 0.0)) fail(Errc::invalid_config, "lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      fail(Errc::invalid_config, "Adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) fail(Errc::invalid_config, "Adam eps must be positive");
    if (batch_size < 1) fail(Errc::invalid_config, "batch_size must be >= 1");
  }
};

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(Errc::invalid_config, "model config must be a JSON object");
  static const std::vector<std::string> known{
      "d",   "gcn_dims", "attn_w", "lstm_dims", "T",      "delta_t",    "lr",
      "beta1", "beta2",  "eps",    "epochs",    "batch_size", "seed"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      fail(Errc::invalid_config, "unknown model config key '" + key + "'");
  if (!j.contains("d")) fail(Errc::invalid_config, "model config requires 'd'");

  ModelConfig cfg;
  cfg.d = j.at("d").get<std::size_t>();
  if (j.contains("gcn_dims")) cfg.gcn_dims = j.at("gcn_dims").get<std::vector<std::size_t>>();
  if (j.contains("attn_w")) cfg.attn_w = j.at("attn_w").get<std::size_t>();
  if (j.contains("lstm_dims")) cfg.lstm_dims = j.at("lstm_dims").get<std::vector<std::size_t>>();
  if (j.contains("T")) cfg.T = j.at("T").get<std::size_t>();
  if (j.contains("delta_t")) cfg.delta_t = j.at("delta_t").get<std::size_t>();
  if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
  if (j.contains("beta1")) cfg.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) cfg.beta2 = j.at("beta2").get<double>();
  if (j.contains("eps")) cfg.eps = j.at("eps").get<double>();
  if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"d", cfg.d},
                        {"gcn_dims", cfg.gcn_dims},
                        {"attn_w", cfg.attn_w},
                        {"lstm_dims", cfg.lstm_dims},
                        {"T", cfg.T},
                        {"delta_t", cfg.delta_t},
                        {"lr", cfg.lr},
                        {"beta1", cfg.beta1},
                        {"beta2", cfg.beta2},
                        {"eps", cfg.eps},
                        {"epochs", cfg.epochs},
                        {"batch_size", cfg.batch_size},
                        {"seed", cfg.seed}};
}

struct LstmLayerParams {
  Matrix w_xi, w_hi;
  std::vector<double> b_i;
  Matrix w_xf, w_hf;
  std::vector<double> b_f;
  Matrix w_xg, w_hg;
  std::vector<double> b_g;
  Matrix w_xo, w_ho;
  std::vector<double> b_o;
};

// All trainable parameters. `version` stamps forward traces so a backward
// pass against updated parameters raises StaleTrace instead of silently
// mixing activations and weights.
struct MgrnParams {
  std::vector<std::vector<Matrix>> gcn_w;  // [graph][layer]
  Matrix attn_proj;                        // f_L x w
  Matrix attn_query;                       // w x 1
  std::vector<LstmLayerParams> lstm;
  Matrix fc_w;  // last lstm dim x 2
  std::vector<double> fc_b;
  std::uint64_t version = 0;
};

// Canonical parameter order, shared by flatten/unflatten, Adam state and the
// checkpoint format: GCN weights graph-major layer-minor, attention
// projection and query, per LSTM layer the i/f/g/o gates as (w_x, w_h, b),
// then the FC head.
template <typename Params, typename F>
void visit_params(Params& p, F&& f) {
  for (auto& per_graph : p.gcn_w)
    for (auto& w : per_graph) f(w);
  f(p.attn_proj);
  f(p.attn_query);
  for (auto& l : p.lstm) {
    f(l.w_xi);
    f(l.w_hi);
    f(l.b_i);
    f(l.w_xf);
    f(l.w_hf);
    f(l.b_f);
    f(l.w_xg);
    f(l.w_hg);
    f(l.b_g);
    f(l.w_xo);
    f(l.w_ho);
    f(l.b_o);
  }
  f(p.fc_w);
  f(p.fc_b);
}

namespace detail {

inline double* tensor_data(Matrix& m) { return m.data(); }
inline const double* tensor_data(const Matrix& m) { return m.data(); }
inline double* tensor_data(std::vector<double>& v) { return v.data(); }
inline const double* tensor_data(const std::vector<double>& v) { return v.data(); }
inline std::size_t tensor_size(const Matrix& m) { return m.size(); }
inline std::size_t tensor_size(const std::vector<double>& v) { return v.size(); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Matrix relu(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.data()[i] < 0.0) out.data()[i] = 0.0;
  return out;
}

// y[j] += sum_k x[k] * w(k, j)
inline void vecmat_acc(const std::vector<double>& x, const Matrix& w, std::vector<double>& y) {
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    if (xk == 0.0) continue;
    const double* wr = w.row(k);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += xk * wr[j];
  }
}

// y[k] += sum_j w(k, j) * d[j]
inline void matvec_acc(const Matrix& w, const std::vector<double>& d, std::vector<double>& y) {
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double* wr = w.row(k);
    double acc = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) acc += wr[j] * d[j];
    y[k] += acc;
  }
}

// w(k, j) += x[k] * d[j]
inline void outer_acc(const std::vector<double>& x, const std::vector<double>& d, Matrix& w) {
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    if (xk == 0.0) continue;
    double* wr = w.row(k);
    for (std::size_t j = 0; j < d.size(); ++j) wr[j] += xk * d[j];
  }
}

inline void axpy(std::vector<double>& y, const std::vector<double>& x, double a = 1.0) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace detail

inline std::size_t param_count(const MgrnParams& p) {
  std::size_t count = 0;
  visit_params(p, [&](const auto& t) { count += detail::tensor_size(t); });
  return count;
}

inline std::vector<double> flatten(const MgrnParams& p) {
  std::vector<double> flat;
  flat.reserve(param_count(p));
  visit_params(p, [&](const auto& t) {
    const double* d = detail::tensor_data(t);
    flat.insert(flat.end(), d, d + detail::tensor_size(t));
  });
  return flat;
}

inline void unflatten_into(const std::vector<double>& flat, MgrnParams& p) {
  std::size_t at = 0;
  visit_params(p, [&](auto& t) {
    const std::size_t len = detail::tensor_size(t);
    if (at + len > flat.size()) fail(Errc::shape_mismatch, "flat parameter vector too short");
    std::copy(flat.begin() + at, flat.begin() + at + len, detail::tensor_data(t));
    at += len;
  });
  if (at != flat.size())
    fail(Errc::shape_mismatch, "flat parameter vector length " + std::to_string(flat.size()) +
                                   " != expected " + std::to_string(at));
  ++p.version;
}

inline MgrnParams zeros_like(const MgrnParams& p) {
  MgrnParams z = p;
  visit_params(z, [](auto& t) {
    double* d = detail::tensor_data(t);
    std::fill(d, d + detail::tensor_size(t), 0.0);
  });
  z.version = p.version;
  return z;
}

// Zero-valued parameters with the shapes implied by cfg and the graph count.
inline MgrnParams make_params(const ModelConfig& cfg, std::size_t n_graphs) {
  cfg.validate();
  if (n_graphs < 1) fail(Errc::no_graphs, "model needs at least one graph");
  MgrnParams p;
  p.gcn_w.resize(n_graphs);
  for (auto& per_graph : p.gcn_w) {
    std::size_t in = cfg.d;
    for (std::size_t width : cfg.gcn_dims) {
      per_graph.emplace_back(in, width);
      in = width;
    }
  }
  p.attn_proj = Matrix(cfg.gcn_out(), cfg.attn_w);
  p.attn_query = Matrix(cfg.attn_w, 1);
  std::size_t in = cfg.lstm_in();
  for (std::size_t hid : cfg.lstm_dims) {
    LstmLayerParams l;
    l.w_xi = Matrix(in, hid);
    l.w_hi = Matrix(hid, hid);
    l.b_i.assign(hid, 0.0);
    l.w_xf = Matrix(in, hid);
    l.w_hf = Matrix(hid, hid);
    l.b_f.assign(hid, 0.0);
    l.w_xg = Matrix(in, hid);
    l.w_hg = Matrix(hid, hid);
    l.b_g.assign(hid, 0.0);
    l.w_xo = Matrix(in, hid);
    l.w_ho = Matrix(hid, hid);
    l.b_o.assign(hid, 0.0);
    p.lstm.push_back(std::move(l));
    in = hid;
  }
  p.fc_w = Matrix(cfg.lstm_dims.back(), 2);
  p.fc_b.assign(2, 0.0);
  return p;
}

// Xavier-uniform weights drawn in canonical order from Rng(cfg.seed), zero
// biases except the forget gate at +1.
inline MgrnParams init_params(const ModelConfig& cfg, std::size_t n_graphs) {
  MgrnParams p = make_params(cfg, n_graphs);
  Rng rng(cfg.seed);
  auto draw = [&](Matrix& m) { m = init_matrix(rng, m.rows(), m.cols()); };
  for (auto& per_graph : p.gcn_w)
    for (auto& w : per_graph) draw(w);
  draw(p.attn_proj);
  draw(p.attn_query);
  for (auto& l : p.lstm) {
    draw(l.w_xi);
    draw(l.w_hi);
    draw(l.w_xf);
    draw(l.w_hf);
    draw(l.w_xg);
    draw(l.w_hg);
    draw(l.w_xo);
    draw(l.w_ho);
    std::fill(l.b_f.begin(), l.b_f.end(), 1.0);
  }
  draw(p.fc_w);
  p.version = 1;
  return p;
}

// ---------------------------------------------------------------------------
// Forward operations

struct GcnTrace {
  std::vector<Matrix> h;    // layer inputs; h[0] = x, h[L] = output
  std::vector<Matrix> ah;   // a_hat * h[l]
  std::vector<Matrix> pre;  // ah[l] * w[l], before activation
};

// H^(l+1) = ReLU(A_hat H^(l) W^(l)) on hidden layers, identity on the last.
inline Matrix gcn_forward(const Matrix& a_hat, const Matrix& x, const std::vector<Matrix>& weights,
                          GcnTrace* trace = nullptr) {
  if (a_hat.rows() != a_hat.cols()) fail(Errc::shape_mismatch, "a_hat must be square");
  if (x.rows() != a_hat.rows())
    fail(Errc::shape_mismatch, "feature rows " + std::to_string(x.rows()) + " != graph size " +
                                   std::to_string(a_hat.rows()));
  if (weights.empty()) fail(Errc::shape_mismatch, "GCN needs at least one layer");

  Matrix h = x;
  if (trace) {
    trace->h.clear();
    trace->ah.clear();
    trace->pre.clear();
    trace->h.push_back(h);
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != h.cols())
      fail(Errc::shape_mismatch, "GCN layer " + std::to_string(l) + " expects input width " +
                                     std::to_string(weights[l].rows()) + ", got " +
                                     std::to_string(h.cols()));
    Matrix ah = matmul(a_hat, h);
    Matrix pre = matmul(ah, weights[l]);
    Matrix next = (l + 1 < weights.size()) ? detail::relu(pre) : pre;
    if (trace) {
      trace->ah.push_back(std::move(ah));
      trace->pre.push_back(std::move(pre));
      trace->h.push_back(next);
    }
    h = std::move(next);
  }
  return h;
}

struct AttentionResult {
  Matrix z;      // n x f_L fused embedding
  Matrix alpha;  // n x g per-node coefficients, rows sum to 1
};

// Per-node softmax over graphs of the scores Z_i (W_a q); the coefficients
// broadcast across feature columns when mixing the Z_i rows.
inline AttentionResult attention_aggregate(const std::vector<Matrix>& z_list, const Matrix& w_a,
                                           const Matrix& q_attn, Matrix* v_out = nullptr) {
  if (z_list.empty()) fail(Errc::empty_input, "attention needs at least one graph output");
  const std::size_t n = z_list[0].rows();
  const std::size_t f = z_list[0].cols();
  const std::size_t g = z_list.size();
  for (const Matrix& z : z_list)
    if (z.rows() != n || z.cols() != f)
      fail(Errc::shape_mismatch, "attention inputs must share one shape");
  if (w_a.rows() != f) fail(Errc::shape_mismatch, "attention projection expects f_L rows");
  if (q_attn.rows() != w_a.cols() || q_attn.cols() != 1)
    fail(Errc::shape_mismatch, "attention query must be w x 1");

  const Matrix v = matmul(w_a, q_attn);  // f x 1
  if (v_out) *v_out = v;

  AttentionResult res;
  res.alpha = Matrix(n, g);
  res.z = Matrix(n, f);
  std::vector<double> logits(g);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < g; ++i) {
      const double* zr = z_list[i].row(r);
      double acc = 0.0;
      for (std::size_t k = 0; k < f; ++k) acc += zr[k] * v(k, 0);
      logits[i] = acc;
    }
    const std::vector<double> alpha = softmax(logits);
    double* out = res.z.row(r);
    for (std::size_t i = 0; i < g; ++i) {
      res.alpha(r, i) = alpha[i];
      const double* zr = z_list[i].row(r);
      for (std::size_t k = 0; k < f; ++k) out[k] += alpha[i] * zr[k];
    }
  }
  return res;
}

inline Matrix concat_features(const Matrix& x, const Matrix& z) {
  if (x.rows() != z.rows())
    fail(Errc::row_mismatch, "concat rows " + std::to_string(x.rows()) + " vs " +
                                 std::to_string(z.rows()));
  Matrix out(x.rows(), x.cols() + z.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double* o = out.row(r);
    std::copy(x.row(r), x.row(r) + x.cols(), o);
    std::copy(z.row(r), z.row(r) + z.cols(), o + x.cols());
  }
  return out;
}

struct CellTrace {
  std::vector<double> x, h_prev, c_prev;
  std::vector<double> i, f, g, o, c, tanh_c, h;
};

// Standard LSTM stack over the sequence (oldest first), zero initial states;
// returns the top layer's final hidden vector.
inline std::vector<double> lstm_forward(const std::vector<std::vector<double>>& seq,
                                        const std::vector<LstmLayerParams>& layers,
                                        std::vector<std::vector<CellTrace>>* trace = nullptr) {
  if (seq.empty()) fail(Errc::empty_input, "LSTM needs a non-empty sequence");
  if (layers.empty()) fail(Errc::shape_mismatch, "LSTM needs at least one layer");
  if (trace) trace->assign(layers.size(), {});

  std::vector<std::vector<double>> inputs = seq;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LstmLayerParams& P = layers[l];
    const std::size_t in = P.w_xi.rows();
    const std::size_t hid = P.b_i.size();
    std::vector<std::vector<double>> outputs;
    outputs.reserve(inputs.size());
    std::vector<double> h(hid, 0.0), c(hid, 0.0);
    for (const std::vector<double>& x : inputs) {
      if (x.size() != in)
        fail(Errc::shape_mismatch, "LSTM layer " + std::to_string(l) + " expects input width " +
                                       std::to_string(in) + ", got " + std::to_string(x.size()));
      CellTrace ct;
      ct.x = x;
      ct.h_prev = h;
      ct.c_prev = c;
      std::vector<double> ai(P.b_i), af(P.b_f), ag(P.b_g), ao(P.b_o);
      detail::vecmat_acc(x, P.w_xi, ai);
      detail::vecmat_acc(h, P.w_hi, ai);
      detail::vecmat_acc(x, P.w_xf, af);
      detail::vecmat_acc(h, P.w_hf, af);
      detail::vecmat_acc(x, P.w_xg, ag);
      detail::vecmat_acc(h, P.w_hg, ag);
      detail::vecmat_acc(x, P.w_xo, ao);
      detail::vecmat_acc(h, P.w_ho, ao);
      ct.i.resize(hid);
      ct.f.resize(hid);
      ct.g.resize(hid);
      ct.o.resize(hid);
      ct.c.resize(hid);
      ct.tanh_c.resize(hid);
      for (std::size_t j = 0; j < hid; ++j) {
        ct.i[j] = detail::sigmoid(ai[j]);
        ct.f[j] = detail::sigmoid(af[j]);
        ct.g[j] = std::tanh(ag[j]);
        ct.o[j] = detail::sigmoid(ao[j]);
        ct.c[j] = ct.f[j] * c[j] + ct.i[j] * ct.g[j];
        ct.tanh_c[j] = std::tanh(ct.c[j]);
      }
      c = ct.c;
      h.resize(hid);
      for (std::size_t j = 0; j < hid; ++j) h[j] = ct.o[j] * ct.tanh_c[j];
      ct.h = h;
      outputs.push_back(h);
      if (trace) (*trace)[l].push_back(std::move(ct));
    }
    inputs = std::move(outputs);
  }
  return inputs.back();
}

// Two-way softmax head; returns (p_up, p_down). Saturated logits would round
// the softmax to exactly 0 or 1, so the pair is clamped into the clipped
// probability range to keep both strictly inside (0, 1).
inline std::pair<double, double> predict(const std::vector<double>& hidden, const Matrix& fc_w,
                                         const std::vector<double>& fc_b) {
  if (fc_w.rows() != hidden.size() || fc_w.cols() != 2 || fc_b.size() != 2)
    fail(Errc::shape_mismatch, "FC head expects hidden x 2 weights and a 2-vector bias");
  std::vector<double> logits = fc_b;
  detail::vecmat_acc(hidden, fc_w, logits);
  const std::vector<double> p = softmax(logits);
  const double up = std::clamp(p[0], kProbClip, 1.0 - kProbClip);
  return {up, 1.0 - up};
}

inline double bce_term(double p_up, int y) {
  const double p = std::clamp(p_up, kProbClip, 1.0 - kProbClip);
  return y ? -std::log(p) : -std::log(1.0 - p);
}

// Binary cross entropy, summed over samples.
inline double bce_loss(const std::vector<double>& p_up, const std::vector<int>& y) {
  if (p_up.size() != y.size())
    fail(Errc::length_mismatch, "bce_loss: " + std::to_string(p_up.size()) + " probabilities vs " +
                                    std::to_string(y.size()) + " labels");
  double loss = 0.0;
  for (std::size_t i = 0; i < p_up.size(); ++i) loss += bce_term(p_up[i], y[i]);
  return loss;
}

// ---------------------------------------------------------------------------
// Per-day shared pass and per-sample recurrent pass

struct DayTrace {
  std::vector<GcnTrace> gcn;  // per graph
  Matrix alpha;               // n x g
  Matrix v;                   // f x 1, W_a q
  Matrix xhat;                // n x (d + f)
  std::uint64_t params_version = 0;
};

inline DayTrace day_forward(const Matrix& x, const std::vector<RelationGraph>& graphs,
                            const MgrnParams& params, const ModelConfig& cfg) {
  if (graphs.empty()) fail(Errc::no_graphs, "model needs at least one graph");
  if (params.gcn_w.size() != graphs.size())
    fail(Errc::shape_mismatch, "parameter set covers " + std::to_string(params.gcn_w.size()) +
                                   " graphs, got " + std::to_string(graphs.size()));
  if (x.cols() != cfg.d) fail(Errc::shape_mismatch, "feature width != configured d");

  DayTrace dt;
  dt.params_version = params.version;
  dt.gcn.resize(graphs.size());
  std::vector<Matrix> z_list;
  z_list.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i)
    z_list.push_back(gcn_forward(graphs[i].a_hat, x, params.gcn_w[i], &dt.gcn[i]));
  AttentionResult att = attention_aggregate(z_list, params.attn_proj, params.attn_query, &dt.v);
  dt.alpha = std::move(att.alpha);
  dt.xhat = concat_features(x, att.z);
  return dt;
}

struct Sample {
  std::size_t day = 0;
  std::size_t stock = 0;
  int label = 0;
};

struct SampleTrace {
  Sample sample;
  std::vector<std::vector<CellTrace>> cells;  // [layer][t]
  std::vector<double> hidden;
  double p_up = 0.5;
  std::uint64_t params_version = 0;
};

inline SampleTrace sample_forward(const std::map<std::size_t, DayTrace>& day_traces,
                                  const Sample& s, const MgrnParams& params,
                                  const ModelConfig& cfg) {
  if (s.day < cfg.T)
    fail(Errc::missing_day, "sample day " + std::to_string(s.day) + " lacks a full look-back");
  std::vector<std::vector<double>> seq;
  seq.reserve(cfg.T + 1);
  for (std::size_t day = s.day - cfg.T; day <= s.day; ++day) {
    auto it = day_traces.find(day);
    if (it == day_traces.end()) fail(Errc::missing_day, "no trace for day " + std::to_string(day));
    const DayTrace& dt = it->second;
    if (dt.params_version != params.version)
      fail(Errc::stale_trace, "day trace predates the current parameters");
    if (s.stock >= dt.xhat.rows()) fail(Errc::shape_mismatch, "stock index out of range");
    seq.emplace_back(dt.xhat.row(s.stock), dt.xhat.row(s.stock) + dt.xhat.cols());
  }
  SampleTrace st;
  st.sample = s;
  st.params_version = params.version;
  st.hidden = lstm_forward(seq, params.lstm, &st.cells);
  st.p_up = predict(st.hidden, params.fc_w, params.fc_b).first;
  return st;
}

// FC and LSTM backward for one sample; parameter gradients accumulate into
// grads, feature gradients into the per-day d_xhat rows.
inline void sample_backward(const SampleTrace& st, const MgrnParams& params,
                            const ModelConfig& cfg, MgrnParams& grads,
                            std::map<std::size_t, Matrix>& d_xhat, std::size_t n_stocks) {
  if (st.params_version != params.version)
    fail(Errc::stale_trace, "sample trace predates the current parameters");

  // At or beyond the clip boundary the loss is constant, so no gradient flows.
  const double p = st.p_up;
  const int y = st.sample.label;
  const bool clipped = p <= kProbClip || p >= 1.0 - kProbClip;
  const double d0 = clipped ? 0.0 : p - static_cast<double>(y);

  const std::size_t top = cfg.lstm_dims.back();
  std::vector<double> dh_top(top, 0.0);
  for (std::size_t k = 0; k < top; ++k) {
    grads.fc_w(k, 0) += st.hidden[k] * d0;
    grads.fc_w(k, 1) -= st.hidden[k] * d0;
    dh_top[k] = params.fc_w(k, 0) * d0 - params.fc_w(k, 1) * d0;
  }
  grads.fc_b[0] += d0;
  grads.fc_b[1] -= d0;

  const std::size_t steps = cfg.T + 1;
  std::vector<std::vector<double>> d_above(steps, std::vector<double>(top, 0.0));
  d_above[steps - 1] = dh_top;

  for (std::size_t li = params.lstm.size(); li-- > 0;) {
    const LstmLayerParams& P = params.lstm[li];
    LstmLayerParams& G = grads.lstm[li];
    const std::size_t in = P.w_xi.rows();
    const std::size_t hid = P.b_i.size();
    std::vector<std::vector<double>> d_below(steps, std::vector<double>(in, 0.0));
    std::vector<double> dh_carry(hid, 0.0), dc_carry(hid, 0.0);
    std::vector<double> da_i(hid), da_f(hid), da_g(hid), da_o(hid);
    for (std::size_t t = steps; t-- > 0;) {
      const CellTrace& ct = st.cells[li][t];
      for (std::size_t j = 0; j < hid; ++j) {
        const double dh = d_above[t][j] + dh_carry[j];
        const double do_ = dh * ct.tanh_c[j];
        const double dc = dh * ct.o[j] * (1.0 - ct.tanh_c[j] * ct.tanh_c[j]) + dc_carry[j];
        const double di = dc * ct.g[j];
        const double dg = dc * ct.i[j];
        const double df = dc * ct.c_prev[j];
        dc_carry[j] = dc * ct.f[j];
        da_i[j] = di * ct.i[j] * (1.0 - ct.i[j]);
        da_f[j] = df * ct.f[j] * (1.0 - ct.f[j]);
        da_g[j] = dg * (1.0 - ct.g[j] * ct.g[j]);
        da_o[j] = do_ * ct.o[j] * (1.0 - ct.o[j]);
      }
      detail::outer_acc(ct.x, da_i, G.w_xi);
      detail::outer_acc(ct.h_prev, da_i, G.w_hi);
      detail::axpy(G.b_i, da_i);
      detail::outer_acc(ct.x, da_f, G.w_xf);
      detail::outer_acc(ct.h_prev, da_f, G.w_hf);
      detail::axpy(G.b_f, da_f);
      detail::outer_acc(ct.x, da_g, G.w_xg);
      detail::outer_acc(ct.h_prev, da_g, G.w_hg);
      detail::axpy(G.b_g, da_g);
      detail::outer_acc(ct.x, da_o, G.w_xo);
      detail::outer_acc(ct.h_prev, da_o, G.w_ho);
      detail::axpy(G.b_o, da_o);

      detail::matvec_acc(P.w_xi, da_i, d_below[t]);
      detail::matvec_acc(P.w_xf, da_f, d_below[t]);
      detail::matvec_acc(P.w_xg, da_g, d_below[t]);
      detail::matvec_acc(P.w_xo, da_o, d_below[t]);

      std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
      detail::matvec_acc(P.w_hi, da_i, dh_carry);
      detail::matvec_acc(P.w_hf, da_f, dh_carry);
      detail::matvec_acc(P.w_hg, da_g, dh_carry);
      detail::matvec_acc(P.w_ho, da_o, dh_carry);
    }
    d_above = std::move(d_below);
  }

  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t day = st.sample.day - cfg.T + t;
    auto [it, inserted] = d_xhat.try_emplace(day, Matrix());
    if (inserted) it->second = Matrix(n_stocks, cfg.lstm_in());
    double* row = it->second.row(st.sample.stock);
    for (std::size_t k = 0; k < cfg.lstm_in(); ++k) row[k] += d_above[t][k];
  }
}

// Attention and GCN backward for one shared day, given the accumulated
// gradient of the loss with respect to that day's xhat.
inline void day_backward(const DayTrace& dt, const Matrix& d_xhat_day,
                         const std::vector<RelationGraph>& graphs, const MgrnParams& params,
                         const ModelConfig& cfg, MgrnParams& grads) {
  if (dt.params_version != params.version)
    fail(Errc::stale_trace, "day trace predates the current parameters");
  const std::size_t n = d_xhat_day.rows();
  const std::size_t g = graphs.size();
  const std::size_t f = cfg.gcn_out();
  const std::size_t d = cfg.d;

  std::vector<Matrix> d_z(g, Matrix(n, f));
  Matrix d_v(f, 1);
  std::vector<double> da(g);
  for (std::size_t r = 0; r < n; ++r) {
    const double* dzr = d_xhat_day.row(r) + d;
    double mix = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
      const double* zr = dt.gcn[i].h.back().row(r);
      double acc = 0.0;
      for (std::size_t k = 0; k < f; ++k) acc += dzr[k] * zr[k];
      da[i] = acc;
      mix += dt.alpha(r, i) * acc;
      double* out = d_z[i].row(r);
      for (std::size_t k = 0; k < f; ++k) out[k] += dt.alpha(r, i) * dzr[k];
    }
    for (std::size_t i = 0; i < g; ++i) {
      const double dl = dt.alpha(r, i) * (da[i] - mix);
      if (dl == 0.0) continue;
      double* out = d_z[i].row(r);
      const double* zr = dt.gcn[i].h.back().row(r);
      for (std::size_t k = 0; k < f; ++k) {
        out[k] += dl * dt.v(k, 0);
        d_v(k, 0) += dl * zr[k];
      }
    }
  }

  for (std::size_t a = 0; a < f; ++a)
    for (std::size_t b = 0; b < params.attn_query.rows(); ++b)
      grads.attn_proj(a, b) += d_v(a, 0) * params.attn_query(b, 0);
  add_inplace(grads.attn_query, matmul_tn(params.attn_proj, d_v));

  for (std::size_t i = 0; i < g; ++i) {
    const GcnTrace& tr = dt.gcn[i];
    const std::size_t layers = params.gcn_w[i].size();
    Matrix d_h = std::move(d_z[i]);
    for (std::size_t l = layers; l-- > 0;) {
      Matrix d_pre = std::move(d_h);
      if (l + 1 < layers) {
        const Matrix& pre = tr.pre[l];
        for (std::size_t idx = 0; idx < d_pre.size(); ++idx)
          if (pre.data()[idx] <= 0.0) d_pre.data()[idx] = 0.0;
      }
      add_inplace(grads.gcn_w[i][l], matmul_tn(tr.ah[l], d_pre));
      if (l > 0) d_h = matmul(graphs[i].a_hat, matmul_nt(d_pre, params.gcn_w[i][l]));
    }
  }
}

// ---------------------------------------------------------------------------
// Batch-level drivers

struct BatchResult {
  double loss_sum = 0.0;
  std::vector<double> p_up;
};

// Shared-day batch pass: every day needed by the batch is forwarded once,
// all samples run through it, and (optionally) gradients of the summed BCE
// loss accumulate back through the shared activations.
inline BatchResult batch_forward_backward(const std::vector<Matrix>& x_days,
                                          const std::vector<RelationGraph>& graphs,
                                          const std::vector<Sample>& batch,
                                          const MgrnParams& params, const ModelConfig& cfg,
                                          MgrnParams* grads = nullptr) {
  if (batch.empty()) fail(Errc::empty_dataset, "empty batch");
  if (graphs.empty()) fail(Errc::no_graphs, "model needs at least one graph");

  std::map<std::size_t, DayTrace> day_traces;
  for (const Sample& s : batch) {
    if (s.day < cfg.T || s.day >= x_days.size())
      fail(Errc::missing_day, "sample day " + std::to_string(s.day) + " outside feature range");
    for (std::size_t day = s.day - cfg.T; day <= s.day; ++day)
      if (!day_traces.count(day))
        day_traces.emplace(day, day_forward(x_days[day], graphs, params, cfg));
  }

  BatchResult res;
  res.p_up.reserve(batch.size());
  std::vector<SampleTrace> traces;
  traces.reserve(batch.size());
  for (const Sample& s : batch) {
    traces.push_back(sample_forward(day_traces, s, params, cfg));
    res.p_up.push_back(traces.back().p_up);
    res.loss_sum += bce_term(traces.back().p_up, s.label);
  }

  if (grads) {
    const std::size_t n_stocks = x_days.empty() ? 0 : x_days[0].rows();
    std::map<std::size_t, Matrix> d_xhat;
    for (const SampleTrace& st : traces)
      sample_backward(st, params, cfg, *grads, d_xhat, n_stocks);
    for (const auto& [day, dx] : d_xhat)
      day_backward(day_traces.at(day), dx, graphs, params, cfg, *grads);
  }
  return res;
}

// Full composed forward for one stock given the T+1 window of raw features.
inline double forward_window(const std::vector<Matrix>& window_x, std::size_t stock,
                             const std::vector<RelationGraph>& graphs, const MgrnParams& params,
                             const ModelConfig& cfg) {
  if (window_x.size() != cfg.T + 1)
    fail(Errc::missing_day, "window holds " + std::to_string(window_x.size()) + " days, need " +
                                std::to_string(cfg.T + 1));
  std::map<std::size_t, DayTrace> day_traces;
  for (std::size_t t = 0; t < window_x.size(); ++t)
    day_traces.emplace(t, day_forward(window_x[t], graphs, params, cfg));
  Sample s;
  s.day = cfg.T;
  s.stock = stock;
  return sample_forward(day_traces, s, params, cfg).p_up;
}

// Probabilities for many samples with day traces computed once each.
inline std::vector<double> predict_samples(const std::vector<Matrix>& x_days,
                                           const std::vector<RelationGraph>& graphs,
                                           const std::vector<Sample>& samples,
                                           const MgrnParams& params, const ModelConfig& cfg) {
  std::map<std::size_t, DayTrace> day_traces;
  std::vector<double> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    if (s.day < cfg.T || s.day >= x_days.size())
      fail(Errc::missing_day, "sample day " + std::to_string(s.day) + " outside feature range");
    for (std::size_t day = s.day - cfg.T; day <= s.day; ++day)
      if (!day_traces.count(day))
        day_traces.emplace(day, day_forward(x_days[day], graphs, params, cfg));
    out.push_back(sample_forward(day_traces, s, params, cfg).p_up);
  }
  return out;
}

}  // namespace mgrn
