#pragma once

// Model checkpoint: one file holding a versioned JSON header followed by the
// raw parameter payload.
//
// Layout:
//   bytes 0..3   header length L, little-endian uint32
//   bytes 4..4+L JSON header {format_version, model_config, graph_names, seed}
//   rest         parameters as little-endian IEEE-754 float64, in the same
//                fixed order flatten() uses
//
// save -> load -> save reproduces the file byte for byte.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgrn/error.hpp"
#include "mgrn/model.hpp"

namespace mgrn {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelConfig cfg;
  std::vector<std::string> graph_names;
  std::uint64_t seed = 0;
  MgrnParams params;
};

namespace detail {

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

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.d = j.at("d").get<std::size_t>();
  cfg.gcn_dims = j.at("gcn_dims").get<std::vector<std::size_t>>();
  cfg.attn_w = j.at("attn_w").get<std::size_t>();
  cfg.lstm_dims = j.at("lstm_dims").get<std::vector<std::size_t>>();
  cfg.T = j.at("T").get<std::size_t>();
  cfg.delta_t = j.at("delta_t").get<std::size_t>();
  cfg.lr = j.at("lr").get<double>();
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.eps = j.at("eps").get<double>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

inline void append_le_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t read_le_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void append_le_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double read_le_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

inline std::string checkpoint_to_bytes(const Checkpoint& ck) {
  nlohmann::json header{{"format_version", kCheckpointFormatVersion},
                        {"model_config", detail::model_config_to_json(ck.cfg)},
                        {"graph_names", ck.graph_names},
                        {"seed", ck.seed}};
  const std::string header_str = header.dump();
  std::string out;
  detail::append_le_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out += header_str;
  for (double v : flatten(ck.params)) detail::append_le_f64(out, v);
  return out;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(Errc::io_error, "cannot open checkpoint for writing: " + path);
  const std::string bytes = checkpoint_to_bytes(ck);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(Errc::io_error, "short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::io_error, "cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4) fail(Errc::bad_format, "checkpoint truncated: " + path);
  const std::uint32_t header_len = detail::read_le_u32(p);
  if (bytes.size() < 4 + static_cast<std::size_t>(header_len))
    fail(Errc::bad_format, "checkpoint header truncated: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(4, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::bad_format, std::string("checkpoint header not valid JSON: ") + e.what());
  }
  if (header.at("format_version").get<std::uint32_t>() != kCheckpointFormatVersion)
    fail(Errc::bad_format, "unsupported checkpoint format_version");

  Checkpoint ck;
  ck.cfg = detail::model_config_from_json(header.at("model_config"));
  ck.graph_names = header.at("graph_names").get<std::vector<std::string>>();
  ck.seed = header.at("seed").get<std::uint64_t>();

  ck.params = init_params(ck.cfg, ck.graph_names.size());
  const std::size_t n_values = flatten(ck.params).size();
  const std::size_t payload = bytes.size() - 4 - header_len;
  if (payload != n_values * 8)
    fail(Errc::bad_format, "checkpoint payload is " + std::to_string(payload) +
                               " bytes, expected " + std::to_string(n_values * 8));
  std::vector<double> flat(n_values);
  const unsigned char* body = p + 4 + header_len;
  for (std::size_t i = 0; i < n_values; ++i) flat[i] = detail::read_le_f64(body + 8 * i);
  unflatten_into(flat, ck.params);
  return ck;
}

}  // namespace mgrn
