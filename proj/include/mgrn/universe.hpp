#pragma once

// The fixed, ordered stock universe. Every matrix row/column in the system
// indexes into this ordering.

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgrn/error.hpp"

namespace mgrn {

class StockUniverse {
 public:
  StockUniverse() = default;
  explicit StockUniverse(std::vector<std::string> tickers) : tickers_(std::move(tickers)) {
    for (std::size_t i = 0; i < tickers_.size(); ++i) {
      auto [it, inserted] = index_.emplace(tickers_[i], i);
      if (!inserted) fail(Errc::invalid_config, "duplicate ticker '" + tickers_[i] + "'");
    }
  }

  std::size_t size() const { return tickers_.size(); }
  const std::vector<std::string>& tickers() const { return tickers_; }
  const std::string& ticker(std::size_t i) const { return tickers_[i]; }

  std::optional<std::size_t> index_of(const std::string& ticker) const {
    auto it = index_.find(ticker);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& ticker) const { return index_.count(ticker) != 0; }

 private:
  std::vector<std::string> tickers_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mgrn
