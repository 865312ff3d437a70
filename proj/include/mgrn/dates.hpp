#pragma once

// Calendar dates, UTC timestamps and the trading calendar. Dates are plain
// year/month/day triples; arithmetic goes through std::chrono::sys_days.
// Timestamps are UTC milliseconds since the epoch; news cutoff logic only
// ever compares instants, so no timezone database is involved. The market
// close is configured as a UTC time-of-day (default 16:30 UTC, i.e. 17:30
// CET for a fixed +1 offset).

#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mgrn/error.hpp"

namespace mgrn {

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  auto operator<=>(const Date&) const = default;

  bool ok() const {
    return std::chrono::year_month_day(std::chrono::year(year), std::chrono::month(month),
                                       std::chrono::day(day))
        .ok();
  }

  std::int64_t to_days() const {
    const std::chrono::year_month_day ymd(std::chrono::year(year),
                                          std::chrono::month(static_cast<unsigned>(month)),
                                          std::chrono::day(static_cast<unsigned>(day)));
    return std::chrono::sys_days(ymd).time_since_epoch().count();
  }

  static Date from_days(std::int64_t days) {
    const std::chrono::year_month_day ymd{
        std::chrono::sys_days(std::chrono::days(days))};
    return Date{int(ymd.year()), int(unsigned(ymd.month())), int(unsigned(ymd.day()))};
  }

  static Date parse(const std::string& s) {
    int y = 0, m = 0, d = 0;
    char sep1 = 0, sep2 = 0;
    if (std::sscanf(s.c_str(), "%d%c%d%c%d", &y, &sep1, &m, &sep2, &d) != 5 || sep1 != '-' ||
        sep2 != '-')
      fail(Errc::malformed_record, "bad date '" + s + "' (expected YYYY-MM-DD)");
    Date date{y, m, d};
    if (!date.ok()) fail(Errc::malformed_record, "invalid calendar date '" + s + "'");
    return date;
  }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
  }
};

// A UTC instant with millisecond resolution.
struct Timestamp {
  std::int64_t millis = 0;

  auto operator<=>(const Timestamp&) const = default;

  static Timestamp from_date_minute(const Date& d, int minute_of_day) {
    return Timestamp{(d.to_days() * 86400 + minute_of_day * 60) * 1000};
  }

  Date date_utc() const {
    std::int64_t days = millis / 86400000;
    if (millis < 0 && millis % 86400000 != 0) --days;
    return Date::from_days(days);
  }

  // Accepts "YYYY-MM-DDTHH:MM:SS", optional fractional seconds, optional 'Z'.
  static Timestamp parse(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    double sec = 0.0;
    int consumed = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%lf%n", &y, &mo, &d, &h, &mi, &sec,
                    &consumed) != 6)
      fail(Errc::malformed_record, "bad timestamp '" + s + "'");
    const std::string rest = s.substr(consumed);
    if (!rest.empty() && rest != "Z")
      fail(Errc::malformed_record, "bad timestamp suffix '" + s + "'");
    const Date date{y, mo, d};
    if (!date.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0.0 || sec >= 61.0)
      fail(Errc::malformed_record, "invalid timestamp '" + s + "'");
    const std::int64_t ms = static_cast<std::int64_t>(sec * 1000.0 + 0.5);
    return Timestamp{((date.to_days() * 24 + h) * 60 + mi) * 60000 + ms};
  }

  std::string str() const {
    const Date d = date_utc();
    std::int64_t rem = millis - d.to_days() * 86400000;
    const int h = static_cast<int>(rem / 3600000);
    rem %= 3600000;
    const int mi = static_cast<int>(rem / 60000);
    rem %= 60000;
    const int s = static_cast<int>(rem / 1000);
    const int ms = static_cast<int>(rem % 1000);
    char buf[32];
    if (ms)
      std::snprintf(buf, sizeof(buf), "%sT%02d:%02d:%02d.%03dZ", d.str().c_str(), h, mi, s, ms);
    else
      std::snprintf(buf, sizeof(buf), "%sT%02d:%02d:%02dZ", d.str().c_str(), h, mi, s);
    return buf;
  }
};

// Ordered trading days plus the close-time cutoff. News between the close
// on day d-1 and the close on day d belongs to day d (right-closed).
class TradingCalendar {
 public:
  static constexpr int kDefaultCloseMinuteUtc = 16 * 60 + 30;

  TradingCalendar() = default;
  explicit TradingCalendar(std::vector<Date> days, int close_minute_utc = kDefaultCloseMinuteUtc)
      : days_(std::move(days)), close_minute_utc_(close_minute_utc) {
    for (std::size_t i = 1; i < days_.size(); ++i)
      if (!(days_[i - 1] < days_[i]))
        fail(Errc::invalid_config, "trading calendar dates must be strictly increasing");
    if (close_minute_utc_ < 0 || close_minute_utc_ >= 24 * 60)
      fail(Errc::invalid_config, "close time outside the day");
  }

  std::size_t size() const { return days_.size(); }
  bool empty() const { return days_.empty(); }
  const Date& day(std::size_t i) const { return days_[i]; }
  const std::vector<Date>& days() const { return days_; }
  int close_minute_utc() const { return close_minute_utc_; }

  std::optional<std::size_t> index_of(const Date& d) const {
    auto it = std::lower_bound(days_.begin(), days_.end(), d);
    if (it == days_.end() || *it != d) return std::nullopt;
    return static_cast<std::size_t>(it - days_.begin());
  }

  Timestamp close_instant(std::size_t i) const {
    return Timestamp::from_date_minute(days_[i], close_minute_utc_);
  }

  // Trading day whose news window contains ts; nullopt when ts falls after
  // the final close. Anything before the first close attaches to day 0.
  std::optional<std::size_t> day_for_news(const Timestamp& ts) const {
    if (days_.empty()) return std::nullopt;
    std::size_t lo = 0, hi = days_.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (close_instant(mid) < ts)
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo == days_.size()) return std::nullopt;
    return lo;
  }

  // Sub-calendar restricted to [start, end], keeping the cutoff.
  TradingCalendar between(const Date& start, const Date& end) const {
    std::vector<Date> sel;
    for (const Date& d : days_)
      if (start <= d && d <= end) sel.push_back(d);
    return TradingCalendar(std::move(sel), close_minute_utc_);
  }

 private:
  std::vector<Date> days_;
  int close_minute_utc_ = kDefaultCloseMinuteUtc;
};

}  // namespace mgrn
