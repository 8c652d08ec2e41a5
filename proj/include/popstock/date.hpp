#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace popstock {

/// Calendar date stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

  static constexpr Date from_ymd(int y, unsigned m, unsigned d) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    return Date(static_cast<std::int32_t>(
        std::chrono::sys_days{ymd}.time_since_epoch().count()));
  }

  /// Strict `YYYY-MM-DD`; nullopt on any malformed or non-existent date.
  static std::optional<Date> parse(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    if (!parse_digits(s.substr(0, 4), y) || !parse_digits(s.substr(5, 2), m) ||
        !parse_digits(s.substr(8, 2), d))
      return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Date(static_cast<std::int32_t>(
        std::chrono::sys_days{ymd}.time_since_epoch().count()));
  }

  constexpr std::int32_t days() const noexcept { return days_; }

  constexpr std::chrono::year_month_day ymd() const {
    return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days_}}};
  }

  std::string iso() const {
    const auto v = ymd();
    char buf[16];
    format_fixed(buf, static_cast<int>(v.year()), 4);
    buf[4] = '-';
    format_fixed(buf + 5, static_cast<int>(static_cast<unsigned>(v.month())), 2);
    buf[7] = '-';
    format_fixed(buf + 8, static_cast<int>(static_cast<unsigned>(v.day())), 2);
    return std::string(buf, 10);
  }

  /// `YYYY-MM`
  std::string month_key() const { return iso().substr(0, 7); }

  constexpr Date operator+(std::int32_t n) const { return Date(days_ + n); }
  constexpr Date operator-(std::int32_t n) const { return Date(days_ - n); }
  constexpr std::int32_t operator-(Date other) const { return days_ - other.days_; }
  constexpr Date& operator++() {
    ++days_;
    return *this;
  }

  constexpr auto operator<=>(const Date&) const = default;

 private:
  template <typename T>
  static bool parse_digits(std::string_view s, T& out) {
    for (char c : s)
      if (c < '0' || c > '9') return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
  }

  static void format_fixed(char* out, int value, int width) {
    for (int i = width - 1; i >= 0; --i) {
      out[i] = static_cast<char>('0' + value % 10);
      value /= 10;
    }
  }

  std::int32_t days_ = 0;
};

/// UTC instant, whole seconds since the Unix epoch.
using UnixSeconds = std::int64_t;

/// Strict `YYYY-MM-DDTHH:MM:SSZ`.
inline std::optional<UnixSeconds> parse_utc_timestamp(std::string_view s) {
  if (s.size() != 20 || s[10] != 'T' || s[13] != ':' || s[16] != ':' || s[19] != 'Z')
    return std::nullopt;
  const auto date = Date::parse(s.substr(0, 10));
  if (!date) return std::nullopt;
  int fields[3];
  for (int i = 0; i < 3; ++i) {
    const auto part = s.substr(11 + 3 * i, 2);
    if (part[0] < '0' || part[0] > '9' || part[1] < '0' || part[1] > '9') return std::nullopt;
    fields[i] = (part[0] - '0') * 10 + (part[1] - '0');
  }
  if (fields[0] > 23 || fields[1] > 59 || fields[2] > 59) return std::nullopt;
  return static_cast<UnixSeconds>(date->days()) * 86400 + fields[0] * 3600 + fields[1] * 60 +
         fields[2];
}

inline std::string format_utc_timestamp(UnixSeconds t) {
  const auto day = static_cast<std::int32_t>(t >= 0 ? t / 86400 : -((-t + 86399) / 86400));
  const auto secs = static_cast<int>(t - static_cast<UnixSeconds>(day) * 86400);
  char buf[32];
  const int h = secs / 3600, m = (secs / 60) % 60, sec = secs % 60;
  std::snprintf(buf, sizeof buf, "T%02d:%02d:%02dZ", h, m, sec);
  return Date(day).iso() + buf;
}

/// Calendar date of `t` after shifting by a fixed UTC offset.
inline Date local_date(UnixSeconds t, int utc_offset_minutes) {
  const UnixSeconds shifted = t + static_cast<UnixSeconds>(utc_offset_minutes) * 60;
  const UnixSeconds day = shifted >= 0 ? shifted / 86400 : -((-shifted + 86399) / 86400);
  return Date(static_cast<std::int32_t>(day));
}

}  // namespace popstock
