#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "lsrigru/error.hpp"

namespace lsrigru {

/// Calendar day stored as days since 1970-01-01.
struct Date {
    int days = 0;

    static Date from_ymd(int y, unsigned m, unsigned d) {
        const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                              std::chrono::day{d}};
        if (!ymd.ok()) throw ParseError("invalid calendar date");
        return Date{static_cast<int>(std::chrono::sys_days{ymd}.time_since_epoch().count())};
    }

    /// Parses strict `YYYY-MM-DD`.
    static Date parse(std::string_view text) {
        if (text.size() != 10 || text[4] != '-' || text[7] != '-')
            throw ParseError("bad date '" + std::string(text) + "', expected YYYY-MM-DD");
        auto digits = [&](std::size_t pos, std::size_t len) {
            int v = 0;
            for (std::size_t i = pos; i < pos + len; ++i) {
                if (text[i] < '0' || text[i] > '9')
                    throw ParseError("bad date '" + std::string(text) + "'");
                v = v * 10 + (text[i] - '0');
            }
            return v;
        };
        const std::chrono::year_month_day ymd{
            std::chrono::year{digits(0, 4)}, std::chrono::month{static_cast<unsigned>(digits(5, 2))},
            std::chrono::day{static_cast<unsigned>(digits(8, 2))}};
        if (!ymd.ok()) throw ParseError("invalid calendar date '" + std::string(text) + "'");
        return Date{static_cast<int>(std::chrono::sys_days{ymd}.time_since_epoch().count())};
    }

    std::chrono::year_month_day ymd() const {
        return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days}}};
    }

    /// 0 = Monday ... 6 = Sunday.
    int iso_weekday_index() const {
        return static_cast<int>(
                   std::chrono::weekday{std::chrono::sys_days{std::chrono::days{days}}}.iso_encoding()) -
               1;
    }

    std::string str() const {
        const auto v = ymd();
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(v.year()),
                      static_cast<unsigned>(v.month()), static_cast<unsigned>(v.day()));
        return buf;
    }

    friend auto operator<=>(const Date&, const Date&) = default;
};

/// Inclusive calendar range. An empty range has `last < first`.
struct DateRange {
    Date first{0};
    Date last{-1};

    bool empty() const { return last < first; }
    bool contains(Date d) const { return !empty() && first <= d && d <= last; }
};

}  // namespace lsrigru
