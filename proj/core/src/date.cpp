#include "finctx/date.hpp"

#include <algorithm>
#include <cstdio>

#include "finctx/error.hpp"

namespace finctx {

// Howard Hinnant's civil date algorithms.
int64_t days_from_civil(const Date& d) {
    const int y = d.year - (d.month <= 2);
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(d.month + (d.month > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d.day) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return static_cast<int64_t>(era) * 146097 + static_cast<int64_t>(doe) - 719468;
}

Date civil_from_days(int64_t z) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned day = doy - (153 * mp + 2) / 5 + 1;
    const unsigned month = mp < 10 ? mp + 3 : mp - 9;
    return Date{static_cast<int>(y + (month <= 2)), static_cast<int>(month), static_cast<int>(day)};
}

bool valid_date(const Date& d) {
    if (d.month < 1 || d.month > 12 || d.day < 1) return false;
    static const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int dim = mdays[d.month - 1];
    const bool leap = (d.year % 4 == 0 && d.year % 100 != 0) || d.year % 400 == 0;
    if (d.month == 2 && leap) dim = 29;
    return d.day <= dim;
}

int weekday(const Date& d) {
    const int64_t z = days_from_civil(d);
    return static_cast<int>(z >= -4 ? (z + 4) % 7 : (z + 5) % 7 + 6);
}

Date add_days(const Date& d, int64_t n) { return civil_from_days(days_from_civil(d) + n); }

int64_t days_between(const Date& a, const Date& b) { return days_from_civil(b) - days_from_civil(a); }

Date parse_date(const std::string& s) {
    int y = 0, m = 0, day = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c", &y, &m, &day, &tail) != 3 || s.size() != 10) {
        throw DataError("malformed date '" + s + "', expected YYYY-MM-DD");
    }
    Date d{y, m, day};
    if (!valid_date(d)) throw DataError("invalid calendar date '" + s + "'");
    return d;
}

std::string format_date(const Date& d) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

int month_key(const Date& d) { return d.year * 12 + (d.month - 1); }

Timestamp parse_timestamp(const std::string& s) {
    if (s.size() != 16 && s.size() != 19) {
        throw DataError("malformed timestamp '" + s + "', expected YYYY-MM-DDTHH:MM[:SS]");
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    const int got = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d", &y, &mo, &d, &h, &mi, &sec);
    if (got < 5 || (s.size() == 19 && got != 6)) {
        throw DataError("malformed timestamp '" + s + "', expected YYYY-MM-DDTHH:MM[:SS]");
    }
    Date date{y, mo, d};
    if (!valid_date(date) || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 59) {
        throw DataError("invalid timestamp '" + s + "'");
    }
    return Timestamp{date, h * 60 + mi};
}

std::string format_timestamp(const Timestamp& t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d", t.date.year, t.date.month, t.date.day,
                  t.minute / 60, t.minute % 60);
    return buf;
}

TradingCalendar::TradingCalendar(std::vector<Date> trading_days) : days_(std::move(trading_days)) {
    if (days_.empty()) throw ConfigError("explicit trading calendar needs at least one day");
    std::sort(days_.begin(), days_.end());
    days_.erase(std::unique(days_.begin(), days_.end()), days_.end());
}

bool TradingCalendar::is_trading_day(const Date& d) const {
    if (days_.empty()) {
        const int w = weekday(d);
        return w >= 1 && w <= 5;
    }
    return std::binary_search(days_.begin(), days_.end(), d);
}

Date TradingCalendar::next_trading_day(const Date& d) const {
    if (days_.empty()) {
        Date cur = add_days(d, 1);
        while (!is_trading_day(cur)) cur = add_days(cur, 1);
        return cur;
    }
    auto it = std::upper_bound(days_.begin(), days_.end(), d);
    if (it == days_.end()) {
        throw DataError("no trading day after " + format_date(d) + " in the supplied calendar");
    }
    return *it;
}

Date TradingCalendar::roll_forward(const Date& d) const {
    return is_trading_day(d) ? d : next_trading_day(d);
}

Date TradingCalendar::shift(const Date& d, int k) const {
    if (k < 0) throw ConfigError("trading-day shift must be non-negative");
    if (!is_trading_day(d)) {
        throw DataError("trading-day shift from non-trading day " + format_date(d));
    }
    Date cur = d;
    for (int i = 0; i < k; ++i) cur = next_trading_day(cur);
    return cur;
}

std::vector<Date> TradingCalendar::days_in_range(const Date& first, const Date& last) const {
    std::vector<Date> out;
    if (days_.empty()) {
        for (Date cur = roll_forward(first); cur <= last; cur = next_trading_day(cur)) out.push_back(cur);
        return out;
    }
    auto lo = std::lower_bound(days_.begin(), days_.end(), first);
    auto hi = std::upper_bound(days_.begin(), days_.end(), last);
    out.assign(lo, hi);
    return out;
}

Date assign_trading_date(const Timestamp& published, const TradingCalendar& cal) {
    if (published.minute <= kMarketOpenMinute && cal.is_trading_day(published.date)) {
        return published.date;
    }
    return cal.next_trading_day(published.date);
}

}  // namespace finctx
