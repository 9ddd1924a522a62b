#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace finctx {

// Calendar date. Comparisons follow chronological order.
struct Date {
    int year = 1970;
    int month = 1;  // 1..12
    int day = 1;    // 1..31

    auto operator<=>(const Date&) const = default;
};

// Days since 1970-01-01 (negative before). Gregorian, proleptic.
int64_t days_from_civil(const Date& d);
Date civil_from_days(int64_t z);
bool valid_date(const Date& d);
int weekday(const Date& d);  // 0 = Sunday .. 6 = Saturday
Date add_days(const Date& d, int64_t n);
int64_t days_between(const Date& a, const Date& b);  // b - a

Date parse_date(const std::string& s);  // strict YYYY-MM-DD
std::string format_date(const Date& d);

// linear month index for monthly grouping
int month_key(const Date& d);

// Minute-resolution publication time.
struct Timestamp {
    Date date;
    int minute = 0;  // minutes past midnight, 0..1439

    auto operator<=>(const Timestamp&) const = default;
};

Timestamp parse_timestamp(const std::string& s);  // YYYY-MM-DDTHH:MM[:SS], seconds dropped
std::string format_timestamp(const Timestamp& t);

// Market-open cutoff used to map publication times to trading days.
inline constexpr int kMarketOpenMinute = 9 * 60 + 30;

// Trading-day arithmetic. Default calendar treats Monday..Friday as trading
// days; an explicit sorted day list replaces that rule entirely when given.
class TradingCalendar {
public:
    TradingCalendar() = default;
    explicit TradingCalendar(std::vector<Date> trading_days);

    bool is_trading_day(const Date& d) const;
    Date next_trading_day(const Date& d) const;  // strictly after d
    Date roll_forward(const Date& d) const;      // d itself when trading, else next
    // k trading days after d (d must be a trading day); k >= 0
    Date shift(const Date& d, int k) const;
    std::vector<Date> days_in_range(const Date& first, const Date& last) const;  // inclusive

    bool explicit_days() const { return !days_.empty(); }

private:
    std::vector<Date> days_;  // sorted, empty means weekday rule
};

// Publication-to-trading-day rule: at or before the market open a trading day
// keeps the article, anything later belongs to the next trading day.
Date assign_trading_date(const Timestamp& published, const TradingCalendar& cal);

}  // namespace finctx
