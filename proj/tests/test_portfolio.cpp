#include <unistd.h>

#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "finctx/error.hpp"
#include "finctx/portfolio.hpp"

using namespace finctx;

namespace {

std::string tmp_path(const std::string& name) {
    return std::string("/tmp/finctx_portfolio_") + name + "." + std::to_string(getpid());
}

PriceSeries series_of(const std::string& company, std::vector<std::pair<Date, double>> pts) {
    PriceSeries s;
    s.company_id = company;
    for (const auto& [d, c] : pts) s.points.push_back({d, c});
    return s;
}

UniverseRow urow(const std::string& company, int mkey, double cap, double adv,
                 const std::string& industry) {
    return UniverseRow{company, mkey, cap, adv, industry};
}

}  // namespace

TEST_CASE("month formatting round-trips") {
    CHECK(format_month(month_key({2020, 3, 1})) == "2020-03");
    CHECK(parse_month("2020-03") == month_key({2020, 3, 15}));
    CHECK(parse_month("1999-12") + 1 == parse_month("2000-01"));
    CHECK_THROWS_AS(parse_month("2020-13"), DataError);
    CHECK_THROWS_AS(parse_month("202003"), DataError);
}

TEST_CASE("monthly mean scores group by month and company at one horizon") {
    std::vector<PredictionRow> preds;
    preds.push_back({"a:30", "A", {2020, 1, 7}, 30, 0.6});
    preds.push_back({"b:30", "A", {2020, 1, 21}, 30, 0.8});
    preds.push_back({"c:30", "B", {2020, 1, 10}, 30, 0.3});
    preds.push_back({"d:30", "A", {2020, 2, 3}, 30, 0.9});
    preds.push_back({"e:7", "A", {2020, 1, 9}, 7, 0.1});  // other horizon, ignored

    const auto scores = monthly_mean_scores(preds, 30);
    REQUIRE(scores.size() == 2);
    const int jan = month_key({2020, 1, 1});
    CHECK(scores.at(jan).at("A") == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(scores.at(jan).at("B") == 0.3);
    CHECK(scores.at(jan + 1).at("A") == 0.9);
}

TEST_CASE("industry demeaning and unknown industries") {
    std::map<std::string, double> scores = {{"A", 0.9}, {"B", 0.5}, {"C", 0.4}, {"D", 0.2}};
    const std::map<std::string, std::string> ind = {
        {"A", "tech"}, {"B", "tech"}, {"C", "mining"}, {"D", "mining"}};
    industry_demean(scores, ind);
    CHECK(scores.at("A") == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(scores.at("B") == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(scores.at("C") == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(scores.at("D") == doctest::Approx(-0.1).epsilon(1e-12));

    std::map<std::string, double> missing = {{"Z", 1.0}};
    std::map<std::string, std::string> empty_ind;
    CHECK_THROWS_AS(industry_demean(missing, empty_ind), DataError);
}

TEST_CASE("quantile weights take equal-sized ends of one ranking") {
    std::map<std::string, double> ten;
    for (int i = 0; i < 10; ++i) ten["s" + std::to_string(i)] = double(9 - i) / 10.0;
    const auto w10 = quantile_weights(ten, 5);  // k = 2
    REQUIRE(w10.size() == 4);
    CHECK(w10.at("s0") == 0.5);
    CHECK(w10.at("s1") == 0.5);
    CHECK(w10.at("s8") == -0.5);
    CHECK(w10.at("s9") == -0.5);

    std::map<std::string, double> five = {{"a", 5}, {"b", 4}, {"c", 3}, {"d", 2}, {"e", 1}};
    const auto w5 = quantile_weights(five, 5);  // k = 1
    REQUIRE(w5.size() == 2);
    CHECK(w5.at("a") == 1.0);
    CHECK(w5.at("e") == -1.0);

    // all-equal scores: id ascending decides both ends, no overlap
    std::map<std::string, double> flat = {{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}, {"e", 1}};
    const auto wf = quantile_weights(flat, 5);
    REQUIRE(wf.size() == 2);
    CHECK(wf.at("a") == 1.0);
    CHECK(wf.at("e") == -1.0);

    double sum = 0.0;
    for (const auto& [c, w] : w10) sum += w;
    CHECK(std::abs(sum) < 1e-12);

    CHECK_THROWS_AS(quantile_weights(flat, 6), DataError);   // k would be 0
    CHECK_THROWS_AS(quantile_weights(flat, 1), ConfigError);
}

TEST_CASE("month-end close picks the last covered day") {
    const PriceSeries s = series_of(
        "A", {{{2020, 1, 7}, 10.0}, {{2020, 1, 31}, 11.0}, {{2020, 2, 12}, 12.0}, {{2020, 4, 1}, 13.0}});
    CHECK(month_end_close(s, month_key({2020, 1, 1})) == 11.0);
    CHECK(month_end_close(s, month_key({2020, 2, 1})) == 12.0);   // mid-month point still counts
    CHECK_FALSE(month_end_close(s, month_key({2020, 3, 1})).has_value());
    CHECK_FALSE(month_end_close(s, month_key({2019, 12, 1})).has_value());
}

TEST_CASE("momentum is the eleven-month price ratio at formation") {
    PriceTable prices;
    std::vector<std::pair<Date, double>> pts;
    Date d{2019, 1, 31};
    double close = 100.0;
    for (int m = 0; m < 14; ++m) {
        pts.push_back({d, close});
        close *= 1.01;
        d = add_days(Date{d.year, d.month, 1}, 45);  // somewhere next month
        d.day = std::min(d.day, 28);
    }
    prices.by_company["A"] = series_of("A", pts);
    const int f = month_key({2019, 12, 1});
    const auto mom = momentum_scores(prices, f);
    REQUIRE(mom.count("A"));
    // close grew 1% per month over 11 months
    CHECK(mom.at("A") == doctest::Approx(std::pow(1.01, 11) - 1.0).epsilon(1e-12));
    CHECK(momentum_scores(prices, f + 1).empty() == false);
    CHECK(momentum_scores(prices, f - 1).empty());  // needs f-11 coverage
}

TEST_CASE("three-month backtest matches the hand computation") {
    const int m1 = month_key({2020, 1, 1});
    const int m2 = m1 + 1, m3 = m1 + 2;

    // closes at month ends Jan..Apr 2020
    const Date jan{2020, 1, 31}, feb{2020, 2, 29}, mar{2020, 3, 31}, apr{2020, 4, 30};
    PriceTable prices;
    prices.by_company["A"] = series_of("A", {{jan, 100.0}, {feb, 110.0}, {mar, 120.0}, {apr, 126.0}});
    prices.by_company["B"] = series_of("B", {{jan, 55.0}, {feb, 60.0}, {mar, 63.0}, {apr, 61.74}});
    prices.by_company["E"] = series_of("E", {{jan, 80.0}, {feb, 76.0}, {mar, 74.48}, {apr, 70.0}});
    prices.by_company["F"] = series_of("F", {{jan, 50.0}, {feb, 51.0}, {mar, 52.0}, {apr, 52.0}});
    prices.by_company["J"] = series_of("J", {{jan, 40.0}, {feb, 42.0}, {mar, 45.0}, {apr, 45.9}});
    for (const char* c : {"C", "D", "G", "H", "I"})
        prices.by_company[c] = series_of(c, {{jan, 10.0}, {feb, 10.0}, {mar, 10.0}, {apr, 10.0}});

    std::vector<UniverseRow> universe;
    for (int m : {m1, m2, m3}) {
        for (const char* c : {"A", "B", "C", "D", "E"}) universe.push_back(urow(c, m, 3e8, 2e6, "tech"));
        for (const char* c : {"F", "G", "H", "I", "J"}) {
            const double cap = (m == m2 && std::string(c) == "J") ? 1e8 : 3e8;  // J drops out in Feb
            universe.push_back(urow(c, m, cap, 2e6, "mining"));
        }
    }

    std::map<int, std::map<std::string, double>> scores;
    scores[m1] = {{"A", 0.9}, {"B", 0.8}, {"C", 0.7}, {"D", 0.6}, {"E", 0.5},
                  {"F", 0.4}, {"G", 0.3}, {"H", 0.2}, {"I", 0.1}, {"J", 0.05}};
    scores[m2] = {{"A", 0.1}, {"B", 0.95}, {"C", 0.5}, {"D", 0.5}, {"E", 0.05},
                  {"F", 0.9}, {"G", 0.4}, {"H", 0.45}, {"I", 0.5}, {"J", 0.6}};
    scores[m3] = {{"A", 0.9}, {"B", 0.1}, {"C", 0.6}, {"D", 0.55}, {"E", 0.5},
                  {"F", 0.45}, {"G", 0.5}, {"H", 0.55}, {"I", 0.6}, {"J", 0.65}};

    PortfolioConfig cfg;  // cap 2.5e8, adv 1e6, cost 1% of annual turnover, q = 5
    const BacktestReport rep = simulate_portfolio(scores, universe, prices, cfg);

    REQUIRE(rep.months.size() == 3);
    CHECK(rep.skipped_months == 0);
    CHECK(rep.missing_returns == 0);

    // January formation: demeaned ranks put {A, F} long and {J, E} short, k = 2
    const MonthResult& h1 = rep.months[0];
    CHECK(h1.month_key == m2);
    CHECK(h1.n_long == 2);
    CHECK(h1.n_short == 2);
    CHECK(h1.weights.at("A") == 0.5);
    CHECK(h1.weights.at("F") == 0.5);
    CHECK(h1.weights.at("J") == -0.5);
    CHECK(h1.weights.at("E") == -0.5);
    CHECK(std::abs(h1.gross - 0.06) < 1e-10);
    CHECK(h1.turnover == 1.0);  // first formation builds from cash

    // February formation: J fails the cap filter, nine names leave k = 1
    const MonthResult& h2 = rep.months[1];
    CHECK(h2.month_key == m3);
    REQUIRE(h2.weights.size() == 2);
    CHECK(h2.weights.at("B") == 1.0);
    CHECK(h2.weights.at("E") == -1.0);
    CHECK(std::abs(h2.gross - 0.07) < 1e-10);
    CHECK(std::abs(h2.turnover - 1.5) < 1e-12);

    // March formation: back to ten names, {A, J} long and {F, B} short
    const MonthResult& h3 = rep.months[2];
    CHECK(h3.weights.at("A") == 0.5);
    CHECK(h3.weights.at("J") == 0.5);
    CHECK(h3.weights.at("F") == -0.5);
    CHECK(h3.weights.at("B") == -0.5);
    CHECK(std::abs(h3.gross - 0.045) < 1e-10);
    CHECK(std::abs(h3.turnover - 2.0) < 1e-12);

    // every held month is market neutral
    for (const MonthResult& m : rep.months) {
        double sum = 0.0;
        for (const auto& [c, w] : m.weights) sum += w;
        CHECK(std::abs(sum) < 1e-12);
    }

    // aggregates: mean turnover 1.5 -> 18x annual, cost 1% -> 1.5% monthly drag
    CHECK(std::abs(rep.ann_turnover - 18.0) < 1e-12);
    CHECK(std::abs(rep.ann_cost - 0.18) < 1e-12);
    CHECK(std::abs(rep.months[0].net - 0.045) < 1e-10);
    CHECK(std::abs(rep.months[1].net - 0.055) < 1e-10);
    CHECK(std::abs(rep.months[2].net - 0.030) < 1e-10);
    CHECK(std::abs(rep.ann_return_gross - 0.7) < 1e-10);
    CHECK(std::abs(rep.ann_return_net - 0.52) < 1e-10);

    const double dev1 = 0.045 - 0.13 / 3.0, dev2 = 0.055 - 0.13 / 3.0, dev3 = 0.030 - 0.13 / 3.0;
    const double vol = std::sqrt((dev1 * dev1 + dev2 * dev2 + dev3 * dev3) / 2.0) * std::sqrt(12.0);
    CHECK(std::abs(rep.ann_volatility - vol) < 1e-10);
    CHECK(std::abs(rep.sharpe - 0.52 / vol) < 1e-8);
}

TEST_CASE("skipped months and missing returns are counted, not fatal") {
    const int m1 = month_key({2021, 1, 1});
    const Date jan{2021, 1, 29}, feb{2021, 2, 26}, mar{2021, 3, 31}, apr{2021, 4, 30};
    PriceTable prices;
    for (const char* c : {"A", "B", "C", "D", "E"})
        prices.by_company[c] = series_of(c, {{jan, 10.0}, {feb, 11.0}, {mar, 12.0}, {apr, 13.0}});
    prices.by_company["F"] = series_of("F", {{jan, 10.0}, {feb, 11.0}, {mar, 12.0}, {apr, 13.0}});
    // E has no close in March: holding m2+1 return unmeasurable
    prices.by_company["E"].points.erase(prices.by_company["E"].points.begin() + 2);

    std::vector<UniverseRow> universe;
    std::map<int, std::map<std::string, double>> scores;
    for (int m : {m1, m1 + 1, m1 + 2}) {
        for (const char* c : {"A", "B", "C", "D", "E", "F"})
            universe.push_back(urow(c, m, 3e8, 2e6, "tech"));
        scores[m] = {{"A", 0.9}, {"B", 0.8}, {"C", 0.5}, {"D", 0.3}, {"E", 0.1}, {"F", 0.6}};
    }
    // the middle month's universe collapses to four names: below q = 5
    std::vector<UniverseRow> filtered;
    for (const UniverseRow& r : universe)
        if (!(r.month_key == m1 + 1 && (r.company_id == "A" || r.company_id == "B"))) filtered.push_back(r);

    PortfolioConfig cfg;
    const BacktestReport rep = simulate_portfolio(scores, filtered, prices, cfg);
    CHECK(rep.skipped_months == 1);
    REQUIRE(rep.months.size() == 2);
    // both surviving formations long A and short E with k = 1
    CHECK(rep.months[0].month_key == m1 + 1);
    CHECK(rep.months[1].month_key == m1 + 3);
    CHECK(rep.months[0].n_long == 1);
    CHECK(rep.months[0].n_short == 1);
    // E has no March close, so the second holding cannot measure its return;
    // the name still carries weight, and the identical book means no trading
    CHECK(rep.missing_returns == 1);
    CHECK(rep.months[1].weights.count("E") == 1);
    CHECK(rep.months[1].n_short == 0);
    CHECK(rep.months[1].n_long == 1);
    CHECK(rep.months[0].turnover == 1.0);
    CHECK(rep.months[1].turnover == 0.0);

    // fewer than two held months is an error
    std::map<int, std::map<std::string, double>> one_month;
    one_month[m1] = scores[m1];
    CHECK_THROWS_AS(simulate_portfolio(one_month, universe, prices, cfg), DataError);
}

TEST_CASE("momentum backtest runs the same pipeline") {
    PriceTable prices;
    const char* names[] = {"A", "B", "C", "D"};
    const double drift[] = {1.02, 1.01, 1.00, 0.99};
    for (int ci = 0; ci < 4; ++ci) {
        std::vector<std::pair<Date, double>> pts;
        double close = 50.0;
        for (int m = 0; m < 14; ++m) {
            const int key = month_key({2019, 1, 1}) + m;
            pts.push_back({Date{key / 12, key % 12 + 1, 28}, close});
            close *= drift[ci];
        }
        prices.by_company[names[ci]] = series_of(names[ci], pts);
    }
    std::vector<UniverseRow> universe;
    for (int m = month_key({2019, 1, 1}); m <= month_key({2020, 2, 1}); ++m)
        for (const char* c : names) universe.push_back(urow(c, m, 3e8, 2e6, "tech"));

    PortfolioConfig cfg;
    cfg.quantiles = 2;
    const BacktestReport rep = backtest_momentum(universe, prices, cfg);
    REQUIRE(rep.months.size() == 2);
    // winners keep winning in this fixture: long {A, B}, short {C, D}
    CHECK(rep.months[0].weights.at("A") == 0.5);
    CHECK(rep.months[0].weights.at("D") == -0.5);
    CHECK(rep.ann_return_gross > 0.0);
    CHECK(rep.months[0].turnover == 1.0);
    CHECK(std::abs(rep.months[1].turnover) < 1e-12);  // identical book held
}

TEST_CASE("prediction and universe files round-trip") {
    std::vector<PredictionRow> preds;
    preds.push_back({"x:30", "A", {2020, 1, 7}, 30, 0.6180339887498949});
    preds.push_back({"y:30", "B", {2020, 2, 3}, 30, 1e-17});
    const std::string ppath = tmp_path("preds.csv");
    save_predictions(ppath, preds);
    const auto loaded = load_predictions(ppath);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].sample_id == "x:30");
    CHECK(loaded[0].company_id == "A");
    CHECK(loaded[0].trading_date == Date{2020, 1, 7});
    CHECK(loaded[0].horizon == 30);
    CHECK(loaded[0].probability == 0.6180339887498949);
    CHECK(loaded[1].probability == 1e-17);
    std::remove(ppath.c_str());

    std::vector<UniverseRow> rows;
    rows.push_back(urow("A", month_key({2020, 1, 1}), 2.5e8, 1234567.89, "tech"));
    rows.push_back(urow("B", month_key({2020, 2, 1}), 9.9e9, 1e6, "mining"));
    const std::string upath = tmp_path("universe.csv");
    save_universe(upath, rows);
    const auto urows = load_universe(upath);
    REQUIRE(urows.size() == 2);
    CHECK(urows[0].company_id == "A");
    CHECK(urows[0].month_key == month_key({2020, 1, 1}));
    CHECK(urows[0].market_cap == 2.5e8);
    CHECK(urows[0].avg_daily_value == 1234567.89);
    CHECK(urows[0].industry == "tech");
    std::remove(upath.c_str());
}
