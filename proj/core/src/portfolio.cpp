#include "finctx/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "finctx/error.hpp"
#include "finctx/evaluation.hpp"

namespace finctx {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line, size_t expect, const std::string& path,
                                        size_t lineno) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    if (out.size() != expect)
        throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(expect) + " fields, got " + std::to_string(out.size()));
    return out;
}

double parse_double(const std::string& s, const std::string& path, size_t lineno) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
    }
}

int parse_int(const std::string& s, const std::string& path, size_t lineno) {
    try {
        size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad integer '" + s + "'");
    }
}

}  // namespace

void save_predictions(const std::string& path, const std::vector<PredictionRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "sample_id,company_id,trading_date,horizon,probability\n";
    for (const PredictionRow& r : rows)
        out << r.sample_id << ',' << r.company_id << ',' << format_date(r.trading_date) << ','
            << r.horizon << ',' << fmt_double(r.probability) << '\n';
    if (!out) throw DataError("write failed for " + path);
}

std::vector<PredictionRow> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line != "sample_id,company_id,trading_date,horizon,probability")
        throw DataError(path + ": missing predictions header");
    std::vector<PredictionRow> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line, 5, path, lineno);
        PredictionRow r;
        r.sample_id = f[0];
        r.company_id = f[1];
        r.trading_date = parse_date(f[2]);
        r.horizon = parse_int(f[3], path, lineno);
        r.probability = parse_double(f[4], path, lineno);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string format_month(int month_key) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", month_key / 12, month_key % 12 + 1);
    return buf;
}

int parse_month(const std::string& s) {
    int y = 0, m = 0;
    char extra = 0;
    if (s.size() != 7 || std::sscanf(s.c_str(), "%4d-%2d%c", &y, &m, &extra) != 2 || m < 1 ||
        m > 12)
        throw DataError("bad month '" + s + "' (expected YYYY-MM)");
    return y * 12 + (m - 1);
}

void save_universe(const std::string& path, const std::vector<UniverseRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "company_id,month,market_cap,avg_daily_value,industry\n";
    for (const UniverseRow& r : rows)
        out << r.company_id << ',' << format_month(r.month_key) << ',' << fmt_double(r.market_cap)
            << ',' << fmt_double(r.avg_daily_value) << ',' << r.industry << '\n';
    if (!out) throw DataError("write failed for " + path);
}

std::vector<UniverseRow> load_universe(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line != "company_id,month,market_cap,avg_daily_value,industry")
        throw DataError(path + ": missing universe header");
    std::vector<UniverseRow> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line, 5, path, lineno);
        UniverseRow r;
        r.company_id = f[0];
        r.month_key = parse_month(f[1]);
        r.market_cap = parse_double(f[2], path, lineno);
        r.avg_daily_value = parse_double(f[3], path, lineno);
        r.industry = f[4];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::map<int, std::map<std::string, double>> monthly_mean_scores(
    const std::vector<PredictionRow>& preds, int horizon) {
    std::map<int, std::map<std::string, std::pair<double, int>>> acc;
    for (const PredictionRow& p : preds) {
        if (p.horizon != horizon) continue;
        auto& cell = acc[month_key(p.trading_date)][p.company_id];
        cell.first += p.probability;
        cell.second += 1;
    }
    std::map<int, std::map<std::string, double>> out;
    for (const auto& [m, companies] : acc)
        for (const auto& [c, cell] : companies) out[m][c] = cell.first / double(cell.second);
    return out;
}

void industry_demean(std::map<std::string, double>& scores,
                     const std::map<std::string, std::string>& industry_of) {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& [c, s] : scores) {
        auto it = industry_of.find(c);
        if (it == industry_of.end()) throw DataError("no industry for company " + c);
        auto& cell = acc[it->second];
        cell.first += s;
        cell.second += 1;
    }
    for (auto& [c, s] : scores) {
        const auto& cell = acc.at(industry_of.at(c));
        s -= cell.first / double(cell.second);
    }
}

std::map<std::string, double> quantile_weights(const std::map<std::string, double>& scores,
                                               int quantiles) {
    if (quantiles < 2) throw ConfigError("quantile count must be at least 2");
    const int n = int(scores.size());
    const int k = n / quantiles;
    if (k < 1)
        throw DataError("cannot form quantiles from " + std::to_string(n) + " names at q=" +
                        std::to_string(quantiles));
    // One ranking: score descending, id ascending on ties; longs come off the
    // head, shorts off the tail, so ties never land a name on both sides.
    std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::map<std::string, double> weights;
    for (int i = 0; i < k; ++i) weights[ranked[size_t(i)].first] = 1.0 / double(k);
    for (int i = n - k; i < n; ++i) weights[ranked[size_t(i)].first] = -1.0 / double(k);
    return weights;
}

std::optional<double> month_end_close(const PriceSeries& series, int mkey) {
    const auto& pts = series.points;
    auto it = std::partition_point(pts.begin(), pts.end(), [&](const PricePoint& p) {
        return month_key(p.date) <= mkey;
    });
    if (it == pts.begin()) return std::nullopt;
    --it;
    if (month_key(it->date) != mkey) return std::nullopt;
    return it->close;
}

std::map<std::string, double> momentum_scores(const PriceTable& prices, int formation_month) {
    std::map<std::string, double> out;
    for (const auto& [company, series] : prices.by_company) {
        const auto now = month_end_close(series, formation_month);
        const auto then = month_end_close(series, formation_month - 11);
        if (now && then && *then > 0.0) out[company] = *now / *then - 1.0;
    }
    return out;
}

BacktestReport simulate_portfolio(
    const std::map<int, std::map<std::string, double>>& scores_by_month,
    const std::vector<UniverseRow>& universe, const PriceTable& prices,
    const PortfolioConfig& cfg) {
    std::map<int, std::map<std::string, const UniverseRow*>> universe_by_month;
    for (const UniverseRow& r : universe) universe_by_month[r.month_key][r.company_id] = &r;

    BacktestReport rep;
    std::map<std::string, double> prev_weights;
    for (const auto& [formation, raw] : scores_by_month) {
        std::map<std::string, double> scores;
        std::map<std::string, std::string> industries;
        const auto uit = universe_by_month.find(formation);
        for (const auto& [company, score] : raw) {
            if (uit == universe_by_month.end()) break;
            const auto cit = uit->second.find(company);
            if (cit == uit->second.end()) continue;
            const UniverseRow& row = *cit->second;
            if (row.market_cap < cfg.min_market_cap) continue;
            if (row.avg_daily_value < cfg.min_avg_daily_value) continue;
            scores[company] = score;
            industries[company] = row.industry;
        }
        if (int(scores.size()) < cfg.quantiles) {
            ++rep.skipped_months;
            continue;
        }
        industry_demean(scores, industries);
        std::map<std::string, double> weights = quantile_weights(scores, cfg.quantiles);

        const int holding = formation + 1;
        double gross = 0.0;
        MonthResult mr;
        mr.month_key = holding;
        for (const auto& [company, w] : weights) {
            const PriceSeries* series = prices.find(company);
            std::optional<double> r;
            if (series) {
                const auto base = month_end_close(*series, formation);
                const auto end = month_end_close(*series, holding);
                if (base && end && *base > 0.0) r = *end / *base - 1.0;
            }
            if (!r) {
                ++rep.missing_returns;
                continue;
            }
            gross += w * *r;
            if (w > 0)
                ++mr.n_long;
            else
                ++mr.n_short;
        }
        double turn = 0.0;
        for (const auto& [c, w] : weights) {
            const auto pit = prev_weights.find(c);
            turn += std::fabs(w - (pit == prev_weights.end() ? 0.0 : pit->second));
        }
        for (const auto& [c, w] : prev_weights)
            if (!weights.count(c)) turn += std::fabs(w);
        mr.turnover = turn / 2.0;
        mr.gross = gross;
        mr.weights = weights;
        rep.months.push_back(std::move(mr));
        prev_weights = rep.months.back().weights;
    }
    if (rep.months.size() < 2)
        throw DataError("backtest held only " + std::to_string(rep.months.size()) +
                        " months; need at least two");

    std::vector<double> turnovers, nets, grosses;
    for (const MonthResult& m : rep.months) {
        turnovers.push_back(m.turnover);
        grosses.push_back(m.gross);
    }
    rep.ann_turnover = mean_of(turnovers) * 12.0;
    rep.ann_cost = cfg.cost_rate * rep.ann_turnover;
    const double monthly_cost = rep.ann_cost / 12.0;
    for (MonthResult& m : rep.months) {
        m.net = m.gross - monthly_cost;
        nets.push_back(m.net);
    }
    rep.ann_return_gross = mean_of(grosses) * 12.0;
    rep.ann_return_net = mean_of(nets) * 12.0;
    rep.ann_volatility = sample_stdev(nets) * std::sqrt(12.0);
    rep.sharpe = rep.ann_volatility > 0.0 ? rep.ann_return_net / rep.ann_volatility : 0.0;
    return rep;
}

BacktestReport backtest_predictions(const std::vector<PredictionRow>& preds,
                                    const std::vector<UniverseRow>& universe,
                                    const PriceTable& prices, const PortfolioConfig& cfg) {
    const auto scores = monthly_mean_scores(preds, cfg.horizon);
    if (scores.empty())
        throw DataError("no predictions at horizon " + std::to_string(cfg.horizon));
    return simulate_portfolio(scores, universe, prices, cfg);
}

BacktestReport backtest_momentum(const std::vector<UniverseRow>& universe,
                                 const PriceTable& prices, const PortfolioConfig& cfg) {
    int lo = 0, hi = -1;
    bool any = false;
    for (const auto& [company, series] : prices.by_company) {
        if (series.points.empty()) continue;
        const int a = month_key(series.points.front().date);
        const int b = month_key(series.points.back().date);
        if (!any) {
            lo = a;
            hi = b;
            any = true;
        } else {
            lo = std::min(lo, a);
            hi = std::max(hi, b);
        }
    }
    if (!any) throw DataError("momentum backtest has no price data");
    std::map<int, std::map<std::string, double>> scores;
    for (int f = lo + 11; f < hi; ++f) {
        auto s = momentum_scores(prices, f);
        if (!s.empty()) scores[f] = std::move(s);
    }
    if (scores.empty()) throw DataError("price history too short for 12-1 momentum");
    return simulate_portfolio(scores, universe, prices, cfg);
}

}  // namespace finctx
