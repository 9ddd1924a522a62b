#pragma once

#include <map>
#include <string>
#include <vector>

#include "finctx/corpus.hpp"
#include "finctx/date.hpp"

namespace finctx {

struct PredictionRow {
    std::string sample_id;
    std::string company_id;
    Date trading_date;
    int horizon = 0;
    double probability = 0.0;
};

// CSV with header sample_id,company_id,trading_date,horizon,probability.
void save_predictions(const std::string& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> load_predictions(const std::string& path);

struct UniverseRow {
    std::string company_id;
    int month_key = 0;  // year * 12 + (month - 1)
    double market_cap = 0.0;
    double avg_daily_value = 0.0;
    std::string industry;
};

// CSV with header company_id,month,market_cap,avg_daily_value,industry;
// month formatted YYYY-MM.
void save_universe(const std::string& path, const std::vector<UniverseRow>& rows);
std::vector<UniverseRow> load_universe(const std::string& path);

std::string format_month(int month_key);
int parse_month(const std::string& s);

struct PortfolioConfig {
    double min_market_cap = 2.5e8;
    double min_avg_daily_value = 1e6;
    double cost_rate = 0.01;  // of annual one-way turnover
    int horizon = 30;
    int quantiles = 5;
};

// Mean probability per company over each calendar month, for one horizon.
std::map<int, std::map<std::string, double>> monthly_mean_scores(
    const std::vector<PredictionRow>& preds, int horizon);

// Subtracts each industry's mean score within one formation month.
void industry_demean(std::map<std::string, double>& scores,
                     const std::map<std::string, std::string>& industry_of);

// Equal-weight top/bottom quantile weights (+1/k and -1/k, k = floor(n/q)),
// ranked by score descending with company id breaking ties.
std::map<std::string, double> quantile_weights(const std::map<std::string, double>& scores,
                                               int quantiles);

// Close of the last trading day in the month, if the series covers it.
std::optional<double> month_end_close(const PriceSeries& series, int month_key);

// P(end of m-1) / P(end of m-12) - 1 per company.
std::map<std::string, double> momentum_scores(const PriceTable& prices, int formation_month);

struct MonthResult {
    int month_key = 0;  // the holding month
    double gross = 0.0;
    double net = 0.0;
    double turnover = 0.0;  // one-way
    int n_long = 0;
    int n_short = 0;
    std::map<std::string, double> weights;
};

struct BacktestReport {
    std::vector<MonthResult> months;
    double ann_return_gross = 0.0;
    double ann_return_net = 0.0;
    double ann_volatility = 0.0;
    double sharpe = 0.0;
    double ann_turnover = 0.0;
    double ann_cost = 0.0;
    int skipped_months = 0;   // too few eligible names to form quantiles
    int missing_returns = 0;  // held names without a measurable monthly return
};

// Holds month f+1 using scores formed at month f, filtered by that month's
// universe rows and industry-demeaned. Costs charge cost_rate of annual
// one-way turnover, spread evenly over the held months.
BacktestReport simulate_portfolio(const std::map<int, std::map<std::string, double>>& scores_by_month,
                                  const std::vector<UniverseRow>& universe, const PriceTable& prices,
                                  const PortfolioConfig& cfg);

BacktestReport backtest_predictions(const std::vector<PredictionRow>& preds,
                                    const std::vector<UniverseRow>& universe,
                                    const PriceTable& prices, const PortfolioConfig& cfg);

// Same pipeline with 12-1 price momentum as the score.
BacktestReport backtest_momentum(const std::vector<UniverseRow>& universe, const PriceTable& prices,
                                 const PortfolioConfig& cfg);

}  // namespace finctx
