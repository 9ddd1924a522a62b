#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "finctx/date.hpp"
#include "finctx/rng.hpp"

namespace finctx {

struct Article {
    std::string id;
    std::string company_id;
    std::string industry;
    Timestamp published_at;
    std::string text;
};

struct PricePoint {
    Date date;
    double close = 0.0;
};

struct PriceSeries {
    std::string company_id;
    std::vector<PricePoint> points;  // strictly increasing dates, close > 0

    bool has(const Date& d) const;
    double close_at(const Date& d) const;  // throws DataError when absent
    std::optional<double> try_close(const Date& d) const;
};

struct PriceTable {
    std::unordered_map<std::string, PriceSeries> by_company;

    const PriceSeries* find(const std::string& company_id) const;
    // sorted union of every series' dates, usable as an explicit trading calendar
    std::vector<Date> all_dates() const;
};

// --- file formats ---
// Articles: one JSON object per line with fields id, company_id, industry,
// published_at (ISO-8601 minutes), text.
std::vector<Article> load_articles(const std::string& path);
void save_articles(const std::string& path, const std::vector<Article>& articles);
// Prices: CSV with header company_id,date,close.
PriceTable load_prices(const std::string& path);
void save_prices(const std::string& path, const PriceTable& table);

// --- filtering ---
struct RejectionEntry {
    std::string id;
    std::string reason;
};

// Quality filtering retains an article outright; the history rule only marks
// main-eligibility, so retained-but-ineligible articles still serve as
// retrieval context. That split keeps filtering idempotent.
struct FilteredCorpus {
    std::vector<Article> articles;  // kept, ordered by (published_at, id)
    std::unordered_set<std::string> main_eligible;
    std::vector<RejectionEntry> rejections;
};

inline constexpr int kMinArticleChars = 100;    // exclusive lower bound
inline constexpr int kMaxArticleChars = 10000;  // exclusive upper bound
inline constexpr double kMaxNumericRatio = 0.10;
inline constexpr double kMaxJaccard = 0.90;
inline constexpr int kMinHistoryCount = 5;
inline constexpr int kHistoryWindowDays = 365;

double numeric_char_ratio(const std::string& text);
std::vector<std::string> word_tokens(const std::string& text);  // lowercase [a-z0-9]+ runs
double jaccard_words(const std::string& a, const std::string& b);

FilteredCorpus filter_articles(std::vector<Article> articles);

// --- labeling and splits ---
struct LabeledSample {
    const Article* main = nullptr;
    std::vector<const Article*> contexts;  // ascending publication time
    int horizon = 7;                       // trading days
    int label = 0;                         // +1 / -1
    Date trading_date;                     // assigned trading day of the main article
};

inline std::string sample_id(const LabeledSample& s) {
    return s.main->id + ":" + std::to_string(s.horizon);
}

struct SplitSpec {
    Date train_begin, train_end;
    Date val_begin, val_end;
    Date test_begin, test_end;

    void validate() const;  // ordered, disjoint
};

enum class Split { Train, Validation, Test };

struct SplitSamples {
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> validation;
    std::vector<LabeledSample> test;
    std::vector<RejectionEntry> dropped;
};

// Labels each main-eligible article at the given horizon and assigns it to a
// split by trading date. Zero price moves, missing prices, and label windows
// crossing out of the train/validation ranges are dropped with reasons.
// Contexts are not attached here; retrieval fills them in later.
SplitSamples build_labeled_samples(const FilteredCorpus& corpus, const PriceTable& prices,
                                   const TradingCalendar& cal, const SplitSpec& splits, int horizon);

std::optional<int> price_move_sign(const PriceTable& prices, const std::string& company_id, const Date& t,
                                   int horizon, const TradingCalendar& cal);

// Uniformly downsamples the majority class until counts match. Deterministic
// given the seed; result keeps (trading_date, main id) order.
void balance_classes(std::vector<LabeledSample>& samples, uint64_t seed);

}  // namespace finctx
