#pragma once

#include <string>
#include <vector>

#include "finctx/corpus.hpp"

namespace finctx {

// Event-chain corpus generator. Each company runs a chain of templated event
// articles; most articles reference an antecedent article whose event type
// combines with the current one through a hidden rule table. The forward
// return sign follows
//     score = (1 - w) * base(event) + w * rule(event, antecedent) + sigma * eps
// so historical context carries label information exactly when w > 0.
struct SyntheticConfig {
    int companies = 80;
    int articles_per_company = 30;
    double context_weight = 0.6;          // w
    double noise_sigma = 0.5;             // sigma
    double chain_prob = 0.85;             // article references an antecedent
    double recent_antecedent_prob = 0.75; // antecedent = most recent prior article
    int min_gap_days = 8;                 // trading days between a company's articles
    int max_gap_days = 12;
    Date start_date{2019, 1, 2};
    int price_pad_days = 45;              // trading days of prices past the last article
};

inline constexpr int kEventTypes = 8;

struct TruthRecord {
    std::string id;
    int event = 0;
    std::string antecedent_id;  // empty when unchained
    int antecedent_event = -1;  // -1 when unchained
    double score = 0.0;
    int label = 0;            // sign of the 7-trading-day move, never 0
    double p_single = 0.5;    // Bayes P(label=+1) given the main event only
    double p_context = 0.5;   // Bayes P(label=+1) given event and antecedent
};

struct CompanyMeta {
    std::string company_id;
    std::string industry;
    double market_cap = 0.0;        // currency units
    double avg_daily_value = 0.0;   // traded value per day
};

struct SyntheticCorpus {
    std::vector<Article> articles;
    PriceTable prices;
    std::vector<TruthRecord> truth;
    std::vector<CompanyMeta> companies;
};

// Labels are exact for horizon 7: each article's price drift plays out over
// the 7 trading days after its assigned trading day, chains are spaced at
// least min_gap_days apart, and day jitter is bounded below the drift.
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg, uint64_t seed);

void save_truth(const std::string& path, const std::vector<TruthRecord>& truth);
std::vector<TruthRecord> load_truth(const std::string& path);
void save_company_meta(const std::string& path, const std::vector<CompanyMeta>& companies);
std::vector<CompanyMeta> load_company_meta(const std::string& path);

}  // namespace finctx
