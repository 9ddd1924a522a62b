#include "finctx/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "finctx/error.hpp"
#include "json.hpp"

namespace finctx {

namespace {

using nlohmann::json;

const char* kEventPhrases[kEventTypes] = {
    "a quarterly earnings update", "a shareholder lawsuit",      "a flagship product launch",
    "a business unit divestiture", "a regulatory filing delay",  "a merger agreement",
    "a revision of guidance",      "a widescale product recall",
};
const char* kEventAdjectives[kEventTypes] = {
    "fiscal", "legal", "commercial", "structural", "procedural", "strategic", "forward", "operational",
};
// base direction per event type
const int kEventBase[kEventTypes] = {1, -1, 1, -1, -1, 1, 1, -1};

const char* kIndustries[kEventTypes] = {
    "technology", "energy", "healthcare", "finance", "consumer", "industrial", "materials", "utilities",
};

const char* kNameAdjs[40] = {
    "amber",   "apex",    "arbor",   "atlas",  "aurora", "beacon", "birch",   "bold",    "canyon", "cedar",
    "cobalt",  "coral",   "crimson", "delta",  "ember",  "fable",  "falcon",  "garnet",  "glade",  "harbor",
    "hazel",   "indigo",  "iron",    "jade",   "keystone", "lunar", "maple",  "meridian", "noble", "north",
    "onyx",    "opal",    "pioneer", "quartz", "raven",  "sierra", "sterling", "summit", "vector", "zephyr",
};
const char* kNameNouns[2] = {"holdings", "industries"};

const char* kFirstNames[40] = {
    "avery",  "bailey", "blake",  "brook",  "carter", "casey",  "charlie", "dana",   "devon",  "drew",
    "ellis",  "emerson", "finley", "frankie", "gray",  "hadley", "harper", "hollis", "jaden",  "jules",
    "kendall", "lane",   "logan",  "marley", "micah",  "morgan", "noel",   "oakley", "parker", "peyton",
    "quinn",  "reese",  "riley",  "rowan",  "sage",   "shay",   "skyler", "tatum",  "teagan", "wren",
};
const char* kLastNames[2] = {"whitfield", "marsh"};

const char* kCodenameWords[48] = {
    "acorn",   "anchor",  "anvil",   "aspen",   "badger",  "basil",   "bramble", "buckeye", "burrow",  "caliper",
    "chisel",  "cinder",  "clover",  "compass", "cricket", "dapple",  "drift",   "fennel",  "flint",   "gable",
    "gorse",   "granite", "grouse",  "heron",   "hickory", "juniper", "kestrel", "lantern", "larch",   "magpie",
    "mallow",  "marrow",  "mast",    "nettle",  "oriole",  "osprey",  "pebble",  "pinion",  "plume",   "quill",
    "rowanberry", "saddle", "sorrel", "sparrow", "tansy",   "thicket", "trellis", "willow",
};

const char* kFillers[12] = {
    "the board convened to review ongoing commitments across the portfolio.",
    "management reiterated its focus on disciplined capital allocation.",
    "trading desks noted steady volumes through the session.",
    "several analysts updated their models after the briefing.",
    "the company declined to comment beyond the prepared statement.",
    "institutional holders were briefed ahead of the public note.",
    "an internal memo outlined next steps for the affected teams.",
    "regional partners confirmed the timeline described in the release.",
    "the investor relations office scheduled a follow up call.",
    "employees were informed through the usual internal channels.",
    "competitors are watching the development with interest.",
    "the announcement had been anticipated by parts of the market.",
};

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P(label=+1 | deterministic score part s) under sign(s + sigma * eps)
double prob_up(double s, double sigma) {
    if (sigma > 0.0) return normal_cdf(s / sigma);
    if (s > 0.0) return 1.0;
    if (s < 0.0) return 0.0;
    return 0.5;
}

struct HiddenRule {
    // rule[e][a], a in 0..kEventTypes-1; rule_none[e] when unchained
    int rule[kEventTypes][kEventTypes];
    int rule_none[kEventTypes];
};

HiddenRule make_rule(uint64_t seed) {
    HiddenRule r;
    Rng rng(derive_seed(seed, 7001));
    for (int e = 0; e < kEventTypes; ++e) {
        std::vector<int> row(kEventTypes);
        for (int a = 0; a < kEventTypes; ++a) row[static_cast<size_t>(a)] = a % 2 == 0 ? 1 : -1;
        rng.shuffle(row);  // balanced per row: context flips half the antecedent types
        for (int a = 0; a < kEventTypes; ++a) r.rule[e][a] = row[static_cast<size_t>(a)];
        r.rule_none[e] = rng.bernoulli(0.5) ? 1 : -1;
    }
    return r;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg, uint64_t seed) {
    if (cfg.companies < 1 || cfg.companies > 80) {
        throw ConfigError("synthetic company count must be in [1, 80]");
    }
    if (cfg.articles_per_company < 1) throw ConfigError("articles_per_company must be >= 1");
    if (cfg.min_gap_days < 8 || cfg.max_gap_days < cfg.min_gap_days) {
        throw ConfigError("article gap must be >= 8 trading days to keep 7-day label windows disjoint");
    }
    if (cfg.context_weight < 0.0 || cfg.context_weight > 1.0) {
        throw ConfigError("context_weight must lie in [0, 1]");
    }
    if (cfg.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");

    const HiddenRule rule = make_rule(seed);
    const TradingCalendar cal;  // weekday calendar
    SyntheticCorpus out;

    const double w = cfg.context_weight;
    const double sigma = cfg.noise_sigma;
    const double lambda = 0.02;  // log-price drift unit per article

    for (int ci = 0; ci < cfg.companies; ++ci) {
        Rng rng(derive_seed(seed, 100 + static_cast<uint64_t>(ci)));
        char cid[16];
        std::snprintf(cid, sizeof(cid), "C%03d", ci);
        const std::string company_name = std::string(kNameAdjs[ci % 40]) + " " + kNameNouns[ci / 40];
        const std::string correspondent = std::string(kFirstNames[ci % 40]) + " " + kLastNames[ci / 40];
        const std::string industry = kIndustries[ci % kEventTypes];

        CompanyMeta meta;
        meta.company_id = cid;
        meta.industry = industry;
        meta.market_cap = 1e8 * std::exp(rng.uniform(0.0, std::log(100.0)));   // 100M .. 10B
        meta.avg_daily_value = 3e5 * std::exp(rng.uniform(0.0, std::log(70.0)));  // 0.3M .. 21M
        out.companies.push_back(meta);

        struct Prior {
            std::string id;
            int event;
            std::string codename;
            Date trading_date;
        };
        std::vector<Prior> priors;
        std::set<std::pair<int, int>> used_codenames;

        // stagger company start days so article dates interleave across companies
        Date cursor = cal.roll_forward(add_days(cfg.start_date, static_cast<int>(rng.below(10))));
        std::vector<std::pair<Date, double>> drifts;  // trading date -> total log drift over next 7 days

        for (int k = 0; k < cfg.articles_per_company; ++k) {
            const int event = static_cast<int>(rng.below(kEventTypes));
            int a1 = 0, a2 = 0;
            do {
                a1 = static_cast<int>(rng.below(48));
                a2 = static_cast<int>(rng.below(48));
            } while (a1 == a2 || used_codenames.count({a1, a2}));
            used_codenames.insert({a1, a2});
            const std::string codename = std::string(kCodenameWords[a1]) + " " + kCodenameWords[a2];

            const Prior* antecedent = nullptr;
            if (!priors.empty() && rng.bernoulli(cfg.chain_prob)) {
                if (rng.bernoulli(cfg.recent_antecedent_prob)) {
                    antecedent = &priors.back();
                } else {
                    const size_t window = std::min<size_t>(priors.size(), 5);
                    const size_t pick = priors.size() - window + rng.below(window);
                    antecedent = &priors[pick];
                }
            }
            const int ant_event = antecedent ? antecedent->event : -1;
            const int m = antecedent ? rule.rule[event][ant_event] : rule.rule_none[event];
            const double deterministic = (1.0 - w) * kEventBase[event] + w * m;
            const double score = deterministic + sigma * rng.normal();
            const int label = score > 0.0 ? 1 : -1;  // score == 0 has probability zero; fold to -1

            // Bayes references for oracle tests: antecedent types are iid
            // uniform, so the single-article posterior marginalizes the rule.
            double p_single = (1.0 - cfg.chain_prob) * prob_up((1.0 - w) * kEventBase[event] + w * rule.rule_none[event], sigma);
            for (int a = 0; a < kEventTypes; ++a) {
                p_single += cfg.chain_prob / kEventTypes *
                            prob_up((1.0 - w) * kEventBase[event] + w * rule.rule[event][a], sigma);
            }
            const double p_context = prob_up(deterministic, sigma);

            // publication time: trading day `cursor`, morning minute before open
            // half the time (same-day assignment), after open otherwise
            const int minute = rng.bernoulli(0.5) ? 8 * 60 + static_cast<int>(rng.below(80))
                                                  : 10 * 60 + static_cast<int>(rng.below(300));
            const Date trading_date = minute <= kMarketOpenMinute ? cursor : cal.next_trading_day(cursor);

            char aid[32];
            std::snprintf(aid, sizeof(aid), "%s-A%03d", cid, k);

            std::string text;
            text += company_name + " announced " + kEventPhrases[event] + " this week. ";
            text += "the initiative is designated " + codename + " internally. ";
            if (antecedent) {
                text += "the announcement cites project " + antecedent->codename + " from earlier coverage. ";
            }
            text += "observers called the " + std::string(kEventAdjectives[event]) + " implications notable for " +
                    company_name + ". ";
            const size_t f1 = rng.below(12);
            size_t f2 = rng.below(12);
            if (f2 == f1) f2 = (f2 + 1) % 12;
            text += std::string(kFillers[f1]) + " " + kFillers[f2] + " ";
            text += "coverage prepared by " + correspondent + ".";

            Article art;
            art.id = aid;
            art.company_id = cid;
            art.industry = industry;
            art.published_at = Timestamp{cursor, minute};
            art.text = std::move(text);
            out.articles.push_back(std::move(art));

            TruthRecord tr;
            tr.id = aid;
            tr.event = event;
            tr.antecedent_id = antecedent ? antecedent->id : "";
            tr.antecedent_event = ant_event;
            tr.score = score;
            tr.label = label;
            tr.p_single = p_single;
            tr.p_context = p_context;
            out.truth.push_back(std::move(tr));

            const double drift = lambda * label * (1.0 + std::min(std::abs(score), 2.0));
            drifts.emplace_back(trading_date, drift);

            priors.push_back(Prior{aid, event, codename, trading_date});
            cursor = cal.shift(cursor, cfg.min_gap_days +
                                           static_cast<int>(rng.below(
                                               static_cast<uint64_t>(cfg.max_gap_days - cfg.min_gap_days + 1))));
        }

        // price path: flat log-price plus per-article 7-day drift ramps and a
        // day jitter small enough to never flip a 7-day sign
        const Date first_day = add_days(cfg.start_date, -10);
        Date last_needed = cal.shift(cal.roll_forward(priors.back().trading_date), 7 + cfg.price_pad_days);
        PriceSeries series;
        series.company_id = cid;
        double logp = std::log(100.0) + rng.uniform(-0.1, 0.1);
        size_t next_drift = 0;
        std::vector<std::pair<Date, double>> active;  // (window end, per-day drift)
        for (Date d = cal.roll_forward(first_day); d <= last_needed; d = cal.next_trading_day(d)) {
            while (next_drift < drifts.size() && drifts[next_drift].first < d) {
                // window covers the 7 trading days after the article's trading day
                active.emplace_back(cal.shift(drifts[next_drift].first, 7), drifts[next_drift].second / 7.0);
                ++next_drift;
            }
            double delta = rng.uniform(-lambda / 40.0, lambda / 40.0);
            for (auto& [window_end, per_day] : active) {
                if (d <= window_end) delta += per_day;
            }
            std::erase_if(active, [&](const auto& a) { return a.first < d; });
            logp += delta;
            series.points.push_back(PricePoint{d, std::exp(logp)});
        }
        out.prices.by_company[cid] = std::move(series);
    }

    std::sort(out.articles.begin(), out.articles.end(), [](const Article& a, const Article& b) {
        if (a.published_at != b.published_at) return a.published_at < b.published_at;
        return a.id < b.id;
    });
    std::sort(out.truth.begin(), out.truth.end(),
              [](const TruthRecord& a, const TruthRecord& b) { return a.id < b.id; });
    return out;
}

void save_truth(const std::string& path, const std::vector<TruthRecord>& truth) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open truth file for writing: " + path);
    for (const TruthRecord& t : truth) {
        json j{{"id", t.id},
               {"event", t.event},
               {"antecedent_id", t.antecedent_id},
               {"antecedent_event", t.antecedent_event},
               {"score", t.score},
               {"label", t.label},
               {"p_single", t.p_single},
               {"p_context", t.p_context}};
        os << j.dump() << '\n';
    }
}

std::vector<TruthRecord> load_truth(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open truth file: " + path);
    std::vector<TruthRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            TruthRecord t;
            t.id = j.at("id").get<std::string>();
            t.event = j.at("event").get<int>();
            t.antecedent_id = j.at("antecedent_id").get<std::string>();
            t.antecedent_event = j.at("antecedent_event").get<int>();
            t.score = j.at("score").get<double>();
            t.label = j.at("label").get<int>();
            t.p_single = j.at("p_single").get<double>();
            t.p_context = j.at("p_context").get<double>();
            out.push_back(std::move(t));
        } catch (const json::exception& e) {
            throw DataError("bad truth record at " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void save_company_meta(const std::string& path, const std::vector<CompanyMeta>& companies) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open company meta file for writing: " + path);
    os << "company_id,industry,market_cap,avg_daily_value\n";
    char buf[64];
    for (const CompanyMeta& c : companies) {
        os << c.company_id << ',' << c.industry << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", c.market_cap);
        os << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", c.avg_daily_value);
        os << buf << '\n';
    }
}

std::vector<CompanyMeta> load_company_meta(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open company meta file: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "company_id,industry,market_cap,avg_daily_value") {
        throw DataError("bad company meta header in " + path);
    }
    std::vector<CompanyMeta> out;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        CompanyMeta c;
        std::string cap_s, adv_s;
        if (!std::getline(ss, c.company_id, ',') || !std::getline(ss, c.industry, ',') ||
            !std::getline(ss, cap_s, ',') || !std::getline(ss, adv_s)) {
            throw DataError("bad company meta row at " + path + ":" + std::to_string(lineno));
        }
        try {
            c.market_cap = std::stod(cap_s);
            c.avg_daily_value = std::stod(adv_s);
        } catch (const std::exception&) {
            throw DataError("bad company meta number at " + path + ":" + std::to_string(lineno));
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace finctx
