#include "finctx/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "finctx/error.hpp"
#include "json.hpp"

namespace finctx {

using nlohmann::json;

bool PriceSeries::has(const Date& d) const { return try_close(d).has_value(); }

double PriceSeries::close_at(const Date& d) const {
    auto v = try_close(d);
    if (!v) {
        throw DataError("no price for " + company_id + " on " + format_date(d));
    }
    return *v;
}

std::optional<double> PriceSeries::try_close(const Date& d) const {
    auto it = std::lower_bound(points.begin(), points.end(), d,
                               [](const PricePoint& p, const Date& x) { return p.date < x; });
    if (it != points.end() && it->date == d) return it->close;
    return std::nullopt;
}

const PriceSeries* PriceTable::find(const std::string& company_id) const {
    auto it = by_company.find(company_id);
    return it == by_company.end() ? nullptr : &it->second;
}

std::vector<Date> PriceTable::all_dates() const {
    std::vector<Date> out;
    for (const auto& [_, series] : by_company) {
        for (const PricePoint& p : series.points) out.push_back(p.date);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Article> load_articles(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open articles file: " + path);
    std::vector<Article> out;
    std::unordered_set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("bad article record at " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        Article a;
        try {
            a.id = j.at("id").get<std::string>();
            a.company_id = j.at("company_id").get<std::string>();
            a.industry = j.at("industry").get<std::string>();
            a.published_at = parse_timestamp(j.at("published_at").get<std::string>());
            a.text = j.at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw DataError("missing article field at " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!seen.insert(a.id).second) {
            throw DataError("duplicate article id '" + a.id + "' at " + path + ":" + std::to_string(lineno));
        }
        out.push_back(std::move(a));
    }
    return out;
}

void save_articles(const std::string& path, const std::vector<Article>& articles) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open articles file for writing: " + path);
    for (const Article& a : articles) {
        json j{{"id", a.id},
               {"company_id", a.company_id},
               {"industry", a.industry},
               {"published_at", format_timestamp(a.published_at)},
               {"text", a.text}};
        os << j.dump() << '\n';
    }
    if (!os) throw DataError("failed writing articles file: " + path);
}

PriceTable load_prices(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open price file: " + path);
    PriceTable table;
    std::string line;
    int lineno = 0;
    if (!std::getline(is, line)) throw DataError("empty price file: " + path);
    ++lineno;
    if (line != "company_id,date,close") {
        throw DataError("price file header must be 'company_id,date,close': " + path);
    }
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string company, date_s, close_s;
        if (!std::getline(ss, company, ',') || !std::getline(ss, date_s, ',') || !std::getline(ss, close_s)) {
            throw DataError("bad price row at " + path + ":" + std::to_string(lineno));
        }
        double close = 0.0;
        try {
            size_t used = 0;
            close = std::stod(close_s, &used);
            if (used != close_s.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw DataError("bad close value '" + close_s + "' at " + path + ":" + std::to_string(lineno));
        }
        if (!(close > 0.0)) {
            throw DataError("non-positive price at " + path + ":" + std::to_string(lineno));
        }
        PriceSeries& series = table.by_company[company];
        series.company_id = company;
        const Date d = parse_date(date_s);
        if (!series.points.empty() && !(series.points.back().date < d)) {
            throw DataError("price dates not strictly increasing for " + company + " at " + path + ":" +
                            std::to_string(lineno));
        }
        series.points.push_back(PricePoint{d, close});
    }
    return table;
}

void save_prices(const std::string& path, const PriceTable& table) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open price file for writing: " + path);
    os << "company_id,date,close\n";
    std::vector<const PriceSeries*> ordered;
    for (const auto& [_, series] : table.by_company) ordered.push_back(&series);
    std::sort(ordered.begin(), ordered.end(),
              [](const PriceSeries* a, const PriceSeries* b) { return a->company_id < b->company_id; });
    char buf[64];
    for (const PriceSeries* series : ordered) {
        for (const PricePoint& p : series->points) {
            std::snprintf(buf, sizeof(buf), "%.17g", p.close);
            os << series->company_id << ',' << format_date(p.date) << ',' << buf << '\n';
        }
    }
    if (!os) throw DataError("failed writing price file: " + path);
}

double numeric_char_ratio(const std::string& text) {
    if (text.empty()) return 0.0;
    size_t digits = 0;
    for (char c : text) {
        if (c >= '0' && c <= '9') ++digits;
    }
    return static_cast<double>(digits) / static_cast<double>(text.size());
}

std::vector<std::string> word_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        const char lc = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if ((lc >= 'a' && lc <= 'z') || (lc >= '0' && lc <= '9')) {
            cur.push_back(lc);
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

double jaccard_words(const std::string& a, const std::string& b) {
    std::vector<std::string> ta = word_tokens(a), tb = word_tokens(b);
    std::unordered_set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
    if (sa.empty() && sb.empty()) return 1.0;
    size_t inter = 0;
    for (const std::string& w : sa) {
        if (sb.count(w)) ++inter;
    }
    const size_t uni = sa.size() + sb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

FilteredCorpus filter_articles(std::vector<Article> articles) {
    std::sort(articles.begin(), articles.end(), [](const Article& a, const Article& b) {
        if (a.published_at != b.published_at) return a.published_at < b.published_at;
        return a.id < b.id;
    });
    FilteredCorpus out;
    // word sets of kept articles per company, in publication order, for dedup
    std::unordered_map<std::string, std::vector<size_t>> kept_by_company;
    for (Article& a : articles) {
        const auto len = static_cast<int>(a.text.size());
        if (len <= kMinArticleChars) {
            out.rejections.push_back({a.id, "too-short"});
            continue;
        }
        if (len >= kMaxArticleChars) {
            out.rejections.push_back({a.id, "too-long"});
            continue;
        }
        if (numeric_char_ratio(a.text) >= kMaxNumericRatio) {
            out.rejections.push_back({a.id, "numeric-ratio"});
            continue;
        }
        bool dup = false;
        for (size_t idx : kept_by_company[a.company_id]) {
            if (jaccard_words(a.text, out.articles[idx].text) >= kMaxJaccard) {
                dup = true;
                break;
            }
        }
        if (dup) {
            out.rejections.push_back({a.id, "near-duplicate"});
            continue;
        }
        kept_by_company[a.company_id].push_back(out.articles.size());
        out.articles.push_back(std::move(a));
    }
    // history rule: eligibility as a main article, not removal
    for (const auto& [_, idxs] : kept_by_company) {
        for (size_t k = 0; k < idxs.size(); ++k) {
            const Article& a = out.articles[idxs[k]];
            int count = 0;
            for (size_t j = 0; j < k; ++j) {
                const Article& c = out.articles[idxs[j]];
                if (days_between(c.published_at.date, a.published_at.date) <= kHistoryWindowDays) ++count;
            }
            if (count >= kMinHistoryCount) {
                out.main_eligible.insert(a.id);
            } else {
                out.rejections.push_back({a.id, "insufficient-history"});
            }
        }
    }
    return out;
}

void SplitSpec::validate() const {
    auto ordered = [](const Date& a, const Date& b) { return a <= b; };
    if (!ordered(train_begin, train_end) || !ordered(val_begin, val_end) || !ordered(test_begin, test_end)) {
        throw ConfigError("split ranges must have begin <= end");
    }
    if (!(train_end < val_begin) || !(val_end < test_begin)) {
        throw ConfigError("split ranges must be disjoint and ordered train < validation < test");
    }
}

std::optional<int> price_move_sign(const PriceTable& prices, const std::string& company_id, const Date& t,
                                   int horizon, const TradingCalendar& cal) {
    const PriceSeries* series = prices.find(company_id);
    if (!series) return std::nullopt;
    auto p0 = series->try_close(t);
    if (!p0) return std::nullopt;
    Date th;
    try {
        th = cal.shift(t, horizon);
    } catch (const Error&) {
        return std::nullopt;
    }
    auto p1 = series->try_close(th);
    if (!p1) return std::nullopt;
    if (*p1 > *p0) return 1;
    if (*p1 < *p0) return -1;
    return 0;  // exactly flat: caller drops
}

SplitSamples build_labeled_samples(const FilteredCorpus& corpus, const PriceTable& prices,
                                   const TradingCalendar& cal, const SplitSpec& splits, int horizon) {
    splits.validate();
    if (horizon < 1) throw ConfigError("label horizon must be >= 1 trading day");
    SplitSamples out;
    for (const Article& a : corpus.articles) {
        if (!corpus.main_eligible.count(a.id)) continue;
        Date t;
        try {
            t = assign_trading_date(a.published_at, cal);
        } catch (const Error&) {
            out.dropped.push_back({a.id, "no-trading-day"});
            continue;
        }
        Split split;
        if (t >= splits.train_begin && t <= splits.train_end) {
            split = Split::Train;
        } else if (t >= splits.val_begin && t <= splits.val_end) {
            split = Split::Validation;
        } else if (t >= splits.test_begin && t <= splits.test_end) {
            split = Split::Test;
        } else {
            out.dropped.push_back({a.id, "outside-splits"});
            continue;
        }
        const auto sign = price_move_sign(prices, a.company_id, t, horizon, cal);
        if (!sign) {
            out.dropped.push_back({a.id, "missing-price"});
            continue;
        }
        if (*sign == 0) {
            out.dropped.push_back({a.id, "zero-price-change"});
            continue;
        }
        // keep train/validation label windows inside their split so no
        // later-period prices leak into earlier-period training
        const Date window_end = cal.shift(t, horizon);
        if (split == Split::Train && window_end > splits.train_end) {
            out.dropped.push_back({a.id, "window-crosses-split"});
            continue;
        }
        if (split == Split::Validation && window_end > splits.val_end) {
            out.dropped.push_back({a.id, "window-crosses-split"});
            continue;
        }
        LabeledSample s;
        s.main = &a;
        s.horizon = horizon;
        s.label = *sign;
        s.trading_date = t;
        switch (split) {
            case Split::Train: out.train.push_back(std::move(s)); break;
            case Split::Validation: out.validation.push_back(std::move(s)); break;
            case Split::Test: out.test.push_back(std::move(s)); break;
        }
    }
    return out;
}

void balance_classes(std::vector<LabeledSample>& samples, uint64_t seed) {
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < samples.size(); ++i) {
        (samples[i].label > 0 ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) {
        throw DataError("class balancing requires both classes present (got " + std::to_string(pos.size()) +
                        " positive, " + std::to_string(neg.size()) + " negative)");
    }
    if (pos.size() == neg.size()) return;
    std::vector<size_t>& majority = pos.size() > neg.size() ? pos : neg;
    const size_t target = std::min(pos.size(), neg.size());
    Rng rng(seed);
    rng.shuffle(majority);
    std::unordered_set<size_t> removed(majority.begin() + static_cast<std::ptrdiff_t>(target), majority.end());
    std::vector<LabeledSample> kept;
    kept.reserve(samples.size() - removed.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        if (!removed.count(i)) kept.push_back(std::move(samples[i]));
    }
    samples = std::move(kept);
}

}  // namespace finctx
