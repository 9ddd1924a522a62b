#include "finctx/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "finctx/error.hpp"

namespace finctx {

namespace {

uint64_t bucket_of(const std::string& term, int dim) { return hash_str(term) % static_cast<uint64_t>(dim); }

std::vector<uint64_t> hashed_terms(const std::string& text, int dim) {
    const std::vector<std::string> words = word_tokens(text);
    std::vector<uint64_t> out;
    out.reserve(words.size() * 2);
    for (size_t i = 0; i < words.size(); ++i) {
        out.push_back(bucket_of(words[i], dim));
        if (i + 1 < words.size()) out.push_back(bucket_of(words[i] + "\x1f" + words[i + 1], dim));
    }
    return out;
}

}  // namespace

HashedTfIdfEmbedder::HashedTfIdfEmbedder(int dim) : dim_(dim) {
    if (dim < 1) throw ConfigError("embedding dimension must be positive");
}

void HashedTfIdfEmbedder::fit(const std::vector<std::string>& texts) {
    std::vector<int64_t> df(static_cast<size_t>(dim_), 0);
    for (const std::string& t : texts) {
        std::vector<uint64_t> buckets = hashed_terms(t, dim_);
        std::sort(buckets.begin(), buckets.end());
        buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());
        for (uint64_t b : buckets) ++df[static_cast<size_t>(b)];
    }
    idf_.assign(static_cast<size_t>(dim_), 0.0);
    const double n = static_cast<double>(texts.size());
    for (int i = 0; i < dim_; ++i) {
        idf_[static_cast<size_t>(i)] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[static_cast<size_t>(i)]))) + 1.0;
    }
}

std::vector<double> HashedTfIdfEmbedder::embed(const std::string& text) const {
    if (word_tokens(text).empty()) {
        throw DataError("cannot embed a document with no word tokens");
    }
    std::vector<double> v(static_cast<size_t>(dim_), 0.0);
    for (uint64_t b : hashed_terms(text, dim_)) v[static_cast<size_t>(b)] += 1.0;
    if (!idf_.empty()) {
        for (int i = 0; i < dim_; ++i) v[static_cast<size_t>(i)] *= idf_[static_cast<size_t>(i)];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine of vectors with different dimensions " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine of a zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

RetrieverKind parse_retriever_kind(const std::string& name) {
    if (name == "recent") return RetrieverKind::MostRecent;
    if (name == "finsim") return RetrieverKind::FinSim;
    if (name == "timefinsim") return RetrieverKind::TimeFinSim;
    throw ConfigError("unknown retriever kind '" + name + "', expected recent|finsim|timefinsim");
}

std::string retriever_kind_name(RetrieverKind kind) {
    switch (kind) {
        case RetrieverKind::MostRecent: return "recent";
        case RetrieverKind::FinSim: return "finsim";
        case RetrieverKind::TimeFinSim: return "timefinsim";
    }
    return "?";
}

double time_fin_sim(const DocumentEmbedder& embedder, const Article& a, const Article& c, double half_life_days) {
    if (!(c.published_at < a.published_at)) {
        throw TemporalOrderError("context '" + c.id + "' does not precede main article '" + a.id + "'");
    }
    if (half_life_days <= 0.0) throw ConfigError("half-life must be positive");
    const double t = static_cast<double>(days_between(c.published_at.date, a.published_at.date));
    const double sim = cosine(embedder.embed(a.text), embedder.embed(c.text));
    return sim * std::exp(-std::log(2.0) * t / half_life_days);
}

ContextRetriever::ContextRetriever(const std::vector<Article>& corpus,
                                   std::shared_ptr<const DocumentEmbedder> embedder)
    : embedder_(std::move(embedder)) {
    if (!embedder_) throw ConfigError("retriever needs an embedder");
    for (const Article& a : corpus) {
        by_company_[a.company_id].push_back(Entry{&a, embedder_->embed(a.text)});
    }
    for (auto& [_, entries] : by_company_) {
        std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
            if (x.article->published_at != y.article->published_at) {
                return x.article->published_at < y.article->published_at;
            }
            return x.article->id < y.article->id;
        });
    }
}

const std::vector<double>& ContextRetriever::embedding_of(const Article& a) const {
    auto it = by_company_.find(a.company_id);
    if (it != by_company_.end()) {
        for (const Entry& e : it->second) {
            if (e.article->id == a.id) return e.embedding;
        }
    }
    throw DataError("article '" + a.id + "' is not part of the retrieval index");
}

RetrievalResult ContextRetriever::retrieve(const Article& main, int n, RetrieverKind kind,
                                           double half_life_days) const {
    if (n < 0) throw ConfigError("retrieval count must be >= 0");
    if (half_life_days <= 0.0) throw ConfigError("half-life must be positive");
    RetrievalResult out;
    if (n == 0) return out;

    auto it = by_company_.find(main.company_id);
    std::vector<const Entry*> candidates;
    if (it != by_company_.end()) {
        for (const Entry& e : it->second) {
            if (!(e.article->published_at < main.published_at)) continue;
            if (e.article->id == main.id) continue;
            if (days_between(e.article->published_at.date, main.published_at.date) > kRetrievalWindowDays) continue;
            candidates.push_back(&e);
        }
    }
    if (static_cast<int>(candidates.size()) < n) {
        throw InsufficientHistoryError("retrieval for '" + main.id + "' found only " +
                                       std::to_string(candidates.size()) + " of " + std::to_string(n) +
                                       " required context articles");
    }

    std::vector<double> main_emb;
    if (kind != RetrieverKind::MostRecent) main_emb = embedder_->embed(main.text);
    auto score_of = [&](const Entry& e) -> double {
        const double t = static_cast<double>(days_between(e.article->published_at.date, main.published_at.date));
        switch (kind) {
            case RetrieverKind::MostRecent: return -t;
            case RetrieverKind::FinSim: return cosine(main_emb, e.embedding);
            case RetrieverKind::TimeFinSim:
                return cosine(main_emb, e.embedding) * std::exp(-std::log(2.0) * t / half_life_days);
        }
        return 0.0;
    };

    std::vector<std::pair<double, const Entry*>> scored;
    scored.reserve(candidates.size());
    for (const Entry* e : candidates) scored.emplace_back(score_of(*e), e);
    auto better = [](const std::pair<double, const Entry*>& a, const std::pair<double, const Entry*>& b) {
        if (a.first != b.first) return a.first > b.first;
        if (a.second->article->published_at != b.second->article->published_at) {
            return a.second->article->published_at > b.second->article->published_at;
        }
        return a.second->article->id < b.second->article->id;
    };
    std::partial_sort(scored.begin(), scored.begin() + n, scored.end(), better);
    scored.resize(static_cast<size_t>(n));

    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second->article->published_at != b.second->article->published_at) {
            return a.second->article->published_at < b.second->article->published_at;
        }
        return a.second->article->id < b.second->article->id;
    });
    for (const auto& [score, e] : scored) {
        out.contexts.push_back(e->article);
        out.scores.push_back(score);
    }
    return out;
}

double ContextRetriever::staleness(const Article& main) const {
    auto it = by_company_.find(main.company_id);
    std::vector<const Entry*> prior;
    if (it != by_company_.end()) {
        for (const Entry& e : it->second) {
            if (e.article->published_at < main.published_at && e.article->id != main.id) prior.push_back(&e);
        }
    }
    if (static_cast<int>(prior.size()) < kStalenessHistory) {
        throw InsufficientHistoryError("staleness for '" + main.id + "' needs " +
                                       std::to_string(kStalenessHistory) + " prior articles, found " +
                                       std::to_string(prior.size()));
    }
    const std::vector<double> main_emb = embedder_->embed(main.text);
    double sum = 0.0;
    for (size_t k = prior.size() - kStalenessHistory; k < prior.size(); ++k) {
        sum += cosine(main_emb, prior[k]->embedding);
    }
    return sum / kStalenessHistory;
}

std::vector<int> staleness_buckets(const std::vector<std::pair<std::string, double>>& scored) {
    const size_t n = scored.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scored[a].second != scored[b].second) return scored[a].second < scored[b].second;
        return scored[a].first < scored[b].first;
    });
    const size_t base = n / 3, rem = n % 3;
    const size_t c0 = base + (rem > 0 ? 1 : 0);
    const size_t c1 = base + (rem > 1 ? 1 : 0);
    std::vector<int> bucket(n, 0);
    for (size_t pos = 0; pos < n; ++pos) {
        const int b = pos < c0 ? 0 : (pos < c0 + c1 ? 1 : 2);
        bucket[order[pos]] = b;
    }
    return bucket;
}

}  // namespace finctx
