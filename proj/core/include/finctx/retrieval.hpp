#pragma once

#include <memory>
#include <string>
#include <vector>

#include "finctx/corpus.hpp"

namespace finctx {

// Pluggable document embedder; outputs are L2-normalized.
class DocumentEmbedder {
public:
    virtual ~DocumentEmbedder() = default;
    virtual std::vector<double> embed(const std::string& text) const = 0;
    virtual int dim() const = 0;
};

// Deterministic stand-in for a learned sentence encoder: word unigrams and
// bigrams hashed into a fixed-size bucket space, TF-IDF weighted when fitted,
// L2-normalized. All entries non-negative, so cosines land in [0, 1].
class HashedTfIdfEmbedder final : public DocumentEmbedder {
public:
    explicit HashedTfIdfEmbedder(int dim = 1024);

    // learns bucket document frequencies; optional (plain TF without it)
    void fit(const std::vector<std::string>& texts);

    std::vector<double> embed(const std::string& text) const override;
    int dim() const override { return dim_; }

private:
    int dim_;
    std::vector<double> idf_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

enum class RetrieverKind { MostRecent, FinSim, TimeFinSim };

RetrieverKind parse_retriever_kind(const std::string& name);  // recent|finsim|timefinsim
std::string retriever_kind_name(RetrieverKind kind);

inline constexpr double kDefaultHalfLifeDays = 180.0;
inline constexpr int kRetrievalWindowDays = 365;

// cosine(E(a), E(c)) * exp(-ln2 * elapsed_days / half_life); c must precede a
double time_fin_sim(const DocumentEmbedder& embedder, const Article& a, const Article& c, double half_life_days);

struct RetrievalResult {
    std::vector<const Article*> contexts;  // ascending (published_at, id)
    std::vector<double> scores;            // aligned with contexts
};

// Per-company index over a filtered corpus. Embeddings are computed once at
// construction; retrieval itself is read-only.
class ContextRetriever {
public:
    ContextRetriever(const std::vector<Article>& corpus, std::shared_ptr<const DocumentEmbedder> embedder);

    // top-N candidates from the same company within the 365 days before
    // `main`, ranked by kind; ties broken by higher score, later publication,
    // then id. Throws InsufficientHistoryError when fewer than N qualify.
    RetrievalResult retrieve(const Article& main, int n, RetrieverKind kind,
                             double half_life_days = kDefaultHalfLifeDays) const;

    // mean cosine of `main` against its 5 most recent prior same-company
    // articles; InsufficientHistoryError when fewer than 5 exist
    double staleness(const Article& main) const;

    const std::vector<double>& embedding_of(const Article& a) const;

private:
    struct Entry {
        const Article* article;
        std::vector<double> embedding;
    };
    std::unordered_map<std::string, std::vector<Entry>> by_company_;  // ascending (published_at, id)
    std::shared_ptr<const DocumentEmbedder> embedder_;
};

inline constexpr int kStalenessHistory = 5;

// Tercile assignment by (score, id): returns a bucket index 0/1/2 per input
// element, sizes as equal as possible (largest remainders first).
std::vector<int> staleness_buckets(const std::vector<std::pair<std::string, double>>& scored);

}  // namespace finctx
