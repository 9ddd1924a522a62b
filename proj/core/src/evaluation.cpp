#include "finctx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "finctx/error.hpp"
#include "finctx/rng.hpp"

namespace finctx {

namespace {

// 1-based ranks with ties sharing their average rank. `keys` need not be
// sorted; the rank of keys[i] lands in out[i].
std::vector<double> average_ranks(const std::vector<double>& keys) {
    const size_t n = keys.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return keys[a] < keys[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && keys[idx[j + 1]] == keys[idx[i]]) ++j;
        const double avg = double(i + j + 2) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ShapeError("scores and labels differ in length");
    if (scores.empty()) throw DataError("AUC of an empty sample set");
    size_t n_pos = 0, n_neg = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1)
            ++n_pos;
        else if (labels[i] == -1)
            ++n_neg;
        else
            throw DataError("labels must be +1 or -1");
        if (!std::isfinite(scores[i])) throw NumericError("non-finite score in AUC input");
    }
    if (n_pos == 0 || n_neg == 0)
        throw DataError("AUC needs both classes present (got " + std::to_string(n_pos) +
                        " up, " + std::to_string(n_neg) + " down)");
    const std::vector<double> ranks = average_ranks(scores);
    double rank_sum_pos = 0.0;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == 1) rank_sum_pos += ranks[i];
    const double u = rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0;
    return u / (double(n_pos) * double(n_neg));
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs) {
    std::vector<double> nonzero;
    for (double d : diffs) {
        if (!std::isfinite(d)) throw NumericError("non-finite difference in signed-rank test");
        if (d != 0.0) nonzero.push_back(d);
    }
    WilcoxonResult res;
    res.n = int(nonzero.size());
    if (nonzero.empty()) {
        res.exact = true;
        res.p_value = 1.0;
        return res;
    }
    std::vector<double> abs_vals(nonzero.size());
    for (size_t i = 0; i < nonzero.size(); ++i) abs_vals[i] = std::fabs(nonzero[i]);
    const std::vector<double> ranks = average_ranks(abs_vals);
    double w_plus = 0.0;
    for (size_t i = 0; i < nonzero.size(); ++i)
        if (nonzero[i] > 0.0) w_plus += ranks[i];
    res.w_plus = w_plus;

    const int n = res.n;
    if (n <= kExactWilcoxonMaxN) {
        res.exact = true;
        const uint64_t total = uint64_t(1) << n;
        uint64_t le = 0, ge = 0;
        constexpr double kTol = 1e-9;
        for (uint64_t mask = 0; mask < total; ++mask) {
            double w = 0.0;
            for (int b = 0; b < n; ++b)
                if (mask & (uint64_t(1) << b)) w += ranks[size_t(b)];
            if (w <= w_plus + kTol) ++le;
            if (w >= w_plus - kTol) ++ge;
        }
        const double tail = double(std::min(le, ge)) / double(total);
        res.p_value = std::min(1.0, 2.0 * tail);
        return res;
    }

    res.exact = false;
    const double mu = double(n) * double(n + 1) / 4.0;
    double tie_term = 0.0;
    std::vector<double> sorted_abs = abs_vals;
    std::sort(sorted_abs.begin(), sorted_abs.end());
    size_t i = 0;
    while (i < sorted_abs.size()) {
        size_t j = i;
        while (j + 1 < sorted_abs.size() && sorted_abs[j + 1] == sorted_abs[i]) ++j;
        const double t = double(j - i + 1);
        tie_term += (t * t * t - t);
        i = j + 1;
    }
    const double var = double(n) * double(n + 1) * double(2 * n + 1) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
        res.p_value = 1.0;
        return res;
    }
    double num = w_plus - mu;
    if (num > 0.5)
        num -= 0.5;
    else if (num < -0.5)
        num += 0.5;
    else
        num = 0.0;
    const double z = num / std::sqrt(var);
    res.p_value = std::erfc(std::fabs(z) / std::sqrt(2.0));
    return res;
}

BootstrapResult bootstrap_auc_significance(const std::vector<double>& scores_a,
                                           const std::vector<double>& scores_b,
                                           const std::vector<int>& labels, int n_replicates,
                                           uint64_t seed) {
    if (scores_a.size() != labels.size() || scores_b.size() != labels.size())
        throw ShapeError("paired bootstrap needs aligned scores and labels");
    if (n_replicates <= 0) throw ConfigError("bootstrap replicate count must be positive");
    auc(scores_a, labels);  // validates inputs once up front
    auc(scores_b, labels);

    const size_t n = labels.size();
    Rng rng(seed);
    std::vector<double> diffs;
    diffs.reserve(size_t(n_replicates));
    std::vector<double> ra(n), rb(n);
    std::vector<int> rl(n);
    for (int rep = 0; rep < n_replicates; ++rep) {
        bool both = false;
        for (int attempt = 0; attempt < 1000 && !both; ++attempt) {
            bool pos = false, neg = false;
            for (size_t i = 0; i < n; ++i) {
                const size_t k = size_t(rng.below(uint64_t(n)));
                ra[i] = scores_a[k];
                rb[i] = scores_b[k];
                rl[i] = labels[k];
                pos |= labels[k] == 1;
                neg |= labels[k] == -1;
            }
            both = pos && neg;
        }
        if (!both) throw DataError("bootstrap could not draw a replicate with both classes");
        diffs.push_back(auc(ra, rl) - auc(rb, rl));
    }
    BootstrapResult res;
    res.replicates = n_replicates;
    res.mean_diff = mean_of(diffs);
    res.wilcoxon = wilcoxon_signed_rank(diffs);
    res.p_value = res.wilcoxon.p_value;
    return res;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) throw DataError("mean of an empty list");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
}

double sample_stdev(const std::vector<double>& xs) {
    if (xs.size() < 2) throw DataError("sample stdev needs at least two points");
    const double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / double(xs.size() - 1));
}

}  // namespace finctx
