#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "finctx/error.hpp"
#include "finctx/evaluation.hpp"
#include "finctx/rng.hpp"

using namespace finctx;

namespace {

// independent AUC definition: fraction of (positive, negative) pairs ranked
// correctly, ties counting half
double auc_by_pairs(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0.0;
    long long pairs = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (size_t j = 0; j < s.size(); ++j) {
            if (y[j] != -1) continue;
            ++pairs;
            if (s[i] > s[j])
                num += 1.0;
            else if (s[i] == s[j])
                num += 0.5;
        }
    }
    return num / double(pairs);
}

// exact two-sided signed-rank p for distinct magnitudes, any n
double wilcoxon_exact_by_enumeration(const std::vector<double>& diffs) {
    std::vector<double> abs_sorted;
    for (double d : diffs) abs_sorted.push_back(std::fabs(d));
    std::vector<size_t> order(abs_sorted.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return abs_sorted[a] < abs_sorted[b]; });
    const int n = int(diffs.size());
    std::vector<double> rank(diffs.size());
    for (int pos = 0; pos < n; ++pos) rank[order[size_t(pos)]] = double(pos + 1);
    double w_plus = 0.0;
    for (size_t i = 0; i < diffs.size(); ++i)
        if (diffs[i] > 0.0) w_plus += rank[i];
    const uint64_t total = uint64_t(1) << n;
    uint64_t le = 0, ge = 0;
    for (uint64_t mask = 0; mask < total; ++mask) {
        double w = 0.0;
        for (int b = 0; b < n; ++b)
            if (mask & (uint64_t(1) << b)) w += double(b + 1);
        if (w <= w_plus + 1e-9) ++le;
        if (w >= w_plus - 1e-9) ++ge;
    }
    return std::min(1.0, 2.0 * double(std::min(le, ge)) / double(total));
}

}  // namespace

TEST_CASE("auc equals the pairwise-counting definition") {
    Rng rng(404);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 5 + int(rng.below(196));
        std::vector<double> s(static_cast<size_t>(n));
        std::vector<int> y(static_cast<size_t>(n));
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            // quantized scores force plenty of ties
            s[size_t(i)] = trial % 2 == 0 ? rng.normal() : double(rng.below(8));
            y[size_t(i)] = rng.bernoulli(0.5) ? 1 : -1;
            pos += y[size_t(i)] == 1;
        }
        if (pos == 0) y[0] = 1;
        if (pos == n) y[0] = -1;
        CHECK(std::abs(auc(s, y) - auc_by_pairs(s, y)) < 1e-12);
    }
}

TEST_CASE("auc endpoints and invariances") {
    const std::vector<double> s = {0.9, 0.8, 0.3, 0.1};
    const std::vector<int> y = {1, 1, -1, -1};
    CHECK(auc(s, y) == 1.0);
    CHECK(auc(s, {-1, -1, 1, 1}) == 0.0);
    CHECK(auc({0.5, 0.5, 0.5, 0.5}, y) == 0.5);
    CHECK(auc({0.9, 0.2, 0.3, 0.1}, y) == doctest::Approx(0.75));

    // strictly monotone transforms keep ranks, hence the AUC, exactly
    Rng rng(11);
    std::vector<double> scores(60);
    std::vector<int> labels(60);
    for (size_t i = 0; i < scores.size(); ++i) {
        scores[i] = double(rng.below(12)) / 3.0;
        labels[i] = rng.bernoulli(0.4) ? 1 : -1;
    }
    labels[0] = 1;
    labels[1] = -1;
    std::vector<double> mapped(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) mapped[i] = std::exp(2.0 * scores[i]) - 3.0;
    CHECK(auc(scores, labels) == auc(mapped, labels));

    // negating scores mirrors the curve
    std::vector<double> neg(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) neg[i] = -scores[i];
    CHECK(std::abs(auc(neg, labels) - (1.0 - auc(scores, labels))) < 1e-12);
}

TEST_CASE("auc input validation") {
    CHECK_THROWS_AS(auc({}, {}), DataError);
    CHECK_THROWS_AS(auc({1.0, 2.0}, {1}), ShapeError);
    CHECK_THROWS_AS(auc({1.0, 2.0}, {1, 0}), DataError);
    CHECK_THROWS_AS(auc({1.0, 2.0}, {1, 1}), DataError);
    const double nan = std::nan("");
    CHECK_THROWS_AS(auc({1.0, nan}, {1, -1}), NumericError);
}

TEST_CASE("signed-rank test enumerates small samples exactly") {
    // six positive differences: only the all-positive assignment reaches w+,
    // so p = 2 * (1/64)
    const WilcoxonResult all_pos = wilcoxon_signed_rank({0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    CHECK(all_pos.exact);
    CHECK(all_pos.n == 6);
    CHECK(all_pos.w_plus == 21.0);
    CHECK(all_pos.p_value == doctest::Approx(0.03125).epsilon(1e-12));

    // mixed signs, hand-enumerated: w+ = 4 of {1,2,3}, min tail = 3/8
    const WilcoxonResult mixed = wilcoxon_signed_rank({1.0, -2.0, 3.0});
    CHECK(mixed.exact);
    CHECK(mixed.n == 3);
    CHECK(mixed.w_plus == 4.0);
    CHECK(mixed.p_value == doctest::Approx(0.75).epsilon(1e-12));

    // tied magnitudes share average ranks inside the enumeration
    const WilcoxonResult tied = wilcoxon_signed_rank({1.0, -1.0, 2.0});
    CHECK(tied.exact);
    CHECK(tied.w_plus == doctest::Approx(4.5));
    CHECK(tied.p_value == doctest::Approx(0.75).epsilon(1e-12));

    // zeros are discarded before ranking
    const WilcoxonResult zeros = wilcoxon_signed_rank({0.0, 1.0, 0.0, -2.0, 3.0, 0.0});
    CHECK(zeros.n == 3);
    CHECK(zeros.p_value == doctest::Approx(0.75).epsilon(1e-12));

    const WilcoxonResult none = wilcoxon_signed_rank({0.0, 0.0});
    CHECK(none.n == 0);
    CHECK(none.p_value == 1.0);

    CHECK(wilcoxon_signed_rank({}).p_value == 1.0);
    CHECK_THROWS_AS(wilcoxon_signed_rank({std::nan("")}), NumericError);

    // sign symmetry: two-sided p ignores direction
    const WilcoxonResult fwd = wilcoxon_signed_rank({0.4, 0.8, -0.2, 1.5, 0.9});
    const WilcoxonResult rev = wilcoxon_signed_rank({-0.4, -0.8, 0.2, -1.5, -0.9});
    CHECK(fwd.p_value == doctest::Approx(rev.p_value).epsilon(1e-12));
}

TEST_CASE("normal approximation tracks exact enumeration at n = 20") {
    Rng rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> diffs(20);
        for (double& d : diffs) {
            d = rng.normal();
            if (d == 0.0) d = 0.1;
        }
        const WilcoxonResult approx = wilcoxon_signed_rank(diffs);
        CHECK_FALSE(approx.exact);
        CHECK(approx.n == 20);
        const double exact_p = wilcoxon_exact_by_enumeration(diffs);
        CHECK(std::abs(approx.p_value - exact_p) < 0.02);
    }
}

TEST_CASE("boundary between exact and approximate paths") {
    std::vector<double> d12, d13;
    Rng rng(5);
    for (int i = 0; i < 12; ++i) d12.push_back(rng.normal());
    d13 = d12;
    d13.push_back(rng.normal());
    CHECK(wilcoxon_signed_rank(d12).exact);
    CHECK_FALSE(wilcoxon_signed_rank(d13).exact);
}

TEST_CASE("paired bootstrap is deterministic and detects separation") {
    Rng rng(88);
    const int n = 60;
    std::vector<double> good(n), noise(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        labels[i] = rng.bernoulli(0.5) ? 1 : -1;
        good[i] = double(labels[i]) + 0.1 * rng.normal();  // nearly perfect
        noise[i] = rng.normal();                           // uninformative
    }
    labels[0] = 1;
    labels[1] = -1;

    const BootstrapResult r1 = bootstrap_auc_significance(good, noise, labels, 200, 17);
    const BootstrapResult r2 = bootstrap_auc_significance(good, noise, labels, 200, 17);
    CHECK(r1.p_value == r2.p_value);
    CHECK(r1.mean_diff == r2.mean_diff);
    CHECK(r1.replicates == 200);
    CHECK(r1.mean_diff > 0.2);
    CHECK(r1.p_value < 1e-6);

    const BootstrapResult r3 = bootstrap_auc_significance(good, noise, labels, 200, 18);
    CHECK(r3.mean_diff != r1.mean_diff);  // different draws, same conclusion
    CHECK(r3.p_value < 1e-6);

    // identical models give zero differences everywhere, p = 1
    const BootstrapResult same = bootstrap_auc_significance(good, good, labels, 50, 3);
    CHECK(same.p_value == 1.0);
    CHECK(same.mean_diff == 0.0);
    CHECK(same.wilcoxon.n == 0);

    CHECK_THROWS_AS(bootstrap_auc_significance(good, noise, labels, 0, 1), ConfigError);
    std::vector<double> short_b(noise.begin(), noise.end() - 1);
    CHECK_THROWS_AS(bootstrap_auc_significance(good, short_b, labels, 10, 1), ShapeError);
}

TEST_CASE("summary statistics") {
    CHECK(mean_of({1.0, 2.0, 3.0, 4.0}) == 2.5);
    CHECK(sample_stdev({1.0, 2.0, 3.0, 4.0}) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
    CHECK(sample_stdev({3.0, 3.0, 3.0}) == 0.0);
    CHECK_THROWS_AS(mean_of({}), DataError);
    CHECK_THROWS_AS(sample_stdev({1.0}), DataError);
}
