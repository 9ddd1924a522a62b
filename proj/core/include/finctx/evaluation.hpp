#pragma once

#include <cstdint>
#include <vector>

namespace finctx {

// Area under the ROC curve for scores against +1/-1 labels, computed from
// Mann-Whitney rank sums with average ranks on ties.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct WilcoxonResult {
    double p_value = 1.0;
    int n = 0;           // nonzero differences used
    double w_plus = 0.0;  // rank sum of positive differences
    bool exact = false;
};

// Two-sided Wilcoxon signed-rank test on paired differences. Zero
// differences are discarded. Up to n = 12 the null distribution is
// enumerated exactly; above that a normal approximation with tie and
// continuity corrections is used. No nonzero differences yield p = 1.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs);

inline constexpr int kExactWilcoxonMaxN = 12;
inline constexpr int kDefaultBootstrapReplicates = 1000;

struct BootstrapResult {
    double p_value = 1.0;
    double mean_diff = 0.0;  // mean of per-replicate AUC(a) - AUC(b)
    int replicates = 0;
    WilcoxonResult wilcoxon;
};

// Paired bootstrap over samples: each replicate resamples the test set with
// replacement (shared indices for both models), recomputes both AUCs, and
// the replicate differences feed the signed-rank test.
BootstrapResult bootstrap_auc_significance(const std::vector<double>& scores_a,
                                           const std::vector<double>& scores_b,
                                           const std::vector<int>& labels, int n_replicates,
                                           uint64_t seed);

double mean_of(const std::vector<double>& xs);
double sample_stdev(const std::vector<double>& xs);  // n-1 denominator

}  // namespace finctx
