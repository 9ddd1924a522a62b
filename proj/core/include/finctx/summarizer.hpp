#pragma once

#include <string>
#include <utility>
#include <vector>

#include "finctx/nn.hpp"
#include "finctx/rng.hpp"
#include "finctx/tape.hpp"

namespace finctx {

enum class SummaryPlacement { TrailingAfterChunk, LeadingBeforeChunk };

SummaryPlacement parse_placement(const std::string& s);
std::string placement_name(SummaryPlacement p);

// Layout of one article's token sequence after inserting M summary slots.
// The article is split into M contiguous chunks of ceil(L/M) tokens (the
// last chunk may be shorter); each summary slot sits after its chunk
// (trailing) or before it (leading).
struct InterleaveLayout {
    std::vector<std::pair<int, int>> chunks;  // [begin, end) into the token list, size M
    std::vector<int> summary_positions;       // index of each summary slot in the augmented sequence
    int augmented_len = 0;
};

InterleaveLayout interleave_layout(int n_tokens, int n_summary, SummaryPlacement placement);

// Elapsed-time buckets for context staleness: 0..30 days map to their own
// bucket, then 31-60, 61-90, 91-180, 181-365, and everything older.
inline constexpr int kTimeBuckets = 36;
int time_bucket(int delta_days);

struct SummarizerConfig {
    int d_model = 32;
    int layers = 2;
    int heads = 4;
    int d_ff = 64;
    int vocab = 512;
    int max_article_tokens = 72;  // article tokens kept per context, before augmentation
    int summary_tokens = 2;       // M
    SummaryPlacement placement = SummaryPlacement::TrailingAfterChunk;
    int max_positions = 96;       // learned positions over the augmented sequence
};

// One retrieved context as the summarizer consumes it: token ids plus the
// number of days it precedes the main article by.
struct ContextTokens {
    std::vector<int> tokens;
    int delta_days = 0;
};

// Small bidirectional encoder that compresses an article into M summary
// embeddings, plus the elapsed-time table added on top of them.
class Summarizer {
  public:
    Summarizer(const SummarizerConfig& cfg, Rng& rng);

    // [M, d_model] summary embeddings for one article.
    Var summary_embeddings(Tape& t, const std::vector<int>& tokens);

    // Stacked summary context for a list of contexts ordered oldest first:
    // [N*M, d_model], each article's block being SE + TE(delta_days).
    Var summary_context(Tape& t, const std::vector<ContextTokens>& contexts);

    // Full encoder output over the augmented sequence (for inspection).
    Var encode_augmented(Tape& t, const std::vector<int>& tokens);

    std::vector<Parameter*> parameters();
    const SummarizerConfig& config() const { return cfg_; }

  private:
    std::vector<int> clipped(const std::vector<int>& tokens) const;

    SummarizerConfig cfg_;
    Parameter tok_embed_;      // [vocab, d]
    Parameter pos_embed_;      // [max_positions, d]
    Parameter summary_embed_;  // [M, d]
    Parameter te_table_;       // [kTimeBuckets, d]
    std::vector<BlockParams> blocks_;
    LayerNormParams final_ln_;
};

}  // namespace finctx
