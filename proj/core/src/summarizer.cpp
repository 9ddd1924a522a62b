#include "finctx/summarizer.hpp"

#include <algorithm>

#include "finctx/error.hpp"

namespace finctx {

SummaryPlacement parse_placement(const std::string& s) {
    if (s == "trailing") return SummaryPlacement::TrailingAfterChunk;
    if (s == "leading") return SummaryPlacement::LeadingBeforeChunk;
    throw ConfigError("unknown summary placement '" + s + "' (expected trailing|leading)");
}

std::string placement_name(SummaryPlacement p) {
    return p == SummaryPlacement::TrailingAfterChunk ? "trailing" : "leading";
}

InterleaveLayout interleave_layout(int n_tokens, int n_summary, SummaryPlacement placement) {
    if (n_summary <= 0) throw ConfigError("summary token count must be positive");
    if (n_tokens <= 0) throw ConfigError("cannot interleave an empty token sequence");
    if (n_summary > n_tokens)
        throw ConfigError("summary token count " + std::to_string(n_summary) +
                          " exceeds article length " + std::to_string(n_tokens));
    const int chunk = (n_tokens + n_summary - 1) / n_summary;
    InterleaveLayout out;
    out.chunks.reserve(size_t(n_summary));
    out.summary_positions.reserve(size_t(n_summary));
    int pos = 0;
    for (int m = 0; m < n_summary; ++m) {
        const int begin = std::min(m * chunk, n_tokens);
        const int end = std::min(begin + chunk, n_tokens);
        out.chunks.emplace_back(begin, end);
        if (placement == SummaryPlacement::LeadingBeforeChunk) {
            out.summary_positions.push_back(pos);
            pos += 1 + (end - begin);
        } else {
            pos += end - begin;
            out.summary_positions.push_back(pos);
            pos += 1;
        }
    }
    out.augmented_len = pos;
    return out;
}

int time_bucket(int delta_days) {
    if (delta_days < 0)
        throw TemporalOrderError("context elapsed time is negative: " +
                                 std::to_string(delta_days) + " days");
    if (delta_days <= 30) return delta_days;
    if (delta_days <= 60) return 31;
    if (delta_days <= 90) return 32;
    if (delta_days <= 180) return 33;
    if (delta_days <= 365) return 34;
    return 35;
}

Summarizer::Summarizer(const SummarizerConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.d_model <= 0 || cfg.layers <= 0 || cfg.vocab <= 0)
        throw ConfigError("summarizer dims must be positive");
    if (cfg.summary_tokens <= 0) throw ConfigError("summary token count must be positive");
    if (cfg.summary_tokens > cfg.max_article_tokens)
        throw ConfigError("summary token count exceeds the article token budget");
    if (cfg.max_article_tokens + cfg.summary_tokens > cfg.max_positions)
        throw ConfigError("summarizer position table too small for the augmented sequence");
    tok_embed_ = Parameter{"hcs.embed.tok", Tensor::randn({cfg.vocab, cfg.d_model}, rng, 0.05)};
    pos_embed_ =
        Parameter{"hcs.embed.pos", Tensor::randn({cfg.max_positions, cfg.d_model}, rng, 0.05)};
    summary_embed_ =
        Parameter{"summary_tokens.embed", Tensor::randn({cfg.summary_tokens, cfg.d_model}, rng, 0.05)};
    te_table_ = Parameter{"te.table", Tensor::zeros({kTimeBuckets, cfg.d_model})};
    blocks_.reserve(size_t(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l)
        blocks_.emplace_back("hcs.layer" + std::to_string(l), cfg.d_model, cfg.heads, cfg.d_ff, rng);
    final_ln_ = LayerNormParams("hcs.final_ln", cfg.d_model);
}

std::vector<int> Summarizer::clipped(const std::vector<int>& tokens) const {
    if (tokens.empty()) throw DataError("cannot summarize an article with no tokens");
    for (int id : tokens)
        if (id < 0 || id >= cfg_.vocab) throw DataError("token id out of vocabulary range");
    if (int(tokens.size()) <= cfg_.max_article_tokens) return tokens;
    return std::vector<int>(tokens.begin(), tokens.begin() + cfg_.max_article_tokens);
}

Var Summarizer::encode_augmented(Tape& t, const std::vector<int>& tokens) {
    const std::vector<int> ids = clipped(tokens);
    const InterleaveLayout layout =
        interleave_layout(int(ids.size()), cfg_.summary_tokens, cfg_.placement);

    Var tok_rows = t.gather_rows(t.leaf(tok_embed_), ids);
    Var sum_rows = t.leaf(summary_embed_);
    std::vector<Var> pieces;
    pieces.reserve(size_t(2 * cfg_.summary_tokens));
    for (int m = 0; m < cfg_.summary_tokens; ++m) {
        const auto [begin, end] = layout.chunks[size_t(m)];
        Var summary = t.slice_rows(sum_rows, m, m + 1);
        if (cfg_.placement == SummaryPlacement::LeadingBeforeChunk) pieces.push_back(summary);
        if (end > begin) pieces.push_back(t.slice_rows(tok_rows, begin, end));
        if (cfg_.placement == SummaryPlacement::TrailingAfterChunk) pieces.push_back(summary);
    }
    Var x = pieces.size() == 1 ? pieces[0] : t.concat_rows(pieces);

    std::vector<int> pos_ids(size_t(layout.augmented_len));
    for (int i = 0; i < layout.augmented_len; ++i) pos_ids[size_t(i)] = i;
    x = t.add(x, t.gather_rows(t.leaf(pos_embed_), pos_ids));

    for (auto& block : blocks_) x = transformer_block(t, x, block, nullptr, nullptr, 0.0);
    return final_ln_.apply(t, x);
}

Var Summarizer::summary_embeddings(Tape& t, const std::vector<int>& tokens) {
    const std::vector<int> ids = clipped(tokens);
    const InterleaveLayout layout =
        interleave_layout(int(ids.size()), cfg_.summary_tokens, cfg_.placement);
    Var encoded = encode_augmented(t, tokens);
    std::vector<Var> rows;
    rows.reserve(size_t(cfg_.summary_tokens));
    for (int p : layout.summary_positions) rows.push_back(t.slice_rows(encoded, p, p + 1));
    return rows.size() == 1 ? rows[0] : t.concat_rows(rows);
}

Var Summarizer::summary_context(Tape& t, const std::vector<ContextTokens>& contexts) {
    if (contexts.empty()) throw DataError("summary context requires at least one context article");
    for (size_t i = 1; i < contexts.size(); ++i)
        if (contexts[i].delta_days > contexts[i - 1].delta_days)
            throw TemporalOrderError("context articles must be ordered oldest first");
    std::vector<Var> blocks;
    blocks.reserve(contexts.size());
    for (const ContextTokens& ctx : contexts) {
        Var se = summary_embeddings(t, ctx.tokens);
        const int bucket = time_bucket(ctx.delta_days);
        Var te = t.slice_rows(t.leaf(te_table_), bucket, bucket + 1);
        blocks.push_back(t.add(se, te));
    }
    return blocks.size() == 1 ? blocks[0] : t.concat_rows(blocks);
}

std::vector<Parameter*> Summarizer::parameters() {
    std::vector<Parameter*> out;
    out.push_back(&tok_embed_);
    out.push_back(&pos_embed_);
    out.push_back(&summary_embed_);
    out.push_back(&te_table_);
    for (auto& b : blocks_) b.collect(out);
    final_ln_.collect(out);
    return out;
}

}  // namespace finctx
