#include "finctx/decoder.hpp"

#include "finctx/error.hpp"

namespace finctx {

std::vector<int> build_positions(int prefix_len, int main_len) {
    if (prefix_len < 0 || main_len < 0) throw ConfigError("sequence lengths must be non-negative");
    std::vector<int> pos(size_t(prefix_len + main_len));
    for (int i = 0; i < prefix_len; ++i) pos[size_t(i)] = 0;
    for (int i = 0; i < main_len; ++i) pos[size_t(prefix_len + i)] = i + 1;
    return pos;
}

Decoder::Decoder(const DecoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.d_model <= 0 || cfg.layers <= 0 || cfg.vocab <= 0)
        throw ConfigError("decoder dims must be positive");
    if (cfg.heads <= 0 || cfg.d_model % cfg.heads != 0)
        throw ConfigError("decoder head count must divide the model width");
    if ((cfg.d_model / cfg.heads) % 2 != 0)
        throw ConfigError("decoder head width must be even for rotary positions");
    vocab_embed_ = Parameter{"dec.embed.vocab", Tensor::randn({cfg.vocab, cfg.d_model}, rng, 0.05)};
    blocks_.reserve(size_t(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l)
        blocks_.emplace_back("dec.layer" + std::to_string(l), cfg.d_model, cfg.heads, cfg.d_ff, rng);
    final_ln_ = LayerNormParams("dec.final_ln", cfg.d_model);
    lm_head_ = LinearParams("dec.lm_head", cfg.d_model, cfg.vocab, rng);
}

Var Decoder::vocab_embedding(Tape& t) { return t.leaf(vocab_embed_); }

void Decoder::check_ids(const std::vector<int>& ids) const {
    if (ids.empty()) throw DataError("decoder input has no tokens");
    for (int id : ids)
        if (id < 0 || id >= cfg_.vocab) throw DataError("token id out of vocabulary range");
}

Var Decoder::hidden_states(Tape& t, std::optional<Var> prefix, const std::vector<int>& main_ids) {
    check_ids(main_ids);
    int prefix_len = 0;
    Var x = t.gather_rows(t.leaf(vocab_embed_), main_ids);
    if (prefix) {
        const Tensor& pv = t.value(*prefix);
        if (pv.cols() != cfg_.d_model)
            throw ShapeError("prefix width " + std::to_string(pv.cols()) +
                             " does not match decoder width " + std::to_string(cfg_.d_model));
        prefix_len = pv.rows();
        x = t.concat_rows({*prefix, x});
    }
    const int main_len = int(main_ids.size());
    if (prefix_len + main_len > cfg_.max_tokens)
        throw DataError("decoder sequence of " + std::to_string(prefix_len + main_len) +
                        " rows exceeds the cap of " + std::to_string(cfg_.max_tokens));
    const Tensor mask = prefix_causal_mask(prefix_len, main_len);
    const std::vector<int> positions = build_positions(prefix_len, main_len);
    for (auto& block : blocks_) x = transformer_block(t, x, block, &mask, &positions, cfg_.rope_base);
    return final_ln_.apply(t, x);
}

Var Decoder::lm_logits(Tape& t, Var hidden) { return lm_head_.apply(t, hidden); }

Var Decoder::lm_loss(Tape& t, std::optional<Var> prefix, const std::vector<int>& main_ids) {
    if (main_ids.size() < 2)
        throw DataError("language-model loss needs at least two main tokens, got " +
                        std::to_string(main_ids.size()));
    const int prefix_len = prefix ? t.value(*prefix).rows() : 0;
    const int T = int(main_ids.size());
    Var hidden = hidden_states(t, prefix, main_ids);
    Var predicting = t.slice_rows(hidden, prefix_len, prefix_len + T - 1);
    Var logits = lm_logits(t, predicting);
    std::vector<int> targets(main_ids.begin() + 1, main_ids.end());
    return t.cross_entropy_logits(logits, targets);
}

void Decoder::attach_lora(int rank, Rng& rng) {
    if (lora_attached_) throw ConfigError("adapters already attached to the decoder");
    for (auto& b : blocks_) {
        b.attn.wq.attach_lora(rank, rng);
        b.attn.wk.attach_lora(rank, rng);
        b.attn.wv.attach_lora(rank, rng);
        b.attn.wo.attach_lora(rank, rng);
        b.mlp.w1.attach_lora(rank, rng);
        b.mlp.w2.attach_lora(rank, rng);
    }
    lm_head_.attach_lora(rank, rng);
    lora_attached_ = true;
}

std::vector<Parameter*> Decoder::parameters() {
    std::vector<Parameter*> out;
    out.push_back(&vocab_embed_);
    for (auto& b : blocks_) b.collect(out);
    final_ln_.collect(out);
    lm_head_.collect(out);
    return out;
}

std::vector<Parameter*> Decoder::lora_parameters() {
    std::vector<Parameter*> out;
    for (Parameter* p : parameters())
        if (p->name.find(".lora_") != std::string::npos) out.push_back(p);
    return out;
}

std::vector<Parameter*> Decoder::base_parameters() {
    std::vector<Parameter*> out;
    for (Parameter* p : parameters())
        if (p->name.find(".lora_") == std::string::npos) out.push_back(p);
    return out;
}

}  // namespace finctx
