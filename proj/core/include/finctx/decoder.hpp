#pragma once

#include <optional>
#include <string>
#include <vector>

#include "finctx/nn.hpp"
#include "finctx/rng.hpp"
#include "finctx/tape.hpp"

namespace finctx {

// Rotary positions for a prefixed sequence: every prefix row sits at
// position 0, main tokens count 1..T.
std::vector<int> build_positions(int prefix_len, int main_len);

struct DecoderConfig {
    int d_model = 48;
    int layers = 2;
    int heads = 4;
    int d_ff = 96;
    int vocab = 512;
    double rope_base = 10000.0;
    int max_tokens = 512;  // cap on prefix_len + main_len per forward
};

// Causal decoder LM. An optional prefix of already-embedded rows (the
// aligned summary context) is prepended to the token embeddings; the prefix
// attends bidirectionally within itself, main tokens attend causally and to
// the whole prefix, and the prefix never attends back into main tokens.
class Decoder {
  public:
    Decoder(const DecoderConfig& cfg, Rng& rng);

    // Token table as a tape leaf (for the cma alignment and for embedding).
    Var vocab_embedding(Tape& t);

    // Final hidden states over prefix + main rows: [(P+T), d_model].
    // Pass prefix = std::nullopt for a plain causal run.
    Var hidden_states(Tape& t, std::optional<Var> prefix, const std::vector<int>& main_ids);

    // Logits over the vocabulary for every row of `hidden`.
    Var lm_logits(Tape& t, Var hidden);

    // Mean NLL of main tokens 2..T given the prefix and preceding tokens.
    // The first main token and all prefix rows contribute no loss terms.
    Var lm_loss(Tape& t, std::optional<Var> prefix, const std::vector<int>& main_ids);

    // Attach rank-r adapters (scaled by 2, i.e. alpha = 2r) to every linear
    // layer including the LM head. The token table gets no adapter.
    void attach_lora(int rank, Rng& rng);
    bool has_lora() const { return lora_attached_; }

    std::vector<Parameter*> parameters();
    // The adapter parameters only (empty before attach_lora).
    std::vector<Parameter*> lora_parameters();
    // Everything that existed before adapters were attached.
    std::vector<Parameter*> base_parameters();

    const DecoderConfig& config() const { return cfg_; }

  private:
    void check_ids(const std::vector<int>& ids) const;

    DecoderConfig cfg_;
    Parameter vocab_embed_;  // [V, d_model]
    std::vector<BlockParams> blocks_;
    LayerNormParams final_ln_;
    LinearParams lm_head_;  // [d_model, V], untied from the token table
    bool lora_attached_ = false;
};

}  // namespace finctx
