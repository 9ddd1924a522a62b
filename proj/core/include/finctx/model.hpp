#pragma once

#include <optional>
#include <string>
#include <vector>

#include "finctx/alignment.hpp"
#include "finctx/decoder.hpp"
#include "finctx/rng.hpp"
#include "finctx/summarizer.hpp"
#include "finctx/tape.hpp"
#include "finctx/tokenizer.hpp"

namespace finctx {

enum class ModelKind { Psc, Single, ConcatFull, ConcatPrefix, Hierarchical };

ModelKind parse_model_kind(const std::string& s);
std::string model_kind_name(ModelKind k);

// Text before the first blank line; when there is none, the first three
// sentences; when there are no sentence breaks either, the whole text.
std::string first_paragraph(const std::string& text);

struct ModelConfig {
    ModelKind kind = ModelKind::Psc;
    int n_contexts = 5;
    int article_token_cap = 72;  // per-article clip outside the summarizer
    SummarizerConfig summarizer;
    AlignmentConfig alignment;
    DecoderConfig decoder;
    int hier_layers = 2;  // hierarchical global stage depth
    int lora_rank = 0;    // 0 = no adapters attached
};

// One sample as the model consumes it: tokenized main article plus its
// retrieved contexts ordered oldest first.
struct ModelInput {
    std::vector<int> main_tokens;  // without the leading <bos>
    std::vector<ContextTokens> contexts;
};

class Model {
  public:
    Model(const ModelConfig& cfg, Tokenizer tokenizer, Rng& rng);

    // Sigmoid argument for the up/down classification of one sample, [1,1].
    Var class_logit(Tape& t, const ModelInput& in);

    // Mean NLL of the main article's tokens given the summary prefix
    // (psc/single kinds only).
    Var lm_loss(Tape& t, const ModelInput& in);

    double predict_prob(const ModelInput& in);

    // Tokenize one article body for this model's vocabulary, applying the
    // per-article cap. Context bodies of the concat-prefix kind are reduced
    // to their first paragraph before tokenization.
    std::vector<int> encode_main(const std::string& text) const;
    std::vector<int> encode_context(const std::string& text) const;

    void attach_lora(int rank, Rng& rng);

    std::vector<Parameter*> parameters();
    Summarizer* summarizer() { return summarizer_ ? &*summarizer_ : nullptr; }
    Alignment* alignment() { return alignment_ ? &*alignment_ : nullptr; }
    Decoder& decoder() { return decoder_; }
    std::vector<Parameter*> classifier_parameters();

    const ModelConfig& config() const { return cfg_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }

    void save(const std::string& path) const;
    static Model load(const std::string& path);

    // The flat token sequence a concat-style model reads, with <doc>
    // separators and oldest contexts dropped first when over budget.
    std::vector<int> build_concat_input(const ModelInput& in) const;

  private:
    Var psc_prefix(Tape& t, const std::vector<ContextTokens>& contexts);
    Var pooled_main_state(Tape& t, const ModelInput& in);
    Var hierarchical_state(Tape& t, const ModelInput& in);
    void check_input(const ModelInput& in) const;

    ModelConfig cfg_;
    Tokenizer tokenizer_;
    std::optional<Summarizer> summarizer_;
    std::optional<Alignment> alignment_;
    Decoder decoder_;
    std::vector<BlockParams> hier_blocks_;
    LayerNormParams hier_ln_;
    Parameter clf_w_, clf_b_;
};

}  // namespace finctx
