#include "finctx/model.hpp"

#include <algorithm>
#include <cmath>

#include "finctx/checkpoint.hpp"
#include "finctx/error.hpp"
#include "json.hpp"

namespace finctx {

namespace {

using nlohmann::json;

json summarizer_to_json(const SummarizerConfig& c) {
    return json{{"d_model", c.d_model},
                {"layers", c.layers},
                {"heads", c.heads},
                {"d_ff", c.d_ff},
                {"vocab", c.vocab},
                {"max_article_tokens", c.max_article_tokens},
                {"summary_tokens", c.summary_tokens},
                {"placement", placement_name(c.placement)},
                {"max_positions", c.max_positions}};
}

SummarizerConfig summarizer_from_json(const json& j) {
    SummarizerConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.max_article_tokens = j.at("max_article_tokens").get<int>();
    c.summary_tokens = j.at("summary_tokens").get<int>();
    c.placement = parse_placement(j.at("placement").get<std::string>());
    c.max_positions = j.at("max_positions").get<int>();
    return c;
}

json alignment_to_json(const AlignmentConfig& c) {
    return json{{"kind", align_kind_name(c.kind)}, {"d_in", c.d_in},
                {"d_out", c.d_out},                {"heads", c.heads},
                {"mlp_hidden", c.mlp_hidden},      {"cma_identity", c.cma_identity}};
}

AlignmentConfig alignment_from_json(const json& j) {
    AlignmentConfig c;
    c.kind = parse_align_kind(j.at("kind").get<std::string>());
    c.d_in = j.at("d_in").get<int>();
    c.d_out = j.at("d_out").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
    c.cma_identity = j.at("cma_identity").get<bool>();
    return c;
}

json decoder_to_json(const DecoderConfig& c) {
    return json{{"d_model", c.d_model}, {"layers", c.layers},
                {"heads", c.heads},     {"d_ff", c.d_ff},
                {"vocab", c.vocab},     {"rope_base", c.rope_base},
                {"max_tokens", c.max_tokens}};
}

DecoderConfig decoder_from_json(const json& j) {
    DecoderConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.rope_base = j.at("rope_base").get<double>();
    c.max_tokens = j.at("max_tokens").get<int>();
    return c;
}

}  // namespace

ModelKind parse_model_kind(const std::string& s) {
    if (s == "psc") return ModelKind::Psc;
    if (s == "single") return ModelKind::Single;
    if (s == "concat-full") return ModelKind::ConcatFull;
    if (s == "concat-prefix") return ModelKind::ConcatPrefix;
    if (s == "hierarchical") return ModelKind::Hierarchical;
    throw ConfigError("unknown model kind '" + s +
                      "' (expected psc|single|concat-full|concat-prefix|hierarchical)");
}

std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::Psc: return "psc";
        case ModelKind::Single: return "single";
        case ModelKind::ConcatFull: return "concat-full";
        case ModelKind::ConcatPrefix: return "concat-prefix";
        case ModelKind::Hierarchical: return "hierarchical";
    }
    throw ConfigError("invalid model kind");
}

std::string first_paragraph(const std::string& text) {
    const size_t blank = text.find("\n\n");
    if (blank != std::string::npos) {
        std::string head = text.substr(0, blank);
        if (head.find_first_not_of(" \t\n\r") != std::string::npos) return head;
    }
    int sentences = 0;
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '.') {
            ++sentences;
            if (sentences == 3) return text.substr(0, i + 1);
        }
    }
    return text;
}

Model::Model(const ModelConfig& cfg, Tokenizer tokenizer, Rng& rng)
    : cfg_(cfg), tokenizer_(std::move(tokenizer)), decoder_(cfg.decoder, rng) {
    if (cfg.n_contexts < 0) throw ConfigError("context depth must be non-negative");
    if (cfg.article_token_cap <= 0) throw ConfigError("article token cap must be positive");
    if (tokenizer_.vocab_size() != cfg.decoder.vocab)
        throw ConfigError("decoder vocabulary size " + std::to_string(cfg.decoder.vocab) +
                          " does not match the tokenizer (" +
                          std::to_string(tokenizer_.vocab_size()) + ")");
    if (cfg.kind == ModelKind::Psc) {
        if (cfg.summarizer.vocab != cfg.decoder.vocab)
            throw ConfigError("summarizer and decoder vocabulary sizes differ");
        if (cfg.alignment.d_in != cfg.summarizer.d_model)
            throw ConfigError("alignment input width must match the summarizer width");
        if (cfg.alignment.d_out != cfg.decoder.d_model)
            throw ConfigError("alignment output width must match the decoder width");
        summarizer_.emplace(cfg.summarizer, rng);
        alignment_.emplace(cfg.alignment, rng);
    }
    if (cfg.kind == ModelKind::Hierarchical) {
        if (cfg.hier_layers < 0) throw ConfigError("global stage depth must be non-negative");
        for (int l = 0; l < cfg.hier_layers; ++l)
            hier_blocks_.emplace_back("hier.layer" + std::to_string(l), cfg.decoder.d_model,
                                      cfg.decoder.heads, cfg.decoder.d_ff, rng);
        if (cfg.hier_layers > 0) hier_ln_ = LayerNormParams("hier.final_ln", cfg.decoder.d_model);
    }
    const int d = cfg.decoder.d_model;
    clf_w_ = Parameter{"clf.w", Tensor::randn({d, 1}, rng, 1.0 / std::sqrt(double(d)))};
    clf_b_ = Parameter{"clf.b", Tensor::zeros({1})};
    if (cfg.lora_rank > 0) {
        cfg_.lora_rank = 0;
        attach_lora(cfg.lora_rank, rng);
    }
}

void Model::attach_lora(int rank, Rng& rng) {
    decoder_.attach_lora(rank, rng);
    cfg_.lora_rank = rank;
}

std::vector<int> Model::encode_main(const std::string& text) const {
    std::vector<int> ids = tokenizer_.encode(text);
    if (int(ids.size()) > cfg_.article_token_cap) ids.resize(size_t(cfg_.article_token_cap));
    return ids;
}

std::vector<int> Model::encode_context(const std::string& text) const {
    const std::string body =
        cfg_.kind == ModelKind::ConcatPrefix ? first_paragraph(text) : text;
    std::vector<int> ids = tokenizer_.encode(body);
    if (int(ids.size()) > cfg_.article_token_cap) ids.resize(size_t(cfg_.article_token_cap));
    return ids;
}

void Model::check_input(const ModelInput& in) const {
    if (in.main_tokens.empty()) throw DataError("sample has an empty main article");
    for (const ContextTokens& c : in.contexts)
        if (c.tokens.empty()) throw DataError("sample has an empty context article");
}

Var Model::psc_prefix(Tape& t, const std::vector<ContextTokens>& contexts) {
    Var sc = summarizer_->summary_context(t, contexts);
    return alignment_->apply(t, sc, decoder_.vocab_embedding(t));
}

std::vector<int> Model::build_concat_input(const ModelInput& in) const {
    check_input(in);
    std::vector<int> main_ids = in.main_tokens;
    const int budget = cfg_.decoder.max_tokens;
    if (1 + int(main_ids.size()) > budget) main_ids.resize(size_t(budget - 1));

    // Keep the newest contexts that fit; each costs its tokens plus one <doc>.
    size_t first_kept = in.contexts.size();
    int used = 1 + int(main_ids.size());
    for (size_t r = in.contexts.size(); r-- > 0;) {
        const int cost = int(in.contexts[r].tokens.size()) + 1;
        if (used + cost > budget) break;
        used += cost;
        first_kept = r;
    }

    std::vector<int> ids;
    ids.reserve(size_t(used));
    ids.push_back(Tokenizer::kBos);
    for (size_t i = first_kept; i < in.contexts.size(); ++i) {
        const auto& toks = in.contexts[i].tokens;
        ids.insert(ids.end(), toks.begin(), toks.end());
        ids.push_back(Tokenizer::kDoc);
    }
    ids.insert(ids.end(), main_ids.begin(), main_ids.end());
    return ids;
}

Var Model::pooled_main_state(Tape& t, const ModelInput& in) {
    check_input(in);
    if (cfg_.kind == ModelKind::ConcatFull || cfg_.kind == ModelKind::ConcatPrefix) {
        const std::vector<int> ids = build_concat_input(in);
        std::vector<int> main_ids = in.main_tokens;
        const int budget = cfg_.decoder.max_tokens;
        if (1 + int(main_ids.size()) > budget) main_ids.resize(size_t(budget - 1));
        Var hidden = decoder_.hidden_states(t, std::nullopt, ids);
        const int n = int(ids.size());
        return t.mean_rows(t.slice_rows(hidden, n - int(main_ids.size()), n));
    }
    std::optional<Var> prefix;
    if (cfg_.kind == ModelKind::Psc && !in.contexts.empty()) prefix = psc_prefix(t, in.contexts);
    std::vector<int> ids;
    ids.reserve(in.main_tokens.size() + 1);
    ids.push_back(Tokenizer::kBos);
    ids.insert(ids.end(), in.main_tokens.begin(), in.main_tokens.end());
    const int prefix_len = prefix ? t.value(*prefix).rows() : 0;
    Var hidden = decoder_.hidden_states(t, prefix, ids);
    return t.mean_rows(t.slice_rows(hidden, prefix_len, prefix_len + int(ids.size())));
}

Var Model::hierarchical_state(Tape& t, const ModelInput& in) {
    check_input(in);
    std::vector<Var> article_states;
    std::vector<int> lengths;
    auto encode_one = [&](const std::vector<int>& tokens) {
        std::vector<int> ids;
        ids.reserve(tokens.size() + 1);
        ids.push_back(Tokenizer::kBos);
        ids.insert(ids.end(), tokens.begin(), tokens.end());
        article_states.push_back(decoder_.hidden_states(t, std::nullopt, ids));
        lengths.push_back(int(ids.size()));
    };
    for (const ContextTokens& c : in.contexts) encode_one(c.tokens);
    encode_one(in.main_tokens);

    Var x = article_states.size() == 1 ? article_states[0] : t.concat_rows(article_states);
    const int total = t.value(x).rows();
    const int main_len = lengths.back();
    if (!hier_blocks_.empty()) {
        const Tensor mask = prefix_causal_mask(0, total);
        const std::vector<int> positions = build_positions(0, total);
        for (auto& block : hier_blocks_)
            x = transformer_block(t, x, block, &mask, &positions, cfg_.decoder.rope_base);
        x = hier_ln_.apply(t, x);
    }
    return t.mean_rows(t.slice_rows(x, total - main_len, total));
}

Var Model::class_logit(Tape& t, const ModelInput& in) {
    Var pooled = cfg_.kind == ModelKind::Hierarchical ? hierarchical_state(t, in)
                                                      : pooled_main_state(t, in);
    return t.add(t.matmul(pooled, t.leaf(clf_w_)), t.leaf(clf_b_));
}

Var Model::lm_loss(Tape& t, const ModelInput& in) {
    if (cfg_.kind != ModelKind::Psc && cfg_.kind != ModelKind::Single)
        throw UsageError("language-model loss is only defined for the psc and single kinds");
    check_input(in);
    std::optional<Var> prefix;
    if (cfg_.kind == ModelKind::Psc && !in.contexts.empty()) prefix = psc_prefix(t, in.contexts);
    std::vector<int> ids;
    ids.reserve(in.main_tokens.size() + 1);
    ids.push_back(Tokenizer::kBos);
    ids.insert(ids.end(), in.main_tokens.begin(), in.main_tokens.end());
    return decoder_.lm_loss(t, prefix, ids);
}

double Model::predict_prob(const ModelInput& in) {
    Tape t;
    const double z = t.value(class_logit(t, in)).item();
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out;
    if (summarizer_)
        for (Parameter* p : summarizer_->parameters()) out.push_back(p);
    if (alignment_)
        for (Parameter* p : alignment_->parameters()) out.push_back(p);
    for (Parameter* p : decoder_.parameters()) out.push_back(p);
    for (auto& b : hier_blocks_) b.collect(out);
    if (!hier_blocks_.empty()) hier_ln_.collect(out);
    out.push_back(&clf_w_);
    out.push_back(&clf_b_);
    return out;
}

std::vector<Parameter*> Model::classifier_parameters() { return {&clf_w_, &clf_b_}; }

void Model::save(const std::string& path) const {
    json j{{"format", "finctx-model"},
           {"kind", model_kind_name(cfg_.kind)},
           {"n_contexts", cfg_.n_contexts},
           {"article_token_cap", cfg_.article_token_cap},
           {"summarizer", summarizer_to_json(cfg_.summarizer)},
           {"alignment", alignment_to_json(cfg_.alignment)},
           {"decoder", decoder_to_json(cfg_.decoder)},
           {"hier_layers", cfg_.hier_layers},
           {"lora_rank", cfg_.lora_rank},
           {"vocab", tokenizer_.vocab()}};
    std::vector<const Parameter*> params;
    for (Parameter* p : const_cast<Model*>(this)->parameters()) params.push_back(p);
    save_checkpoint(path, j.dump(), params);
}

Model Model::load(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    json j;
    try {
        j = json::parse(ckpt.config_json);
    } catch (const json::exception& e) {
        throw DataError(std::string("model checkpoint has malformed config: ") + e.what());
    }
    if (!j.contains("format") || j.at("format").get<std::string>() != "finctx-model")
        throw DataError("checkpoint does not hold a model");
    ModelConfig cfg;
    try {
        cfg.kind = parse_model_kind(j.at("kind").get<std::string>());
        cfg.n_contexts = j.at("n_contexts").get<int>();
        cfg.article_token_cap = j.at("article_token_cap").get<int>();
        cfg.summarizer = summarizer_from_json(j.at("summarizer"));
        cfg.alignment = alignment_from_json(j.at("alignment"));
        cfg.decoder = decoder_from_json(j.at("decoder"));
        cfg.hier_layers = j.at("hier_layers").get<int>();
        cfg.lora_rank = j.at("lora_rank").get<int>();
        Tokenizer tok = Tokenizer::from_vocab(j.at("vocab").get<std::vector<std::string>>());
        Rng rng(1);
        Model m(cfg, std::move(tok), rng);
        restore_parameters(ckpt, m.parameters());
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model checkpoint config is incomplete: ") + e.what());
    }
}

}  // namespace finctx
