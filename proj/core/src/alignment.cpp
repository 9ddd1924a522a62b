#include "finctx/alignment.hpp"

#include <cmath>

#include "finctx/error.hpp"

namespace finctx {

AlignKind parse_align_kind(const std::string& s) {
    if (s == "linear") return AlignKind::Linear;
    if (s == "mlp") return AlignKind::Mlp;
    if (s == "cma") return AlignKind::Cma;
    throw ConfigError("unknown alignment kind '" + s + "' (expected linear|mlp|cma)");
}

std::string align_kind_name(AlignKind k) {
    switch (k) {
        case AlignKind::Linear: return "linear";
        case AlignKind::Mlp: return "mlp";
        case AlignKind::Cma: return "cma";
    }
    throw ConfigError("invalid alignment kind");
}

Alignment::Alignment(const AlignmentConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.d_in <= 0 || cfg.d_out <= 0) throw ConfigError("alignment dims must be positive");
    switch (cfg.kind) {
        case AlignKind::Linear:
            linear_ = LinearParams("align.linear", cfg.d_in, cfg.d_out, rng);
            break;
        case AlignKind::Mlp:
            if (cfg.mlp_hidden <= 0) throw ConfigError("alignment mlp hidden width must be positive");
            mlp1_ = LinearParams("align.mlp.l1", cfg.d_in, cfg.mlp_hidden, rng);
            mlp2_ = LinearParams("align.mlp.l2", cfg.mlp_hidden, cfg.d_out, rng);
            mlp_b1_ = Parameter{"align.mlp.b1", Tensor::zeros({cfg.mlp_hidden})};
            mlp_b2_ = Parameter{"align.mlp.b2", Tensor::zeros({cfg.d_out})};
            break;
        case AlignKind::Cma:
            if (cfg.heads <= 0 || cfg.d_out % cfg.heads != 0)
                throw ConfigError("cma head count must divide the decoder width");
            cma_q_ = LinearParams("align.cma.wq", cfg.d_in, cfg.d_out, rng);
            if (!cfg.cma_identity) {
                cma_v_ = LinearParams("align.cma.wv", cfg.d_out, cfg.d_out, rng);
                cma_o_ = LinearParams("align.cma.wo", cfg.d_out, cfg.d_out, rng);
            }
            break;
    }
}

void Alignment::check_inputs(Tape& t, Var sc, Var vocab_embed) const {
    if (t.value(sc).cols() != cfg_.d_in)
        throw ShapeError("summary context width " + std::to_string(t.value(sc).cols()) +
                         " does not match alignment input width " + std::to_string(cfg_.d_in));
    if (cfg_.kind == AlignKind::Cma && t.value(vocab_embed).cols() != cfg_.d_out)
        throw ShapeError("vocabulary table width does not match alignment output width");
}

Var Alignment::apply(Tape& t, Var sc, Var vocab_embed) {
    check_inputs(t, sc, vocab_embed);
    switch (cfg_.kind) {
        case AlignKind::Linear: return linear_.apply(t, sc);
        case AlignKind::Mlp: {
            Var h = t.gelu(t.add(mlp1_.apply(t, sc), t.leaf(mlp_b1_)));
            return t.add(mlp2_.apply(t, h), t.leaf(mlp_b2_));
        }
        case AlignKind::Cma: break;
    }
    const int dh = cfg_.d_out / cfg_.heads;
    const double inv_sqrt = 1.0 / std::sqrt(double(dh));
    Var q = cma_q_.apply(t, sc);
    if (cfg_.cma_identity) {
        Var avg = attention_weights(t, sc, vocab_embed);
        return t.matmul(avg, vocab_embed);
    }
    Var v = cma_v_.apply(t, vocab_embed);
    std::vector<Var> outs;
    outs.reserve(size_t(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
        Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = t.slice_cols(vocab_embed, h * dh, (h + 1) * dh);
        Var vh = t.slice_cols(v, h * dh, (h + 1) * dh);
        Var alpha = t.softmax_rows(t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt));
        outs.push_back(t.matmul(alpha, vh));
    }
    Var merged = outs.size() == 1 ? outs[0] : t.concat_cols(outs);
    return cma_o_.apply(t, merged);
}

Var Alignment::attention_weights(Tape& t, Var sc, Var vocab_embed) {
    if (cfg_.kind != AlignKind::Cma)
        throw UsageError("attention weights are only defined for the cma alignment, not " +
                         align_kind_name(cfg_.kind));
    check_inputs(t, sc, vocab_embed);
    const int dh = cfg_.d_out / cfg_.heads;
    const double inv_sqrt = 1.0 / std::sqrt(double(dh));
    Var q = cma_q_.apply(t, sc);
    Var sum = Var{-1};
    for (int h = 0; h < cfg_.heads; ++h) {
        Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = t.slice_cols(vocab_embed, h * dh, (h + 1) * dh);
        Var alpha = t.softmax_rows(t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt));
        sum = h == 0 ? alpha : t.add(sum, alpha);
    }
    return t.scale(sum, 1.0 / double(cfg_.heads));
}

std::vector<Parameter*> Alignment::parameters() {
    std::vector<Parameter*> out;
    switch (cfg_.kind) {
        case AlignKind::Linear:
            linear_.collect(out);
            break;
        case AlignKind::Mlp:
            mlp1_.collect(out);
            out.push_back(&mlp_b1_);
            mlp2_.collect(out);
            out.push_back(&mlp_b2_);
            break;
        case AlignKind::Cma:
            cma_q_.collect(out);
            if (!cfg_.cma_identity) {
                cma_v_.collect(out);
                cma_o_.collect(out);
            }
            break;
    }
    return out;
}

}  // namespace finctx
