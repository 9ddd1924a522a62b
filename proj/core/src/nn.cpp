#include "finctx/nn.hpp"

#include <cmath>
#include <vector>

#include "finctx/error.hpp"

namespace finctx {

LinearParams::LinearParams(const std::string& name, int in, int out, Rng& rng) {
    if (in <= 0 || out <= 0) throw ConfigError("linear layer dims must be positive: " + name);
    w = Parameter{name + ".w", Tensor::randn({in, out}, rng, 1.0 / std::sqrt(double(in)))};
}

Var LinearParams::apply(Tape& t, Var x) {
    Var y = t.matmul(x, t.leaf(w));
    if (lora) {
        Var delta = t.matmul(t.matmul(x, t.leaf(lora->down)), t.leaf(lora->up));
        y = t.add(y, t.scale(delta, lora->scale));
    }
    return y;
}

void LinearParams::attach_lora(int rank, Rng& rng) {
    if (rank <= 0) throw ConfigError("adapter rank must be positive");
    if (lora) throw ConfigError("adapter already attached to " + w.name);
    const int in = in_dim();
    const int out = out_dim();
    LoraPair p;
    p.down = Parameter{w.name + ".lora_down",
                       Tensor::randn({in, rank}, rng, 1.0 / std::sqrt(double(in)))};
    p.up = Parameter{w.name + ".lora_up", Tensor::zeros({rank, out})};
    p.scale = double(2 * rank) / double(rank);
    lora = std::move(p);
}

void LinearParams::collect(std::vector<Parameter*>& out) {
    out.push_back(&w);
    if (lora) {
        out.push_back(&lora->down);
        out.push_back(&lora->up);
    }
}

LayerNormParams::LayerNormParams(const std::string& name, int dim) {
    gain = Parameter{name + ".gain", Tensor::full({dim}, 1.0)};
    bias = Parameter{name + ".bias", Tensor::zeros({dim})};
}

Var LayerNormParams::apply(Tape& t, Var x) {
    return t.layer_norm(x, t.leaf(gain), t.leaf(bias));
}

void LayerNormParams::collect(std::vector<Parameter*>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
}

AttentionParams::AttentionParams(const std::string& name, int d_model, int n_heads, Rng& rng)
    : wq(name + ".wq", d_model, d_model, rng),
      wk(name + ".wk", d_model, d_model, rng),
      wv(name + ".wv", d_model, d_model, rng),
      wo(name + ".wo", d_model, d_model, rng),
      heads(n_heads) {
    if (n_heads <= 0 || d_model % n_heads != 0)
        throw ConfigError("head count must divide model width: " + name);
}

void AttentionParams::collect(std::vector<Parameter*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

MlpParams::MlpParams(const std::string& name, int d_model, int d_ff, Rng& rng)
    : w1(name + ".w1", d_model, d_ff, rng), w2(name + ".w2", d_ff, d_model, rng) {
    b1 = Parameter{name + ".b1", Tensor::zeros({d_ff})};
    b2 = Parameter{name + ".b2", Tensor::zeros({d_model})};
}

Var MlpParams::apply(Tape& t, Var x) {
    Var h = t.gelu(t.add(t.matmul(x, t.leaf(w1.w)), t.leaf(b1)));
    Var y = t.add(t.matmul(h, t.leaf(w2.w)), t.leaf(b2));
    return y;
}

void MlpParams::collect(std::vector<Parameter*>& out) {
    w1.collect(out);
    out.push_back(&b1);
    w2.collect(out);
    out.push_back(&b2);
}

BlockParams::BlockParams(const std::string& name, int d_model, int heads, int d_ff, Rng& rng)
    : ln1(name + ".ln1", d_model),
      ln2(name + ".ln2", d_model),
      attn(name + ".attn", d_model, heads, rng),
      mlp(name + ".mlp", d_model, d_ff, rng) {}

void BlockParams::collect(std::vector<Parameter*>& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    mlp.collect(out);
}

Var multihead_attention(Tape& t, Var x, AttentionParams& p, const Tensor* mask,
                        const std::vector<int>* rope_positions, double rope_base) {
    const int n = t.value(x).rows();
    const int d = t.value(x).cols();
    if (d != p.wq.in_dim()) throw ShapeError("attention input width mismatch");
    const int dh = d / p.heads;
    if (mask && (mask->rows() != n || mask->cols() != n))
        throw ShapeError("attention mask must be square over the sequence");
    if (rope_positions && int(rope_positions->size()) != n)
        throw ShapeError("one rotary position per sequence row required");

    Var q = p.wq.apply(t, x);
    Var k = p.wk.apply(t, x);
    Var v = p.wv.apply(t, x);

    const double inv_sqrt = 1.0 / std::sqrt(double(dh));
    std::vector<Var> head_outs;
    head_outs.reserve(p.heads);
    for (int h = 0; h < p.heads; ++h) {
        Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = t.slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = t.slice_cols(v, h * dh, (h + 1) * dh);
        if (rope_positions) {
            qh = t.rope(qh, *rope_positions, rope_base);
            kh = t.rope(kh, *rope_positions, rope_base);
        }
        Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
        if (mask) scores = t.add(scores, t.constant(*mask));
        Var alpha = t.softmax_rows(scores);
        head_outs.push_back(t.matmul(alpha, vh));
    }
    Var merged = head_outs.size() == 1 ? head_outs[0] : t.concat_cols(head_outs);
    return p.wo.apply(t, merged);
}

Var transformer_block(Tape& t, Var x, BlockParams& p, const Tensor* mask,
                      const std::vector<int>* rope_positions, double rope_base) {
    Var a = multihead_attention(t, p.ln1.apply(t, x), p.attn, mask, rope_positions, rope_base);
    x = t.add(x, a);
    Var m = p.mlp.apply(t, p.ln2.apply(t, x));
    return t.add(x, m);
}

Tensor prefix_causal_mask(int prefix_len, int main_len) {
    if (prefix_len < 0 || main_len < 0) throw ConfigError("mask lengths must be non-negative");
    const int n = prefix_len + main_len;
    Tensor m = Tensor::zeros({n, n});
    constexpr double kBlocked = -1e30;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            bool ok;
            if (i < prefix_len) {
                ok = j < prefix_len;
            } else {
                ok = j < prefix_len || j <= i;
            }
            if (!ok) m.at(i, j) = kBlocked;
        }
    }
    return m;
}

}  // namespace finctx
