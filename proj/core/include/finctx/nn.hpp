#pragma once

#include <optional>
#include <string>
#include <vector>

#include "finctx/rng.hpp"
#include "finctx/tape.hpp"

namespace finctx {

// Additive low-rank adapter on a linear layer: W_eff = W + (alpha/r) * A * B
// with B zero-initialized, so the adapter is exactly the identity update at
// creation. alpha is pinned to 2r.
struct LoraPair {
    Parameter down;  // [in, r]
    Parameter up;    // [r, out]
    double scale = 0.0;
};

struct LinearParams {
    Parameter w;  // [in, out]
    std::optional<LoraPair> lora;

    LinearParams() = default;
    LinearParams(const std::string& name, int in, int out, Rng& rng);

    Var apply(Tape& t, Var x);
    void attach_lora(int rank, Rng& rng);
    void collect(std::vector<Parameter*>& out);
    int in_dim() const { return w.value.rows(); }
    int out_dim() const { return w.value.cols(); }
};

struct LayerNormParams {
    Parameter gain, bias;

    LayerNormParams() = default;
    LayerNormParams(const std::string& name, int dim);

    Var apply(Tape& t, Var x);
    void collect(std::vector<Parameter*>& out);
};

struct AttentionParams {
    LinearParams wq, wk, wv, wo;
    int heads = 1;

    AttentionParams() = default;
    AttentionParams(const std::string& name, int d_model, int heads, Rng& rng);
    void collect(std::vector<Parameter*>& out);
};

struct MlpParams {
    LinearParams w1, w2;
    Parameter b1, b2;

    MlpParams() = default;
    MlpParams(const std::string& name, int d_model, int d_ff, Rng& rng);

    Var apply(Tape& t, Var x);
    void collect(std::vector<Parameter*>& out);
};

// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
struct BlockParams {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    MlpParams mlp;

    BlockParams() = default;
    BlockParams(const std::string& name, int d_model, int heads, int d_ff, Rng& rng);
    void collect(std::vector<Parameter*>& out);
};

// Multi-head attention over a single sequence. `mask` (optional) is added to
// the pre-softmax scores; use 0 for allowed and a large negative number for
// blocked pairs. `rope_positions` (optional) rotates queries and keys per
// head with rotary embeddings at the given base.
Var multihead_attention(Tape& t, Var x, AttentionParams& p, const Tensor* mask,
                        const std::vector<int>* rope_positions, double rope_base);

Var transformer_block(Tape& t, Var x, BlockParams& p, const Tensor* mask,
                      const std::vector<int>* rope_positions, double rope_base);

// 0 above the block-causal boundary, -1e30 elsewhere: the first `prefix_len`
// rows attend among themselves bidirectionally, later rows attend causally
// and to the whole prefix; prefix rows never attend to main rows.
Tensor prefix_causal_mask(int prefix_len, int main_len);

}  // namespace finctx
