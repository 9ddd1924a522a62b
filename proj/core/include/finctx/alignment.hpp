#pragma once

#include <string>
#include <vector>

#include "finctx/nn.hpp"
#include "finctx/rng.hpp"
#include "finctx/tape.hpp"

namespace finctx {

enum class AlignKind { Linear, Mlp, Cma };

AlignKind parse_align_kind(const std::string& s);
std::string align_kind_name(AlignKind k);

struct AlignmentConfig {
    AlignKind kind = AlignKind::Cma;
    int d_in = 32;        // summary-context width
    int d_out = 48;       // decoder embedding width
    int heads = 4;        // cma only
    int mlp_hidden = 64;  // mlp only
    // Identity mode drops the value/output projections: each aligned row is
    // the head-averaged attention applied directly to the vocabulary table,
    // i.e. an exact convex combination of its rows.
    bool cma_identity = false;
};

// Maps summary-context rows into the decoder's token-embedding space. Every
// kind is row-wise: row i of the output depends only on row i of the input.
class Alignment {
  public:
    Alignment(const AlignmentConfig& cfg, Rng& rng);

    // sc: [n, d_in]; vocab_embed: the decoder's token table [V, d_out],
    // consulted by the cma kind and ignored by linear/mlp.
    Var apply(Tape& t, Var sc, Var vocab_embed);

    // Head-averaged attention over the vocabulary, [n, V]; cma only.
    Var attention_weights(Tape& t, Var sc, Var vocab_embed);

    std::vector<Parameter*> parameters();
    const AlignmentConfig& config() const { return cfg_; }

  private:
    void check_inputs(Tape& t, Var sc, Var vocab_embed) const;

    AlignmentConfig cfg_;
    LinearParams linear_;       // linear kind
    LinearParams mlp1_, mlp2_;  // mlp kind
    Parameter mlp_b1_, mlp_b2_;
    LinearParams cma_q_;        // cma kind
    LinearParams cma_v_, cma_o_;
};

}  // namespace finctx
