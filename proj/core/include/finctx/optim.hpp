#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "finctx/tape.hpp"

namespace finctx {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;  // global grad-norm cap, <= 0 disables clipping
};

// Decoupled-weight-decay Adam over a fixed set of parameters. Only trainable
// parameters are updated; frozen ones are ignored entirely. step() refuses to
// apply a partial update: if any trainable gradient is non-finite the whole
// step aborts with the offending parameter named.
class AdamW {
public:
    AdamW(std::vector<Parameter*> params, AdamWConfig cfg);

    // Clips gradients to cfg.clip_norm (global L2 norm over all trainable
    // parameters), applies the update, then zeroes trainable gradients.
    // Returns the pre-clip global gradient norm.
    double step();

    void zero_grad();
    int64_t steps_taken() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    struct Slot {
        Parameter* p;
        Tensor m;
        Tensor v;
    };
    std::vector<Slot> slots_;
    AdamWConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace finctx
