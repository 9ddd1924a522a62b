#include "finctx/optim.hpp"

#include <cmath>

#include "finctx/error.hpp"

namespace finctx {

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg) : cfg_(cfg) {
    for (Parameter* p : params) {
        if (!p || !p->trainable) continue;
        slots_.push_back(Slot{p, Tensor::zeros(p->value.shape()), Tensor::zeros(p->value.shape())});
    }
}

double AdamW::step() {
    for (const Slot& s : slots_) {
        if (!s.p->grad.all_finite()) {
            throw NumericError("optimizer step aborted: non-finite gradient in parameter '" + s.p->name + "'");
        }
    }
    double sq = 0.0;
    for (const Slot& s : slots_) {
        for (int64_t i = 0; i < s.p->grad.numel(); ++i) {
            const double g = s.p->grad.at(static_cast<int>(i));
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Slot& s : slots_) {
        Tensor& w = s.p->value;
        const Tensor& gt = s.p->grad;
        for (int64_t ii = 0; ii < w.numel(); ++ii) {
            const int i = static_cast<int>(ii);
            const double g = gt.at(i) * scale;
            s.m.at(i) = cfg_.beta1 * s.m.at(i) + (1.0 - cfg_.beta1) * g;
            s.v.at(i) = cfg_.beta2 * s.v.at(i) + (1.0 - cfg_.beta2) * g * g;
            const double mhat = s.m.at(i) / bc1;
            const double vhat = s.v.at(i) / bc2;
            w.at(i) -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w.at(i));
        }
        if (!w.all_finite()) {
            throw NumericError("optimizer step produced non-finite weights in parameter '" + s.p->name + "'");
        }
    }
    zero_grad();
    return norm;
}

void AdamW::zero_grad() {
    for (Slot& s : slots_) s.p->zero_grad();
}

}  // namespace finctx
