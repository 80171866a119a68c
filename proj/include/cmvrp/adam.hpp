#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "autodiff.hpp"

namespace cmvrp::ad {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamHyper hyper;
    std::int64_t step = 0;
    ParameterSet m;
    ParameterSet v;
};

/// One bias-corrected Adam update (Kingma & Ba). Parameters missing from
/// `grads` are updated with a zero gradient.
inline void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state) {
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw ContractViolation("gradient for unknown parameter " + name);
        if (!it->second.same_shape(g)) throw ContractViolation("gradient shape mismatch for " + name);
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const auto& h = state.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, t);
    const double bc2 = 1.0 - std::pow(h.beta2, t);
    for (auto& [name, p] : params) {
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m = Array(p.rows(), p.cols());
        if (v.empty()) v = Array(p.rows(), p.cols());
        if (!m.same_shape(p) || !v.same_shape(p)) throw ContractViolation("optimizer state shape mismatch for " + name);
        auto git = grads.find(name);
        const Array* g = git == grads.end() ? nullptr : &git->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
        }
    }
}

}  // namespace cmvrp::ad
