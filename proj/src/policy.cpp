#include "mkv/policy.hpp"

#include "mkv/error.hpp"

#include <algorithm>
#include <cmath>

namespace mkv {

std::string to_string(InfoClass info) {
    switch (info) {
        case InfoClass::b_strong: return "b-strong";
        case InfoClass::strong: return "strong";
        case InfoClass::feedback: return "feedback";
    }
    return "unknown";
}

std::string to_string(PolicyFamily family) {
    switch (family) {
        case PolicyFamily::constant: return "constant";
        case PolicyFamily::piecewise_constant: return "piecewise-constant";
        case PolicyFamily::linear_feedback: return "linear-feedback";
        case PolicyFamily::table: return "table";
    }
    return "unknown";
}

InfoClass info_class_from_string(const std::string& name) {
    for (auto c : {InfoClass::b_strong, InfoClass::strong, InfoClass::feedback}) {
        if (to_string(c) == name) {
            return c;
        }
    }
    throw ConfigError("unknown information class '" + name + "'");
}

PolicyFamily policy_family_from_string(const std::string& name) {
    for (auto f : {PolicyFamily::constant, PolicyFamily::piecewise_constant, PolicyFamily::linear_feedback,
                   PolicyFamily::table}) {
        if (to_string(f) == name) {
            return f;
        }
    }
    throw ConfigError("unknown policy family '" + name + "'");
}

// ---------------------------------------------------------------------------
// OwnedView
// ---------------------------------------------------------------------------

OwnedView::OwnedView(const InfoView& view) : view_(view) {
    std::visit(
        [this](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if (v.slice != nullptr) {
                slice_ = *v.slice;
                has_slice_ = true;
            }
            if constexpr (std::is_same_v<V, BStrongView>) {
                common_history_.assign(v.common_history.begin(), v.common_history.end());
            } else if constexpr (std::is_same_v<V, StrongView>) {
                common_history_.assign(v.common_history.begin(), v.common_history.end());
                idio_history_.assign(v.idio_history.begin(), v.idio_history.end());
                initial_state_.assign(v.initial_state.begin(), v.initial_state.end());
                state_.assign(v.state.begin(), v.state.end());
            } else {
                summary_.assign(v.summary.begin(), v.summary.end());
            }
        },
        view);
    rebind();
}

OwnedView::OwnedView(const OwnedView& other)
    : view_(other.view_),
      common_history_(other.common_history_),
      idio_history_(other.idio_history_),
      initial_state_(other.initial_state_),
      state_(other.state_),
      summary_(other.summary_),
      slice_(other.slice_),
      has_slice_(other.has_slice_) {
    rebind();
}

OwnedView& OwnedView::operator=(const OwnedView& other) {
    if (this != &other) {
        view_ = other.view_;
        common_history_ = other.common_history_;
        idio_history_ = other.idio_history_;
        initial_state_ = other.initial_state_;
        state_ = other.state_;
        summary_ = other.summary_;
        slice_ = other.slice_;
        has_slice_ = other.has_slice_;
        rebind();
    }
    return *this;
}

void OwnedView::rebind() {
    std::visit(
        [this](auto& v) {
            using V = std::decay_t<decltype(v)>;
            v.slice = has_slice_ ? &slice_ : nullptr;
            if constexpr (std::is_same_v<V, BStrongView>) {
                v.common_history = common_history_;
            } else if constexpr (std::is_same_v<V, StrongView>) {
                v.common_history = common_history_;
                v.idio_history = idio_history_;
                v.initial_state = initial_state_;
                v.state = state_;
            } else {
                v.summary = summary_;
            }
        },
        view_);
}

InfoClass OwnedView::info_class() const noexcept {
    switch (view_.index()) {
        case 0: return InfoClass::b_strong;
        case 1: return InfoClass::strong;
        default: return InfoClass::feedback;
    }
}

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

const Policy& Policy::active(double t) const noexcept {
    const Policy* p = this;
    while (p->continuation && t >= p->switch_time) {
        p = p->continuation.get();
    }
    return *p;
}

std::size_t Policy::expected_params() const {
    const std::size_t m = clip.dim();
    std::size_t base = 0;
    switch (family) {
        case PolicyFamily::constant: base = (params.size() - (randomized ? 1 : 0) == 1) ? 1 : m; break;
        case PolicyFamily::piecewise_constant: {
            const std::size_t core = params.size() - (randomized ? 1 : 0);
            base = (core == segments) ? segments : segments * m;
            break;
        }
        case PolicyFamily::linear_feedback: base = 3; break;
        case PolicyFamily::table: base = 3 * segments; break;
    }
    return base + (randomized ? 1 : 0);
}

void Policy::validate() const {
    if (segments == 0) {
        throw ConfigError("policy: segments must be >= 1");
    }
    if ((family == PolicyFamily::piecewise_constant || family == PolicyFamily::table) && !(time_hi > time_lo)) {
        throw ConfigError("policy: time_hi must exceed time_lo");
    }
    if (params.size() < (randomized ? 1u : 0u) || params.size() != expected_params()) {
        throw ConfigError("policy: family " + to_string(family) + " expects " + std::to_string(expected_params()) +
                          " parameters, got " + std::to_string(params.size()));
    }
    if (info_class == InfoClass::b_strong) {
        if (randomized) {
            throw ConfigError("policy: external randomization requires the strong class");
        }
        auto uses_state = [&](std::size_t block) {
            return params[block * 3 + 1] != 0.0;
        };
        if (family == PolicyFamily::linear_feedback && uses_state(0)) {
            throw ConfigError("policy: a b-strong rule cannot read the particle state (k1 must be 0)");
        }
        if (family == PolicyFamily::table) {
            for (std::size_t s = 0; s < segments; ++s) {
                if (uses_state(s)) {
                    throw ConfigError("policy: a b-strong rule cannot read the particle state (k1 must be 0)");
                }
            }
        }
    }
    if (info_class == InfoClass::feedback && randomized) {
        throw ConfigError("policy: external randomization requires the strong class");
    }
    if (continuation) {
        continuation->validate();
    }
}

InfoClass Policy::widest_class() const noexcept {
    InfoClass widest = info_class;
    for (const Policy* p = continuation.get(); p != nullptr; p = p->continuation.get()) {
        if (p->info_class == InfoClass::strong || widest == InfoClass::strong) {
            widest = InfoClass::strong;
        } else if (p->info_class == InfoClass::feedback) {
            widest = InfoClass::feedback;
        }
    }
    return widest;
}

bool Policy::needs_summary() const noexcept {
    for (const Policy* p = this; p != nullptr; p = p->continuation.get()) {
        if (p->info_class == InfoClass::feedback) {
            return true;
        }
    }
    return false;
}

bool Policy::needs_aux() const noexcept {
    for (const Policy* p = this; p != nullptr; p = p->continuation.get()) {
        if (p->randomized) {
            return true;
        }
    }
    return false;
}

Policy splice(const Policy& head, const Policy& tail, double switch_time) {
    Policy out = head;
    if (out.continuation) {
        // Splice at the end of an existing chain.
        out.continuation = std::make_shared<const Policy>(splice(*head.continuation, tail, switch_time));
        return out;
    }
    out.continuation = std::make_shared<const Policy>(tail);
    out.switch_time = switch_time;
    return out;
}

namespace {

std::size_t segment_index(const Policy& p, double t) {
    const double position = (t - p.time_lo) / (p.time_hi - p.time_lo) * static_cast<double>(p.segments);
    const double floored = std::floor(position + 1e-9);
    if (floored <= 0.0) {
        return 0;
    }
    return std::min(static_cast<std::size_t>(floored), p.segments - 1);
}

struct FeedbackInputs {
    std::span<const double> x;
    const SliceStats* slice = nullptr;
};

void linear_rule(std::span<const double> gains, const FeedbackInputs& in, std::span<double> u) {
    for (std::size_t j = 0; j < u.size(); ++j) {
        double v = gains[0];
        if (gains[1] != 0.0) {
            v += gains[1] * in.x[j];
        }
        if (gains[2] != 0.0) {
            v += gains[2] * in.slice->state_mean[j];
        }
        u[j] = v;
    }
}

}  // namespace

void evaluate(const Policy& policy, const InfoView& view, std::span<double> u) {
    const double t = std::visit([](const auto& v) { return v.t; }, view);
    const Policy& p = policy.active(t);
    const std::size_t m = p.clip.dim();
    if (u.size() != m) {
        throw ConfigError("evaluate: control buffer has wrong size");
    }

    FeedbackInputs in;
    double aux = 0.5;
    switch (p.info_class) {
        case InfoClass::b_strong: {
            const auto* v = std::get_if<BStrongView>(&view);
            if (v == nullptr) {
                // A b-strong rule is admissible in every wider class: it only reads t and the slice.
                in.slice = std::visit([](const auto& w) { return w.slice; }, view);
            } else {
                in.slice = v->slice;
            }
            break;
        }
        case InfoClass::strong: {
            const auto* v = std::get_if<StrongView>(&view);
            if (v == nullptr) {
                throw ConfigError("evaluate: strong policy needs a strong information view");
            }
            in.x = v->state;
            in.slice = v->slice;
            aux = v->aux_uniform;
            break;
        }
        case InfoClass::feedback: {
            const auto* v = std::get_if<FeedbackView>(&view);
            if (v == nullptr) {
                throw ConfigError("evaluate: feedback policy needs a feedback information view");
            }
            in.x = v->summary;
            in.slice = v->slice;
            break;
        }
    }

    const std::span<const double> params(p.params);
    switch (p.family) {
        case PolicyFamily::constant: {
            const std::size_t core = params.size() - (p.randomized ? 1 : 0);
            for (std::size_t j = 0; j < m; ++j) {
                u[j] = params[core == 1 ? 0 : j];
            }
            break;
        }
        case PolicyFamily::piecewise_constant: {
            const std::size_t core = params.size() - (p.randomized ? 1 : 0);
            const std::size_t width = core / p.segments;
            const std::size_t s = segment_index(p, t);
            for (std::size_t j = 0; j < m; ++j) {
                u[j] = params[s * width + (width == 1 ? 0 : j)];
            }
            break;
        }
        case PolicyFamily::linear_feedback:
            if ((params[1] != 0.0 && in.x.size() < m) || (params[2] != 0.0 && in.slice == nullptr)) {
                throw ConfigError("evaluate: view lacks the state or slice data the rule reads");
            }
            linear_rule(params.subspan(0, 3), in, u);
            break;
        case PolicyFamily::table: {
            const std::size_t s = segment_index(p, t);
            const auto gains = params.subspan(3 * s, 3);
            if ((gains[1] != 0.0 && in.x.size() < m) || (gains[2] != 0.0 && in.slice == nullptr)) {
                throw ConfigError("evaluate: view lacks the state or slice data the rule reads");
            }
            linear_rule(gains, in, u);
            break;
        }
    }
    if (p.randomized) {
        const double amplitude = params.back();
        for (std::size_t j = 0; j < m; ++j) {
            u[j] += amplitude * (2.0 * aux - 1.0);
        }
    }
    p.clip.clip(u);
}

std::vector<double> evaluate(const Policy& policy, const InfoView& view) {
    const double t = std::visit([](const auto& v) { return v.t; }, view);
    std::vector<double> u(policy.active(t).clip.dim());
    evaluate(policy, view, u);
    return u;
}

std::vector<std::vector<double>> family_grid(std::span<const std::pair<double, double>> bounds,
                                             std::span<const std::size_t> resolution) {
    if (bounds.size() != resolution.size()) {
        throw ConfigError("family_grid: one resolution per parameter required");
    }
    double total = 1.0;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        const auto [lo, hi] = bounds[i];
        if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
            throw ConfigError("family_grid: bounds must be finite with lo <= hi");
        }
        if (resolution[i] == 0) {
            throw ConfigError("family_grid: resolution must be >= 1");
        }
        total *= static_cast<double>(resolution[i]);
    }
    if (total > static_cast<double>(kMaxGridPoints)) {
        throw GuardError("family_grid: " + std::to_string(static_cast<long long>(total)) +
                         " points exceed the 1e6 guard");
    }
    auto axis_value = [&](std::size_t param, std::size_t i) {
        const auto [lo, hi] = bounds[param];
        const std::size_t res = resolution[param];
        if (res == 1) {
            return 0.5 * (lo + hi);
        }
        if (i + 1 == res) {
            return hi;
        }
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(res - 1);
    };
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(total));
    std::vector<std::size_t> counter(bounds.size(), 0);
    for (std::size_t point = 0; point < static_cast<std::size_t>(total); ++point) {
        std::vector<double> params(bounds.size());
        for (std::size_t i = 0; i < bounds.size(); ++i) {
            params[i] = axis_value(i, counter[i]);
        }
        out.push_back(std::move(params));
        for (std::size_t i = bounds.size(); i-- > 0;) {
            if (++counter[i] < resolution[i]) {
                break;
            }
            counter[i] = 0;
        }
    }
    return out;
}

std::vector<std::vector<double>> family_grid(std::span<const std::pair<double, double>> bounds,
                                             std::size_t resolution) {
    const std::vector<std::size_t> res(bounds.size(), resolution);
    return family_grid(bounds, res);
}

}  // namespace mkv
