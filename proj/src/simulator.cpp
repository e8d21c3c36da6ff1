#include "mkv/simulator.hpp"

#include "mkv/error.hpp"
#include "mkv/io.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <istream>
#include <optional>
#include <ostream>
#include <thread>

namespace mkv {

// ---------------------------------------------------------------------------
// ParticleEnsemble accessors
// ---------------------------------------------------------------------------

std::span<const double> ParticleEnsemble::state(std::size_t g, std::size_t k) const noexcept {
    const std::size_t n = dims.state;
    return {states.data() + (g * (steps() + 1) + k) * n, n};
}

std::span<const double> ParticleEnsemble::path(std::size_t g) const noexcept {
    const std::size_t len = (steps() + 1) * dims.state;
    return {states.data() + g * len, len};
}

std::span<const double> ParticleEnsemble::control(std::size_t g, std::size_t k) const noexcept {
    const std::size_t m = dims.control;
    return {controls.data() + (g * steps() + k) * m, m};
}

std::span<const double> ParticleEnsemble::integrated(std::size_t g, std::size_t k) const noexcept {
    const std::size_t m = dims.control;
    return {integrated_control.data() + (g * (steps() + 1) + k) * m, m};
}

std::span<const double> ParticleEnsemble::idio(std::size_t g, std::size_t k) const noexcept {
    const std::size_t d = dims.idio;
    return {idio_noise.data() + (g * steps() + k) * d, d};
}

std::span<const double> ParticleEnsemble::common(std::size_t scenario, std::size_t k) const noexcept {
    const std::size_t l = dims.common;
    return {common_noise.data() + (scenario * steps() + k) * l, l};
}

std::pair<std::size_t, std::size_t> ParticleEnsemble::group_of(std::size_t scenario) const noexcept {
    if (pooled) {
        return {0, total_particles()};
    }
    return {scenario * particles, (scenario + 1) * particles};
}

// ---------------------------------------------------------------------------
// Threads
// ---------------------------------------------------------------------------

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min(threads, count);
    std::vector<std::exception_ptr> errors(count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::atomic<bool> failed{false};
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count && !failed; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                        failed = true;
                    }
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

// ---------------------------------------------------------------------------
// Scheme
// ---------------------------------------------------------------------------

namespace {

struct Group {
    std::size_t first_scenario = 0;
    std::size_t scenario_count = 0;
    std::size_t first = 0;  // global particle range
    std::size_t last = 0;
};

std::vector<Group> make_groups(bool pooled, std::size_t m_scen, std::size_t n_part) {
    std::vector<Group> groups;
    if (pooled) {
        groups.push_back({0, m_scen, 0, m_scen * n_part});
        return groups;
    }
    for (std::size_t s = 0; s < m_scen; ++s) {
        groups.push_back({s, 1, s * n_part, (s + 1) * n_part});
    }
    return groups;
}

std::uint32_t narrow32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFull) {
        throw ConfigError(std::string("simulate: ") + what + " index exceeds the 32-bit stream field");
    }
    return static_cast<std::uint32_t>(v);
}

/// Slice of `count` particles at node k from path storage laid out (P, K+1, n),
/// paired with controls laid out (P, K, m) at step c. An empty control buffer
/// gives the state-only slice.
EmpiricalMeasure joint_slice(std::span<const double> paths, std::span<const double> controls, std::size_t count,
                             std::size_t nodes, std::size_t n, std::size_t m, std::size_t k, std::size_t c) {
    const bool with_control = !controls.empty();
    const std::size_t width = n + (with_control ? m : 0);
    std::vector<double> points(count * width);
    for (std::size_t i = 0; i < count; ++i) {
        const double* x = paths.data() + (i * nodes + k) * n;
        std::copy(x, x + n, points.begin() + static_cast<std::ptrdiff_t>(i * width));
        if (with_control) {
            const double* u = controls.data() + (i * (nodes - 1) + c) * m;
            std::copy(u, u + m, points.begin() + static_cast<std::ptrdiff_t>(i * width + n));
        }
    }
    return {width, std::move(points)};
}

class GroupRunner {
  public:
    GroupRunner(const ProblemSpec& spec, const Policy& policy, const TimeGrid& grid, const SimulationConfig& config,
                const SimulationOptions& options, std::size_t group_index, const Group& group,
                ParticleEnsemble& out)
        : spec_(spec),
          policy_(policy),
          grid_(grid),
          config_(config),
          options_(options),
          group_index_(group_index),
          group_(group),
          out_(out),
          n_(spec.dims.state),
          d_(spec.dims.idio),
          l_(spec.dims.common),
          m_(spec.dims.control),
          steps_(grid.steps()),
          count_(group.last - group.first) {}

    void run();

  private:
    std::span<double> particle_path(std::size_t i) { return {paths_.data() + i * (steps_ + 1) * n_, (steps_ + 1) * n_}; }
    double* state_at(std::size_t i, std::size_t k) { return paths_.data() + (i * (steps_ + 1) + k) * n_; }
    double* control_at(std::size_t i, std::size_t k) {
        return store_ ? controls_.data() + (i * steps_ + k) * m_ : current_controls_.data() + i * m_;
    }
    void allocate();
    void draw_noise_and_initial();
    InfoView make_view(std::size_t i, std::size_t k, const SliceStats* slice);

    const ProblemSpec& spec_;
    const Policy& policy_;
    const TimeGrid& grid_;
    const SimulationConfig& config_;
    const SimulationOptions& options_;
    std::size_t group_index_;
    Group group_;
    ParticleEnsemble& out_;
    std::size_t n_, d_, l_, m_, steps_, count_;
    bool store_ = true;
    bool use_history_ = true;

    std::span<double> paths_;
    std::span<double> idio_;
    std::span<double> common_;
    std::span<double> controls_;
    std::span<double> integrated_;
    std::span<double> running_;
    std::vector<double> local_paths_;
    std::vector<double> local_idio_;
    std::vector<double> local_common_;
    std::vector<double> current_controls_;
    std::vector<double> summaries_;
    std::vector<double> next_summary_;
};

void GroupRunner::allocate() {
    store_ = options_.store_paths;
    use_history_ = options_.initial_states == nullptr;
    const std::size_t nodes = steps_ + 1;
    if (store_) {
        paths_ = std::span<double>(out_.states).subspan(group_.first * nodes * n_, count_ * nodes * n_);
        idio_ = std::span<double>(out_.idio_noise).subspan(group_.first * steps_ * d_, count_ * steps_ * d_);
        common_ = std::span<double>(out_.common_noise)
                      .subspan(group_.first_scenario * steps_ * l_, group_.scenario_count * steps_ * l_);
        controls_ = std::span<double>(out_.controls).subspan(group_.first * steps_ * m_, count_ * steps_ * m_);
        integrated_ =
            std::span<double>(out_.integrated_control).subspan(group_.first * nodes * m_, count_ * nodes * m_);
        running_ = std::span<double>(out_.running_reward).subspan(group_.first * steps_, count_ * steps_);
    } else {
        local_paths_.assign(count_ * nodes * n_, 0.0);
        local_idio_.assign(count_ * steps_ * d_, 0.0);
        local_common_.assign(group_.scenario_count * steps_ * l_, 0.0);
        current_controls_.assign(count_ * m_, 0.0);
        paths_ = local_paths_;
        idio_ = local_idio_;
        common_ = local_common_;
    }
    if (policy_.needs_summary()) {
        const std::size_t e = spec_.summary.summary_dim(n_);
        summaries_.assign(count_ * e, 0.0);
        next_summary_.assign(e, 0.0);
    }
}

void GroupRunner::draw_noise_and_initial() {
    const double dt = grid_.dt();
    for (std::size_t s = 0; s < group_.scenario_count; ++s) {
        if (l_ == 0) {
            break;
        }
        const std::size_t scenario = group_.first_scenario + s;
        brownian_increments(common_.subspan(s * steps_ * l_, steps_ * l_), dt,
                            {config_.seed, StreamRole::common, narrow32(scenario, "scenario"), 0});
    }
    for (std::size_t i = 0; i < count_; ++i) {
        const std::size_t g = group_.first + i;
        if (d_ > 0) {
            brownian_increments(idio_.subspan(i * steps_ * d_, steps_ * d_), dt,
                                {config_.seed, StreamRole::idiosyncratic, 0, narrow32(g, "particle")});
        }
        std::span<double> x0(state_at(i, 0), n_);
        if (options_.initial_states != nullptr) {
            std::copy_n(options_.initial_states->begin() + static_cast<std::ptrdiff_t>(g * n_), n_, x0.begin());
        } else {
            spec_.initial.sample(RandomStream({config_.seed, StreamRole::initial, 0, narrow32(g, "particle")}), x0);
        }
        if (store_) {
            std::fill_n(integrated_.begin() + static_cast<std::ptrdiff_t>(i * (steps_ + 1) * m_), m_, 0.0);
        }
        if (!summaries_.empty()) {
            const std::size_t e = next_summary_.size();
            static const std::vector<std::vector<double>> kNoHistory;
            spec_.summary.initialize(x0, use_history_ ? spec_.initial.history : kNoHistory, dt,
                                     std::span<double>(summaries_).subspan(i * e, e));
        }
    }
}

InfoView GroupRunner::make_view(std::size_t i, std::size_t k, const SliceStats* slice) {
    const double t = grid_.time(k);
    const std::size_t g = group_.first + i;
    const std::size_t scenario_local = g / config_.particles - group_.first_scenario;
    const std::span<const double> common_history(common_.data() + scenario_local * steps_ * l_, k * l_);
    switch (policy_.active(t).info_class) {
        case InfoClass::b_strong:
            return BStrongView{t, k, common_history, slice};
        case InfoClass::strong: {
            StrongView v{t, k, {state_at(i, 0), n_}, {idio_.data() + i * steps_ * d_, k * d_}, common_history,
                         {state_at(i, k), n_}, slice, 0.5};
            if (policy_.needs_aux()) {
                v.aux_uniform = RandomStream({config_.seed, StreamRole::auxiliary, 0, static_cast<std::uint32_t>(g)})
                                    .uniform(k);
            }
            return v;
        }
        case InfoClass::feedback: {
            const std::size_t e = next_summary_.size();
            return FeedbackView{t, k, {summaries_.data() + i * e, e}, slice};
        }
    }
    return BStrongView{t, k, common_history, slice};
}

void GroupRunner::run() {
    allocate();
    draw_noise_and_initial();

    const double dt = grid_.dt();
    const std::size_t nodes = steps_ + 1;
    const std::size_t history_len = use_history_ ? spec_.initial.history.size() : 0;
    const MeasureFlow* frozen = options_.frozen;
    std::vector<SliceStats> stats(nodes);
    std::vector<double> b(n_), sigma(n_ * d_), sigma0(n_ * l_);
    std::vector<double> running_total(count_, 0.0);
    const auto& coeff = spec_.coefficients;

    auto flow_stats = [&]() -> std::span<const SliceStats> {
        return frozen != nullptr ? std::span<const SliceStats>(frozen->stats[group_index_]) : stats;
    };

    for (std::size_t k = 0; k < steps_; ++k) {
        const double t = grid_.time(k);

        // 1. state slice seen by the control rules
        SliceStats view_stats;
        if (frozen != nullptr) {
            view_stats = frozen->stats[group_index_][k];
        } else {
            view_stats = slice_stats(joint_slice(paths_, {}, count_, nodes, n_, m_, k, 0), n_);
        }

        // 2. controls
        for (std::size_t i = 0; i < count_; ++i) {
            const std::span<double> u(control_at(i, k), m_);
            evaluate(policy_, make_view(i, k, &view_stats), u);
            spec_.controls.clip(u);
        }

        // 3. joint slice of this step
        std::optional<EmpiricalMeasure> own_joint;
        const EmpiricalMeasure* joint = nullptr;
        if (frozen != nullptr) {
            joint = &frozen->joints[group_index_][k];
        } else {
            if (store_) {
                own_joint.emplace(joint_slice(paths_, controls_, count_, nodes, n_, m_, k, k));
            } else {
                std::vector<double> pts(count_ * (n_ + m_));
                for (std::size_t i = 0; i < count_; ++i) {
                    std::copy_n(state_at(i, k), n_, pts.begin() + static_cast<std::ptrdiff_t>(i * (n_ + m_)));
                    std::copy_n(current_controls_.begin() + static_cast<std::ptrdiff_t>(i * m_), m_,
                                pts.begin() + static_cast<std::ptrdiff_t>(i * (n_ + m_) + n_));
                }
                own_joint.emplace(n_ + m_, std::move(pts));
            }
            joint = &*own_joint;
            stats[k] = slice_stats(*joint, n_);
        }
        const FlowView flow{flow_stats().subspan(0, k + 1), k, joint};

        // 4. advance
        for (std::size_t i = 0; i < count_; ++i) {
            const std::size_t g = group_.first + i;
            const std::span<const double> u(control_at(i, k), m_);
            const CoefficientArgs args{t, PathView{particle_path(i), n_, k}, flow, u};
            coeff.drift(args, b);
            if (d_ > 0) {
                coeff.diffusion(args, sigma);
            }
            if (l_ > 0) {
                coeff.common_diffusion(args, sigma0);
            }
            const double* x = state_at(i, k);
            double* x_next = state_at(i, k + 1);
            const double* dw = idio_.data() + (i * steps_ + k) * d_;
            const std::size_t scenario_local = g / config_.particles - group_.first_scenario;
            const double* db = common_.data() + (scenario_local * steps_ + k) * l_;
            for (std::size_t r = 0; r < n_; ++r) {
                double v = x[r] + b[r] * dt;
                for (std::size_t j = 0; j < d_; ++j) {
                    v += sigma[r * d_ + j] * dw[j];
                }
                for (std::size_t j = 0; j < l_; ++j) {
                    v += sigma0[r * l_ + j] * db[j];
                }
                if (!std::isfinite(v)) {
                    throw SimulationError("simulate: non-finite state", g / config_.particles,
                                          g % config_.particles, k);
                }
                x_next[r] = v;
            }
            const double reward = coeff.running(args) * dt;
            running_total[i] += reward;
            if (store_) {
                running_[i * steps_ + k] = reward;
                const double* a = integrated_.data() + (i * nodes + k) * m_;
                double* a_next = integrated_.data() + (i * nodes + k + 1) * m_;
                for (std::size_t j = 0; j < m_; ++j) {
                    a_next[j] = a[j] + u[j] * dt;
                }
            }
            if (!summaries_.empty()) {
                const std::size_t e = next_summary_.size();
                std::span<double> z(summaries_.data() + i * e, e);
                spec_.summary.update(z, {x, n_}, {x_next, n_}, static_cast<double>(history_len + k) * dt,
                                     static_cast<double>(history_len + k + 1) * dt, next_summary_);
                std::copy(next_summary_.begin(), next_summary_.end(), z.begin());
            }
        }
    }

    // terminal node: states at T with the last controls
    std::optional<EmpiricalMeasure> own_joint;
    const EmpiricalMeasure* joint = nullptr;
    if (frozen != nullptr) {
        joint = &frozen->joints[group_index_][steps_];
    } else {
        std::vector<double> pts(count_ * (n_ + m_));
        for (std::size_t i = 0; i < count_; ++i) {
            std::copy_n(state_at(i, steps_), n_, pts.begin() + static_cast<std::ptrdiff_t>(i * (n_ + m_)));
            const double* u = control_at(i, steps_ - 1);
            std::copy_n(u, m_, pts.begin() + static_cast<std::ptrdiff_t>(i * (n_ + m_) + n_));
        }
        own_joint.emplace(n_ + m_, std::move(pts));
        joint = &*own_joint;
        stats[steps_] = slice_stats(*joint, n_);
    }
    const FlowView flow{flow_stats().subspan(0, nodes), steps_, joint};
    const double t_end = grid_.time(steps_);
    for (std::size_t i = 0; i < count_; ++i) {
        const std::size_t g = group_.first + i;
        const CoefficientArgs args{t_end, PathView{particle_path(i), n_, steps_}, flow, {}};
        const double terminal = coeff.terminal(args);
        out_.terminal_reward[g] = terminal;
        out_.total_reward[g] = running_total[i] + terminal;
    }
}

}  // namespace

bool pooled_interaction(const ProblemSpec& spec) noexcept {
    return spec.dims.common == 0;
}

std::vector<double> sample_initial_states(const ProblemSpec& spec, const SimulationConfig& config) {
    const std::size_t n = spec.dims.state;
    const std::size_t total = config.scenarios * config.particles;
    std::vector<double> out(total * n);
    for (std::size_t g = 0; g < total; ++g) {
        spec.initial.sample(RandomStream({config.seed, StreamRole::initial, 0, narrow32(g, "particle")}),
                            std::span<double>(out).subspan(g * n, n));
    }
    return out;
}

ParticleEnsemble simulate(const ProblemSpec& spec, const Policy& policy, const TimeGrid& grid,
                          const SimulationConfig& config, const SimulationOptions& options) {
    spec.validate();
    policy.validate();
    if (config.scenarios == 0 || config.particles == 0) {
        throw ConfigError("simulate: need at least one scenario and one particle");
    }
    if (policy.clip.dim() != spec.dims.control) {
        throw ConfigError("simulate: policy control dimension differs from the problem's");
    }
    const std::size_t total = config.scenarios * config.particles;
    if (options.initial_states != nullptr && options.initial_states->size() != total * spec.dims.state) {
        throw ConfigError("simulate: initial state override has the wrong size");
    }

    ParticleEnsemble out;
    out.grid = grid;
    out.dims = spec.dims;
    out.scenarios = config.scenarios;
    out.particles = config.particles;
    out.seed = config.seed;
    out.pooled = pooled_interaction(spec);
    out.summary = spec.summary;
    if (options.initial_states == nullptr) {
        out.history = spec.initial.history;
    }
    const std::size_t k = grid.steps();
    const auto& dims = spec.dims;
    if (options.store_paths) {
        out.common_noise.assign(config.scenarios * k * dims.common, 0.0);
        out.idio_noise.assign(total * k * dims.idio, 0.0);
        out.states.assign(total * (k + 1) * dims.state, 0.0);
        out.controls.assign(total * k * dims.control, 0.0);
        out.integrated_control.assign(total * (k + 1) * dims.control, 0.0);
        out.running_reward.assign(total * k, 0.0);
    }
    out.terminal_reward.assign(total, 0.0);
    out.total_reward.assign(total, 0.0);

    const auto groups = make_groups(out.pooled, config.scenarios, config.particles);
    if (options.frozen != nullptr &&
        (options.frozen->stats.size() != groups.size() || options.frozen->joints.size() != groups.size())) {
        throw ConfigError("simulate: frozen flow does not match the interaction groups");
    }
    parallel_for(groups.size(), config.threads, [&](std::size_t gi) {
        GroupRunner(spec, policy, grid, config, options, gi, groups[gi], out).run();
    });
    return out;
}

std::vector<ConditionalSlice> conditional_slices(const ParticleEnsemble& ensemble, std::size_t time_index) {
    if (!ensemble.has_paths()) {
        throw ConfigError("conditional_slices: ensemble has no stored paths");
    }
    const std::size_t steps = ensemble.steps();
    if (time_index > steps) {
        throw ConfigError("conditional_slices: time index " + std::to_string(time_index) + " out of range [0, " +
                          std::to_string(steps) + "]");
    }
    const std::size_t n = ensemble.dims.state;
    const std::size_t m = ensemble.dims.control;
    const std::size_t nn = ensemble.particles;
    const std::size_t c = time_index < steps ? time_index : steps - 1;
    std::vector<ConditionalSlice> out;
    out.reserve(ensemble.scenarios);
    for (std::size_t s = 0; s < ensemble.scenarios; ++s) {
        const auto paths = std::span<const double>(ensemble.states).subspan(s * nn * (steps + 1) * n, nn * (steps + 1) * n);
        const auto ctrl = std::span<const double>(ensemble.controls).subspan(s * nn * steps * m, nn * steps * m);
        out.push_back({joint_slice(paths, {}, nn, steps + 1, n, m, time_index, 0),
                       joint_slice(paths, ctrl, nn, steps + 1, n, m, time_index, c)});
    }
    return out;
}

MeasureFlow measure_flow(const ParticleEnsemble& ensemble) {
    if (!ensemble.has_paths()) {
        throw ConfigError("measure_flow: ensemble has no stored paths");
    }
    const std::size_t steps = ensemble.steps();
    const std::size_t n = ensemble.dims.state;
    const std::size_t m = ensemble.dims.control;
    const auto groups = make_groups(ensemble.pooled, ensemble.scenarios, ensemble.particles);
    MeasureFlow flow;
    for (const auto& group : groups) {
        const std::size_t count = group.last - group.first;
        const auto paths =
            std::span<const double>(ensemble.states).subspan(group.first * (steps + 1) * n, count * (steps + 1) * n);
        const auto ctrl = std::span<const double>(ensemble.controls).subspan(group.first * steps * m, count * steps * m);
        std::vector<SliceStats> stats;
        std::vector<EmpiricalMeasure> joints;
        for (std::size_t k = 0; k <= steps; ++k) {
            joints.push_back(joint_slice(paths, ctrl, count, steps + 1, n, m, k, k < steps ? k : steps - 1));
            stats.push_back(slice_stats(joints.back(), n));
        }
        flow.stats.push_back(std::move(stats));
        flow.joints.push_back(std::move(joints));
    }
    return flow;
}

OwnedView info_views(const ParticleEnsemble& ensemble, InfoClass info, std::size_t scenario, std::size_t particle,
                     std::size_t step) {
    if (!ensemble.has_paths()) {
        throw ConfigError("info_views: ensemble has no stored paths");
    }
    if (scenario >= ensemble.scenarios || particle >= ensemble.particles || step > ensemble.steps()) {
        throw ConfigError("info_views: index out of range");
    }
    const std::size_t steps = ensemble.steps();
    const std::size_t n = ensemble.dims.state;
    const std::size_t g = ensemble.index(scenario, particle);
    const double t = ensemble.grid.time(step);
    const auto [first, last] = ensemble.group_of(scenario);
    const auto paths =
        std::span<const double>(ensemble.states).subspan(first * (steps + 1) * n, (last - first) * (steps + 1) * n);
    const SliceStats slice =
        slice_stats(joint_slice(paths, {}, last - first, steps + 1, n, ensemble.dims.control, step, 0), n);
    const std::size_t l = ensemble.dims.common;
    const std::span<const double> common_history(ensemble.common_noise.data() + scenario * steps * l, step * l);

    switch (info) {
        case InfoClass::b_strong:
            return OwnedView(BStrongView{t, step, common_history, &slice});
        case InfoClass::strong: {
            const std::size_t d = ensemble.dims.idio;
            StrongView v{t,
                         step,
                         ensemble.state(g, 0),
                         {ensemble.idio_noise.data() + g * steps * d, step * d},
                         common_history,
                         ensemble.state(g, step),
                         &slice,
                         RandomStream({ensemble.seed, StreamRole::auxiliary, 0, static_cast<std::uint32_t>(g)})
                             .uniform(step)};
            return OwnedView(v);
        }
        case InfoClass::feedback: {
            const auto& phi = ensemble.summary;
            const double dt = ensemble.grid.dt();
            const std::size_t e = phi.summary_dim(n);
            std::vector<double> z(e), next(e);
            phi.initialize(ensemble.state(g, 0), ensemble.history, dt, z);
            const std::size_t h = ensemble.history.size();
            for (std::size_t k = 0; k < step; ++k) {
                phi.update(z, ensemble.state(g, k), ensemble.state(g, k + 1), static_cast<double>(h + k) * dt,
                           static_cast<double>(h + k + 1) * dt, next);
                z.swap(next);
            }
            return OwnedView(FeedbackView{t, step, z, &slice});
        }
    }
    throw ConfigError("info_views: unknown information class");
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

PicardResult picard_solve(const ProblemSpec& spec, const Policy& policy, const TimeGrid& grid,
                          const SimulationConfig& config, double tol, std::size_t max_iter) {
    if (max_iter == 0 || !(tol > 0.0)) {
        throw ConfigError("picard_solve: need max_iter >= 1 and tol > 0");
    }
    const std::size_t n = spec.dims.state;
    const std::size_t m = spec.dims.control;
    const std::size_t steps = grid.steps();
    const std::size_t total = config.scenarios * config.particles;
    const auto initial = sample_initial_states(spec, config);
    const auto u0 = spec.controls.center();

    // Y^0: every path frozen at its initial state, controls at the reference point.
    std::vector<double> previous(total * (steps + 1) * n);
    for (std::size_t g = 0; g < total; ++g) {
        for (std::size_t k = 0; k <= steps; ++k) {
            std::copy_n(initial.begin() + static_cast<std::ptrdiff_t>(g * n), n,
                        previous.begin() + static_cast<std::ptrdiff_t>((g * (steps + 1) + k) * n));
        }
    }
    MeasureFlow flow;
    for (const auto& group : make_groups(pooled_interaction(spec), config.scenarios, config.particles)) {
        std::vector<double> pts;
        for (std::size_t g = group.first; g < group.last; ++g) {
            pts.insert(pts.end(), initial.begin() + static_cast<std::ptrdiff_t>(g * n),
                       initial.begin() + static_cast<std::ptrdiff_t>((g + 1) * n));
            pts.insert(pts.end(), u0.begin(), u0.end());
        }
        const EmpiricalMeasure joint(n + m, std::move(pts));
        flow.stats.emplace_back(steps + 1, slice_stats(joint, n));
        flow.joints.emplace_back(steps + 1, joint);
    }

    PicardResult result;
    SimulationOptions options;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        options.frozen = &flow;
        ParticleEnsemble next = simulate(spec, policy, grid, config, options);
        double distance = 0.0;
        for (std::size_t k = 0; k <= steps; ++k) {
            double acc = 0.0;
            for (std::size_t g = 0; g < total; ++g) {
                const auto y = next.state(g, k);
                const double* y_prev = previous.data() + (g * (steps + 1) + k) * n;
                for (std::size_t r = 0; r < n; ++r) {
                    const double diff = y[r] - y_prev[r];
                    acc += diff * diff;
                }
            }
            distance = std::max(distance, acc / static_cast<double>(total));
        }
        result.report.distances.push_back(distance);
        result.report.iterations = it;
        previous = next.states;
        flow = measure_flow(next);
        result.ensemble = std::move(next);
        if (distance < tol) {
            result.report.converged = true;
            break;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

void write_csv(const ParticleEnsemble& ensemble, std::ostream& out) {
    if (!ensemble.has_paths()) {
        throw ConfigError("write_csv: ensemble has no stored paths");
    }
    const std::size_t n = ensemble.dims.state;
    const std::size_t m = ensemble.dims.control;
    const std::size_t steps = ensemble.steps();
    CsvWriter csv(out);
    csv.field("scenario").field("particle").field("time");
    for (std::size_t i = 0; i < n; ++i) {
        csv.field("x" + std::to_string(i));
    }
    for (std::size_t j = 0; j < m; ++j) {
        csv.field("u" + std::to_string(j));
    }
    for (std::size_t j = 0; j < m; ++j) {
        csv.field("A" + std::to_string(j));
    }
    csv.end_row();
    for (std::size_t s = 0; s < ensemble.scenarios; ++s) {
        for (std::size_t p = 0; p < ensemble.particles; ++p) {
            const std::size_t g = ensemble.index(s, p);
            for (std::size_t k = 0; k <= steps; ++k) {
                csv.field(std::uint64_t{s}).field(std::uint64_t{p}).field(ensemble.grid.time(k));
                for (double x : ensemble.state(g, k)) {
                    csv.field(x);
                }
                for (std::size_t j = 0; j < m; ++j) {
                    if (k < steps) {
                        csv.field(ensemble.control(g, k)[j]);
                    } else {
                        csv.empty();
                    }
                }
                for (double a : ensemble.integrated(g, k)) {
                    csv.field(a);
                }
                csv.end_row();
            }
        }
    }
}

namespace {

constexpr char kMagic[8] = {'M', 'K', 'V', 'E', 'N', 'S', '0', '1'};
constexpr std::uint64_t kBinaryVersion = 1;

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

void put_u64(std::ostream& out, std::uint64_t v) {
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_f64(std::ostream& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_array(std::ostream& out, const std::vector<double>& values) {
    put_u64(out, values.size());
    for (double v : values) {
        put_f64(out, v);
    }
}

std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) {
        throw ConfigError("read_binary: truncated snapshot");
    }
    return to_little(v);
}

double get_f64(std::istream& in) {
    return std::bit_cast<double>(get_u64(in));
}

std::vector<double> get_array(std::istream& in, std::size_t expected_max) {
    const std::uint64_t size = get_u64(in);
    if (size > expected_max) {
        throw ConfigError("read_binary: array length exceeds the header dimensions");
    }
    std::vector<double> values(size);
    for (auto& v : values) {
        v = get_f64(in);
    }
    return values;
}

}  // namespace

void write_binary(const ParticleEnsemble& ensemble, std::ostream& out) {
    out.write(kMagic, sizeof kMagic);
    put_u64(out, kBinaryVersion);
    put_u64(out, ensemble.scenarios);
    put_u64(out, ensemble.particles);
    put_u64(out, ensemble.steps());
    put_u64(out, ensemble.dims.state);
    put_u64(out, ensemble.dims.idio);
    put_u64(out, ensemble.dims.common);
    put_u64(out, ensemble.dims.control);
    put_u64(out, ensemble.seed);
    put_u64(out, ensemble.pooled ? 1 : 0);
    put_f64(out, ensemble.grid.start());
    put_f64(out, ensemble.grid.end());
    put_array(out, ensemble.common_noise);
    put_array(out, ensemble.idio_noise);
    put_array(out, ensemble.states);
    put_array(out, ensemble.controls);
    put_array(out, ensemble.integrated_control);
    put_array(out, ensemble.running_reward);
    put_array(out, ensemble.terminal_reward);
    put_array(out, ensemble.total_reward);
}

ParticleEnsemble read_binary(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw ConfigError("read_binary: not an ensemble snapshot");
    }
    if (get_u64(in) != kBinaryVersion) {
        throw ConfigError("read_binary: unsupported snapshot version");
    }
    ParticleEnsemble e;
    e.scenarios = get_u64(in);
    e.particles = get_u64(in);
    const std::uint64_t steps = get_u64(in);
    e.dims.state = get_u64(in);
    e.dims.idio = get_u64(in);
    e.dims.common = get_u64(in);
    e.dims.control = get_u64(in);
    e.seed = get_u64(in);
    e.pooled = (get_u64(in) & 1u) != 0;
    const double t0 = get_f64(in);
    const double t1 = get_f64(in);
    e.grid = TimeGrid(t0, t1, steps);
    const std::size_t total = e.scenarios * e.particles;
    const std::size_t wide = std::max<std::size_t>({e.dims.state, e.dims.idio, e.dims.common, e.dims.control, 1});
    const std::size_t cap = std::max<std::size_t>(total, 1) * (steps + 1) * wide;
    e.common_noise = get_array(in, cap);
    e.idio_noise = get_array(in, cap);
    e.states = get_array(in, cap);
    e.controls = get_array(in, cap);
    e.integrated_control = get_array(in, cap);
    e.running_reward = get_array(in, cap);
    e.terminal_reward = get_array(in, cap);
    e.total_reward = get_array(in, cap);
    return e;
}

}  // namespace mkv
