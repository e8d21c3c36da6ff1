#include "mkv/problem.hpp"

#include "mkv/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mkv {

// ---------------------------------------------------------------------------
// ControlBox
// ---------------------------------------------------------------------------

ControlBox::ControlBox(std::vector<double> lo, std::vector<double> hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.empty() || lo_.size() != hi_.size()) {
        throw ConfigError("control box: lo/hi must be nonempty and of equal length");
    }
    for (std::size_t i = 0; i < lo_.size(); ++i) {
        if (!std::isfinite(lo_[i]) || !std::isfinite(hi_[i]) || lo_[i] > hi_[i]) {
            throw ConfigError("control box: need finite lo <= hi in every coordinate");
        }
    }
}

std::vector<double> ControlBox::center() const {
    std::vector<double> c(lo_.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        c[i] = 0.5 * (lo_[i] + hi_[i]);
    }
    return c;
}

bool ControlBox::contains(std::span<const double> u) const noexcept {
    for (std::size_t i = 0; i < lo_.size(); ++i) {
        if (!(u[i] >= lo_[i] && u[i] <= hi_[i])) {
            return false;
        }
    }
    return true;
}

void ControlBox::clip(std::span<double> u) const noexcept {
    for (std::size_t i = 0; i < lo_.size(); ++i) {
        u[i] = std::clamp(u[i], lo_[i], hi_[i]);
    }
}

double ControlBox::distance_to_reference(std::span<const double> u) const noexcept {
    double sum = 0.0;
    for (std::size_t i = 0; i < lo_.size(); ++i) {
        const double d = u[i] - 0.5 * (lo_[i] + hi_[i]);
        sum += d * d;
    }
    return std::sqrt(sum);
}

// ---------------------------------------------------------------------------
// InitialLaw
// ---------------------------------------------------------------------------

InitialLaw InitialLaw::gaussian(std::vector<double> mean, std::vector<double> std_dev) {
    if (mean.empty() || mean.size() != std_dev.size()) {
        throw ConfigError("gaussian initial law: mean/std length mismatch");
    }
    for (double s : std_dev) {
        if (!(s >= 0.0)) {
            throw ConfigError("gaussian initial law: negative standard deviation");
        }
    }
    InitialLaw law;
    law.kind = Kind::gaussian;
    law.first = std::move(mean);
    law.second = std::move(std_dev);
    return law;
}

InitialLaw InitialLaw::dirac(std::vector<double> point) {
    if (point.empty()) {
        throw ConfigError("dirac initial law: empty point");
    }
    InitialLaw law;
    law.kind = Kind::dirac;
    law.first = std::move(point);
    return law;
}

InitialLaw InitialLaw::uniform(std::vector<double> lo, std::vector<double> hi) {
    if (lo.empty() || lo.size() != hi.size()) {
        throw ConfigError("uniform initial law: lo/hi length mismatch");
    }
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (!(lo[i] <= hi[i])) {
            throw ConfigError("uniform initial law: lo > hi");
        }
    }
    InitialLaw law;
    law.kind = Kind::uniform;
    law.first = std::move(lo);
    law.second = std::move(hi);
    return law;
}

InitialLaw InitialLaw::from_atoms(EmpiricalMeasure measure) {
    InitialLaw law;
    law.kind = Kind::atoms;
    law.atoms = std::make_shared<const EmpiricalMeasure>(std::move(measure));
    return law;
}

std::size_t InitialLaw::dim() const {
    return kind == Kind::atoms ? atoms->dim() : first.size();
}

void InitialLaw::sample(const RandomStream& stream, std::span<double> out) const {
    switch (kind) {
        case Kind::gaussian:
            for (std::size_t i = 0; i < first.size(); ++i) {
                out[i] = first[i] + second[i] * stream.normal(i);
            }
            return;
        case Kind::dirac:
            std::copy(first.begin(), first.end(), out.begin());
            return;
        case Kind::uniform:
            for (std::size_t i = 0; i < first.size(); ++i) {
                out[i] = first[i] + (second[i] - first[i]) * stream.uniform(i);
            }
            return;
        case Kind::atoms: {
            const double target = stream.uniform(0);
            const auto weights = atoms->weights();
            double cumulative = 0.0;
            std::size_t pick = weights.size() - 1;
            for (std::size_t i = 0; i < weights.size(); ++i) {
                cumulative += weights[i];
                if (target < cumulative) {
                    pick = i;
                    break;
                }
            }
            const auto p = atoms->point(pick);
            std::copy(p.begin(), p.end(), out.begin());
            return;
        }
    }
}

// ---------------------------------------------------------------------------
// UpdatingFunction
// ---------------------------------------------------------------------------

std::size_t UpdatingFunction::summary_dim(std::size_t n) const noexcept {
    switch (kind) {
        case Kind::running_state: return n;
        case Kind::running_max:
        case Kind::running_average: return 2 * n;
        case Kind::composite: return 3 * n;
    }
    return n;
}

std::size_t UpdatingFunction::max_offset(std::size_t n) const noexcept {
    return (kind == Kind::running_max || kind == Kind::composite) ? n : npos;
}

std::size_t UpdatingFunction::average_offset(std::size_t n) const noexcept {
    if (kind == Kind::running_average) {
        return n;
    }
    return kind == Kind::composite ? 2 * n : npos;
}

void UpdatingFunction::initialize(std::span<const double> x0, const std::vector<std::vector<double>>& history,
                                  double dt, std::span<double> out) const {
    const std::size_t n = x0.size();
    if (history.empty()) {
        std::copy(x0.begin(), x0.end(), out.begin());
        if (const auto mo = max_offset(n); mo != npos) {
            std::copy(x0.begin(), x0.end(), out.begin() + static_cast<std::ptrdiff_t>(mo));
        }
        if (const auto ao = average_offset(n); ao != npos) {
            std::copy(x0.begin(), x0.end(), out.begin() + static_cast<std::ptrdiff_t>(ao));
        }
        return;
    }
    // Replay the history through the recursion so the summary at the first
    // node is exactly what a path starting at the oldest history point sees.
    const std::size_t dim = summary_dim(n);
    std::vector<double> current(dim);
    std::vector<double> next(dim);
    initialize(history.front(), {}, dt, current);
    for (std::size_t k = 1; k <= history.size(); ++k) {
        const auto& prev = history[k - 1];
        const std::span<const double> x_next = (k < history.size()) ? std::span<const double>(history[k]) : x0;
        update(current, prev, x_next, static_cast<double>(k - 1) * dt, static_cast<double>(k) * dt, next);
        current.swap(next);
    }
    std::copy(current.begin(), current.end(), out.begin());
}

void UpdatingFunction::update(std::span<const double> previous, std::span<const double> x_prev,
                              std::span<const double> x_next, double elapsed_prev, double elapsed_next,
                              std::span<double> out) const {
    const std::size_t n = x_next.size();
    std::copy(x_next.begin(), x_next.end(), out.begin());
    if (const auto mo = max_offset(n); mo != npos) {
        for (std::size_t i = 0; i < n; ++i) {
            out[mo + i] = std::max(previous[mo + i], x_next[i]);
        }
    }
    if (const auto ao = average_offset(n); ao != npos) {
        for (std::size_t i = 0; i < n; ++i) {
            const double integral =
                previous[ao + i] * elapsed_prev + 0.5 * (x_prev[i] + x_next[i]) * (elapsed_next - elapsed_prev);
            out[ao + i] = elapsed_next > 0.0 ? integral / elapsed_next : x_next[i];
        }
    }
}

std::string to_string(UpdatingFunction::Kind kind) {
    switch (kind) {
        case UpdatingFunction::Kind::running_state: return "running-state";
        case UpdatingFunction::Kind::running_max: return "running-max";
        case UpdatingFunction::Kind::running_average: return "running-average";
        case UpdatingFunction::Kind::composite: return "composite";
    }
    return "unknown";
}

UpdatingFunction::Kind updating_kind_from_string(const std::string& name) {
    for (auto kind : {UpdatingFunction::Kind::running_state, UpdatingFunction::Kind::running_max,
                      UpdatingFunction::Kind::running_average, UpdatingFunction::Kind::composite}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw ConfigError("unknown updating function '" + name + "'");
}

std::vector<double> apply_updating(const UpdatingFunction& phi, std::span<const double> times,
                                   std::span<const double> path, std::size_t n) {
    if (times.empty() || n == 0 || path.size() != times.size() * n) {
        throw ConfigError("apply_updating: empty path or size mismatch");
    }
    const std::size_t dim = phi.summary_dim(n);
    std::vector<double> out(times.size() * dim);
    phi.initialize(path.subspan(0, n), {}, 0.0, std::span<double>(out).subspan(0, dim));
    for (std::size_t k = 1; k < times.size(); ++k) {
        phi.update(std::span<const double>(out).subspan((k - 1) * dim, dim), path.subspan((k - 1) * n, n),
                   path.subspan(k * n, n), times[k - 1] - times[0], times[k] - times[0],
                   std::span<double>(out).subspan(k * dim, dim));
    }
    return out;
}

std::string to_string(Objective objective) {
    return objective == Objective::maximize ? "maximize" : "minimize";
}

// ---------------------------------------------------------------------------
// ProblemSpec
// ---------------------------------------------------------------------------

void ProblemSpec::validate() const {
    if (dims.state == 0 || dims.control == 0) {
        throw ConfigError(name + ": state and control dimensions must be positive");
    }
    if (!(horizon > t_start)) {
        throw ConfigError(name + ": horizon must exceed t_start");
    }
    if (controls.dim() != dims.control) {
        throw ConfigError(name + ": control box dimension differs from control dimension");
    }
    if (initial.dim() != dims.state) {
        throw ConfigError(name + ": initial law dimension differs from state dimension");
    }
    for (const auto& h : initial.history) {
        if (h.size() != dims.state) {
            throw ConfigError(name + ": history point of wrong dimension");
        }
    }
    if (!coefficients.drift || !coefficients.diffusion || !coefficients.common_diffusion ||
        !coefficients.running || !coefficients.terminal) {
        throw ConfigError(name + ": every coefficient (b, sigma, sigma0, L, g) must be set");
    }
    if (p_integrability < 0.0) {
        throw ConfigError(name + ": integrability exponent must be nonnegative");
    }
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

VectorCoefficient constant_coefficient(std::vector<double> value) {
    return [value = std::move(value)](const CoefficientArgs&, std::span<double> out) {
        std::copy(value.begin(), value.end(), out.begin());
    };
}

VectorCoefficient linear_drift(std::size_t n, std::size_t m, std::vector<double> a, std::vector<double> a_bar,
                               std::vector<double> b, std::vector<double> offset) {
    if (a.size() != n * n || a_bar.size() != n * n || b.size() != n * m || offset.size() != n) {
        throw ConfigError("linear drift: matrix sizes do not match dimensions");
    }
    return [=](const CoefficientArgs& args, std::span<double> out) {
        const auto x = args.path.now();
        const auto& mean = args.flow.now().state_mean;
        for (std::size_t i = 0; i < n; ++i) {
            double v = offset[i];
            for (std::size_t j = 0; j < n; ++j) {
                v += a[i * n + j] * x[j] + a_bar[i * n + j] * mean[j];
            }
            for (std::size_t j = 0; j < m; ++j) {
                v += b[i * m + j] * args.control[j];
            }
            out[i] = v;
        }
    };
}

ScalarCoefficient constant_reward(double value) {
    return [value](const CoefficientArgs&) { return value; };
}

ScalarCoefficient quadratic_reward(double q, double q_bar, double r, std::vector<double> u_ref, double offset) {
    return [=](const CoefficientArgs& args) {
        const auto x = args.path.now();
        const auto& mean = args.flow.now().state_mean;
        double v = offset;
        for (std::size_t i = 0; i < x.size(); ++i) {
            v += q * x[i] * x[i] + q_bar * mean[i] * mean[i];
        }
        for (std::size_t i = 0; i < args.control.size(); ++i) {
            const double d = args.control[i] - (i < u_ref.size() ? u_ref[i] : 0.0);
            v += r * d * d;
        }
        return v;
    };
}

ProblemSpec make_lq_problem(const LqSpec& lq, InitialLaw initial, double control_bound, std::string name) {
    lq.validate();
    ProblemSpec spec;
    spec.name = std::move(name);
    spec.dims = {1, 1, lq.sigma0 == 0.0 ? std::size_t{0} : std::size_t{1}, 1};
    spec.t_start = 0.0;
    spec.horizon = lq.horizon;
    spec.controls = ControlBox({-control_bound}, {control_bound});
    spec.objective = Objective::minimize;
    spec.initial = std::move(initial);
    spec.lq = lq;
    spec.coefficients.drift = [lq](const CoefficientArgs& args, std::span<double> out) {
        out[0] = lq.a * args.path.now()[0] + lq.a_bar * args.flow.now().state_mean[0] + lq.b * args.control[0];
    };
    spec.coefficients.diffusion = constant_coefficient({lq.sigma});
    spec.coefficients.common_diffusion =
        spec.dims.common == 0 ? constant_coefficient({}) : constant_coefficient({lq.sigma0});
    spec.coefficients.running = [lq](const CoefficientArgs& args) {
        const double x = args.path.now()[0];
        const double m = args.flow.now().state_mean[0];
        const double u = args.control[0];
        return lq.q * x * x + lq.q_bar * m * m + lq.r * u * u;
    };
    spec.coefficients.terminal = [lq](const CoefficientArgs& args) {
        const double x = args.path.now()[0];
        const double m = args.flow.now().state_mean[0];
        return lq.g * x * x + lq.g_bar * m * m;
    };
    spec.validate();
    return spec;
}

void LqSpec::validate() const {
    if (!(r > 0.0)) {
        throw ConfigError("lq: R must be positive");
    }
    if (q < 0.0 || g < 0.0 || q + q_bar < 0.0 || g + g_bar < 0.0) {
        throw ConfigError("lq: need Q, G >= 0 and Q + Qbar, G + Gbar >= 0");
    }
    if (sigma < 0.0 || sigma0 < 0.0) {
        throw ConfigError("lq: noise intensities must be nonnegative");
    }
    if (!(horizon > 0.0)) {
        throw ConfigError("lq: horizon must be positive");
    }
}

// ---------------------------------------------------------------------------
// Validators
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kValidationSteps = 16;
constexpr std::size_t kValidationAtoms = 8;

/// Sequential reader over one validation sample's counter-based stream.
class SampleDraws {
  public:
    SampleDraws(std::uint64_t seed, std::size_t sample)
        : stream_(StreamKey{seed, StreamRole::validation, 0, static_cast<std::uint32_t>(sample)}) {}

    double normal() { return stream_.normal(next_normal_++); }
    double uniform() { return stream_.uniform((1ull << 40) + next_uniform_++); }

  private:
    RandomStream stream_;
    std::uint64_t next_normal_ = 0;
    std::uint64_t next_uniform_ = 0;
};

struct SampleInputs {
    double t = 0.0;
    std::size_t current = 0;
    std::vector<double> path;              // (kValidationSteps+1) x n
    std::vector<SliceStats> stats;         // per node
    std::vector<EmpiricalMeasure> joints;  // per node
    std::vector<double> control;
};

std::vector<double> random_path(SampleDraws& draws, std::size_t n, double scale) {
    std::vector<double> path((kValidationSteps + 1) * n);
    for (std::size_t i = 0; i < n; ++i) {
        path[i] = scale * draws.normal();
    }
    for (std::size_t k = 1; k <= kValidationSteps; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            path[k * n + i] = path[(k - 1) * n + i] + 0.5 * scale * draws.normal();
        }
    }
    return path;
}

EmpiricalMeasure random_joint(SampleDraws& draws, const ProblemSpec& spec, double center) {
    const std::size_t n = spec.dims.state;
    const std::size_t m = spec.dims.control;
    std::vector<double> flat(kValidationAtoms * (n + m));
    for (std::size_t a = 0; a < kValidationAtoms; ++a) {
        for (std::size_t i = 0; i < n; ++i) {
            flat[a * (n + m) + i] = center + draws.normal();
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double lo = spec.controls.lo()[j];
            const double hi = spec.controls.hi()[j];
            flat[a * (n + m) + n + j] = lo + (hi - lo) * draws.uniform();
        }
    }
    return EmpiricalMeasure(n + m, std::move(flat));
}

std::vector<double> random_control(SampleDraws& draws, const ControlBox& box) {
    std::vector<double> u(box.dim());
    for (std::size_t j = 0; j < u.size(); ++j) {
        u[j] = box.lo()[j] + (box.hi()[j] - box.lo()[j]) * draws.uniform();
    }
    return u;
}

double validation_time(const ProblemSpec& spec, std::size_t k) {
    return spec.t_start + (spec.horizon - spec.t_start) * static_cast<double>(k) / kValidationSteps;
}

/// (b, sigma, sigma0) concatenated.
std::vector<double> state_coefficients(const ProblemSpec& spec, const CoefficientArgs& args) {
    const std::size_t n = spec.dims.state;
    const std::size_t d = spec.dims.idio;
    const std::size_t l = spec.dims.common;
    std::vector<double> out(n + n * d + n * l, 0.0);
    std::span<double> all(out);
    spec.coefficients.drift(args, all.subspan(0, n));
    spec.coefficients.diffusion(args, all.subspan(n, n * d));
    spec.coefficients.common_diffusion(args, all.subspan(n + n * d, n * l));
    return out;
}

double max_abs_difference(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

double euclidean(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) {
        s += v * v;
    }
    return std::sqrt(s);
}

double path_sup_norm(std::span<const double> path, std::size_t n, std::size_t upto) {
    double worst = 0.0;
    for (std::size_t k = 0; k <= upto; ++k) {
        worst = std::max(worst, euclidean(path.subspan(k * n, n)));
    }
    return worst;
}

/// 1 + |x|^2 + int (|y|^2 + rho(u', u0)^2) dnu + rho(u, u0)^2.
double quadratic_bound(const ProblemSpec& spec, double path_norm, const EmpiricalMeasure& joint,
                       std::span<const double> u) {
    const std::size_t n = spec.dims.state;
    double integral = 0.0;
    for (std::size_t a = 0; a < joint.size(); ++a) {
        const auto p = joint.point(a);
        double y2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            y2 += p[i] * p[i];
        }
        const double rho = spec.controls.distance_to_reference(p.subspan(n));
        integral += joint.weight(a) * (y2 + rho * rho);
    }
    const double rho_u = u.empty() ? 0.0 : spec.controls.distance_to_reference(u);
    return 1.0 + path_norm * path_norm + integral + rho_u * rho_u;
}

}  // namespace

double NonanticipativityReport::max_violation() const noexcept {
    return std::max({drift, diffusion, common_diffusion, running, terminal});
}

NonanticipativityReport validate_nonanticipativity(const ProblemSpec& spec, std::size_t sample_count,
                                                   std::uint64_t seed) {
    if (sample_count == 0) {
        throw ConfigError("validate_nonanticipativity: sample_count must be >= 1");
    }
    spec.validate();
    const std::size_t n = spec.dims.state;
    const std::size_t d = spec.dims.idio;
    const std::size_t l = spec.dims.common;
    NonanticipativityReport report;
    report.samples = sample_count;

    for (std::size_t s = 0; s < sample_count; ++s) {
        SampleDraws draws(seed, s);
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(draws.uniform() * (kValidationSteps + 1)),
                                             kValidationSteps);
        const auto path = random_path(draws, n, 1.0);
        std::vector<EmpiricalMeasure> joints;
        std::vector<SliceStats> stats;
        for (std::size_t node = 0; node <= kValidationSteps; ++node) {
            joints.push_back(random_joint(draws, spec, 0.3 * static_cast<double>(node)));
            stats.push_back(slice_stats(joints.back(), n));
        }
        const auto u = random_control(draws, spec.controls);

        auto stopped_path = path;
        for (std::size_t node = k + 1; node <= kValidationSteps; ++node) {
            std::copy_n(path.begin() + static_cast<std::ptrdiff_t>(k * n), n,
                        stopped_path.begin() + static_cast<std::ptrdiff_t>(node * n));
        }
        auto stopped_stats = stats;
        for (std::size_t node = k + 1; node <= kValidationSteps; ++node) {
            stopped_stats[node] = stats[k];
        }

        const double t = validation_time(spec, k);
        const CoefficientArgs full{t, PathView{path, n, k}, FlowView{stats, k, &joints[k]}, u};
        const CoefficientArgs stopped{t, PathView{stopped_path, n, k}, FlowView{stopped_stats, k, &joints[k]}, u};

        try {
            std::vector<double> a(n * std::max({std::size_t{1}, d, l}));
            std::vector<double> b(a.size());
            auto compare_vector = [&](const VectorCoefficient& f, std::size_t size, double& slot) {
                f(full, std::span<double>(a).subspan(0, size));
                f(stopped, std::span<double>(b).subspan(0, size));
                slot = std::max(slot, max_abs_difference(std::span<const double>(a).subspan(0, size),
                                                         std::span<const double>(b).subspan(0, size)));
            };
            compare_vector(spec.coefficients.drift, n, report.drift);
            compare_vector(spec.coefficients.diffusion, n * d, report.diffusion);
            compare_vector(spec.coefficients.common_diffusion, n * l, report.common_diffusion);
            report.running = std::max(report.running,
                                      std::abs(spec.coefficients.running(full) - spec.coefficients.running(stopped)));
            CoefficientArgs full_terminal = full;
            CoefficientArgs stopped_terminal = stopped;
            full_terminal.control = {};
            stopped_terminal.control = {};
            report.terminal = std::max(report.terminal, std::abs(spec.coefficients.terminal(full_terminal) -
                                                                 spec.coefficients.terminal(stopped_terminal)));
        } catch (const std::exception& e) {
            throw ValidationError(spec.name + ": coefficient evaluation failed at validation sample " +
                                  std::to_string(s) + ": " + e.what());
        }
    }
    return report;
}

LipschitzReport estimate_lipschitz(const ProblemSpec& spec, std::size_t sample_count, std::uint64_t seed) {
    if (spec.p_integrability != 2.0) {
        throw ConfigError("estimate_lipschitz: the Lipschitz condition is stated for p = 2");
    }
    spec.validate();
    const std::size_t n = spec.dims.state;
    LipschitzReport report;

    for (std::size_t s = 0; s < sample_count; ++s) {
        SampleDraws draws(seed, s);
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(draws.uniform() * (kValidationSteps + 1)),
                                             kValidationSteps);
        const double t = validation_time(spec, k);
        const auto u = random_control(draws, spec.controls);
        const auto path = random_path(draws, n, 1.0);
        const auto joint = random_joint(draws, spec, 0.0);

        // Pair type cycles: move the path only, the measure only, or both.
        const std::size_t kind = s % 3;
        auto other_path = path;
        if (kind != 1) {
            const auto delta = random_path(draws, n, 0.5);
            for (std::size_t i = 0; i < other_path.size(); ++i) {
                other_path[i] += delta[i];
            }
        }
        EmpiricalMeasure other_joint = joint;
        if (kind != 0) {
            std::vector<double> flat(joint.flat_points().begin(), joint.flat_points().end());
            const std::size_t width = joint.dim();
            const double shift = draws.normal();
            for (std::size_t a = 0; a < joint.size(); ++a) {
                for (std::size_t i = 0; i < n; ++i) {
                    flat[a * width + i] += shift + 0.5 * draws.normal();
                }
            }
            other_joint = EmpiricalMeasure(width, std::move(flat));
        }

        const std::vector<SliceStats> stats(kValidationSteps + 1, slice_stats(joint, n));
        const std::vector<SliceStats> other_stats(kValidationSteps + 1, slice_stats(other_joint, n));
        const CoefficientArgs first{t, PathView{path, n, k}, FlowView{stats, k, &joint}, u};
        const CoefficientArgs second{t, PathView{other_path, n, k}, FlowView{other_stats, k, &other_joint}, u};

        std::vector<double> diff_path(path.size());
        for (std::size_t i = 0; i < path.size(); ++i) {
            diff_path[i] = path[i] - other_path[i];
        }
        const double path_distance = path_sup_norm(diff_path, n, k);
        const double measure_distance = (kind == 0) ? 0.0 : wasserstein2(joint, other_joint);

        std::vector<double> value_a;
        std::vector<double> value_b;
        try {
            value_a = state_coefficients(spec, first);
            value_b = state_coefficients(spec, second);
        } catch (const std::exception& e) {
            throw ValidationError(spec.name + ": coefficient evaluation failed at Lipschitz sample " +
                                  std::to_string(s) + ": " + e.what());
        }

        const double bound = quadratic_bound(spec, path_sup_norm(path, n, k), joint, u);
        const double norm_a = euclidean(value_a);
        report.growth_ratio = std::max(report.growth_ratio, norm_a * norm_a / bound);

        const double denominator = path_distance + measure_distance;
        if (denominator < 1e-12) {
            ++report.pairs_skipped;
            continue;
        }
        ++report.pairs_used;
        std::vector<double> diff(value_a.size());
        for (std::size_t i = 0; i < diff.size(); ++i) {
            diff[i] = value_a[i] - value_b[i];
        }
        const double ratio = euclidean(diff) / denominator;
        if (ratio > report.constant) {
            report.constant = ratio;
            report.worst_sample = s;
            report.worst_path_distance = path_distance;
            report.worst_measure_distance = measure_distance;
        }
    }
    return report;
}

GrowthReport validate_growth(const ProblemSpec& spec, std::size_t sample_count, std::uint64_t seed) {
    spec.validate();
    const std::size_t n = spec.dims.state;
    GrowthReport report;
    report.samples = sample_count;
    for (std::size_t s = 0; s < sample_count; ++s) {
        SampleDraws draws(seed, s);
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(draws.uniform() * (kValidationSteps + 1)),
                                             kValidationSteps);
        const double t = validation_time(spec, k);
        const auto u = random_control(draws, spec.controls);
        const double scale = 0.5 + 4.0 * draws.uniform();
        const auto path = random_path(draws, n, scale);
        const auto joint = random_joint(draws, spec, scale * draws.normal());
        const std::vector<SliceStats> stats(kValidationSteps + 1, slice_stats(joint, n));
        const double norm = path_sup_norm(path, n, k);

        const CoefficientArgs running_args{t, PathView{path, n, k}, FlowView{stats, k, &joint}, u};
        const CoefficientArgs terminal_args{spec.horizon, PathView{path, n, k}, FlowView{stats, k, &joint}, {}};
        const double running = std::abs(spec.coefficients.running(running_args));
        const double terminal = std::abs(spec.coefficients.terminal(terminal_args));
        const double bound_running = quadratic_bound(spec, norm, joint, u);
        const double bound_terminal = quadratic_bound(spec, norm, joint, {});
        report.ratio = std::max({report.ratio, running / bound_running, terminal / bound_terminal});
        report.squared_ratio = std::max(
            {report.squared_ratio, running * running / bound_running, terminal * terminal / bound_terminal});
    }
    return report;
}

}  // namespace mkv
