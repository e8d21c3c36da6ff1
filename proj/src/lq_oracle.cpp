#include "mkv/lq_oracle.hpp"

#include "mkv/error.hpp"
#include "mkv/io.hpp"
#include "mkv/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

namespace mkv {

std::string to_string(RiccatiBranch branch) {
    return branch == RiccatiBranch::feedback ? "feedback" : "b-strong";
}

namespace {

using State = std::array<double, 3>;  // P, Pi, r

constexpr double kBlowUp = 1e8;
constexpr double kDoublingTolerance = 1e-8;
constexpr std::size_t kMaxSubsteps = 1u << 16;

/// Forward-time derivative (P', Pi', r').
State rhs(const LqSpec& lq, RiccatiBranch branch, const State& y) {
    const double p = y[0];
    const double pi = y[1];
    const double b2r = lq.b * lq.b / lq.r;
    double dp = -(2.0 * lq.a * p + lq.q);
    if (branch == RiccatiBranch::feedback) {
        dp += b2r * p * p;
    }
    const double dpi = -(2.0 * (lq.a + lq.a_bar) * pi - b2r * pi * pi + lq.q + lq.q_bar);
    const double dr = -(lq.sigma * lq.sigma * p + lq.sigma0 * lq.sigma0 * pi);
    return {dp, dpi, dr};
}

State axpy(const State& y, double h, const State& k) {
    return {y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]};
}

/// Node values from T backwards with `substeps` RK4 steps per interval.
std::vector<State> integrate(const LqSpec& lq, RiccatiBranch branch, const TimeGrid& grid, std::size_t substeps) {
    const std::size_t steps = grid.steps();
    std::vector<State> nodes(steps + 1);
    State y{lq.g, lq.g + lq.g_bar, 0.0};
    nodes[steps] = y;
    for (std::size_t k = steps; k-- > 0;) {
        const double h = -(grid.time(k + 1) - grid.time(k)) / static_cast<double>(substeps);
        for (std::size_t s = 0; s < substeps; ++s) {
            const State k1 = rhs(lq, branch, y);
            const State k2 = rhs(lq, branch, axpy(y, h / 2.0, k1));
            const State k3 = rhs(lq, branch, axpy(y, h / 2.0, k2));
            const State k4 = rhs(lq, branch, axpy(y, h, k3));
            for (int i = 0; i < 3; ++i) {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if (!std::isfinite(y[0]) || !std::isfinite(y[1]) || std::abs(y[0]) > kBlowUp ||
                std::abs(y[1]) > kBlowUp) {
                throw ValidationError("solve_riccati: solution blows up before t = " + format_double(grid.start()));
            }
        }
        nodes[k] = y;
    }
    return nodes;
}

double sup_change(const std::vector<State>& a, const std::vector<State>& b) {
    double out = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        for (int i = 0; i < 3; ++i) {
            out = std::max(out, std::abs(a[k][i] - b[k][i]));
        }
    }
    return out;
}

struct Interp {
    double p, pi, r, dp, dpi, dr;
};

/// Cubic Hermite interpolation of values and their time derivatives.
Interp hermite(const RiccatiSolution& sol, double t) {
    const auto& grid = sol.grid;
    if (t < grid.start() - 1e-12 || t > grid.end() + 1e-12) {
        throw ConfigError("riccati: time " + format_double(t) + " outside the solution grid");
    }
    const std::size_t steps = grid.steps();
    auto k = static_cast<std::size_t>(std::max(0.0, std::floor((t - grid.start()) / grid.dt())));
    k = std::min(k, steps - 1);
    const double h = grid.time(k + 1) - grid.time(k);
    const double s = std::clamp((t - grid.time(k)) / h, 0.0, 1.0);
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    const double d00 = 6 * s2 - 6 * s, d10 = 3 * s2 - 4 * s + 1, d01 = -6 * s2 + 6 * s, d11 = 3 * s2 - 2 * s;
    auto value = [&](const std::vector<double>& y, const std::vector<double>& dy) {
        return h00 * y[k] + h10 * h * dy[k] + h01 * y[k + 1] + h11 * h * dy[k + 1];
    };
    auto slope = [&](const std::vector<double>& y, const std::vector<double>& dy) {
        return (d00 * y[k] + d01 * y[k + 1]) / h + d10 * dy[k] + d11 * dy[k + 1];
    };
    return {value(sol.p, sol.dp),  value(sol.pi, sol.dpi),  value(sol.r, sol.dr),
            slope(sol.p, sol.dp),  slope(sol.pi, sol.dpi),  slope(sol.r, sol.dr)};
}

std::pair<double, double> mean_variance(const EmpiricalMeasure& nu) {
    if (nu.dim() != 1) {
        throw ConfigError("lq oracle: measures must be one-dimensional");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < nu.size(); ++i) {
        m += nu.weight(i) * nu.point(i)[0];
    }
    double var = 0.0;
    for (std::size_t i = 0; i < nu.size(); ++i) {
        const double dy = nu.point(i)[0] - m;
        var += nu.weight(i) * dy * dy;
    }
    return {m, var};
}

}  // namespace

RiccatiSolution solve_riccati(const LqSpec& lq, const TimeGrid& grid, RiccatiBranch branch) {
    lq.validate();
    if (std::abs(grid.end() - lq.horizon) > 1e-12) {
        throw ConfigError("solve_riccati: grid must end at the horizon");
    }
    std::size_t substeps = 1;
    auto coarse = integrate(lq, branch, grid, substeps);
    auto fine = integrate(lq, branch, grid, 2 * substeps);
    double change = sup_change(coarse, fine);
    while (change >= kDoublingTolerance) {
        substeps *= 2;
        if (substeps > kMaxSubsteps) {
            throw ValidationError("solve_riccati: step doubling did not settle below 1e-8");
        }
        coarse = std::move(fine);
        fine = integrate(lq, branch, grid, 2 * substeps);
        change = sup_change(coarse, fine);
    }
    RiccatiSolution sol;
    sol.lq = lq;
    sol.branch = branch;
    sol.grid = grid;
    sol.substeps = 2 * substeps;
    sol.doubling_change = change;
    for (const auto& y : fine) {
        const State d = rhs(lq, branch, y);
        sol.p.push_back(y[0]);
        sol.pi.push_back(y[1]);
        sol.r.push_back(y[2]);
        sol.dp.push_back(d[0]);
        sol.dpi.push_back(d[1]);
        sol.dr.push_back(d[2]);
        sol.k_var.push_back(branch == RiccatiBranch::feedback ? -lq.b * y[0] / lq.r : 0.0);
        sol.k_mean.push_back(-lq.b * y[1] / lq.r);
    }
    // Terminal conditions hold exactly by construction; make that explicit.
    sol.p.back() = lq.g;
    sol.pi.back() = lq.g + lq.g_bar;
    sol.r.back() = 0.0;
    return sol;
}

double lq_value(const RiccatiSolution& sol, double t, double mean, double variance) {
    const auto& grid = sol.grid;
    if (t < grid.start() - 1e-12 || t > grid.end() + 1e-12) {
        throw ConfigError("lq_value: time " + format_double(t) + " outside [" + format_double(grid.start()) + ", " +
                          format_double(grid.end()) + "]");
    }
    const std::size_t steps = grid.steps();
    auto k = static_cast<std::size_t>(std::max(0.0, std::floor((t - grid.start()) / grid.dt())));
    k = std::min(k, steps - 1);
    const double s = std::clamp((t - grid.time(k)) / (grid.time(k + 1) - grid.time(k)), 0.0, 1.0);
    auto lerp = [&](const std::vector<double>& y) { return s == 1.0 ? y[k + 1] : y[k] + s * (y[k + 1] - y[k]); };
    return lerp(sol.p) * variance + lerp(sol.pi) * mean * mean + lerp(sol.r);
}

double lq_value_smooth(const RiccatiSolution& sol, double t, const EmpiricalMeasure& nu) {
    const auto [m, var] = mean_variance(nu);
    const Interp c = hermite(sol, t);
    return c.p * var + c.pi * m * m + c.r;
}

LionsDerivatives lions_derivatives(const RiccatiSolution& sol, double t, const EmpiricalMeasure& nu) {
    const auto [m, var] = mean_variance(nu);
    (void)var;
    const Interp c = hermite(sol, t);
    LionsDerivatives out;
    out.first.resize(nu.size());
    for (std::size_t i = 0; i < nu.size(); ++i) {
        out.first[i] = 2.0 * c.p * (nu.point(i)[0] - m) + 2.0 * c.pi * m;
    }
    out.dy_first = 2.0 * c.p;
    out.second = 2.0 * (c.pi - c.p);
    return out;
}

double hjb_residual(const LqSpec& lq, const RiccatiSolution& sol, double t, const EmpiricalMeasure& nu,
                    Hamiltonian hamiltonian) {
    const auto [m, var] = mean_variance(nu);
    const Interp c = hermite(sol, t);
    const LionsDerivatives dv = lions_derivatives(sol, t, nu);

    // Control-free part of the generator plus running cost, as atom sums.
    double drift = 0.0;
    double running = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t i = 0; i < nu.size(); ++i) {
        const double w = nu.weight(i);
        const double y = nu.point(i)[0];
        drift += w * dv.first[i] * (lq.a * y + lq.a_bar * m);
        running += w * (lq.q * y * y + lq.q_bar * m * m);
        s1 += w * dv.first[i];
        s2 += w * dv.first[i] * dv.first[i];
    }
    // sum_i sum_j w_i w_j d^2_nu V = d^2_nu V for a constant kernel.
    const double idio = 0.5 * lq.sigma * lq.sigma * dv.dy_first;
    const double common = 0.5 * lq.sigma0 * lq.sigma0 * (dv.dy_first + dv.second);

    // inf over u of (B u d_nu V + R u^2): one u for all atoms, or one per atom.
    const double b2 = lq.b * lq.b;
    const double control = hamiltonian == Hamiltonian::b_strong ? -b2 * s1 * s1 / (4.0 * lq.r)
                                                                : -b2 * s2 / (4.0 * lq.r);
    const double h = drift + idio + common + running + control;
    const double dt_v = c.dp * var + c.dpi * m * m + c.dr;
    return -dt_v - h;
}

double terminal_mismatch(const RiccatiSolution& sol, const EmpiricalMeasure& nu) {
    const auto [m, var] = mean_variance(nu);
    const double expected = sol.lq.g * var + (sol.lq.g + sol.lq.g_bar) * m * m;
    return std::abs(lq_value(sol, sol.grid.end(), m, var) - expected);
}

RiccatiSolution shifted_p(const RiccatiSolution& sol, double delta) {
    RiccatiSolution out = sol;
    for (double& p : out.p) {
        p += delta;
    }
    return out;
}

LionsCheck check_lions_derivatives(const RiccatiSolution& sol, double t, const EmpiricalMeasure& nu, double h) {
    const LionsDerivatives dv = lions_derivatives(sol, t, nu);
    const std::size_t count = nu.size();
    const std::vector<double> weights(nu.weights().begin(), nu.weights().end());
    const auto base = nu.flat_points();
    auto value_moved = [&](std::size_t i, double di, std::size_t j, double dj) {
        std::vector<double> pts(base.begin(), base.end());
        pts[i] += di;
        pts[j] += dj;
        return lq_value_smooth(sol, t, EmpiricalMeasure(1, std::move(pts), weights));
    };
    LionsCheck out;
    for (std::size_t i = 0; i < count; ++i) {
        const double quotient = (value_moved(i, h, i, 0.0) - value_moved(i, -h, i, 0.0)) / (2.0 * h);
        out.first_error = std::max(out.first_error, std::abs(quotient - weights[i] * dv.first[i]));
        for (std::size_t j = i; j < count; ++j) {
            double mixed = 0.0;
            if (i == j) {
                mixed = (value_moved(i, h, i, 0.0) - 2.0 * lq_value_smooth(sol, t, nu) + value_moved(i, -h, i, 0.0)) /
                        (h * h);
            } else {
                mixed = (value_moved(i, h, j, h) - value_moved(i, h, j, -h) - value_moved(i, -h, j, h) +
                         value_moved(i, -h, j, -h)) /
                        (4.0 * h * h);
            }
            const double expected = weights[i] * weights[j] * dv.second + (i == j ? weights[i] * dv.dy_first : 0.0);
            out.second_error = std::max(out.second_error, std::abs(mixed - expected));
        }
    }
    return out;
}

std::vector<ResidualSample> hjb_residual_sweep(const LqSpec& lq, const TimeGrid& grid, std::size_t points,
                                               std::size_t atoms, std::uint64_t seed, double shift) {
    const RiccatiSolution feedback = solve_riccati(lq, grid, RiccatiBranch::feedback);
    const RiccatiSolution b_strong = solve_riccati(lq, grid, RiccatiBranch::b_strong);
    const RiccatiSolution feedback_shifted = shifted_p(feedback, shift);
    const RiccatiSolution b_strong_shifted = shifted_p(b_strong, shift);
    std::vector<ResidualSample> out;
    out.reserve(points);
    for (std::size_t i = 0; i < points; ++i) {
        const RandomStream stream({seed, StreamRole::validation, 0x4A8, static_cast<std::uint32_t>(i)});
        const double t = grid.start() + (grid.end() - grid.start()) * (1.0 - stream.uniform(0));
        const double centre = 2.0 * stream.uniform(1) - 1.0;
        const double scale = 0.5 + stream.uniform(2);
        std::vector<double> pts(atoms);
        for (std::size_t a = 0; a < atoms; ++a) {
            pts[a] = centre + scale * stream.normal(4 + a);
        }
        const EmpiricalMeasure nu(1, std::move(pts));
        ResidualSample s;
        s.t = std::min(t, grid.end() - 1e-12 * (grid.end() - grid.start()));
        const auto [m, var] = mean_variance(nu);
        s.mean = m;
        s.variance = var;
        s.b_strong = hjb_residual(lq, b_strong, s.t, nu, Hamiltonian::b_strong);
        s.feedback = hjb_residual(lq, feedback, s.t, nu, Hamiltonian::feedback);
        s.b_strong_shifted = hjb_residual(lq, b_strong_shifted, s.t, nu, Hamiltonian::b_strong);
        s.feedback_shifted = hjb_residual(lq, feedback_shifted, s.t, nu, Hamiltonian::feedback);
        out.push_back(s);
    }
    return out;
}

Policy riccati_policy(const RiccatiSolution& sol, double control_bound) {
    Policy p;
    p.info_class = sol.branch == RiccatiBranch::feedback ? InfoClass::feedback : InfoClass::b_strong;
    p.family = PolicyFamily::table;
    p.segments = sol.grid.steps();
    p.time_lo = sol.grid.start();
    p.time_hi = sol.grid.end();
    p.clip = ControlBox({-control_bound}, {control_bound});
    for (std::size_t k = 0; k < p.segments; ++k) {
        p.params.push_back(0.0);
        p.params.push_back(sol.k_var[k]);
        p.params.push_back(sol.k_mean[k] - sol.k_var[k]);
    }
    return p;
}

void write_riccati_csv(const RiccatiSolution& sol, std::ostream& out) {
    CsvWriter csv(out);
    csv.field("t").field("P").field("Pi").field("r").field("k_var").field("k_mean").end_row();
    for (std::size_t k = 0; k <= sol.grid.steps(); ++k) {
        csv.field(sol.grid.time(k))
            .field(sol.p[k])
            .field(sol.pi[k])
            .field(sol.r[k])
            .field(sol.k_var[k])
            .field(sol.k_mean[k])
            .end_row();
    }
}

}  // namespace mkv
