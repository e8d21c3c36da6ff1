#include "mkv/measures.hpp"

#include "mkv/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mkv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        sum += diff * diff;
    }
    return sum;
}

void require_same_dim(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim() != nu.dim()) {
        throw ConfigError("wasserstein2: dimension mismatch (" + std::to_string(mu.dim()) + " vs " +
                          std::to_string(nu.dim()) + ")");
    }
}

std::vector<double> cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    std::vector<double> cost(mu.size() * nu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (std::size_t j = 0; j < nu.size(); ++j) {
            cost[i * nu.size() + j] = squared_distance(mu.point(i), nu.point(j));
        }
    }
    return cost;
}

double log_sum_exp(std::span<const double> values) {
    double top = -kInf;
    for (double v : values) {
        top = std::max(top, v);
    }
    if (top == -kInf) {
        return -kInf;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += std::exp(v - top);
    }
    return top + std::log(sum);
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> points, std::vector<double> weights)
    : dim_(dim), points_(std::move(points)) {
    if (dim_ == 0) {
        throw ConfigError("empirical measure: zero dimension");
    }
    if (points_.empty()) {
        throw ConfigError("empirical measure: no atoms");
    }
    if (points_.size() % dim_ != 0) {
        throw ConfigError("empirical measure: dimension mismatch in point buffer");
    }
    const std::size_t count = points_.size() / dim_;
    if (weights.empty()) {
        weights_.assign(count, 1.0 / static_cast<double>(count));
        uniform_ = true;
        return;
    }
    if (weights.size() != count) {
        throw ConfigError("empirical measure: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(count) + " atoms");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ConfigError("empirical measure: negative or non-finite weight");
        }
        total += w;
    }
    if (!(total > 0.0)) {
        throw ConfigError("empirical measure: weights sum to zero");
    }
    weights_ = std::move(weights);
    for (double& w : weights_) {
        w /= total;
    }
    uniform_ = std::all_of(weights_.begin(), weights_.end(),
                           [&](double w) { return w == weights_.front(); });
}

EmpiricalMeasure EmpiricalMeasure::from_points(const std::vector<std::vector<double>>& points,
                                               const std::vector<double>& weights) {
    if (points.empty()) {
        throw ConfigError("empirical measure: no atoms");
    }
    const std::size_t dim = points.front().size();
    std::vector<double> flat;
    flat.reserve(points.size() * dim);
    for (const auto& p : points) {
        if (p.size() != dim) {
            throw ConfigError("empirical measure: atoms of different dimensions");
        }
        flat.insert(flat.end(), p.begin(), p.end());
    }
    return EmpiricalMeasure(dim, std::move(flat), weights);
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> point) {
    return EmpiricalMeasure(point.size(), std::vector<double>(point.begin(), point.end()));
}

EmpiricalMeasure EmpiricalMeasure::project(std::span<const std::size_t> coordinates) const {
    if (coordinates.empty()) {
        throw ConfigError("project: no coordinates");
    }
    std::vector<double> flat;
    flat.reserve(size() * coordinates.size());
    for (std::size_t i = 0; i < size(); ++i) {
        const auto p = point(i);
        for (std::size_t c : coordinates) {
            if (c >= dim_) {
                throw ConfigError("project: coordinate out of range");
            }
            flat.push_back(p[c]);
        }
    }
    EmpiricalMeasure out(coordinates.size(), std::move(flat));
    out.weights_ = weights_;
    out.uniform_ = uniform_;
    return out;
}

EmpiricalMeasure EmpiricalMeasure::leading(std::size_t count) const {
    std::vector<std::size_t> coords(count);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    return project(coords);
}

std::vector<double> EmpiricalMeasure::mean() const {
    std::vector<double> out(dim_, 0.0);
    for (std::size_t i = 0; i < size(); ++i) {
        const auto p = point(i);
        for (std::size_t c = 0; c < dim_; ++c) {
            out[c] += weights_[i] * p[c];
        }
    }
    return out;
}

double moment(const EmpiricalMeasure& mu, std::size_t coordinate, int order) {
    if (coordinate >= mu.dim()) {
        throw ConfigError("moment: coordinate " + std::to_string(coordinate) + " out of range");
    }
    if (order < 1 || order > 4) {
        throw ConfigError("moment: order must be in 1..4");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double x = mu.point(i)[coordinate];
        double power = x;
        for (int k = 1; k < order; ++k) {
            power *= x;
        }
        sum += mu.weight(i) * power;
    }
    return sum;
}

double central_moment2(const EmpiricalMeasure& mu, std::size_t coordinate) {
    const double m = moment(mu, coordinate, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double d = mu.point(i)[coordinate] - m;
        sum += mu.weight(i) * d * d;
    }
    return sum;
}

double second_moment_norm(const EmpiricalMeasure& mu) {
    double sum = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        double sq = 0.0;
        for (double v : mu.point(i)) {
            sq += v * v;
        }
        sum += mu.weight(i) * sq;
    }
    return sum;
}

SliceStats slice_stats(const EmpiricalMeasure& joint, std::size_t state_dim) {
    if (state_dim > joint.dim()) {
        throw ConfigError("slice_stats: state dimension exceeds slice dimension");
    }
    const std::size_t control_dim = joint.dim() - state_dim;
    SliceStats stats;
    stats.state_mean.assign(state_dim, 0.0);
    stats.state_second.assign(state_dim, 0.0);
    stats.control_mean.assign(control_dim, 0.0);
    stats.control_second.assign(control_dim, 0.0);
    for (std::size_t i = 0; i < joint.size(); ++i) {
        const auto p = joint.point(i);
        const double w = joint.weight(i);
        for (std::size_t c = 0; c < state_dim; ++c) {
            stats.state_mean[c] += w * p[c];
            stats.state_second[c] += w * p[c] * p[c];
        }
        for (std::size_t c = 0; c < control_dim; ++c) {
            const double v = p[state_dim + c];
            stats.control_mean[c] += w * v;
            stats.control_second[c] += w * v * v;
        }
    }
    return stats;
}

std::string to_string(TransportMethod method) {
    switch (method) {
        case TransportMethod::quantile: return "quantile";
        case TransportMethod::assignment: return "assignment";
        case TransportMethod::min_cost_flow: return "min_cost_flow";
        case TransportMethod::entropic: return "entropic";
    }
    return "unknown";
}

double wasserstein2_quantile(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    require_same_dim(mu, nu);
    if (mu.dim() != 1) {
        throw ConfigError("wasserstein2_quantile: one-dimensional measures only");
    }
    auto sorted_atoms = [](const EmpiricalMeasure& m) {
        std::vector<std::pair<double, double>> atoms(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            atoms[i] = {m.point(i)[0], m.weight(i)};
        }
        std::sort(atoms.begin(), atoms.end());
        return atoms;
    };
    const auto a = sorted_atoms(mu);
    const auto b = sorted_atoms(nu);

    // Monotone coupling: walk both CDFs, moving mass min(residual_a, residual_b).
    double cost = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    double ra = a[0].second;
    double rb = b[0].second;
    while (i < a.size() && j < b.size()) {
        const double mass = std::min(ra, rb);
        const double d = a[i].first - b[j].first;
        cost += mass * d * d;
        ra -= mass;
        rb -= mass;
        if (ra <= rb) {
            if (++i < a.size()) {
                ra = a[i].second;
            }
        } else if (++j < b.size()) {
            rb = b[j].second;
        }
    }
    return std::sqrt(std::max(cost, 0.0));
}

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
    // Shortest augmenting path with potentials (Kuhn-Munkres), 1-based internals.
    std::vector<double> u(n + 1, 0.0);
    std::vector<double> v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0);
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j] != 0) {
                    continue;
                }
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j] != 0) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= n; ++j) {
        row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

double wasserstein2_assignment(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    require_same_dim(mu, nu);
    if (mu.size() != nu.size() || !mu.uniform() || !nu.uniform()) {
        throw ConfigError("wasserstein2_assignment: needs equal-size uniform measures");
    }
    const std::size_t n = mu.size();
    const auto cost = cost_matrix(mu, nu);
    const auto match = solve_assignment(cost, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += cost[i * n + match[i]];
    }
    return std::sqrt(total / static_cast<double>(n));
}

double wasserstein2_flow(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    require_same_dim(mu, nu);
    const std::size_t n = mu.size();
    const std::size_t m = nu.size();
    const auto cost = cost_matrix(mu, nu);

    // Successive shortest paths on the complete bipartite transport network.
    // Nodes: 0 = source, 1..n = supply atoms, n+1..n+m = demand atoms, n+m+1 = sink.
    const std::size_t nodes = n + m + 2;
    const std::size_t sink = n + m + 1;
    std::vector<double> supply(mu.weights().begin(), mu.weights().end());
    std::vector<double> demand(nu.weights().begin(), nu.weights().end());
    std::vector<double> flow(n * m, 0.0);
    std::vector<double> potential(nodes, 0.0);
    std::vector<double> dist(nodes);
    std::vector<std::size_t> parent(nodes);
    std::vector<char> done(nodes);
    constexpr double kTiny = 1e-15;

    double remaining = 1.0;
    while (remaining > 1e-13) {
        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(done.begin(), done.end(), 0);
        dist[0] = 0.0;
        for (;;) {
            std::size_t u = nodes;
            double best = kInf;
            for (std::size_t k = 0; k < nodes; ++k) {
                if (done[k] == 0 && dist[k] < best) {
                    best = dist[k];
                    u = k;
                }
            }
            if (u == nodes) {
                break;
            }
            done[u] = 1;
            auto relax = [&](std::size_t to, double edge_cost) {
                const double reduced = edge_cost + potential[u] - potential[to];
                const double cand = dist[u] + std::max(reduced, 0.0);
                if (cand < dist[to]) {
                    dist[to] = cand;
                    parent[to] = u;
                }
            };
            if (u == 0) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (supply[i] > kTiny) {
                        relax(1 + i, 0.0);
                    }
                }
            } else if (u <= n) {
                const std::size_t i = u - 1;
                for (std::size_t j = 0; j < m; ++j) {
                    relax(1 + n + j, cost[i * m + j]);
                }
            } else if (u < sink) {
                const std::size_t j = u - 1 - n;
                for (std::size_t i = 0; i < n; ++i) {
                    if (flow[i * m + j] > kTiny) {
                        relax(1 + i, -cost[i * m + j]);
                    }
                }
                if (demand[j] > kTiny) {
                    relax(sink, 0.0);
                }
            }
        }
        if (dist[sink] == kInf) {
            break;
        }
        for (std::size_t k = 0; k < nodes; ++k) {
            if (dist[k] < kInf) {
                potential[k] += dist[k];
            }
        }
        // Bottleneck along the path.
        double push = kInf;
        for (std::size_t v = sink; v != 0; v = parent[v]) {
            const std::size_t u = parent[v];
            if (u == 0) {
                push = std::min(push, supply[v - 1]);
            } else if (v == sink) {
                push = std::min(push, demand[u - 1 - n]);
            } else if (u > n) {  // backward edge demand-atom -> supply-atom
                push = std::min(push, flow[(v - 1) * m + (u - 1 - n)]);
            }
        }
        for (std::size_t v = sink; v != 0; v = parent[v]) {
            const std::size_t u = parent[v];
            if (u == 0) {
                supply[v - 1] -= push;
            } else if (v == sink) {
                demand[u - 1 - n] -= push;
            } else if (u <= n) {
                flow[(u - 1) * m + (v - 1 - n)] += push;
            } else {
                flow[(v - 1) * m + (u - 1 - n)] -= push;
            }
        }
        remaining -= push;
    }

    double total = 0.0;
    for (std::size_t k = 0; k < n * m; ++k) {
        total += flow[k] * cost[k];
    }
    return std::sqrt(std::max(total, 0.0));
}

TransportResult wasserstein2_entropic(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                      std::optional<double> epsilon, std::size_t max_iterations) {
    require_same_dim(mu, nu);
    const std::size_t n = mu.size();
    const std::size_t m = nu.size();
    const auto cost = cost_matrix(mu, nu);

    double mean_cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            mean_cost += mu.weight(i) * nu.weight(j) * cost[i * m + j];
        }
    }
    TransportResult result;
    result.method = TransportMethod::entropic;
    if (mean_cost <= 0.0) {
        return result;
    }
    const double target = epsilon.value_or(1e-3 * mean_cost);

    std::vector<double> log_a(n);
    std::vector<double> log_b(m);
    for (std::size_t i = 0; i < n; ++i) {
        log_a[i] = std::log(std::max(mu.weight(i), 1e-300));
    }
    for (std::size_t j = 0; j < m; ++j) {
        log_b[j] = std::log(std::max(nu.weight(j), 1e-300));
    }
    std::vector<double> f(n, 0.0);
    std::vector<double> g(m, 0.0);
    std::vector<double> scratch(std::max(n, m));

    // Log-domain Sinkhorn with epsilon scaling down to the target.
    double eps = std::max(mean_cost, target);
    std::size_t iterations = 0;
    for (;;) {
        const std::size_t stage_budget = (eps <= target) ? max_iterations : max_iterations / 10 + 1;
        for (std::size_t it = 0; it < stage_budget; ++it, ++iterations) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) {
                    scratch[j] = (g[j] - cost[i * m + j]) / eps + log_b[j];
                }
                f[i] = -eps * log_sum_exp({scratch.data(), m});
            }
            double violation = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                for (std::size_t i = 0; i < n; ++i) {
                    scratch[i] = (f[i] - cost[i * m + j]) / eps + log_a[i];
                }
                const double new_g = -eps * log_sum_exp({scratch.data(), n});
                violation = std::max(violation, std::abs(new_g - g[j]));
                g[j] = new_g;
            }
            if (violation < 1e-10 * mean_cost) {
                break;
            }
        }
        if (eps <= target) {
            break;
        }
        eps = std::max(eps * 0.5, target);
    }

    // The dual side uses the c-transform of g, a feasible pair for the
    // unregularized problem, so primal - dual bounds the error in W2^2.
    double primal = 0.0;
    double dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double fc = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j) {
            const double plan = std::exp((f[i] + g[j] - cost[i * m + j]) / eps + log_a[i] + log_b[j]);
            primal += plan * cost[i * m + j];
            fc = std::min(fc, cost[i * m + j] - g[j]);
        }
        dual += mu.weight(i) * fc;
    }
    for (std::size_t j = 0; j < m; ++j) {
        dual += nu.weight(j) * g[j];
    }
    result.distance = std::sqrt(std::max(primal, 0.0));
    result.duality_gap = primal - dual;
    result.iterations = iterations;
    return result;
}

TransportResult wasserstein2_detailed(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    require_same_dim(mu, nu);
    TransportResult result;
    if (mu.dim() == 1) {
        result.method = TransportMethod::quantile;
        result.distance = wasserstein2_quantile(mu, nu);
        return result;
    }
    if (mu.size() <= kExactTransportLimit && nu.size() <= kExactTransportLimit) {
        if (mu.size() == nu.size() && mu.uniform() && nu.uniform()) {
            result.method = TransportMethod::assignment;
            result.distance = wasserstein2_assignment(mu, nu);
        } else {
            result.method = TransportMethod::min_cost_flow;
            result.distance = wasserstein2_flow(mu, nu);
        }
        return result;
    }
    return wasserstein2_entropic(mu, nu);
}

double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    return wasserstein2_detailed(mu, nu).distance;
}

}  // namespace mkv
