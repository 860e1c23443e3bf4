#include "scorematch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>

namespace scorematch {

namespace {

void check_weights(const std::vector<double>& w, std::size_t n, const char* side) {
    if (w.size() != n) {
        throw std::invalid_argument(std::string("EmpiricalPair: ") + side + " has " +
                                    std::to_string(n) + " points but " +
                                    std::to_string(w.size()) + " weights");
    }
    double total = 0.0;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("EmpiricalPair: bad ") + side + " weight");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument(std::string("EmpiricalPair: ") + side +
                                    " weights sum to " + std::to_string(total));
    }
}

double euclidean(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

}  // namespace

EmpiricalPair EmpiricalPair::uniform(Matrix treated, Matrix control) {
    EmpiricalPair pair;
    pair.treated_weights.assign(treated.rows, treated.rows ? 1.0 / treated.rows : 0.0);
    pair.control_weights.assign(control.rows, control.rows ? 1.0 / control.rows : 0.0);
    pair.treated_points = std::move(treated);
    pair.control_points = std::move(control);
    pair.validate();
    return pair;
}

void EmpiricalPair::validate() const {
    if (treated_points.rows == 0 || control_points.rows == 0) {
        throw std::invalid_argument("EmpiricalPair: both arms need at least one point");
    }
    if (treated_points.cols != control_points.cols) {
        throw std::invalid_argument("EmpiricalPair: dimension mismatch, treated " +
                                    treated_points.shape() + " vs control " +
                                    control_points.shape());
    }
    if (!treated_points.all_finite() || !control_points.all_finite()) {
        throw std::invalid_argument("EmpiricalPair: non-finite point coordinates");
    }
    check_weights(treated_weights, treated_points.rows, "treated");
    check_weights(control_weights, control_points.rows, "control");
}

double DiscreteJoint::treated_mass() const {
    return std::accumulate(p_treated.begin(), p_treated.end(), 0.0);
}

double DiscreteJoint::control_mass() const {
    return std::accumulate(p_control.begin(), p_control.end(), 0.0);
}

void DiscreteJoint::validate() const {
    const std::size_t s = support.rows;
    if (s == 0) throw std::invalid_argument("DiscreteJoint: empty support");
    if (p_treated.size() != s || p_control.size() != s || scores.size() != s) {
        throw std::invalid_argument("DiscreteJoint: support has " + std::to_string(s) +
                                    " points but " + std::to_string(p_treated.size()) +
                                    "/" + std::to_string(p_control.size()) + "/" +
                                    std::to_string(scores.size()) +
                                    " treated/control/score entries");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
        if (!(p_treated[i] >= 0.0) || !(p_control[i] >= 0.0)) {
            throw std::invalid_argument("DiscreteJoint: negative probability at support point " +
                                        std::to_string(i));
        }
        total += p_treated[i] + p_control[i];
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("DiscreteJoint: probabilities sum to " +
                                    std::to_string(total));
    }
    if (treated_mass() <= 0.0 || control_mass() <= 0.0) {
        throw std::invalid_argument("DiscreteJoint: both arms must carry positive mass");
    }
    const std::size_t score_dim = scores.front().size();
    for (const auto& sc : scores) {
        if (sc.size() != score_dim || sc.empty()) {
            throw std::invalid_argument("DiscreteJoint: inconsistent score dimensions");
        }
    }
}

double linear_mmd(const EmpiricalPair& pair) {
    pair.validate();
    const std::size_t d = pair.treated_points.cols;
    std::vector<double> diff(d, 0.0);
    for (std::size_t i = 0; i < pair.treated_points.rows; ++i) {
        const double w = pair.treated_weights[i];
        const double* row = pair.treated_points.row(i);
        for (std::size_t k = 0; k < d; ++k) diff[k] += w * row[k];
    }
    for (std::size_t j = 0; j < pair.control_points.rows; ++j) {
        const double w = pair.control_weights[j];
        const double* row = pair.control_points.row(j);
        for (std::size_t k = 0; k < d; ++k) diff[k] -= w * row[k];
    }
    double acc = 0.0;
    for (double v : diff) acc += v * v;
    return std::sqrt(acc);
}

namespace {

// Successive shortest paths on the bipartite transportation graph.
// Node ids: 0..nt-1 treated (sources), nt..nt+nc-1 control (sinks).
struct TransportSolver {
    std::size_t nt, nc;
    std::vector<double> cost;    // nt x nc
    std::vector<double> flow;    // nt x nc
    std::vector<double> supply;  // remaining, per treated
    std::vector<double> demand;  // remaining, per control
    std::vector<double> pi;      // node potentials

    static constexpr double kExhausted = 1e-15;

    double& c(std::size_t i, std::size_t j) { return cost[i * nc + j]; }
    double& f(std::size_t i, std::size_t j) { return flow[i * nc + j]; }

    void solve() {
        const std::size_t nodes = nt + nc;
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> dist(nodes);
        std::vector<int> parent(nodes);
        std::vector<char> settled(nodes);
        const std::size_t max_rounds = nodes * nodes + 16;

        for (std::size_t round = 0;; ++round) {
            double remaining = 0.0;
            for (double s : supply) remaining += s;
            if (remaining <= 1e-12) break;
            if (round >= max_rounds) {
                throw std::runtime_error("wasserstein_exact: augmentation limit reached");
            }

            std::fill(dist.begin(), dist.end(), inf);
            std::fill(parent.begin(), parent.end(), -1);
            std::fill(settled.begin(), settled.end(), 0);
            using Entry = std::pair<double, std::size_t>;
            std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
            for (std::size_t i = 0; i < nt; ++i) {
                if (supply[i] > kExhausted) {
                    dist[i] = 0.0;
                    heap.push({0.0, i});
                }
            }
            std::size_t target = nodes;
            while (!heap.empty()) {
                const auto [du, u] = heap.top();
                heap.pop();
                if (settled[u]) continue;
                settled[u] = 1;
                if (u >= nt && demand[u - nt] > kExhausted) {
                    target = u;
                    break;
                }
                if (u < nt) {
                    for (std::size_t j = 0; j < nc; ++j) {
                        const std::size_t v = nt + j;
                        if (settled[v]) continue;
                        const double w = std::max(0.0, c(u, j) + pi[u] - pi[v]);
                        if (du + w < dist[v]) {
                            dist[v] = du + w;
                            parent[v] = static_cast<int>(u);
                            heap.push({dist[v], v});
                        }
                    }
                } else {
                    const std::size_t j = u - nt;
                    for (std::size_t i = 0; i < nt; ++i) {
                        if (settled[i] || f(i, j) <= kExhausted) continue;
                        const double w = std::max(0.0, -c(i, j) + pi[u] - pi[i]);
                        if (du + w < dist[i]) {
                            dist[i] = du + w;
                            parent[i] = static_cast<int>(u);
                            heap.push({dist[i], i});
                        }
                    }
                }
            }
            if (target == nodes) {
                // The two weight vectors sum to 1 only within a tolerance, so
                // a sliver of supply can outlive all demand. Anything larger
                // is a genuine failure.
                if (remaining <= 1e-8) break;
                throw std::runtime_error("wasserstein_exact: no augmenting path found with " +
                                         std::to_string(remaining) + " supply remaining");
            }
            const double dt = dist[target];
            for (std::size_t v = 0; v < nodes; ++v) pi[v] += std::min(dist[v], dt);

            // Bottleneck along the path: source supply, target demand, and
            // every backward arc's current flow.
            double delta = demand[target - nt];
            for (std::size_t v = target; parent[v] >= 0; v = static_cast<std::size_t>(parent[v])) {
                const std::size_t u = static_cast<std::size_t>(parent[v]);
                if (v < nt) delta = std::min(delta, f(v, u - nt));  // backward arc
            }
            {
                std::size_t v = target;
                while (parent[v] >= 0) v = static_cast<std::size_t>(parent[v]);
                delta = std::min(delta, supply[v]);
            }
            std::size_t v = target;
            while (parent[v] >= 0) {
                const std::size_t u = static_cast<std::size_t>(parent[v]);
                if (v >= nt) {
                    f(u, v - nt) += delta;
                } else {
                    f(v, u - nt) -= delta;
                    if (f(v, u - nt) < kExhausted) f(v, u - nt) = 0.0;
                }
                v = u;
            }
            supply[v] -= delta;
            if (supply[v] < kExhausted) supply[v] = 0.0;
            demand[target - nt] -= delta;
            if (demand[target - nt] < kExhausted) demand[target - nt] = 0.0;
        }
    }

    // Complementary slackness: reduced costs non-negative everywhere and zero
    // on every arc carrying flow.
    void certify(double tol) {
        for (std::size_t i = 0; i < nt; ++i) {
            for (std::size_t j = 0; j < nc; ++j) {
                const double rc = c(i, j) + pi[i] - pi[nt + j];
                if (rc < -tol || (f(i, j) > 1e-12 && std::abs(rc) > tol)) {
                    throw std::runtime_error(
                        "wasserstein_exact: optimality certificate failed, reduced cost " +
                        std::to_string(rc) + " on arc " + std::to_string(i) + "->" +
                        std::to_string(j));
                }
            }
        }
    }

    double total_cost() const {
        double acc = 0.0;
        for (std::size_t k = 0; k < cost.size(); ++k) acc += cost[k] * flow[k];
        return acc;
    }
};

}  // namespace

double wasserstein_exact(const EmpiricalPair& pair, std::size_t max_cost_entries) {
    pair.validate();
    const std::size_t nt = pair.treated_points.rows;
    const std::size_t nc = pair.control_points.rows;
    if (nt * nc > max_cost_entries) {
        throw std::invalid_argument("wasserstein_exact: problem size " + std::to_string(nt) +
                                    "x" + std::to_string(nc) + " exceeds the cap of " +
                                    std::to_string(max_cost_entries) + " cost entries");
    }
    const std::size_t d = pair.treated_points.cols;
    TransportSolver solver;
    solver.nt = nt;
    solver.nc = nc;
    solver.cost.resize(nt * nc);
    solver.flow.assign(nt * nc, 0.0);
    solver.supply = pair.treated_weights;
    solver.demand = pair.control_weights;
    solver.pi.assign(nt + nc, 0.0);
    for (std::size_t i = 0; i < nt; ++i) {
        for (std::size_t j = 0; j < nc; ++j) {
            solver.c(i, j) = euclidean(pair.treated_points.row(i), pair.control_points.row(j), d);
        }
    }
    solver.solve();
    solver.certify(1e-9);
    return solver.total_cost();
}

double wasserstein_bruteforce(const EmpiricalPair& pair) {
    pair.validate();
    const std::size_t n = pair.treated_points.rows;
    if (pair.control_points.rows != n) {
        throw std::invalid_argument("wasserstein_bruteforce: needs equal arm sizes, got " +
                                    std::to_string(n) + " and " +
                                    std::to_string(pair.control_points.rows));
    }
    if (n > 7) {
        throw std::invalid_argument("wasserstein_bruteforce: at most 7 points per arm, got " +
                                    std::to_string(n));
    }
    for (double w : pair.treated_weights) {
        if (std::abs(w - 1.0 / n) > 1e-12) {
            throw std::invalid_argument("wasserstein_bruteforce: weights must be uniform");
        }
    }
    for (double w : pair.control_weights) {
        if (std::abs(w - 1.0 / n) > 1e-12) {
            throw std::invalid_argument("wasserstein_bruteforce: weights must be uniform");
        }
    }
    const std::size_t d = pair.treated_points.cols;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += euclidean(pair.treated_points.row(i), pair.control_points.row(perm[i]), d);
        }
        best = std::min(best, total / static_cast<double>(n));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

namespace {

// Support indices grouped by identical score vectors, in lexicographic order.
std::map<std::vector<double>, std::vector<std::size_t>> group_by_score(
    const DiscreteJoint& joint) {
    std::map<std::vector<double>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < joint.scores.size(); ++i) {
        groups[joint.scores[i]].push_back(i);
    }
    return groups;
}

}  // namespace

double tv_discrete(const DiscreteJoint& joint, bool on_score) {
    joint.validate();
    const double pt = joint.treated_mass();
    const double pc = joint.control_mass();
    if (!on_score) {
        double acc = 0.0;
        for (std::size_t i = 0; i < joint.support.rows; ++i) {
            acc += std::abs(joint.p_treated[i] / pt - joint.p_control[i] / pc);
        }
        return 0.5 * acc;
    }
    double acc = 0.0;
    for (const auto& [score, members] : group_by_score(joint)) {
        double t = 0.0, c = 0.0;
        for (std::size_t i : members) {
            t += joint.p_treated[i];
            c += joint.p_control[i];
        }
        acc += std::abs(t / pt - c / pc);
    }
    return 0.5 * acc;
}

double sample_imbalance(const Dataset& data, const MatchWeights& weights) {
    const auto treated = data.treated_indices();
    if (treated.empty()) {
        throw std::invalid_argument("sample_imbalance: no treated units");
    }
    double total_weight = 0.0;
    for (const auto& [j, wj] : weights.aggregated) {
        if (j >= data.n()) {
            throw std::invalid_argument("sample_imbalance: control index " + std::to_string(j) +
                                        " out of range");
        }
        total_weight += wj;
    }
    if (total_weight <= 0.0) {
        throw std::invalid_argument("sample_imbalance: aggregated weights are all zero");
    }
    const std::size_t d = data.dim();
    // Sums first, one division at the end: exact-duplicate matchings then
    // cancel bit for bit instead of leaving per-term rounding residue.
    std::vector<double> sum_t(d, 0.0);
    std::vector<double> sum_c(d, 0.0);
    for (std::size_t i : treated) {
        const double* row = data.x.row(i);
        for (std::size_t k = 0; k < d; ++k) sum_t[k] += row[k];
    }
    for (const auto& [j, wj] : weights.aggregated) {
        const double* row = data.x.row(j);
        for (std::size_t k = 0; k < d; ++k) sum_c[k] += wj * row[k];
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double v = sum_t[k] / static_cast<double>(treated.size()) - sum_c[k] / total_weight;
        acc += v * v;
    }
    return acc;
}

double calibration_error(const std::vector<double>& estimated, const std::vector<double>& truth) {
    if (estimated.size() != truth.size() || estimated.empty()) {
        throw std::invalid_argument("calibration_error: size mismatch, " +
                                    std::to_string(estimated.size()) + " vs " +
                                    std::to_string(truth.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < estimated.size(); ++i) {
        if (!std::isfinite(estimated[i]) || !std::isfinite(truth[i])) {
            throw std::invalid_argument("calibration_error: non-finite value at index " +
                                        std::to_string(i));
        }
        acc += std::abs(estimated[i] - truth[i]);
    }
    return acc / static_cast<double>(estimated.size());
}

ConditionalGapReport conditional_independence_gap(const DiscreteJoint& joint) {
    joint.validate();
    const double arm_total[2] = {joint.control_mass(), joint.treated_mass()};
    ConditionalGapReport report;

    for (const auto& [score, members] : group_by_score(joint)) {
        double level_mass[2] = {0.0, 0.0};
        for (std::size_t i : members) {
            level_mass[0] += joint.p_control[i];
            level_mass[1] += joint.p_treated[i];
        }
        const double pooled_mass = level_mass[0] + level_mass[1];

        Matrix points(members.size(), joint.support.cols);
        std::vector<double> pooled(members.size());
        for (std::size_t k = 0; k < members.size(); ++k) {
            const std::size_t i = members[k];
            for (std::size_t c = 0; c < joint.support.cols; ++c) {
                points.at(k, c) = joint.support.at(i, c);
            }
            pooled[k] = (joint.p_control[i] + joint.p_treated[i]) / pooled_mass;
        }

        for (int arm = 0; arm < 2; ++arm) {
            ConditionalGapCell cell;
            cell.score = score;
            cell.arm = arm;
            cell.arm_mass = level_mass[arm] / arm_total[arm];
            if (level_mass[arm] <= 0.0) {
                cell.defined = false;
                report.cells.push_back(std::move(cell));
                continue;
            }
            cell.defined = true;
            std::vector<double> cond(members.size());
            for (std::size_t k = 0; k < members.size(); ++k) {
                const std::size_t i = members[k];
                const double p = (arm == 1 ? joint.p_treated[i] : joint.p_control[i]);
                cond[k] = p / level_mass[arm];
            }
            double tv = 0.0;
            for (std::size_t k = 0; k < members.size(); ++k) {
                tv += std::abs(cond[k] - pooled[k]);
            }
            cell.tv = 0.5 * tv;

            EmpiricalPair pair;
            pair.treated_points = points;
            pair.control_points = points;
            pair.treated_weights = cond;
            pair.control_weights = pooled;
            cell.mmd = linear_mmd(pair);
            cell.wasserstein = wasserstein_exact(pair);

            report.expected_tv[arm] += cell.arm_mass * cell.tv;
            report.expected_mmd[arm] += cell.arm_mass * cell.mmd;
            report.expected_wasserstein[arm] += cell.arm_mass * cell.wasserstein;
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

double ConditionalGapReport::max_gap() const {
    double worst = 0.0;
    for (const auto& cell : cells) {
        if (!cell.defined) continue;
        worst = std::max({worst, cell.tv, cell.mmd, cell.wasserstein});
    }
    return worst;
}

}  // namespace scorematch
