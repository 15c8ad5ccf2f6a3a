#include "uvatar/seg_stitch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

namespace uvatar {

void FlowNetwork::validate() const {
    if (num_nodes < 2) throw InputError("flow network needs at least two nodes");
    if (source < 0 || source >= num_nodes || sink < 0 || sink >= num_nodes || source == sink) {
        throw InputError("flow network: invalid source/sink");
    }
    for (size_t i = 0; i < arcs.size(); ++i) {
        const Arc& a = arcs[i];
        if (a.from < 0 || a.from >= num_nodes || a.to < 0 || a.to >= num_nodes) {
            throw InputError("flow network: arc " + std::to_string(i) + " has an endpoint out of range");
        }
        if (!(a.capacity >= 0.0) || !std::isfinite(a.capacity)) {
            throw InputError("flow network: arc " + std::to_string(i) + " has an invalid capacity");
        }
    }
}

namespace {

class Dinic {
public:
    explicit Dinic(const FlowNetwork& net) : n_(net.num_nodes), head_(net.num_nodes + 1, 0) {
        double max_cap = 0.0;
        for (const auto& a : net.arcs) {
            ++head_[a.from + 1];
            ++head_[a.to + 1];
            max_cap = std::max(max_cap, a.capacity);
        }
        for (int v = 0; v < n_; ++v) head_[v + 1] += head_[v];
        const size_t m = 2 * net.arcs.size();
        to_.resize(m);
        from_.resize(m);
        residual_.resize(m);
        pair_.resize(m);
        std::vector<int> fill(head_.begin(), head_.end() - 1);
        for (const auto& a : net.arcs) {
            const int e = fill[a.from]++;
            const int r = fill[a.to]++;
            to_[e] = a.to;
            from_[e] = a.from;
            residual_[e] = a.capacity;
            pair_[e] = r;
            to_[r] = a.from;
            from_[r] = a.to;
            residual_[r] = 0.0;
            pair_[r] = e;
        }
        eps_ = 1e-12 * std::max(max_cap, 1e-300);
    }

    double run(int s, int t) {
        double flow = 0.0;
        std::vector<int> iter(n_);
        std::vector<int> path;
        while (bfs(s, t)) {
            for (int v = 0; v < n_; ++v) iter[v] = head_[v];
            path.clear();
            int v = s;
            while (true) {
                if (v == t) {
                    double bottleneck = std::numeric_limits<double>::infinity();
                    for (int e : path) bottleneck = std::min(bottleneck, residual_[e]);
                    size_t cut = path.size();
                    for (size_t k = 0; k < path.size(); ++k) {
                        const int e = path[k];
                        residual_[e] -= bottleneck;
                        residual_[pair_[e]] += bottleneck;
                        if (residual_[e] <= eps_ && cut == path.size()) cut = k;
                    }
                    flow += bottleneck;
                    path.resize(cut);
                    v = path.empty() ? s : to_[path.back()];
                    continue;
                }
                int& e = iter[v];
                while (e < head_[v + 1] && !(residual_[e] > eps_ && level_[to_[e]] == level_[v] + 1)) ++e;
                if (e < head_[v + 1]) {
                    path.push_back(e);
                    v = to_[e];
                } else {
                    if (v == s) break;
                    level_[v] = -1;
                    const int back = path.back();
                    path.pop_back();
                    v = from_[back];
                    ++iter[v];
                }
            }
        }
        return flow;
    }

    std::vector<bool> source_side(int s) const {
        std::vector<bool> seen(n_, false);
        std::vector<int> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int e = head_[v]; e < head_[v + 1]; ++e) {
                if (residual_[e] > eps_ && !seen[to_[e]]) {
                    seen[to_[e]] = true;
                    stack.push_back(to_[e]);
                }
            }
        }
        return seen;
    }

private:
    bool bfs(int s, int t) {
        level_.assign(n_, -1);
        std::queue<int> queue;
        level_[s] = 0;
        queue.push(s);
        while (!queue.empty()) {
            const int v = queue.front();
            queue.pop();
            for (int e = head_[v]; e < head_[v + 1]; ++e) {
                if (residual_[e] > eps_ && level_[to_[e]] < 0) {
                    level_[to_[e]] = level_[v] + 1;
                    queue.push(to_[e]);
                }
            }
        }
        return level_[t] >= 0;
    }

    int n_;
    std::vector<int> head_;
    std::vector<int> to_, from_, pair_;
    std::vector<double> residual_;
    std::vector<int> level_;
    double eps_ = 0.0;
};

}  // namespace

MaxFlowResult max_flow(const FlowNetwork& network) {
    network.validate();
    Dinic dinic(network);
    MaxFlowResult result;
    result.value = dinic.run(network.source, network.sink);
    result.source_side = dinic.source_side(network.source);
    return result;
}

double cut_capacity(const FlowNetwork& network, const std::vector<bool>& source_side) {
    if (int(source_side.size()) != network.num_nodes) throw InputError("cut_capacity: partition size mismatch");
    double sum = 0.0;
    for (const auto& a : network.arcs) {
        if (source_side[a.from] && !source_side[a.to]) sum += a.capacity;
    }
    return sum;
}

void MrfProblem::validate() const {
    if (num_labels <= 0) throw InputError("MRF: label count must be positive");
    if (unary.cols() != num_labels) throw InputError("MRF: unary table must have one column per label");
    if (!unary.allFinite() || (unary.array() < 0.0).any()) throw InputError("MRF: unary costs must be finite and >= 0");
    if (!(smoothness >= 0.0) || !std::isfinite(smoothness)) throw InputError("MRF: smoothness must be >= 0");
    const int n = num_nodes();
    for (const auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n || b >= n || a == b) throw InputError("MRF: invalid edge");
    }
}

double mrf_energy(const MrfProblem& problem, const Eigen::VectorXi& labels) {
    if (labels.size() != problem.num_nodes()) throw InputError("MRF: labelling size mismatch");
    double e = 0.0;
    for (int i = 0; i < problem.num_nodes(); ++i) {
        if (labels(i) < 0 || labels(i) >= problem.num_labels) throw InputError("MRF: label out of range");
        e += problem.unary(i, labels(i));
    }
    int cuts = 0;
    for (const auto& [a, b] : problem.edges) cuts += labels(a) != labels(b);
    return e + problem.smoothness * cuts;
}

namespace {

// Binary move: x_i = 0 keeps the current label, x_i = 1 switches to alpha.
// Nodes on the source side take x = 0.
Eigen::VectorXi expansion_move(const MrfProblem& problem, const Eigen::VectorXi& labels, int alpha) {
    const int n = problem.num_nodes();
    const double lambda = problem.smoothness;
    std::vector<double> linear(n, 0.0);  // coefficient of x_i
    FlowNetwork net(n + 2, n, n + 1);
    for (int i = 0; i < n; ++i) linear[i] = problem.unary(i, alpha) - problem.unary(i, labels(i));
    for (const auto& [i, j] : problem.edges) {
        const int li = labels(i);
        const int lj = labels(j);
        const double a = lambda * (li != lj);
        const double b = lambda * (li != alpha);
        const double c = lambda * (alpha != lj);
        const double d = 0.0;
        // E = a + (c - a) x_i + (d - c) x_j + (b + c - a - d)(1 - x_i) x_j
        linear[i] += c - a;
        linear[j] += d - c;
        const double w = b + c - a - d;
        if (w > 0.0) net.add_arc(i, j, w);
    }
    for (int i = 0; i < n; ++i) {
        if (linear[i] > 0.0) net.add_arc(n, i, linear[i]);
        else if (linear[i] < 0.0) net.add_arc(i, n + 1, -linear[i]);
    }
    const MaxFlowResult cut = max_flow(net);
    Eigen::VectorXi out = labels;
    for (int i = 0; i < n; ++i) {
        if (!cut.source_side[i]) out(i) = alpha;
    }
    return out;
}

}  // namespace

ExpansionResult alpha_expansion(const MrfProblem& problem, const Eigen::VectorXi& init, int max_cycles) {
    problem.validate();
    ExpansionResult result;
    result.labels = init;
    result.energy = mrf_energy(problem, init);
    result.trace.push_back(result.energy);
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        ++result.cycles;
        bool improved = false;
        for (int alpha = 0; alpha < problem.num_labels; ++alpha) {
            const Eigen::VectorXi candidate = expansion_move(problem, result.labels, alpha);
            const double e = mrf_energy(problem, candidate);
            if (e < result.energy - 1e-12 * std::max(1.0, std::abs(result.energy))) {
                result.labels = candidate;
                result.energy = e;
                result.trace.push_back(e);
                ++result.accepted_moves;
                improved = true;
            }
        }
        if (!improved) break;
    }
    return result;
}

Eigen::MatrixXd build_unary(const std::vector<ViewLabels>& views, int num_labels) {
    if (num_labels <= 0) throw InputError("build_unary: label count must be positive");
    if (views.empty()) throw InputError("build_unary: no views");
    const int r = views.front().map.resolution;
    const int size = r * r;
    for (size_t v = 0; v < views.size(); ++v) {
        const auto& view = views[v];
        if (view.map.resolution != r) {
            throw InputError("build_unary: view " + std::to_string(v) + " has resolution " +
                             std::to_string(view.map.resolution) + ", expected " + std::to_string(r));
        }
        if (view.weight.size() != size) throw InputError("build_unary: weight map size mismatch in view " + std::to_string(v));
        if (!view.weight.allFinite() || (view.weight.array() < 0.0).any()) {
            throw InputError("build_unary: weights must be finite and >= 0 (view " + std::to_string(v) + ")");
        }
    }
    Eigen::MatrixXd unary = Eigen::MatrixXd::Zero(size, num_labels);
    std::vector<std::pair<int, double>> votes;
    std::vector<double> per_label;
    for (int t = 0; t < size; ++t) {
        votes.clear();
        for (const auto& view : views) {
            if (!view.map.valid(t) || !(view.weight(t) > 0.0)) continue;
            const int label = view.map.labels(t);
            if (label < 0 || label >= num_labels) throw InputError("build_unary: label out of range at texel " + std::to_string(t));
            votes.emplace_back(label, view.weight(t));
        }
        if (votes.empty()) continue;
        std::sort(votes.begin(), votes.end());
        per_label.assign(num_labels, 0.0);
        for (const auto& [label, w] : votes) per_label[label] += w;
        double total = 0.0;
        for (double w : per_label) total += w;
        for (int l = 0; l < num_labels; ++l) unary(t, l) = std::max(0.0, total - per_label[l]);
    }
    return unary;
}

SegmentationMap stitch_segmentations(const std::vector<ViewLabels>& views, const TexelTable& table, int num_labels,
                                     const StitchOptions& options) {
    const Eigen::MatrixXd unary = build_unary(views, num_labels);
    if (views.front().map.resolution != table.resolution) {
        throw InputError("stitch: views have resolution " + std::to_string(views.front().map.resolution) +
                         " but the atlas table has " + std::to_string(table.resolution));
    }
    std::vector<int> node_of(table.size(), -1);
    std::vector<int> texel_of;
    for (int t = 0; t < table.size(); ++t) {
        if (table.valid(t)) {
            node_of[t] = int(texel_of.size());
            texel_of.push_back(t);
        }
    }
    MrfProblem problem;
    problem.num_labels = num_labels;
    problem.smoothness = options.smoothness;
    problem.unary.resize(Eigen::Index(texel_of.size()), num_labels);
    for (size_t i = 0; i < texel_of.size(); ++i) problem.unary.row(Eigen::Index(i)) = unary.row(texel_of[i]);
    for (const auto& [a, b] : surface_edges(table)) problem.edges.emplace_back(node_of[a], node_of[b]);

    Eigen::VectorXi init(problem.num_nodes());
    for (int i = 0; i < problem.num_nodes(); ++i) {
        Eigen::Index best = 0;
        problem.unary.row(i).minCoeff(&best);
        init(i) = int(best);
    }
    const ExpansionResult solved = alpha_expansion(problem, init, options.max_cycles);
    SegmentationMap out(table.resolution, num_labels);
    for (size_t i = 0; i < texel_of.size(); ++i) {
        out.labels(texel_of[i]) = solved.labels(Eigen::Index(i));
        out.valid(texel_of[i]) = true;
    }
    return out;
}

SegmentationMap discretize(const Eigen::MatrixXd& scores, int resolution) {
    if (resolution <= 0 || scores.rows() != Eigen::Index(resolution) * resolution || scores.cols() <= 0) {
        throw InputError("discretize: scores must be R*R x L");
    }
    if (!scores.allFinite()) throw InputError("discretize: scores must be finite");
    SegmentationMap out(resolution, int(scores.cols()));
    for (Eigen::Index t = 0; t < scores.rows(); ++t) {
        int best = 0;
        for (Eigen::Index l = 1; l < scores.cols(); ++l) {
            if (scores(t, l) > scores(t, best)) best = int(l);
        }
        out.labels(t) = best;
        out.valid(t) = true;
    }
    return out;
}

}  // namespace uvatar
