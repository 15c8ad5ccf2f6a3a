#pragma once

#include <utility>
#include <vector>

#include "uvatar/uv_atlas.hpp"

namespace uvatar {

/// Directed graph with non-negative arc capacities and two terminals.
struct FlowNetwork {
    struct Arc {
        int from = 0;
        int to = 0;
        double capacity = 0.0;
    };

    int num_nodes = 0;
    int source = 0;
    int sink = 1;
    std::vector<Arc> arcs;

    FlowNetwork() = default;
    FlowNetwork(int nodes, int s, int t) : num_nodes(nodes), source(s), sink(t) {}

    void add_arc(int from, int to, double capacity) { arcs.push_back({from, to, capacity}); }
    /// Throws InputError on bad endpoints, negative or non-finite capacities.
    void validate() const;
};

struct MaxFlowResult {
    double value = 0.0;
    std::vector<bool> source_side;  // minimum cut: nodes reachable from the source in the residual graph
};

/// Dinic's algorithm.
MaxFlowResult max_flow(const FlowNetwork& network);

/// Total capacity of arcs leaving the source side.
double cut_capacity(const FlowNetwork& network, const std::vector<bool>& source_side);

/// Potts MRF: E(l) = sum_i unary(i, l_i) + smoothness * #{(i, j) in edges : l_i != l_j}.
struct MrfProblem {
    int num_labels = 0;
    Eigen::MatrixXd unary;  // nodes x labels
    std::vector<std::pair<int, int>> edges;
    double smoothness = 1.0;

    int num_nodes() const { return int(unary.rows()); }
    void validate() const;
};

double mrf_energy(const MrfProblem& problem, const Eigen::VectorXi& labels);

struct ExpansionResult {
    Eigen::VectorXi labels;
    double energy = 0.0;
    int cycles = 0;
    int accepted_moves = 0;
    std::vector<double> trace;  // energy at start and after every accepted move
};

/// Alpha-expansion with exact max-flow moves; a move is kept only when it
/// strictly lowers the energy. Stops after a cycle without improvement.
ExpansionResult alpha_expansion(const MrfProblem& problem, const Eigen::VectorXi& init, int max_cycles = 100);

/// Per-texel unaries W(t) - sum_v w_v(t) [label_v(t) = l]. Texels no view sees
/// get all-zero rows. Contributions are summed in sorted order so the result
/// does not depend on the order of `views`.
Eigen::MatrixXd build_unary(const std::vector<ViewLabels>& views, int num_labels);

struct StitchOptions {
    double smoothness = 1.0;
    int max_cycles = 100;
};

/// Fuses per-view label maps into one labelling of every valid texel of
/// `table`, using the surface graph (grid plus seam links) as neighbourhood.
SegmentationMap stitch_segmentations(const std::vector<ViewLabels>& views, const TexelTable& table, int num_labels,
                                     const StitchOptions& options = {});

/// Per-texel argmax over `scores` (R*R x L), ties to the lowest label. All texels valid.
SegmentationMap discretize(const Eigen::MatrixXd& scores, int resolution);

}  // namespace uvatar
