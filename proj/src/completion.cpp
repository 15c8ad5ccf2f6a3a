#include "uvatar/completion.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace uvatar {

bool DisplacementPrior::has_label(int label) const {
    return label >= 0 && label < num_labels() && fields[label].valid.any();
}

std::unique_ptr<CompletionModel> make_completion_model(const std::string& name) {
    if (name == "baseline") return std::make_unique<BaselineCompletion>();
    throw InputError("unknown completion model '" + name + "' (available: baseline)");
}

namespace {

void check_resolution(int a, int b, const char* what) {
    if (a != b) {
        throw InputError(std::string(what) + ": resolution " + std::to_string(a) + " does not match " +
                         std::to_string(b));
    }
}

Eigen::MatrixXd colors_to_real(const TextureMap& tex) { return tex.color.cast<double>(); }

std::uint8_t to_byte(double x) { return std::uint8_t(std::lround(std::clamp(x, 0.0, 255.0))); }

}  // namespace

TextureMap mirror_fill(const TextureMap& partial, const TexelTable& table) {
    check_resolution(partial.resolution, table.resolution, "mirror fill");
    TextureMap out = partial;
    for (int t = 0; t < partial.size(); ++t) {
        const int m = table.mirror[t];
        if (!partial.valid(t) && m >= 0 && partial.valid(m)) {
            out.color.row(t) = partial.color.row(m);
            out.valid(t) = true;
        }
    }
    return out;
}

SegmentationMap mirror_fill(const SegmentationMap& partial, const TexelTable& table) {
    check_resolution(partial.resolution, table.resolution, "mirror fill");
    SegmentationMap out = partial;
    for (int t = 0; t < partial.size(); ++t) {
        const int m = table.mirror[t];
        if (!partial.valid(t) && m >= 0 && partial.valid(m)) {
            out.labels(t) = partial.labels(m);
            out.valid(t) = true;
        }
    }
    return out;
}

Eigen::MatrixXd diffuse_fill(const Eigen::MatrixXd& values, const Mask& known, const TexelGraph& graph) {
    const int n = graph.num_nodes();
    if (values.rows() != n || known.size() != n) throw InputError("diffuse fill: values, mask and graph sizes differ");
    const Eigen::Index num_known = known.count();
    if (num_known == 0) throw InputError("diffuse fill: no valid texels to diffuse from");

    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(values.cols());
    for (int i = 0; i < n; ++i) {
        if (known(i)) mean += values.row(i);
    }
    mean /= double(num_known);

    // Components that touch at least one known node get the harmonic solve.
    std::vector<int> component(n, -1);
    std::vector<bool> anchored;
    for (int s = 0; s < n; ++s) {
        if (component[s] >= 0) continue;
        const int c = int(anchored.size());
        bool has_known = false;
        std::vector<int> stack{s};
        component[s] = c;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            has_known = has_known || known(u);
            for (const int* it = graph.begin(u); it != graph.end(u); ++it) {
                if (component[*it] < 0) {
                    component[*it] = c;
                    stack.push_back(*it);
                }
            }
        }
        anchored.push_back(has_known);
    }

    Eigen::MatrixXd out = values;
    std::vector<int> unknown(n, -1);
    int count = 0;
    for (int i = 0; i < n; ++i) {
        if (known(i)) continue;
        if (anchored[component[i]]) {
            unknown[i] = count++;
        } else {
            out.row(i) = mean;
        }
    }
    if (count == 0) return out;

    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(count, values.cols());
    for (int i = 0; i < n; ++i) {
        const int row = unknown[i];
        if (row < 0) continue;
        triplets.emplace_back(row, row, double(graph.degree(i)));
        for (const int* it = graph.begin(i); it != graph.end(i); ++it) {
            if (known(*it)) {
                rhs.row(row) += values.row(*it);
            } else {
                triplets.emplace_back(row, unknown[*it], -1.0);
            }
        }
    }
    Eigen::SparseMatrix<double> laplacian(count, count);
    laplacian.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(laplacian);
    if (solver.info() != Eigen::Success) throw Error("diffuse fill: Laplacian factorization failed");
    const Eigen::MatrixXd solution = solver.solve(rhs);
    for (int i = 0; i < n; ++i) {
        if (unknown[i] >= 0) out.row(i) = solution.row(unknown[i]);
    }
    return out;
}

TextureMap diffuse_fill(const TextureMap& partial, const TexelGraph& graph) {
    const Eigen::MatrixXd filled = diffuse_fill(colors_to_real(partial), partial.valid, graph);
    TextureMap out = partial;
    for (int t = 0; t < partial.size(); ++t) {
        if (partial.valid(t)) continue;
        for (int c = 0; c < 3; ++c) out.color(t, c) = to_byte(filled(t, c));
    }
    out.valid.setConstant(true);
    return out;
}

Eigen::VectorXi propagate_labels(const Eigen::VectorXi& labels, const Mask& known, const TexelGraph& graph,
                                 Mask& reached) {
    const int n = graph.num_nodes();
    if (labels.size() != n || known.size() != n) throw InputError("label propagation: sizes differ");
    Eigen::VectorXi out = labels;
    std::vector<int> dist(n, -1);
    std::vector<int> frontier;
    for (int i = 0; i < n; ++i) {
        if (known(i)) {
            dist[i] = 0;
            frontier.push_back(i);
        }
    }
    for (int d = 0; !frontier.empty(); ++d) {
        std::vector<int> next;
        for (int u : frontier) {
            for (const int* it = graph.begin(u); it != graph.end(u); ++it) {
                const int v = *it;
                if (dist[v] < 0) {
                    dist[v] = d + 1;
                    out(v) = out(u);
                    next.push_back(v);
                } else if (dist[v] == d + 1) {
                    out(v) = std::min(out(v), out(u));
                }
            }
        }
        frontier = std::move(next);
    }
    reached = Mask(n);
    for (int i = 0; i < n; ++i) reached(i) = dist[i] >= 0;
    return out;
}

TextureMap BaselineCompletion::complete_texture(const TextureMap& partial, const TexelTable& table) const {
    check_resolution(partial.resolution, table.resolution, "texture completion");
    const TextureMap mirrored = mirror_fill(partial, table);
    if (mirrored.valid.all()) return mirrored;
    if (mirrored.num_valid() == 0) throw InputError("texture completion: no valid texels");

    // Fill the surface first (seam-aware), then the gutters between charts.
    Eigen::MatrixXd values = colors_to_real(mirrored);
    const Eigen::MatrixXd on_surface = diffuse_fill(values, mirrored.valid, surface_graph(table));
    Mask known = mirrored.valid;
    for (int t = 0; t < table.size(); ++t) {
        if (table.valid(t) && !known(t)) {
            values.row(t) = on_surface.row(t);
            known(t) = true;
        }
    }
    const Eigen::MatrixXd everywhere = diffuse_fill(values, known, grid_graph(table.resolution));
    TextureMap out = mirrored;
    for (int t = 0; t < table.size(); ++t) {
        if (mirrored.valid(t)) continue;
        for (int c = 0; c < 3; ++c) out.color(t, c) = to_byte(everywhere(t, c));
    }
    out.valid.setConstant(true);
    return out;
}

SegmentationMap BaselineCompletion::complete_segmentation(const SegmentationMap& partial,
                                                          const TexelTable& table) const {
    check_resolution(partial.resolution, table.resolution, "segmentation completion");
    partial.validate();
    const SegmentationMap mirrored = mirror_fill(partial, table);
    if (mirrored.valid.all()) return mirrored;
    if (mirrored.num_valid() == 0) throw InputError("segmentation completion: no valid texels");

    Mask reached;
    Eigen::VectorXi labels = propagate_labels(mirrored.labels, mirrored.valid, surface_graph(table), reached);
    Mask known = mirrored.valid;
    for (int t = 0; t < table.size(); ++t) {
        if (table.valid(t) && reached(t)) known(t) = true;
    }
    labels = propagate_labels(labels, known, grid_graph(table.resolution), reached);
    SegmentationMap out = mirrored;
    out.labels = labels;
    out.valid = reached;
    if (!out.valid.all()) throw Error("segmentation completion: texel grid is disconnected");
    return out;
}

DisplacementMap BaselineCompletion::predict_displacement(const SegmentationMap& seg,
                                                         const DisplacementPrior& prior) const {
    check_resolution(seg.resolution, prior.resolution, "displacement prediction");
    const int r = seg.resolution;
    const int n = r * r;
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(n, 3);
    for (int t = 0; t < n; ++t) {
        if (!seg.valid(t)) continue;
        const int l = seg.labels(t);
        if (l >= 0 && l < prior.num_labels() && prior.fields[l].valid(t)) {
            values.row(t) = prior.fields[l].decode(t).transpose();
        }
    }
    // One relaxation pass on texels whose 4-neighbourhood crosses a label boundary.
    Eigen::MatrixXd relaxed = values;
    for (int t = 0; t < n; ++t) {
        if (!seg.valid(t)) continue;
        const int x = t % r, y = t / r;
        bool boundary = false;
        Eigen::RowVector3d sum = Eigen::RowVector3d::Zero();
        int count = 0;
        const int nbrs[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
        for (const auto& nb : nbrs) {
            if (nb[0] < 0 || nb[1] < 0 || nb[0] >= r || nb[1] >= r) continue;
            const int u = nb[1] * r + nb[0];
            if (!seg.valid(u)) continue;
            boundary = boundary || seg.labels(u) != seg.labels(t);
            sum += values.row(u);
            ++count;
        }
        if (boundary) relaxed.row(t) = 0.5 * values.row(t) + 0.5 * sum / double(count);
    }
    double scale = prior.cap;
    for (const auto& f : prior.fields) scale = std::max(scale, f.scale);
    DisplacementMap out(r, scale);
    const double limit = prior.cap - 2.0 * scale / DisplacementMap::kQuantMax;
    for (int t = 0; t < n; ++t) {
        Vec3 v = relaxed.row(t).transpose();
        const double norm = v.norm();
        if (norm > limit) v *= limit / norm;
        out.encode(t, v);
    }
    return out;
}

DisplacementPrior fit_displacement_prior(const std::vector<std::pair<SegmentationMap, DisplacementMap>>& pairs,
                                         double cap) {
    if (pairs.empty()) throw InputError("displacement prior: need at least one (segmentation, displacement) pair");
    if (!(cap > 0.0)) throw InputError("displacement prior: cap must be positive");
    const int r = pairs.front().first.resolution;
    const int num_labels = pairs.front().first.num_labels;
    double scale = cap;
    for (const auto& [seg, disp] : pairs) {
        check_resolution(seg.resolution, r, "displacement prior segmentation");
        check_resolution(disp.resolution, r, "displacement prior displacement");
        if (seg.num_labels != num_labels) throw InputError("displacement prior: palettes differ between pairs");
        scale = std::max(scale, disp.scale);
    }
    const int n = r * r;
    std::vector<Eigen::MatrixXd> sums(num_labels, Eigen::MatrixXd::Zero(n, 3));
    std::vector<Eigen::VectorXi> counts(num_labels, Eigen::VectorXi::Zero(n));
    for (const auto& [seg, disp] : pairs) {
        for (int t = 0; t < n; ++t) {
            if (!seg.valid(t) || !disp.valid(t)) continue;
            const int l = seg.labels(t);
            if (l < 0 || l >= num_labels) throw InputError("displacement prior: label outside the palette");
            sums[l].row(t) += disp.decode(t).transpose();
            ++counts[l](t);
        }
    }
    DisplacementPrior prior;
    prior.resolution = r;
    prior.cap = cap;
    for (int l = 0; l < num_labels; ++l) {
        DisplacementMap field(r, scale);
        for (int t = 0; t < n; ++t) {
            if (counts[l](t) > 0) field.encode(t, sums[l].row(t).transpose() / double(counts[l](t)));
        }
        prior.fields.push_back(std::move(field));
    }
    return prior;
}

LimbField compute_limb_field(const BodyTemplate& body, const TexelTable& table) {
    const PointCloud rest = joints<double>(body, Eigen::VectorXd::Zero(body.num_shape()));
    LimbField field;
    field.limb.assign(table.size(), -1);
    field.coordinate = Eigen::VectorXd::Zero(table.size());
    for (int t = 0; t < table.size(); ++t) {
        if (!table.valid(t)) continue;
        const int f = table.face[t];
        Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(body.num_joints());
        for (int k = 0; k < 3; ++k) w += table.barycentric(t, k) * body.skin_weights.row(body.faces(f, k));
        Eigen::Index joint = 0;
        w.maxCoeff(&joint);
        const int limb = limb_of_joint(body, int(joint));
        if (limb < 0) continue;
        field.limb[t] = limb;
        field.coordinate(t) = limb_coordinate(rest, body.limbs[limb], table.surface_point(t, body.vertices, body.faces));
    }
    return field;
}

Mask blend_band(const SegmentationMap& seg, int label) {
    const int r = seg.resolution;
    const int n = r * r;
    std::vector<int> dist(n, -1);
    std::deque<int> queue;
    for (int t = 0; t < n; ++t) {
        if (!(seg.valid(t) && seg.labels(t) == label)) {
            dist[t] = 0;
            queue.push_back(t);
        }
    }
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        if (dist[u] >= 2) continue;
        const int x = u % r, y = u / r;
        const int nbrs[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
        for (const auto& nb : nbrs) {
            if (nb[0] < 0 || nb[1] < 0 || nb[0] >= r || nb[1] >= r) continue;
            const int v = nb[1] * r + nb[0];
            if (dist[v] >= 0) continue;
            dist[v] = dist[u] + 1;
            queue.push_back(v);
        }
    }
    Mask band(n);
    for (int t = 0; t < n; ++t) band(t) = dist[t] >= 1 && dist[t] <= 2;
    return band;
}

TextureMap edit_texture_region(const TextureMap& texture, const SegmentationMap& seg, int label, const RgbImage& swatch,
                               const TexelTable& table, const CompletionModel& model) {
    check_resolution(texture.resolution, seg.resolution, "texture edit");
    if (label < 0 || label >= seg.num_labels) throw InputError("texture edit: unknown label " + std::to_string(label));
    if (swatch.width <= 0 || swatch.height <= 0) throw InputError("texture edit: empty swatch");
    const int r = texture.resolution;
    TextureMap out = texture;
    bool any = false;
    for (int t = 0; t < out.size(); ++t) {
        if (!(seg.valid(t) && seg.labels(t) == label)) continue;
        const int x = t % r, y = t / r;
        out.color.row(t) = swatch.pixels.row(swatch.index(x % swatch.width, y % swatch.height));
        out.valid(t) = true;
        any = true;
    }
    if (!any) return texture;
    const Mask band = blend_band(seg, label);
    for (int t = 0; t < out.size(); ++t) {
        if (band(t)) {
            out.valid(t) = false;
            out.color.row(t).setZero();
        }
    }
    return model.complete_texture(out, table);
}

SegmentationMap edit_garment_length(const SegmentationMap& seg, int label, double t, const ModelDescriptor& model,
                                    const TexelTable& table) {
    check_resolution(seg.resolution, table.resolution, "length edit");
    if (label < 0 || label >= int(model.palette.size())) {
        throw InputError("length edit: unknown label " + std::to_string(label));
    }
    const LabelInfo& info = model.palette[label];
    if (!info.garment || info.limb_group.empty()) {
        throw InputError("length edit: label '" + info.name + "' is not a garment covering a limb");
    }
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("length edit: t must lie in [0, 1]");
    const int skin = find_label(model.palette, "skin");
    if (skin < 0) throw InputError("length edit: palette has no skin label");
    const LimbField field = compute_limb_field(model.body, table);
    SegmentationMap out = seg;
    for (int i = 0; i < seg.size(); ++i) {
        if (!seg.valid(i) || field.limb[i] < 0) continue;
        if (model.body.limbs[field.limb[i]].group != info.limb_group) continue;
        out.labels(i) = (field.coordinate(i) < t || t >= 1.0) ? label : skin;
    }
    return out;
}

SwapResult swap_garments(const TextureMap& tex_a, const SegmentationMap& seg_a, const TextureMap& tex_b,
                         const SegmentationMap& seg_b, const std::vector<int>& labels, const TexelTable& table,
                         const CompletionModel& model) {
    check_resolution(tex_a.resolution, seg_a.resolution, "garment swap");
    check_resolution(tex_b.resolution, seg_b.resolution, "garment swap");
    check_resolution(tex_a.resolution, tex_b.resolution, "garment swap");
    if (seg_a.num_labels != seg_b.num_labels) throw InputError("garment swap: label palettes differ");
    auto selected = [&](int l) { return std::find(labels.begin(), labels.end(), l) != labels.end(); };
    SwapResult out{tex_a, seg_a};
    bool invalidated = false;
    for (int t = 0; t < tex_a.size(); ++t) {
        const bool from_b = seg_b.valid(t) && selected(seg_b.labels(t));
        if (from_b) {
            out.texture.color.row(t) = tex_b.color.row(t);
            out.texture.valid(t) = tex_b.valid(t);
            out.segmentation.labels(t) = seg_b.labels(t);
            out.segmentation.valid(t) = true;
            invalidated = invalidated || !tex_b.valid(t);
        } else if (seg_a.valid(t) && selected(seg_a.labels(t))) {
            out.texture.valid(t) = false;
            out.texture.color.row(t).setZero();
            out.segmentation.valid(t) = false;
            out.segmentation.labels(t) = 0;
            invalidated = true;
        }
    }
    if (invalidated) {
        out.segmentation = model.complete_segmentation(out.segmentation, table);
        out.texture = model.complete_texture(out.texture, table);
    }
    return out;
}

}  // namespace uvatar
