#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uvatar/model.hpp"

namespace uvatar {

/// Per-label mean displacement fields in UV space.
struct DisplacementPrior {
    int resolution = 0;
    double cap = 0.15;
    std::vector<DisplacementMap> fields;  // one per label; valid where the label was observed

    int num_labels() const { return int(fields.size()); }
    bool has_label(int label) const;
};

/// Partial map -> complete map. Implementations must return all-valid maps.
class CompletionModel {
public:
    virtual ~CompletionModel() = default;

    virtual std::string name() const = 0;
    virtual TextureMap complete_texture(const TextureMap& partial, const TexelTable& table) const = 0;
    virtual SegmentationMap complete_segmentation(const SegmentationMap& partial, const TexelTable& table) const = 0;
    virtual DisplacementMap predict_displacement(const SegmentationMap& seg, const DisplacementPrior& prior) const = 0;
};

/// Deterministic baselines: symmetry copy then harmonic fill for textures,
/// symmetry copy then nearest-seed propagation for labels, per-label means for
/// displacement. Valid input texels are never modified.
class BaselineCompletion final : public CompletionModel {
public:
    std::string name() const override { return "baseline"; }
    TextureMap complete_texture(const TextureMap& partial, const TexelTable& table) const override;
    SegmentationMap complete_segmentation(const SegmentationMap& partial, const TexelTable& table) const override;
    DisplacementMap predict_displacement(const SegmentationMap& seg, const DisplacementPrior& prior) const override;
};

/// Throws InputError for unknown names. Known: "baseline".
std::unique_ptr<CompletionModel> make_completion_model(const std::string& name);

TextureMap mirror_fill(const TextureMap& partial, const TexelTable& table);
SegmentationMap mirror_fill(const SegmentationMap& partial, const TexelTable& table);

/// Harmonic interpolation over `graph`: rows of `values` flagged in `known` are
/// Dirichlet boundary, every other row solves the graph Laplace equation.
/// Connected components without a known row receive the mean of all known rows.
/// Throws InputError when nothing is known.
Eigen::MatrixXd diffuse_fill(const Eigen::MatrixXd& values, const Mask& known, const TexelGraph& graph);
/// Texture version over `graph`, rounding to 8 bits.
TextureMap diffuse_fill(const TextureMap& partial, const TexelGraph& graph);

/// Multi-source breadth-first propagation: each unknown node reachable from a
/// known one takes the label of its nearest known node in hop distance, ties
/// going to the lowest label. `reached` flags nodes that end up labelled.
Eigen::VectorXi propagate_labels(const Eigen::VectorXi& labels, const Mask& known, const TexelGraph& graph,
                                 Mask& reached);

/// Per-label, per-texel mean over pairs whose segmentation shows that label.
DisplacementPrior fit_displacement_prior(const std::vector<std::pair<SegmentationMap, DisplacementMap>>& pairs,
                                         double cap);

/// Position of each texel along the limbs of the template (rest pose).
struct LimbField {
    std::vector<int> limb;       // index into body.limbs, -1 for non-limb texels
    Eigen::VectorXd coordinate;  // 0 at the proximal joint, 1 at the distal one
};

LimbField compute_limb_field(const BodyTemplate& body, const TexelTable& table);

/// Replaces the texture inside `label` by `swatch` tiled over texel
/// coordinates, then re-completes a 2-texel band along the region boundary.
TextureMap edit_texture_region(const TextureMap& texture, const SegmentationMap& seg, int label, const RgbImage& swatch,
                               const TexelTable& table, const CompletionModel& model);

/// Texels inside `label` within grid distance 2 of a texel outside it.
Mask blend_band(const SegmentationMap& seg, int label);

/// Sets the garment to cover limb coordinates below t (all of the limb when
/// t >= 1) on every limb of the garment's group; the rest of those limbs
/// becomes skin.
SegmentationMap edit_garment_length(const SegmentationMap& seg, int label, double t, const ModelDescriptor& model,
                                    const TexelTable& table);

struct SwapResult {
    TextureMap texture;
    SegmentationMap segmentation;
};

/// Copies B's texture and labels wherever B shows one of `labels`; texels where A
/// showed one of them but B does not are invalidated and re-completed.
SwapResult swap_garments(const TextureMap& tex_a, const SegmentationMap& seg_a, const TextureMap& tex_b,
                         const SegmentationMap& seg_b, const std::vector<int>& labels, const TexelTable& table,
                         const CompletionModel& model);

}  // namespace uvatar
