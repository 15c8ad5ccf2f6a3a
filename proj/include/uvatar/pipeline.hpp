#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uvatar/completion.hpp"
#include "uvatar/io.hpp"
#include "uvatar/metrics.hpp"
#include "uvatar/registration.hpp"
#include "uvatar/seg_stitch.hpp"

namespace uvatar {

struct PipelineConfig {
    fs::path model;
    int resolution = 256;
    std::string completion = "baseline";
    fs::path prior;  // displacement prior directory; empty = "prior" next to the model, if present
    std::uint64_t seed = 0;
    Eigen::VectorXd shape;  // body shape for reconstruct; empty = template mean
    FitOptions fit;
    RegistrationConfig registration;
    StitchOptions stitch;

    /// Throws InputError unless the resolution is a power of two >= 64.
    void validate() const;
};

/// Overwrites fields present in a JSON config file; unknown keys are rejected.
void apply_config_file(PipelineConfig& config, const fs::path& path);

/// Everything `reconstruct` produces; a bundle directory stores it together
/// with the derived mesh, material and preview renders.
struct AvatarBundle {
    ModelDescriptor model;
    DisplacementPrior prior;
    TextureMap texture;
    SegmentationMap segmentation;
    DisplacementMap displacement;
    Eigen::VectorXd shape;
    std::string completion = "baseline";
    std::uint64_t seed = 0;
};

AvatarBundle load_bundle(const fs::path& dir);
/// Re-derives the displacement map from the segmentation, then writes model,
/// prior, maps, mesh.obj/.mtl, four preview renders and bundle.json.
void write_bundle(AvatarBundle& bundle, const fs::path& dir);

/// Per-vertex offsets decoded from the bundle's displacement map.
PointCloud bundle_offsets(const AvatarBundle& bundle);

AvatarBundle run_reconstruct(const PipelineConfig& config, const fs::path& image, const fs::path& iuv,
                             const fs::path& labels, const fs::path& out);

/// Poses the bundle's avatar with the parameters in `pose_file` (its "shape"
/// entry, when present, replaces the bundle's shape) and exports mesh.obj.
Mesh run_repose(const fs::path& bundle_dir, const fs::path& pose_file, const fs::path& out);

struct RegisterOutputs {
    FitResult fit;
    Registration registration;
};

/// Joint-based initialization followed by scan registration. `priors` may be
/// empty (isotropic unit priors around zero).
RegisterOutputs run_register(const PipelineConfig& config, const fs::path& scan, const fs::path& joints2d,
                             const fs::path& cameras, const fs::path& priors, const fs::path& out);

struct StitchInput {
    fs::path segmentation;
    fs::path weight;  // 8-bit grey image, weight = value / 255; empty = 1 on valid texels
};

SegmentationMap run_stitch(const PipelineConfig& config, const std::vector<StitchInput>& views, const fs::path& out);

AvatarBundle run_edit_texture(const fs::path& bundle_dir, const std::string& label, const fs::path& swatch,
                              const fs::path& out);
AvatarBundle run_edit_length(const fs::path& bundle_dir, const std::string& label, double t, const fs::path& out);
AvatarBundle run_edit_swap(const fs::path& bundle_dir, const fs::path& other_dir, const std::vector<std::string>& labels,
                           const fs::path& out);

/// Compares two images (optionally masked by a grey image, nonzero = inside).
MetricReport run_metrics(const fs::path& a, const fs::path& b, const fs::path& mask);
std::string format_report(const MetricReport& report);

struct SynthOptions {
    std::uint64_t seed = 0;
    int resolution = 256;
    int views = 8;
    int image_size = 256;
    int scan_points = 5000;
    double scan_noise = 0.0;
    int prior_styles = 6;
};

/// Writes a self-contained sample directory (model, prior, reference maps,
/// cameras, renders, IUV and label images, scan, joints, parameters).
void run_synth(const SynthOptions& options, const fs::path& out);

}  // namespace uvatar
