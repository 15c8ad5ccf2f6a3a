#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uvatar/completion.hpp"
#include "uvatar/model.hpp"
#include "uvatar/registration.hpp"

namespace uvatar {

namespace fs = std::filesystem;

// Model descriptor ---------------------------------------------------------

/// Canonical text form (schema line "model.v1"); numbers use the shortest
/// representation that parses back to the same double.
std::string format_model(const ModelDescriptor& model);
ModelDescriptor parse_model(const std::string& text);
void save_model(const ModelDescriptor& model, const fs::path& path);
ModelDescriptor load_model(const fs::path& path);

// PNG ------------------------------------------------------------------------

/// Interleaved samples, 8 or 16 bits per sample, 1 to 4 channels.
struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;
};

void write_png(const fs::path& path, const PngImage& image);
/// Palette and sub-byte images are expanded to 8 bits.
PngImage read_png(const fs::path& path);

void write_rgb(const fs::path& path, const RgbImage& image);
RgbImage read_rgb(const fs::path& path);  // alpha, if any, is dropped
void write_labels(const fs::path& path, const LabelImage& image);
LabelImage read_labels(const fs::path& path);

// Maps: RGBA with alpha 255 = valid, 0 = invalid.

void write_texture(const fs::path& path, const TextureMap& texture);
TextureMap read_texture(const fs::path& path);
/// Label index in the red channel.
void write_segmentation(const fs::path& path, const SegmentationMap& seg);
SegmentationMap read_segmentation(const fs::path& path, int num_labels);
/// 16-bit RGBA image (q + 32768 per channel) plus `<path>.json` with scale, offset and resolution.
void write_displacement(const fs::path& path, const DisplacementMap& map);
DisplacementMap read_displacement(const fs::path& path);
void write_iuv(const fs::path& path, const IuvImage& iuv);
IuvImage read_iuv(const fs::path& path);

/// Per-label displacement stack: prior.json listing labels plus one map per label.
void save_prior(const fs::path& dir, const DisplacementPrior& prior);
DisplacementPrior load_prior(const fs::path& dir);

// Cameras, detections, parameters -------------------------------------------

void write_cameras(const fs::path& path, const std::vector<Camera>& cameras);
std::vector<Camera> read_cameras(const fs::path& path);

/// Views keyed by camera id; the cameras must already be loaded.
void write_joints2d(const fs::path& path, const std::vector<JointObservations>& views);
std::vector<JointObservations> read_joints2d(const fs::path& path, const std::vector<Camera>& cameras);

struct PoseShape {
    Eigen::VectorXd pose;
    Eigen::VectorXd shape;
};

void write_pose(const fs::path& path, const PoseShape& params);
/// A missing "shape" entry gives an empty vector.
PoseShape read_pose(const fs::path& path);

void write_priors(const fs::path& path, const GaussianPrior& pose, const GaussianPrior& shape);
std::pair<GaussianPrior, GaussianPrior> read_priors(const fs::path& path);

// Scans and meshes -----------------------------------------------------------

/// Whitespace-separated "x y z" or "x y z nx ny nz" lines; '#' starts a comment.
Scan read_scan_xyz(const fs::path& path);
/// ASCII PLY, vertex element only (other elements are ignored).
Scan read_scan_ply(const fs::path& path);
/// Dispatches on the extension (.ply, otherwise point list).
Scan read_scan(const fs::path& path);
void write_scan_xyz(const fs::path& path, const Scan& scan);

/// Positions, per-corner texture coordinates and faces, plus a material file
/// next to `obj_path` whose diffuse map is `texture_name` (relative to the OBJ).
void export_obj(const Mesh& mesh, const UvAtlas& atlas, const std::string& texture_name, const fs::path& obj_path);

struct ObjData {
    PointCloud positions;
    Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> uvs;
    Triangles faces;
    Triangles face_uvs;
    std::string material_library;
};

ObjData read_obj(const fs::path& path);

// Helpers ----------------------------------------------------------------------

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);
/// Shortest decimal that parses back to `value`.
std::string format_double(double value);

}  // namespace uvatar
