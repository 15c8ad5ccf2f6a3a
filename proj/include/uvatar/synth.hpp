#pragma once

#include <cstdint>
#include <vector>

#include "uvatar/camera.hpp"
#include "uvatar/geometry.hpp"
#include "uvatar/model.hpp"

namespace uvatar {

/// Procedural humanoid built from capped tubes, one UV chart per body part.
///
/// Joints (16): 0 pelvis, 1 chest, 2 neck, 3 head, 4-6 left shoulder/elbow/wrist,
/// 7-9 right shoulder/elbow/wrist, 10-12 left hip/knee/ankle, 13-15 right
/// hip/knee/ankle. y is up, the body faces +z, the subject's left is +x.
/// With num_joints == 2 the result is a single vertical tube driven by a
/// two-bone chain.
struct HumanoidSpec {
    int num_joints = 16;
    int limb_segments = 16;   // vertices around each limb ring (even)
    int torso_segments = 24;  // vertices around torso and head rings (even)
    double height = 1.0;      // uniform scale of all proportions
    double girth = 1.0;       // scale of all tube radii
    double jitter = 0.0;      // relative random perturbation of segment lengths
    double falloff = 0.08;    // skin-weight Gaussian width (m)
    std::uint64_t seed = 0;
};

/// Chart order of the 16-joint humanoid (IUV part = chart + 1).
enum HumanoidPart : int {
    kTorso = 0,
    kHead,
    kLeftUpperArm,
    kRightUpperArm,
    kLeftForearm,
    kRightForearm,
    kLeftHand,
    kRightHand,
    kLeftThigh,
    kRightThigh,
    kLeftShin,
    kRightShin,
    kLeftFoot,
    kRightFoot,
    kNumHumanoidParts
};

ModelDescriptor make_humanoid(const HumanoidSpec& spec = {});

/// Garment layout of a synthetic subject, as limb coordinates in [0, 1].
struct GarmentStyle {
    double sleeve = 0.45;  // upper garment covers arm coordinates below this
    double pant = 0.9;     // lower garment covers leg coordinates below this
    double waist = 0.12;   // torso split, as a fraction of the pelvis-to-chest distance
    bool hair = true;
};

/// Label of a rest-pose surface point lying on `face` with barycentrics `bary`.
int garment_label(const ModelDescriptor& model, const GarmentStyle& style, int face, const Vec3& bary);
/// Label of every valid texel.
SegmentationMap reference_segmentation(const ModelDescriptor& model, const TexelTable& table,
                                       const GarmentStyle& style);
/// Label of every vertex (evaluated at the vertex through its first incident face).
Eigen::VectorXi vertex_labels(const ModelDescriptor& model, const GarmentStyle& style);

struct TextureStyle {
    bool symmetric = true;
    int stripe_period = 0;  // texel rows per stripe on the upper garment, 0 for none
    std::uint64_t seed = 0;
};

/// Per-label colours keyed to `seg`, every texel valid (gutters filled by completion).
TextureMap procedural_texture(const TexelTable& table, const SegmentationMap& seg, const TextureStyle& style);

/// Clothing-like offsets: each vertex pushed along its rest normal by a per-label thickness.
PointCloud clothing_offsets(const ModelDescriptor& model, const GarmentStyle& style);

/// Area-weighted samples of skin(pose, shape, offsets) with isotropic Gaussian noise.
PointCloud synth_scan(const BodyTemplate& body, const Eigen::VectorXd& pose, const Eigen::VectorXd& shape,
                      const PointCloud& offsets, int num_points, double noise, std::uint64_t seed);

struct RenderOutput {
    RgbImage color;
    IuvImage iuv;
    DepthImage depth;  // camera-frame z, +inf on background
    LabelImage labels;
    Camera camera;
};

/// Albedo-only ray caster. Every pixel centre shoots one ray; the hit's UV is
/// quantized exactly as stored in the IUV image and the texture and segmentation
/// are sampled (nearest texel) at that quantized coordinate.
RenderOutput render(const Mesh& mesh, const ModelDescriptor& model, const TextureMap& texture,
                    const SegmentationMap& seg, const Camera& camera);

struct RingSpec {
    int count = 8;
    double radius = 3.0;
    double height = 1.0;            // camera height (m)
    Vec3 target = Vec3(0.0, 0.93, 0.0);
    double yaw_center = 0.0;        // 0 looks at the front of the body
    double yaw_range = 2.0 * 3.14159265358979323846;
    double focal = 360.0;           // frames the whole humanoid at 256 px
    int width = 256;
    int height_px = 256;
};

/// Cameras evenly spaced in yaw: yaw_i = center + (i - (n - 1) / 2) * range / n.
std::vector<Camera> camera_ring(const RingSpec& spec);

}  // namespace uvatar
