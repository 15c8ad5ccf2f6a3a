#include "uvatar/pipeline.hpp"

#include <cmath>
#include <iostream>
#include <random>
#include <set>

#include "json.hpp"
#include "uvatar/synth.hpp"

namespace uvatar {

using nlohmann::json;

void PipelineConfig::validate() const {
    if (resolution < 64 || (resolution & (resolution - 1)) != 0) {
        throw InputError("resolution must be a power of two >= 64 (got " + std::to_string(resolution) + ")");
    }
}

namespace {

void require_file(const fs::path& path, const std::string& what) {
    if (path.empty()) throw InputError(what + " is required");
    if (!fs::exists(path)) throw InputError(what + " '" + path.string() + "' does not exist");
}

template <typename T>
void take(const json& obj, const char* key, T& field) {
    if (obj.contains(key)) field = obj.at(key).get<T>();
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) throw InputError("config: unknown key '" + where + key + "'");
    }
}

}  // namespace

void apply_config_file(PipelineConfig& config, const fs::path& path) {
    require_file(path, "config file");
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw InputError("'" + path.string() + "': " + e.what());
    }
    try {
        if (!doc.is_object()) throw InputError("config must be a JSON object");
        reject_unknown(doc, {"model", "resolution", "completion", "prior", "seed", "shape", "fit", "registration", "stitch"}, "");
        if (doc.contains("model")) config.model = doc.at("model").get<std::string>();
        if (doc.contains("prior")) config.prior = doc.at("prior").get<std::string>();
        take(doc, "resolution", config.resolution);
        take(doc, "completion", config.completion);
        take(doc, "seed", config.seed);
        if (doc.contains("shape")) {
            const auto values = doc.at("shape").get<std::vector<double>>();
            config.shape = Eigen::Map<const Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
        }
        if (doc.contains("fit")) {
            const json& f = doc.at("fit");
            reject_unknown(f, {"lambda_pose", "lambda_shape", "max_iterations"}, "fit.");
            take(f, "lambda_pose", config.fit.lambda_pose);
            take(f, "lambda_shape", config.fit.lambda_shape);
            take(f, "max_iterations", config.fit.max_iterations);
        }
        if (doc.contains("registration")) {
            const json& r = doc.at("registration");
            reject_unknown(r,
                           {"lambda_pose", "lambda_shape", "sigma", "body_weight", "extremity_weight",
                            "outer_iterations", "pose_shape_iterations", "tolerance", "damping", "damping_factor"},
                           "registration.");
            RegistrationConfig& c = config.registration;
            take(r, "lambda_pose", c.lambda_pose);
            take(r, "lambda_shape", c.lambda_shape);
            take(r, "sigma", c.sigma);
            take(r, "body_weight", c.body_weight);
            take(r, "extremity_weight", c.extremity_weight);
            take(r, "outer_iterations", c.outer_iterations);
            take(r, "pose_shape_iterations", c.pose_shape_iterations);
            take(r, "tolerance", c.tolerance);
            take(r, "damping", c.damping);
            take(r, "damping_factor", c.damping_factor);
        }
        if (doc.contains("stitch")) {
            const json& s = doc.at("stitch");
            reject_unknown(s, {"smoothness", "max_cycles"}, "stitch.");
            take(s, "smoothness", config.stitch.smoothness);
            take(s, "max_cycles", config.stitch.max_cycles);
        }
    } catch (const json::exception& e) {
        throw InputError("'" + path.string() + "': " + e.what());
    } catch (const InputError& e) {
        throw InputError("'" + path.string() + "': " + e.what());
    }
}

// Bundles --------------------------------------------------------------------

namespace {

DisplacementPrior empty_prior(int resolution, double cap) {
    DisplacementPrior prior;
    prior.resolution = resolution;
    prior.cap = cap;
    return prior;
}

std::vector<Camera> preview_cameras() {
    RingSpec ring;
    ring.count = 4;
    ring.yaw_center = 0.75 * M_PI;
    return camera_ring(ring);
}

}  // namespace

PointCloud bundle_offsets(const AvatarBundle& bundle) {
    const TexelTable table = build_texel_table(bundle.model.atlas, bundle.model.body, bundle.texture.resolution);
    return apply_displacement(bundle.displacement, table, bundle.model.body).offsets;
}

void write_bundle(AvatarBundle& bundle, const fs::path& dir) {
    const BodyTemplate& body = bundle.model.body;
    const int r = bundle.texture.resolution;
    if (bundle.segmentation.resolution != r) throw InputError("bundle: texture and segmentation resolutions differ");
    if (bundle.shape.size() == 0) bundle.shape = Eigen::VectorXd::Zero(body.num_shape());
    const auto model = make_completion_model(bundle.completion);
    bundle.displacement = model->predict_displacement(bundle.segmentation, bundle.prior);

    const TexelTable table = build_texel_table(bundle.model.atlas, body, r);
    const PointCloud offsets = apply_displacement(bundle.displacement, table, body).offsets;
    const Mesh mesh = skin(body, Eigen::VectorXd::Zero(body.num_pose_params()), bundle.shape, offsets);

    fs::create_directories(dir);
    save_model(bundle.model, dir / "model.txt");
    save_prior(dir / "prior", bundle.prior);
    write_texture(dir / "texture.png", bundle.texture);
    write_segmentation(dir / "segmentation.png", bundle.segmentation);
    write_displacement(dir / "displacement.png", bundle.displacement);
    export_obj(mesh, bundle.model.atlas, "texture.png", dir / "mesh.obj");
    const auto cameras = preview_cameras();
    for (size_t i = 0; i < cameras.size(); ++i) {
        const RenderOutput view = render(mesh, bundle.model, bundle.texture, bundle.segmentation, cameras[i]);
        write_rgb(dir / ("preview_" + std::to_string(i) + ".png"), view.color);
    }
    json meta;
    meta["resolution"] = r;
    meta["completion"] = bundle.completion;
    meta["seed"] = bundle.seed;
    meta["shape"] = std::vector<double>(bundle.shape.data(), bundle.shape.data() + bundle.shape.size());
    meta["files"] = {"model.txt", "prior/prior.json", "texture.png", "segmentation.png", "displacement.png",
                     "mesh.obj", "mesh.mtl", "preview_0.png", "preview_1.png", "preview_2.png", "preview_3.png"};
    write_text_file(dir / "bundle.json", meta.dump(2) + "\n");
}

AvatarBundle load_bundle(const fs::path& dir) {
    require_file(dir / "bundle.json", "bundle descriptor");
    AvatarBundle bundle;
    json meta;
    try {
        meta = json::parse(read_text_file(dir / "bundle.json"));
        bundle.completion = meta.at("completion").get<std::string>();
        bundle.seed = meta.at("seed").get<std::uint64_t>();
        const auto shape = meta.at("shape").get<std::vector<double>>();
        bundle.shape = Eigen::Map<const Eigen::VectorXd>(shape.data(), Eigen::Index(shape.size()));
    } catch (const json::exception& e) {
        throw InputError("'" + (dir / "bundle.json").string() + "': " + e.what());
    }
    bundle.model = load_model(dir / "model.txt");
    bundle.prior = load_prior(dir / "prior");
    bundle.texture = read_texture(dir / "texture.png");
    bundle.segmentation = read_segmentation(dir / "segmentation.png", int(bundle.model.palette.size()));
    bundle.displacement = read_displacement(dir / "displacement.png");
    if (bundle.shape.size() != bundle.model.body.num_shape()) throw InputError("bundle: shape vector has the wrong length");
    return bundle;
}

// Reconstruct ----------------------------------------------------------------

AvatarBundle run_reconstruct(const PipelineConfig& config, const fs::path& image_path, const fs::path& iuv_path,
                             const fs::path& labels_path, const fs::path& out) {
    config.validate();
    require_file(config.model, "model file");
    require_file(image_path, "image");
    require_file(iuv_path, "IUV image");
    require_file(labels_path, "segmentation image");
    AvatarBundle bundle;
    bundle.model = load_model(config.model);
    bundle.completion = config.completion;
    bundle.seed = config.seed;
    const auto model = make_completion_model(config.completion);
    const BodyTemplate& body = bundle.model.body;
    const int r = config.resolution;

    const RgbImage image = read_rgb(image_path);
    const IuvImage iuv = read_iuv(iuv_path);
    const LabelImage labels = read_labels(labels_path);
    if (!(iuv.pixels.col(0).array() != 0).any()) throw InputError("IUV image has no person pixels (no correspondences)");

    const TexelTable table = build_texel_table(bundle.model.atlas, body, r);
    const TextureMap partial_tex = extract_partial_texture(image, iuv, bundle.model.parts, r);
    SegmentationMap partial_seg =
        extract_partial_segmentation(labels, iuv, bundle.model.parts, r, int(bundle.model.palette.size()));
    partial_seg.valid = partial_seg.valid && table.valid_mask();
    partial_seg.canonicalize();
    if (partial_tex.num_valid() == 0) throw InputError("IUV image maps no pixel onto the atlas (no correspondences)");
    bundle.texture = model->complete_texture(partial_tex, table);
    bundle.segmentation = model->complete_segmentation(partial_seg, table);

    fs::path prior_dir = config.prior;
    if (prior_dir.empty()) {
        const fs::path beside = config.model.parent_path() / "prior";
        if (fs::exists(beside / "prior.json")) prior_dir = beside;
    }
    if (prior_dir.empty()) {
        std::cerr << "warning: no displacement prior found; using zero offsets\n";
        bundle.prior = empty_prior(r, body.offset_cap);
    } else {
        bundle.prior = load_prior(prior_dir);
        if (bundle.prior.resolution != r) {
            throw InputError("displacement prior resolution " + std::to_string(bundle.prior.resolution) +
                             " differs from the pipeline resolution " + std::to_string(r));
        }
    }
    std::vector<bool> used(bundle.model.palette.size(), false);
    for (int t = 0; t < table.size(); ++t) {
        if (table.valid(t)) used[bundle.segmentation.labels(t)] = true;
    }
    for (int l = 0; l < int(used.size()); ++l) {
        if (used[l] && !bundle.prior.has_label(l)) {
            std::cerr << "note: label '" << bundle.model.palette[l].name << "' has no prior field; zero offsets\n";
        }
    }
    if (config.shape.size() > 0) {
        if (config.shape.size() != body.num_shape()) {
            throw InputError("shape has " + std::to_string(config.shape.size()) + " entries, the model expects " +
                             std::to_string(body.num_shape()));
        }
        bundle.shape = config.shape;
    } else {
        bundle.shape = Eigen::VectorXd::Zero(body.num_shape());
    }
    write_bundle(bundle, out);
    return bundle;
}

Mesh run_repose(const fs::path& bundle_dir, const fs::path& pose_file, const fs::path& out) {
    const AvatarBundle bundle = load_bundle(bundle_dir);
    require_file(pose_file, "pose file");
    const PoseShape params = read_pose(pose_file);
    const BodyTemplate& body = bundle.model.body;
    if (params.pose.size() != body.num_pose_params()) {
        throw InputError("pose has " + std::to_string(params.pose.size()) + " entries, the model expects " +
                         std::to_string(body.num_pose_params()));
    }
    const Eigen::VectorXd shape = params.shape.size() > 0 ? params.shape : bundle.shape;
    if (shape.size() != body.num_shape()) throw InputError("shape vector has the wrong length");
    const Mesh mesh = skin(body, params.pose, shape, bundle_offsets(bundle));
    fs::create_directories(out);
    write_texture(out / "texture.png", bundle.texture);
    export_obj(mesh, bundle.model.atlas, "texture.png", out / "mesh.obj");
    return mesh;
}

// Register -------------------------------------------------------------------

RegisterOutputs run_register(const PipelineConfig& config, const fs::path& scan_path, const fs::path& joints_path,
                             const fs::path& cameras_path, const fs::path& priors_path, const fs::path& out) {
    require_file(config.model, "model file");
    require_file(scan_path, "scan");
    require_file(cameras_path, "cameras file");
    require_file(joints_path, "joints2d file");
    const ModelDescriptor model = load_model(config.model);
    const BodyTemplate& body = model.body;
    const Scan scan = read_scan(scan_path);
    const auto cameras = read_cameras(cameras_path);
    const auto views = read_joints2d(joints_path, cameras);
    GaussianPrior pose_prior = GaussianPrior::isotropic(body.num_pose_params());
    GaussianPrior shape_prior = GaussianPrior::isotropic(body.num_shape());
    if (!priors_path.empty()) {
        require_file(priors_path, "priors file");
        std::tie(pose_prior, shape_prior) = read_priors(priors_path);
    }
    RegisterOutputs result;
    result.fit = fit_pose_shape(body, views, pose_prior, shape_prior, config.fit);
    if (result.fit.degenerate_cameras) std::cerr << "warning: all cameras share one viewing direction\n";
    result.registration =
        register_scan(scan, body, result.fit.pose, result.fit.shape, pose_prior, shape_prior, config.registration);
    const Registration& reg = result.registration;

    fs::create_directories(out);
    write_pose(out / "pose.json", {reg.pose, reg.shape});
    write_pose(out / "init_pose.json", {result.fit.pose, result.fit.shape});
    export_obj({reg.vertices, body.faces}, model.atlas, "texture.png", out / "registration.obj");
    std::string trace;
    for (double e : reg.trace) trace += format_double(e) + "\n";
    write_text_file(out / "trace.txt", trace);
    json summary;
    summary["fit"] = {{"energy", result.fit.energy},
                      {"rmse_px", result.fit.rmse},
                      {"detections", result.fit.used_detections},
                      {"iterations", result.fit.iterations},
                      {"degenerate_cameras", result.fit.degenerate_cameras}};
    summary["registration"] = {{"data", reg.energy.data},
                               {"coupling", reg.energy.coupling},
                               {"pose_prior", reg.energy.pose_prior},
                               {"shape_prior", reg.energy.shape_prior},
                               {"total", reg.energy.total()},
                               {"accepted", reg.accepted},
                               {"rejected", reg.rejected}};
    write_text_file(out / "registration.json", summary.dump(2) + "\n");
    return result;
}

// Stitch ---------------------------------------------------------------------

SegmentationMap run_stitch(const PipelineConfig& config, const std::vector<StitchInput>& inputs, const fs::path& out) {
    config.validate();
    if (inputs.empty()) throw InputError("stitch-seg: no views given");
    require_file(config.model, "model file");
    const ModelDescriptor model = load_model(config.model);
    const int num_labels = int(model.palette.size());
    std::vector<ViewLabels> views;
    for (const auto& in : inputs) {
        require_file(in.segmentation, "view segmentation");
        ViewLabels view;
        view.map = read_segmentation(in.segmentation, num_labels);
        if (view.map.resolution != config.resolution) {
            throw InputError("'" + in.segmentation.string() + "' has resolution " + std::to_string(view.map.resolution) +
                             ", expected " + std::to_string(config.resolution));
        }
        view.weight = Eigen::VectorXd::Zero(view.map.size());
        if (in.weight.empty()) {
            for (int t = 0; t < view.map.size(); ++t) view.weight(t) = view.map.valid(t) ? 1.0 : 0.0;
        } else {
            require_file(in.weight, "weight image");
            const LabelImage w = read_labels(in.weight);
            if (w.width != view.map.resolution || w.height != view.map.resolution) {
                throw InputError("'" + in.weight.string() + "' does not match the segmentation size");
            }
            for (int t = 0; t < view.map.size(); ++t) view.weight(t) = view.map.valid(t) ? w.pixels(t) / 255.0 : 0.0;
        }
        views.push_back(std::move(view));
    }
    const TexelTable table = build_texel_table(model.atlas, model.body, config.resolution);
    const SegmentationMap result = stitch_segmentations(views, table, num_labels, config.stitch);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    write_segmentation(out, result);
    return result;
}

// Edits ----------------------------------------------------------------------

namespace {

int label_index(const ModelDescriptor& model, const std::string& name) {
    const int l = find_label(model.palette, name);
    if (l < 0) throw InputError("unknown label '" + name + "'");
    return l;
}

}  // namespace

AvatarBundle run_edit_texture(const fs::path& bundle_dir, const std::string& label, const fs::path& swatch_path,
                              const fs::path& out) {
    AvatarBundle bundle = load_bundle(bundle_dir);
    require_file(swatch_path, "swatch image");
    const RgbImage swatch = read_rgb(swatch_path);
    const TexelTable table = build_texel_table(bundle.model.atlas, bundle.model.body, bundle.texture.resolution);
    const auto model = make_completion_model(bundle.completion);
    bundle.texture = edit_texture_region(bundle.texture, bundle.segmentation, label_index(bundle.model, label), swatch,
                                         table, *model);
    write_bundle(bundle, out);
    return bundle;
}

AvatarBundle run_edit_length(const fs::path& bundle_dir, const std::string& label, double t, const fs::path& out) {
    AvatarBundle bundle = load_bundle(bundle_dir);
    const TexelTable table = build_texel_table(bundle.model.atlas, bundle.model.body, bundle.texture.resolution);
    bundle.segmentation =
        edit_garment_length(bundle.segmentation, label_index(bundle.model, label), t, bundle.model, table);
    write_bundle(bundle, out);
    return bundle;
}

AvatarBundle run_edit_swap(const fs::path& bundle_dir, const fs::path& other_dir, const std::vector<std::string>& labels,
                           const fs::path& out) {
    AvatarBundle bundle = load_bundle(bundle_dir);
    const AvatarBundle other = load_bundle(other_dir);
    if (format_model(bundle.model) != format_model(other.model)) throw InputError("swap: bundles use different models");
    if (other.texture.resolution != bundle.texture.resolution) throw InputError("swap: bundle resolutions differ");
    std::vector<int> ids;
    for (const auto& name : labels) ids.push_back(label_index(bundle.model, name));
    const TexelTable table = build_texel_table(bundle.model.atlas, bundle.model.body, bundle.texture.resolution);
    const auto model = make_completion_model(bundle.completion);
    const SwapResult swapped =
        swap_garments(bundle.texture, bundle.segmentation, other.texture, other.segmentation, ids, table, *model);
    bundle.texture = swapped.texture;
    bundle.segmentation = swapped.segmentation;
    write_bundle(bundle, out);
    return bundle;
}

// Metrics --------------------------------------------------------------------

MetricReport run_metrics(const fs::path& a, const fs::path& b, const fs::path& mask_path) {
    require_file(a, "image");
    require_file(b, "image");
    const Image x = Image::from_rgb(read_rgb(a));
    const Image y = Image::from_rgb(read_rgb(b));
    Mask mask;
    if (!mask_path.empty()) {
        require_file(mask_path, "mask image");
        const LabelImage m = read_labels(mask_path);
        if (m.width != x.width || m.height != x.height) throw InputError("mask size differs from the image size");
        mask = m.pixels.array() != 0;
    }
    return compare_images(x, y, mask);
}

std::string format_report(const MetricReport& report) {
    json out;
    out["l1"] = report.l1;
    out["ssim"] = report.ssim;
    out["msssim"] = report.msssim;
    out["dssim"] = report.dssim;
    out["perceptual"] = report.perceptual;
    return out.dump(2) + "\n";
}

// Synth ----------------------------------------------------------------------

namespace {

GarmentStyle random_style(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GarmentStyle style;
    style.sleeve = 0.1 + 0.8 * u(rng);
    style.pant = 0.3 + 0.7 * u(rng);
    style.hair = u(rng) < 0.8;
    return style;
}

}  // namespace

void run_synth(const SynthOptions& options, const fs::path& out) {
    PipelineConfig check;
    check.resolution = options.resolution;
    check.validate();
    if (options.views < 1) throw InputError("synth: need at least one view");
    const ModelDescriptor model = make_humanoid();
    const BodyTemplate& body = model.body;
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    fs::create_directories(out);
    save_model(model, out / "model.txt");
    const TexelTable table = build_texel_table(model.atlas, body, options.resolution);

    std::vector<std::pair<SegmentationMap, DisplacementMap>> pairs;
    for (int k = 0; k < options.prior_styles; ++k) {
        const GarmentStyle style = random_style(rng);
        pairs.emplace_back(reference_segmentation(model, table, style),
                           bake_displacement(clothing_offsets(model, style), table, body));
    }
    if (!pairs.empty()) save_prior(out / "prior", fit_displacement_prior(pairs, body.offset_cap));

    const GarmentStyle style = random_style(rng);
    TextureStyle tex_style;
    tex_style.seed = rng();
    tex_style.stripe_period = 4 + int(rng() % 5);
    const SegmentationMap seg = reference_segmentation(model, table, style);
    const TextureMap texture = procedural_texture(table, seg, tex_style);
    write_texture(out / "texture.png", texture);
    write_segmentation(out / "segmentation.png", seg);

    Eigen::VectorXd pose(body.num_pose_params());
    for (int i = 0; i < pose.size(); ++i) pose(i) = 0.1 * normal(rng);
    pose.head(3) = Eigen::Vector3d(0.0, 0.3 * normal(rng), 0.0);
    Eigen::VectorXd shape(body.num_shape());
    for (int i = 0; i < shape.size(); ++i) shape(i) = 0.5 * normal(rng);
    write_pose(out / "pose.json", {pose, shape});

    const PointCloud offsets = clothing_offsets(model, style);
    const Mesh mesh = skin(body, pose, shape, offsets);
    export_obj(mesh, model.atlas, "texture.png", out / "subject.obj");

    RingSpec ring;
    ring.count = options.views;
    ring.width = options.image_size;
    ring.height_px = options.image_size;
    ring.focal *= options.image_size / 256.0;
    const auto cameras = camera_ring(ring);
    write_cameras(out / "cameras.json", cameras);
    const PointCloud joints = posed_joints<double>(body, pose, shape);
    std::vector<JointObservations> detections;
    for (size_t i = 0; i < cameras.size(); ++i) {
        const RenderOutput view = render(mesh, model, texture, seg, cameras[i]);
        const std::string stem = "view_" + std::to_string(i);
        write_rgb(out / (stem + "_image.png"), view.color);
        write_iuv(out / (stem + "_iuv.png"), view.iuv);
        write_labels(out / (stem + "_labels.png"), view.labels);
        JointObservations obs{cameras[i], {}};
        obs.joints.resize(joints.rows(), 3);
        for (Eigen::Index k = 0; k < joints.rows(); ++k) {
            Vec2 px = Vec2::Zero();
            const bool visible = project_point<double>(cameras[i], Vec3(joints.row(k).transpose()), px);
            obs.joints.row(k) << px.x(), px.y(), visible ? 1.0 : 0.0;
        }
        detections.push_back(obs);
    }
    write_joints2d(out / "joints2d.json", detections);
    Scan scan;
    scan.points = synth_scan(body, pose, shape, offsets, options.scan_points, options.scan_noise, rng());
    write_scan_xyz(out / "scan.xyz", scan);
}

}  // namespace uvatar
