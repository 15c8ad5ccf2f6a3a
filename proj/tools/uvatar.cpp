#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "uvatar/pipeline.hpp"

using namespace uvatar;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

StitchInput parse_view(const std::string& spec) {
    const size_t colon = spec.find(':');
    if (colon == std::string::npos) return {spec, {}};
    return {spec.substr(0, colon), spec.substr(colon + 1)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Texture, segmentation and geometry completion for UV-mapped body avatars"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string model, out, config_file;
    std::optional<int> resolution;
    std::optional<std::uint64_t> seed;
    app.add_option("--model", model, "model descriptor (model.v1 text)");
    app.add_option("--resolution", resolution, "UV map resolution (power of two >= 64)");
    app.add_option("--out", out, "output directory (or file for stitch-seg / metrics)");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--config", config_file, "JSON config file; explicit flags take precedence");

    auto* synth = app.add_subcommand("synth", "write a synthetic sample directory");
    SynthOptions synth_opts;
    synth->add_option("--views", synth_opts.views, "number of ring cameras");
    synth->add_option("--image-size", synth_opts.image_size, "render width and height");
    synth->add_option("--points", synth_opts.scan_points, "scan sample count");
    synth->add_option("--noise", synth_opts.scan_noise, "scan noise sigma (m)");

    auto* reconstruct = app.add_subcommand("reconstruct", "build an avatar bundle from one view");
    std::string image, iuv, labels, prior, completion;
    reconstruct->add_option("--image", image, "RGB image")->required();
    reconstruct->add_option("--iuv", iuv, "IUV image")->required();
    reconstruct->add_option("--labels", labels, "per-pixel label image")->required();
    reconstruct->add_option("--prior", prior, "displacement prior directory");
    reconstruct->add_option("--completion", completion, "completion model");

    auto* repose = app.add_subcommand("repose", "pose a bundle's avatar");
    std::string bundle, pose_file;
    repose->add_option("--bundle", bundle, "avatar bundle directory")->required();
    repose->add_option("--pose", pose_file, "JSON with pose (and optional shape)")->required();

    auto* reg = app.add_subcommand("register", "fit the model to a scan");
    std::string scan, joints, cameras, priors;
    reg->add_option("--scan", scan, "scan (.xyz or ASCII .ply)")->required();
    reg->add_option("--joints", joints, "2D joint detections (JSON)")->required();
    reg->add_option("--cameras", cameras, "cameras (JSON)")->required();
    reg->add_option("--priors", priors, "pose/shape Gaussian priors (JSON)");

    auto* stitch = app.add_subcommand("stitch-seg", "fuse per-view UV segmentations");
    std::vector<std::string> view_specs;
    std::optional<double> smoothness;
    std::optional<int> max_cycles;
    stitch->add_option("--view", view_specs, "segmentation PNG, optionally ':weight.png'");
    stitch->add_option("--smoothness", smoothness, "Potts weight");
    stitch->add_option("--max-cycles", max_cycles, "expansion cycles");

    auto* edit = app.add_subcommand("edit", "edit an avatar bundle");
    edit->require_subcommand(1);
    std::string edit_bundle, label, swatch, other, label_list;
    double t = 0.0;
    auto* edit_texture = edit->add_subcommand("texture", "retexture one label");
    edit_texture->add_option("--bundle", edit_bundle)->required();
    edit_texture->add_option("--label", label)->required();
    edit_texture->add_option("--swatch", swatch)->required();
    auto* edit_length = edit->add_subcommand("length", "change sleeve or trouser length");
    edit_length->add_option("--bundle", edit_bundle)->required();
    edit_length->add_option("--label", label)->required();
    edit_length->add_option("--t", t, "limb coordinate in [0, 1]")->required();
    auto* edit_swap = edit->add_subcommand("swap", "take garments from another bundle");
    edit_swap->add_option("--bundle", edit_bundle)->required();
    edit_swap->add_option("--other", other)->required();
    edit_swap->add_option("--labels", label_list, "comma-separated label names (may be empty)");

    auto* metrics = app.add_subcommand("metrics", "compare two images");
    std::string image_a, image_b, mask;
    metrics->add_option("a", image_a)->required();
    metrics->add_option("b", image_b)->required();
    metrics->add_option("--mask", mask, "grey mask image, nonzero = compared");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        PipelineConfig config;
        if (!config_file.empty()) apply_config_file(config, config_file);
        if (!model.empty()) config.model = model;
        if (resolution) config.resolution = *resolution;
        if (seed) config.seed = *seed;
        if (!prior.empty()) config.prior = prior;
        if (!completion.empty()) config.completion = completion;
        if (smoothness) config.stitch.smoothness = *smoothness;
        if (max_cycles) config.stitch.max_cycles = *max_cycles;
        auto need_out = [&] {
            if (out.empty()) throw InputError("--out is required");
            return fs::path(out);
        };

        if (synth->parsed()) {
            synth_opts.seed = config.seed;
            synth_opts.resolution = config.resolution;
            run_synth(synth_opts, need_out());
        } else if (reconstruct->parsed()) {
            run_reconstruct(config, image, iuv, labels, need_out());
        } else if (repose->parsed()) {
            run_repose(bundle, pose_file, need_out());
        } else if (reg->parsed()) {
            const RegisterOutputs result = run_register(config, scan, joints, cameras, priors, need_out());
            std::cout << "fit rmse " << result.fit.rmse << " px, registration energy "
                      << result.registration.energy.total() << "\n";
        } else if (stitch->parsed()) {
            std::vector<StitchInput> views;
            for (const auto& spec : view_specs) views.push_back(parse_view(spec));
            run_stitch(config, views, need_out());
        } else if (edit->parsed()) {
            if (edit_texture->parsed()) run_edit_texture(edit_bundle, label, swatch, need_out());
            else if (edit_length->parsed()) run_edit_length(edit_bundle, label, t, need_out());
            else run_edit_swap(edit_bundle, other, split_list(label_list), need_out());
        } else if (metrics->parsed()) {
            const std::string report = format_report(run_metrics(image_a, image_b, mask));
            if (out.empty()) std::cout << report;
            else write_text_file(out, report);
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
