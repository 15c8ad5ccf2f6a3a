#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "json.hpp"
#include "uvatar/io.hpp"

namespace uvatar {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp, png_const_charp message) { throw Error(std::string("png: ") + message); }
void png_warning_handler(png_structp, png_const_charp) {}

int color_type_for(int channels) {
    switch (channels) {
        case 1: return PNG_COLOR_TYPE_GRAY;
        case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
        case 3: return PNG_COLOR_TYPE_RGB;
        case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
        default: throw InputError("png: unsupported channel count " + std::to_string(channels));
    }
}

}  // namespace

void write_png(const fs::path& path, const PngImage& image) {
    if (image.bit_depth != 8 && image.bit_depth != 16) throw InputError("png: bit depth must be 8 or 16");
    if (image.width <= 0 || image.height <= 0) throw InputError("png: empty image");
    const size_t row_samples = size_t(image.width) * image.channels;
    if (image.samples.size() != row_samples * image.height) throw InputError("png: sample count mismatch");
    const int color_type = color_type_for(image.channels);
    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw Error("cannot write '" + path.string() + "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    png_infop info = png_create_info_struct(png);
    try {
        png_init_io(png, file.get());
        png_set_IHDR(png, info, image.width, image.height, image.bit_depth, color_type, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        const int bytes = image.bit_depth / 8;
        std::vector<png_byte> row(row_samples * bytes);
        for (int y = 0; y < image.height; ++y) {
            const std::uint16_t* src = image.samples.data() + size_t(y) * row_samples;
            for (size_t i = 0; i < row_samples; ++i) {
                if (bytes == 1) {
                    row[i] = png_byte(src[i]);
                } else {
                    row[2 * i] = png_byte(src[i] >> 8);
                    row[2 * i + 1] = png_byte(src[i] & 0xff);
                }
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

PngImage read_png(const fs::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw InputError("cannot open '" + path.string() + "'");
    png_byte signature[8];
    if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
        throw InputError("'" + path.string() + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    png_infop info = png_create_info_struct(png);
    PngImage image;
    try {
        png_init_io(png, file.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);
        const int color_type = png_get_color_type(png, info);
        const int depth = png_get_bit_depth(png, info);
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_set_interlace_handling(png);
        png_read_update_info(png, info);
        image.width = int(png_get_image_width(png, info));
        image.height = int(png_get_image_height(png, info));
        image.channels = int(png_get_channels(png, info));
        image.bit_depth = int(png_get_bit_depth(png, info));
        const size_t row_bytes = png_get_rowbytes(png, info);
        std::vector<png_byte> data(row_bytes * image.height);
        std::vector<png_bytep> rows(image.height);
        for (int y = 0; y < image.height; ++y) rows[y] = data.data() + size_t(y) * row_bytes;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        const size_t row_samples = size_t(image.width) * image.channels;
        image.samples.resize(row_samples * image.height);
        for (int y = 0; y < image.height; ++y) {
            for (size_t i = 0; i < row_samples; ++i) {
                image.samples[y * row_samples + i] =
                    image.bit_depth == 16 ? std::uint16_t((rows[y][2 * i] << 8) | rows[y][2 * i + 1]) : rows[y][i];
            }
        }
    } catch (const Error& e) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("'" + path.string() + "': " + e.what());
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

namespace {

PngImage expect_png(const fs::path& path, int bit_depth) {
    PngImage image = read_png(path);
    if (image.bit_depth != bit_depth) {
        throw InputError("'" + path.string() + "': expected " + std::to_string(bit_depth) + "-bit samples, got " +
                         std::to_string(image.bit_depth));
    }
    return image;
}

// Alpha channel -> validity; anything other than 0 or full scale is rejected.
bool alpha_valid(const PngImage& image, size_t pixel, const fs::path& path) {
    if (image.channels != 2 && image.channels != 4) return true;
    const std::uint16_t a = image.samples[pixel * image.channels + image.channels - 1];
    const std::uint16_t full = image.bit_depth == 16 ? 65535 : 255;
    if (a != 0 && a != full) {
        throw InputError("'" + path.string() + "': alpha at pixel " + std::to_string(pixel) +
                         " is neither 0 nor fully opaque");
    }
    return a == full;
}

int square_resolution(const PngImage& image, const fs::path& path) {
    if (image.width != image.height) throw InputError("'" + path.string() + "': UV maps must be square");
    return image.width;
}

}  // namespace

void write_rgb(const fs::path& path, const RgbImage& image) {
    PngImage png{image.width, image.height, 3, 8, {}};
    png.samples.assign(image.pixels.data(), image.pixels.data() + image.pixels.size());
    write_png(path, png);
}

RgbImage read_rgb(const fs::path& path) {
    const PngImage png = expect_png(path, 8);
    RgbImage out(png.width, png.height);
    for (int i = 0; i < out.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const int src = png.channels >= 3 ? c : 0;
            out.pixels(i, c) = std::uint8_t(png.samples[size_t(i) * png.channels + src]);
        }
    }
    return out;
}

void write_labels(const fs::path& path, const LabelImage& image) {
    PngImage png{image.width, image.height, 1, 8, {}};
    png.samples.assign(image.pixels.data(), image.pixels.data() + image.pixels.size());
    write_png(path, png);
}

LabelImage read_labels(const fs::path& path) {
    const PngImage png = expect_png(path, 8);
    LabelImage out(png.width, png.height);
    for (int i = 0; i < out.size(); ++i) out.pixels(i) = std::uint8_t(png.samples[size_t(i) * png.channels]);
    return out;
}

void write_texture(const fs::path& path, const TextureMap& texture) {
    PngImage png{texture.resolution, texture.resolution, 4, 8, {}};
    png.samples.resize(size_t(texture.size()) * 4, 0);
    for (int t = 0; t < texture.size(); ++t) {
        if (!texture.valid(t)) continue;
        for (int c = 0; c < 3; ++c) png.samples[4 * t + c] = texture.color(t, c);
        png.samples[4 * t + 3] = 255;
    }
    write_png(path, png);
}

TextureMap read_texture(const fs::path& path) {
    const PngImage png = expect_png(path, 8);
    if (png.channels < 3) throw InputError("'" + path.string() + "': texture must be RGB or RGBA");
    TextureMap out(square_resolution(png, path));
    for (int t = 0; t < out.size(); ++t) {
        out.valid(t) = alpha_valid(png, t, path);
        if (!out.valid(t)) continue;
        for (int c = 0; c < 3; ++c) out.color(t, c) = std::uint8_t(png.samples[size_t(t) * png.channels + c]);
    }
    return out;
}

void write_segmentation(const fs::path& path, const SegmentationMap& seg) {
    if (seg.num_labels > 256) throw InputError("segmentation: more than 256 labels cannot be stored");
    PngImage png{seg.resolution, seg.resolution, 4, 8, {}};
    png.samples.resize(size_t(seg.size()) * 4, 0);
    for (int t = 0; t < seg.size(); ++t) {
        if (!seg.valid(t)) continue;
        png.samples[4 * t] = std::uint16_t(seg.labels(t));
        png.samples[4 * t + 3] = 255;
    }
    write_png(path, png);
}

SegmentationMap read_segmentation(const fs::path& path, int num_labels) {
    const PngImage png = expect_png(path, 8);
    SegmentationMap out(square_resolution(png, path), num_labels);
    for (int t = 0; t < out.size(); ++t) {
        out.valid(t) = alpha_valid(png, t, path);
        if (!out.valid(t)) continue;
        const int label = png.samples[size_t(t) * png.channels];
        if (label >= num_labels) {
            throw InputError("'" + path.string() + "': label " + std::to_string(label) + " at texel " +
                             std::to_string(t) + " is outside the palette (" + std::to_string(num_labels) + " labels)");
        }
        out.labels(t) = label;
    }
    return out;
}

namespace {

fs::path sidecar_path(const fs::path& path) {
    fs::path p = path;
    p += ".json";
    return p;
}

}  // namespace

void write_displacement(const fs::path& path, const DisplacementMap& map) {
    if (!(map.scale > 0.0) || !std::isfinite(map.scale)) throw InputError("displacement: scale must be positive");
    PngImage png{map.resolution, map.resolution, 4, 16, {}};
    png.samples.resize(size_t(map.size()) * 4, 0);
    for (int t = 0; t < map.size(); ++t) {
        if (!map.valid(t)) continue;
        for (int c = 0; c < 3; ++c) png.samples[4 * t + c] = std::uint16_t(int(map.quantized(t, c)) + 32768);
        png.samples[4 * t + 3] = 65535;
    }
    write_png(path, png);
    nlohmann::json side;
    side["resolution"] = map.resolution;
    side["scale"] = map.scale;
    side["offset"] = {map.offset.x(), map.offset.y(), map.offset.z()};
    write_text_file(sidecar_path(path), side.dump(2) + "\n");
}

DisplacementMap read_displacement(const fs::path& path) {
    const fs::path side_path = sidecar_path(path);
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(read_text_file(side_path));
    } catch (const nlohmann::json::exception& e) {
        throw InputError("'" + side_path.string() + "': " + e.what());
    }
    DisplacementMap map;
    try {
        map.resolution = side.at("resolution").get<int>();
        map.scale = side.at("scale").get<double>();
        const auto& off = side.at("offset");
        if (!off.is_array() || off.size() != 3) throw InputError("offset must have 3 entries");
        map.offset = Vec3(off[0].get<double>(), off[1].get<double>(), off[2].get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw InputError("'" + side_path.string() + "': " + e.what());
    }
    if (!(map.scale > 0.0) || !std::isfinite(map.scale)) {
        throw InputError("'" + side_path.string() + "': scale must be positive (got " + format_double(map.scale) + ")");
    }
    const PngImage png = expect_png(path, 16);
    if (png.channels < 3) throw InputError("'" + path.string() + "': displacement must have 3 or 4 channels");
    if (square_resolution(png, path) != map.resolution) {
        throw InputError("'" + path.string() + "': image size disagrees with the sidecar resolution");
    }
    map.quantized = DisplacementMap::Quantized::Zero(map.size(), 3);
    map.valid = Mask::Constant(map.size(), false);
    for (int t = 0; t < map.size(); ++t) {
        map.valid(t) = alpha_valid(png, t, path);
        if (!map.valid(t)) continue;
        for (int c = 0; c < 3; ++c) {
            const int q = int(png.samples[size_t(t) * png.channels + c]) - 32768;
            if (q < -32767) throw InputError("'" + path.string() + "': sample out of range at texel " + std::to_string(t));
            map.quantized(t, c) = std::int16_t(q);
        }
    }
    return map;
}

void write_iuv(const fs::path& path, const IuvImage& iuv) { write_rgb(path, iuv); }

IuvImage read_iuv(const fs::path& path) {
    const PngImage png = expect_png(path, 8);
    if (png.channels != 3) throw InputError("'" + path.string() + "': IUV images must have exactly 3 channels");
    return read_rgb(path);
}

void save_prior(const fs::path& dir, const DisplacementPrior& prior) {
    fs::create_directories(dir);
    nlohmann::json index;
    index["resolution"] = prior.resolution;
    index["cap"] = prior.cap;
    index["labels"] = nlohmann::json::array();
    for (int l = 0; l < prior.num_labels(); ++l) {
        nlohmann::json entry;
        entry["label"] = l;
        if (prior.fields[l].resolution > 0) {
            const std::string name = "label_" + std::to_string(l) + ".png";
            write_displacement(dir / name, prior.fields[l]);
            entry["file"] = name;
        } else {
            entry["file"] = nullptr;
        }
        index["labels"].push_back(entry);
    }
    write_text_file(dir / "prior.json", index.dump(2) + "\n");
}

DisplacementPrior load_prior(const fs::path& dir) {
    const fs::path index_path = dir / "prior.json";
    DisplacementPrior prior;
    try {
        const auto index = nlohmann::json::parse(read_text_file(index_path));
        prior.resolution = index.at("resolution").get<int>();
        prior.cap = index.at("cap").get<double>();
        const auto& labels = index.at("labels");
        for (size_t l = 0; l < labels.size(); ++l) {
            if (labels[l].at("label").get<size_t>() != l) throw InputError("labels must be listed in order");
            const auto& file = labels[l].at("file");
            if (file.is_null()) {
                prior.fields.emplace_back();
                continue;
            }
            DisplacementMap map = read_displacement(dir / file.get<std::string>());
            if (map.resolution != prior.resolution) throw InputError("label " + std::to_string(l) + " has the wrong resolution");
            prior.fields.push_back(std::move(map));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("'" + index_path.string() + "': " + e.what());
    } catch (const InputError& e) {
        throw InputError("'" + index_path.string() + "': " + e.what());
    }
    return prior;
}

}  // namespace uvatar
