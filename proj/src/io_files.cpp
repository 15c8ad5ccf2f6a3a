#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <string_view>

#include <Eigen/Geometry>

#include "json.hpp"
#include "uvatar/io.hpp"

namespace uvatar {

using nlohmann::json;

namespace {

json parse_json_file(const fs::path& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError("'" + path.string() + "': " + e.what());
    }
}

Eigen::VectorXd to_vector(const json& j) {
    if (!j.is_array()) throw InputError("expected an array of numbers");
    Eigen::VectorXd v(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw InputError("expected an array of numbers");
        v(i) = j[i].get<double>();
    }
    if (!v.allFinite()) throw InputError("non-finite value");
    return v;
}

json from_vector(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

template <typename F>
auto with_context(const fs::path& path, const std::string& where, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw InputError("'" + path.string() + "': " + where + ": " + e.what());
    } catch (const InputError& e) {
        throw InputError("'" + path.string() + "': " + where + ": " + e.what());
    }
}

}  // namespace

void write_cameras(const fs::path& path, const std::vector<Camera>& cameras) {
    json out;
    out["cameras"] = json::array();
    for (const auto& cam : cameras) {
        const Eigen::AngleAxisd aa(cam.rotation);
        const Vec3 rotvec = aa.angle() * aa.axis();
        json c;
        c["id"] = cam.id;
        c["fx"] = cam.fx;
        c["fy"] = cam.fy;
        c["cx"] = cam.cx;
        c["cy"] = cam.cy;
        c["width"] = cam.width;
        c["height"] = cam.height;
        c["rotation"] = {rotvec.x(), rotvec.y(), rotvec.z()};
        c["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
        out["cameras"].push_back(c);
    }
    write_text_file(path, out.dump(2) + "\n");
}

std::vector<Camera> read_cameras(const fs::path& path) {
    const json doc = parse_json_file(path);
    std::vector<Camera> cameras;
    const json& list = with_context(path, "document", [&]() -> const json& { return doc.at("cameras"); });
    for (size_t i = 0; i < list.size(); ++i) {
        cameras.push_back(with_context(path, "camera " + std::to_string(i), [&] {
            const json& c = list[i];
            Camera cam;
            cam.id = c.value("id", std::to_string(i));
            cam.fx = c.at("fx").get<double>();
            cam.fy = c.at("fy").get<double>();
            cam.cx = c.at("cx").get<double>();
            cam.cy = c.at("cy").get<double>();
            cam.width = c.value("width", 0);
            cam.height = c.value("height", 0);
            const Eigen::VectorXd r = to_vector(c.at("rotation"));
            const Eigen::VectorXd t = to_vector(c.at("translation"));
            if (r.size() != 3 || t.size() != 3) throw InputError("rotation and translation need 3 entries");
            const double angle = r.norm();
            cam.rotation = angle > 0.0 ? Eigen::AngleAxisd(angle, r / angle).toRotationMatrix() : Mat3::Identity();
            cam.translation = t;
            cam.validate();
            return cam;
        }));
        for (size_t k = 0; k + 1 < cameras.size(); ++k) {
            if (cameras[k].id == cameras.back().id) {
                throw InputError("'" + path.string() + "': duplicate camera id '" + cameras.back().id + "'");
            }
        }
    }
    return cameras;
}

void write_joints2d(const fs::path& path, const std::vector<JointObservations>& views) {
    json out;
    out["views"] = json::array();
    for (const auto& view : views) {
        json v;
        v["camera"] = view.camera.id;
        v["joints"] = json::array();
        for (Eigen::Index k = 0; k < view.joints.rows(); ++k) {
            v["joints"].push_back({view.joints(k, 0), view.joints(k, 1), view.joints(k, 2)});
        }
        out["views"].push_back(v);
    }
    write_text_file(path, out.dump(2) + "\n");
}

std::vector<JointObservations> read_joints2d(const fs::path& path, const std::vector<Camera>& cameras) {
    const json doc = parse_json_file(path);
    const json& list = with_context(path, "document", [&]() -> const json& { return doc.at("views"); });
    std::vector<JointObservations> views;
    for (size_t i = 0; i < list.size(); ++i) {
        views.push_back(with_context(path, "view " + std::to_string(i), [&] {
            const json& v = list[i];
            const std::string id = v.at("camera").get<std::string>();
            JointObservations obs;
            bool found = false;
            for (const auto& cam : cameras) {
                if (cam.id == id) {
                    obs.camera = cam;
                    found = true;
                }
            }
            if (!found) throw InputError("unknown camera '" + id + "'");
            const json& joints = v.at("joints");
            obs.joints.resize(Eigen::Index(joints.size()), 3);
            for (size_t k = 0; k < joints.size(); ++k) {
                const Eigen::VectorXd row = to_vector(joints[k]);
                if (row.size() != 3) throw InputError("joint " + std::to_string(k) + " needs (x, y, confidence)");
                if (row(2) < 0.0) throw InputError("joint " + std::to_string(k) + " has negative confidence");
                obs.joints.row(Eigen::Index(k)) = row.transpose();
            }
            return obs;
        }));
    }
    return views;
}

void write_pose(const fs::path& path, const PoseShape& params) {
    json out;
    out["pose"] = from_vector(params.pose);
    out["shape"] = from_vector(params.shape);
    write_text_file(path, out.dump(2) + "\n");
}

PoseShape read_pose(const fs::path& path) {
    const json doc = parse_json_file(path);
    return with_context(path, "parameters", [&] {
        PoseShape p;
        p.pose = to_vector(doc.at("pose"));
        p.shape = doc.contains("shape") ? to_vector(doc.at("shape")) : Eigen::VectorXd();
        return p;
    });
}

namespace {

json prior_json(const GaussianPrior& prior) {
    json out;
    out["mean"] = from_vector(prior.mean);
    out["precision"] = json::array();
    for (Eigen::Index i = 0; i < prior.precision.rows(); ++i) {
        out["precision"].push_back(from_vector(prior.precision.row(i).transpose()));
    }
    return out;
}

GaussianPrior prior_from_json(const json& j) {
    GaussianPrior prior;
    prior.mean = to_vector(j.at("mean"));
    const json& rows = j.at("precision");
    prior.precision.resize(Eigen::Index(rows.size()), prior.mean.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        const Eigen::VectorXd row = to_vector(rows[i]);
        if (row.size() != prior.mean.size()) throw InputError("precision rows must match the mean's length");
        prior.precision.row(Eigen::Index(i)) = row.transpose();
    }
    prior.validate();
    return prior;
}

}  // namespace

void write_priors(const fs::path& path, const GaussianPrior& pose, const GaussianPrior& shape) {
    json out;
    out["pose"] = prior_json(pose);
    out["shape"] = prior_json(shape);
    write_text_file(path, out.dump(2) + "\n");
}

std::pair<GaussianPrior, GaussianPrior> read_priors(const fs::path& path) {
    const json doc = parse_json_file(path);
    GaussianPrior pose = with_context(path, "pose prior", [&] { return prior_from_json(doc.at("pose")); });
    GaussianPrior shape = with_context(path, "shape prior", [&] { return prior_from_json(doc.at("shape")); });
    return {pose, shape};
}

namespace {

std::vector<std::string_view> split_words(std::string_view line) {
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

class LineReader {
public:
    LineReader(const fs::path& path) : path_(path), text_(read_text_file(path)) {}

    bool next(std::string_view& line) {
        if (pos_ >= text_.size()) return false;
        size_t end = text_.find('\n', pos_);
        if (end == std::string::npos) end = text_.size();
        line = std::string_view(text_.data() + pos_, end - pos_);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos_ = end + 1;
        ++line_no_;
        return true;
    }

    double number(std::string_view s) const {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad number '" + std::string(s) + "'");
        if (!std::isfinite(v)) fail("non-finite value '" + std::string(s) + "'");
        return v;
    }

    long long integer(std::string_view s) const {
        long long v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad integer '" + std::string(s) + "'");
        return v;
    }

    [[noreturn]] void fail(const std::string& message) const {
        throw InputError(path_.string() + ":" + std::to_string(line_no_) + ": " + message);
    }

private:
    fs::path path_;
    std::string text_;
    size_t pos_ = 0;
    int line_no_ = 0;
};

Scan assemble_scan(const std::vector<Vec3>& points, const std::vector<Vec3>& normals) {
    Scan scan;
    scan.points.resize(Eigen::Index(points.size()), 3);
    for (size_t i = 0; i < points.size(); ++i) scan.points.row(Eigen::Index(i)) = points[i].transpose();
    if (!normals.empty()) {
        scan.normals.resize(Eigen::Index(normals.size()), 3);
        for (size_t i = 0; i < normals.size(); ++i) scan.normals.row(Eigen::Index(i)) = normals[i].transpose();
    }
    return scan;
}

}  // namespace

Scan read_scan_xyz(const fs::path& path) {
    LineReader reader(path);
    std::vector<Vec3> points, normals;
    int columns = -1;
    std::string_view line;
    while (reader.next(line)) {
        const size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        const auto words = split_words(line);
        if (words.empty()) continue;
        if (words.size() != 3 && words.size() != 6) {
            reader.fail("expected 3 or 6 values, got " + std::to_string(words.size()));
        }
        if (columns < 0) columns = int(words.size());
        if (int(words.size()) != columns) reader.fail("inconsistent column count");
        points.emplace_back(reader.number(words[0]), reader.number(words[1]), reader.number(words[2]));
        if (columns == 6) normals.emplace_back(reader.number(words[3]), reader.number(words[4]), reader.number(words[5]));
    }
    return assemble_scan(points, normals);
}

Scan read_scan_ply(const fs::path& path) {
    LineReader reader(path);
    std::string_view line;
    if (!reader.next(line) || split_words(line) != std::vector<std::string_view>{"ply"}) reader.fail("missing 'ply' magic");
    long long vertex_count = -1;
    bool in_vertex = false;
    bool seen_format = false;
    std::vector<std::string> properties;
    while (true) {
        if (!reader.next(line)) reader.fail("header ends without 'end_header'");
        const auto words = split_words(line);
        if (words.empty()) continue;
        if (words[0] == "end_header") break;
        if (words[0] == "comment" || words[0] == "obj_info") continue;
        if (words[0] == "format") {
            if (words.size() < 2 || words[1] != "ascii") reader.fail("only ASCII PLY is supported");
            seen_format = true;
        } else if (words[0] == "element") {
            if (words.size() != 3) reader.fail("malformed element line");
            in_vertex = words[1] == "vertex";
            if (in_vertex) {
                if (vertex_count >= 0) reader.fail("duplicate vertex element");
                vertex_count = reader.integer(words[2]);
                if (vertex_count < 0) reader.fail("negative vertex count");
            }
        } else if (words[0] == "property") {
            if (!in_vertex) continue;
            if (words.size() >= 2 && words[1] == "list") reader.fail("list properties on vertices are not supported");
            if (words.size() != 3) reader.fail("malformed property line");
            properties.emplace_back(words[2]);
        } else {
            reader.fail("unknown header keyword '" + std::string(words[0]) + "'");
        }
    }
    if (!seen_format) reader.fail("missing format line");
    if (vertex_count < 0) reader.fail("no vertex element");
    auto find = [&](const char* name) {
        for (size_t i = 0; i < properties.size(); ++i) {
            if (properties[i] == name) return int(i);
        }
        return -1;
    };
    const int ix = find("x"), iy = find("y"), iz = find("z");
    const int inx = find("nx"), iny = find("ny"), inz = find("nz");
    if (ix < 0 || iy < 0 || iz < 0) reader.fail("vertex element lacks x, y or z");
    const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;
    std::vector<Vec3> points, normals;
    for (long long v = 0; v < vertex_count; ++v) {
        do {
            if (!reader.next(line)) reader.fail("file ends after " + std::to_string(v) + " of " + std::to_string(vertex_count) + " vertices");
        } while (split_words(line).empty());
        const auto words = split_words(line);
        if (words.size() != properties.size()) {
            reader.fail("expected " + std::to_string(properties.size()) + " values, got " + std::to_string(words.size()));
        }
        points.emplace_back(reader.number(words[ix]), reader.number(words[iy]), reader.number(words[iz]));
        if (has_normals) normals.emplace_back(reader.number(words[inx]), reader.number(words[iny]), reader.number(words[inz]));
    }
    return assemble_scan(points, normals);
}

Scan read_scan(const fs::path& path) {
    return path.extension() == ".ply" ? read_scan_ply(path) : read_scan_xyz(path);
}

void write_scan_xyz(const fs::path& path, const Scan& scan) {
    std::string out;
    const bool normals = scan.normals.rows() == scan.points.rows() && scan.normals.rows() > 0;
    for (Eigen::Index i = 0; i < scan.points.rows(); ++i) {
        for (int a = 0; a < 3; ++a) out += format_double(scan.points(i, a)) + (a < 2 || normals ? " " : "\n");
        if (normals) {
            for (int a = 0; a < 3; ++a) out += format_double(scan.normals(i, a)) + (a < 2 ? " " : "\n");
        }
    }
    write_text_file(path, out);
}

void export_obj(const Mesh& mesh, const UvAtlas& atlas, const std::string& texture_name, const fs::path& obj_path) {
    if (atlas.num_faces() != mesh.faces.rows()) throw InputError("export_obj: atlas and mesh face counts differ");
    fs::path mtl_path = obj_path;
    mtl_path.replace_extension(".mtl");
    std::ostringstream obj;
    obj << "mtllib " << mtl_path.filename().string() << "\n";
    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v) {
        obj << "v " << format_double(mesh.vertices(v, 0)) << ' ' << format_double(mesh.vertices(v, 1)) << ' '
            << format_double(mesh.vertices(v, 2)) << '\n';
    }
    std::map<std::pair<double, double>, int> uv_index;
    Triangles corner(mesh.faces.rows(), 3);
    std::ostringstream vt;
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const Vec2 uv = atlas.uv(int(f), k);
            const auto [it, inserted] = uv_index.emplace(std::make_pair(uv.x(), uv.y()), int(uv_index.size()));
            if (inserted) vt << "vt " << format_double(uv.x()) << ' ' << format_double(uv.y()) << '\n';
            corner(f, k) = it->second;
        }
    }
    obj << vt.str();
    obj << "usemtl avatar\n";
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        obj << 'f';
        for (int k = 0; k < 3; ++k) obj << ' ' << mesh.faces(f, k) + 1 << '/' << corner(f, k) + 1;
        obj << '\n';
    }
    write_text_file(obj_path, obj.str());
    write_text_file(mtl_path, "newmtl avatar\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd " + texture_name + "\n");
}

ObjData read_obj(const fs::path& path) {
    LineReader reader(path);
    std::vector<Vec3> positions;
    std::vector<Vec2> uvs;
    std::vector<Eigen::Vector3i> faces, face_uvs;
    ObjData data;
    std::string_view line;
    while (reader.next(line)) {
        const auto words = split_words(line);
        if (words.empty() || words[0][0] == '#') continue;
        if (words[0] == "v") {
            if (words.size() < 4) reader.fail("vertex needs 3 coordinates");
            positions.emplace_back(reader.number(words[1]), reader.number(words[2]), reader.number(words[3]));
        } else if (words[0] == "vt") {
            if (words.size() < 3) reader.fail("texture coordinate needs 2 values");
            uvs.emplace_back(reader.number(words[1]), reader.number(words[2]));
        } else if (words[0] == "f") {
            if (words.size() != 4) reader.fail("only triangles are supported");
            Eigen::Vector3i f, ft(-1, -1, -1);
            for (int k = 0; k < 3; ++k) {
                const std::string_view w = words[1 + k];
                const size_t slash = w.find('/');
                f(k) = int(reader.integer(w.substr(0, slash))) - 1;
                if (f(k) < 0 || f(k) >= int(positions.size())) reader.fail("face references a missing vertex");
                if (slash != std::string_view::npos) {
                    std::string_view rest = w.substr(slash + 1);
                    rest = rest.substr(0, rest.find('/'));
                    if (!rest.empty()) {
                        ft(k) = int(reader.integer(rest)) - 1;
                        if (ft(k) < 0 || ft(k) >= int(uvs.size())) reader.fail("face references a missing texture coordinate");
                    }
                }
            }
            faces.push_back(f);
            face_uvs.push_back(ft);
        } else if (words[0] == "mtllib" && words.size() >= 2) {
            data.material_library = std::string(words[1]);
        }
    }
    data.positions.resize(Eigen::Index(positions.size()), 3);
    for (size_t i = 0; i < positions.size(); ++i) data.positions.row(Eigen::Index(i)) = positions[i].transpose();
    data.uvs.resize(Eigen::Index(uvs.size()), 2);
    for (size_t i = 0; i < uvs.size(); ++i) data.uvs.row(Eigen::Index(i)) = uvs[i].transpose();
    data.faces.resize(Eigen::Index(faces.size()), 3);
    data.face_uvs.resize(Eigen::Index(faces.size()), 3);
    for (size_t i = 0; i < faces.size(); ++i) {
        data.faces.row(Eigen::Index(i)) = faces[i].transpose();
        data.face_uvs.row(Eigen::Index(i)) = face_uvs[i].transpose();
    }
    return data;
}

}  // namespace uvatar
