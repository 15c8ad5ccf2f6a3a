#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

#include "uvatar/io.hpp"

namespace uvatar {

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

namespace {

constexpr const char* kSchema = "model.v1";

void check_token(const std::string& s, const char* what) {
    if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
        throw InputError(std::string("model: ") + what + " '" + s + "' must be a non-empty word without spaces");
    }
}

class Writer {
public:
    void line(const std::string& s) { out_ << s << '\n'; }
    template <typename... T>
    void header(const std::string& name, T... counts) {
        out_ << name;
        ((out_ << ' ' << counts), ...);
        out_ << '\n';
    }
    void number(double v, bool last) { out_ << format_double(v) << (last ? '\n' : ' '); }
    void integer(long long v, bool last) { out_ << v << (last ? '\n' : ' '); }
    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

void write_triplets(Writer& w, const std::string& name, const Eigen::MatrixXd& m) {
    long long nnz = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) nnz += m(i, j) != 0.0;
    }
    w.header(name, m.rows(), m.cols(), nnz);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (m(i, j) == 0.0) continue;
            w.integer(i, false);
            w.integer(j, false);
            w.number(m(i, j), true);
        }
    }
}

void write_dense(Writer& w, const std::string& name, const Eigen::MatrixXd& m) {
    w.header(name, m.rows(), m.cols());
    if (m.cols() == 0) return;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) w.number(m(i, j), j + 1 == m.cols());
    }
}

void write_int_list(Writer& w, const std::string& name, const std::vector<int>& values) {
    w.header(name, values.size());
    for (size_t i = 0; i < values.size(); ++i) w.integer(values[i], i + 1 == values.size());
}

class Reader {
public:
    explicit Reader(const std::string& text) : text_(text) {}

    // Next non-blank line split on whitespace.
    std::vector<std::string_view> tokens() {
        while (pos_ < text_.size()) {
            size_t end = text_.find('\n', pos_);
            if (end == std::string::npos) end = text_.size();
            std::string_view line(text_.data() + pos_, end - pos_);
            pos_ = end + 1;
            ++line_no_;
            std::vector<std::string_view> out;
            size_t i = 0;
            while (i < line.size()) {
                while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
                size_t j = i;
                while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
                if (j > i) out.push_back(line.substr(i, j - i));
                i = j;
            }
            if (!out.empty()) return out;
        }
        fail("unexpected end of file");
    }

    std::vector<std::string_view> row(size_t count) {
        auto t = tokens();
        if (t.size() != count) {
            fail("expected " + std::to_string(count) + " values, got " + std::to_string(t.size()));
        }
        return t;
    }

    // "name n1 n2 ..." section header; returns the counts.
    std::vector<long long> header(const std::string& name, size_t counts) {
        section_ = name;
        auto t = tokens();
        if (t.empty() || t[0] != name) fail("missing section header '" + name + "'");
        if (t.size() != counts + 1) fail("malformed section header");
        std::vector<long long> out;
        for (size_t i = 1; i < t.size(); ++i) {
            const long long v = integer(t[i]);
            if (v < 0) fail("negative count");
            out.push_back(v);
        }
        return out;
    }

    double number(std::string_view s) {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad number '" + std::string(s) + "'");
        return v;
    }

    long long integer(std::string_view s) {
        long long v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad integer '" + std::string(s) + "'");
        return v;
    }

    int index(std::string_view s, long long limit) {
        const long long v = integer(s);
        if (v < 0 || v >= limit) fail("index " + std::to_string(v) + " out of range [0, " + std::to_string(limit) + ")");
        return int(v);
    }

    [[noreturn]] void fail(const std::string& message) const {
        throw InputError("model file, line " + std::to_string(line_no_) + " (section '" + section_ + "'): " + message);
    }

    void set_section(const std::string& s) { section_ = s; }

private:
    const std::string& text_;
    size_t pos_ = 0;
    int line_no_ = 0;
    std::string section_ = "schema";
};

Eigen::MatrixXd read_triplets(Reader& r, const std::string& name) {
    const auto c = r.header(name, 3);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(c[0], c[1]);
    for (long long k = 0; k < c[2]; ++k) {
        const auto t = r.row(3);
        m(r.index(t[0], c[0]), r.index(t[1], c[1])) = r.number(t[2]);
    }
    return m;
}

Eigen::MatrixXd read_dense(Reader& r, const std::string& name) {
    const auto c = r.header(name, 2);
    Eigen::MatrixXd m(c[0], c[1]);
    if (c[1] == 0) return m;
    for (long long i = 0; i < c[0]; ++i) {
        const auto t = r.row(size_t(c[1]));
        for (long long j = 0; j < c[1]; ++j) m(i, j) = r.number(t[j]);
    }
    return m;
}

std::vector<int> read_int_list(Reader& r, const std::string& name) {
    const auto c = r.header(name, 1);
    std::vector<int> out;
    if (c[0] == 0) return out;
    const auto t = r.row(size_t(c[0]));
    for (const auto& s : t) out.push_back(int(r.integer(s)));
    return out;
}

}  // namespace

std::string format_model(const ModelDescriptor& model) {
    model.validate();
    const BodyTemplate& b = model.body;
    Writer w;
    w.line(kSchema);
    w.header("vertices", b.num_vertices());
    for (int v = 0; v < b.num_vertices(); ++v) {
        for (int a = 0; a < 3; ++a) w.number(b.vertices(v, a), a == 2);
    }
    w.header("faces", b.num_faces());
    for (int f = 0; f < b.num_faces(); ++f) {
        for (int a = 0; a < 3; ++a) w.integer(b.faces(f, a), a == 2);
    }
    write_triplets(w, "skin_weights", b.skin_weights);
    write_triplets(w, "joint_regressor", b.joint_regressor);
    write_int_list(w, "parents", b.parents);
    write_dense(w, "shape_basis", b.shape_basis);
    write_dense(w, "pose_basis", b.pose_basis);
    w.header("symmetry_pairs", b.symmetry_pairs.size());
    for (const auto& [i, j] : b.symmetry_pairs) {
        w.integer(i, false);
        w.integer(j, true);
    }
    w.header("limbs", b.limbs.size());
    for (const auto& limb : b.limbs) {
        check_token(limb.name, "limb name");
        check_token(limb.group, "limb group");
        std::string line = limb.name + " " + limb.group + " " + std::to_string(limb.chain.size());
        for (int j : limb.chain) line += " " + std::to_string(j);
        w.line(line);
    }
    write_int_list(w, "extremity_joints", b.extremity_joints);
    w.header("offset_cap", format_double(b.offset_cap));
    w.header("atlas", model.atlas.num_faces(), model.atlas.num_charts);
    for (int f = 0; f < model.atlas.num_faces(); ++f) {
        w.integer(model.atlas.face_chart[f], false);
        for (int k = 0; k < 6; ++k) w.number(model.atlas.corner_uv(f, k), k == 5);
    }
    w.header("parts", model.parts.size());
    for (const auto& p : model.parts) {
        w.number(p.origin.x(), false);
        w.number(p.origin.y(), false);
        w.number(p.size.x(), false);
        w.number(p.size.y(), true);
    }
    w.header("palette", model.palette.size());
    for (const auto& label : model.palette) {
        check_token(label.name, "label name");
        if (!label.limb_group.empty()) check_token(label.limb_group, "label group");
        w.line(label.name + " " + (label.garment ? "1" : "0") + " " +
               (label.limb_group.empty() ? std::string("-") : label.limb_group));
    }
    w.line("end");
    return w.str();
}

ModelDescriptor parse_model(const std::string& text) {
    Reader r(text);
    {
        const auto t = r.tokens();
        if (t.size() != 1 || t[0] != kSchema) r.fail(std::string("missing schema tag '") + kSchema + "'");
    }
    ModelDescriptor m;
    BodyTemplate& b = m.body;
    {
        const long long n = r.header("vertices", 1)[0];
        b.vertices.resize(n, 3);
        for (long long v = 0; v < n; ++v) {
            const auto t = r.row(3);
            for (int a = 0; a < 3; ++a) b.vertices(v, a) = r.number(t[a]);
        }
    }
    {
        const long long n = r.header("faces", 1)[0];
        b.faces.resize(n, 3);
        for (long long f = 0; f < n; ++f) {
            const auto t = r.row(3);
            for (int a = 0; a < 3; ++a) b.faces(f, a) = r.index(t[a], b.num_vertices());
        }
    }
    b.skin_weights = read_triplets(r, "skin_weights");
    b.joint_regressor = read_triplets(r, "joint_regressor");
    b.parents = read_int_list(r, "parents");
    b.shape_basis = read_dense(r, "shape_basis");
    b.pose_basis = read_dense(r, "pose_basis");
    if (b.pose_basis.rows() == 0 || b.pose_basis.cols() == 0) b.pose_basis.resize(0, 0);
    {
        const long long n = r.header("symmetry_pairs", 1)[0];
        for (long long k = 0; k < n; ++k) {
            const auto t = r.row(2);
            b.symmetry_pairs.emplace_back(r.index(t[0], b.num_vertices()), r.index(t[1], b.num_vertices()));
        }
    }
    {
        const long long n = r.header("limbs", 1)[0];
        for (long long k = 0; k < n; ++k) {
            const auto t = r.tokens();
            if (t.size() < 3) r.fail("limb line needs name, group and joint count");
            Limb limb;
            limb.name = std::string(t[0]);
            limb.group = std::string(t[1]);
            const long long count = r.integer(t[2]);
            if (count < 0 || size_t(count) + 3 != t.size()) r.fail("limb joint count does not match the line");
            for (long long j = 0; j < count; ++j) limb.chain.push_back(int(r.integer(t[3 + j])));
            b.limbs.push_back(std::move(limb));
        }
    }
    b.extremity_joints = read_int_list(r, "extremity_joints");
    {
        r.set_section("offset_cap");
        const auto t = r.tokens();
        if (t.size() != 2 || t[0] != "offset_cap") r.fail("missing section header 'offset_cap'");
        b.offset_cap = r.number(t[1]);
    }
    {
        const auto c = r.header("atlas", 2);
        m.atlas.num_charts = int(c[1]);
        m.atlas.corner_uv.resize(c[0], 6);
        m.atlas.face_chart.resize(size_t(c[0]));
        for (long long f = 0; f < c[0]; ++f) {
            const auto t = r.row(7);
            m.atlas.face_chart[f] = r.index(t[0], std::max<long long>(c[1], 1));
            for (int k = 0; k < 6; ++k) m.atlas.corner_uv(f, k) = r.number(t[1 + k]);
        }
    }
    {
        const long long n = r.header("parts", 1)[0];
        for (long long k = 0; k < n; ++k) {
            const auto t = r.row(4);
            PartChart p;
            p.origin = Vec2(r.number(t[0]), r.number(t[1]));
            p.size = Vec2(r.number(t[2]), r.number(t[3]));
            m.parts.push_back(p);
        }
    }
    {
        const long long n = r.header("palette", 1)[0];
        for (long long k = 0; k < n; ++k) {
            const auto t = r.row(3);
            LabelInfo label;
            label.name = std::string(t[0]);
            if (t[1] != "0" && t[1] != "1") r.fail("garment flag must be 0 or 1");
            label.garment = t[1] == "1";
            label.limb_group = t[2] == "-" ? std::string() : std::string(t[2]);
            m.palette.push_back(std::move(label));
        }
    }
    {
        r.set_section("end");
        const auto t = r.tokens();
        if (t.size() != 1 || t[0] != "end") r.fail("expected 'end'");
    }
    try {
        m.validate();
    } catch (const InputError& e) {
        throw InputError(std::string("model file: ") + e.what());
    }
    return m;
}

void save_model(const ModelDescriptor& model, const fs::path& path) { write_text_file(path, format_model(model)); }

ModelDescriptor load_model(const fs::path& path) {
    try {
        return parse_model(read_text_file(path));
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

}  // namespace uvatar
