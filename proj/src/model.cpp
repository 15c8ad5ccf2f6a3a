#include "uvatar/model.hpp"

namespace uvatar {

void ModelDescriptor::validate() const {
    body.validate();
    atlas.validate(body.num_faces());
    if (int(parts.size()) != atlas.num_charts) {
        throw InputError("model: part table has " + std::to_string(parts.size()) + " entries for " +
                         std::to_string(atlas.num_charts) + " charts");
    }
    if (parts.size() > 255) throw InputError("model: at most 255 parts fit in an IUV image");
    for (size_t p = 0; p < parts.size(); ++p) {
        if (!(parts[p].size.x() > 0.0) || !(parts[p].size.y() > 0.0)) {
            throw InputError("model: part " + std::to_string(p + 1) + " has an empty chart");
        }
    }
    if (palette.empty()) throw InputError("model: empty label palette");
    if (palette.size() > 255) throw InputError("model: at most 255 labels fit in a label image");
}

}  // namespace uvatar
