#pragma once

#include "uvatar/body_model.hpp"
#include "uvatar/maps.hpp"
#include "uvatar/uv_atlas.hpp"

namespace uvatar {

/// Everything the pipeline needs to know about a body model.
struct ModelDescriptor {
    BodyTemplate body;
    UvAtlas atlas;
    PartMapping parts;
    Palette palette;

    /// Cross-checks the template, atlas and part table; throws InputError.
    void validate() const;
};

}  // namespace uvatar
