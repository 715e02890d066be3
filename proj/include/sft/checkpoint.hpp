#pragma once

#include <string>

#include "sft/nn.hpp"

namespace sft {

// Parameter checkpoint: magic "SFTW", version u16, then one record per
// parameter (name length u16, name bytes, rows u32, cols u32, row-major
// little-endian f32 payload). Records are read until end of file.
void save_checkpoint(const LayerStack& stack, const std::string& path);

// Fills the stack's parameters by full name ("<layer>.<param>"). Every
// parameter must be present with matching shape; unknown names are an error.
void load_checkpoint(LayerStack& stack, const std::string& path);

}  // namespace sft
