#pragma once

// Plan file loading: one JSON document whose fields mirror Plan and TaskSpec
// one for one (see docs/plan_schema.md). Parsing is strict -- an unknown key
// anywhere in the document is rejected -- so a typo'd optional field can
// never silently change a run. Semantic validation stays with validate_plan;
// this layer only guards the file shape.

#include "rops/plan_model.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace rops {

// origin is used in error messages only (a path, or "<string>" for tests)
Plan parse_plan_text(const std::string& text, const std::string& origin = "<string>");
Plan load_plan_file(const std::string& path);

// whole file as bytes; IoError carries the path
std::string read_file(const std::string& path);

// FNV-1a 64-bit; run manifests store this digest of the raw plan file
std::uint64_t fnv1a64(const void* data, std::size_t n);

} // namespace rops
