#pragma once

#include <iosfwd>
#include <string>

#include "ibrl/planner.hpp"

namespace ibrl {

/// Self-describing binary container for planner output: magic "IBRL",
/// format version, game hash, dimension header, then little-endian 64-bit
/// float arrays. Round-trips bit-exactly.
void save_bundle(const PolicyBundle& bundle, const std::string& path);
PolicyBundle load_bundle(const std::string& path);

void write_bundle(const PolicyBundle& bundle, std::ostream& out);
PolicyBundle read_bundle(std::istream& in);

/// Human-readable metadata dump (dimensions, horizon, seeds, hash).
std::string describe_bundle(const PolicyBundle& bundle);

}  // namespace ibrl
