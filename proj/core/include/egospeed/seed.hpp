#pragma once

#include <cstdint>
#include <string_view>

namespace egospeed {

// Keyed sub-seed derivation: every RNG stream in a run comes from one master
// seed mixed with a stable key.
std::uint64_t derive_seed(std::uint64_t master, std::string_view key);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key);

}  // namespace egospeed
