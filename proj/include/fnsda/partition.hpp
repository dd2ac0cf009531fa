#pragma once

// Mode partition strategies. A gate value of 1 routes a mode to the
// environment-specific branch, 0 to the shared branch.

#include <cstddef>
#include <string>
#include <vector>

namespace fnsda {

struct Partition {
    enum class Kind { automatic, low_only, high_only, cross, all_shared };
    Kind kind = Kind::automatic;
    /// cross(p, q): per group of p + q ascending modes, p shared then q specific.
    std::size_t p = 1;
    std::size_t q = 1;
    /// Modes marked specific by low_only / high_only; 0 means half of them.
    std::size_t count = 0;
    /// Allow a trailing partial group when p + q does not divide the mode count.
    bool pad_final_group = false;

    bool learned() const { return kind == Kind::automatic; }
};

/// auto, low, high, cross:P:Q, all-shared.
Partition parse_partition(const std::string& text);
std::string partition_name(const Partition& p);

/// Mode indices sorted by ascending magnitude; ties keep index order.
std::vector<std::size_t> ascending_mode_order(const std::vector<double>& magnitude);

/// Fixed 0/1 gate for every non-automatic strategy.
std::vector<double> manual_gate(const Partition& partition, const std::vector<double>& magnitude);

}  // namespace fnsda
