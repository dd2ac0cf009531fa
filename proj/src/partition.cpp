#include "fnsda/partition.hpp"

#include <algorithm>
#include <numeric>

#include "fnsda/errors.hpp"

namespace fnsda {

Partition parse_partition(const std::string& text) {
    Partition p;
    if (text == "auto" || text == "automatic") {
        p.kind = Partition::Kind::automatic;
    } else if (text == "low" || text == "low_only") {
        p.kind = Partition::Kind::low_only;
    } else if (text == "high" || text == "high_only") {
        p.kind = Partition::Kind::high_only;
    } else if (text == "all-shared" || text == "all_shared") {
        p.kind = Partition::Kind::all_shared;
    } else if (text.rfind("cross:", 0) == 0) {
        p.kind = Partition::Kind::cross;
        const auto rest = text.substr(6);
        const auto colon = rest.find(':');
        if (colon == std::string::npos) throw ConfigError("cross partition needs cross:P:Q, got '" + text + "'");
        try {
            std::size_t used = 0;
            const auto ps = rest.substr(0, colon), qs = rest.substr(colon + 1);
            const long pv = std::stol(ps, &used);
            if (used != ps.size()) throw ConfigError("bad p");
            const long qv = std::stol(qs, &used);
            if (used != qs.size()) throw ConfigError("bad q");
            if (pv < 0 || qv < 0 || pv + qv == 0) throw ConfigError("bad p, q");
            p.p = static_cast<std::size_t>(pv);
            p.q = static_cast<std::size_t>(qv);
        } catch (const std::exception&) {
            throw ConfigError("cross partition needs non-negative integers P:Q, got '" + text + "'");
        }
    } else {
        throw ConfigError("unknown partition '" + text + "' (expected auto, low, high, cross:P:Q or all-shared)");
    }
    return p;
}

std::string partition_name(const Partition& p) {
    switch (p.kind) {
        case Partition::Kind::automatic: return "auto";
        case Partition::Kind::low_only: return "low";
        case Partition::Kind::high_only: return "high";
        case Partition::Kind::all_shared: return "all-shared";
        case Partition::Kind::cross: return "cross:" + std::to_string(p.p) + ":" + std::to_string(p.q);
    }
    return "?";
}

std::vector<std::size_t> ascending_mode_order(const std::vector<double>& magnitude) {
    std::vector<std::size_t> order(magnitude.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return magnitude[a] < magnitude[b]; });
    return order;
}

std::vector<double> manual_gate(const Partition& partition, const std::vector<double>& magnitude) {
    const std::size_t n = magnitude.size();
    const auto order = ascending_mode_order(magnitude);
    std::vector<double> gate(n, 0.0);
    const std::size_t count = partition.count == 0 ? n / 2 : std::min(partition.count, n);
    switch (partition.kind) {
        case Partition::Kind::automatic:
            throw UsageError("automatic partition has a learned gate");
        case Partition::Kind::all_shared:
            break;
        case Partition::Kind::low_only:
            for (std::size_t r = 0; r < count; ++r) gate[order[r]] = 1.0;
            break;
        case Partition::Kind::high_only:
            for (std::size_t r = n - count; r < n; ++r) gate[order[r]] = 1.0;
            break;
        case Partition::Kind::cross: {
            const std::size_t group = partition.p + partition.q;
            if (n % group != 0 && !partition.pad_final_group) {
                throw ConfigError("cross:" + std::to_string(partition.p) + ":" + std::to_string(partition.q) +
                                  " groups do not divide " + std::to_string(n) +
                                  " modes (set pad_final_group to allow a partial group)");
            }
            for (std::size_t r = 0; r < n; ++r) gate[order[r]] = (r % group) >= partition.p ? 1.0 : 0.0;
            break;
        }
    }
    return gate;
}

}  // namespace fnsda
