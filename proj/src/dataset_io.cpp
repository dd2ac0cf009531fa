#include "fnsda/dataset_io.hpp"

#include <algorithm>
#include <cmath>

#include "fnsda/binary_io.hpp"
#include "fnsda/errors.hpp"

namespace fnsda {

namespace {

constexpr char kMagic[] = "FNSD";

void put_env(ByteWriter& w, Split split, const SystemSpec& spec, const std::vector<Trajectory>& trajs) {
    w.u8(static_cast<std::uint8_t>(split));
    ParamMap table = spec.params;
    table["dt"] = spec.dt;
    table["horizon_T"] = spec.horizon_T;
    table["adapt_horizon_Tad"] = spec.adapt_horizon_Tad;
    table["substeps"] = static_cast<double>(spec.substeps);
    if (spec.grid) {
        table["grid_side"] = static_cast<double>(spec.grid->side);
        table["grid_spacing"] = spec.grid->spacing;
    }
    w.u32(static_cast<std::uint32_t>(table.size()));
    for (const auto& [name, value] : table) {
        w.str(name);
        w.f64(value);
    }
    w.u32(static_cast<std::uint32_t>(trajs.size()));
    for (const auto& t : trajs) {
        w.u64(t.seed);
        w.f64(t.dt);
        w.u8(static_cast<std::uint8_t>(t.state_shape.size() + 1));
        w.u32(static_cast<std::uint32_t>(t.n_frames()));
        for (std::size_t d : t.state_shape) w.u32(static_cast<std::uint32_t>(d));
        w.f64s(t.states);
    }
}

SystemSpec take_spec(Family family, ParamMap table) {
    SystemSpec s;
    s.family = family;
    auto pop = [&](const char* name) {
        auto it = table.find(name);
        if (it == table.end()) throw FormatError(std::string("environment table lacks ") + name);
        const double v = it->second;
        table.erase(it);
        return v;
    };
    s.dt = pop("dt");
    s.horizon_T = pop("horizon_T");
    s.adapt_horizon_Tad = pop("adapt_horizon_Tad");
    s.substeps = static_cast<std::size_t>(pop("substeps"));
    if (table.count("grid_side")) {
        Grid g;
        g.side = static_cast<std::size_t>(pop("grid_side"));
        g.spacing = pop("grid_spacing");
        s.grid = g;
    }
    s.params = std::move(table);
    return s;
}

}  // namespace

std::vector<unsigned char> encode_dataset(const DatasetBundle& b) {
    ByteWriter w;
    w.raw(std::string_view(kMagic, 4));
    w.u32(DatasetBundle::kVersion);
    w.u8(static_cast<std::uint8_t>(b.environments.family));
    w.u32(static_cast<std::uint32_t>(b.train.size() + b.eval.size()));
    for (std::size_t e = 0; e < b.train.size(); ++e) put_env(w, Split::train, b.environments.train_envs[e], b.train[e]);
    for (std::size_t e = 0; e < b.eval.size(); ++e) put_env(w, Split::eval, b.environments.eval_envs[e], b.eval[e]);
    w.seal();
    return w.bytes();
}

DatasetBundle decode_dataset(std::span<const unsigned char> bytes) {
    ByteReader r(checked_body(bytes));
    if (r.raw(4) != std::string_view(kMagic, 4)) throw FormatError("not a dataset file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != DatasetBundle::kVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
    const std::uint8_t fam = r.u8();
    if (fam > 3) throw FormatError("unknown family tag " + std::to_string(fam));
    DatasetBundle b;
    b.environments.family = static_cast<Family>(fam);
    const std::uint32_t n_envs = r.u32();
    for (std::uint32_t e = 0; e < n_envs; ++e) {
        const std::uint8_t split = r.u8();
        if (split > 1) throw FormatError("bad split tag");
        const std::uint32_t n_params = r.u32();
        ParamMap table;
        for (std::uint32_t p = 0; p < n_params; ++p) {
            std::string name = r.str(256);
            table[name] = r.f64();
        }
        SystemSpec spec = take_spec(b.environments.family, std::move(table));
        auto& envs = split == 0 ? b.environments.train_envs : b.environments.eval_envs;
        auto& lists = split == 0 ? b.train : b.eval;
        const std::size_t env_index = envs.size();
        envs.push_back(spec);
        const std::uint32_t n_traj = r.u32();
        std::vector<Trajectory> trajs(n_traj);
        for (auto& t : trajs) {
            t.env_index = env_index;
            t.seed = r.u64();
            t.dt = r.f64();
            const std::uint8_t rank = r.u8();
            if (rank < 2) throw FormatError("trajectory rank must be at least 2");
            std::size_t n_frames = r.u32();
            t.state_shape.resize(rank - 1);
            for (auto& d : t.state_shape) d = r.u32();
            const std::size_t count = n_frames * shape_numel(t.state_shape);
            t.states = r.f64s(count);
        }
        lists.push_back(std::move(trajs));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after dataset body");
    b.environments.n_tr = b.train.empty() ? 0 : b.train.front().size();
    b.environments.n_ev = b.eval.empty() ? 0 : (b.eval.front().empty() ? 0 : b.eval.front().size() - 1);
    return b;
}

void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& path) {
    write_file_atomic(path, encode_dataset(bundle));
}

DatasetBundle read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

DatasetCheck verify_dataset(const std::filesystem::path& path) {
    DatasetCheck c;
    auto fail = [&](std::string msg) {
        c.ok = false;
        c.problems.push_back(std::move(msg));
    };
    DatasetBundle b;
    try {
        const auto bytes = read_file(path);
        c.digest = fnv1a64(bytes);
        b = decode_dataset(bytes);
    } catch (const std::exception& e) {
        fail(e.what());
        return c;
    }
    auto check_split = [&](const char* name, const std::vector<SystemSpec>& envs,
                           const std::vector<std::vector<Trajectory>>& lists) {
        for (std::size_t e = 0; e < envs.size(); ++e) {
            const std::string where = std::string(name) + " env " + std::to_string(e);
            try {
                envs[e].validate();
            } catch (const std::exception& ex) {
                fail(where + ": " + ex.what());
                continue;
            }
            const Shape expect = state_shape(envs[e]);
            for (std::size_t j = 0; j < lists[e].size(); ++j) {
                const Trajectory& t = lists[e][j];
                const std::string tw = where + " trajectory " + std::to_string(j);
                ++c.trajectories;
                if (t.state_shape != expect) fail(tw + ": state shape " + shape_str(t.state_shape));
                if (t.n_frames() != envs[e].n_steps() + 1) fail(tw + ": frame count " + std::to_string(t.n_frames()));
                if (t.dt != envs[e].dt) fail(tw + ": dt mismatch");
                if (!std::all_of(t.states.begin(), t.states.end(), [](double v) { return std::isfinite(v); })) {
                    fail(tw + ": non-finite entries");
                }
            }
        }
    };
    check_split("train", b.environments.train_envs, b.train);
    check_split("eval", b.environments.eval_envs, b.eval);
    for (const auto& e : b.environments.eval_envs)
        for (const auto& t : b.environments.train_envs)
            if (e.params == t.params) fail("an evaluation environment duplicates a training environment");
    return c;
}

}  // namespace fnsda
