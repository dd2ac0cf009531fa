#include <cmath>
#include <map>

#include "fnsda/binary_io.hpp"
#include "fnsda/errors.hpp"
#include "fnsda/pipelines.hpp"

namespace fnsda {

namespace {

constexpr std::string_view kMagic = "FNSC";

struct Blob {
    Shape shape;
    std::vector<double> data;
};

using BlobMap = std::map<std::string, Blob>;

void put_blob(ByteWriter& w, const std::string& name, const Shape& shape, std::span<const double> data) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
    w.f64s(data);
}

std::vector<std::pair<std::string, double>> config_scalars(const ModelConfig& c) {
    return {{"config.family", static_cast<double>(c.family)},
            {"config.layers", static_cast<double>(c.layers)},
            {"config.width", static_cast<double>(c.width)},
            {"config.modes", static_cast<double>(c.modes)},
            {"config.context_dim", static_cast<double>(c.context_dim)},
            {"config.activation", static_cast<double>(c.activation)},
            {"config.axis", static_cast<double>(c.axis)},
            {"config.use_context", c.use_context ? 1.0 : 0.0},
            {"config.grid_side", static_cast<double>(c.grid_side)},
            {"config.state_channels", static_cast<double>(c.state_channels)},
            {"config.partition.kind", static_cast<double>(c.partition.kind)},
            {"config.partition.p", static_cast<double>(c.partition.p)},
            {"config.partition.q", static_cast<double>(c.partition.q)},
            {"config.partition.count", static_cast<double>(c.partition.count)},
            {"config.partition.pad", c.partition.pad_final_group ? 1.0 : 0.0}};
}

double scalar(const BlobMap& blobs, const std::string& name) {
    auto it = blobs.find(name);
    if (it == blobs.end() || it->second.data.size() != 1) throw FormatError("checkpoint lacks scalar '" + name + "'");
    return it->second.data[0];
}

std::size_t count_of(const BlobMap& blobs, const std::string& name) {
    const double v = scalar(blobs, name);
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e9) throw FormatError("checkpoint field '" + name + "' is invalid");
    return static_cast<std::size_t>(v);
}

template <class E>
E enum_of(const BlobMap& blobs, const std::string& name, int max_value) {
    const std::size_t v = count_of(blobs, name);
    if (v > static_cast<std::size_t>(max_value)) throw FormatError("checkpoint field '" + name + "' out of range");
    return static_cast<E>(v);
}

Tensor tensor_from(const BlobMap& blobs, const std::string& name, const Shape& expect, bool trainable) {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape != expect) {
        throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(it->second.shape) + ", expected " +
                          shape_str(expect));
    }
    Tensor t(expect, it->second.data);
    t.set_requires_grad(trainable);
    return t;
}

void assign(Tensor& dst, const Blob& src, const std::string& name) {
    if (!dst.defined()) throw FormatError("checkpoint has unexpected tensor '" + name + "'");
    if (src.shape != dst.shape()) {
        throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape) + ", expected " +
                          shape_str(dst.shape()));
    }
    std::copy(src.data.begin(), src.data.end(), dst.mutable_values().begin());
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
    ByteWriter w;
    w.raw(kMagic);
    w.u32(Checkpoint::kVersion);
    w.u64(fnv1a64(ck.config_text));
    w.str(ck.config_text);

    ByteWriter body;
    std::uint32_t count = 0;
    auto scalar_blob = [&](const std::string& name, double v) {
        put_blob(body, name, {}, std::span<const double>(&v, 1));
        ++count;
    };
    auto tensor_blob = [&](const std::string& name, const Tensor& t) {
        if (!t.defined()) return;
        put_blob(body, name, t.shape(), t.values());
        ++count;
    };

    for (const auto& [name, v] : config_scalars(ck.params.config)) scalar_blob(name, v);
    scalar_blob("meta.steps", static_cast<double>(ck.meta.steps));
    scalar_blob("meta.seed_lo", static_cast<double>(ck.meta.seed & 0xffffffffULL));
    scalar_blob("meta.seed_hi", static_cast<double>(ck.meta.seed >> 32));
    scalar_blob("meta.initial_loss", ck.meta.initial_loss);
    scalar_blob("meta.final_loss", ck.meta.final_loss);
    scalar_blob("meta.interrupted", ck.meta.interrupted ? 1.0 : 0.0);
    scalar_blob("meta.contexts", static_cast<double>(ck.contexts.size()));
    put_blob(body, "loss_history", {ck.loss_history.size()}, ck.loss_history);
    ++count;
    for (const auto& [name, t] : all_tensors(ck.params)) tensor_blob("model." + name, t);
    for (std::size_t i = 0; i < ck.contexts.size(); ++i) {
        tensor_blob("ctx." + std::to_string(i) + ".c", ck.contexts[i].c);
        tensor_blob("ctx." + std::to_string(i) + ".beta", ck.contexts[i].beta);
    }
    tensor_blob("mean.c", ck.mean_context.c);
    tensor_blob("mean.beta", ck.mean_context.beta);

    w.u32(count);
    w.raw(std::string_view(reinterpret_cast<const char*>(body.bytes().data()), body.bytes().size()));
    w.seal();
    return w.bytes();
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
    ByteReader r(checked_body(bytes));
    if (r.raw(kMagic.size()) != kMagic) throw FormatError("not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != Checkpoint::kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    const std::uint64_t config_digest = r.u64();
    ck.config_text = r.str();
    if (fnv1a64(ck.config_text) != config_digest) throw FormatError("checkpoint config digest mismatch");

    BlobMap blobs;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(4096);
        Blob b;
        const std::uint8_t rank = r.u8();
        for (std::uint8_t k = 0; k < rank; ++k) b.shape.push_back(r.u32());
        const std::size_t n = shape_numel(b.shape);
        if (n * 8 > r.remaining()) throw FormatError("checkpoint blob '" + name + "' is truncated");
        b.data = r.f64s(n);
        if (!blobs.emplace(std::move(name), std::move(b)).second) throw FormatError("duplicate checkpoint blob");
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint");

    ModelConfig c;
    c.family = enum_of<Family>(blobs, "config.family", 3);
    c.layers = count_of(blobs, "config.layers");
    c.width = count_of(blobs, "config.width");
    c.modes = count_of(blobs, "config.modes");
    c.context_dim = count_of(blobs, "config.context_dim");
    c.activation = enum_of<Activation>(blobs, "config.activation", 1);
    c.axis = enum_of<SpectralAxis>(blobs, "config.axis", 1);
    c.use_context = scalar(blobs, "config.use_context") != 0.0;
    c.grid_side = count_of(blobs, "config.grid_side");
    c.state_channels = count_of(blobs, "config.state_channels");
    c.partition.kind = enum_of<Partition::Kind>(blobs, "config.partition.kind", 4);
    c.partition.p = count_of(blobs, "config.partition.p");
    c.partition.q = count_of(blobs, "config.partition.q");
    c.partition.count = count_of(blobs, "config.partition.count");
    c.partition.pad_final_group = scalar(blobs, "config.partition.pad") != 0.0;
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
    }

    ck.params = init_model(c, 0);
    std::size_t model_blobs = 0;
    for (auto& [name, t] : all_tensors(ck.params)) {
        auto it = blobs.find("model." + name);
        if (it == blobs.end()) {
            if (t.defined()) throw FormatError("checkpoint lacks tensor 'model." + name + "'");
            continue;
        }
        Tensor target = t;
        assign(target, it->second, name);
        ++model_blobs;
    }
    for (const auto& [name, b] : blobs) {
        if (name.rfind("model.", 0) == 0) --model_blobs;
    }
    if (model_blobs != 0) throw FormatError("checkpoint has unexpected model tensors");

    ck.meta.steps = count_of(blobs, "meta.steps");
    ck.meta.seed = (static_cast<std::uint64_t>(scalar(blobs, "meta.seed_hi")) << 32) |
                   static_cast<std::uint64_t>(scalar(blobs, "meta.seed_lo"));
    ck.meta.initial_loss = scalar(blobs, "meta.initial_loss");
    ck.meta.final_loss = scalar(blobs, "meta.final_loss");
    ck.meta.interrupted = scalar(blobs, "meta.interrupted") != 0.0;
    auto hist = blobs.find("loss_history");
    if (hist == blobs.end() || hist->second.shape.size() != 1) throw FormatError("checkpoint lacks loss_history");
    ck.loss_history = hist->second.data;

    const std::size_t n_ctx = count_of(blobs, "meta.contexts");
    const Shape c_shape{c.context_dim}, b_shape{c.layers};
    for (std::size_t i = 0; i < n_ctx; ++i) {
        const std::string p = "ctx." + std::to_string(i);
        ck.contexts.push_back({tensor_from(blobs, p + ".c", c_shape, false), tensor_from(blobs, p + ".beta", b_shape, false),
                               "train" + std::to_string(i)});
    }
    if (blobs.count("mean.c")) {
        ck.mean_context = {tensor_from(blobs, "mean.c", c_shape, false), tensor_from(blobs, "mean.beta", b_shape, false),
                           "mean"};
    }
    return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace fnsda
