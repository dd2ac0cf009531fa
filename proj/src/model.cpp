#include "fnsda/model.hpp"

#include <cmath>
#include <numeric>

#include "fnsda/errors.hpp"
#include "fnsda/fft.hpp"
#include "fnsda/rng.hpp"

namespace fnsda {

Activation parse_activation(const std::string& s) {
    if (s == "swish") return Activation::swish;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + s + "' (expected swish or relu)");
}

std::string activation_name(Activation a) { return a == Activation::swish ? "swish" : "relu"; }

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("model needs at least one Fourier layer");
    if (width < 1 || modes < 1) throw ConfigError("model width and modes must be positive");
    if (use_context && context_dim < 1) throw ConfigError("context_dim must be positive");
    if (!use_context && partition.kind != Partition::Kind::all_shared) {
        throw ConfigError("a model without contexts must use the all-shared partition");
    }
    if (axis == SpectralAxis::latent_1d) {
        if (is_spatial(family)) throw ConfigError("spatial families need the spatial_2d spectral axis");
        if (!dft::is_power_of_two(width)) throw ConfigError("latent width must be a power of two");
        if (width < 2 * modes) throw ConfigError("latent width must be at least twice the mode count");
    } else {
        if (!is_spatial(family)) throw ConfigError("ODE families need the latent_1d spectral axis");
        if (!dft::is_power_of_two(grid_side)) throw ConfigError("grid side must be a power of two");
        if (2 * modes > grid_side) throw ConfigError("modes must not exceed half the grid side");
    }
    if (partition.kind != Partition::Kind::automatic && partition.kind != Partition::Kind::all_shared) {
        manual_gate(partition, mode_magnitudes(*this));
    }
}

ModelConfig default_model_config(Family f) {
    ModelConfig c;
    c.family = f;
    switch (f) {
        case Family::LV:
            c.layers = 2, c.width = 32, c.modes = 10, c.context_dim = 10, c.state_channels = 2;
            break;
        case Family::GO:
            c.layers = 2, c.width = 32, c.modes = 10, c.context_dim = 20, c.state_channels = 7;
            break;
        case Family::GS:
            c.layers = 4, c.width = 16, c.modes = 12, c.context_dim = 20, c.state_channels = 2;
            c.axis = SpectralAxis::spatial_2d;
            break;
        case Family::NS:
            c.layers = 4, c.width = 16, c.modes = 12, c.context_dim = 10, c.state_channels = 1;
            c.axis = SpectralAxis::spatial_2d;
            break;
    }
    return c;
}

std::vector<double> mode_magnitudes(const ModelConfig& config) {
    const std::size_t k = config.modes;
    std::vector<double> mag;
    if (config.axis == SpectralAxis::latent_1d) {
        for (std::size_t i = 0; i < k; ++i) mag.push_back(static_cast<double>(i * i));
        return mag;
    }
    for (std::size_t a = 0; a < 2 * k; ++a) {
        const double kx = a < k ? static_cast<double>(a) : static_cast<double>(a) - 2.0 * static_cast<double>(k);
        for (std::size_t j = 0; j < k; ++j) mag.push_back(kx * kx + static_cast<double>(j * j));
    }
    return mag;
}

// ---------------------------------------------------------------------------

namespace {

Tensor uniform(Rng& rng, Shape shape, double bound, bool trainable) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    Tensor t(std::move(shape), std::move(v));
    t.set_requires_grad(trainable);
    return t;
}

Tensor filled(Shape shape, double value, bool trainable) {
    const std::size_t n = shape_numel(shape);
    Tensor t(std::move(shape), std::vector<double>(n, value));
    t.set_requires_grad(trainable);
    return t;
}

std::vector<std::size_t> iota(std::size_t n, std::size_t start = 0) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), start);
    return v;
}

std::vector<std::size_t> kx_indices(const ModelConfig& c) {
    auto idx = iota(c.modes);
    auto hi = iota(c.modes, c.grid_side - c.modes);
    idx.insert(idx.end(), hi.begin(), hi.end());
    return idx;
}

Tensor activate(Activation a, const Tensor& x, const Tensor& beta) {
    return a == Activation::swish ? swish(x, beta) : relu(x);
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    Rng rng(seed);
    const std::size_t m = config.width, in = config.lift_inputs();
    const std::size_t P = config.mode_count(), C = config.spectral_channels();
    const double lift_bound = 1.0 / std::sqrt(static_cast<double>(in));
    const double width_bound = 1.0 / std::sqrt(static_cast<double>(m));
    const double spectral_bound = 1.0 / static_cast<double>(m * config.modes);

    p.lift_w = uniform(rng, {m, in}, lift_bound, true);
    p.lift_b = uniform(rng, {m}, lift_bound, true);
    const bool env_branch = config.has_env_branch();
    std::vector<double> fixed_gate(P, 0.0);
    if (config.partition.kind != Partition::Kind::automatic) {
        if (config.partition.kind != Partition::Kind::all_shared) fixed_gate = manual_gate(config.partition, mode_magnitudes(config));
    }
    for (std::size_t l = 0; l < config.layers; ++l) {
        FourierLayerParams layer;
        layer.w_res = uniform(rng, {m, m}, width_bound, true);
        layer.b = uniform(rng, {m}, width_bound, true);
        layer.r_shared_re = uniform(rng, {P, C, C}, spectral_bound, true);
        layer.r_shared_im = uniform(rng, {P, C, C}, spectral_bound, true);
        layer.w_env = uniform(rng, {P, C, C, 2, config.context_dim}, spectral_bound, env_branch);
        if (config.partition.learned() && env_branch) {
            layer.gate_logits = filled({P}, 0.0, true);
        } else {
            std::vector<double> logits(P);
            for (std::size_t i = 0; i < P; ++i) logits[i] = fixed_gate[i] > 0.5 ? 3.0 : -3.0;
            layer.gate_logits = Tensor({P}, std::move(logits));
        }
        p.layers.push_back(std::move(layer));
    }
    p.proj1_w = uniform(rng, {m, m}, width_bound, true);
    p.proj1_b = uniform(rng, {m}, width_bound, true);
    p.proj2_w = uniform(rng, {config.state_channels, m}, width_bound, true);
    p.proj2_b = uniform(rng, {config.state_channels}, width_bound, true);
    if (!config.use_context) p.shared_beta = filled({config.layers}, 1.0, true);
    return p;
}

EnvContext make_context(const ModelConfig& config, const std::string& tag) {
    EnvContext ctx;
    ctx.c = filled({config.context_dim}, 0.0, true);
    ctx.beta = filled({config.layers}, 1.0, true);
    ctx.tag = tag;
    return ctx;
}

std::vector<NamedTensor> all_tensors(const ModelParams& p) {
    std::vector<NamedTensor> out{{"lift.w", p.lift_w}, {"lift.b", p.lift_b}};
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& L = p.layers[l];
        const std::string pre = "layer" + std::to_string(l) + ".";
        out.emplace_back(pre + "w_res", L.w_res);
        out.emplace_back(pre + "b", L.b);
        out.emplace_back(pre + "r_shared_re", L.r_shared_re);
        out.emplace_back(pre + "r_shared_im", L.r_shared_im);
        out.emplace_back(pre + "w_env", L.w_env);
        out.emplace_back(pre + "gate", L.gate_logits);
    }
    out.emplace_back("proj1.w", p.proj1_w);
    out.emplace_back("proj1.b", p.proj1_b);
    out.emplace_back("proj2.w", p.proj2_w);
    out.emplace_back("proj2.b", p.proj2_b);
    if (p.shared_beta.defined()) out.emplace_back("shared_beta", p.shared_beta);
    return out;
}

std::vector<NamedTensor> trainable_tensors(const ModelParams& p) {
    std::vector<NamedTensor> out;
    for (auto& nt : all_tensors(p))
        if (nt.second.requires_grad()) out.push_back(nt);
    return out;
}

std::size_t count_params(const ModelParams& p) {
    std::size_t n = 0;
    for (const auto& nt : trainable_tensors(p)) n += nt.second.size();
    return n;
}

std::size_t count_adapted_params(const ModelConfig& c) { return c.use_context ? c.context_dim + c.layers : 0; }

// ---------------------------------------------------------------------------

Tensor lift(const ModelParams& params, const Tensor& u) {
    const ModelConfig& c = params.config;
    if (c.axis == SpectralAxis::latent_1d) {
        if (u.rank() != 2 || u.shape()[1] != c.state_channels) {
            throw ShapeError("lift expects [B, " + std::to_string(c.state_channels) + "], got " + shape_str(u.shape()));
        }
        return linear(u, params.lift_w, params.lift_b);
    }
    const std::size_t n = c.grid_side;
    if (u.rank() != 4 || u.shape()[1] != c.state_channels || u.shape()[2] != n || u.shape()[3] != n) {
        throw ShapeError("lift expects [B, " + std::to_string(c.state_channels) + ", " + std::to_string(n) + ", " +
                         std::to_string(n) + "], got " + shape_str(u.shape()));
    }
    const std::size_t batch = u.shape()[0];
    std::vector<double> coords(batch * n * n * 2);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t o = ((b * n + i) * n + j) * 2;
                coords[o] = static_cast<double>(i) / static_cast<double>(n);
                coords[o + 1] = static_cast<double>(j) / static_cast<double>(n);
            }
    Tensor x = concat(permute(u, {0, 2, 3, 1}), Tensor({batch, n, n, 2}, std::move(coords)), 3);
    return linear(x, params.lift_w, params.lift_b);
}

ComplexTensor retained_modes(const ModelConfig& c, const Tensor& z) {
    if (c.axis == SpectralAxis::latent_1d) {
        const std::size_t batch = z.shape()[0];
        ComplexTensor full = rfft(reshape(z, {batch, c.width, 1}), 1);
        const auto idx = iota(c.modes);
        return {take(full.re, 1, idx), take(full.im, 1, idx)};
    }
    const std::size_t batch = z.shape()[0], m = c.width, k = c.modes;
    ComplexTensor half = rfft(z, 2);
    const auto ky = iota(k);
    ComplexTensor cols{take(half.re, 2, ky), take(half.im, 2, ky)};
    ComplexTensor rows = fft(cols, 1);
    const auto kx = kx_indices(c);
    const Shape flat{batch, 2 * k * k, m};
    return {reshape(take(rows.re, 1, kx), flat), reshape(take(rows.im, 1, kx), flat)};
}

Tensor from_retained_modes(const ModelConfig& c, const ComplexTensor& modes, const Shape& like) {
    const std::size_t batch = like[0];
    if (c.axis == SpectralAxis::latent_1d) {
        const auto idx = iota(c.modes);
        const std::size_t half = c.width / 2 + 1;
        ComplexTensor padded{put(modes.re, 1, idx, half), put(modes.im, 1, idx, half)};
        return reshape(irfft(padded, 1, c.width), like);
    }
    const std::size_t m = c.width, k = c.modes, n = c.grid_side;
    const Shape grid{batch, 2 * k, k, m};
    const auto kx = kx_indices(c);
    ComplexTensor rows{put(reshape(modes.re, grid), 1, kx, n), put(reshape(modes.im, grid), 1, kx, n)};
    ComplexTensor cols = ifft(rows, 1);
    const auto ky = iota(k);
    ComplexTensor half{put(cols.re, 2, ky, n / 2 + 1), put(cols.im, 2, ky, n / 2 + 1)};
    return irfft(half, 2, n);
}

SplitModes split_modes(const ComplexTensor& modes, const Tensor& gate_logits) {
    Tensor k = hard_sigmoid(gate_logits);
    Tensor kc = affine(k, -1.0, 1.0);
    return {{mul_axis(modes.re, k, 1), mul_axis(modes.im, k, 1)},
            {mul_axis(modes.re, kc, 1), mul_axis(modes.im, kc, 1)}};
}

ComplexTensor condition_weights(const Tensor& w_env, const Tensor& c) {
    if (w_env.rank() != 5 || w_env.shape()[3] != 2 || c.rank() != 1 || w_env.shape()[4] != c.size()) {
        throw ShapeError("condition_weights: W_env " + shape_str(w_env.shape()) + " vs context " + shape_str(c.shape()));
    }
    const Shape s{w_env.shape()[0], w_env.shape()[1], w_env.shape()[2]};
    Tensor r = contract(w_env, c, 1);
    return {reshape(take(r, 3, {0}), s), reshape(take(r, 3, {1}), s)};
}

Tensor spectral_kernel(const ModelConfig& config, const FourierLayerParams& layer, const Tensor& c, const Tensor& z) {
    ComplexTensor modes = retained_modes(config, z);
    const ComplexTensor shared_w{layer.r_shared_re, layer.r_shared_im};
    ComplexTensor out;
    if (!config.has_env_branch()) {
        out = complex_mode_mul(shared_w, modes);
    } else {
        if (!c.defined()) throw UsageError("spectral_kernel: environment branch needs a context vector");
        SplitModes split = split_modes(modes, layer.gate_logits);
        out = complex_add(complex_mode_mul(condition_weights(layer.w_env, c), split.env),
                          complex_mode_mul(shared_w, split.shared));
    }
    return from_retained_modes(config, out, z.shape());
}

Tensor fourier_layer(const ModelConfig& config, const FourierLayerParams& layer, const Tensor& c, const Tensor& beta,
                     const Tensor& z) {
    Tensor pre = add(linear(z, layer.w_res, layer.b), spectral_kernel(config, layer, c, z));
    return activate(config.activation, pre, beta);
}

Tensor model_forward(const ModelParams& params, const EnvContext& ctx, const Tensor& u) {
    const ModelConfig& c = params.config;
    const Tensor& betas = c.use_context ? ctx.beta : params.shared_beta;
    if (!betas.defined() || betas.size() != c.layers) throw UsageError("model_forward: missing per-layer slopes");
    if (c.has_env_branch() && (!ctx.c.defined() || ctx.c.size() != c.context_dim)) {
        throw UsageError("model_forward: context vector must have " + std::to_string(c.context_dim) + " entries");
    }
    Tensor z = lift(params, u);
    for (std::size_t l = 0; l < c.layers; ++l) {
        z = fourier_layer(c, params.layers[l], c.use_context ? ctx.c : Tensor(), take(betas, 0, {l}), z);
    }
    Tensor h = activate(c.activation, linear(z, params.proj1_w, params.proj1_b), Tensor::scalar(1.0));
    Tensor out = linear(h, params.proj2_w, params.proj2_b);
    if (c.axis == SpectralAxis::spatial_2d) out = permute(out, {0, 3, 1, 2});
    return out;
}

}  // namespace fnsda
