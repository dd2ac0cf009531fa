#pragma once

// FNSDA surrogate: lift -> L Fourier layers -> projection.
//
// Latents are channels-last. ODE families transform along the lifted latent
// axis ([B, m] viewed as [B, m, 1], one spectral channel); spatial families
// transform over the grid ([B, H, W, m]) keeping kx in [0, k) U [N - k, N)
// and ky in [0, k), i.e. 2k^2 mode pairs. Retained modes are handled as a
// flat [B, P, C] complex tensor, P the mode count and C the spectral channels.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fnsda/dynamics.hpp"
#include "fnsda/partition.hpp"
#include "fnsda/tensor.hpp"

namespace fnsda {

enum class Activation { swish, relu };
enum class SpectralAxis { latent_1d, spatial_2d };

Activation parse_activation(const std::string& s);
std::string activation_name(Activation a);

struct ModelConfig {
    Family family = Family::LV;
    std::size_t layers = 2;
    std::size_t width = 32;
    std::size_t modes = 10;
    std::size_t context_dim = 10;
    Activation activation = Activation::swish;
    Partition partition;
    SpectralAxis axis = SpectralAxis::latent_1d;
    /// false for the ERM baseline: no contexts, one shared slope per layer.
    bool use_context = true;
    std::size_t grid_side = 32;
    std::size_t state_channels = 2;

    std::size_t spectral_channels() const { return axis == SpectralAxis::latent_1d ? 1 : width; }
    std::size_t mode_count() const { return axis == SpectralAxis::latent_1d ? modes : 2 * modes * modes; }
    std::size_t lift_inputs() const { return state_channels + (axis == SpectralAxis::spatial_2d ? 2 : 0); }
    /// Whether the environment branch exists at all.
    bool has_env_branch() const { return use_context && partition.kind != Partition::Kind::all_shared; }
    /// ConfigError on inconsistent settings.
    void validate() const;
};

ModelConfig default_model_config(Family f);

struct FourierLayerParams {
    Tensor w_res;       // [m, m]
    Tensor b;           // [m]
    Tensor r_shared_re; // [P, C, C]
    Tensor r_shared_im; // [P, C, C]
    Tensor w_env;       // [P, C, C, 2, d_c]
    Tensor gate_logits; // [P]
};

struct ModelParams {
    ModelConfig config;
    Tensor lift_w, lift_b;
    std::vector<FourierLayerParams> layers;
    Tensor proj1_w, proj1_b, proj2_w, proj2_b;
    /// [L]; only used when config.use_context is false.
    Tensor shared_beta;
};

struct EnvContext {
    Tensor c;    // [d_c]
    Tensor beta; // [L]
    std::string tag;
};

using NamedTensor = std::pair<std::string, Tensor>;

/// Deterministic initialization from `seed`.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);
/// c = 0, beta = 1, both trainable.
EnvContext make_context(const ModelConfig& config, const std::string& tag = "");

/// Every tensor of the model in a fixed order, including fixed gates and
/// unused branches, for checkpointing and digests.
std::vector<NamedTensor> all_tensors(const ModelParams& params);
/// The trainable shared parameters theta.
std::vector<NamedTensor> trainable_tensors(const ModelParams& params);

std::size_t count_params(const ModelParams& params);
std::size_t count_adapted_params(const ModelConfig& config);

/// Mode magnitudes |k|^2 in flat mode order, used by manual partitions.
std::vector<double> mode_magnitudes(const ModelConfig& config);

// ---------------------------------------------------------------------------
// Building blocks

/// [B, state...] -> channels-last latent.
Tensor lift(const ModelParams& params, const Tensor& u);

/// Retained modes of a channels-last latent as [B, P, C].
ComplexTensor retained_modes(const ModelConfig& config, const Tensor& z);
/// Zero-pads [B, P, C] modes and inverts to a latent shaped like `like`.
Tensor from_retained_modes(const ModelConfig& config, const ComplexTensor& modes, const Shape& like);

struct SplitModes {
    ComplexTensor env;
    ComplexTensor shared;
};
/// K = hard_sigmoid(logits) per mode along axis 1 of [B, P, C].
SplitModes split_modes(const ComplexTensor& modes, const Tensor& gate_logits);

/// W_env [P, C, C, 2, d_c] contracted with c [d_c] -> complex [P, C, C].
ComplexTensor condition_weights(const Tensor& w_env, const Tensor& c);

/// c may be undefined when the environment branch is absent.
Tensor spectral_kernel(const ModelConfig& config, const FourierLayerParams& layer, const Tensor& c, const Tensor& z);
Tensor fourier_layer(const ModelConfig& config, const FourierLayerParams& layer, const Tensor& c, const Tensor& beta,
                     const Tensor& z);

/// Estimated time derivative, same shape as u ([B, state...]).
Tensor model_forward(const ModelParams& params, const EnvContext& ctx, const Tensor& u);

}  // namespace fnsda
