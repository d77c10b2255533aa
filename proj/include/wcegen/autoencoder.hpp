#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace wce {

struct AEConfig {
    int downsample_factor = 4;  // 1, 2 or 4
    int latent_channels = 4;
    /// One width per resolution level: log2(downsample_factor) + 1 entries.
    std::vector<int> hidden_widths{32, 64, 64};
    double kl_weight = 1e-6;

    void validate() const;
    std::vector<std::string> violations() const;
    friend bool operator==(const AEConfig&, const AEConfig&) = default;
};

struct Posterior {
    torch::Tensor mean;
    torch::Tensor logvar;
};

/// KL-regularized convolutional autoencoder. Latents handed to diffusion are
/// the posterior mean multiplied by `latent_scale`, a scalar fitted once on
/// the training set so latents have roughly unit standard deviation.
class AutoencoderImpl : public torch::nn::Module {
public:
    explicit AutoencoderImpl(AEConfig cfg);

    Posterior posterior(const torch::Tensor& images);
    /// Decoder output before clamping; used by the training loss.
    torch::Tensor decode_raw(const torch::Tensor& unscaled_latent);

    /// Scaled posterior mean, [B, latent_channels, H/f, W/f].
    torch::Tensor encode(const torch::Tensor& images);
    /// Images in [0, 1], [B, 3, H, W].
    torch::Tensor decode(const torch::Tensor& latent);

    const AEConfig& config() const { return cfg_; }
    double latent_scale() const { return latent_scale_.item<double>(); }
    void set_latent_scale(double s);

private:
    void check_image_shape(const torch::Tensor& images) const;

    AEConfig cfg_;
    torch::nn::Sequential encoder_{nullptr};
    torch::nn::Sequential decoder_{nullptr};
    torch::Tensor latent_scale_;
};
TORCH_MODULE(Autoencoder);

Autoencoder build_autoencoder(const AEConfig& cfg, std::uint64_t seed);

/// Reconstruction MSE plus kl_weight × mean KL(q(z|x) || N(0, I)), with the
/// latent drawn by reparameterization from `gen`.
torch::Tensor autoencoder_loss(Autoencoder& ae, const torch::Tensor& images, torch::Generator& gen);

struct AETrainOptions {
    int steps = 2000;
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;
    std::function<void(int step, double loss)> on_step;
};

struct AETrainResult {
    Autoencoder model{nullptr};
    std::vector<double> losses;
};

/// Trains on `images` ([N,3,H,W] in [0,1]), then fits the latent scale.
/// Throws EmptyDataset or NaNLoss("step k ...").
AETrainResult train_autoencoder(const torch::Tensor& images, const AEConfig& cfg,
                                const AETrainOptions& options);

/// 1 / std of posterior means over `images`, evaluated in chunks.
double fit_latent_scale(Autoencoder& ae, const torch::Tensor& images);

/// Encodes in chunks without gradients.
torch::Tensor encode_all(Autoencoder& ae, const torch::Tensor& images, int64_t chunk = 64);

/// Index of the `count` samples drawn at `step` from an epoch-wise shuffled
/// stream; a pure function of (seed, step), so resumed runs see the same batches.
torch::Tensor batch_indices(std::uint64_t seed, int64_t step, int64_t count, int64_t dataset_size);

}  // namespace wce
