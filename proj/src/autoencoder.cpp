#include "wcegen/autoencoder.hpp"

#include <cmath>
#include <sstream>

#include "wcegen/errors.hpp"
#include "wcegen/rng.hpp"
#include "wcegen/tensors.hpp"

namespace nn = torch::nn;

namespace wce {
namespace {

constexpr std::uint64_t kEpochDomain = 0xE90C'4000ull;
constexpr std::uint64_t kAEStepDomain = 0xAE57'E900ull;

nn::Conv2d conv(int64_t in, int64_t out, int64_t stride = 1) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

int log2_exact(int f) {
    int n = 0;
    while ((1 << n) < f) ++n;
    return (1 << n) == f ? n : -1;
}

}  // namespace

std::vector<std::string> AEConfig::violations() const {
    std::vector<std::string> out;
    const int n = log2_exact(downsample_factor);
    if (downsample_factor != 1 && downsample_factor != 2 && downsample_factor != 4)
        out.push_back("ae.downsample_factor must be 1, 2 or 4");
    else if (static_cast<int>(hidden_widths.size()) != n + 1) {
        std::ostringstream os;
        os << "ae.hidden_widths needs " << n + 1 << " entries for downsample_factor "
           << downsample_factor << ", got " << hidden_widths.size();
        out.push_back(os.str());
    }
    for (int w : hidden_widths)
        if (w < 1) out.push_back("ae.hidden_widths entries must be >= 1");
    if (latent_channels < 1) out.push_back("ae.latent_channels must be >= 1");
    if (!(kl_weight >= 0.0)) out.push_back("ae.kl_weight must be nonnegative");
    return out;
}

void AEConfig::validate() const {
    const auto v = violations();
    if (!v.empty()) throw ConfigError(v.front());
}

AutoencoderImpl::AutoencoderImpl(AEConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto& w = cfg_.hidden_widths;
    const int levels = static_cast<int>(w.size());

    encoder_ = nn::Sequential();
    encoder_->push_back(conv(3, w[0]));
    encoder_->push_back(nn::SiLU());
    for (int i = 1; i < levels; ++i) {
        encoder_->push_back(conv(w[i - 1], w[i], 2));
        encoder_->push_back(nn::SiLU());
        encoder_->push_back(conv(w[i], w[i]));
        encoder_->push_back(nn::SiLU());
    }
    encoder_->push_back(conv(w[levels - 1], 2 * cfg_.latent_channels));
    register_module("encoder", encoder_);

    decoder_ = nn::Sequential();
    decoder_->push_back(conv(cfg_.latent_channels, w[levels - 1]));
    decoder_->push_back(nn::SiLU());
    for (int i = levels - 1; i >= 1; --i) {
        decoder_->push_back(nn::Upsample(
            nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
        decoder_->push_back(conv(w[i], w[i - 1]));
        decoder_->push_back(nn::SiLU());
        decoder_->push_back(conv(w[i - 1], w[i - 1]));
        decoder_->push_back(nn::SiLU());
    }
    decoder_->push_back(conv(w[0], 3));
    register_module("decoder", decoder_);

    latent_scale_ = register_buffer("latent_scale", torch::ones({1}, torch::kFloat64));
}

void AutoencoderImpl::check_image_shape(const torch::Tensor& images) const {
    const int f = cfg_.downsample_factor;
    if (images.dim() != 4 || images.size(1) != 3) {
        std::ostringstream os;
        os << "expected images [B,3,H,W], got " << images.sizes();
        throw ShapeError(os.str());
    }
    if (images.size(2) % f != 0 || images.size(3) % f != 0) {
        std::ostringstream os;
        os << "downsample factor " << f << " does not divide " << images.size(2) << "x" << images.size(3);
        throw ShapeError(os.str());
    }
}

Posterior AutoencoderImpl::posterior(const torch::Tensor& images) {
    check_image_shape(images);
    auto moments = encoder_->forward(images);
    auto parts = moments.chunk(2, 1);
    return {parts[0], parts[1].clamp(-30.0, 20.0)};
}

torch::Tensor AutoencoderImpl::decode_raw(const torch::Tensor& z) {
    if (z.dim() != 4 || z.size(1) != cfg_.latent_channels) {
        std::ostringstream os;
        os << "expected latent [B," << cfg_.latent_channels << ",h,w], got " << z.sizes();
        throw ShapeError(os.str());
    }
    return decoder_->forward(z);
}

torch::Tensor AutoencoderImpl::encode(const torch::Tensor& images) {
    return posterior(images).mean * latent_scale();
}

torch::Tensor AutoencoderImpl::decode(const torch::Tensor& latent) {
    return decode_raw(latent / latent_scale()).clamp(0.0, 1.0);
}

void AutoencoderImpl::set_latent_scale(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ShapeError("latent scale must be positive and finite");
    torch::NoGradGuard no_grad;
    latent_scale_.fill_(s);
}

Autoencoder build_autoencoder(const AEConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    torch::manual_seed(seed);
    return Autoencoder(cfg);
}

torch::Tensor autoencoder_loss(Autoencoder& ae, const torch::Tensor& images, torch::Generator& gen) {
    const auto post = ae->posterior(images);
    const auto noise = torch::randn(post.mean.sizes(), gen, post.mean.options());
    const auto z = post.mean + torch::exp(0.5 * post.logvar) * noise;
    const auto recon = ae->decode_raw(z);
    const auto mse = (recon - images).pow(2).mean();
    const auto kl = 0.5 * (post.mean.pow(2) + post.logvar.exp() - 1.0 - post.logvar).mean();
    return mse + ae->config().kl_weight * kl;
}

torch::Tensor batch_indices(std::uint64_t seed, int64_t step, int64_t count, int64_t dataset_size) {
    auto out = torch::empty({count}, torch::kInt64);
    auto* dst = out.data_ptr<int64_t>();
    int64_t cached_epoch = -1;
    torch::Tensor perm;
    for (int64_t b = 0; b < count; ++b) {
        const int64_t global = step * count + b;
        const int64_t epoch = global / dataset_size;
        if (epoch != cached_epoch) {
            auto gen = make_generator(stream_key(seed, static_cast<std::uint64_t>(epoch), kEpochDomain));
            perm = torch::randperm(dataset_size, gen, torch::kInt64);
            cached_epoch = epoch;
        }
        dst[b] = perm.data_ptr<int64_t>()[global % dataset_size];
    }
    return out;
}

torch::Tensor encode_all(Autoencoder& ae, const torch::Tensor& images, int64_t chunk) {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (int64_t i = 0; i < images.size(0); i += chunk)
        parts.push_back(ae->encode(images.slice(0, i, std::min(i + chunk, images.size(0)))));
    return torch::cat(parts);
}

double fit_latent_scale(Autoencoder& ae, const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    ae->set_latent_scale(1.0);
    const auto latents = encode_all(ae, images);
    const double std = latents.to(torch::kFloat64).std().item<double>();
    const double scale = std > 1e-8 ? 1.0 / std : 1.0;
    ae->set_latent_scale(scale);
    return scale;
}

AETrainResult train_autoencoder(const torch::Tensor& images, const AEConfig& cfg,
                                const AETrainOptions& options) {
    if (!images.defined() || images.size(0) == 0) throw EmptyDataset("autoencoder training set is empty");
    if (options.steps < 1 || options.batch_size < 1) throw ConfigError("steps and batch_size must be >= 1");
    AETrainResult result;
    result.model = build_autoencoder(cfg, options.seed);
    result.model->train();
    torch::optim::Adam opt(result.model->parameters(), torch::optim::AdamOptions(options.learning_rate));
    const int64_t n = images.size(0);
    for (int step = 0; step < options.steps; ++step) {
        const auto idx = batch_indices(options.seed, step, options.batch_size, n);
        auto gen = make_generator(stream_key(options.seed, static_cast<std::uint64_t>(step), kAEStepDomain));
        opt.zero_grad();
        auto loss = autoencoder_loss(result.model, images.index_select(0, idx), gen);
        const double value = loss.item<double>();
        if (!std::isfinite(value)) {
            std::ostringstream os;
            os << "step " << step + 1 << ": autoencoder loss is " << value;
            throw NaNLoss(os.str());
        }
        loss.backward();
        torch::nn::utils::clip_grad_norm_(result.model->parameters(), 1.0);
        opt.step();
        result.losses.push_back(value);
        if (options.on_step) options.on_step(step + 1, value);
    }
    result.model->eval();
    fit_latent_scale(result.model, images);
    return result;
}

}  // namespace wce
