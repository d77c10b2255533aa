#include "wcegen/unet.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "wcegen/errors.hpp"

namespace nn = torch::nn;

namespace wce {
namespace {

constexpr MaskSlot kEncoderCycle[] = {MaskSlot::Dark, MaskSlot::Clean, MaskSlot::Floats};

int64_t slot_channels(MaskSlot slot) { return slot == MaskSlot::All ? kNumLabels : 1; }

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

}  // namespace

InjectionPlan InjectionPlan::standard(int levels) {
    std::vector<MaskSlot> enc;
    for (int k = 0; k < levels; ++k) enc.push_back(kEncoderCycle[k % 3]);
    return mirrored(std::move(enc));
}

InjectionPlan InjectionPlan::mirrored(std::vector<MaskSlot> encoder, MaskSlot middle) {
    InjectionPlan plan;
    plan.decoder.assign(encoder.rbegin(), encoder.rend());
    plan.encoder = std::move(encoder);
    plan.middle = middle;
    return plan;
}

std::string InjectionPlan::to_string() const {
    const auto list = [](const std::vector<MaskSlot>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += std::string("\"") + slot_name(v[i]) + "\"";
        }
        return s + "]";
    };
    return "encoder = " + list(encoder) + ", middle = \"" + slot_name(middle) + "\", decoder = " +
           list(decoder);
}

std::vector<std::string> UNetConfig::violations() const {
    std::vector<std::string> out;
    const auto fail = [&](const std::string& m) { out.push_back(m); };
    if (levels < 1) fail("unet.levels must be >= 1");
    if (latent_channels < 1) fail("unet.latent_channels must be >= 1");
    if (base_channels < 2 || base_channels % 2 != 0) fail("unet.base_channels must be even and >= 2");
    if (static_cast<int>(channel_multipliers.size()) != levels) {
        std::ostringstream os;
        os << "unet.channel_multipliers has " << channel_multipliers.size() << " entries but levels = " << levels;
        fail(os.str());
    }
    for (int m : channel_multipliers)
        if (m < 1) fail("unet.channel_multipliers entries must be >= 1");
    if (time_embed_dim < 1) fail("unet.time_embed_dim must be >= 1");
    if (mask_embed_channels < 1) fail("unet.mask_embed_channels must be >= 1");
    if (norm_groups < 1) fail("unet.norm_groups must be >= 1");
    if (static_cast<int>(plan.encoder.size()) != levels) {
        std::ostringstream os;
        os << "plan.encoder has " << plan.encoder.size() << " slots but levels = " << levels;
        fail(os.str());
    }
    if (static_cast<int>(plan.decoder.size()) != levels) {
        std::ostringstream os;
        os << "plan.decoder has " << plan.decoder.size() << " slots but levels = " << levels;
        fail(os.str());
    }
    return out;
}

void UNetConfig::validate() const {
    const auto v = violations();
    if (!v.empty()) throw ConfigError(v.front());
}

int64_t group_count(int64_t channels, int64_t max_groups) {
    for (int64_t g = std::min(channels, max_groups); g > 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

torch::Tensor timestep_features(const torch::Tensor& t, int64_t dim, torch::ScalarType dtype) {
    const int64_t half = dim / 2;
    auto freqs = torch::exp(-std::log(10000.0) *
                            torch::arange(half, torch::TensorOptions().dtype(torch::kFloat64)) /
                            static_cast<double>(half));
    auto args = t.to(torch::kFloat64).unsqueeze(1) * freqs.unsqueeze(0);
    return torch::cat({torch::sin(args), torch::cos(args)}, 1).to(dtype);
}

ResBlockImpl::ResBlockImpl(int64_t in, int64_t out, int64_t time_dim, int64_t max_groups) {
    norm1_ = register_module("norm1", nn::GroupNorm(group_count(in, max_groups), in));
    conv1_ = register_module("conv1", conv(in, out, 3));
    time_proj_ = register_module("time_proj", nn::Linear(time_dim, out));
    norm2_ = register_module("norm2", nn::GroupNorm(group_count(out, max_groups), out));
    conv2_ = register_module("conv2", conv(out, out, 3));
    if (in != out) skip_ = register_module("skip", conv(in, out, 1));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
    auto h = conv1_(torch::silu(norm1_(x)));
    h = h + time_proj_(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
    h = conv2_(torch::silu(norm2_(h)));
    return (skip_ ? skip_(x) : x) + h;
}

MaskEmbedderImpl::MaskEmbedderImpl(int64_t in, int64_t embed) {
    conv1_ = register_module("conv1", conv(in, embed, 3));
    conv2_ = register_module("conv2", conv(embed, embed, 3));
}

torch::Tensor MaskEmbedderImpl::forward(const torch::Tensor& mask) {
    return conv2_(torch::silu(conv1_(mask)));
}

void MaskEmbedderImpl::ablate() {
    torch::NoGradGuard no_grad;
    conv2_->weight.zero_();
    conv2_->bias.zero_();
}

MaskFusionImpl::MaskFusionImpl(int64_t width, int64_t embed) {
    proj_ = register_module("proj", conv(width + embed, width, 1));
}

torch::Tensor MaskFusionImpl::forward(const torch::Tensor& h, const torch::Tensor& embedding) {
    return h + proj_(torch::cat({h, embedding}, 1));
}

void MaskFusionImpl::zero() {
    torch::NoGradGuard no_grad;
    proj_->weight.zero_();
    proj_->bias.zero_();
}

ConditionalUNetImpl::ConditionalUNetImpl(UNetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int levels = cfg_.levels;
    const int64_t temb = cfg_.time_embed_dim;
    const int64_t embed = cfg_.mask_embed_channels;
    const int64_t groups = cfg_.norm_groups;

    time_mlp_ = register_module(
        "time_mlp", nn::Sequential(nn::Linear(cfg_.base_channels, temb), nn::SiLU(), nn::Linear(temb, temb)));
    in_conv_ = register_module("in_conv", conv(cfg_.latent_channels, cfg_.channels(0), 3));
    for (int s = 0; s < kNumSlots; ++s) {
        const auto slot = static_cast<MaskSlot>(s);
        embedders_[s] = register_module(std::string("embed_") + slot_name(slot),
                                        MaskEmbedder(slot_channels(slot), embed));
    }

    int64_t width = cfg_.channels(0);
    for (int k = 0; k < levels; ++k) {
        const std::string idx = std::to_string(k);
        enc_fuse_.push_back(register_module("enc_fuse" + idx, MaskFusion(width, embed)));
        enc_blocks_.push_back(register_module("enc_block" + idx, ResBlock(width, cfg_.channels(k), temb, groups)));
        width = cfg_.channels(k);
        if (k + 1 < levels) down_.push_back(register_module("down" + idx, conv(width, width, 3, 2)));
    }
    mid_fuse_ = register_module("mid_fuse", MaskFusion(width, embed));
    mid_block1_ = register_module("mid_block1", ResBlock(width, width, temb, groups));
    mid_block2_ = register_module("mid_block2", ResBlock(width, width, temb, groups));
    for (int j = 0; j < levels; ++j) {
        const int k = levels - 1 - j;
        const std::string idx = std::to_string(j);
        const int64_t in = width + cfg_.channels(k);
        dec_fuse_.push_back(register_module("dec_fuse" + idx, MaskFusion(in, embed)));
        dec_blocks_.push_back(register_module("dec_block" + idx, ResBlock(in, cfg_.channels(k), temb, groups)));
        width = cfg_.channels(k);
        if (j + 1 < levels) up_.push_back(register_module("up" + idx, conv(width, width, 3)));
    }
    out_norm_ = register_module("out_norm", nn::GroupNorm(group_count(width, groups), width));
    out_conv_ = register_module("out_conv", conv(width, cfg_.latent_channels, 3));
}

void ConditionalUNetImpl::set_plan(const InjectionPlan& plan) {
    UNetConfig next = cfg_;
    next.plan = plan;
    next.validate();
    cfg_ = std::move(next);
}

void ConditionalUNetImpl::ablate_embedder(MaskSlot slot) {
    embedders_[static_cast<int>(slot)]->ablate();
}

void ConditionalUNetImpl::zero_injection() {
    for (auto& f : enc_fuse_) f->zero();
    mid_fuse_->zero();
    for (auto& f : dec_fuse_) f->zero();
}

torch::Tensor ConditionalUNetImpl::fuse(MaskFusion& fusion, MaskSlot slot, const torch::Tensor& h,
                                        const CondMaps* cond) {
    if (!cond) return h;
    const auto pooled = downsample_mask(cond->slot(slot).to(h.scalar_type()), h.size(2), h.size(3));
    return fusion(h, embedders_[static_cast<int>(slot)](pooled));
}

torch::Tensor ConditionalUNetImpl::run(const torch::Tensor& z_t, const torch::Tensor& t, const CondMaps* cond) {
    if (z_t.dim() != 4 || z_t.size(1) != cfg_.latent_channels) {
        std::ostringstream os;
        os << "expected latent [B," << cfg_.latent_channels << ",h,w], got " << z_t.sizes();
        throw ShapeError(os.str());
    }
    const int64_t step = int64_t{1} << (cfg_.levels - 1);
    if (z_t.size(2) % step != 0 || z_t.size(3) % step != 0) {
        std::ostringstream os;
        os << "latent " << z_t.size(2) << "x" << z_t.size(3) << " not divisible by " << step;
        throw ShapeError(os.str());
    }
    if (t.numel() != z_t.size(0)) throw ShapeError("need one timestep per batch element");
    if (cond && cond->batch() != z_t.size(0)) throw ShapeError("mask batch differs from latent batch");

    const auto temb = time_mlp_->forward(timestep_features(t, cfg_.base_channels, z_t.scalar_type()));
    auto h = in_conv_(z_t);
    std::vector<torch::Tensor> skips;
    for (int k = 0; k < cfg_.levels; ++k) {
        h = fuse(enc_fuse_[k], cfg_.plan.encoder[k], h, cond);
        h = enc_blocks_[k](h, temb);
        skips.push_back(h);
        if (k + 1 < cfg_.levels) h = down_[k](h);
    }
    h = fuse(mid_fuse_, cfg_.plan.middle, h, cond);
    h = mid_block1_(h, temb);
    h = mid_block2_(h, temb);
    for (int j = 0; j < cfg_.levels; ++j) {
        h = torch::cat({h, skips[cfg_.levels - 1 - j]}, 1);
        h = fuse(dec_fuse_[j], cfg_.plan.decoder[j], h, cond);
        h = dec_blocks_[j](h, temb);
        if (j + 1 < cfg_.levels) {
            h = torch::upsample_nearest2d(h, std::vector<int64_t>{h.size(2) * 2, h.size(3) * 2});
            h = up_[j](h);
        }
    }
    return out_conv_(torch::silu(out_norm_(h)));
}

torch::Tensor ConditionalUNetImpl::forward(const torch::Tensor& z_t, const torch::Tensor& t, const CondMaps& cond) {
    return run(z_t, t, &cond);
}

torch::Tensor ConditionalUNetImpl::forward_unconditional(const torch::Tensor& z_t, const torch::Tensor& t) {
    return run(z_t, t, nullptr);
}

ConditionalUNet build_model(const UNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    torch::manual_seed(seed);
    return ConditionalUNet(cfg);
}

EpsModel as_eps_model(ConditionalUNet model) {
    return [model](const torch::Tensor& z, const torch::Tensor& t, const CondMaps& c) mutable {
        return model->forward(z, t, c);
    };
}

int64_t parameter_count(const torch::nn::Module& module) {
    int64_t n = 0;
    for (const auto& p : module.parameters()) n += p.numel();
    return n;
}

std::uint64_t parameter_checksum(const torch::nn::Module& module) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto feed = [&](const void* data, std::size_t len) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& item : module.named_parameters()) {
        feed(item.key().data(), item.key().size());
        const auto p = item.value().detach().contiguous();
        feed(p.data_ptr(), static_cast<std::size_t>(p.numel()) * p.element_size());
    }
    return h;
}

}  // namespace wce
