#include "wcegen/tensors.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <sstream>

#include "wcegen/errors.hpp"

namespace wce {

const char* slot_name(MaskSlot slot) {
    switch (slot) {
        case MaskSlot::Dark: return "d";
        case MaskSlot::Clean: return "c";
        case MaskSlot::Floats: return "f";
        case MaskSlot::All: return "a";
    }
    return "?";
}

MaskSlot parse_slot(const std::string& name) {
    if (name == "d") return MaskSlot::Dark;
    if (name == "c") return MaskSlot::Clean;
    if (name == "f") return MaskSlot::Floats;
    if (name == "a") return MaskSlot::All;
    throw ConfigError("unknown mask id '" + name + "' (expected d, c, f or a)");
}

const torch::Tensor& CondMaps::slot(MaskSlot s) const {
    switch (s) {
        case MaskSlot::Dark: return dark;
        case MaskSlot::Clean: return clean;
        case MaskSlot::Floats: return floats;
        case MaskSlot::All: return all;
    }
    return all;
}

CondMaps CondMaps::to(torch::ScalarType dtype) const {
    return {dark.to(dtype), clean.to(dtype), floats.to(dtype), all.to(dtype)};
}

CondMaps CondMaps::index(const torch::Tensor& idx) const {
    return {dark.index_select(0, idx), clean.index_select(0, idx), floats.index_select(0, idx),
            all.index_select(0, idx)};
}

CondMaps CondMaps::repeat(int64_t n) const {
    return {dark.repeat({n, 1, 1, 1}), clean.repeat({n, 1, 1, 1}), floats.repeat({n, 1, 1, 1}),
            all.repeat({n, 1, 1, 1})};
}

namespace {

torch::Tensor binary_tensor(const BinaryMask& m) {
    auto t = torch::empty({1, 1, m.height, m.width}, torch::kFloat32);
    auto* p = t.data_ptr<float>();
    for (std::size_t i = 0; i < m.bits.size(); ++i) p[i] = m.bits[i] ? 1.0f : 0.0f;
    return t;
}

}  // namespace

CondMaps cond_from_bundle(const MaskBundle& bundle) {
    const int h = bundle.height(), w = bundle.width();
    auto all = torch::zeros({1, kNumLabels, h, w}, torch::kFloat32);
    auto* p = all.data_ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const auto& labels = bundle.all.labels();
    for (std::size_t i = 0; i < plane; ++i) p[labels[i] * plane + i] = 1.0f;
    return {binary_tensor(bundle.dark), binary_tensor(bundle.clean), binary_tensor(bundle.floats), all};
}

CondMaps cond_from_bundles(const std::vector<const MaskBundle*>& bundles) {
    std::vector<CondMaps> parts;
    parts.reserve(bundles.size());
    for (const auto* b : bundles) parts.push_back(cond_from_bundle(*b));
    return concat(parts);
}

CondMaps concat(const std::vector<CondMaps>& parts) {
    if (parts.empty()) throw ShapeError("cannot concatenate an empty list of condition maps");
    std::vector<torch::Tensor> d, c, f, a;
    for (const auto& p : parts) {
        d.push_back(p.dark);
        c.push_back(p.clean);
        f.push_back(p.floats);
        a.push_back(p.all);
    }
    return {torch::cat(d), torch::cat(c), torch::cat(f), torch::cat(a)};
}

torch::Tensor downsample_mask(const torch::Tensor& mask, int64_t target_h, int64_t target_w) {
    if (mask.dim() != 4) throw ShapeError("mask must be [B,C,H,W]");
    const int64_t h = mask.size(2), w = mask.size(3);
    if (target_h <= 0 || target_w <= 0 || h % target_h != 0 || w % target_w != 0 ||
        h / target_h != w / target_w) {
        std::ostringstream os;
        os << "cannot pool a " << h << "x" << w << " mask to " << target_h << "x" << target_w;
        throw ShapeError(os.str());
    }
    const int64_t k = h / target_h;
    if (k == 1) return mask;
    return torch::avg_pool2d(mask, {k, k}, {k, k});
}

torch::Tensor image_to_tensor(const RgbImage& image) {
    auto hwc = torch::from_blob(const_cast<float*>(image.data.data()), {image.height, image.width, 3},
                                torch::kFloat32);
    return hwc.permute({2, 0, 1}).contiguous().clone();
}

RgbImage tensor_to_image(const torch::Tensor& chw) {
    if (chw.dim() != 3 || chw.size(0) != 3) throw ShapeError("expected a [3,H,W] image tensor");
    auto hwc = chw.detach().to(torch::kFloat32).clamp(0.0, 1.0).permute({1, 2, 0}).contiguous();
    RgbImage out(static_cast<int>(chw.size(2)), static_cast<int>(chw.size(1)));
    std::memcpy(out.data.data(), hwc.data_ptr<float>(), out.data.size() * sizeof(float));
    return out;
}

torch::Generator make_generator(std::uint64_t key) {
    return at::make_generator<at::CPUGeneratorImpl>(key);
}

}  // namespace wce
