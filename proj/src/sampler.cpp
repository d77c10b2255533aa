#include "wcegen/sampler.hpp"

#include <sstream>

#include "wcegen/errors.hpp"
#include "wcegen/manifest.hpp"
#include "wcegen/tensors.hpp"
#include "wcegen/trainer.hpp"

namespace fs = std::filesystem;

namespace wce {

std::vector<int64_t> SamplerModel::latent_shape() const {
    const auto& c = ae->config();
    const int side = image_size / c.downsample_factor;
    return {c.latent_channels, side, side};
}

SamplerModel load_generator(const fs::path& ldm_checkpoint, const fs::path& ae_checkpoint,
                         const GenerateOptions& options) {
    torch::set_num_threads(options.threads);
    LdmCheckpoint ldm = load_checkpoint(ldm_checkpoint);
    AECheckpoint ae = load_autoencoder(ae_checkpoint);
    if (ae.model->config().latent_channels != ldm.unet.latent_channels) {
        std::ostringstream os;
        os << "autoencoder has " << ae.model->config().latent_channels << " latent channels, denoiser expects "
           << ldm.unet.latent_channels;
        throw ShapeMismatch(os.str());
    }
    SamplerModel g;
    g.model = options.use_ema ? ldm.ema : ldm.model;
    g.model->eval();
    g.ae = ae.model;
    g.ae->eval();
    g.image_size = ldm.image_size;
    g.ldm_config_text = ldm.config_text;
    g.schedule = ldm.schedule.build();
    if (options.steps) {
        if (*options.steps < 1 || *options.steps > g.schedule.T())
            throw BadRange("steps must lie in [1, " + std::to_string(g.schedule.T()) + "]");
        if (*options.steps < g.schedule.T()) g.schedule = g.schedule.respaced(*options.steps);
    }
    return g;
}

SemanticMap prepare_mask(const SemanticMap& map, int size, const GenerateOptions& options) {
    SemanticMap m = map;
    if (m.width() != size || m.height() != size) {
        std::ostringstream os;
        os << "mask is " << m.width() << "x" << m.height() << ", model resolution is " << size << "x" << size;
        if (!options.allow_resample) throw ResolutionMismatch(os.str());
        if (options.warn) *options.warn << "warning: " << os.str() << "; resampling with nearest neighbor\n";
        m = resample_nearest(m, size, size);
    }
    return reassign_corners(m, FOVSpec::inscribed(size, size));
}

SemanticMap prepare_mask(const fs::path& path, int size, const GenerateOptions& options) {
    return prepare_mask(load_any_mask(path), size, options);
}

std::vector<RgbImage> generate_images(SamplerModel& gen, const std::vector<SemanticMap>& maps,
                                      const std::vector<std::uint64_t>& seeds) {
    if (maps.size() != seeds.size()) throw ShapeMismatch("one mask per seed is required");
    if (seeds.empty()) return {};
    std::vector<MaskBundle> bundles;
    bundles.reserve(maps.size());
    for (const auto& m : maps) bundles.push_back(split_channels(m));
    std::vector<const MaskBundle*> ptrs;
    for (const auto& b : bundles) ptrs.push_back(&b);
    const CondMaps cond = cond_from_bundles(ptrs);

    torch::NoGradGuard no_grad;
    const auto shape = gen.latent_shape();
    const torch::Tensor z0 = sample_loop(as_eps_model(gen.model), cond, gen.schedule, seeds, shape);
    const torch::Tensor x = gen.ae->decode(z0);
    std::vector<RgbImage> out;
    out.reserve(seeds.size());
    for (int64_t b = 0; b < x.size(0); ++b) out.push_back(tensor_to_image(x[b]));
    return out;
}

std::vector<RgbImage> generate_images(SamplerModel& gen, const SemanticMap& map, const std::vector<std::uint64_t>& seeds) {
    // Per seed, so every image is computed exactly as it would be alone.
    std::vector<RgbImage> out;
    for (const auto s : seeds) out.push_back(generate_images(gen, std::vector<SemanticMap>{map}, {s}).front());
    return out;
}

RgbImage compose_sheet(const std::vector<SemanticMap>& masks, const std::vector<std::vector<RgbImage>>& columns,
                       int cell) {
    if (masks.empty()) throw UsageError("a sheet needs at least one mask");
    if (columns.size() != masks.size()) throw ShapeMismatch("one column of samples per mask is required");
    std::size_t rows = 0;
    for (const auto& c : columns) rows = std::max(rows, c.size());
    RgbImage sheet(static_cast<int>(masks.size()) * cell, static_cast<int>(rows + 1) * cell);
    const auto blit = [&](const RgbImage& img, std::size_t col, std::size_t row) {
        const RgbImage fitted = img.width == cell && img.height == cell ? img : resize(img, cell, cell);
        for (int r = 0; r < cell; ++r)
            for (int c = 0; c < cell; ++c)
                for (int ch = 0; ch < 3; ++ch)
                    sheet.at(static_cast<int>(row) * cell + r, static_cast<int>(col) * cell + c, ch) =
                        fitted.at(r, c, ch);
    };
    for (std::size_t m = 0; m < masks.size(); ++m) {
        blit(from_raster(color_raster(resample_nearest(masks[m], cell, cell))), m, 0);
        for (std::size_t r = 0; r < columns[m].size(); ++r) blit(columns[m][r], m, r + 1);
    }
    return sheet;
}

GenerateResult generate(const fs::path& ldm_checkpoint, const fs::path& ae_checkpoint, const fs::path& mask_path,
                        const std::vector<std::uint64_t>& seeds, const fs::path& out_dir,
                        const GenerateOptions& options) {
    if (seeds.empty()) throw UsageError("at least one seed is required");
    SamplerModel gen = load_generator(ldm_checkpoint, ae_checkpoint, options);
    GenerateResult res{prepare_mask(mask_path, gen.image_size, options), {}, {}, {}};
    res.images = generate_images(gen, res.map, seeds);

    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const fs::path p = out_dir / ("seed_" + std::to_string(seeds[i]) + ".png");
        write_png(p, to_raster(res.images[i]));
        res.files.push_back(p);
    }
    res.sheet = out_dir / "sheet.png";
    write_png(res.sheet, to_raster(compose_sheet({res.map}, {res.images}, gen.image_size)));

    RunManifest m = make_manifest("sample", gen.ldm_config_text, {}, seeds, options.threads);
    m.inputs["checkpoint"] = sha256_file(ldm_checkpoint);
    m.inputs["autoencoder"] = sha256_file(ae_checkpoint);
    m.inputs["mask"] = sha256_file(mask_path);
    m.inputs["steps"] = std::to_string(gen.schedule.T());
    m.inputs["weights"] = options.use_ema ? "ema" : "raw";
    write_run_manifest(out_dir, m);
    return res;
}

RgbImage make_sheet(const std::vector<fs::path>& mask_paths, const fs::path& ldm_checkpoint,
                    const fs::path& ae_checkpoint, int n_seeds, const fs::path& out_path,
                    const GenerateOptions& options) {
    if (mask_paths.empty()) throw UsageError("a sheet needs at least one mask");
    if (n_seeds < 1) throw UsageError("n-seeds must be at least 1");
    SamplerModel gen = load_generator(ldm_checkpoint, ae_checkpoint, options);
    std::vector<std::uint64_t> seeds;
    for (int s = 1; s <= n_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    std::vector<SemanticMap> maps;
    std::vector<std::vector<RgbImage>> columns;
    for (const auto& p : mask_paths) {
        maps.push_back(prepare_mask(p, gen.image_size, options));
        columns.push_back(generate_images(gen, maps.back(), seeds));
    }
    RgbImage sheet = compose_sheet(maps, columns, gen.image_size);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_png(out_path, to_raster(sheet));
    return sheet;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::istringstream is(text);
    std::string part;
    const auto number = [&](const std::string& s) -> std::uint64_t {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
            throw UsageError("bad seed '" + s + "' in '" + text + "'");
        return std::stoull(s);
    };
    while (std::getline(is, part, ',')) {
        const auto dots = part.find("..");
        if (dots == std::string::npos) {
            out.push_back(number(part));
            continue;
        }
        const auto lo = number(part.substr(0, dots)), hi = number(part.substr(dots + 2));
        if (hi < lo) throw UsageError("empty seed range '" + part + "'");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
    if (out.empty()) throw UsageError("no seeds given");
    return out;
}

}  // namespace wce
