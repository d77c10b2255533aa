#include "wcegen/eval.hpp"

#include <iomanip>
#include <sstream>
#include <vector>

#include "wcegen/errors.hpp"

namespace wce {

bool AdherenceReport::all_pass() const {
    return dark_clean.value_or(true) && floats_texture.value_or(true) && blank_dark.value_or(true);
}

AdherenceReport adherence_report(const RgbImage& image, const SemanticMap& map) {
    if (image.width != map.width() || image.height != map.height()) {
        std::ostringstream os;
        os << "image " << image.width << "x" << image.height << " vs map " << map.width() << "x" << map.height();
        throw ShapeMismatch(os.str());
    }
    const int w = image.width, h = image.height;
    std::vector<double> lum(static_cast<std::size_t>(w) * h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) lum[static_cast<std::size_t>(r) * w + c] = image.luminance(r, c);

    std::array<double, kNumLabels> sum{}, var_sum{};
    std::array<std::size_t, kNumLabels> count{};
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double s = 0.0, s2 = 0.0;
            int n = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    const double v = lum[static_cast<std::size_t>(rr) * w + cc];
                    s += v;
                    s2 += v * v;
                    ++n;
                }
            const double m = s / n;
            const double var = std::max(0.0, s2 / n - m * m);
            const int label = static_cast<int>(map.at(r, c));
            sum[label] += lum[static_cast<std::size_t>(r) * w + c];
            var_sum[label] += var;
            ++count[label];
        }
    }

    AdherenceReport rep;
    for (int l = 0; l < kNumLabels; ++l) {
        if (count[l] == 0) continue;
        rep.mean_luminance[l] = sum[l] / static_cast<double>(count[l]);
        rep.local_variance[l] = var_sum[l] / static_cast<double>(count[l]);
    }
    const auto dark = rep.mean(Label::Dark), clean = rep.mean(Label::Clean), blank = rep.mean(Label::Blank);
    if (dark && clean) rep.dark_clean = *dark + kDarkCleanMargin < *clean;
    if (rep.variance(Label::Floats) && rep.variance(Label::Clean))
        rep.floats_texture = *rep.variance(Label::Floats) > *rep.variance(Label::Clean);
    if (blank) rep.blank_dark = *blank < kBlankMaxLuminance;
    return rep;
}

void print_report(std::ostream& os, const AdherenceReport& rep) {
    const auto fmt = [](const std::optional<double>& v) {
        if (!v) return std::string("absent");
        std::ostringstream s;
        s << std::fixed << std::setprecision(5) << *v;
        return s.str();
    };
    const auto flag = [](const std::optional<bool>& v) { return v ? (*v ? "pass" : "FAIL") : "skipped"; };
    os << "region\tmean_luminance\tlocal_variance\n";
    for (int l = 0; l < kNumLabels; ++l)
        os << label_name(static_cast<Label>(l)) << '\t' << fmt(rep.mean_luminance[l]) << '\t'
           << fmt(rep.local_variance[l]) << '\n';
    os << "rule\tresult\n"
       << "dark_clean_margin\t" << flag(rep.dark_clean) << '\n'
       << "floats_texture\t" << flag(rep.floats_texture) << '\n'
       << "blank_dark\t" << flag(rep.blank_dark) << '\n';
}

}  // namespace wce
