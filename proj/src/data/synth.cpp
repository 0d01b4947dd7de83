#include "noboxlab/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/pnm.hpp"
#include "noboxlab/core/rng.hpp"

namespace noboxlab {

SynthSpec SynthSpec::make(std::size_t n_classes, std::size_t per_class,
                          ImageShape size, std::uint64_t seed,
                          std::string name) {
    if (n_classes < 2)
        throw DomainError("synthetic set needs at least 2 classes");
    if (per_class < 1)
        throw DomainError("synthetic set needs at least 1 sample per class");
    if (size.height < 8 || size.width < 8)
        throw DomainError("synthetic images must be at least 8x8");
    if (size.channels != 1 && size.channels != 3)
        throw DomainError("synthetic images must have 1 or 3 channels");
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
        throw DomainError("synthetic set name must be nonempty without spaces");
    SynthSpec s;
    s.n_classes = n_classes;
    s.per_class = per_class;
    s.size = size;
    s.seed = seed;
    s.name = std::move(name);
    return s;
}

DatasetManifest write_synthetic_dataset(const std::string& dir,
                                        const SynthSpec& spec) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    const std::size_t n_orient = (spec.n_classes + 1) / 2;
    const std::size_t H = spec.size.height;
    const std::size_t W = spec.size.width;
    const std::size_t C = spec.size.channels;

    std::vector<ManifestItem> items;
    for (std::size_t cls = 0; cls < spec.n_classes; ++cls) {
        const std::size_t orient = cls % n_orient;
        const std::size_t freq_band = cls / n_orient;
        const double theta =
            std::numbers::pi * static_cast<double>(orient) /
            static_cast<double>(n_orient);
        const double cycles = freq_band == 0 ? 2.0 : 4.0;

        for (std::size_t k = 0; k < spec.per_class; ++k) {
            Rng rng(Rng::mix(spec.seed, 1000 * cls + k));
            const double phase = rng.uniform(0.0, 0.6);
            const double amp = rng.uniform(0.28, 0.38);
            const double freq = cycles * rng.uniform(0.95, 1.05);
            double gain[3] = {1.0, 1.0, 1.0};
            for (std::size_t c = 0; c < C; ++c) gain[c] = rng.uniform(0.85, 1.0);

            RasterImage img;
            img.height = H;
            img.width = W;
            img.channels = C;
            img.pixels.resize(H * W * C);
            const double cos_t = std::cos(theta);
            const double sin_t = std::sin(theta);
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    const double t = (static_cast<double>(x) * cos_t +
                                      static_cast<double>(y) * sin_t) /
                                     static_cast<double>(W);
                    const double wave =
                        std::sin(2.0 * std::numbers::pi * freq * t + phase);
                    for (std::size_t c = 0; c < C; ++c) {
                        double v = 0.5 + amp * gain[c] * wave +
                                   rng.uniform(-0.04, 0.04);
                        v = std::clamp(v, 0.0, 1.0);
                        img.pixels[(y * W + x) * C + c] =
                            static_cast<std::uint8_t>(
                                std::lround(v * 255.0));
                    }
                }

            char file[64];
            std::snprintf(file, sizeof(file), "%s_c%02zu_%03zu.%s",
                          spec.name.c_str(), cls, k, C == 3 ? "ppm" : "pgm");
            write_pnm((fs::path(dir) / file).string(), img);
            char id[48];
            std::snprintf(id, sizeof(id), "c%02zuk%03zu", cls, k);
            items.push_back({id, file, cls});
        }
    }

    DatasetManifest manifest(spec.name, std::move(items), spec.n_classes,
                             spec.size, dir);
    manifest.write((fs::path(dir) / "manifest.tsv").string());
    return DatasetManifest::read((fs::path(dir) / "manifest.tsv").string());
}

std::map<std::string, std::string> split_roles(
    const DatasetManifest& manifest,
    const std::vector<std::pair<std::string, double>>& fractions) {
    if (fractions.empty())
        throw DomainError("role split needs at least one role");
    double sum = 0.0;
    for (const auto& [role, f] : fractions) {
        if (role.empty()) throw DomainError("role split: empty role name");
        if (f <= 0.0) throw DomainError("role split: fraction for role '" +
                                        role + "' must be positive");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw DomainError("role split fractions must sum to 1");

    std::map<std::size_t, std::vector<const ManifestItem*>> by_class;
    for (const ManifestItem& item : manifest.items())
        by_class[item.label].push_back(&item);

    std::map<std::string, std::string> assignment;
    for (const auto& [label, members] : by_class) {
        const std::size_t k = members.size();
        std::size_t used = 0;
        for (std::size_t r = 0; r < fractions.size(); ++r) {
            std::size_t take =
                r + 1 == fractions.size()
                    ? k - used
                    : static_cast<std::size_t>(
                          std::floor(fractions[r].second *
                                     static_cast<double>(k)));
            take = std::min(take, k - used);
            for (std::size_t i = 0; i < take; ++i)
                assignment[members[used + i]->id] = fractions[r].first;
            used += take;
        }
    }
    return assignment;
}

}  // namespace noboxlab
