#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "noboxlab/data/dataset.hpp"

namespace noboxlab {

// Recipe for a deterministic synthetic image-classification set. Classes are
// oriented sinusoidal gratings: with n classes, ceil(n/2) orientations at two
// spatial frequencies, so frequency-neighbors of the same orientation are the
// fine-grained pairs. Per-sample phase, amplitude, tint, and pixel noise are
// derived from (seed, class, index) alone, independent of generation order.
struct SynthSpec {
    std::size_t n_classes = 10;
    std::size_t per_class = 20;
    ImageShape size{32, 32, 3};
    std::uint64_t seed = 1;
    std::string name = "gratings";

    static SynthSpec make(std::size_t n_classes, std::size_t per_class,
                          ImageShape size, std::uint64_t seed,
                          std::string name = "gratings");
};

// Renders every sample to `dir` as PNM files plus a manifest.tsv, and returns
// the parsed manifest. The directory is created if needed; existing files of
// the same names are overwritten.
DatasetManifest write_synthetic_dataset(const std::string& dir,
                                        const SynthSpec& spec);

// Splits a manifest's items into roles per class, in manifest order: each
// role takes floor(fraction * class_count) items and the last role absorbs
// the remainder. Fractions must be positive and sum to 1 within 1e-9.
std::map<std::string, std::string> split_roles(
    const DatasetManifest& manifest,
    const std::vector<std::pair<std::string, double>>& fractions);

}  // namespace noboxlab
