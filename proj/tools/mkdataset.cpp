// Renders a deterministic synthetic grating dataset and, optionally, a role
// assignment splitting it into disjoint training pools.

#include <cstdio>
#include <exception>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "noboxlab/core/errors.hpp"
#include "noboxlab/data/dataset.hpp"
#include "noboxlab/data/synth.hpp"

namespace {

noboxlab::ImageShape parse_size(const std::string& text) {
    std::size_t h = 0, w = 0, c = 0;
    if (std::sscanf(text.c_str(), "%zux%zux%zu", &h, &w, &c) != 3)
        throw noboxlab::ValidationError("--size expects HxWxC, got '" + text +
                                        "'");
    return {h, w, c};
}

std::vector<std::pair<std::string, double>> parse_split(
    const std::string& text) {
    std::vector<std::pair<std::string, double>> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        std::string part = text.substr(
            start, comma == std::string::npos ? std::string::npos
                                              : comma - start);
        std::size_t eq = part.find('=');
        if (eq == std::string::npos || eq == 0)
            throw noboxlab::ValidationError(
                "--split expects role=fraction pairs, got '" + part + "'");
        out.emplace_back(part.substr(0, eq), std::stod(part.substr(eq + 1)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic grating dataset builder"};
    std::string out_dir;
    std::size_t n_classes = 10;
    std::size_t per_class = 20;
    std::string size = "32x32x3";
    std::uint64_t seed = 1;
    std::string name = "gratings";
    std::string split;

    app.add_option("--out", out_dir, "Output directory")->required();
    app.add_option("--classes", n_classes, "Number of classes");
    app.add_option("--per-class", per_class, "Samples per class");
    app.add_option("--size", size, "Image shape HxWxC");
    app.add_option("--seed", seed, "Generation seed");
    app.add_option("--name", name, "Dataset name");
    app.add_option("--split", split,
                   "Role assignment, e.g. surrogate-tune=0.5,target-train=0.5 "
                   "(written to <out>/assignment.tsv)");
    CLI11_PARSE(app, argc, argv);

    try {
        noboxlab::SynthSpec spec = noboxlab::SynthSpec::make(
            n_classes, per_class, parse_size(size), seed, name);
        noboxlab::DatasetManifest manifest =
            noboxlab::write_synthetic_dataset(out_dir, spec);
        std::printf("wrote %zu images (%zu classes) under %s\n",
                    manifest.items().size(), manifest.n_classes(),
                    out_dir.c_str());
        if (!split.empty()) {
            auto roles = noboxlab::split_roles(manifest, parse_split(split));
            std::string path = out_dir + "/assignment.tsv";
            noboxlab::write_assignment(path, roles);
            std::printf("wrote role assignment to %s\n", path.c_str());
        }
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
