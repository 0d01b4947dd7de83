#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "noboxlab/core/tensor.hpp"

namespace noboxlab {

struct ImageShape {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    bool operator==(const ImageShape&) const = default;
};

struct ManifestItem {
    std::string id;
    std::string path;   // relative to the manifest's directory
    std::size_t label = 0;
};

// Names a dataset: its items, label space, and fixed image geometry.
// Invariants: unique ids, every label < n_classes, n_classes >= 1.
class DatasetManifest {
public:
    DatasetManifest(std::string name, std::vector<ManifestItem> items,
                    std::size_t n_classes, ImageShape size,
                    std::string base_dir = ".");

    // Parses the text format: header `#name=<str> n_classes=<int> size=<H>x<W>x<C>`
    // then one `item_id<TAB>relative_path<TAB>label` line per item.
    static DatasetManifest read(const std::string& path);
    void write(const std::string& path) const;

    const std::string& name() const { return name_; }
    const std::vector<ManifestItem>& items() const { return items_; }
    std::size_t n_classes() const { return n_classes_; }
    const ImageShape& image_size() const { return size_; }
    const std::string& base_dir() const { return base_dir_; }

    bool has_item(const std::string& id) const { return by_id_.count(id) > 0; }
    const ManifestItem& item(const std::string& id) const;
    std::string resolve_path(const ManifestItem& item) const;

private:
    std::string name_;
    std::vector<ManifestItem> items_;
    std::size_t n_classes_;
    ImageShape size_;
    std::string base_dir_;
    std::map<std::string, std::size_t> by_id_;
};

// Batch of images in [0,1], channel-first [N, C, H, W], aligned with ids.
struct ImageBatch {
    Tensor pixels;
    std::vector<std::string> ids;

    // Validates the pixel range and the id/batch alignment.
    static ImageBatch make(Tensor pixels, std::vector<std::string> ids);
};

struct LabelVector {
    std::vector<std::size_t> labels;

    static LabelVector make(std::vector<std::size_t> labels, std::size_t n_classes);
};

// Role -> set of content hashes of the images assigned to that role, with the
// hash algorithm recorded. Immutable once built.
class SplitRegistry {
public:
    SplitRegistry(std::string algorithm,
                  std::map<std::string, std::set<std::string>> role_to_hashes);

    const std::string& algorithm() const { return algorithm_; }
    const std::map<std::string, std::set<std::string>>& roles() const {
        return role_to_hashes_;
    }
    bool has_role(const std::string& role) const {
        return role_to_hashes_.count(role) > 0;
    }
    const std::set<std::string>& hashes(const std::string& role) const;

    void write(const std::string& path) const;
    static SplitRegistry read(const std::string& path);

private:
    std::string algorithm_;
    std::map<std::string, std::set<std::string>> role_to_hashes_;
};

// Decodes one image file to a [C, H, W] tensor in [0,1] and reports the hash
// of its decoded 8-bit pixel bytes. The file must match the declared shape.
struct LoadedImage {
    Tensor pixels;       // [C, H, W]
    std::string hash;    // hex content hash
};
LoadedImage load_image(const std::string& path, const ImageShape& expect);

// Writes a [C, H, W] tensor in [0,1] as an 8-bit image file (values rounded).
void save_image(const std::string& path, const Tensor& chw);

// Hashes every assigned item's decoded pixels into its role's set.
// Duplicated content within a role collapses to one hash (warning logged).
SplitRegistry build_split_registry(const DatasetManifest& manifest,
                                   const std::map<std::string, std::string>& assignment);

// Empty result means the two roles share no image content; otherwise the
// sorted shared hashes are returned.
std::vector<std::string> verify_disjointness(const SplitRegistry& registry,
                                             const std::string& role_a,
                                             const std::string& role_b);

// Assignment file: `item_id<TAB>role` per line, '#' comments allowed.
std::map<std::string, std::string> read_assignment(const std::string& path);
void write_assignment(const std::string& path,
                      const std::map<std::string, std::string>& assignment);

struct Batch {
    ImageBatch images;
    LabelVector labels;
};

// Fully decoded dataset slice held in memory.
class InMemoryDataset {
public:
    // Loads every manifest item, or only those whose assigned role matches.
    static InMemoryDataset load(const DatasetManifest& manifest);
    static InMemoryDataset load(const DatasetManifest& manifest,
                                const std::map<std::string, std::string>& assignment,
                                const std::string& role);

    std::size_t size() const { return ids_.size(); }
    std::size_t n_classes() const { return n_classes_; }
    const ImageShape& image_size() const { return shape_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<std::size_t>& labels() const { return labels_; }
    const std::vector<std::string>& hashes() const { return hashes_; }
    const Tensor& pixels() const { return pixels_; }  // [M, C, H, W]

    // Sample i as a [1, C, H, W] tensor.
    Tensor sample(std::size_t i) const;

    // Splits into batches covering every item exactly once, in storage order
    // when shuffle_seed is absent, else in a seed-determined order.
    std::vector<Batch> batches(std::size_t batch_size,
                               std::optional<std::uint64_t> shuffle_seed) const;

private:
    InMemoryDataset() = default;

    std::size_t n_classes_ = 0;
    ImageShape shape_;
    Tensor pixels_;
    std::vector<std::string> ids_;
    std::vector<std::size_t> labels_;
    std::vector<std::string> hashes_;
};

}
