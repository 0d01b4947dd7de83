#include "noboxlab/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/hash.hpp"
#include "noboxlab/core/log.hpp"
#include "noboxlab/core/pnm.hpp"
#include "noboxlab/core/rng.hpp"

namespace noboxlab {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

std::size_t parse_uint(const std::string& s, const std::string& context) {
    if (s.empty()) throw IngestionError(context + ": empty integer field");
    std::size_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9')
            throw IngestionError(context + ": bad integer '" + s + "'");
        v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    return v;
}

}

// ---------------------------------------------------------------- DatasetManifest

DatasetManifest::DatasetManifest(std::string name, std::vector<ManifestItem> items,
                                 std::size_t n_classes, ImageShape size,
                                 std::string base_dir)
    : name_(std::move(name)), items_(std::move(items)), n_classes_(n_classes),
      size_(size), base_dir_(std::move(base_dir)) {
    if (n_classes_ < 1)
        throw IngestionError("manifest '" + name_ + "': n_classes must be >= 1");
    if (size_.height == 0 || size_.width == 0 ||
        (size_.channels != 1 && size_.channels != 3))
        throw IngestionError("manifest '" + name_ + "': bad image size");
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const ManifestItem& it = items_[i];
        if (it.label >= n_classes_)
            throw IngestionError("manifest '" + name_ + "': item '" + it.id +
                                 "' label " + std::to_string(it.label) +
                                 " outside [0," + std::to_string(n_classes_) + ")");
        if (!by_id_.emplace(it.id, i).second)
            throw IngestionError("manifest '" + name_ + "': duplicate item id '" +
                                 it.id + "'");
    }
}

DatasetManifest DatasetManifest::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError(path + ": cannot open manifest");
    std::string header;
    if (!std::getline(in, header))
        throw IngestionError(path + ": empty manifest");
    // Header: #name=<str> n_classes=<int> size=<H>x<W>x<C>
    std::string name;
    std::size_t n_classes = 0;
    ImageShape size;
    {
        if (header.empty() || header[0] != '#')
            throw IngestionError(path + ": manifest header must start with '#'");
        std::istringstream hs(header.substr(1));
        std::string field;
        bool saw_name = false, saw_classes = false, saw_size = false;
        while (hs >> field) {
            std::size_t eq = field.find('=');
            if (eq == std::string::npos)
                throw IngestionError(path + ": bad header field '" + field + "'");
            std::string key = field.substr(0, eq), val = field.substr(eq + 1);
            if (key == "name") {
                name = val;
                saw_name = true;
            } else if (key == "n_classes") {
                n_classes = parse_uint(val, path + " header");
                saw_classes = true;
            } else if (key == "size") {
                std::size_t x1 = val.find('x'), x2 = val.rfind('x');
                if (x1 == std::string::npos || x2 == x1)
                    throw IngestionError(path + ": bad size '" + val + "'");
                size.height = parse_uint(val.substr(0, x1), path + " header");
                size.width = parse_uint(val.substr(x1 + 1, x2 - x1 - 1), path + " header");
                size.channels = parse_uint(val.substr(x2 + 1), path + " header");
                saw_size = true;
            } else {
                throw IngestionError(path + ": unknown header key '" + key + "'");
            }
        }
        if (!saw_name || !saw_classes || !saw_size)
            throw IngestionError(path + ": header must carry name, n_classes, size");
    }
    std::vector<ManifestItem> items;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols = split_tabs(line);
        if (cols.size() != 3)
            throw IngestionError(path + ":" + std::to_string(lineno) +
                                 ": expected 3 tab-separated fields");
        items.push_back({cols[0], cols[1], parse_uint(cols[2], path + " label")});
    }
    std::string base = std::filesystem::path(path).parent_path().string();
    if (base.empty()) base = ".";
    return DatasetManifest(std::move(name), std::move(items), n_classes, size, base);
}

void DatasetManifest::write(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw PersistenceError(path + ": cannot open for write");
    out << "#name=" << name_ << " n_classes=" << n_classes_ << " size="
        << size_.height << "x" << size_.width << "x" << size_.channels << "\n";
    for (const ManifestItem& it : items_)
        out << it.id << "\t" << it.path << "\t" << it.label << "\n";
    if (!out) throw PersistenceError(path + ": write failed");
}

const ManifestItem& DatasetManifest::item(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end())
        throw LookupError("manifest '" + name_ + "': no item '" + id + "'");
    return items_[it->second];
}

std::string DatasetManifest::resolve_path(const ManifestItem& item) const {
    return (std::filesystem::path(base_dir_) / item.path).string();
}

// ---------------------------------------------------------------- batches/labels

ImageBatch ImageBatch::make(Tensor pixels, std::vector<std::string> ids) {
    require_ndim(pixels, 4, "image batch");
    if (pixels.dim(0) != ids.size())
        throw ShapeError("image batch: " + std::to_string(pixels.dim(0)) +
                         " images vs " + std::to_string(ids.size()) + " ids");
    for (std::size_t i = 0; i < pixels.size(); ++i)
        if (!(pixels[i] >= 0.0 && pixels[i] <= 1.0))
            throw DomainError("image batch: pixel outside [0,1]");
    return ImageBatch{std::move(pixels), std::move(ids)};
}

LabelVector LabelVector::make(std::vector<std::size_t> labels, std::size_t n_classes) {
    for (std::size_t l : labels)
        if (l >= n_classes)
            throw DomainError("label " + std::to_string(l) + " outside [0," +
                              std::to_string(n_classes) + ")");
    return LabelVector{std::move(labels)};
}

// ---------------------------------------------------------------- SplitRegistry

SplitRegistry::SplitRegistry(std::string algorithm,
                             std::map<std::string, std::set<std::string>> role_to_hashes)
    : algorithm_(std::move(algorithm)), role_to_hashes_(std::move(role_to_hashes)) {}

const std::set<std::string>& SplitRegistry::hashes(const std::string& role) const {
    auto it = role_to_hashes_.find(role);
    if (it == role_to_hashes_.end())
        throw LookupError("split registry: no role '" + role + "'");
    return it->second;
}

void SplitRegistry::write(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw PersistenceError(path + ": cannot open for write");
    out << "algorithm=" << algorithm_ << "\n";
    for (const auto& [role, hashes] : role_to_hashes_) {
        out << role << "=";
        bool first = true;
        for (const std::string& h : hashes) {
            if (!first) out << ",";
            out << h;
            first = false;
        }
        out << "\n";
    }
    if (!out) throw PersistenceError(path + ": write failed");
}

SplitRegistry SplitRegistry::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError(path + ": cannot open registry");
    std::string line;
    if (!std::getline(in, line) || line.rfind("algorithm=", 0) != 0)
        throw IngestionError(path + ": first line must be algorithm=<name>");
    std::string algorithm = line.substr(10);
    std::map<std::string, std::set<std::string>> roles;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw IngestionError(path + ": bad registry line '" + line + "'");
        std::string role = line.substr(0, eq);
        std::set<std::string> hashes;
        std::string rest = line.substr(eq + 1);
        std::size_t start = 0;
        while (start < rest.size()) {
            std::size_t comma = rest.find(',', start);
            std::size_t end = comma == std::string::npos ? rest.size() : comma;
            if (end > start) hashes.insert(rest.substr(start, end - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (!roles.emplace(role, std::move(hashes)).second)
            throw IngestionError(path + ": duplicate role '" + role + "'");
    }
    return SplitRegistry(std::move(algorithm), std::move(roles));
}

// ---------------------------------------------------------------- image loading

LoadedImage load_image(const std::string& path, const ImageShape& expect) {
    RasterImage raw = read_pnm(path);
    if (raw.height != expect.height || raw.width != expect.width ||
        raw.channels != expect.channels) {
        std::ostringstream os;
        os << path << ": image is " << raw.height << "x" << raw.width << "x"
           << raw.channels << ", manifest declares " << expect.height << "x"
           << expect.width << "x" << expect.channels;
        throw IngestionError(os.str());
    }
    LoadedImage out;
    out.hash = fnv1a64_hex(raw.pixels);
    out.pixels = Tensor({expect.channels, expect.height, expect.width});
    // Interleaved [h][w][c] bytes -> planar [c][h][w] doubles in [0,1].
    for (std::size_t h = 0; h < expect.height; ++h)
        for (std::size_t w = 0; w < expect.width; ++w)
            for (std::size_t c = 0; c < expect.channels; ++c)
                out.pixels[(c * expect.height + h) * expect.width + w] =
                    static_cast<double>(
                        raw.pixels[(h * expect.width + w) * expect.channels + c]) /
                    255.0;
    return out;
}

void save_image(const std::string& path, const Tensor& chw) {
    require_ndim(chw, 3, "image to save");
    RasterImage raw;
    raw.channels = chw.dim(0);
    raw.height = chw.dim(1);
    raw.width = chw.dim(2);
    raw.pixels.resize(raw.channels * raw.height * raw.width);
    for (std::size_t h = 0; h < raw.height; ++h)
        for (std::size_t w = 0; w < raw.width; ++w)
            for (std::size_t c = 0; c < raw.channels; ++c) {
                double v = chw[(c * raw.height + h) * raw.width + w];
                if (!(v >= 0.0 && v <= 1.0))
                    throw DomainError(path + ": pixel outside [0,1]");
                raw.pixels[(h * raw.width + w) * raw.channels + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    write_pnm(path, raw);
}

// ---------------------------------------------------------------- registry build

SplitRegistry build_split_registry(const DatasetManifest& manifest,
                                   const std::map<std::string, std::string>& assignment) {
    for (const auto& [id, role] : assignment)
        if (!manifest.has_item(id))
            throw AssignmentError("assignment names unknown item '" + id + "'");
    std::map<std::string, std::set<std::string>> roles;
    for (const auto& [id, role] : assignment) {
        const ManifestItem& item = manifest.item(id);
        LoadedImage img = load_image(manifest.resolve_path(item), manifest.image_size());
        auto [it, inserted] = roles[role].insert(img.hash);
        if (!inserted)
            log::warn("role '%s': item '%s' duplicates content hash %s", role.c_str(),
                      id.c_str(), img.hash.c_str());
    }
    return SplitRegistry(kHashAlgorithm, std::move(roles));
}

std::vector<std::string> verify_disjointness(const SplitRegistry& registry,
                                             const std::string& role_a,
                                             const std::string& role_b) {
    const std::set<std::string>& a = registry.hashes(role_a);
    const std::set<std::string>& b = registry.hashes(role_b);
    std::vector<std::string> shared;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(shared));
    return shared;
}

// ---------------------------------------------------------------- assignment io

std::map<std::string, std::string> read_assignment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError(path + ": cannot open assignment");
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols = split_tabs(line);
        if (cols.size() != 2)
            throw IngestionError(path + ":" + std::to_string(lineno) +
                                 ": expected item_id<TAB>role");
        if (!out.emplace(cols[0], cols[1]).second)
            throw IngestionError(path + ":" + std::to_string(lineno) +
                                 ": item '" + cols[0] + "' assigned twice");
    }
    return out;
}

void write_assignment(const std::string& path,
                      const std::map<std::string, std::string>& assignment) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw PersistenceError(path + ": cannot open for write");
    for (const auto& [id, role] : assignment)
        out << id << "\t" << role << "\n";
    if (!out) throw PersistenceError(path + ": write failed");
}

// ---------------------------------------------------------------- InMemoryDataset

InMemoryDataset InMemoryDataset::load(const DatasetManifest& manifest) {
    std::map<std::string, std::string> all;
    for (const ManifestItem& it : manifest.items()) all[it.id] = "";
    return load(manifest, all, "");
}

InMemoryDataset InMemoryDataset::load(const DatasetManifest& manifest,
                                      const std::map<std::string, std::string>& assignment,
                                      const std::string& role) {
    for (const auto& [id, r] : assignment)
        if (!manifest.has_item(id))
            throw AssignmentError("assignment names unknown item '" + id + "'");
    InMemoryDataset ds;
    ds.n_classes_ = manifest.n_classes();
    ds.shape_ = manifest.image_size();
    // Manifest order, filtered, so loading is deterministic.
    std::vector<const ManifestItem*> chosen;
    for (const ManifestItem& it : manifest.items()) {
        auto a = assignment.find(it.id);
        if (a != assignment.end() && a->second == role) chosen.push_back(&it);
    }
    const std::size_t per = ds.shape_.channels * ds.shape_.height * ds.shape_.width;
    ds.pixels_ = Tensor({chosen.size(), ds.shape_.channels, ds.shape_.height,
                         ds.shape_.width});
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        LoadedImage img = load_image(manifest.resolve_path(*chosen[i]),
                                     manifest.image_size());
        std::copy(img.pixels.data(), img.pixels.data() + per,
                  ds.pixels_.data() + i * per);
        ds.ids_.push_back(chosen[i]->id);
        ds.labels_.push_back(chosen[i]->label);
        ds.hashes_.push_back(img.hash);
    }
    return ds;
}

Tensor InMemoryDataset::sample(std::size_t i) const {
    if (i >= size()) throw LookupError("dataset sample index out of range");
    const std::size_t per = shape_.channels * shape_.height * shape_.width;
    Tensor out({1, shape_.channels, shape_.height, shape_.width});
    std::copy(pixels_.data() + i * per, pixels_.data() + (i + 1) * per, out.data());
    return out;
}

std::vector<Batch> InMemoryDataset::batches(
    std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed) const {
    if (batch_size == 0) throw DomainError("batch_size must be >= 1");
    std::vector<std::size_t> order(size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (shuffle_seed) {
        Rng rng(*shuffle_seed);
        rng.shuffle(order);
    }
    const std::size_t per = shape_.channels * shape_.height * shape_.width;
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::size_t n = std::min(batch_size, order.size() - start);
        Tensor px({n, shape_.channels, shape_.height, shape_.width});
        std::vector<std::string> ids(n);
        std::vector<std::size_t> labels(n);
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t src = order[start + k];
            std::copy(pixels_.data() + src * per, pixels_.data() + (src + 1) * per,
                      px.data() + k * per);
            ids[k] = ids_[src];
            labels[k] = labels_[src];
        }
        out.push_back(Batch{ImageBatch::make(std::move(px), std::move(ids)),
                            LabelVector::make(std::move(labels), n_classes_)});
    }
    return out;
}

}
