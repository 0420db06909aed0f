#include "iclseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "binio.hpp"
#include "iclseg/png_io.hpp"
#include "iclseg/rng.hpp"

namespace fs = std::filesystem;

namespace iclseg {

std::vector<BinaryDataset> construct_binary_datasets(const std::vector<SemanticSample>& samples,
                                                     std::size_t min_pixels) {
    if (samples.empty()) {
        throw std::invalid_argument("construct_binary_datasets: samples must be non-empty");
    }
    if (min_pixels < 1) {
        throw std::invalid_argument("construct_binary_datasets: min_pixels must be >= 1");
    }

    std::map<int, BinaryDataset> by_class;
    for (const auto& sample : samples) {
        const std::size_t expected = sample.image.pixel_count();
        if (sample.class_map.size() != expected) {
            throw std::runtime_error("construct_binary_datasets: sample '" + sample.id +
                                     "' class map does not match image dimensions");
        }

        std::map<std::uint16_t, std::size_t> census;
        for (const std::uint16_t c : sample.class_map) {
            if (c != 0) ++census[c];
        }
        for (const auto& [class_id, count] : census) {
            if (count < min_pixels) continue;
            std::vector<std::uint8_t> mask(expected);
            for (std::size_t i = 0; i < expected; ++i) {
                mask[i] = sample.class_map[i] == class_id ? 1 : 0;
            }
            auto& dataset = by_class[class_id];
            if (dataset.pairs.empty()) {
                dataset.class_id = class_id;
                dataset.class_name = "class_" + std::to_string(class_id);
            }
            dataset.pairs.emplace_back(
                sample.id, sample.image,
                BinaryMask(sample.image.height(), sample.image.width(), std::move(mask)));
        }
    }

    std::vector<BinaryDataset> result;
    result.reserve(by_class.size());
    for (auto& [class_id, dataset] : by_class) result.push_back(std::move(dataset));
    return result;
}

DatasetSplit split_dataset(const std::vector<LabeledPair>& pairs, double eval_fraction,
                           std::uint64_t seed) {
    if (pairs.size() < 2) throw std::invalid_argument("split_dataset: need at least 2 pairs");
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
        throw std::invalid_argument("split_dataset: eval_fraction must be in (0, 1)");
    }
    {
        std::unordered_set<std::string> ids;
        for (const auto& p : pairs) {
            if (!ids.insert(p.id).second) {
                throw std::invalid_argument("split_dataset: duplicate pair id '" + p.id + "'");
            }
        }
    }

    const std::size_t n = pairs.size();
    std::size_t n_eval = static_cast<std::size_t>(
        std::llround(eval_fraction * static_cast<double>(n)));
    n_eval = std::clamp<std::size_t>(n_eval, 1, n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<std::size_t> eval_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
    std::vector<std::size_t> support_idx(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
    std::sort(eval_idx.begin(), eval_idx.end());
    std::sort(support_idx.begin(), support_idx.end());

    DatasetSplit split;
    split.seed = seed;
    split.eval.reserve(n_eval);
    split.meta_support.reserve(n - n_eval);
    for (const std::size_t i : eval_idx) split.eval.push_back(pairs[i]);
    for (const std::size_t i : support_idx) split.meta_support.push_back(pairs[i]);
    return split;
}

Episode sample_episode(int class_id, const std::vector<LabeledPair>& meta_support,
                       std::uint64_t seed) {
    if (meta_support.empty()) {
        throw std::invalid_argument("sample_episode: meta-support set is empty");
    }

    Episode episode;
    episode.class_id = class_id;
    episode.pairs.reserve(kEpisodeSize);
    Rng rng(seed);

    if (meta_support.size() >= kEpisodeSize) {
        std::vector<std::size_t> order(meta_support.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = 0; i < kEpisodeSize; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.bounded(order.size() - i));
            std::swap(order[i], order[j]);
            episode.pairs.push_back(meta_support[order[i]]);
        }
    } else {
        for (std::size_t i = 0; i < kEpisodeSize; ++i) {
            episode.pairs.push_back(
                meta_support[static_cast<std::size_t>(rng.bounded(meta_support.size()))]);
        }
    }
    return episode;
}

std::vector<SemanticSample> load_semantic_dataset(const fs::path& root) {
    const fs::path images = root / "images";
    const fs::path annotations = root / "annotations";
    if (!fs::is_directory(images)) {
        throw std::invalid_argument("semantic dataset: missing images directory " + images.string());
    }

    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(images)) {
        if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
    }
    if (ids.empty()) {
        throw std::invalid_argument("semantic dataset: no samples found under " + images.string());
    }
    std::sort(ids.begin(), ids.end());

    std::vector<SemanticSample> samples;
    samples.reserve(ids.size());
    for (const auto& id : ids) {
        const fs::path annotation = annotations / (id + ".png");
        if (!fs::exists(annotation)) {
            throw std::runtime_error("semantic dataset: sample '" + id + "' has no annotation at " +
                                     annotation.string());
        }
        const PngBuffer img = read_png_image(images / (id + ".png"));
        const PngBuffer ann = read_png_labels(annotation);
        if (img.height != ann.height || img.width != ann.width) {
            throw std::runtime_error("semantic dataset: sample '" + id +
                                     "' image and annotation dimensions differ");
        }
        std::vector<std::uint16_t> class_map(ann.data.begin(), ann.data.end());
        samples.push_back({id, image_from_png(img), std::move(class_map)});
    }
    return samples;
}

void write_binary_dataset_tree(const fs::path& root, const BinaryDataset& dataset) {
    const fs::path class_dir = root / std::to_string(dataset.class_id);
    const fs::path mask_dir = class_dir / "masks";
    fs::create_directories(mask_dir);
    for (const auto& pair : dataset.pairs) {
        write_image_png(class_dir / (pair.id + ".png"), pair.image);
        write_mask_png(mask_dir / (pair.id + ".png"), pair.mask);
    }
}

BinaryDataset load_binary_class_dir(const fs::path& class_dir, int class_id) {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(class_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            ids.push_back(entry.path().stem().string());
        }
    }
    // Directory iteration order is unspecified; sort for determinism.
    std::sort(ids.begin(), ids.end());

    BinaryDataset dataset;
    dataset.class_id = class_id;
    dataset.class_name = "class_" + std::to_string(class_id);
    dataset.pairs.reserve(ids.size());
    for (const auto& id : ids) {
        const fs::path mask_path = class_dir / "masks" / (id + ".png");
        if (!fs::exists(mask_path)) {
            throw std::runtime_error("binary dataset: pair '" + id + "' has no mask at " +
                                     mask_path.string());
        }
        dataset.pairs.emplace_back(id, image_from_png(read_png_image(class_dir / (id + ".png"))),
                                   mask_from_png(read_png_labels(mask_path)));
    }
    return dataset;
}

std::vector<BinaryDataset> load_binary_dataset_tree(const fs::path& root) {
    if (!fs::is_directory(root)) {
        throw std::invalid_argument("binary dataset: not a directory: " + root.string());
    }
    std::vector<std::pair<int, fs::path>> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.empty() || name.find_first_not_of("0123456789") != std::string::npos) continue;
        class_dirs.emplace_back(std::stoi(name), entry.path());
    }
    if (class_dirs.empty()) {
        throw std::invalid_argument("binary dataset: no class subdirectories under " + root.string());
    }
    std::sort(class_dirs.begin(), class_dirs.end());

    std::vector<BinaryDataset> datasets;
    datasets.reserve(class_dirs.size());
    for (const auto& [class_id, dir] : class_dirs) {
        datasets.push_back(load_binary_class_dir(dir, class_id));
    }
    return datasets;
}

void write_split_manifest(const fs::path& path, const DatasetSplit& split, double eval_fraction) {
    nlohmann::json manifest;
    manifest["seed"] = split.seed;
    manifest["eval_fraction"] = eval_fraction;
    auto ids = [](const std::vector<LabeledPair>& pairs) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : pairs) arr.push_back(p.id);
        return arr;
    };
    manifest["meta_support"] = ids(split.meta_support);
    manifest["eval"] = ids(split.eval);
    binio::atomic_write_bytes(path, manifest.dump(2) + "\n");
}

SplitManifest read_split_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("split manifest: cannot open " + path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& err) {
        throw std::runtime_error("split manifest: bad JSON in " + path.string() + ": " + err.what());
    }
    SplitManifest out;
    out.seed = manifest.at("seed").get<std::uint64_t>();
    out.eval_fraction = manifest.at("eval_fraction").get<double>();
    out.meta_support = manifest.at("meta_support").get<std::vector<std::string>>();
    out.eval = manifest.at("eval").get<std::vector<std::string>>();
    return out;
}

DatasetSplit apply_split_manifest(const std::vector<LabeledPair>& pairs,
                                  const SplitManifest& manifest) {
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!by_id.emplace(pairs[i].id, i).second) {
            throw std::invalid_argument("apply_split_manifest: duplicate pair id '" + pairs[i].id + "'");
        }
    }

    DatasetSplit split;
    split.seed = manifest.seed;
    std::unordered_set<std::string> assigned;
    const auto take = [&](const std::vector<std::string>& ids, std::vector<LabeledPair>& dst) {
        dst.reserve(ids.size());
        for (const auto& id : ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw std::invalid_argument("apply_split_manifest: manifest id '" + id +
                                            "' not present in dataset");
            }
            if (!assigned.insert(id).second) {
                throw std::invalid_argument("apply_split_manifest: id '" + id +
                                            "' appears on both sides");
            }
            dst.push_back(pairs[it->second]);
        }
    };
    take(manifest.meta_support, split.meta_support);
    take(manifest.eval, split.eval);
    if (assigned.size() != pairs.size()) {
        throw std::invalid_argument("apply_split_manifest: manifest does not cover every pair");
    }
    return split;
}

}  // namespace iclseg
