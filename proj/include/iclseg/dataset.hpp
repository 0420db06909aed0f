#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iclseg/core.hpp"

namespace iclseg {

/// One semantic-segmentation sample: an image plus a per-pixel class map.
/// Class 0 is reserved for unlabeled/background pixels.
struct SemanticSample {
    std::string id;
    Image image;
    std::vector<std::uint16_t> class_map;  ///< row-major, dims must equal the image's
};

/// All binary pairs of one class carved out of a semantic dataset.
struct BinaryDataset {
    int class_id = 0;
    std::string class_name;
    std::vector<LabeledPair> pairs;
};

/// Disjoint partition of a class's pairs into meta-support and eval sides.
struct DatasetSplit {
    std::vector<LabeledPair> meta_support;
    std::vector<LabeledPair> eval;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kEpisodeSize = 16;

/// A sampled bundle of 16 same-class pairs, the unit of episodic training.
struct Episode {
    int class_id = 0;
    std::vector<LabeledPair> pairs;  ///< exactly kEpisodeSize
};

/// For each class id > 0 and each sample containing at least min_pixels
/// pixels of that class, emits one pair whose mask is the exact indicator
/// of the class. Classes with no qualifying sample are omitted; output is
/// ordered by ascending class id, pairs in sample order.
std::vector<BinaryDataset> construct_binary_datasets(const std::vector<SemanticSample>& samples,
                                                     std::size_t min_pixels = 16);

/// Seeded disjoint partition. |eval| = round(eval_fraction * n), clamped to
/// [1, n-1] so both sides stay non-empty. Source order is preserved within
/// each side.
DatasetSplit split_dataset(const std::vector<LabeledPair>& pairs, double eval_fraction,
                           std::uint64_t seed);

/// Draws exactly kEpisodeSize pairs from one class's meta-support set:
/// without replacement when enough pairs exist, with replacement otherwise.
Episode sample_episode(int class_id, const std::vector<LabeledPair>& meta_support,
                       std::uint64_t seed);

// --- disk layout -----------------------------------------------------------
//
// Semantic dataset:  <root>/images/<id>.png  +  <root>/annotations/<id>.png
//                    (annotation pixels are class ids, 0 = unlabeled)
// Binary dataset:    <root>/<class_id>/<id>.png  +  <root>/<class_id>/masks/<id>.png
//                    (mask: 255 = foreground, 0 = background)
// Split manifest:    {"seed", "eval_fraction", "meta_support": [ids], "eval": [ids]}

std::vector<SemanticSample> load_semantic_dataset(const std::filesystem::path& root);

void write_binary_dataset_tree(const std::filesystem::path& root, const BinaryDataset& dataset);

BinaryDataset load_binary_class_dir(const std::filesystem::path& class_dir, int class_id);

/// Loads every numeric class subdirectory under root, ascending class id.
std::vector<BinaryDataset> load_binary_dataset_tree(const std::filesystem::path& root);

struct SplitManifest {
    std::uint64_t seed = 0;
    double eval_fraction = 0.0;
    std::vector<std::string> meta_support;
    std::vector<std::string> eval;
};

void write_split_manifest(const std::filesystem::path& path, const DatasetSplit& split,
                          double eval_fraction);
SplitManifest read_split_manifest(const std::filesystem::path& path);

/// Partitions pairs by manifest ids. Every pair must be covered by exactly
/// one side and every manifest id must exist.
DatasetSplit apply_split_manifest(const std::vector<LabeledPair>& pairs,
                                  const SplitManifest& manifest);

}  // namespace iclseg
