#pragma once

#include "expertnet/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace expertnet::data {

/// Features, dense class ids and the names needed to decode them.
struct Dataset {
    Matrix features;                          // N x d
    std::vector<int> labels;                  // class ids in [0, class_count)
    std::vector<std::string> feature_names;   // d
    std::vector<std::string> class_names;     // class_count; index = class id
    std::optional<std::vector<int>> groups;   // optional ground-truth cluster ids
    // false for prediction inputs read without a label column; labels are then all 0
    bool labeled = true;

    std::size_t rows() const noexcept { return labels.size(); }
    std::size_t dims() const noexcept { return static_cast<std::size_t>(features.cols()); }
    std::size_t class_count() const noexcept { return class_names.size(); }

    void validate() const;
    Dataset subset(std::span<const std::size_t> indices) const;
};

enum class MissingPolicy { Drop, MeanImpute };

enum class LabelOrder {
    FirstAppearance,
    // numeric order when every label parses as a number, otherwise first appearance
    Auto,
};

struct CsvOptions {
    std::string label_column = "label";
    // integer column read into Dataset::groups rather than the features
    std::string group_column;
    std::vector<std::string> ignore_columns;
    MissingPolicy missing = MissingPolicy::Drop;
    LabelOrder label_order = LabelOrder::Auto;
    // strict: an unparseable non-empty cell is an error; otherwise it counts as missing
    bool strict = true;
    // accept a file without the label column (prediction inputs)
    bool labels_optional = false;
};

/// Reads a comma-separated file with a header row. Files ending in .gz are
/// decompressed transparently.
Dataset load_csv(const std::string& path, const CsvOptions& options = {});
Dataset parse_csv(const std::string& text, const CsvOptions& options = {});

/// Writes features, then the label column (by class name), then the group
/// column when present. Doubles are printed with 17 significant digits.
void save_csv(const Dataset& dataset, const std::string& path, const std::string& label_column = "label",
              const std::string& group_column = "cluster");

/// Whole-file read/write with optional gzip by suffix.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

/// Per-feature (x - mean) / std, statistics taken from the training split.
struct Standardizer {
    Vector mean;
    Vector scale;  // std, floored at 1e-8

    static Standardizer fit(const Matrix& features);
    Matrix apply(const Matrix& features) const;
    Dataset apply(const Dataset& dataset) const;
};

std::tuple<Standardizer, Dataset> standardize(const Dataset& train);

struct SplitSpec {
    double train = 0.57;
    double val = 0.18;
    double test = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Shuffles [0, n) and cuts it. val and test get floor(fraction * n) rows,
/// train gets the remainder.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

std::tuple<Dataset, Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec);

struct SynthParams {
    int k_true = 2;
    int n_per_cluster = 2000;
    int dim = 10;
    double separation = 8.0;
    double flip_noise = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Generator output plus the construction it used.
struct SynthDataset {
    Dataset data;          // groups holds the true cluster ids
    Matrix centers;        // k_true x dim
    Matrix rule_weights;   // k_true x dim, unit rows; label = [w_c . (x - center_c) > 0]
};

/// Isotropic unit Gaussians centred at separation * u_c (orthonormal u_c).
/// Within cluster c the label is the side of the hyperplane w_c through the
/// centre; w_{c+1} = -(cos a w_c + sin a v) so adjacent rules disagree.
/// Labels are then flipped with probability flip_noise.
SynthDataset synth_heterogeneous(const SynthParams& params);

}  // namespace expertnet::data
