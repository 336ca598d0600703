#include "expertnet/data.hpp"

#include "expertnet/errors.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

namespace expertnet::data {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool is_missing_token(const std::string& s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "?" || s == "null";
}

std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

// RFC 4180-style split of one record: quoted fields may hold commas and "" escapes.
std::vector<std::string> split_record(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void Dataset::validate() const {
    if (rows() == 0) throw InvalidArgument("dataset has no rows");
    if (features.cols() < 1) throw InvalidArgument("dataset has no features");
    if (static_cast<std::size_t>(features.rows()) != rows()) throw ShapeError("feature rows != label count");
    if (feature_names.size() != dims()) throw ShapeError("feature_names length != feature count");
    if (!features.allFinite()) throw NumericError("dataset contains non-finite features");
    if (labeled)
        for (int y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= class_count())
                throw InvalidArgument("label id out of range");
    if (groups && groups->size() != rows()) throw ShapeError("group column length != row count");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
    out.labels.reserve(indices.size());
    if (groups) out.groups.emplace();
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t i = indices[r];
        if (i >= rows()) throw InvalidArgument("subset index out of range");
        out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(i));
        out.labels.push_back(labels[i]);
        if (groups) out.groups->push_back((*groups)[i]);
    }
    out.feature_names = feature_names;
    out.class_names = class_names;
    out.labeled = labeled;
    return out;
}

std::string read_text_file(const std::string& path) {
    // gzread passes uncompressed files through unchanged
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw IoError("cannot open '" + path + "'");
    std::string out;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw IoError("read error in '" + path + "'");
    return out;
}

void write_text_file(const std::string& path, const std::string& contents) {
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (f == nullptr) throw IoError("cannot write '" + path + "'");
        const int written = contents.empty() ? 0 : gzwrite(f, contents.data(), static_cast<unsigned>(contents.size()));
        gzclose(f);
        if (!contents.empty() && written <= 0) throw IoError("write error in '" + path + "'");
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << contents;
    if (!out) throw IoError("write error in '" + path + "'");
}

Dataset parse_csv(const std::string& text, const CsvOptions& options) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) {
            header = split_record(line);
            break;
        }
    }
    if (header.empty()) throw ParseError("empty CSV input");

    int label_col = -1;
    int group_col = -1;
    std::vector<int> feature_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& name = header[c];
        if (name == options.label_column) {
            label_col = static_cast<int>(c);
        } else if (!options.group_column.empty() && name == options.group_column) {
            group_col = static_cast<int>(c);
        } else if (std::find(options.ignore_columns.begin(), options.ignore_columns.end(), name) ==
                   options.ignore_columns.end()) {
            feature_cols.push_back(static_cast<int>(c));
        }
    }
    if (label_col < 0 && !options.labels_optional)
        throw ParseError("label column '" + options.label_column + "' not found in header");
    if (!options.group_column.empty() && group_col < 0)
        throw ParseError("group column '" + options.group_column + "' not found in header");
    if (feature_cols.empty()) throw ParseError("no feature columns");

    const std::size_t d = feature_cols.size();
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<bool>> missing;
    std::vector<std::string> raw_labels;
    std::vector<int> groups;

    std::size_t row_no = 1;  // header is row 0
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_record(line);
        if (cells.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                                 std::to_string(cells.size()),
                             row_no, cells.size());
        const std::string lab = label_col >= 0 ? cells[static_cast<std::size_t>(label_col)] : std::string("0");
        if (is_missing_token(lab)) {
            // unlabeled rows cannot be used for supervision
            ++row_no;
            continue;
        }
        std::vector<double> vals(d, 0.0);
        std::vector<bool> miss(d, false);
        bool any_missing = false;
        for (std::size_t f = 0; f < d; ++f) {
            const std::string& cell = cells[static_cast<std::size_t>(feature_cols[f])];
            if (is_missing_token(cell)) {
                miss[f] = true;
                any_missing = true;
                continue;
            }
            auto v = parse_double(cell);
            if (!v) {
                if (options.strict)
                    throw ParseError("cannot parse '" + cell + "' as a number", row_no,
                                     static_cast<std::size_t>(feature_cols[f]));
                miss[f] = true;
                any_missing = true;
                continue;
            }
            vals[f] = *v;
        }
        ++row_no;
        if (any_missing && options.missing == MissingPolicy::Drop) continue;
        if (group_col >= 0) {
            auto g = parse_double(cells[static_cast<std::size_t>(group_col)]);
            if (!g || *g != std::floor(*g))
                throw ParseError("group column must hold integers", row_no - 1, static_cast<std::size_t>(group_col));
            groups.push_back(static_cast<int>(*g));
        }
        rows.push_back(std::move(vals));
        missing.push_back(std::move(miss));
        raw_labels.push_back(lab);
    }
    if (rows.empty()) throw ParseError("CSV has no usable data rows");

    Dataset ds;
    for (int c : feature_cols) ds.feature_names.push_back(header[static_cast<std::size_t>(c)]);
    const auto n = static_cast<Eigen::Index>(rows.size());
    ds.features.resize(n, static_cast<Eigen::Index>(d));
    for (std::size_t f = 0; f < d; ++f) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (!missing[i][f]) {
                sum += rows[i][f];
                ++count;
            }
        if (count == 0 && options.missing == MissingPolicy::MeanImpute)
            throw ParseError("column '" + ds.feature_names[f] + "' has no observed values");
        const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i)
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = missing[i][f] ? mean : rows[i][f];
    }

    if (label_col < 0) {
        ds.labeled = false;
        ds.labels.assign(rows.size(), 0);
        if (group_col >= 0) ds.groups = std::move(groups);
        ds.validate();
        return ds;
    }

    // dense label ids
    std::vector<std::string> order;
    for (const auto& l : raw_labels)
        if (std::find(order.begin(), order.end(), l) == order.end()) order.push_back(l);
    if (options.label_order == LabelOrder::Auto) {
        std::vector<std::pair<double, std::string>> numeric;
        for (const auto& l : order) {
            auto v = parse_double(l);
            if (!v) {
                numeric.clear();
                break;
            }
            numeric.emplace_back(*v, l);
        }
        if (!numeric.empty()) {
            std::stable_sort(numeric.begin(), numeric.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            order.clear();
            for (auto& [v, l] : numeric) order.push_back(l);
        }
    }
    std::unordered_map<std::string, int> ids;
    for (std::size_t c = 0; c < order.size(); ++c) ids[order[c]] = static_cast<int>(c);
    ds.class_names = order;
    ds.labels.reserve(raw_labels.size());
    for (const auto& l : raw_labels) ds.labels.push_back(ids.at(l));
    if (group_col >= 0) ds.groups = std::move(groups);
    ds.validate();
    return ds;
}

Dataset load_csv(const std::string& path, const CsvOptions& options) {
    const std::string text = read_text_file(path);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ParseError("empty file '" + path + "'");
    return parse_csv(text, options);
}

void save_csv(const Dataset& dataset, const std::string& path, const std::string& label_column,
              const std::string& group_column) {
    dataset.validate();
    if (!dataset.labeled) throw InvalidArgument("save_csv: dataset has no labels");
    std::string out;
    for (std::size_t f = 0; f < dataset.dims(); ++f) {
        out += quote_if_needed(dataset.feature_names[f]);
        out += ',';
    }
    out += quote_if_needed(label_column);
    if (dataset.groups) out += ',' + quote_if_needed(group_column);
    out += '\n';
    for (std::size_t i = 0; i < dataset.rows(); ++i) {
        for (std::size_t f = 0; f < dataset.dims(); ++f) {
            out += format_double(dataset.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)));
            out += ',';
        }
        out += quote_if_needed(dataset.class_names[static_cast<std::size_t>(dataset.labels[i])]);
        if (dataset.groups) out += ',' + std::to_string((*dataset.groups)[i]);
        out += '\n';
    }
    write_text_file(path, out);
}

Standardizer Standardizer::fit(const Matrix& features) {
    if (features.rows() == 0) throw InvalidArgument("cannot standardize an empty dataset");
    Standardizer s;
    s.mean = features.colwise().mean().transpose();
    const Matrix centered = features.rowwise() - s.mean.transpose();
    s.scale = (centered.colwise().squaredNorm().transpose() / static_cast<double>(features.rows())).array().sqrt();
    s.scale = s.scale.array().max(1e-8);
    return s;
}

Matrix Standardizer::apply(const Matrix& features) const {
    if (features.cols() != mean.size()) throw ShapeError("standardizer dimension mismatch");
    return (features.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Dataset Standardizer::apply(const Dataset& dataset) const {
    Dataset out = dataset;
    out.features = apply(dataset.features);
    return out;
}

std::tuple<Standardizer, Dataset> standardize(const Dataset& train) {
    Standardizer s = Standardizer::fit(train.features);
    Dataset out = s.apply(train);
    return {std::move(s), std::move(out)};
}

void SplitSpec::validate() const {
    for (double f : {train, val, test})
        if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("split fractions must lie in (0, 1)");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
    spec.validate();
    if (n < 3) throw InvalidArgument("need at least 3 rows to split");
    Rng rng(derive_seed(spec.seed, 0x5B117));
    const auto perm = shuffled_indices(n, rng);
    // small guard so that e.g. 0.18 * 100 does not floor to 17
    auto cut = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
    const std::size_t n_val = cut(spec.val);
    const std::size_t n_test = cut(spec.test);
    const std::size_t n_train = n - n_val - n_test;
    SplitIndices out;
    out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                   perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    return out;
}

std::tuple<Dataset, Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec) {
    const auto idx = split_indices(dataset.rows(), spec);
    return {dataset.subset(idx.train), dataset.subset(idx.val), dataset.subset(idx.test)};
}

void SynthParams::validate() const {
    if (k_true < 1) throw InvalidArgument("k_true must be >= 1");
    if (dim < 2) throw InvalidArgument("dim must be >= 2");
    if (n_per_cluster < 1) throw InvalidArgument("n_per_cluster must be >= 1");
    if (!(separation >= 0.0) || !std::isfinite(separation)) throw InvalidArgument("separation must be >= 0");
    if (!(flip_noise >= 0.0 && flip_noise <= 1.0)) throw InvalidArgument("flip_noise must lie in [0, 1]");
}

namespace {

Vector random_unit(Rng& rng, std::normal_distribution<double>& normal, Eigen::Index dim) {
    Vector v(dim);
    do {
        for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(rng);
    } while (v.norm() < 1e-12);
    return v.normalized();
}

// Random unit vector orthogonal to the rows of `basis` (rows assumed orthonormal).
Vector random_orthogonal(Rng& rng, std::normal_distribution<double>& normal, const Matrix& basis, Eigen::Index dim) {
    for (;;) {
        Vector v = random_unit(rng, normal, dim);
        for (Eigen::Index r = 0; r < basis.rows(); ++r) v -= basis.row(r).dot(v) * basis.row(r).transpose();
        if (v.norm() > 1e-6) return v.normalized();
    }
}

}  // namespace

SynthDataset synth_heterogeneous(const SynthParams& params) {
    params.validate();
    Rng rng(derive_seed(params.seed, 0x5A17));
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index dim = params.dim;
    const Eigen::Index k = params.k_true;

    SynthDataset out;
    out.centers.resize(k, dim);
    {
        Matrix basis(0, dim);
        for (Eigen::Index c = 0; c < k; ++c) {
            // orthonormal while k <= dim, plain random directions beyond that
            Vector u = c < dim ? random_orthogonal(rng, normal, basis, dim) : random_unit(rng, normal, dim);
            if (c < dim) {
                basis.conservativeResize(basis.rows() + 1, Eigen::NoChange);
                basis.row(basis.rows() - 1) = u.transpose();
            }
            out.centers.row(c) = params.separation * u.transpose();
        }
    }

    constexpr double kRuleTilt = std::numbers::pi / 6.0;
    out.rule_weights.resize(k, dim);
    out.rule_weights.row(0) = random_unit(rng, normal, dim).transpose();
    for (Eigen::Index c = 1; c < k; ++c) {
        Matrix prev = out.rule_weights.row(c - 1);
        const Vector v = random_orthogonal(rng, normal, prev, dim);
        const Vector w = -(std::cos(kRuleTilt) * prev.row(0).transpose() + std::sin(kRuleTilt) * v);
        out.rule_weights.row(c) = w.normalized().transpose();
    }

    const Eigen::Index n = k * params.n_per_cluster;
    auto& ds = out.data;
    ds.features.resize(n, dim);
    ds.labels.reserve(static_cast<std::size_t>(n));
    ds.groups.emplace();
    ds.groups->reserve(static_cast<std::size_t>(n));
    for (Eigen::Index c = 0; c < k; ++c) {
        for (int r = 0; r < params.n_per_cluster; ++r) {
            const Eigen::Index i = c * params.n_per_cluster + r;
            for (Eigen::Index f = 0; f < dim; ++f) ds.features(i, f) = out.centers(c, f) + normal(rng);
            const double side = out.rule_weights.row(c).dot(ds.features.row(i) - out.centers.row(c));
            int label = side > 0.0 ? 1 : 0;
            if (uniform01(rng) < params.flip_noise) label = 1 - label;
            ds.labels.push_back(label);
            ds.groups->push_back(static_cast<int>(c));
        }
    }
    for (Eigen::Index f = 0; f < dim; ++f) ds.feature_names.push_back("x" + std::to_string(f));
    ds.class_names = {"0", "1"};
    ds.validate();
    return out;
}

}  // namespace expertnet::data
