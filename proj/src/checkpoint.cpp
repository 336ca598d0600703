#include "expertnet/checkpoint.hpp"

#include "expertnet/errors.hpp"

#include <cmath>

namespace expertnet::checkpoint {

namespace {

const Json& require(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("checkpoint: missing key '") + key + "'");
    return j.at(key);
}

double finite_number(const Json& j) {
    if (!j.is_number()) throw ParseError("checkpoint: expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ParseError("checkpoint: non-finite number");
    return v;
}

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array()) throw ParseError("checkpoint: matrix must be an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j.front().size()) : 0;
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ParseError("checkpoint: ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = finite_number(row[static_cast<std::size_t>(c)]);
    }
    return m;
}

Json vector_to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Vector vector_from_json(const Json& j) {
    if (!j.is_array()) throw ParseError("checkpoint: vector must be an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = finite_number(j[i]);
    return v;
}

Json network_to_json(const nn::MlpNetwork& net) {
    Json j;
    j["layer_dims"] = net.layer_dims;
    j["hidden_activation"] = std::string(nn::activation_name(net.hidden_activation));
    j["output_activation"] = std::string(nn::activation_name(net.output_activation));
    Json layers = Json::array();
    for (std::size_t l = 0; l < net.depth(); ++l)
        layers.push_back({{"weights", matrix_to_json(net.weights[l])}, {"bias", vector_to_json(net.biases[l])}});
    j["layers"] = std::move(layers);
    return j;
}

nn::MlpNetwork network_from_json(const Json& j) {
    nn::MlpNetwork net;
    net.layer_dims = require(j, "layer_dims").get<std::vector<std::size_t>>();
    net.hidden_activation = nn::parse_activation(require(j, "hidden_activation").get<std::string>());
    net.output_activation = nn::parse_activation(require(j, "output_activation").get<std::string>());
    for (const auto& layer : require(j, "layers")) {
        net.weights.push_back(matrix_from_json(require(layer, "weights")));
        net.biases.push_back(vector_from_json(require(layer, "bias")));
    }
    net.validate();
    return net;
}

Json ensemble_to_json(const experts::ExpertEnsemble& ensemble) {
    Json nets = Json::array();
    for (const auto& e : ensemble.experts) nets.push_back(network_to_json(e));
    return {{"class_count", ensemble.class_count}, {"experts", std::move(nets)}};
}

experts::ExpertEnsemble ensemble_from_json(const Json& j) {
    experts::ExpertEnsemble ens;
    ens.class_count = require(j, "class_count").get<std::size_t>();
    for (const auto& e : require(j, "experts")) ens.experts.push_back(network_from_json(e));
    ens.validate();
    return ens;
}

Json config_to_json(const trainer::TrainConfig& c) {
    Json j;
    j["k"] = c.k;
    j["beta"] = c.beta;
    j["gamma"] = c.gamma;
    j["delta"] = c.delta;
    j["batch_size"] = c.batch_size;
    j["pretrain_epochs"] = c.pretrain_epochs;
    j["max_epochs"] = c.max_epochs;
    j["finetune_epochs"] = c.finetune_epochs;
    j["patience"] = c.patience;
    j["base_rate"] = c.base_rate;
    j["rate_decay"] = c.rate_decay;
    j["sub_iter_start"] = c.sub_iter_start;
    j["sub_iter_growth_period"] = c.sub_iter_growth_period;
    j["sub_iter_max"] = c.sub_iter_max;
    j["resample_each_subiter"] = c.resample_each_subiter;
    j["sampling_at_train"] = c.sampling_at_train;
    j["weighting_at_predict"] = c.weighting_at_predict;
    j["encoder_hidden"] = c.encoder_hidden;
    j["latent_dim"] = c.latent_dim;
    j["expert_hidden"] = c.expert_hidden;
    j["kmeans_max_iters"] = c.kmeans_max_iters;
    j["seed"] = c.seed;
    return j;
}

void apply_config_json(const Json& j, trainer::TrainConfig& c) {
    if (!j.is_object()) throw ParseError("training config must be an object");
    const Json known = config_to_json(c);
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw ParseError("unknown training option '" + key + "'");
    try {
        read_if(j, "k", c.k);
        read_if(j, "beta", c.beta);
        read_if(j, "gamma", c.gamma);
        read_if(j, "delta", c.delta);
        read_if(j, "batch_size", c.batch_size);
        read_if(j, "pretrain_epochs", c.pretrain_epochs);
        read_if(j, "max_epochs", c.max_epochs);
        read_if(j, "finetune_epochs", c.finetune_epochs);
        read_if(j, "patience", c.patience);
        read_if(j, "base_rate", c.base_rate);
        read_if(j, "rate_decay", c.rate_decay);
        read_if(j, "sub_iter_start", c.sub_iter_start);
        read_if(j, "sub_iter_growth_period", c.sub_iter_growth_period);
        read_if(j, "sub_iter_max", c.sub_iter_max);
        read_if(j, "resample_each_subiter", c.resample_each_subiter);
        read_if(j, "sampling_at_train", c.sampling_at_train);
        read_if(j, "weighting_at_predict", c.weighting_at_predict);
        read_if(j, "encoder_hidden", c.encoder_hidden);
        read_if(j, "latent_dim", c.latent_dim);
        read_if(j, "expert_hidden", c.expert_hidden);
        read_if(j, "kmeans_max_iters", c.kmeans_max_iters);
        read_if(j, "seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("training config: ") + e.what());
    }
}

Json standardizer_to_json(const data::Standardizer& s) {
    return {{"mean", vector_to_json(s.mean)}, {"scale", vector_to_json(s.scale)}};
}

data::Standardizer standardizer_from_json(const Json& j) {
    data::Standardizer s;
    s.mean = vector_from_json(require(j, "mean"));
    s.scale = vector_from_json(require(j, "scale"));
    if (s.mean.size() != s.scale.size()) throw ParseError("checkpoint: standardizer mean/scale length differ");
    return s;
}

Json bundle_to_json(const ModelBundle& b) {
    const auto& m = b.model;
    Json j;
    j["format"] = kFormatName;
    j["version"] = kFormatVersion;
    j["config"] = config_to_json(m.config);
    j["split"] = {{"train", b.split.train}, {"val", b.split.val}, {"test", b.split.test}, {"seed", b.split.seed}};
    j["label_column"] = b.label_column;
    j["feature_names"] = b.feature_names;
    j["class_names"] = b.class_names;
    j["standardizer"] = standardizer_to_json(b.standardizer);
    j["encoder"] = network_to_json(m.encoder);
    j["decoder"] = network_to_json(m.decoder);
    j["centroids"] = matrix_to_json(m.centroids);
    j["experts"] = ensemble_to_json(m.experts);
    j["best_epoch"] = m.best_epoch;
    j["best_val_auc"] = m.best_val_auc;
    return j;
}

ModelBundle bundle_from_json(const Json& j) {
    if (require(j, "format") != kFormatName) throw ParseError("not an expertnet checkpoint");
    const int version = require(j, "version").get<int>();
    if (version != kFormatVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    ModelBundle b;
    try {
        apply_config_json(require(j, "config"), b.model.config);
        const auto& s = require(j, "split");
        b.split.train = require(s, "train").get<double>();
        b.split.val = require(s, "val").get<double>();
        b.split.test = require(s, "test").get<double>();
        b.split.seed = require(s, "seed").get<std::uint64_t>();
        b.label_column = require(j, "label_column").get<std::string>();
        b.feature_names = require(j, "feature_names").get<std::vector<std::string>>();
        b.class_names = require(j, "class_names").get<std::vector<std::string>>();
        b.model.best_epoch = require(j, "best_epoch").get<int>();
        b.model.best_val_auc = require(j, "best_val_auc").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    b.standardizer = standardizer_from_json(require(j, "standardizer"));
    b.model.encoder = network_from_json(require(j, "encoder"));
    b.model.decoder = network_from_json(require(j, "decoder"));
    b.model.centroids = matrix_from_json(require(j, "centroids"));
    b.model.experts = ensemble_from_json(require(j, "experts"));
    b.model.validate();
    if (b.feature_names.size() != b.model.input_dim() ||
        static_cast<std::size_t>(b.standardizer.mean.size()) != b.model.input_dim())
        throw ParseError("checkpoint: feature names / standardizer do not match encoder input");
    if (b.class_names.size() != b.model.experts.class_count)
        throw ParseError("checkpoint: class names do not match expert outputs");
    return b;
}

std::string dump(const Json& j) { return j.dump(1, ' ') + "\n"; }

void save(const ModelBundle& bundle, const std::string& path) {
    data::write_text_file(path, dump(bundle_to_json(bundle)));
}

ModelBundle load(const std::string& path) {
    Json j;
    try {
        j = Json::parse(data::read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    return bundle_from_json(j);
}

}  // namespace expertnet::checkpoint
