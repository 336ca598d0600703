#pragma once

#include "expertnet/data.hpp"
#include "expertnet/experts.hpp"
#include "expertnet/nn.hpp"
#include "expertnet/trainer.hpp"

#include <json.hpp>

#include <string>

/// JSON serialization of networks, configs and whole trained models.
/// Layout is described in docs/checkpoint-format.md.
namespace expertnet::checkpoint {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kFormatName = "expertnet-checkpoint";

using Json = nlohmann::ordered_json;

Json network_to_json(const nn::MlpNetwork& net);
nn::MlpNetwork network_from_json(const Json& j);

Json ensemble_to_json(const experts::ExpertEnsemble& ensemble);
experts::ExpertEnsemble ensemble_from_json(const Json& j);

Json matrix_to_json(const Matrix& m);  // row-major nested arrays
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json config_to_json(const trainer::TrainConfig& config);
/// Missing keys keep the values already in `config`; unknown keys are errors.
void apply_config_json(const Json& j, trainer::TrainConfig& config);

Json standardizer_to_json(const data::Standardizer& s);
data::Standardizer standardizer_from_json(const Json& j);

/// Everything needed to score new raw data with a trained model.
struct ModelBundle {
    trainer::TrainedModel model;
    data::Standardizer standardizer;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    std::string label_column = "label";
    data::SplitSpec split;
};

Json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const Json& j);

/// Deterministic text: no timestamps, fixed key order.
std::string dump(const Json& j);

void save(const ModelBundle& bundle, const std::string& path);
ModelBundle load(const std::string& path);

}  // namespace expertnet::checkpoint
