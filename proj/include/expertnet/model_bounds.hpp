#pragma once

#include "expertnet/bounds.hpp"
#include "expertnet/trainer.hpp"

#include <string>
#include <vector>

namespace expertnet::bounds {

struct ModelBound {
    BoundParams params;
    GapBound gap;
    std::vector<std::string> warnings;
};

/// Uniform-partition bound with the norm caps replaced by the trained
/// weights' Frobenius norms. Shared layers are the encoder, expert layers the
/// experts; B_j is the largest norm of an input row whose argmax cluster is j
/// and N is the row count of `x` (already standardized).
ModelBound bound_from_model(const trainer::TrainedModel& model, const Matrix& x, double rho, double delta);

}  // namespace expertnet::bounds
