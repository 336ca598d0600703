#include "expertnet/model_bounds.hpp"

#include "expertnet/clustering.hpp"
#include "expertnet/errors.hpp"

namespace expertnet::bounds {

ModelBound bound_from_model(const trainer::TrainedModel& model, const Matrix& x, double rho, double delta) {
    if (x.rows() == 0) throw InvalidArgument("bound_from_model: no data rows");
    const auto k = model.k();
    ModelBound out;
    auto& p = out.params;
    p.rho = rho;
    p.delta = delta;
    p.sample_count = static_cast<double>(x.rows());
    p.class_count = static_cast<int>(model.experts.class_count);
    p.shared_depth = static_cast<int>(model.encoder.depth());
    p.expert_depth = static_cast<int>(model.experts.experts.front().depth());
    p.shared_norm_caps = nn::frobenius_products(model.encoder).norms;
    for (const auto& e : model.experts.experts) {
        if (static_cast<int>(e.depth()) != p.expert_depth)
            throw ShapeError("bound_from_model: experts differ in depth");
        p.expert_norm_caps.push_back(nn::frobenius_products(e).norms);
    }

    const auto assign = clustering::hard_assignments(trainer::soft_assignments(model, x));
    p.input_bounds.assign(k, 0.0);
    std::vector<bool> seen(k, false);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto j = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
        p.input_bounds[j] = std::max(p.input_bounds[j], x.row(i).norm());
        seen[j] = true;
    }
    for (std::size_t j = 0; j < k; ++j)
        if (!seen[j]) out.warnings.push_back("cluster " + std::to_string(j) + " is empty; its input bound is 0");

    out.gap = bound_uniform(p);
    return out;
}

}  // namespace expertnet::bounds
