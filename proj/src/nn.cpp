#include "expertnet/nn.hpp"

#include "expertnet/errors.hpp"

#include <cmath>
#include <sstream>

namespace expertnet::nn {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
    std::ostringstream os;
    os << r << "x" << c;
    return os.str();
}

void apply_activation(Activation a, Matrix& m) {
    switch (a) {
        case Activation::Identity:
            return;
        case Activation::ReLU:
            m = m.cwiseMax(0.0);
            return;
        case Activation::Softmax:
            m = softmax_rows(m);
            return;
    }
}

// Turns dL/d(activation) into dL/d(pre-activation) in place.
void activation_backward(Activation a, const Matrix& pre, const Matrix& post, Matrix& grad) {
    switch (a) {
        case Activation::Identity:
            return;
        case Activation::ReLU:
            grad = (pre.array() > 0.0).select(grad, 0.0);
            return;
        case Activation::Softmax: {
            // J^T g = p * (g - <g, p>) per row
            const Vector dot = (grad.array() * post.array()).rowwise().sum();
            grad = post.array() * (grad.colwise() - dot).array();
            return;
        }
    }
}

}  // namespace

std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::Identity:
            return "identity";
        case Activation::ReLU:
            return "relu";
        case Activation::Softmax:
            return "softmax";
    }
    return "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::ReLU;
    if (name == "softmax") return Activation::Softmax;
    throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

void MlpNetwork::validate() const {
    if (layer_dims.size() < 2) throw ShapeError("network needs at least input and output dims");
    const std::size_t layers = layer_dims.size() - 1;
    if (weights.size() != layers || biases.size() != layers)
        throw ShapeError("parameter count does not match layer_dims");
    for (std::size_t l = 0; l < layers; ++l) {
        const auto in = static_cast<Eigen::Index>(layer_dims[l]);
        const auto out = static_cast<Eigen::Index>(layer_dims[l + 1]);
        if (in <= 0 || out <= 0) throw ShapeError("layer dims must be positive");
        if (weights[l].rows() != out || weights[l].cols() != in)
            throw ShapeError("weight " + std::to_string(l) + " is " +
                             shape_str(weights[l].rows(), weights[l].cols()) + ", expected " +
                             shape_str(out, in));
        if (biases[l].size() != out) throw ShapeError("bias " + std::to_string(l) + " has wrong length");
        if (!weights[l].allFinite() || !biases[l].allFinite())
            throw NumericError("non-finite parameter in layer " + std::to_string(l));
    }
}

bool MlpNetwork::operator==(const MlpNetwork& other) const {
    if (layer_dims != other.layer_dims || hidden_activation != other.hidden_activation ||
        output_activation != other.output_activation || depth() != other.depth())
        return false;
    for (std::size_t l = 0; l < depth(); ++l) {
        if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
    }
    return true;
}

MlpNetwork make_zero_network(std::vector<std::size_t> layer_dims, Activation output_activation,
                             Activation hidden_activation) {
    if (layer_dims.size() < 2) throw ShapeError("network needs at least input and output dims");
    MlpNetwork net;
    net.layer_dims = std::move(layer_dims);
    net.hidden_activation = hidden_activation;
    net.output_activation = output_activation;
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
        if (net.layer_dims[l] == 0 || net.layer_dims[l + 1] == 0) throw ShapeError("layer dims must be positive");
        const auto in = static_cast<Eigen::Index>(net.layer_dims[l]);
        const auto out = static_cast<Eigen::Index>(net.layer_dims[l + 1]);
        net.weights.emplace_back(Matrix::Zero(out, in));
        net.biases.emplace_back(Vector::Zero(out));
    }
    return net;
}

MlpNetwork make_network(std::vector<std::size_t> layer_dims, Activation output_activation,
                        std::uint64_t seed, Activation hidden_activation) {
    MlpNetwork net = make_zero_network(std::move(layer_dims), output_activation, hidden_activation);
    Rng rng(seed);
    for (auto& w : net.weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        // Column-major fill order is fixed, so the draw sequence is reproducible.
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
    }
    return net;
}

GradientSet GradientSet::zeros_like(const MlpNetwork& net) {
    GradientSet g;
    g.weights.reserve(net.depth());
    g.biases.reserve(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) {
        g.weights.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.emplace_back(Vector::Zero(net.biases[l].size()));
    }
    return g;
}

bool GradientSet::congruent_with(const MlpNetwork& net) const {
    if (weights.size() != net.depth() || biases.size() != net.depth()) return false;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        if (weights[l].rows() != net.weights[l].rows() || weights[l].cols() != net.weights[l].cols())
            return false;
        if (biases[l].size() != net.biases[l].size()) return false;
    }
    return true;
}

bool GradientSet::all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
        if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
}

void GradientSet::scale(double factor) {
    for (auto& w : weights) w *= factor;
    for (auto& b : biases) b *= factor;
}

void GradientSet::add(const GradientSet& other, double factor) {
    if (other.weights.size() != weights.size()) throw ShapeError("gradient sets differ in depth");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += factor * other.weights[l];
        biases[l] += factor * other.biases[l];
    }
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out = logits.colwise() - logits.rowwise().maxCoeff();
    out = out.array().exp();
    const Vector sums = out.rowwise().sum();
    return out.array().colwise() / sums.array();
}

namespace {

void check_batch(const MlpNetwork& net, const Matrix& batch) {
    if (static_cast<std::size_t>(batch.cols()) != net.input_dim())
        throw ShapeError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                         std::to_string(net.input_dim()));
}

}  // namespace

ForwardResult forward(const MlpNetwork& net, const Matrix& batch) {
    check_batch(net, batch);
    ForwardResult res;
    auto& tape = res.tape;
    tape.activations.reserve(net.depth() + 1);
    tape.pre_activations.reserve(net.depth());
    tape.activations.push_back(batch);
    for (std::size_t l = 0; l < net.depth(); ++l) {
        Matrix pre = tape.activations.back() * net.weights[l].transpose();
        pre.rowwise() += net.biases[l].transpose();
        Matrix post = pre;
        apply_activation(l + 1 == net.depth() ? net.output_activation : net.hidden_activation, post);
        tape.pre_activations.push_back(std::move(pre));
        tape.activations.push_back(std::move(post));
    }
    res.output = tape.activations.back();
    return res;
}

Matrix infer(const MlpNetwork& net, const Matrix& batch) {
    check_batch(net, batch);
    Matrix a = batch;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        Matrix pre = a * net.weights[l].transpose();
        pre.rowwise() += net.biases[l].transpose();
        apply_activation(l + 1 == net.depth() ? net.output_activation : net.hidden_activation, pre);
        a = std::move(pre);
    }
    return a;
}

BackwardResult backward(const MlpNetwork& net, const ForwardTape& tape, const Matrix& output_grad,
                        GradientOf wrt) {
    const std::size_t depth = net.depth();
    if (tape.activations.size() != depth + 1 || tape.pre_activations.size() != depth)
        throw ShapeError("tape depth does not match network");
    const Eigen::Index n = tape.activations.front().rows();
    for (std::size_t l = 0; l <= depth; ++l) {
        if (tape.activations[l].rows() != n ||
            static_cast<std::size_t>(tape.activations[l].cols()) != net.layer_dims[l])
            throw ShapeError("tape layer " + std::to_string(l) + " does not match network");
    }
    if (output_grad.rows() != n || static_cast<std::size_t>(output_grad.cols()) != net.output_dim())
        throw ShapeError("output gradient is " + shape_str(output_grad.rows(), output_grad.cols()) +
                         ", expected " + shape_str(n, static_cast<Eigen::Index>(net.output_dim())));

    BackwardResult res;
    res.grads.weights.resize(depth);
    res.grads.biases.resize(depth);

    Matrix delta = output_grad;
    if (wrt == GradientOf::Output)
        activation_backward(net.output_activation, tape.pre_activations[depth - 1], tape.activations[depth], delta);

    for (std::size_t l = depth; l-- > 0;) {
        res.grads.weights[l].noalias() = delta.transpose() * tape.activations[l];
        res.grads.biases[l] = delta.colwise().sum().transpose();
        Matrix upstream = delta * net.weights[l];
        if (l > 0)
            activation_backward(net.hidden_activation, tape.pre_activations[l - 1], tape.activations[l], upstream);
        delta = std::move(upstream);
    }
    res.input_grad = std::move(delta);
    return res;
}

void sgd_step(MlpNetwork& net, const GradientSet& grads, double rate) {
    if (!grads.congruent_with(net)) throw ShapeError("gradient set is not congruent with network");
    if (!std::isfinite(rate) || rate < 0.0) throw InvalidArgument("learning rate must be finite and >= 0");
    if (!grads.all_finite()) throw NumericError("non-finite gradient in sgd_step");
    for (std::size_t l = 0; l < net.depth(); ++l) {
        net.weights[l] -= rate * grads.weights[l];
        net.biases[l] -= rate * grads.biases[l];
    }
}

FrobeniusSummary frobenius_products(const MlpNetwork& net) {
    FrobeniusSummary s;
    s.norms.reserve(net.depth());
    for (const auto& w : net.weights) {
        s.norms.push_back(w.norm());
        s.product *= s.norms.back();
    }
    return s;
}

}  // namespace expertnet::nn
