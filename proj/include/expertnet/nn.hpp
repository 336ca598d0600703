#pragma once

#include "expertnet/types.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

/// Dense feedforward networks with an explicit forward tape and a hand-written
/// backward pass. These are the encoder, decoder and expert networks.
namespace expertnet::nn {

enum class Activation { Identity, ReLU, Softmax };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

/// A stack of affine layers. Layer l maps layer_dims[l] -> layer_dims[l+1] with
/// weights[l] of shape (out x in). Hidden layers use `hidden_activation`, the
/// last layer `output_activation`.
struct MlpNetwork {
    std::vector<std::size_t> layer_dims;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Activation hidden_activation = Activation::ReLU;
    Activation output_activation = Activation::Identity;

    std::size_t depth() const noexcept { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }

    // Throws ShapeError / NumericError when an invariant is broken.
    void validate() const;

    bool operator==(const MlpNetwork& other) const;
};

/// Glorot-uniform weights, zero biases. Deterministic in `seed`.
MlpNetwork make_network(std::vector<std::size_t> layer_dims, Activation output_activation,
                        std::uint64_t seed, Activation hidden_activation = Activation::ReLU);

/// All-zero parameters; mostly useful in tests.
MlpNetwork make_zero_network(std::vector<std::size_t> layer_dims, Activation output_activation,
                             Activation hidden_activation = Activation::ReLU);

/// Parameter-shaped container for dL/dW and dL/db.
struct GradientSet {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static GradientSet zeros_like(const MlpNetwork& net);

    bool congruent_with(const MlpNetwork& net) const;
    bool all_finite() const;
    void scale(double factor);
    void add(const GradientSet& other, double factor = 1.0);
};

/// Everything backward needs: the layer inputs and the pre-activations.
/// activations[0] is the batch, activations[depth] the network output.
struct ForwardTape {
    std::vector<Matrix> activations;
    std::vector<Matrix> pre_activations;
};

struct ForwardResult {
    Matrix output;
    ForwardTape tape;
};

ForwardResult forward(const MlpNetwork& net, const Matrix& batch);

/// Forward pass without recording a tape.
Matrix infer(const MlpNetwork& net, const Matrix& batch);

/// Which quantity the incoming gradient is taken with respect to.
/// `PreActivation` skips the output activation's Jacobian: it is the natural
/// entry point for softmax + cross-entropy where dL/dlogits = p - onehot.
enum class GradientOf { Output, PreActivation };

struct BackwardResult {
    Matrix input_grad;
    GradientSet grads;
};

BackwardResult backward(const MlpNetwork& net, const ForwardTape& tape, const Matrix& output_grad,
                        GradientOf wrt = GradientOf::Output);

/// p <- p - rate * g for every parameter. Callers fold any 1/m batch averaging
/// into `grads`.
void sgd_step(MlpNetwork& net, const GradientSet& grads, double rate);

struct FrobeniusSummary {
    std::vector<double> norms;  // one per layer
    double product = 1.0;
};

FrobeniusSummary frobenius_products(const MlpNetwork& net);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

}  // namespace expertnet::nn
