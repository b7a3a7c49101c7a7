#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace her {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

enum class Activation { relu, tanh, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct LayerSpec {
    int input_width = 1;
    int output_width = 1;
    Activation activation = Activation::identity;

    bool operator==(const LayerSpec&) const = default;
};

/// Builds a chain of fully connected layers: hidden layers use `hidden_activation`,
/// the last layer uses `output_activation`.
std::vector<LayerSpec> make_layers(int input_width, std::span<const int> hidden, int output_width,
                                   Activation hidden_activation, Activation output_activation);

/// Multi-layer perceptron with a flat parameter vector.
///
/// Canonical layout, layer by layer: the weight matrix (output_width x input_width,
/// row-major) followed by the bias vector (output_width). Serialization, averaging
/// and gradient vectors all use this layout.
///
/// When `output_scale` is present the last activation must be tanh and each output
/// coordinate j is `output_scale[j] * tanh(z_j)`.
class Network {
public:
    Network() = default;
    explicit Network(std::vector<LayerSpec> layers, std::optional<Vec> output_scale = std::nullopt);

    const std::vector<LayerSpec>& layers() const { return layers_; }
    const std::optional<Vec>& output_scale() const { return output_scale_; }
    const Vec& params() const { return params_; }
    Vec& params() { return params_; }

    int input_width() const { return layers_.front().input_width; }
    int output_width() const { return layers_.back().output_width; }
    Eigen::Index param_count() const { return params_.size(); }

    Eigen::Index weight_offset(std::size_t layer) const { return offsets_[layer]; }
    Eigen::Index bias_offset(std::size_t layer) const {
        return offsets_[layer] + Eigen::Index(layers_[layer].input_width) * layers_[layer].output_width;
    }

    /// Same layer chain and output scaling; parameters may differ.
    bool same_architecture(const Network& other) const;

private:
    std::vector<LayerSpec> layers_;
    std::vector<Eigen::Index> offsets_;
    std::optional<Vec> output_scale_;
    Vec params_;
};

/// Parameter count implied by a layer chain: sum of in*out + out.
Eigen::Index param_count(std::span<const LayerSpec> layers);

struct AdamState {
    Vec m;
    Vec v;
    std::int64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState zeros(Eigen::Index n, double learning_rate = 1e-3);
};

/// Per-layer values of one forward pass. activations[0] is the input batch,
/// activations[l + 1] = act(preactivations[l]); output scaling is not included.
struct ForwardCache {
    std::vector<Mat> preactivations;
    std::vector<Mat> activations;

    Eigen::Index batch_size() const { return activations.empty() ? 0 : activations.front().rows(); }
};

struct ForwardResult {
    Mat outputs;
    ForwardCache cache;
};

struct Gradients {
    Vec params;  // canonical layout
    Mat inputs;  // d loss / d input batch
};

struct PenaltyResult {
    double loss = 0.0;
    Mat final_preactivation_grad;
};

/// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases.
Network mlp_init(std::vector<LayerSpec> layers, std::uint64_t seed,
                 std::optional<Vec> output_scale = std::nullopt);

/// Rows of `batch` are samples.
ForwardResult forward(const Network& net, const Mat& batch);

/// Forward pass without keeping the cache.
Mat predict(const Network& net, const Mat& batch);

/// Backpropagates `output_grad` (d loss / d outputs, same shape as outputs).
/// `final_preactivation_grad`, when given, is added directly to d loss / d z of
/// the last layer (used by the preactivation penalty).
Gradients backward(const Network& net, const ForwardCache& cache, const Mat& output_grad,
                   const Mat* final_preactivation_grad = nullptr);

void adam_step(Network& net, const Vec& grad, AdamState& state);

/// target <- decay * target + (1 - decay) * main
void polyak_update(Network& target, const Network& main, double decay);

/// Elementwise mean that does not depend on the order of `values` and returns
/// the common value bit-exactly when all inputs agree.
Vec mean_of(std::span<const Vec* const> values);

Vec average_params(std::span<const Network* const> nets);
Vec average_params(std::span<const Network> nets);

/// coefficient * mean over batch and outputs of z_final^2, with its gradient w.r.t. z_final.
PenaltyResult preactivation_penalty(const Network& net, const ForwardCache& cache, double coefficient);

}  // namespace her
