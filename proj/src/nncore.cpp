#include "her/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "her/errors.hpp"

namespace her {

namespace {

using ConstWeightsT = Eigen::Map<const Mat>;  // col-major (in x out) view of row-major (out x in)
using WeightsT = Eigen::Map<Mat>;

void apply_activation(Activation a, Mat& z) {
    switch (a) {
        case Activation::relu: z = z.cwiseMax(0.0); break;
        case Activation::tanh: z = z.array().tanh().matrix(); break;
        case Activation::identity: break;
    }
}

// dz = da * act'(z), computed from the cached preactivation / activation.
Mat activation_backward(Activation a, const Mat& da, const Mat& z, const Mat& out) {
    switch (a) {
        case Activation::relu: return (z.array() > 0.0).select(da, 0.0);
        case Activation::tanh: return (da.array() * (1.0 - out.array().square())).matrix();
        case Activation::identity: return da;
    }
    return da;
}

void check_chain(std::span<const LayerSpec> layers) {
    if (layers.empty()) throw ConfigError("network needs at least one layer");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].input_width < 1 || layers[i].output_width < 1)
            throw ConfigError("layer " + std::to_string(i) + " has a non-positive width");
        if (i > 0 && layers[i - 1].output_width != layers[i].input_width)
            throw ConfigError("layer " + std::to_string(i) + " input width " +
                              std::to_string(layers[i].input_width) + " does not match previous output width " +
                              std::to_string(layers[i - 1].output_width));
    }
}

}  // namespace

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::vector<LayerSpec> make_layers(int input_width, std::span<const int> hidden, int output_width,
                                   Activation hidden_activation, Activation output_activation) {
    std::vector<LayerSpec> layers;
    int width = input_width;
    for (int h : hidden) {
        layers.push_back({width, h, hidden_activation});
        width = h;
    }
    layers.push_back({width, output_width, output_activation});
    return layers;
}

Eigen::Index param_count(std::span<const LayerSpec> layers) {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += Eigen::Index(l.input_width) * l.output_width + l.output_width;
    return n;
}

Network::Network(std::vector<LayerSpec> layers, std::optional<Vec> output_scale)
    : layers_(std::move(layers)), output_scale_(std::move(output_scale)) {
    check_chain(layers_);
    if (output_scale_) {
        if (layers_.back().activation != Activation::tanh)
            throw ConfigError("output_scale requires a tanh output layer");
        if (output_scale_->size() != layers_.back().output_width)
            throw ConfigError("output_scale length does not match output width");
    }
    Eigen::Index offset = 0;
    for (const auto& l : layers_) {
        offsets_.push_back(offset);
        offset += Eigen::Index(l.input_width) * l.output_width + l.output_width;
    }
    params_ = Vec::Zero(offset);
}

bool Network::same_architecture(const Network& other) const {
    if (layers_ != other.layers_) return false;
    if (output_scale_.has_value() != other.output_scale_.has_value()) return false;
    return !output_scale_ || *output_scale_ == *other.output_scale_;
}

AdamState AdamState::zeros(Eigen::Index n, double learning_rate) {
    AdamState s;
    s.m = Vec::Zero(n);
    s.v = Vec::Zero(n);
    s.learning_rate = learning_rate;
    return s;
}

Network mlp_init(std::vector<LayerSpec> layers, std::uint64_t seed, std::optional<Vec> output_scale) {
    Network net(std::move(layers), std::move(output_scale));
    Rng rng(seed);
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        const auto& spec = net.layers()[l];
        const double bound = 1.0 / std::sqrt(double(spec.input_width));
        std::uniform_real_distribution<double> dist(-bound, bound);
        const Eigen::Index w0 = net.weight_offset(l);
        const Eigen::Index nw = Eigen::Index(spec.input_width) * spec.output_width;
        for (Eigen::Index i = 0; i < nw; ++i) net.params()[w0 + i] = dist(rng);
    }
    return net;
}

ForwardResult forward(const Network& net, const Mat& batch) {
    if (batch.cols() != net.input_width())
        throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                         std::to_string(net.input_width()));
    ForwardResult r;
    const auto& layers = net.layers();
    r.cache.preactivations.reserve(layers.size());
    r.cache.activations.reserve(layers.size() + 1);
    r.cache.activations.push_back(batch);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& spec = layers[l];
        ConstWeightsT wt(net.params().data() + net.weight_offset(l), spec.input_width, spec.output_width);
        Eigen::Map<const Vec> b(net.params().data() + net.bias_offset(l), spec.output_width);
        Mat z = r.cache.activations.back() * wt;
        z.rowwise() += b.transpose();
        Mat a = z;
        apply_activation(spec.activation, a);
        r.cache.preactivations.push_back(std::move(z));
        r.cache.activations.push_back(std::move(a));
    }
    r.outputs = r.cache.activations.back();
    if (net.output_scale()) r.outputs = r.outputs * net.output_scale()->asDiagonal();
    return r;
}

Mat predict(const Network& net, const Mat& batch) {
    if (batch.cols() != net.input_width())
        throw ShapeError("predict: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                         std::to_string(net.input_width()));
    Mat a = batch;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        const auto& spec = net.layers()[l];
        ConstWeightsT wt(net.params().data() + net.weight_offset(l), spec.input_width, spec.output_width);
        Eigen::Map<const Vec> b(net.params().data() + net.bias_offset(l), spec.output_width);
        Mat z = a * wt;
        z.rowwise() += b.transpose();
        apply_activation(spec.activation, z);
        a = std::move(z);
    }
    if (net.output_scale()) a = a * net.output_scale()->asDiagonal();
    return a;
}

Gradients backward(const Network& net, const ForwardCache& cache, const Mat& output_grad,
                   const Mat* final_preactivation_grad) {
    const auto& layers = net.layers();
    if (cache.preactivations.size() != layers.size() || cache.activations.size() != layers.size() + 1)
        throw ShapeError("backward: cache does not match the network's layer count");
    const Eigen::Index batch = cache.batch_size();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& z = cache.preactivations[l];
        if (z.rows() != batch || z.cols() != layers[l].output_width ||
            cache.activations[l].cols() != layers[l].input_width)
            throw ShapeError("backward: cache shapes do not match layer " + std::to_string(l));
    }
    if (output_grad.rows() != batch || output_grad.cols() != net.output_width())
        throw ShapeError("backward: output gradient shape does not match the forward outputs");
    if (final_preactivation_grad &&
        (final_preactivation_grad->rows() != batch || final_preactivation_grad->cols() != net.output_width()))
        throw ShapeError("backward: final preactivation gradient has the wrong shape");

    Gradients g;
    g.params = Vec::Zero(net.param_count());
    Mat da = net.output_scale() ? Mat(output_grad * net.output_scale()->asDiagonal()) : output_grad;
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& spec = layers[li];
        Mat dz = activation_backward(spec.activation, da, cache.preactivations[li], cache.activations[li + 1]);
        if (li + 1 == layers.size() && final_preactivation_grad) dz += *final_preactivation_grad;
        WeightsT dwt(g.params.data() + net.weight_offset(li), spec.input_width, spec.output_width);
        dwt.noalias() = cache.activations[li].transpose() * dz;
        g.params.segment(net.bias_offset(li), spec.output_width) = dz.colwise().sum().transpose();
        ConstWeightsT wt(net.params().data() + net.weight_offset(li), spec.input_width, spec.output_width);
        da = dz * wt.transpose();
    }
    g.inputs = std::move(da);
    return g;
}

void adam_step(Network& net, const Vec& grad, AdamState& state) {
    if (grad.size() != net.param_count() || state.m.size() != net.param_count() ||
        state.v.size() != net.param_count())
        throw ShapeError("adam_step: gradient/moment length does not match parameter count");
    state.step += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    const double t = double(state.step);
    const double m_corr = 1.0 - std::pow(state.beta1, t);
    const double v_corr = 1.0 - std::pow(state.beta2, t);
    net.params().array() -=
        state.learning_rate * (state.m.array() / m_corr) / ((state.v.array() / v_corr).sqrt() + state.epsilon);
}

void polyak_update(Network& target, const Network& main, double decay) {
    if (!target.same_architecture(main)) throw ConfigError("polyak_update: network architectures differ");
    if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("polyak_update: decay must lie in [0, 1]");
    if (decay == 0.0) {
        target.params() = main.params();
    } else if (decay < 1.0) {
        target.params() = decay * target.params() + (1.0 - decay) * main.params();
    }
}

Vec mean_of(std::span<const Vec* const> values) {
    if (values.empty()) throw UsageError("mean of an empty list");
    const Eigen::Index n = values.front()->size();
    for (const Vec* v : values)
        if (v->size() != n) throw ShapeError("mean: vectors have different lengths");
    if (values.size() == 1) return *values.front();

    // Per coordinate: sort, then min + sum(x - min) / W. Sorting removes the
    // dependence on worker order; anchoring at the minimum makes W identical
    // values average back to themselves exactly.
    Vec out(n);
    std::vector<double> column(values.size());
    const double w = double(values.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < values.size(); ++k) column[k] = (*values[k])[i];
        std::sort(column.begin(), column.end());
        double acc = 0.0;
        for (double x : column) acc += x - column.front();
        out[i] = column.front() + acc / w;
    }
    return out;
}

Vec average_params(std::span<const Network* const> nets) {
    if (nets.empty()) throw UsageError("average_params: empty network list");
    std::vector<const Vec*> values;
    for (const Network* n : nets) {
        if (!n->same_architecture(*nets.front()))
            throw ConfigError("average_params: network architectures differ");
        values.push_back(&n->params());
    }
    return mean_of(values);
}

Vec average_params(std::span<const Network> nets) {
    std::vector<const Network*> ptrs;
    for (const auto& n : nets) ptrs.push_back(&n);
    return average_params(std::span<const Network* const>(ptrs));
}

PenaltyResult preactivation_penalty(const Network& net, const ForwardCache& cache, double coefficient) {
    if (net.layers().back().activation != Activation::tanh)
        throw UsageError("preactivation_penalty: network output is not tanh");
    if (cache.preactivations.size() != net.layers().size())
        throw ShapeError("preactivation_penalty: cache does not match network");
    const Mat& z = cache.preactivations.back();
    const double count = double(z.size());
    PenaltyResult r;
    r.loss = coefficient * z.squaredNorm() / count;
    r.final_preactivation_grad = (2.0 * coefficient / count) * z;
    return r;
}

}  // namespace her
