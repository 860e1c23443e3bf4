#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scorematch/dataset.hpp"
#include "scorematch/linalg.hpp"

namespace scorematch {

enum class Activation { identity, leaky_relu, sigmoid };

struct ActivationKind {
    Activation kind = Activation::identity;
    double slope = 0.0;  // leaky_relu only, in (0, 1)

    static ActivationKind identity() { return {Activation::identity, 0.0}; }
    static ActivationKind leaky_relu(double slope);
    static ActivationKind sigmoid() { return {Activation::sigmoid, 0.0}; }

    double apply(double z) const;
    double derivative(double z) const;
    std::string name() const;
};

double sigmoid_value(double z);

struct DenseLayer {
    Matrix weights;            // out x in
    std::vector<double> bias;  // out
    ActivationKind activation;

    std::size_t in_dim() const { return weights.cols; }
    std::size_t out_dim() const { return weights.rows; }
};

// Feed-forward network ending in a single sigmoid unit, used as a propensity
// model. Layer l computes z_l = W_l a_{l-1} + c_l with a_l = act_l(z_l).
struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t depth() const { return layers.size(); }
    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t parameter_count() const;
    void validate() const;
};

// Hidden layers use leaky ReLU, the final unit is a sigmoid. Weights start
// at uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)), biases at zero.
Mlp make_mlp(const std::vector<std::size_t>& widths, double leaky_slope, std::uint64_t seed);

// Fixed stack input -> 5 -> 100 -> 100 -> 1 with leaky ReLU (slope 0.01)
// hidden activations.
Mlp default_architecture(std::size_t input_dim, std::uint64_t seed = 0);

// Propensity estimate in (0, 1).
double forward(const Mlp& model, const double* x);
std::vector<double> forward_batch(const Mlp& model, const Matrix& x);

// z_l for layer_index in [1, depth], before the activation is applied.
std::vector<double> pre_activation(const Mlp& model, const double* x, std::size_t layer_index);
Matrix pre_activation_batch(const Mlp& model, const Matrix& x, std::size_t layer_index);

struct Gradients {
    std::vector<Matrix> d_weights;
    std::vector<std::vector<double>> d_bias;
};

// Gradient of mean binary cross-entropy over the batch plus an L2 penalty of
// weight_decay/2 * ||theta||^2 over weights and biases.
Gradients gradient(const Mlp& model, const Matrix& x, const std::vector<int>& t,
                   double weight_decay);

// Mean binary cross-entropy, computed in the numerically safe softplus form.
double bce_loss(const Mlp& model, const Matrix& x, const std::vector<int>& t);

struct TrainConfig {
    double learning_rate = 1e-2;
    double weight_decay = 0.01;
    std::size_t batch_size = 100;
    std::size_t max_epochs = 100;
    // When set, training stops after this many epochs without a validation
    // improvement and the parameters with the best validation loss win.
    std::optional<std::size_t> early_stopping_patience;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct TrainResult {
    Mlp model;
    std::vector<double> train_loss;  // full-training-set BCE after each epoch
    std::vector<double> val_loss;    // same for the validation set, if given
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;  // meaningful when a validation set is given
};

// Plain mini-batch SGD with a fixed learning rate. Shuffling is driven by
// cfg.rng_seed only, so identical inputs give bit-identical results. The
// validation set may be null when early stopping is off.
TrainResult train(const Mlp& model, const Matrix& x, const std::vector<int>& t,
                  const Matrix* val_x, const std::vector<int>* val_t, const TrainConfig& cfg);
TrainResult train(const Mlp& model, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& cfg);

// Exact round-trip serialization: parameters are stored as hex floats.
std::string model_to_json(const Mlp& model);
Mlp model_from_json(const std::string& text);
void save_model(const Mlp& model, const std::string& path);
Mlp load_model(const std::string& path);

}  // namespace scorematch
