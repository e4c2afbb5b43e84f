#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdann/matrix.hpp"

namespace mdann {

// Dense feed-forward engine with manual backpropagation. Networks are plain
// values: one training loop owns and mutates a network, concurrent reads of a
// frozen network are safe, and there is no internal locking.

enum class Activation { Rectifier, Identity, SoftmaxHead };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
    Matrix weights;             // out_dim x in_dim
    std::vector<double> bias;   // out_dim
    Activation activation = Activation::Identity;

    std::size_t in_dim() const { return weights.cols(); }
    std::size_t out_dim() const { return weights.rows(); }
};

class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<DenseLayer> layers);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& mutable_layers() { bump_version(); return layers_; }

    std::size_t input_dim() const { return layers_.front().in_dim(); }
    std::size_t output_dim() const { return layers_.back().out_dim(); }
    std::size_t layer_count() const { return layers_.size(); }
    std::size_t param_count() const;

    /// Monotone counter bumped on every parameter mutation; lets backward
    /// detect a cache that was produced against older parameters.
    std::uint64_t version() const { return version_; }
    void bump_version() { ++version_; }

    /// Hash of the shape chain and activations, ignoring parameter values.
    std::uint64_t shape_fingerprint() const;

    void validate() const;

private:
    std::vector<DenseLayer> layers_;
    std::uint64_t version_ = 0;
};

/// Per-layer pre-activations and activations for one batch.
struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre_acts;
    std::vector<Matrix> acts;
    std::uint64_t mlp_version = 0;
    std::uint64_t mlp_fingerprint = 0;

    std::size_t batch_size() const { return input.rows(); }
};

/// Parameter gradients mirroring an Mlp's shape, plus the input gradient.
struct GradTape {
    std::vector<Matrix> weight_grads;
    std::vector<std::vector<double>> bias_grads;
    Matrix input_grad;

    GradTape& add(const GradTape& other);
    GradTape& scale(double s);
    bool all_finite() const;
    bool shape_mirrors(const Mlp& mlp) const;
};

struct OptimConfig {
    enum class Method { Sgd, SgdMomentum };
    Method method = Method::SgdMomentum;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;

    void validate() const;
};

/// Momentum buffers; lazily sized to the network on first step.
struct OptimState {
    std::vector<Matrix> w_vel;
    std::vector<std::vector<double>> b_vel;
    bool initialized = false;
};

/// Build a network with rectifier hidden layers and the given output head.
/// Weights are uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero,
/// drawn deterministically from the seed.
Mlp init_mlp(int input_dim, const std::vector<int>& hidden_dims, int output_dim,
             std::uint64_t seed, Activation output_activation = Activation::SoftmaxHead);

/// Forward pass; output rows of a softmax head sum to 1 within 1e-9.
Matrix forward(const Mlp& mlp, const Matrix& x);
Matrix forward(const Mlp& mlp, const Matrix& x, ForwardCache& cache);

/// Backward pass from dLoss/dOutput; cache must come from the matching
/// forward call against the network's current parameters.
GradTape backward(const Mlp& mlp, const ForwardCache& cache, const Matrix& upstream_grad);

/// Gradient reversal: identity forward, -lambda * upstream backward.
Matrix grad_reverse(const Matrix& upstream_grad, double lambda);

// Binary cross-entropy over positive-class probabilities,
//   sum_i [ y_i ln(1/p_i) + (1-y_i) ln(1/(1-p_i)) ].
// Probabilities are clamped to [1e-12, 1-1e-12] before the logs.
double bce_loss(std::span<const double> p_pos, std::span<const int> y);
double bce_loss_mean(std::span<const double> p_pos, std::span<const int> y);
/// dLoss/dp for the sum reduction, evaluated at the clamped probabilities.
std::vector<double> bce_grad(std::span<const double> p_pos, std::span<const int> y);

// Multi-class cross-entropy for the domain classifier,
//   sum_i sum_j d_ij ln(1/probs_ij), with d rows one-hot.
double domain_ce_loss(const Matrix& probs, const Matrix& d);
double domain_ce_loss_mean(const Matrix& probs, const Matrix& d);
Matrix domain_ce_grad(const Matrix& probs, const Matrix& d);

/// Joint objective l_y - lambda * l_d.
double total_objective(double l_y, double l_d, double lambda);

/// One deterministic optimizer step in the negative-gradient direction.
void optim_step(Mlp& mlp, const GradTape& tape, const OptimConfig& cfg, OptimState& state);

// Checkpoint encoding: parameters as decimal strings, bit-exact round trip.
nlohmann::json mlp_to_json(const Mlp& mlp);
Mlp mlp_from_json(const nlohmann::json& j);

nlohmann::json optim_config_to_json(const OptimConfig& cfg);
OptimConfig optim_config_from_json(const nlohmann::json& j);

inline constexpr double kProbClamp = 1e-12;

}  // namespace mdann
