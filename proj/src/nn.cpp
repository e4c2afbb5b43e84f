#include "mdann/nn.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <nlohmann/json.hpp>

#include "mdann/errors.hpp"
#include "mdann/rng.hpp"
#include "mdann/util.hpp"

namespace mdann {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Rectifier: return "rectifier";
        case Activation::Identity: return "identity";
        case Activation::SoftmaxHead: return "softmax-head";
    }
    throw ConfigError("unknown activation enum value");
}

Activation activation_from_name(const std::string& name) {
    if (name == "rectifier") return Activation::Rectifier;
    if (name == "identity") return Activation::Identity;
    if (name == "softmax-head") return Activation::SoftmaxHead;
    throw ConfigError("unknown activation: " + name);
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    validate();
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.rows() * l.weights.cols() + l.bias.size();
    return n;
}

std::uint64_t Mlp::shape_fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& l : layers_) {
        std::uint64_t dims[3] = {l.in_dim(), l.out_dim(),
                                 static_cast<std::uint64_t>(l.activation)};
        h = fnv1a64({reinterpret_cast<const char*>(dims), sizeof(dims)}, h);
    }
    return h;
}

void Mlp::validate() const {
    if (layers_.empty()) throw ConfigError("network must have at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.in_dim() == 0 || l.out_dim() == 0) {
            throw ConfigError("layer " + std::to_string(i) + " has a zero dimension");
        }
        if (l.bias.size() != l.out_dim()) {
            throw ShapeError("layer " + std::to_string(i) + " bias size does not match out_dim");
        }
        if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
            throw ShapeError("layer dimensions do not chain at layer " + std::to_string(i));
        }
        if (!l.weights.all_finite()) {
            throw NumericInputError("layer " + std::to_string(i) + " weights are not finite");
        }
        for (double b : l.bias) {
            if (!std::isfinite(b)) {
                throw NumericInputError("layer " + std::to_string(i) + " bias is not finite");
            }
        }
    }
}

Mlp init_mlp(int input_dim, const std::vector<int>& hidden_dims, int output_dim,
             std::uint64_t seed, Activation output_activation) {
    if (input_dim <= 0 || output_dim <= 0) {
        throw ConfigError("init_mlp: dimensions must be positive");
    }
    for (int h : hidden_dims) {
        if (h <= 0) throw ConfigError("init_mlp: dimensions must be positive");
    }
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    int in = input_dim;
    auto push_layer = [&](int out, Activation act) {
        DenseLayer l;
        l.weights = Matrix(static_cast<std::size_t>(out), static_cast<std::size_t>(in));
        const double bound = std::sqrt(6.0 / (in + out));
        for (double& w : l.weights.flat()) w = rng.uniform(-bound, bound);
        l.bias.assign(static_cast<std::size_t>(out), 0.0);
        l.activation = act;
        layers.push_back(std::move(l));
        in = out;
    };
    for (int h : hidden_dims) push_layer(h, Activation::Rectifier);
    push_layer(output_dim, output_activation);
    return Mlp(std::move(layers));
}

namespace {

void softmax_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) {
            v /= sum;
            // Keep probabilities strictly positive even under exp underflow.
            if (v < 5e-324) v = 5e-324;
        }
    }
}

void apply_activation(Matrix& m, Activation act) {
    switch (act) {
        case Activation::Rectifier:
            for (double& v : m.flat()) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::Identity:
            break;
        case Activation::SoftmaxHead:
            softmax_rows(m);
            break;
    }
}

Matrix forward_impl(const Mlp& mlp, const Matrix& x, ForwardCache* cache) {
    if (x.cols() != mlp.input_dim()) {
        throw ShapeError("forward: input has " + std::to_string(x.cols()) +
                         " columns, network expects " + std::to_string(mlp.input_dim()));
    }
    if (!x.all_finite()) throw NumericInputError("forward: input contains non-finite values");

    if (cache) {
        cache->input = x;
        cache->pre_acts.clear();
        cache->acts.clear();
        cache->mlp_version = mlp.version();
        cache->mlp_fingerprint = mlp.shape_fingerprint();
    }

    Matrix cur = x;
    for (const auto& layer : mlp.layers()) {
        Matrix z = mul_abt(cur, layer.weights);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            auto row = z.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
        }
        if (cache) cache->pre_acts.push_back(z);
        apply_activation(z, layer.activation);
        if (cache) cache->acts.push_back(z);
        cur = std::move(z);
    }
    return cur;
}

}  // namespace

Matrix forward(const Mlp& mlp, const Matrix& x) { return forward_impl(mlp, x, nullptr); }

Matrix forward(const Mlp& mlp, const Matrix& x, ForwardCache& cache) {
    return forward_impl(mlp, x, &cache);
}

GradTape backward(const Mlp& mlp, const ForwardCache& cache, const Matrix& upstream_grad) {
    if (cache.mlp_fingerprint != mlp.shape_fingerprint() ||
        cache.mlp_version != mlp.version() ||
        cache.acts.size() != mlp.layer_count()) {
        throw CacheError("backward: cache does not match the network's current state");
    }
    const std::size_t n = cache.batch_size();
    if (upstream_grad.rows() != n || upstream_grad.cols() != mlp.output_dim()) {
        throw ShapeError("backward: upstream gradient shape mismatch");
    }

    GradTape tape;
    tape.weight_grads.resize(mlp.layer_count());
    tape.bias_grads.resize(mlp.layer_count());

    Matrix grad_act = upstream_grad;
    for (std::size_t li = mlp.layer_count(); li-- > 0;) {
        const DenseLayer& layer = mlp.layers()[li];
        const Matrix& pre = cache.pre_acts[li];
        const Matrix& act = cache.acts[li];

        // dLoss/dZ from dLoss/dA.
        Matrix grad_z = std::move(grad_act);
        switch (layer.activation) {
            case Activation::Rectifier:
                for (std::size_t i = 0; i < grad_z.rows(); ++i) {
                    auto g = grad_z.row(i);
                    auto z = pre.row(i);
                    for (std::size_t j = 0; j < g.size(); ++j) {
                        if (!(z[j] > 0.0)) g[j] = 0.0;
                    }
                }
                break;
            case Activation::Identity:
                break;
            case Activation::SoftmaxHead:
                for (std::size_t i = 0; i < grad_z.rows(); ++i) {
                    auto g = grad_z.row(i);
                    auto p = act.row(i);
                    double dot = 0.0;
                    for (std::size_t j = 0; j < g.size(); ++j) dot += g[j] * p[j];
                    for (std::size_t j = 0; j < g.size(); ++j) g[j] = p[j] * (g[j] - dot);
                }
                break;
        }

        const Matrix& layer_input = li == 0 ? cache.input : cache.acts[li - 1];
        tape.weight_grads[li] = mul_atb(grad_z, layer_input);
        auto& db = tape.bias_grads[li];
        db.assign(layer.out_dim(), 0.0);
        for (std::size_t i = 0; i < grad_z.rows(); ++i) {
            auto g = grad_z.row(i);
            for (std::size_t j = 0; j < g.size(); ++j) db[j] += g[j];
        }
        grad_act = mul_ab(grad_z, layer.weights);
    }
    tape.input_grad = std::move(grad_act);
    return tape;
}

Matrix grad_reverse(const Matrix& upstream_grad, double lambda) {
    if (lambda < 0.0) throw ConfigError("grad_reverse: lambda must be nonnegative");
    Matrix out = upstream_grad;
    const double s = -lambda;
    for (double& v : out.flat()) v = s * v;
    return out;
}

GradTape& GradTape::add(const GradTape& other) {
    if (weight_grads.size() != other.weight_grads.size() ||
        !input_grad.same_shape(other.input_grad)) {
        throw ShapeError("GradTape::add: tapes have different shapes");
    }
    for (std::size_t l = 0; l < weight_grads.size(); ++l) {
        if (!weight_grads[l].same_shape(other.weight_grads[l]) ||
            bias_grads[l].size() != other.bias_grads[l].size()) {
            throw ShapeError("GradTape::add: tapes have different shapes");
        }
        auto dst = weight_grads[l].flat();
        auto src = other.weight_grads[l].flat();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        for (std::size_t i = 0; i < bias_grads[l].size(); ++i) {
            bias_grads[l][i] += other.bias_grads[l][i];
        }
    }
    auto dst = input_grad.flat();
    auto src = other.input_grad.flat();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    return *this;
}

GradTape& GradTape::scale(double s) {
    for (auto& w : weight_grads) {
        for (double& v : w.flat()) v *= s;
    }
    for (auto& b : bias_grads) {
        for (double& v : b) v *= s;
    }
    for (double& v : input_grad.flat()) v *= s;
    return *this;
}

bool GradTape::all_finite() const {
    for (const auto& w : weight_grads) {
        if (!w.all_finite()) return false;
    }
    for (const auto& b : bias_grads) {
        for (double v : b) {
            if (!std::isfinite(v)) return false;
        }
    }
    return input_grad.all_finite();
}

bool GradTape::shape_mirrors(const Mlp& mlp) const {
    if (weight_grads.size() != mlp.layer_count() || bias_grads.size() != mlp.layer_count()) {
        return false;
    }
    for (std::size_t l = 0; l < weight_grads.size(); ++l) {
        if (!weight_grads[l].same_shape(mlp.layers()[l].weights)) return false;
        if (bias_grads[l].size() != mlp.layers()[l].bias.size()) return false;
    }
    return true;
}

namespace {

inline double clamp_prob(double p) {
    return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

void check_bce_inputs(std::span<const double> p_pos, std::span<const int> y) {
    if (p_pos.size() != y.size()) throw ShapeError("bce_loss: size mismatch");
    for (double p : p_pos) {
        if (!std::isfinite(p)) throw NumericInputError("bce_loss: non-finite probability");
    }
    for (int v : y) {
        if (v != 0 && v != 1) throw LabelError("bce_loss: labels must be 0 or 1");
    }
}

}  // namespace

double bce_loss(std::span<const double> p_pos, std::span<const int> y) {
    check_bce_inputs(p_pos, y);
    double loss = 0.0;
    for (std::size_t i = 0; i < p_pos.size(); ++i) {
        const double p = clamp_prob(p_pos[i]);
        loss += y[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return loss;
}

double bce_loss_mean(std::span<const double> p_pos, std::span<const int> y) {
    if (p_pos.empty()) throw ShapeError("bce_loss_mean: empty input");
    return bce_loss(p_pos, y) / static_cast<double>(p_pos.size());
}

std::vector<double> bce_grad(std::span<const double> p_pos, std::span<const int> y) {
    check_bce_inputs(p_pos, y);
    std::vector<double> g(p_pos.size());
    for (std::size_t i = 0; i < p_pos.size(); ++i) {
        const double p = clamp_prob(p_pos[i]);
        g[i] = y[i] == 1 ? -1.0 / p : 1.0 / (1.0 - p);
    }
    return g;
}

namespace {

void check_domain_inputs(const Matrix& probs, const Matrix& d) {
    if (!probs.same_shape(d)) throw ShapeError("domain_ce_loss: probs and d shapes differ");
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double sum = 0.0;
        for (double v : probs.row(i)) {
            if (!std::isfinite(v)) throw NumericInputError("domain_ce_loss: non-finite probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw NumericInputError("domain_ce_loss: probs row " + std::to_string(i) +
                                    " does not sum to 1");
        }
        int ones = 0;
        for (double v : d.row(i)) {
            if (v == 1.0) {
                ++ones;
            } else if (v != 0.0) {
                throw LabelError("domain_ce_loss: d row " + std::to_string(i) + " is not one-hot");
            }
        }
        if (ones != 1) {
            throw LabelError("domain_ce_loss: d row " + std::to_string(i) + " is not one-hot");
        }
    }
}

}  // namespace

double domain_ce_loss(const Matrix& probs, const Matrix& d) {
    check_domain_inputs(probs, d);
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        auto pd = d.row(i);
        auto pp = probs.row(i);
        for (std::size_t j = 0; j < pd.size(); ++j) {
            if (pd[j] == 1.0) loss += -std::log(clamp_prob(pp[j]));
        }
    }
    return loss;
}

double domain_ce_loss_mean(const Matrix& probs, const Matrix& d) {
    if (probs.rows() == 0) throw ShapeError("domain_ce_loss_mean: empty input");
    return domain_ce_loss(probs, d) / static_cast<double>(probs.rows());
}

Matrix domain_ce_grad(const Matrix& probs, const Matrix& d) {
    check_domain_inputs(probs, d);
    Matrix g(probs.rows(), probs.cols());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        auto pd = d.row(i);
        auto pp = probs.row(i);
        auto gr = g.row(i);
        for (std::size_t j = 0; j < pd.size(); ++j) {
            if (pd[j] == 1.0) gr[j] = -1.0 / clamp_prob(pp[j]);
        }
    }
    return g;
}

double total_objective(double l_y, double l_d, double lambda) {
    if (lambda < 0.0) throw ConfigError("total_objective: lambda must be nonnegative");
    return l_y - lambda * l_d;
}

void OptimConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
}

void optim_step(Mlp& mlp, const GradTape& tape, const OptimConfig& cfg, OptimState& state) {
    cfg.validate();
    if (!tape.shape_mirrors(mlp)) throw ShapeError("optim_step: tape does not mirror network");

    if (!state.initialized) {
        state.w_vel.clear();
        state.b_vel.clear();
        for (const auto& l : mlp.layers()) {
            state.w_vel.emplace_back(l.weights.rows(), l.weights.cols());
            state.b_vel.emplace_back(l.bias.size(), 0.0);
        }
        state.initialized = true;
    }

    const bool use_momentum = cfg.method == OptimConfig::Method::SgdMomentum;
    auto& layers = mlp.mutable_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto w = layers[l].weights.flat();
        auto g = tape.weight_grads[l].flat();
        auto v = state.w_vel[l].flat();
        for (std::size_t i = 0; i < w.size(); ++i) {
            // Weight decay applies to weights only, not biases.
            double grad = g[i] + cfg.weight_decay * w[i];
            if (use_momentum) {
                v[i] = cfg.momentum * v[i] + grad;
                grad = v[i];
            }
            w[i] -= cfg.learning_rate * grad;
        }
        auto& b = layers[l].bias;
        const auto& gb = tape.bias_grads[l];
        auto& vb = state.b_vel[l];
        for (std::size_t i = 0; i < b.size(); ++i) {
            double grad = gb[i];
            if (use_momentum) {
                vb[i] = cfg.momentum * vb[i] + grad;
                grad = vb[i];
            }
            b[i] -= cfg.learning_rate * grad;
        }
    }
}

nlohmann::json mlp_to_json(const Mlp& mlp) {
    mlp.validate();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : mlp.layers()) {
        nlohmann::json weights = nlohmann::json::array();
        for (double v : l.weights.flat()) weights.push_back(double_to_string(v));
        nlohmann::json bias = nlohmann::json::array();
        for (double v : l.bias) bias.push_back(double_to_string(v));
        layers.push_back({{"activation", activation_name(l.activation)},
                          {"in_dim", l.in_dim()},
                          {"out_dim", l.out_dim()},
                          {"weights", std::move(weights)},
                          {"bias", std::move(bias)}});
    }
    return {{"input_dim", mlp.input_dim()},
            {"output_dim", mlp.output_dim()},
            {"layers", std::move(layers)}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
    try {
        std::vector<DenseLayer> layers;
        for (const auto& jl : j.at("layers")) {
            DenseLayer l;
            const auto in = jl.at("in_dim").get<std::size_t>();
            const auto out = jl.at("out_dim").get<std::size_t>();
            const auto& jw = jl.at("weights");
            if (jw.size() != in * out) throw SchemaError("checkpoint: weight count mismatch");
            std::vector<double> w;
            w.reserve(jw.size());
            for (const auto& s : jw) w.push_back(parse_double(s.get<std::string>()));
            l.weights = Matrix(out, in, std::move(w));
            const auto& jb = jl.at("bias");
            if (jb.size() != out) throw SchemaError("checkpoint: bias count mismatch");
            for (const auto& s : jb) l.bias.push_back(parse_double(s.get<std::string>()));
            l.activation = activation_from_name(jl.at("activation").get<std::string>());
            layers.push_back(std::move(l));
        }
        return Mlp(std::move(layers));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("checkpoint: malformed network document: ") + e.what());
    }
}

nlohmann::json optim_config_to_json(const OptimConfig& cfg) {
    return {{"method", cfg.method == OptimConfig::Method::Sgd ? "sgd" : "sgd-momentum"},
            {"learning_rate", cfg.learning_rate},
            {"momentum", cfg.momentum},
            {"weight_decay", cfg.weight_decay}};
}

OptimConfig optim_config_from_json(const nlohmann::json& j) {
    try {
        OptimConfig cfg;
        const auto method = j.at("method").get<std::string>();
        if (method == "sgd") {
            cfg.method = OptimConfig::Method::Sgd;
        } else if (method == "sgd-momentum") {
            cfg.method = OptimConfig::Method::SgdMomentum;
        } else {
            throw ConfigError("unknown optimizer method: " + method);
        }
        cfg.learning_rate = j.at("learning_rate").get<double>();
        cfg.momentum = j.at("momentum").get<double>();
        cfg.weight_decay = j.at("weight_decay").get<double>();
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed optimizer config: ") + e.what());
    }
}

}  // namespace mdann
