#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdann/data.hpp"
#include "mdann/nn.hpp"

namespace mdann {

// The five experiment systems: two adversarial strategies that differentiate
// the target from its sources (Multi additionally differentiates among the
// sources) and three plain baselines over different training pools. Every
// strategy is evaluated on the same target test rows.

enum class StrategyKind {
    MultiDann,
    SingleDann,
    SourceBaseline,
    TargetBaseline,
    CombinedBaseline,
};

inline constexpr StrategyKind kAllStrategies[] = {
    StrategyKind::MultiDann, StrategyKind::SingleDann, StrategyKind::SourceBaseline,
    StrategyKind::TargetBaseline, StrategyKind::CombinedBaseline};

std::string strategy_name(StrategyKind kind);
StrategyKind strategy_from_name(const std::string& name);
bool is_adversarial(StrategyKind kind);

struct TrainConfig {
    double lambda = 1.0;
    int epochs = 30;
    int batch_size = 64;
    OptimConfig optim;
    std::uint64_t seed = 1;
    bool use_target_labels = true;
    int hidden_width = 256;
    int hidden_depth = 2;
    bool lambda_warmup = false;       // classic 2/(1+exp(-10 t)) - 1 ramp, off by default
    bool stratified_batches = false;  // per-domain round-robin batching, off by default
    double positive_weight = 1.0;     // optional positive-class loss weight

    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainedModel {
    Mlp g_f;
    Mlp g_y;
    std::optional<Mlp> g_d;
    StrategyKind strategy = StrategyKind::CombinedBaseline;
    std::string target_er;
    std::vector<std::string> train_manifest;
    TrainConfig config;
    int n_domains = 0;  // M+1 for adversarial kinds, 0 otherwise
};

struct TrainLog {
    std::vector<double> l_y;          // per-epoch mean main-task loss
    std::vector<double> l_d;          // per-epoch mean domain loss (0 for baselines)
    std::vector<double> total;        // l_y - lambda * l_d
    std::vector<double> domain_acc;   // training-domain accuracy (0 for baselines)

    std::size_t epochs() const { return l_y.size(); }
};

/// Select and encode the strategy's training pool from the training half of a
/// dataset, attaching one-hot domain labels for the adversarial kinds.
EncodedBatch assemble(const Dataset& train_ds, const std::string& target_er, StrategyKind kind);

/// Train one model. Adversarial kinds run a single joint update per
/// mini-batch: the domain classifier descends its own loss while the reversed
/// domain gradient reaches the feature extractor. Deterministic under seed.
std::pair<TrainedModel, TrainLog> train(const EncodedBatch& batch, StrategyKind kind,
                                        const TrainConfig& cfg);

/// Positive-class probabilities (second softmax component of the main head).
std::vector<double> predict_proba(const TrainedModel& model, const Matrix& x);

/// Domain probabilities; only valid for adversarial models.
Matrix domain_predict(const TrainedModel& model, const Matrix& x);

void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

void save_train_log(const TrainLog& log, const std::string& path);

}  // namespace mdann
