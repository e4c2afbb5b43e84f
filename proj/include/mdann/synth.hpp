#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdann/data.hpp"

namespace mdann {

// Multi-site dataset generator with a known Bayes-optimal scorer. Sites share
// one label concept (logistic in the one-hot features) while nuisance concepts
// carry site-specific status priors and site-specific spurious label weights.

struct SyntheticConfig {
    int n_sites = 13;
    std::vector<int> site_counts;          // defaults to the 13-ER encounter counts
    int vocab_size = 60;
    int n_signal = 16;                     // concepts carrying the shared label signal
    double signal_scale = 1.0;             // magnitude of shared concept weights
    double prior_shift = 1.0;              // covariate-shift knob on nuisance priors
    double nuisance_strength = 1.0;        // site-specific spurious label correlation
    std::vector<double> prevalence_targets;  // per-site positive rate; scalar broadcast
    std::uint64_t seed = 1;
    std::string start_date = "2020-03-16";
    int date_span_days = 300;
    std::optional<std::vector<double>> concept_weights;  // override, length 3V

    void validate() const;
    std::vector<double> resolved_prevalence() const;
};

/// Default per-site encounter counts (largest-to-smallest, total 3210).
const std::vector<int>& default_site_counts();
/// Default per-site positive rates (0.11 to 0.35, overall about 0.22).
const std::vector<double>& default_prevalence();

struct GroundTruth {
    std::vector<std::string> vocabulary;
    std::vector<std::string> sites;
    std::vector<double> concept_weights;              // 3V shared weights
    std::vector<std::vector<double>> site_nuisance;   // per site, 3V (already scaled)
    std::vector<std::vector<std::array<double, 3>>> site_priors;  // site x concept -> P/N/M
    std::vector<double> intercepts;                   // per site
    std::uint64_t seed = 0;

    int site_index(const std::string& er_id) const;
};

/// Deterministic in config+seed; per-site RNG streams are independently
/// seeded so sites could be generated in parallel without changing output.
std::pair<Dataset, GroundTruth> generate(const SyntheticConfig& cfg);

/// Exact generating posterior p(y=1 | x, site).
double bayes_score(const GroundTruth& gt, const EncounterRecord& record);

void save_ground_truth(const GroundTruth& gt, const std::string& path);
GroundTruth load_ground_truth(const std::string& path);

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);
nlohmann::json synthetic_config_to_json(const SyntheticConfig& cfg);

}  // namespace mdann
