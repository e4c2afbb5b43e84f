#include "mdann/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mdann/errors.hpp"
#include "mdann/rng.hpp"
#include "mdann/util.hpp"

namespace mdann {

namespace {

// Substream tags for mix_seed; site streams are offset by the site index.
constexpr std::uint64_t kStreamWeights = 1;
constexpr std::uint64_t kStreamSitePriors = 1000;
constexpr std::uint64_t kStreamSiteCalib = 2000;
constexpr std::uint64_t kStreamSiteRecords = 3000;

constexpr int kCalibSamples = 50000;

// Status prior shared by all sites for signal concepts.
constexpr std::array<double, 3> kSignalPrior = {0.30, 0.20, 0.50};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

int draw_status(Rng& rng, const std::array<double, 3>& prior) {
    const double u = rng.uniform();
    if (u < prior[0]) return 0;
    if (u < prior[0] + prior[1]) return 1;
    return 2;
}

}  // namespace

const std::vector<int>& default_site_counts() {
    static const std::vector<int> counts = {594, 483, 288, 251, 233, 229, 216,
                                            215, 183, 165, 149, 121, 83};
    return counts;
}

const std::vector<double>& default_prevalence() {
    static const std::vector<double> rates = {0.23, 0.18, 0.20, 0.20, 0.16, 0.21, 0.31,
                                              0.11, 0.31, 0.22, 0.30, 0.26, 0.35};
    return rates;
}

void SyntheticConfig::validate() const {
    if (n_sites < 2) throw ConfigError("n_sites must be at least 2");
    if (!site_counts.empty() && static_cast<int>(site_counts.size()) != n_sites) {
        throw ConfigError("site_counts length must equal n_sites");
    }
    for (int c : site_counts) {
        if (c < 2) throw ConfigError("every site needs at least 2 records");
    }
    if (site_counts.empty() && n_sites != 13) {
        throw ConfigError("site_counts is required when n_sites != 13");
    }
    if (vocab_size < 1) throw ConfigError("vocab_size must be positive");
    if (n_signal < 0 || n_signal > vocab_size) {
        throw ConfigError("n_signal must be in [0, vocab_size]");
    }
    if (signal_scale < 0.0) throw ConfigError("signal_scale must be nonnegative");
    if (prior_shift < 0.0) throw ConfigError("prior_shift must be nonnegative");
    if (nuisance_strength < 0.0) throw ConfigError("nuisance_strength must be nonnegative");
    if (!prevalence_targets.empty() && prevalence_targets.size() != 1 &&
        static_cast<int>(prevalence_targets.size()) != n_sites) {
        throw ConfigError("prevalence_targets must have 1 or n_sites entries");
    }
    for (double p : prevalence_targets) {
        if (!(p > 0.0 && p < 1.0)) {
            throw ConfigError("prevalence_targets entries must lie strictly inside (0, 1), got " +
                              std::to_string(p));
        }
    }
    if (date_span_days < 1) throw ConfigError("date_span_days must be positive");
    if (concept_weights && static_cast<int>(concept_weights->size()) != 3 * vocab_size) {
        throw ConfigError("concept_weights override must have length 3 * vocab_size");
    }
    parse_date(start_date);
}

std::vector<double> SyntheticConfig::resolved_prevalence() const {
    if (prevalence_targets.empty()) {
        if (n_sites == 13) return default_prevalence();
        return std::vector<double>(n_sites, 0.22);
    }
    if (prevalence_targets.size() == 1) {
        return std::vector<double>(n_sites, prevalence_targets[0]);
    }
    return prevalence_targets;
}

int GroundTruth::site_index(const std::string& er_id) const {
    for (std::size_t i = 0; i < sites.size(); ++i) {
        if (sites[i] == er_id) return static_cast<int>(i);
    }
    throw ConfigError("unknown site: " + er_id);
}

std::pair<Dataset, GroundTruth> generate(const SyntheticConfig& cfg) {
    cfg.validate();
    const int v = cfg.vocab_size;
    const int sites = cfg.n_sites;
    const std::vector<int>& counts = cfg.site_counts.empty() ? default_site_counts()
                                                             : cfg.site_counts;
    const std::vector<double> prevalence = cfg.resolved_prevalence();
    const std::int32_t day0 = parse_date(cfg.start_date);

    GroundTruth gt;
    gt.seed = cfg.seed;
    gt.vocabulary.reserve(v);
    for (int c = 0; c < v; ++c) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "CUI%04d", c + 1);
        gt.vocabulary.push_back(buf);
    }
    gt.sites.reserve(sites);
    for (int s = 0; s < sites; ++s) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "ER%02d", s + 1);
        gt.sites.push_back(buf);
    }

    // Shared label weights: signal concepts pull P up and N down, nuisance
    // concepts carry no shared weight.
    if (cfg.concept_weights) {
        gt.concept_weights = *cfg.concept_weights;
    } else {
        gt.concept_weights.assign(3 * v, 0.0);
        Rng wrng(mix_seed(cfg.seed, kStreamWeights));
        for (int c = 0; c < cfg.n_signal; ++c) {
            const double a = cfg.signal_scale * (0.5 + wrng.uniform());
            const double sign = wrng.bernoulli(0.5) ? 1.0 : -1.0;
            gt.concept_weights[3 * c + 0] = sign * a;
            gt.concept_weights[3 * c + 1] = -sign * a;
        }
    }

    // Per-site nuisance priors and spurious weights.
    gt.site_priors.assign(sites, std::vector<std::array<double, 3>>(v, kSignalPrior));
    gt.site_nuisance.assign(sites, std::vector<double>(3 * v, 0.0));
    for (int s = 0; s < sites; ++s) {
        Rng prng(mix_seed(cfg.seed, kStreamSitePriors + s));
        for (int c = cfg.n_signal; c < v; ++c) {
            std::array<double, 3> logits;
            double mx = -1e300;
            for (int k = 0; k < 3; ++k) {
                logits[k] = cfg.prior_shift * prng.normal();
                mx = std::max(mx, logits[k]);
            }
            double sum = 0.0;
            for (int k = 0; k < 3; ++k) {
                logits[k] = std::exp(logits[k] - mx);
                sum += logits[k];
            }
            for (int k = 0; k < 3; ++k) gt.site_priors[s][c][k] = logits[k] / sum;

            std::array<double, 3> raw;
            for (int k = 0; k < 3; ++k) raw[k] = cfg.nuisance_strength * prng.normal();
            // Center under the site's own prior so the nuisance term has zero
            // mean and the intercept search stays well-conditioned.
            double mean = 0.0;
            for (int k = 0; k < 3; ++k) mean += gt.site_priors[s][c][k] * raw[k];
            for (int k = 0; k < 3; ++k) {
                gt.site_nuisance[s][3 * c + k] = raw[k] - mean;
            }
        }
    }

    // Solve each site's intercept by bisection on a fixed Monte-Carlo estimate
    // of the positive rate.
    gt.intercepts.assign(sites, 0.0);
    for (int s = 0; s < sites; ++s) {
        const bool same_generating_law = s > 0 && cfg.prior_shift == 0.0 &&
                                         cfg.nuisance_strength == 0.0 &&
                                         prevalence[s] == prevalence[0];
        if (same_generating_law) {
            gt.intercepts[s] = gt.intercepts[0];
            continue;
        }
        Rng crng(mix_seed(cfg.seed, kStreamSiteCalib + s));
        std::vector<double> lin(kCalibSamples, 0.0);
        for (int i = 0; i < kCalibSamples; ++i) {
            double acc = 0.0;
            for (int c = 0; c < v; ++c) {
                const int k = draw_status(crng, gt.site_priors[s][c]);
                const int pos = 3 * c + k;
                acc += gt.concept_weights[pos] + gt.site_nuisance[s][pos];
            }
            lin[i] = acc;
        }
        auto rate_at = [&](double b) {
            double total = 0.0;
            for (double z : lin) total += sigmoid(z + b);
            return total / static_cast<double>(kCalibSamples);
        };
        double lo = -40.0, hi = 40.0;
        if (rate_at(lo) > prevalence[s] || rate_at(hi) < prevalence[s]) {
            throw ConfigError("prevalence target " + std::to_string(prevalence[s]) +
                              " for site " + gt.sites[s] + " is unsatisfiable");
        }
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (rate_at(mid) < prevalence[s] ? lo : hi) = mid;
        }
        gt.intercepts[s] = 0.5 * (lo + hi);
    }

    Dataset ds;
    ds.vocabulary = gt.vocabulary;
    ds.site_registry = gt.sites;
    std::size_t total = 0;
    for (int c : counts) total += static_cast<std::size_t>(c);
    ds.records.reserve(total);
    for (int s = 0; s < sites; ++s) {
        Rng rrng(mix_seed(cfg.seed, kStreamSiteRecords + s));
        for (int i = 0; i < counts[s]; ++i) {
            EncounterRecord r;
            char buf[24];
            std::snprintf(buf, sizeof(buf), "E%02d-%05d", s + 1, i + 1);
            r.encounter_id = buf;
            r.er_id = gt.sites[s];
            r.statuses.reserve(v);
            double acc = gt.intercepts[s];
            for (int c = 0; c < v; ++c) {
                const int k = draw_status(rrng, gt.site_priors[s][c]);
                r.statuses.push_back(static_cast<CuiStatus>(k));
                const int pos = 3 * c + k;
                acc += gt.concept_weights[pos] + gt.site_nuisance[s][pos];
            }
            r.label = rrng.bernoulli(sigmoid(acc));
            r.date = day0 + static_cast<std::int32_t>(rrng.below(cfg.date_span_days));
            ds.records.push_back(std::move(r));
        }
    }
    ds.validate();
    return {std::move(ds), std::move(gt)};
}

double bayes_score(const GroundTruth& gt, const EncounterRecord& record) {
    const int s = gt.site_index(record.er_id);
    if (record.statuses.size() != gt.vocabulary.size()) {
        throw ShapeError("bayes_score: record has " + std::to_string(record.statuses.size()) +
                         " statuses, expected " + std::to_string(gt.vocabulary.size()));
    }
    double acc = gt.intercepts[s];
    for (std::size_t c = 0; c < record.statuses.size(); ++c) {
        const std::size_t pos = 3 * c + static_cast<std::size_t>(record.statuses[c]);
        acc += gt.concept_weights[pos] + gt.site_nuisance[s][pos];
    }
    return sigmoid(acc);
}

namespace {

nlohmann::json doubles_to_json(const std::vector<double>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (double x : v) out.push_back(double_to_string(x));
    return out;
}

std::vector<double> doubles_from_json(const nlohmann::json& j) {
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& s : j) out.push_back(parse_double(s.get<std::string>()));
    return out;
}

}  // namespace

void save_ground_truth(const GroundTruth& gt, const std::string& path) {
    nlohmann::json priors = nlohmann::json::array();
    for (const auto& site : gt.site_priors) {
        nlohmann::json sp = nlohmann::json::array();
        for (const auto& p : site) {
            sp.push_back({double_to_string(p[0]), double_to_string(p[1]), double_to_string(p[2])});
        }
        priors.push_back(std::move(sp));
    }
    nlohmann::json nuisance = nlohmann::json::array();
    for (const auto& site : gt.site_nuisance) nuisance.push_back(doubles_to_json(site));
    nlohmann::json j{{"vocabulary", gt.vocabulary},
                     {"sites", gt.sites},
                     {"concept_weights", doubles_to_json(gt.concept_weights)},
                     {"site_nuisance", std::move(nuisance)},
                     {"site_priors", std::move(priors)},
                     {"intercepts", doubles_to_json(gt.intercepts)},
                     {"seed", gt.seed}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out.good()) throw IoError("write failed for " + path);
}

GroundTruth load_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        nlohmann::json j;
        in >> j;
        GroundTruth gt;
        gt.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
        gt.sites = j.at("sites").get<std::vector<std::string>>();
        gt.concept_weights = doubles_from_json(j.at("concept_weights"));
        for (const auto& site : j.at("site_nuisance")) {
            gt.site_nuisance.push_back(doubles_from_json(site));
        }
        for (const auto& site : j.at("site_priors")) {
            std::vector<std::array<double, 3>> sp;
            for (const auto& p : site) {
                sp.push_back({parse_double(p.at(0).get<std::string>()),
                              parse_double(p.at(1).get<std::string>()),
                              parse_double(p.at(2).get<std::string>())});
            }
            gt.site_priors.push_back(std::move(sp));
        }
        gt.intercepts = doubles_from_json(j.at("intercepts"));
        gt.seed = j.at("seed").get<std::uint64_t>();
        return gt;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": malformed ground truth: " + e.what());
    }
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
    try {
        SyntheticConfig cfg;
        if (j.contains("n_sites")) cfg.n_sites = j.at("n_sites").get<int>();
        if (j.contains("site_counts")) {
            cfg.site_counts = j.at("site_counts").get<std::vector<int>>();
        }
        if (j.contains("vocab_size")) cfg.vocab_size = j.at("vocab_size").get<int>();
        if (j.contains("n_signal")) cfg.n_signal = j.at("n_signal").get<int>();
        if (j.contains("signal_scale")) cfg.signal_scale = j.at("signal_scale").get<double>();
        if (j.contains("prior_shift")) cfg.prior_shift = j.at("prior_shift").get<double>();
        if (j.contains("nuisance_strength")) {
            cfg.nuisance_strength = j.at("nuisance_strength").get<double>();
        }
        if (j.contains("prevalence_targets")) {
            const auto& p = j.at("prevalence_targets");
            if (p.is_number()) {
                cfg.prevalence_targets = {p.get<double>()};
            } else {
                cfg.prevalence_targets = p.get<std::vector<double>>();
            }
        }
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("start_date")) cfg.start_date = j.at("start_date").get<std::string>();
        if (j.contains("date_span_days")) cfg.date_span_days = j.at("date_span_days").get<int>();
        if (j.contains("concept_weights")) {
            cfg.concept_weights = j.at("concept_weights").get<std::vector<double>>();
        }
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed synthetic config: ") + e.what());
    }
}

nlohmann::json synthetic_config_to_json(const SyntheticConfig& cfg) {
    nlohmann::json j{{"n_sites", cfg.n_sites},
                     {"site_counts", cfg.site_counts.empty() && cfg.n_sites == 13
                                         ? default_site_counts()
                                         : cfg.site_counts},
                     {"vocab_size", cfg.vocab_size},
                     {"n_signal", cfg.n_signal},
                     {"signal_scale", cfg.signal_scale},
                     {"prior_shift", cfg.prior_shift},
                     {"nuisance_strength", cfg.nuisance_strength},
                     {"prevalence_targets", cfg.resolved_prevalence()},
                     {"seed", cfg.seed},
                     {"start_date", cfg.start_date},
                     {"date_span_days", cfg.date_span_days}};
    if (cfg.concept_weights) j["concept_weights"] = *cfg.concept_weights;
    return j;
}

}  // namespace mdann
