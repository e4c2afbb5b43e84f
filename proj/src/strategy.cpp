#include "mdann/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mdann/errors.hpp"
#include "mdann/rng.hpp"
#include "mdann/util.hpp"

namespace mdann {

namespace {

// Seed substreams: parameter init per subnetwork plus the shuffle stream.
// G_d draws from its own stream so its presence never perturbs G_f/G_y.
constexpr std::uint64_t kStreamGf = 11;
constexpr std::uint64_t kStreamGy = 12;
constexpr std::uint64_t kStreamGd = 13;
constexpr std::uint64_t kStreamShuffle = 14;

inline double clamp_prob(double p) {
    return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

}  // namespace

std::string strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::MultiDann: return "multi-dann";
        case StrategyKind::SingleDann: return "single-dann";
        case StrategyKind::SourceBaseline: return "source-baseline";
        case StrategyKind::TargetBaseline: return "target-baseline";
        case StrategyKind::CombinedBaseline: return "combined-baseline";
    }
    throw ConfigError("unknown strategy enum value");
}

StrategyKind strategy_from_name(const std::string& name) {
    for (StrategyKind k : kAllStrategies) {
        if (strategy_name(k) == name) return k;
    }
    throw ConfigError("unknown strategy: " + name);
}

bool is_adversarial(StrategyKind kind) {
    return kind == StrategyKind::MultiDann || kind == StrategyKind::SingleDann;
}

void TrainConfig::validate() const {
    if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (hidden_width < 1) throw ConfigError("hidden_width must be positive");
    if (hidden_depth < 1) throw ConfigError("hidden_depth must be positive");
    if (!(positive_weight > 0.0)) throw ConfigError("positive_weight must be positive");
    optim.validate();
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return {{"lambda", cfg.lambda},
            {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"optim", optim_config_to_json(cfg.optim)},
            {"seed", cfg.seed},
            {"use_target_labels", cfg.use_target_labels},
            {"hidden_width", cfg.hidden_width},
            {"hidden_depth", cfg.hidden_depth},
            {"lambda_warmup", cfg.lambda_warmup},
            {"stratified_batches", cfg.stratified_batches},
            {"positive_weight", cfg.positive_weight}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    try {
        TrainConfig cfg;
        if (j.contains("lambda")) cfg.lambda = j.at("lambda").get<double>();
        if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
        if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
        if (j.contains("optim")) cfg.optim = optim_config_from_json(j.at("optim"));
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("use_target_labels")) {
            cfg.use_target_labels = j.at("use_target_labels").get<bool>();
        }
        if (j.contains("hidden_width")) cfg.hidden_width = j.at("hidden_width").get<int>();
        if (j.contains("hidden_depth")) cfg.hidden_depth = j.at("hidden_depth").get<int>();
        if (j.contains("lambda_warmup")) cfg.lambda_warmup = j.at("lambda_warmup").get<bool>();
        if (j.contains("stratified_batches")) {
            cfg.stratified_batches = j.at("stratified_batches").get<bool>();
        }
        if (j.contains("positive_weight")) {
            cfg.positive_weight = j.at("positive_weight").get<double>();
        }
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed train config: ") + e.what());
    }
}

EncodedBatch assemble(const Dataset& train_ds, const std::string& target_er, StrategyKind kind) {
    if (!train_ds.has_site(target_er)) {
        throw ConfigError("unknown target site: " + target_er);
    }

    Dataset pool;
    pool.vocabulary = train_ds.vocabulary;
    pool.site_registry = train_ds.site_registry;
    for (const auto& r : train_ds.records) {
        const bool keep = kind == StrategyKind::SourceBaseline   ? r.er_id != target_er
                          : kind == StrategyKind::TargetBaseline ? r.er_id == target_er
                                                                 : true;
        if (keep) pool.records.push_back(r);
    }
    if (pool.records.empty()) {
        throw ConfigError("strategy " + strategy_name(kind) + " selects no training rows");
    }

    EncodedBatch batch = encode(pool.records, pool.vocabulary);
    batch.target_er = target_er;

    if (is_adversarial(kind)) {
        const DomainMode mode =
            kind == StrategyKind::MultiDann ? DomainMode::Multi : DomainMode::Single;
        const DomainAssignment da = assign_domains(pool, target_er, mode);
        batch.d = Matrix(pool.records.size(), static_cast<std::size_t>(da.n_domains));
        for (std::size_t i = 0; i < pool.records.size(); ++i) {
            batch.d(i, static_cast<std::size_t>(da.index_per_record[i])) = 1.0;
        }
    }
    return batch;
}

namespace {

struct StepGrads {
    GradTape g_f_tape;
    GradTape g_y_tape;
    GradTape g_d_tape;  // empty for baselines
    double l_y = 0.0;   // weighted sum over labeled rows
    double l_d = 0.0;   // sum over all rows
    std::size_t labeled_rows = 0;
    std::size_t domain_correct = 0;
};

// One joint gradient evaluation at fixed parameters. The main branch and the
// reversed domain branch each run their own backward pass through g_f and the
// tapes are summed, so the g_f gradient equals grad(L_y) - lambda * grad(L_d)
// exactly for binary-representable lambdas.
StepGrads compute_step(const Mlp& g_f, const Mlp& g_y, const Mlp* g_d, const Matrix& x,
                       std::span<const int> y, const Matrix& d, double lambda,
                       bool use_target_labels, double positive_weight) {
    const std::size_t n = x.rows();
    StepGrads out;

    ForwardCache cache_f;
    const Matrix h = forward(g_f, x, cache_f);
    ForwardCache cache_y;
    const Matrix p = forward(g_y, h, cache_y);

    // Rows entering the main-task loss; with use_target_labels off, rows whose
    // domain label is the target class (the last one) are excluded.
    const std::size_t target_class = d.empty() ? 0 : d.cols() - 1;
    Matrix upstream_y(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        if (!use_target_labels && !d.empty() && d(i, target_class) == 1.0) continue;
        const double w = y[i] == 1 ? positive_weight : 1.0;
        const double prob = clamp_prob(p(i, 1));
        out.l_y += w * (y[i] == 1 ? -std::log(prob) : -std::log(1.0 - prob));
        upstream_y(i, 1) = w * (y[i] == 1 ? -1.0 / prob : 1.0 / (1.0 - prob));
        ++out.labeled_rows;
    }
    if (out.labeled_rows > 0) {
        const double inv = 1.0 / static_cast<double>(out.labeled_rows);
        for (double& v : upstream_y.flat()) v *= inv;
        out.l_y *= inv;
    }
    out.g_y_tape = backward(g_y, cache_y, upstream_y);
    out.g_f_tape = backward(g_f, cache_f, out.g_y_tape.input_grad);

    if (g_d) {
        ForwardCache cache_d;
        const Matrix q = forward(*g_d, h, cache_d);
        out.l_d = domain_ce_loss_mean(q, d);
        Matrix upstream_d = domain_ce_grad(q, d);
        const double inv = 1.0 / static_cast<double>(n);
        for (double& v : upstream_d.flat()) v *= inv;
        out.g_d_tape = backward(*g_d, cache_d, upstream_d);
        const Matrix reversed = grad_reverse(out.g_d_tape.input_grad, lambda);
        out.g_f_tape.add(backward(g_f, cache_f, reversed));

        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            auto row = q.row(i);
            for (std::size_t j = 1; j < row.size(); ++j) {
                if (row[j] > row[best]) best = j;
            }
            if (d(i, best) == 1.0) ++out.domain_correct;
        }
    }
    return out;
}

std::vector<std::size_t> epoch_order(const EncodedBatch& batch, Rng& rng, bool stratified) {
    const std::size_t n = batch.n();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (!stratified || !batch.has_domains()) {
        rng.shuffle(order);
        return order;
    }
    // Round-robin over shuffled per-domain pools.
    std::vector<std::vector<std::size_t>> pools(batch.d.cols());
    for (std::size_t i = 0; i < n; ++i) {
        auto row = batch.d.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] == 1.0) {
                pools[j].push_back(i);
                break;
            }
        }
    }
    for (auto& pool : pools) rng.shuffle(pool);
    order.clear();
    std::vector<std::size_t> cursor(pools.size(), 0);
    while (order.size() < n) {
        for (std::size_t j = 0; j < pools.size(); ++j) {
            if (cursor[j] < pools[j].size()) order.push_back(pools[j][cursor[j]++]);
        }
    }
    return order;
}

}  // namespace

std::pair<TrainedModel, TrainLog> train(const EncodedBatch& batch, StrategyKind kind,
                                        const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n = batch.n();
    if (n == 0) throw ConfigError("train: empty batch");
    if (static_cast<std::size_t>(cfg.batch_size) > n) {
        throw ConfigError("batch_size " + std::to_string(cfg.batch_size) +
                          " exceeds training-set size " + std::to_string(n));
    }
    const bool adversarial = is_adversarial(kind);
    if (adversarial && !batch.has_domains()) {
        throw ConfigError("strategy " + strategy_name(kind) + " requires domain labels");
    }

    const int in_dim = static_cast<int>(batch.x.cols());
    const std::vector<int> hidden(static_cast<std::size_t>(cfg.hidden_depth - 1),
                                  cfg.hidden_width);

    TrainedModel model;
    model.strategy = kind;
    model.target_er = batch.target_er;
    model.train_manifest = batch.row_meta;
    model.config = cfg;
    model.g_f = init_mlp(in_dim, hidden, cfg.hidden_width, mix_seed(cfg.seed, kStreamGf),
                         Activation::Rectifier);
    model.g_y = init_mlp(cfg.hidden_width, hidden, 2, mix_seed(cfg.seed, kStreamGy));
    if (adversarial) {
        model.n_domains = static_cast<int>(batch.d.cols());
        model.g_d = init_mlp(cfg.hidden_width, hidden, model.n_domains,
                             mix_seed(cfg.seed, kStreamGd));
    }

    OptimState state_f, state_y, state_d;
    Rng shuffle_rng(mix_seed(cfg.seed, kStreamShuffle));

    TrainLog log;
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
    std::size_t global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(batch, shuffle_rng, cfg.stratified_batches);

        double sum_ly = 0.0, sum_ld = 0.0;
        std::size_t labeled_total = 0, rows_total = 0, domain_correct = 0;

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + start, stop - start);

            const Matrix xb = take_rows(batch.x, idx);
            std::vector<int> yb(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = batch.y[idx[i]];
            Matrix db;
            if (adversarial) db = take_rows(batch.d, idx);

            double lambda_eff = cfg.lambda;
            if (cfg.lambda_warmup && total_steps > 1) {
                const double progress =
                    static_cast<double>(global_step) / static_cast<double>(total_steps - 1);
                lambda_eff = cfg.lambda * (2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0);
            }

            StepGrads grads = compute_step(model.g_f, model.g_y,
                                           adversarial ? &*model.g_d : nullptr, xb, yb, db,
                                           lambda_eff, cfg.use_target_labels,
                                           cfg.positive_weight);

            if (!std::isfinite(grads.l_y) || !std::isfinite(grads.l_d)) {
                throw TrainDivergedError("training diverged at epoch " + std::to_string(epoch + 1),
                                         epoch + 1);
            }

            optim_step(model.g_f, grads.g_f_tape, cfg.optim, state_f);
            optim_step(model.g_y, grads.g_y_tape, cfg.optim, state_y);
            if (adversarial) optim_step(*model.g_d, grads.g_d_tape, cfg.optim, state_d);

            sum_ly += grads.l_y * static_cast<double>(grads.labeled_rows);
            labeled_total += grads.labeled_rows;
            sum_ld += grads.l_d * static_cast<double>(idx.size());
            rows_total += idx.size();
            domain_correct += grads.domain_correct;
            ++global_step;
        }

        const double epoch_ly = labeled_total > 0 ? sum_ly / static_cast<double>(labeled_total)
                                                  : 0.0;
        const double epoch_ld = adversarial ? sum_ld / static_cast<double>(rows_total) : 0.0;
        log.l_y.push_back(epoch_ly);
        log.l_d.push_back(epoch_ld);
        log.total.push_back(total_objective(epoch_ly, epoch_ld, cfg.lambda));
        log.domain_acc.push_back(
            adversarial ? static_cast<double>(domain_correct) / static_cast<double>(rows_total)
                        : 0.0);
    }
    return {std::move(model), std::move(log)};
}

std::vector<double> predict_proba(const TrainedModel& model, const Matrix& x) {
    const Matrix h = forward(model.g_f, x);
    const Matrix p = forward(model.g_y, h);
    std::vector<double> out(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) out[i] = p(i, 1);
    return out;
}

Matrix domain_predict(const TrainedModel& model, const Matrix& x) {
    if (!model.g_d) {
        throw UnsupportedOperationError("domain_predict: " + strategy_name(model.strategy) +
                                        " has no domain classifier");
    }
    const Matrix h = forward(model.g_f, x);
    return forward(*model.g_d, h);
}

void save_checkpoint(const TrainedModel& model, const std::string& path) {
    nlohmann::json j{{"format", "mdann-checkpoint"},
                     {"version", 1},
                     {"strategy", strategy_name(model.strategy)},
                     {"target_er", model.target_er},
                     {"n_domains", model.n_domains},
                     {"train_config", train_config_to_json(model.config)},
                     {"g_f", mlp_to_json(model.g_f)},
                     {"g_y", mlp_to_json(model.g_y)},
                     {"train_manifest", model.train_manifest}};
    if (model.g_d) j["g_d"] = mlp_to_json(*model.g_d);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out.good()) throw IoError("write failed for " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": not a JSON document: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "mdann-checkpoint") {
            throw SchemaError(path + ": not an mdann checkpoint");
        }
        TrainedModel model;
        model.strategy = strategy_from_name(j.at("strategy").get<std::string>());
        model.target_er = j.at("target_er").get<std::string>();
        model.n_domains = j.at("n_domains").get<int>();
        model.config = train_config_from_json(j.at("train_config"));
        model.g_f = mlp_from_json(j.at("g_f"));
        model.g_y = mlp_from_json(j.at("g_y"));
        model.train_manifest = j.at("train_manifest").get<std::vector<std::string>>();
        if (j.contains("g_d")) model.g_d = mlp_from_json(j.at("g_d"));

        const bool adversarial = is_adversarial(model.strategy);
        if (adversarial != model.g_d.has_value()) {
            throw SchemaError(path + ": domain classifier presence does not match strategy");
        }
        if (model.g_f.output_dim() != model.g_y.input_dim() ||
            (model.g_d && model.g_f.output_dim() != model.g_d->input_dim())) {
            throw SchemaError(path + ": subnetwork dimensions do not chain");
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": malformed checkpoint: " + e.what());
    }
}

void save_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,l_y,l_d,total,domain_acc\n";
    for (std::size_t e = 0; e < log.epochs(); ++e) {
        out << (e + 1) << ',' << double_to_string(log.l_y[e]) << ','
            << double_to_string(log.l_d[e]) << ',' << double_to_string(log.total[e]) << ','
            << double_to_string(log.domain_acc[e]) << '\n';
    }
    if (!out.good()) throw IoError("write failed for " + path);
}

}  // namespace mdann
