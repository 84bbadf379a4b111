#include "bermudan/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <concepts>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bermudan/errors.hpp"
#include "bermudan/nn.hpp"
#include "bermudan/oracle.hpp"

namespace bermudan {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Walks one JSON object, remembering which keys were consumed.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string key(std::string_view name) const {
        return path_.empty() ? std::string(name) : path_ + "." + std::string(name);
    }
    bool has(std::string_view name) const { return node_.contains(std::string(name)); }

    const json* find(std::string_view name) {
        auto it = node_.find(std::string(name));
        if (it == node_.end()) return nullptr;
        used_.insert(std::string(name));
        return &*it;
    }

    void read(std::string_view name, double& out) {
        if (const json* v = find(name)) {
            if (!v->is_number()) throw ConfigError(key(name), "expected a number");
            out = v->get<double>();
        }
    }
    template <std::unsigned_integral U>
        requires(!std::same_as<U, bool>)
    void read(std::string_view name, U& out) {
        if (const json* v = find(name)) {
            if (!v->is_number_unsigned()) throw ConfigError(key(name), "expected a non-negative integer");
            out = v->get<U>();
        }
    }
    void read(std::string_view name, bool& out) {
        if (const json* v = find(name)) {
            if (!v->is_boolean()) throw ConfigError(key(name), "expected true or false");
            out = v->get<bool>();
        }
    }
    void read(std::string_view name, std::string& out) {
        if (const json* v = find(name)) {
            if (!v->is_string()) throw ConfigError(key(name), "expected a string");
            out = v->get<std::string>();
        }
    }
    void read(std::string_view name, std::vector<double>& out) {
        if (const json* v = find(name)) out = numbers(*v, key(name));
    }

    static std::vector<double> numbers(const json& v, const std::string& where) {
        if (!v.is_array()) throw ConfigError(where, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(where, "expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    Section child(std::string_view name) {
        const json* v = find(name);
        static const json empty = json::object();
        return Section(v ? *v : empty, key(name));
    }

    void reject_unknown() const {
        for (auto it = node_.begin(); it != node_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(key(it.key()), "unknown key");
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> used_;
};

// Scalar or per-asset vector.
std::vector<double> per_asset(Section& s, std::string_view name, std::size_t d, std::vector<double> current) {
    const json* v = s.find(name);
    if (!v) {
        if (current.size() != d) current.assign(d, current.empty() ? 0.0 : current.front());
        return current;
    }
    if (v->is_number()) return std::vector<double>(d, v->get<double>());
    auto values = Section::numbers(*v, s.key(name));
    if (values.size() != d) throw ConfigError(s.key(name), "expected " + std::to_string(d) + " entries");
    return values;
}

void read_model(Section s, ModelParams& m) {
    std::size_t d = m.assets();
    s.read("assets", d);
    if (d < 1) throw ConfigError(s.key("assets"), "must be at least 1");
    const bool resized = d != m.assets();
    m.s0 = per_asset(s, "s0", d, m.s0);
    m.delta = per_asset(s, "dividend", d, m.delta);
    m.sigma = per_asset(s, "volatility", d, m.sigma);
    s.read("rate", m.rate);
    s.read("strike", m.strike);
    s.read("maturity", m.maturity);
    s.read("exercise_dates", m.exercise_intervals);
    s.read("rebalances", m.rebalances);
    s.read("exercise_times", m.exercise_times);

    const auto di = static_cast<Eigen::Index>(d);
    if (const json* v = s.find("correlation")) {
        if (v->is_number()) {
            m.rho = Eigen::MatrixXd::Constant(di, di, v->get<double>());
            m.rho.diagonal().setOnes();
        } else {
            if (!v->is_array() || v->size() != d) throw ConfigError(s.key("correlation"), "expected a number or a d x d matrix");
            m.rho.resize(di, di);
            for (std::size_t i = 0; i < d; ++i) {
                auto row = Section::numbers((*v)[i], s.key("correlation"));
                if (row.size() != d) throw ConfigError(s.key("correlation"), "expected a number or a d x d matrix");
                for (std::size_t j = 0; j < d; ++j) m.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
            }
        }
    } else if (resized) {
        const double c = m.rho.rows() > 1 ? m.rho(1, 0) : 0.0;
        m.rho = Eigen::MatrixXd::Constant(di, di, c);
        m.rho.diagonal().setOnes();
    }
    s.reject_unknown();
}

void read_train(Section s, TrainConfig& t) {
    s.read("paths", t.paths);
    s.read("batch_size", t.batch_size);
    s.read("steps_first", t.steps_first);
    s.read("steps_rest", t.steps_rest);
    s.read("warm_start", t.warm_start);
    s.read("extended_state", t.extended_state);
    s.read("step_sizes", t.step_sizes);
    s.read("hidden_layers", t.hidden_layers);
    s.read("hidden_width", t.hidden_width);
    s.read("batch_norm", t.batch_norm);
    s.read("input_batch_norm", t.input_batch_norm);
    s.read("bn_epsilon", t.bn_epsilon);
    s.read("bn_momentum", t.bn_momentum);
    s.reject_unknown();
}

void read_pricing(Section s, ExperimentConfig& c) {
    s.read("lower_paths", c.lower_paths);
    s.read("outer_paths", c.dual.outer_paths);
    s.read("inner_paths", c.dual.inner_paths);
    s.read("alpha", c.alpha);
    s.reject_unknown();
}

void read_hedge(Section s, HedgeConfig& h) {
    s.read("train_paths", h.train_paths);
    s.read("eval_paths", h.eval_paths);
    s.read("batch_size", h.batch_size);
    s.read("steps_first", h.steps_first);
    s.read("steps_rest", h.steps_rest);
    s.read("warm_start", h.warm_start);
    s.read("step_sizes", h.step_sizes);
    s.read("hidden_layers", h.hidden_layers);
    s.read("hidden_width", h.hidden_width);
    s.read("batch_norm", h.batch_norm);
    s.read("bn_epsilon", h.bn_epsilon);
    s.read("bn_momentum", h.bn_momentum);
    s.read("histogram_bins", h.histogram_bins);
    s.read("histogram_half_width_sd", h.histogram_half_width_sd);
    s.reject_unknown();
}

std::string line_column(std::string_view text, std::size_t byte) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

json vec(const std::vector<double>& v) { return json(v); }

}  // namespace

std::string_view to_string(Scale scale) { return scale == Scale::full ? "full" : "desk"; }

Scale parse_scale(std::string_view text) {
    if (text == "desk") return Scale::desk;
    if (text == "full") return Scale::full;
    throw ConfigError("scale", "expected \"desk\" or \"full\"");
}

void ExperimentConfig::set_seed(std::uint64_t value) {
    seed = value;
    train.seed = value;
    dual.seed = value;
    hedge.seed = value;
}

void ExperimentConfig::validate() const {
    try {
        model.validate();
    } catch (const NotPositiveSemiDefinite&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("model", e.what());
    }
    auto wrap = [](const char* key, auto&& check) {
        try {
            check();
        } catch (const std::exception& e) {
            throw ConfigError(key, e.what());
        }
    };
    wrap("train", [&] { train.validate(); });
    wrap("pricing", [&] { dual.validate(); });
    wrap("hedge", [&] { hedge.validate(); });
    if (lower_paths < 2) throw ConfigError("pricing.lower_paths", "must be at least 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("pricing.alpha", "must lie in (0, 1)");
    if (train.seed != seed || dual.seed != seed || hedge.seed != seed)
        throw ConfigError("seed", "sub-configuration seeds differ from the master seed");
}

ExperimentConfig preset(Scale scale) {
    ExperimentConfig c;
    c.scale = scale;
    c.model = ModelParams::symmetric(5, 100.0, 0.05, 0.10, 0.20, 0.0, 100.0, 3.0, 9, 12);
    if (scale == Scale::full) {
        c.train.paths = 1'024'000;
        c.train.batch_size = 8192;
        c.train.steps_first = 6000;
        c.train.steps_rest = 3500;
        c.lower_paths = 4'096'000;
        c.dual.outer_paths = 2048;
        c.dual.inner_paths = 2048;
        c.hedge.train_paths = 1'024'000;
        c.hedge.eval_paths = 4'096'000;
        c.hedge.batch_size = 8192;
        c.hedge.steps_first = 10'000;
        c.hedge.steps_rest = 3000;
    } else {
        c.train.paths = 400'000;
        c.train.batch_size = 1024;
        c.train.steps_first = 1500;
        c.train.steps_rest = 750;
        c.lower_paths = 500'000;
        c.dual.outer_paths = 512;
        c.dual.inner_paths = 512;
        c.hedge.train_paths = 200'000;
        c.hedge.eval_paths = 500'000;
        c.hedge.batch_size = 1024;
        c.hedge.steps_first = 2000;
        c.hedge.steps_rest = 600;
    }
    c.set_seed(0);
    return c;
}

ExperimentConfig parse_config(std::string_view json_text, std::optional<Scale> scale_override) {
    json root;
    try {
        root = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError("", line_column(json_text, e.byte) + ": malformed JSON");
    }
    Section top(root, "");
    const json* version = top.find("version");
    if (!version) throw ConfigError("version", "missing; this build reads version " + std::to_string(kConfigSchemaVersion));
    if (!version->is_number_integer() || version->get<int>() != kConfigSchemaVersion)
        throw ConfigError("version", "unsupported; expected " + std::to_string(kConfigSchemaVersion));

    std::string scale_name = "desk";
    top.read("scale", scale_name);
    ExperimentConfig c = preset(scale_override ? *scale_override : parse_scale(scale_name));

    std::uint64_t seed = 0;
    top.read("seed", seed);
    top.read("output_dir", c.output_dir);
    if (top.has("model")) read_model(top.child("model"), c.model);
    if (top.has("train")) read_train(top.child("train"), c.train);
    if (top.has("pricing")) read_pricing(top.child("pricing"), c);
    if (top.has("hedge")) read_hedge(top.child("hedge"), c.hedge);
    top.reject_unknown();
    c.set_seed(seed);
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& file, std::optional<Scale> scale_override) {
    std::ifstream in(file);
    if (!in) throw ConfigError("", "cannot open " + file.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), scale_override);
}

std::string config_json(const ExperimentConfig& c) {
    const auto& m = c.model;
    json rho = json::array();
    for (Eigen::Index i = 0; i < m.rho.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.rho.cols(); ++j) row.push_back(m.rho(i, j));
        rho.push_back(row);
    }
    json root = {
        {"version", kConfigSchemaVersion},
        {"scale", std::string(to_string(c.scale))},
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"model",
         {{"assets", m.assets()}, {"s0", vec(m.s0)}, {"rate", m.rate}, {"dividend", vec(m.delta)},
          {"volatility", vec(m.sigma)}, {"correlation", rho}, {"strike", m.strike}, {"maturity", m.maturity},
          {"exercise_dates", m.exercise_intervals}, {"rebalances", m.rebalances},
          {"exercise_times", vec(m.exercise_times)}}},
        {"train",
         {{"paths", c.train.paths}, {"batch_size", c.train.batch_size}, {"steps_first", c.train.steps_first},
          {"steps_rest", c.train.steps_rest}, {"warm_start", c.train.warm_start},
          {"extended_state", c.train.extended_state}, {"step_sizes", vec(c.train.step_sizes)},
          {"hidden_layers", c.train.hidden_layers}, {"hidden_width", c.train.hidden_width},
          {"batch_norm", c.train.batch_norm}, {"input_batch_norm", c.train.input_batch_norm},
          {"bn_epsilon", c.train.bn_epsilon}, {"bn_momentum", c.train.bn_momentum}}},
        {"pricing",
         {{"lower_paths", c.lower_paths}, {"outer_paths", c.dual.outer_paths},
          {"inner_paths", c.dual.inner_paths}, {"alpha", c.alpha}}},
        {"hedge",
         {{"train_paths", c.hedge.train_paths}, {"eval_paths", c.hedge.eval_paths},
          {"batch_size", c.hedge.batch_size}, {"steps_first", c.hedge.steps_first},
          {"steps_rest", c.hedge.steps_rest}, {"warm_start", c.hedge.warm_start},
          {"step_sizes", vec(c.hedge.step_sizes)}, {"hidden_layers", c.hedge.hidden_layers},
          {"hidden_width", c.hedge.hidden_width}, {"batch_norm", c.hedge.batch_norm},
          {"bn_epsilon", c.hedge.bn_epsilon}, {"bn_momentum", c.hedge.bn_momentum},
          {"histogram_bins", c.hedge.histogram_bins},
          {"histogram_half_width_sd", c.hedge.histogram_half_width_sd}}},
    };
    return root.dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : config_json(config)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

PriceRun run_price(const ExperimentConfig& config) {
    config.validate();
    const GbmModel model(config.model);
    const PayoffFn payoff = model.payoff();

    const auto start = Clock::now();
    PathBatch batch = model.exercise_paths(config.train.paths, {StreamFamily::train, config.seed, 0});
    if (config.train.extended_state) batch = extend_state(batch, payoff);
    StoppingPolicy policy = train_policy(batch, payoff, config.train);
    batch = PathBatch();
    const BoundEstimate lower = lower_bound(policy, model, config.lower_paths, config.seed);
    const double t_lower = seconds_since(start);

    const auto upper_start = Clock::now();
    UpperBoundResult upper = upper_bound(policy, model, config.dual);
    const double t_upper = seconds_since(upper_start);

    const PriceEstimate estimate = point_and_interval(lower, upper.estimate, config.dual.inner_paths, config.alpha);
    return PriceRun{std::move(policy), lower, std::move(upper), estimate, t_lower, t_upper};
}

HedgeRun run_hedge(const ExperimentConfig& config, HedgeMode mode, const StoppingPolicy& policy, double v_hat) {
    config.validate();
    const GbmModel model(config.model);
    HedgeRun run;
    run.v_hat = v_hat;

    const auto start = Clock::now();
    try {
        const HedgeStrategy strategy = train_interval_hedge(policy, v_hat, model, config.hedge);
        run.interval = evaluate_interval(strategy, policy, v_hat, model, config.hedge.eval_paths, config.seed).intermediate;
    } catch (const NothingToHedge& e) {
        run.status = HedgeStatus::nothing_to_hedge;
        run.immediate_value = e.immediate_value();
        return run;
    }
    run.t1_seconds = seconds_since(start);
    if (mode == HedgeMode::interval) return run;

    const auto full_start = Clock::now();
    const HedgeStrategy strategy = train_full_hedge(policy, model, config.hedge);
    HedgeReport report = evaluate_full(strategy, policy, v_hat, model, config.hedge.eval_paths, config.seed,
                                       config.hedge.histogram_bins, config.hedge.histogram_half_width_sd);
    run.total = report.total;
    run.histogram = std::move(report.histogram);
    run.t2_seconds = seconds_since(full_start);
    return run;
}

namespace {

OracleCheck tree_versus_enumeration(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    const int trees = 20;
    for (int t = 0; t < trees; ++t) {
        const std::size_t steps = 1 + gen() % 5;
        std::vector<std::size_t> levels;
        for (std::size_t l = 0; l < steps; ++l)
            if (levels.size() < 3 && unit(gen) < 0.6) levels.push_back(l);
        const double sigma = 0.1 + 0.4 * unit(gen);
        auto spec = oracle::TreeSpec::crr(80.0 + 40.0 * unit(gen), steps, 0.25 + 2.0 * unit(gen), 0.1 * unit(gen),
                                          0.1 * unit(gen), sigma, levels);
        const double strike = 80.0 + 40.0 * unit(gen);
        const bool call = unit(gen) < 0.5;
        const oracle::TreePayoff payoff = [=](std::size_t, double s) {
            return std::max(call ? s - strike : strike - s, 0.0);
        };
        const double a = oracle::crr_bermudan(spec, payoff);
        const double b = oracle::exhaustive_optimal_stop(spec, payoff);
        worst = std::max(worst, std::abs(a - b));
    }
    return {"tree_vs_enumeration", worst <= 1e-12, "max |tree - enumeration| = " + num(worst)};
}

OracleCheck put_call_parity() {
    const double s0 = 100.0, k = 95.0, r = 0.05, q = 0.02, sigma = 0.3, t = 1.5;
    const auto c = oracle::bs_european(s0, k, r, q, sigma, t, oracle::OptionType::call);
    const auto p = oracle::bs_european(s0, k, r, q, sigma, t, oracle::OptionType::put);
    const double gap = std::abs((c.price - p.price) - (s0 * std::exp(-q * t) - k * std::exp(-r * t)));
    const double delta_gap = std::abs((c.delta - p.delta) - std::exp(-q * t));
    return {"black_scholes_parity", gap <= 1e-12 && delta_gap <= 1e-12,
            "price gap " + num(gap) + ", delta gap " + num(delta_gap)};
}

OracleCheck tree_converges_to_black_scholes() {
    const auto spec = oracle::TreeSpec::crr(100.0, 2000, 1.0, 0.05, 0.0, 0.2, {});
    const double tree = oracle::crr_bermudan(spec, [](std::size_t, double s) { return std::max(s - 100.0, 0.0); });
    const double bs = oracle::bs_european(100.0, 100.0, 0.05, 0.0, 0.2, 1.0, oracle::OptionType::call).price;
    return {"crr_european_limit", std::abs(tree - bs) <= 2e-3, "tree " + num(tree) + " vs closed form " + num(bs)};
}

OracleCheck exact_duality() {
    oracle::TreeSpec spec;
    spec.s0 = 100.0;
    spec.steps = 4;
    spec.dt = 0.25;
    spec.rate = 0.03;
    spec.up = 1.1;
    spec.down = 2.0 * std::exp(spec.rate * spec.dt) - spec.up;
    spec.exercise_levels = oracle::TreeSpec::all_levels(spec.steps);
    const auto put = [](double s) { return std::max(100.0 - s, 0.0); };
    const oracle::BinomialProcess process(spec, put, true);
    const auto solution = oracle::solve_tree(spec, [&](std::size_t, double s) { return put(s); });
    const auto policy = StoppingPolicy::from_function(
        spec.steps, 1, solution.continuation[0][0],
        [&](std::size_t n, std::span<const double> x) {
            return std::pow(spec.discount(), static_cast<double>(n)) * solution.continuation[n][spec.node_of(n, x[0])];
        },
        process.payoff());
    const auto upper = upper_bound(policy, process, DualConfig{16, 2, 0});
    double worst = 0.0;
    for (double v : upper.dual_max) worst = std::max(worst, std::abs(v - solution.price));
    return {"exact_duality", worst <= 1e-12, "max |dual max - tree price| = " + num(worst)};
}

OracleCheck gradient_check(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        nn::MlpSpec spec;
        spec.widths = {1 + gen() % 6, 2 + gen() % 10, 2 + gen() % 10, 1 + gen() % 3};
        spec.batch_norm = t % 2 == 0;
        nn::Mlp net = nn::init_xavier(spec, {StreamFamily::network_init, seed, static_cast<std::uint64_t>(t)});
        const auto b = static_cast<Eigen::Index>(2 + gen() % 16);
        std::normal_distribution<double> normal;
        nn::Matrix x(static_cast<Eigen::Index>(spec.inputs()), b), w(static_cast<Eigen::Index>(spec.outputs()), b);
        for (auto& v : x.reshaped()) v = normal(gen);
        for (auto& v : w.reshaped()) v = normal(gen) / static_cast<double>(b);
        nn::ForwardCache cache;
        nn::Mlp copy = net;
        copy.forward(x, nn::Mode::train, &cache);
        const nn::Vector analytic = copy.backward(cache, w);
        const nn::Vector numeric = nn::numerical_gradient(net, x, w, 1e-5);
        worst = std::max(worst, nn::max_relative_error(analytic, numeric, 1e-6));
    }
    return {"gradient_check", worst < 1e-4, "max relative error " + num(worst)};
}

OracleCheck model_parameters(const ExperimentConfig& config) {
    try {
        config.model.validate();
        return {"model_parameters", true, "correlation factor and grid are valid"};
    } catch (const std::exception& e) {
        return {"model_parameters", false, e.what()};
    }
}

}  // namespace

std::vector<OracleCheck> run_oracle_suite(const ExperimentConfig& config) {
    std::vector<OracleCheck> checks;
    auto guarded = [&](const char* name, auto&& fn) {
        try {
            checks.push_back(fn());
        } catch (const std::exception& e) {
            checks.push_back({name, false, e.what()});
        }
    };
    guarded("model_parameters", [&] { return model_parameters(config); });
    guarded("tree_vs_enumeration", [&] { return tree_versus_enumeration(config.seed); });
    guarded("black_scholes_parity", [&] { return put_call_parity(); });
    guarded("crr_european_limit", [&] { return tree_converges_to_black_scholes(); });
    guarded("exact_duality", [&] { return exact_duality(); });
    guarded("gradient_check", [&] { return gradient_check(config.seed); });
    return checks;
}

std::string price_csv_header() {
    return "d,s0,L_hat,t_L_seconds,U_hat,t_U_seconds,V_hat,ci_low,ci_high,K_L,K_U,J_inner,seed";
}

std::string price_csv_row(const ExperimentConfig& config, const PriceRun& run) {
    const auto& e = run.estimate;
    std::ostringstream os;
    os << config.model.assets() << ',' << num(config.model.s0.front()) << ',' << num(e.l_hat) << ','
       << num(run.t_lower_seconds) << ',' << num(e.u_hat) << ',' << num(run.t_upper_seconds) << ','
       << num(e.v_hat) << ',' << num(e.ci_low) << ',' << num(e.ci_high) << ',' << e.lower_paths << ','
       << e.outer_paths << ',' << e.inner_paths << ',' << config.seed;
    return os.str();
}

std::string hedge_csv_header() {
    return "d,s0,M,ihe,ihs,ihs_over_V,t1_seconds,he,hs,hs_over_V,t2_seconds";
}

std::string hedge_csv_row(const ExperimentConfig& config, const HedgeRun& run) {
    std::ostringstream os;
    os << config.model.assets() << ',' << num(config.model.s0.front()) << ',' << config.model.rebalances;
    if (run.interval)
        os << ',' << num(run.interval->mean) << ',' << num(run.interval->shortfall) << ','
           << num(run.interval->shortfall / run.v_hat) << ',' << num(run.t1_seconds);
    else
        os << ",,,,";
    if (run.total)
        os << ',' << num(run.total->mean) << ',' << num(run.total->shortfall) << ','
           << num(run.total->shortfall / run.v_hat) << ',' << num(run.t2_seconds);
    else
        os << ",,,,";
    return os.str();
}

std::string histogram_csv(const Histogram& h) {
    std::ostringstream os;
    os << "edge_low,edge_high,count\n";
    os << "-inf," << num(h.edges.front()) << ',' << h.underflow << '\n';
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        os << num(h.edges[b]) << ',' << num(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
    os << num(h.edges.back()) << ",inf," << h.overflow << '\n';
    return os.str();
}

std::string histogram_tag(const ExperimentConfig& config) {
    std::ostringstream os;
    os << 'd' << config.model.assets() << "_s" << config.model.s0.front() << "_M" << config.model.rebalances;
    return os.str();
}

std::string paths_csv(const PathBatch& batch) {
    std::ostringstream os;
    os << "path,step,time";
    for (std::size_t i = 1; i <= batch.dim; ++i) os << ",x_" << i;
    os << '\n';
    for (std::size_t k = 0; k < batch.n_paths; ++k)
        for (std::size_t s = 0; s <= batch.n_steps; ++s) {
            os << k << ',' << batch.start_index + s << ',' << num(batch.times[s]);
            for (double v : batch.state(k, s)) os << ',' << num(v);
            os << '\n';
        }
    return os.str();
}

void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& config, std::string_view command) {
    std::filesystem::create_directories(dir);
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(config)));
    const json manifest = {
        {"command", std::string(command)},
        {"config_hash", std::string(hash)},
        {"seed", config.seed},
        {"scale", std::string(to_string(config.scale))},
        {"version", std::string(kVersion)},
        {"config_schema", kConfigSchemaVersion},
        {"compiler", std::string(__VERSION__)},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"config", json::parse(config_json(config))},
    };
    std::ofstream(dir / "run_manifest.json") << manifest.dump(2) << '\n';
}

}  // namespace bermudan
