#include "rca/experiment.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rca/digest.hpp"
#include "rca/theory.hpp"

namespace rca {

using json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* curriculum_name(CurriculumMode m) {
    switch (m) {
        case CurriculumMode::Auto: return "auto";
        case CurriculumMode::On: return "on";
        case CurriculumMode::Off: return "off";
    }
    return "?";
}

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string at(const std::string& key) const { return path_ + "/" + key; }

    void number(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) throw ConfigError(at(key), "expected a number");
            out = v->get<double>();
        }
    }
    template <class Int>
    void count(const std::string& key, Int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0))
                throw ConfigError(at(key), "expected a nonnegative integer");
            out = static_cast<Int>(v->get<std::uint64_t>());
        }
    }
    void boolean(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void text(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(at(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void numbers(const std::string& key, std::vector<double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(at(key), "expected an array of numbers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number()) throw ConfigError(at(key) + "/" + std::to_string(i), "expected a number");
                out.push_back((*v)[i].get<double>());
            }
        }
    }
    void counts(const std::string& key, std::vector<std::size_t>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(at(key), "expected an array of integers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number_unsigned())
                    throw ConfigError(at(key) + "/" + std::to_string(i), "expected a nonnegative integer");
                out.push_back((*v)[i].get<std::size_t>());
            }
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown key '" + it.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_dataset(const json& j, DatasetConfig& d) {
    ObjectReader r(j, "/dataset");
    r.text("generator", d.generator);
    r.count("n", d.n);
    r.number("noise", d.noise);
    r.count("classes", d.classes);
    r.count("dim", d.dim);
    r.number("separation", d.separation);
    r.text("source_csv", d.source_csv);
    r.text("target_csv", d.target_csv);
    r.boolean("target_labels", d.target_labels);
    r.boolean("standardize", d.standardize);
    if (const json* s = r.find("shift")) {
        ObjectReader sr(*s, "/dataset/shift");
        sr.number("rotation_degrees", d.rotation_degrees);
        sr.numbers("translation", d.translation);
        sr.numbers("scale", d.scale);
        sr.counts("permutation", d.permutation);
        sr.number("noise_std", d.shift_noise);
        sr.finish();
    }
    r.finish();
}

void read_arch(const json& j, Arch& a) {
    ObjectReader r(j, "/arch");
    r.counts("encoder_widths", a.encoder_widths);
    r.number("leaky_slope", a.leaky_slope);
    r.boolean("encoder_output_activation", a.encoder_output_activation);
    r.number("dropout", a.dropout);
    r.finish();
}

void read_optimizer(const json& j, ExperimentConfig& c) {
    ObjectReader r(j, "/optimizer");
    OptimizerSpec& o = c.optimizer;
    std::string kind = optimizer_name(o.kind);
    r.text("kind", kind);
    if (kind == "adam") {
        o.kind = OptimizerKind::Adam;
    } else if (kind == "sgd") {
        // SGD defaults: lr 0.1, dropped tenfold at two thirds of the budget.
        if (o.kind != OptimizerKind::SgdMomentum) {
            o.learning_rate = 0.1;
            c.decay_fraction = 2.0 / 3.0;
        }
        o.kind = OptimizerKind::SgdMomentum;
    } else {
        throw ConfigError(r.at("kind"), "expected \"adam\" or \"sgd\"");
    }
    r.number("learning_rate", o.learning_rate);
    r.number("decay_fraction", c.decay_fraction);
    r.number("decay_factor", o.decay_factor);
    r.number("momentum", o.momentum);
    r.number("beta1", o.beta1);
    r.number("beta2", o.beta2);
    r.number("epsilon", o.epsilon);
    r.number("weight_decay", o.weight_decay);
    r.finish();
}

void read_weights(const json& j, ExperimentConfig& c) {
    ObjectReader r(j, "/loss_weights");
    LossWeights& w = c.weights;
    r.number("lambda_t", w.lambda_t);
    r.number("lambda_te", w.lambda_te);
    r.number("lambda_svat", w.lambda_svat);
    r.number("lambda_tvat", w.lambda_tvat);
    r.number("lambda_jsc", w.lambda_jsc);
    r.number("lambda_jtc", w.lambda_jtc);
    r.number("lambda_jsa", w.lambda_jsa);
    r.number("lambda_jta", w.lambda_jta);
    r.number("xi", w.xi);
    if (const json* e = r.find("eps_x")) {
        if (e->is_string() && e->get<std::string>() == "auto") {
            c.eps_x_auto = true;
        } else if (e->is_number()) {
            c.eps_x_auto = false;
            w.eps_x = e->get<double>();
        } else {
            throw ConfigError(r.at("eps_x"), "expected a number or \"auto\"");
        }
    }
    r.finish();
}

void read_curriculum(const json& j, CurriculumConfig& c) {
    ObjectReader r(j, "/curriculum");
    std::string mode = curriculum_name(c.mode);
    r.text("mode", mode);
    if (mode == "auto") c.mode = CurriculumMode::Auto;
    else if (mode == "on") c.mode = CurriculumMode::On;
    else if (mode == "off") c.mode = CurriculumMode::Off;
    else throw ConfigError(r.at("mode"), "expected \"auto\", \"on\" or \"off\"");
    r.number("ssl_start", c.ssl_start);
    r.number("pseudo_start", c.pseudo_start);
    r.count("probe_iterations", c.probe_iterations);
    r.finish();
}

json optional_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json alignment_json(const AlignmentMetrics& m) {
    json d = json::array();
    for (const auto& v : m.centroid_distance) d.push_back(v ? json(*v) : json(nullptr));
    return {{"centroid_distance", d}, {"mean_centroid_distance", optional_number(m.mean_distance)},
            {"hdiv", optional_number(m.hdiv)}};
}

std::string utc_stamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("error writing " + path.string());
}

double source_accuracy_probe(const ExperimentConfig& config, const Dataset& src, const Dataset& tgt,
                             const LossWeights& w) {
    TrainOptions probe;
    probe.iterations = config.curriculum.probe_iterations;
    probe.batch_size = config.batch_size;
    probe.eval_interval = 0;
    probe.optimizer = config.optimizer;
    probe.weights = source_only_weights(w);
    probe.seed = config.seed;
    probe.hdiv_metrics = false;
    probe.arch = config.arch;
    const RunResult r = run(probe, src, tgt.without_labels());
    return evaluate(r.params, src, Predictor::Class);
}

}  // namespace

const char* mode_name(RunMode m) {
    switch (m) {
        case RunMode::Full: return "full";
        case RunMode::SourceOnly: return "source-only";
        case RunMode::TargetOnly: return "target-only";
        case RunMode::Ablation: return "ablation";
    }
    return "?";
}

RunMode parse_mode(const std::string& text) {
    for (RunMode m : {RunMode::Full, RunMode::SourceOnly, RunMode::TargetOnly, RunMode::Ablation})
        if (text == mode_name(m)) return m;
    throw ConfigError("/mode", "unknown mode '" + text + "' (full, source-only, target-only, ablation)");
}

ShiftSpec DatasetConfig::shift() const {
    ShiftSpec s;
    s.rotation = rotation_degrees * std::numbers::pi / 180.0;
    s.translation = translation;
    s.scale = scale;
    s.permutation = permutation;
    s.noise_std = shift_noise;
    return s;
}

void ExperimentConfig::validate() const {
    const auto& d = dataset;
    if (d.generator != "moons" && d.generator != "blobs" && d.generator != "csv")
        throw ConfigError("/dataset/generator", "expected \"moons\", \"blobs\" or \"csv\"");
    if (d.generator != "csv" && d.n < 2) throw ConfigError("/dataset/n", "need at least 2 rows");
    if (!(d.noise >= 0.0)) throw ConfigError("/dataset/noise", "must be nonnegative");
    if (d.classes < 2) throw ConfigError("/dataset/classes", "need at least 2 classes");
    if (d.generator == "blobs" && !(d.separation > 0.0)) throw ConfigError("/dataset/separation", "must be positive");
    if (d.generator == "csv" && (d.source_csv.empty() || d.target_csv.empty()))
        throw ConfigError("/dataset", "csv generator needs source_csv and target_csv");
    if (d.generator != "csv") {
        const std::size_t dim = d.generator == "moons" ? 2 : d.dim;
        const std::size_t k = d.generator == "moons" ? 2 : d.classes;
        try {
            d.shift().validate(dim, k);
        } catch (const std::exception& e) {
            throw ConfigError("/dataset/shift", e.what());
        }
    }
    try {
        Arch a = arch;
        a.num_classes = 2;
        a.validate();
    } catch (const std::exception& e) {
        throw ConfigError("/arch", e.what());
    }
    try {
        optimizer.validate();
    } catch (const std::exception& e) {
        throw ConfigError("/optimizer", e.what());
    }
    if (!(decay_fraction >= 0.0 && decay_fraction <= 1.0))
        throw ConfigError("/optimizer/decay_fraction", "must be in [0, 1]");
    const std::pair<const char*, double> lambdas[] = {
        {"lambda_t", weights.lambda_t},       {"lambda_te", weights.lambda_te},   {"lambda_svat", weights.lambda_svat},
        {"lambda_tvat", weights.lambda_tvat}, {"lambda_jsc", weights.lambda_jsc}, {"lambda_jtc", weights.lambda_jtc},
        {"lambda_jsa", weights.lambda_jsa},   {"lambda_jta", weights.lambda_jta}};
    for (const auto& [name, v] : lambdas)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ConfigError(std::string("/loss_weights/") + name, "must be finite and nonnegative");
    if (!eps_x_auto && (!(weights.eps_x > 0.0) || !std::isfinite(weights.eps_x)))
        throw ConfigError("/loss_weights/eps_x", "must be positive");
    if (!(weights.xi > 0.0) || !std::isfinite(weights.xi)) throw ConfigError("/loss_weights/xi", "must be positive");
    if (batch_size == 0) throw ConfigError("/batch_size", "must be at least 1");
    if (curriculum.mode != CurriculumMode::Off) {
        try {
            Schedule{curriculum.ssl_start, curriculum.pseudo_start}.validate();
        } catch (const std::exception& e) {
            throw ConfigError("/curriculum", e.what());
        }
        if (!Schedule{curriculum.ssl_start, curriculum.pseudo_start}.enabled())
            throw ConfigError("/curriculum", "fractions are zero; set mode to \"off\" instead");
    }
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    ExperimentConfig c;
    ObjectReader r(j, "");
    if (const json* v = r.find("dataset")) read_dataset(*v, c.dataset);
    if (const json* v = r.find("arch")) read_arch(*v, c.arch);
    if (const json* v = r.find("optimizer")) read_optimizer(*v, c);
    if (const json* v = r.find("loss_weights")) read_weights(*v, c);
    if (const json* v = r.find("curriculum")) read_curriculum(*v, c.curriculum);
    r.count("iterations", c.iterations);
    r.count("batch_size", c.batch_size);
    r.count("eval_interval", c.eval_interval);
    r.count("checkpoint_interval", c.checkpoint_interval);
    r.count("seed", c.seed);
    std::string mode = mode_name(c.mode);
    r.text("mode", mode);
    c.mode = parse_mode(mode);
    r.boolean("hdiv_metrics", c.hdiv_metrics);
    r.boolean("separate_adversarial_state", c.separate_adversarial_state);
    r.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("", "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
    const auto& d = c.dataset;
    const auto& o = c.optimizer;
    const auto& w = c.weights;
    json j;
    j["dataset"] = {{"generator", d.generator},
                    {"n", d.n},
                    {"noise", d.noise},
                    {"classes", d.classes},
                    {"dim", d.dim},
                    {"separation", d.separation},
                    {"source_csv", d.source_csv},
                    {"target_csv", d.target_csv},
                    {"target_labels", d.target_labels},
                    {"standardize", d.standardize},
                    {"shift",
                     {{"rotation_degrees", d.rotation_degrees},
                      {"translation", d.translation},
                      {"scale", d.scale},
                      {"permutation", d.permutation},
                      {"noise_std", d.shift_noise}}}};
    j["arch"] = {{"encoder_widths", c.arch.encoder_widths},
                 {"leaky_slope", c.arch.leaky_slope},
                 {"encoder_output_activation", c.arch.encoder_output_activation},
                 {"dropout", c.arch.dropout}};
    j["optimizer"] = {{"kind", optimizer_name(o.kind)},   {"learning_rate", o.learning_rate},
                      {"decay_fraction", c.decay_fraction}, {"decay_factor", o.decay_factor},
                      {"momentum", o.momentum},             {"beta1", o.beta1},
                      {"beta2", o.beta2},                   {"epsilon", o.epsilon},
                      {"weight_decay", o.weight_decay}};
    j["loss_weights"] = {{"lambda_t", w.lambda_t},       {"lambda_te", w.lambda_te},
                         {"lambda_svat", w.lambda_svat}, {"lambda_tvat", w.lambda_tvat},
                         {"lambda_jsc", w.lambda_jsc},   {"lambda_jtc", w.lambda_jtc},
                         {"lambda_jsa", w.lambda_jsa},   {"lambda_jta", w.lambda_jta},
                         {"eps_x", c.eps_x_auto ? json("auto") : json(w.eps_x)},
                         {"xi", w.xi}};
    j["curriculum"] = {{"mode", curriculum_name(c.curriculum.mode)},
                       {"ssl_start", c.curriculum.ssl_start},
                       {"pseudo_start", c.curriculum.pseudo_start},
                       {"probe_iterations", c.curriculum.probe_iterations}};
    j["iterations"] = c.iterations;
    j["batch_size"] = c.batch_size;
    j["eval_interval"] = c.eval_interval;
    j["checkpoint_interval"] = c.checkpoint_interval;
    j["seed"] = c.seed;
    j["mode"] = mode_name(c.mode);
    j["hdiv_metrics"] = c.hdiv_metrics;
    j["separate_adversarial_state"] = c.separate_adversarial_state;
    return j.dump(2) + "\n";
}

std::string config_digest(const ExperimentConfig& config) { return Fnv1a().text(serialize_config(config)).hex(); }

Domains make_datasets(const ExperimentConfig& config) {
    const auto& d = config.dataset;
    Domains out;
    if (d.generator == "csv") {
        out.source = load_csv(d.source_csv, true, d.classes, Domain::Source);
        out.target = load_csv(d.target_csv, d.target_labels, d.classes, Domain::Target);
    } else {
        auto gen = [&](std::uint64_t seed) {
            return d.generator == "moons" ? gen_moons(d.n, d.noise, seed)
                                          : gen_blobs(d.n, d.classes, d.dim, d.separation, seed, d.noise);
        };
        out.source = gen(config.seed);
        out.target = apply_shift(gen(config.seed + 1), d.shift(), config.seed + 2);
    }
    if (d.standardize) {
        out.source = standardize(out.source);
        out.target = standardize(out.target);
    }
    out.source.domain = Domain::Source;
    out.target.domain = Domain::Target;
    out.source.name = "source";
    out.target.name = "target";
    return out;
}

LossWeights source_only_weights(LossWeights w) {
    w.lambda_t = 0.0;
    w.lambda_te = 0.0;
    w.lambda_tvat = 0.0;
    w.lambda_jtc = 0.0;
    w.lambda_jsa = 0.0;
    w.lambda_jta = 0.0;
    return w;
}

AlignmentMetrics alignment_metrics(const ParamSet& params, const Dataset& src, const Dataset& tgt,
                                   std::uint64_t seed) {
    if (!src.labels || !tgt.labels) throw std::invalid_argument("alignment metrics need labels in both domains");
    const Tensor zs = encode(params, src.features), zt = encode(params, tgt.features);
    const std::size_t k = std::max(src.num_classes(), tgt.num_classes()), d = zs.cols();
    auto means = [&](const Tensor& z, const std::vector<std::size_t>& y) {
        std::vector<std::vector<double>> m(k, std::vector<double>(d, 0.0));
        std::vector<std::size_t> n(k, 0);
        for (std::size_t r = 0; r < y.size(); ++r) {
            ++n[y[r]];
            for (std::size_t j = 0; j < d; ++j) m[y[r]][j] += z(r, j);
        }
        for (std::size_t c = 0; c < k; ++c)
            for (auto& x : m[c]) x /= n[c] ? double(n[c]) : 1.0;
        return std::pair{m, n};
    };
    const auto [ms, ns] = means(zs, src.class_indices());
    const auto [mt, nt] = means(zt, tgt.class_indices());
    AlignmentMetrics out;
    double total = 0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (!ns[c] || !nt[c]) {
            out.centroid_distance.push_back(std::nullopt);
            continue;
        }
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) s += (ms[c][j] - mt[c][j]) * (ms[c][j] - mt[c][j]);
        out.centroid_distance.push_back(std::sqrt(s));
        total += std::sqrt(s);
        ++present;
    }
    out.mean_distance = present ? total / double(present) : kNaN;
    out.hdiv = theory::h_divergence_proxy(zs, zt, seed);
    return out;
}

Tensor Pca::project(const Tensor& x) const {
    const std::size_t k = components.rows(), d = mean.size();
    if (x.cols() != d) throw std::invalid_argument("PCA dimension mismatch");
    Tensor out({x.rows(), k});
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0;
            for (std::size_t j = 0; j < d; ++j) s += (x(r, j) - mean[j]) * components(c, j);
            out(r, c) = s;
        }
    return out;
}

Pca fit_pca(const Tensor& x, std::size_t k) {
    const std::size_t n = x.rows(), d = x.cols();
    if (n == 0 || k == 0) throw std::invalid_argument("PCA needs rows and at least one component");
    Eigen::MatrixXd m(n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) m(Eigen::Index(r), Eigen::Index(j)) = x(r, j);
    const Eigen::RowVectorXd mu = m.colwise().mean();
    m.rowwise() -= mu;
    const Eigen::MatrixXd cov = (m.transpose() * m) / double(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw std::runtime_error("PCA eigen-decomposition failed");

    Pca p;
    p.mean.assign(mu.data(), mu.data() + d);
    p.components = Tensor({k, d});
    // Eigenvalues come back ascending; components beyond d stay zero.
    for (std::size_t c = 0; c < std::min(k, d); ++c) {
        Eigen::VectorXd v = eig.eigenvectors().col(Eigen::Index(d - 1 - c));
        Eigen::Index big;
        v.cwiseAbs().maxCoeff(&big);
        if (v(big) < 0) v = -v;
        for (std::size_t j = 0; j < d; ++j) p.components(c, j) = v(Eigen::Index(j));
    }
    return p;
}

void export_features(const ParamSet& params, const Dataset& src, const Dataset& tgt,
                     const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const Tensor zs = encode(params, src.features), zt = encode(params, tgt.features);
    const std::size_t d = zs.cols();
    Tensor pooled({zs.rows() + zt.rows(), d});
    std::copy(zs.data().begin(), zs.data().end(), pooled.data().begin());
    std::copy(zt.data().begin(), zt.data().end(), pooled.data().begin() + zs.size());
    const Tensor proj = fit_pca(pooled, 2).project(pooled);

    std::ofstream feats(dir / "features.csv"), pca(dir / "pca.csv");
    if (!feats || !pca) throw std::runtime_error("cannot write feature exports to " + dir.string());
    feats << "domain,label,predicted";
    for (std::size_t j = 0; j < d; ++j) feats << ",z" << j;
    feats << '\n';
    pca << "domain,label,predicted,pc1,pc2\n";
    char buf[32];
    auto cell = [&](std::ostream& out, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
    };
    std::size_t offset = 0;
    for (const auto* part : {&src, &tgt}) {
        const Tensor& z = part == &src ? zs : zt;
        const Prediction p = class_predict(params, z);
        std::vector<std::size_t> labels;
        if (part->labels) labels = part->class_indices();
        for (std::size_t r = 0; r < part->size(); ++r) {
            std::string prefix = std::string(domain_name(part->domain)) + ',' +
                                 (labels.empty() ? std::string() : std::to_string(labels[r])) + ',' +
                                 std::to_string(argmax(p.probs.row(r)));
            feats << prefix;
            for (std::size_t j = 0; j < d; ++j) cell(feats, z(r, j));
            feats << '\n';
            pca << prefix;
            cell(pca, proj(offset + r, 0));
            cell(pca, proj(offset + r, 1));
            pca << '\n';
        }
        offset += part->size();
    }
    if (!feats || !pca) throw std::runtime_error("error writing feature exports");
}

std::string report_json(const Report& r) {
    json j;
    j["config_digest"] = r.config_digest;
    j["mode"] = mode_name(r.mode);
    j["final"] = {{"source_accuracy", optional_number(r.source_accuracy)},
                  {"target_accuracy_class", optional_number(r.target_accuracy_class)},
                  {"target_accuracy_joint", optional_number(r.target_accuracy_joint)}};
    j["eps_x"] = r.eps_x;
    j["curriculum"] = r.curriculum;
    j["probe_accuracy"] = r.probe_accuracy >= 0 ? json(r.probe_accuracy) : json(nullptr);
    j["alignment_before"] = alignment_json(r.before);
    j["alignment_after"] = alignment_json(r.after);
    j["history_path"] = r.history_path.string();
    j["wall_clock_seconds"] = r.wall_clock_seconds;
    return j.dump(2) + "\n";
}

std::filesystem::path default_output_root() {
    const char* env = std::getenv("RCA_OUTPUT_ROOT");
    return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

std::filesystem::path create_run_directory(const std::filesystem::path& root, const std::string& label) {
    std::filesystem::create_directories(root);
    const std::string base = utc_stamp() + "-" + label;
    for (int n = 0;; ++n) {
        const auto dir = root / (n ? base + "-" + std::to_string(n) : base);
        if (std::filesystem::create_directory(dir)) return dir;
    }
}

RunArtifacts run_experiment(const ExperimentConfig& config, const std::filesystem::path& root) {
    const auto t0 = std::chrono::steady_clock::now();
    config.validate();
    if (config.mode == RunMode::Ablation) throw ConfigError("/mode", "ablation runs go through run_ablations");

    const Domains data = make_datasets(config);
    Dataset train_src = data.source, train_tgt = data.target, eval_tgt = data.target;
    LossWeights w = config.weights;
    if (config.mode == RunMode::SourceOnly) {
        w = source_only_weights(w);
    } else if (config.mode == RunMode::TargetOnly) {
        if (!data.target.labels) throw ConfigError("/mode", "target-only needs target labels");
        train_src = data.target;
        train_src.domain = Domain::Source;
        w = source_only_weights(w);
    }
    Report report;
    report.config_digest = config_digest(config);
    report.mode = config.mode;
    if (config.eps_x_auto) w.eps_x = 0.5 * median_nn_distance(train_src.features);
    report.eps_x = w.eps_x;

    Schedule schedule = Schedule::disabled();
    if (config.curriculum.mode == CurriculumMode::On) {
        schedule = {config.curriculum.ssl_start, config.curriculum.pseudo_start};
    } else if (config.curriculum.mode == CurriculumMode::Auto && config.mode == RunMode::Full) {
        report.probe_accuracy = source_accuracy_probe(config, train_src, train_tgt, w);
        if (report.probe_accuracy < 1.5 / double(train_src.num_classes()))
            schedule = {config.curriculum.ssl_start, config.curriculum.pseudo_start};
    }
    report.curriculum = schedule.enabled();

    const auto dir = create_run_directory(root, std::string(mode_name(config.mode)) + "-" +
                                                    report.config_digest.substr(0, 8));
    report.directory = dir;
    write_text(dir / "config.json", serialize_config(config));

    TrainOptions opt;
    opt.iterations = config.iterations;
    opt.batch_size = config.batch_size;
    opt.eval_interval = config.eval_interval;
    opt.optimizer = config.optimizer;
    opt.optimizer.decay_step =
        static_cast<std::size_t>(std::llround(config.decay_fraction * static_cast<double>(config.iterations)));
    opt.weights = w;
    opt.schedule = schedule;
    opt.seed = config.seed;
    opt.hdiv_metrics = config.hdiv_metrics;
    opt.separate_adversarial_state = config.separate_adversarial_state;
    opt.arch = config.arch;
    opt.checkpoint_interval = config.checkpoint_interval;
    if (opt.checkpoint_interval) {
        opt.checkpoint_dir = dir / "checkpoints";
        std::filesystem::create_directories(opt.checkpoint_dir);
    }

    report.history_path = dir / "history.csv";
    std::ofstream history(report.history_path, std::ios::binary);
    if (!history) throw std::runtime_error("cannot write " + report.history_path.string());
    RunResult result = run(opt, train_src, train_tgt, &history);
    history.close();

    report.source_accuracy = evaluate(result.params, train_src, Predictor::Class);
    report.target_accuracy_class = eval_tgt.labels ? evaluate(result.params, eval_tgt, Predictor::Class) : kNaN;
    report.target_accuracy_joint = eval_tgt.labels ? evaluate(result.params, eval_tgt, Predictor::Joint) : kNaN;
    if (data.source.labels && data.target.labels) {
        report.before = alignment_metrics(result.initial, data.source, data.target, config.seed + 101);
        report.after = alignment_metrics(result.params, data.source, data.target, config.seed + 101);
    } else {
        report.before.mean_distance = report.after.mean_distance = kNaN;
        report.before.hdiv = report.after.hdiv = kNaN;
    }
    save_params(result.params, dir / "params.bin");
    report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(dir / "report.json", report_json(report));
    return {report, std::move(result.params)};
}

std::vector<std::pair<std::string, LossWeights>> ablation_weights(const LossWeights& base) {
    std::vector<std::pair<std::string, LossWeights>> rows;
    auto row = [&](const char* name, auto&& edit) {
        LossWeights w = base;
        edit(w);
        rows.emplace_back(name, w);
    };
    row("without VAT", [](LossWeights& w) { w.lambda_svat = w.lambda_tvat = 0.0; });
    row("without EntMin and VAT", [](LossWeights& w) { w.lambda_te = w.lambda_svat = w.lambda_tvat = 0.0; });
    row("without source alignment", [](LossWeights& w) { w.lambda_jsa = 0.0; });
    row("without target alignment", [](LossWeights& w) { w.lambda_jta = 0.0; });
    row("without both alignments", [](LossWeights& w) { w.lambda_jsa = w.lambda_jta = 0.0; });
    row("source-only", [](LossWeights& w) { w = source_only_weights(w); });
    row("full", [](LossWeights&) {});
    return rows;
}

std::vector<AblationRow> run_ablations(const ExperimentConfig& config, const std::filesystem::path& root,
                                       std::filesystem::path* table_path) {
    config.validate();
    const auto dir = create_run_directory(root, "ablation-" + config_digest(config).substr(0, 8));
    std::vector<AblationRow> rows;
    for (const auto& [name, w] : ablation_weights(config.weights)) {
        ExperimentConfig c = config;
        c.mode = name == "source-only" ? RunMode::SourceOnly : RunMode::Full;
        c.weights = name == "source-only" ? config.weights : w;
        rows.push_back({name, w, run_experiment(c, dir).report});
    }

    std::ostringstream csv;
    csv << "row,lambda_t,lambda_te,lambda_svat,lambda_tvat,lambda_jsc,lambda_jtc,lambda_jsa,lambda_jta,"
           "target_acc_class,target_acc_joint,source_acc,hdiv_after,mean_centroid_distance,run_dir\n";
    char buf[64];
    auto cell = [&](double v) {
        csv << ',';
        if (std::isfinite(v)) {
            std::snprintf(buf, sizeof buf, "%.10g", v);
            csv << buf;
        }
    };
    for (const auto& r : rows) {
        const auto& w = r.weights;
        csv << r.name;
        for (double v : {w.lambda_t, w.lambda_te, w.lambda_svat, w.lambda_tvat, w.lambda_jsc, w.lambda_jtc,
                         w.lambda_jsa, w.lambda_jta, r.report.target_accuracy_class, r.report.target_accuracy_joint,
                         r.report.source_accuracy, r.report.after.hdiv, r.report.after.mean_distance})
            cell(v);
        csv << ',' << r.report.directory.filename().string() << '\n';
    }
    write_text(dir / "ablations.csv", csv.str());
    if (table_path) *table_path = dir / "ablations.csv";
    return rows;
}

}  // namespace rca
