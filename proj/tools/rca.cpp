// Command-line front end: gen, train, eval, ablate, oracle, export.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rca/experiment.hpp"
#include "rca/theory.hpp"

namespace fs = std::filesystem;
using namespace rca;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string mode;
};

ExperimentConfig resolve_config(const Common& c) {
    ExperimentConfig cfg = c.config_path.empty() ? parse_config("{}") : load_config(c.config_path);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.mode.empty()) cfg.mode = parse_mode(c.mode);
    cfg.validate();
    return cfg;
}

fs::path output_root(const Common& c) { return c.out.empty() ? default_output_root() : fs::path(c.out); }

void print_report(const Report& r) {
    std::printf("%-12s target acc (class) %.4f  (joint) %.4f  source acc %.4f  hdiv %.3f -> %.3f\n",
                mode_name(r.mode), r.target_accuracy_class, r.target_accuracy_joint, r.source_accuracy,
                r.before.hdiv, r.after.hdiv);
    std::printf("report: %s\n", (r.directory / "report.json").string().c_str());
}

int cmd_gen(const Common& c) {
    const ExperimentConfig cfg = resolve_config(c);
    const Domains d = make_datasets(cfg);
    const fs::path dir = create_run_directory(output_root(c), "data-" + config_digest(cfg).substr(0, 8));
    save_csv(d.source, dir / "source.csv");
    save_csv(d.target, dir / "target.csv");
    std::printf("%s\n%s\n", (dir / "source.csv").string().c_str(), (dir / "target.csv").string().c_str());
    return 0;
}

int cmd_train(const Common& c) {
    const ExperimentConfig cfg = resolve_config(c);
    if (cfg.mode == RunMode::Ablation) {
        std::cerr << "mode 'ablation' runs through the ablate verb\n";
        return 1;
    }
    print_report(run_experiment(cfg, output_root(c)).report);
    return 0;
}

int cmd_ablate(const Common& c) {
    const ExperimentConfig cfg = resolve_config(c);
    fs::path table;
    const auto rows = run_ablations(cfg, output_root(c), &table);
    double source_only = 0, full = 0;
    for (const auto& r : rows) {
        std::printf("%-26s %.4f\n", r.name.c_str(), r.report.target_accuracy_class);
        if (r.name == "source-only") source_only = r.report.target_accuracy_class;
        if (r.name == "full") full = r.report.target_accuracy_class;
    }
    std::size_t between = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        const double a = rows[i].report.target_accuracy_class;
        if (a >= source_only && a <= full) ++between;
    }
    std::printf("rows between source-only and full: %zu of 5\n", between);
    std::printf("table: %s\n", table.string().c_str());
    return 0;
}

int cmd_eval(const Common& c, const std::string& params_path, const std::string& data_path) {
    const ParamSet params = load_params(params_path);
    Dataset ds;
    if (data_path.empty()) {
        ds = make_datasets(resolve_config(c)).target;
    } else {
        ds = load_csv(data_path, true, params.arch.num_classes, Domain::Target);
    }
    std::printf("accuracy (class) %.6f\naccuracy (joint) %.6f\n", evaluate(params, ds, Predictor::Class),
                evaluate(params, ds, Predictor::Joint));
    return 0;
}

int cmd_oracle(const Common& c) {
    const std::uint64_t seed = c.seed.value_or(0);
    const auto records = theory::run_oracle_suite(seed);
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    bool ok = true;
    for (const auto& r : records) {
        out.push_back({{"check", r.check},
                       {"inputs_digest", r.inputs_digest},
                       {"value", r.value},
                       {"tolerance", r.tolerance},
                       {"pass", r.passed}});
        ok = ok && r.passed;
    }
    const std::string text = out.dump(2) + "\n";
    if (!c.out.empty()) {
        const fs::path dir = create_run_directory(c.out, "oracle");
        std::ofstream(dir / "oracles.json") << text;
        std::fprintf(stderr, "wrote %s\n", (dir / "oracles.json").string().c_str());
    }
    std::fputs(text.c_str(), stdout);
    return ok ? 0 : 2;
}

int cmd_export(const Common& c, const std::string& params_path) {
    const ExperimentConfig cfg = resolve_config(c);
    const ParamSet params = load_params(params_path);
    const Domains d = make_datasets(cfg);
    const fs::path dir = create_run_directory(output_root(c), "export");
    export_features(params, d.source, d.target, dir);
    std::printf("%s\n%s\n", (dir / "features.csv").string().c_str(), (dir / "pca.csv").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional domain alignment toolkit"};
    app.require_subcommand(1);
    Common common;
    std::string params_path, data_path;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON experiment config")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "override the config seed");
        sub->add_option("--out", common.out, "output root (default $RCA_OUTPUT_ROOT or ./runs)");
        sub->add_option("--mode", common.mode, "full, source-only, target-only or ablation");
    };
    auto* gen = app.add_subcommand("gen", "write the configured source and target datasets as CSV");
    auto* train = app.add_subcommand("train", "train one configuration and write a report");
    auto* eval = app.add_subcommand("eval", "accuracy of saved parameters");
    auto* ablate = app.add_subcommand("ablate", "run the ablation table");
    auto* oracle = app.add_subcommand("oracle", "run the theory oracle suite");
    auto* exp = app.add_subcommand("export", "export encoder features and a PCA projection");
    for (auto* s : {gen, train, eval, ablate, oracle, exp}) add_common(s);
    eval->add_option("--params", params_path, "parameter file")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", data_path, "labeled CSV (default: the configured target domain)");
    exp->add_option("--params", params_path, "parameter file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_gen(common);
        if (*train) return cmd_train(common);
        if (*eval) return cmd_eval(common, params_path, data_path);
        if (*ablate) return cmd_ablate(common);
        if (*oracle) return cmd_oracle(common);
        if (*exp) return cmd_export(common, params_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
