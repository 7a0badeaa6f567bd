#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rca/data.hpp"
#include "rca/losses.hpp"
#include "rca/networks.hpp"
#include "rca/optim.hpp"
#include "rca/trainer.hpp"

namespace rca {

/// Bad configuration; `path` points into the JSON document ("/loss_weights/lambda_t").
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

enum class RunMode { Full, SourceOnly, TargetOnly, Ablation };
enum class CurriculumMode { Auto, On, Off };

const char* mode_name(RunMode m);
RunMode parse_mode(const std::string& text);

struct DatasetConfig {
    std::string generator = "moons";  // moons, blobs or csv
    std::size_t n = 1000;             // rows per domain
    double noise = 0.1;
    std::size_t classes = 2;          // blobs
    std::size_t dim = 2;              // blobs
    double separation = 4.0;          // blobs
    std::string source_csv;
    std::string target_csv;
    bool target_labels = true;        // csv target carries a label column
    bool standardize = false;         // per-sample standardisation of both domains
    double rotation_degrees = 35.0;
    std::vector<double> translation;
    std::vector<double> scale;
    std::vector<std::size_t> permutation;
    double shift_noise = 0.0;

    ShiftSpec shift() const;
    friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct CurriculumConfig {
    CurriculumMode mode = CurriculumMode::Auto;
    double ssl_start = 1.0 / 15.0;
    double pseudo_start = 2.0 / 15.0;
    std::size_t probe_iterations = 200;
    friend bool operator==(const CurriculumConfig&, const CurriculumConfig&) = default;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    Arch arch;  // input_dim and num_classes come from the data
    OptimizerSpec optimizer;
    // Fraction of the budget after which the learning rate is multiplied by
    // optimizer.decay_factor; 0 disables the decay.
    double decay_fraction = 0.0;
    LossWeights weights;
    bool eps_x_auto = true;  // 0.5 x median nearest-neighbour distance of the source
    std::size_t iterations = 6000;
    std::size_t batch_size = 64;
    std::size_t eval_interval = 500;
    std::size_t checkpoint_interval = 0;
    CurriculumConfig curriculum;
    std::uint64_t seed = 0;
    RunMode mode = RunMode::Full;
    bool hdiv_metrics = true;
    bool separate_adversarial_state = false;

    void validate() const;
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every field written explicitly; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);
/// FNV-1a of the serialised config.
std::string config_digest(const ExperimentConfig& config);

struct Domains {
    Dataset source;
    Dataset target;
};

/// Datasets described by the config; generators use seed and seed + 1.
Domains make_datasets(const ExperimentConfig& config);

/// Configured weights with every target-dependent and adversarial term zeroed.
LossWeights source_only_weights(LossWeights w);

struct AlignmentMetrics {
    std::vector<std::optional<double>> centroid_distance;  // per class; empty when the class is absent
    double mean_distance = 0;                              // over the classes present in both domains
    double hdiv = 0;
};

/// Per-class distance between source and target feature means, and the
/// H-divergence proxy on the features. Target labels are read for grouping only.
AlignmentMetrics alignment_metrics(const ParamSet& params, const Dataset& src, const Dataset& tgt,
                                   std::uint64_t seed);

struct Pca {
    std::vector<double> mean;
    Tensor components;  // k x d, unit rows, largest-magnitude entry positive

    Tensor project(const Tensor& x) const;
};

/// Principal axes of the rows of x, sorted by decreasing variance.
Pca fit_pca(const Tensor& x, std::size_t k = 2);

/// features.csv: domain, label, predicted class, encoder outputs.
/// pca.csv: domain, label, predicted class, 2 principal coordinates fitted on
/// the pooled features. Unlabeled rows leave the label empty.
void export_features(const ParamSet& params, const Dataset& src, const Dataset& tgt,
                     const std::filesystem::path& dir);

struct Report {
    std::string config_digest;
    RunMode mode = RunMode::Full;
    double source_accuracy = 0;
    double target_accuracy_class = 0;
    double target_accuracy_joint = 0;
    double eps_x = 0;
    bool curriculum = false;
    double probe_accuracy = -1;  // -1 when no probe ran
    AlignmentMetrics before;
    AlignmentMetrics after;
    std::filesystem::path directory;
    std::filesystem::path history_path;
    double wall_clock_seconds = 0;
};

std::string report_json(const Report& report);

/// Output root: $RCA_OUTPUT_ROOT if set, else "runs".
std::filesystem::path default_output_root();
/// Fresh "<root>/<UTC timestamp>-<label>[-n]" directory; never reuses one.
std::filesystem::path create_run_directory(const std::filesystem::path& root, const std::string& label);

struct RunArtifacts {
    Report report;
    ParamSet params;
};

/// Runs one training configuration (mode Full, SourceOnly or TargetOnly) and
/// writes report.json, history.csv and params.bin into a new directory under
/// `root`.
RunArtifacts run_experiment(const ExperimentConfig& config, const std::filesystem::path& root);

struct AblationRow {
    std::string name;
    LossWeights weights;
    Report report;
};

/// Weights for every ablation row, in table order.
std::vector<std::pair<std::string, LossWeights>> ablation_weights(const LossWeights& base);

/// Every ablation row, then source-only, then the full method, same seed.
/// Writes ablations.csv plus one run directory per row under a new directory.
std::vector<AblationRow> run_ablations(const ExperimentConfig& config, const std::filesystem::path& root,
                                       std::filesystem::path* table_path = nullptr);

}  // namespace rca
