#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include "rca/data.hpp"
#include "rca/losses.hpp"
#include "rca/networks.hpp"
#include "rca/optim.hpp"

namespace rca {

/// Curriculum phase boundaries as fractions of the total iteration budget.
/// Before ssl_start only source terms (L_sc, L_jsc, L_jsa) run; from
/// ssl_start lambda_t, lambda_svat and lambda_tvat come back; from
/// pseudo_start every configured weight is active. Both zero disables it.
struct Schedule {
    double ssl_start = 0.0;
    double pseudo_start = 0.0;

    static Schedule disabled() { return {}; }
    static Schedule standard() { return {1.0 / 15.0, 2.0 / 15.0}; }
    bool enabled() const { return !(ssl_start == 0.0 && pseudo_start == 0.0); }
    void validate() const;
    friend bool operator==(const Schedule&, const Schedule&) = default;
};

LossWeights curriculum_gate(std::size_t iteration, std::size_t total_iterations, const Schedule& schedule,
                            const LossWeights& configured);

enum class Predictor { Class, Joint };

/// Fraction of rows whose argmax matches the label. The joint predictor's
/// 2K-way argmax is folded to a class by taking it modulo K.
double evaluate(const ParamSet& params, const Dataset& dataset, Predictor which);

struct TrainState {
    ParamSet params;
    OptimizerSpec optimizer;
    std::array<GroupOptimizer, 3> group_state;  // indexed by ParamGroup
    // Present when phase 2 keeps its own encoder state.
    std::optional<GroupOptimizer> adversarial_state;
    LossWeights weights;
    Schedule schedule;
    std::size_t iteration = 0;
    std::size_t total_iterations = 1;
    std::mt19937_64 rng;

    TrainState(ParamSet params, const OptimizerSpec& optimizer, const LossWeights& weights, const Schedule& schedule,
               std::size_t total_iterations, std::uint64_t seed, bool separate_adversarial_state = false);
    GroupOptimizer& state(ParamGroup g) { return group_state[static_cast<std::size_t>(g)]; }
};

/// Loss values seen by one step; terms that were not built are NaN.
struct TermValues {
    double sc, svat, jsc, te, tvat, jtc, jsa, jta;
    double total, adversarial;
};

/// Which part of the phase-1 objective is back-propagated.
enum class Phase1Terms {
    All,
    ClassOnly,  // L_sc, L_svat, L_te, L_tvat -> encoder and class head
    JointOnly,  // L_jsc, L_jtc -> joint head
};

struct Phase1Result {
    TermValues terms;
    ParamSet gradients;
    std::array<bool, 3> updated{};  // indexed by ParamGroup
};

struct Phase2Result {
    double jsa = 0, jta = 0, total = 0;
    bool updated = false;
};

/// Minimise L = L_s + lambda_t L_t once. Encoder and class head follow the
/// class terms; the joint head follows L_jsc and L_jtc, which reach it
/// through stop_gradient(z).
Phase1Result phase1(TrainState& state, const Dataset& src_batch, const Dataset& tgt_batch,
                    Phase1Terms terms = Phase1Terms::All);
/// Minimise L_adv once, updating the encoder only. Skipped when both
/// alignment weights are zero.
Phase2Result phase2(TrainState& state, const Dataset& src_batch, const Dataset& tgt_batch);

/// Phase 1 then phase 2 on the same pair of batches, then iteration += 1.
TermValues step(TrainState& state, const Dataset& src_batch, const Dataset& tgt_batch);

struct MetricsRow {
    std::size_t iteration = 0;
    TermValues mean_terms{};  // averaged over the steps since the previous row
    double source_accuracy = 0;
    double target_accuracy_class = 0;
    double target_accuracy_joint = 0;
    double hdiv = 0;
};

struct TrainOptions {
    std::size_t iterations = 6000;
    std::size_t batch_size = 64;
    std::size_t eval_interval = 500;
    OptimizerSpec optimizer;
    LossWeights weights;
    Schedule schedule = Schedule::disabled();
    std::uint64_t seed = 0;
    bool hdiv_metrics = true;
    bool separate_adversarial_state = false;
    Arch arch;  // input_dim and num_classes are taken from the data
    std::size_t checkpoint_interval = 0;
    std::filesystem::path checkpoint_dir;
};

struct RunResult {
    ParamSet initial;
    ParamSet params;
    std::vector<MetricsRow> history;
};

/// Alternating training. Target labels are read by evaluation only.
/// `history_csv`, when given, receives the header and one line per row as
/// they are produced.
RunResult run(const TrainOptions& options, const Dataset& src, const Dataset& tgt,
              std::ostream* history_csv = nullptr);

void write_history_header(std::ostream& out);
void write_history_row(std::ostream& out, const MetricsRow& row);

}  // namespace rca
