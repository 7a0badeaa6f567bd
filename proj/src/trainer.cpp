#include "rca/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

#include "rca/theory.hpp"

namespace rca {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t group_index(ParamGroup g) { return static_cast<std::size_t>(g); }

double value_or_nan(const std::optional<ad::Var>& v) { return v ? v->value().item() : kNaN; }

void require_finite(double value, const char* term, std::size_t iteration) {
    if (!std::isfinite(value))
        throw std::runtime_error(std::string("non-finite ") + term + " at iteration " + std::to_string(iteration));
}

bool joint_head_participates(const LossWeights& w) { return w.lambda_jsc > 0.0 || w.lambda_t * w.lambda_jtc > 0.0; }

std::size_t boundary(double fraction, std::size_t total) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
}

}  // namespace

void Schedule::validate() const {
    if (!enabled()) return;
    if (!(0.0 < ssl_start && ssl_start < pseudo_start && pseudo_start < 1.0))
        throw std::invalid_argument("curriculum fractions must satisfy 0 < ssl_start < pseudo_start < 1");
}

LossWeights curriculum_gate(std::size_t iteration, std::size_t total_iterations, const Schedule& schedule,
                            const LossWeights& configured) {
    schedule.validate();
    if (iteration >= total_iterations) throw std::invalid_argument("iteration outside the training budget");
    if (!schedule.enabled()) return configured;
    LossWeights w = configured;
    if (iteration < boundary(schedule.pseudo_start, total_iterations)) {
        w.lambda_jtc = 0.0;
        w.lambda_jta = 0.0;
    }
    if (iteration < boundary(schedule.ssl_start, total_iterations)) {
        w.lambda_t = 0.0;
        w.lambda_svat = 0.0;
        w.lambda_tvat = 0.0;
    }
    return w;
}

double evaluate(const ParamSet& params, const Dataset& dataset, Predictor which) {
    if (!dataset.labels) throw std::invalid_argument("evaluate needs a labeled dataset");
    const Tensor z = encode(params, dataset.features);
    const Prediction p = which == Predictor::Class ? class_predict(params, z) : joint_predict(params, z);
    const std::size_t k = params.arch.num_classes;
    const auto truth = dataset.class_indices();
    std::size_t correct = 0;
    for (std::size_t r = 0; r < dataset.size(); ++r)
        if (argmax(p.probs.row(r)) % k == truth[r]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

TrainState::TrainState(ParamSet p, const OptimizerSpec& opt, const LossWeights& w, const Schedule& s,
                       std::size_t total, std::uint64_t seed, bool separate_adversarial_state)
    : params(std::move(p)), optimizer(opt), weights(w), schedule(s), total_iterations(total), rng(seed) {
    optimizer.validate();
    schedule.validate();
    if (total_iterations == 0) throw std::invalid_argument("training budget must be positive");
    for (auto g : kAllGroups) state(g) = GroupOptimizer(optimizer, params.group(g));
    if (separate_adversarial_state) adversarial_state = GroupOptimizer(optimizer, params.encoder);
}

Phase1Result phase1(TrainState& state, const Dataset& src_batch, const Dataset& tgt_batch, Phase1Terms terms) {
    if (!src_batch.labels) throw std::invalid_argument("phase 1 needs source labels");
    const LossWeights w = curriculum_gate(state.iteration, state.total_iterations, state.schedule, state.weights);

    ad::Tape tape;
    const BoundParams bound = bind(tape, state.params, GroupMask{});
    GraphContext ctx;
    ctx.params = &state.params;
    ctx.bound = &bound;
    ctx.vat_rng = &state.rng;
    ctx.dropout_rng = &state.rng;

    Phase1Result result;
    ad::Var objective;
    try {
        const SourceTerms s = build_source_terms(ctx, tape.constant(src_batch.features), *src_batch.labels, w);
        const TargetTerms t = build_target_terms(ctx, tape.constant(tgt_batch.features), w);
        ad::Var class_total = tape.add(s.class_part, tape.scale(t.class_part, w.lambda_t));
        ad::Var joint_total = tape.add(s.joint_part, tape.scale(t.joint_part, w.lambda_t));
        ad::Var total = tape.add(class_total, joint_total);
        result.terms = {s.sc.value().item(), value_or_nan(s.svat), s.jsc.value().item(),
                        t.te.value().item(), value_or_nan(t.tvat), t.jtc.value().item(),
                        kNaN, kNaN, total.value().item(), kNaN};
        objective = terms == Phase1Terms::All ? total : terms == Phase1Terms::ClassOnly ? class_total : joint_total;
    } catch (const ad::NumericError& e) {
        throw std::runtime_error("phase 1 at iteration " + std::to_string(state.iteration) + ": " + e.what());
    }
    const auto& tv = result.terms;
    require_finite(tv.sc, "L_sc", state.iteration);
    require_finite(tv.jsc, "L_jsc", state.iteration);
    require_finite(tv.te, "L_te", state.iteration);
    require_finite(tv.jtc, "L_jtc", state.iteration);
    if (w.lambda_svat > 0.0) require_finite(tv.svat, "L_svat", state.iteration);
    if (w.lambda_tvat > 0.0) require_finite(tv.tvat, "L_tvat", state.iteration);

    result.gradients = collect_gradients(tape.backward(objective), bound, state.params, GroupMask{});

    const bool class_terms = terms != Phase1Terms::JointOnly;
    const bool joint_terms = terms != Phase1Terms::ClassOnly && joint_head_participates(w);
    result.updated[group_index(ParamGroup::Encoder)] = class_terms;
    result.updated[group_index(ParamGroup::ClassHead)] = class_terms;
    result.updated[group_index(ParamGroup::JointHead)] = joint_terms;

    const double lr = state.optimizer.learning_rate_at(state.iteration);
    for (auto g : kAllGroups)
        if (result.updated[group_index(g)]) state.state(g).update(state.params.group(g), result.gradients.group(g), lr);
    return result;
}

Phase2Result phase2(TrainState& state, const Dataset& src_batch, const Dataset& tgt_batch) {
    if (!src_batch.labels) throw std::invalid_argument("phase 2 needs source labels");
    const LossWeights w = curriculum_gate(state.iteration, state.total_iterations, state.schedule, state.weights);
    Phase2Result result;
    if (!(w.lambda_jsa > 0.0 || w.lambda_jta > 0.0)) {
        result.jsa = result.jta = result.total = kNaN;
        return result;
    }

    const Tensor pseudo = pseudo_labels(class_predict(state.params, encode(state.params, tgt_batch.features)).probs);
    ad::Tape tape;
    const GroupMask trainable = GroupMask::only(ParamGroup::Encoder);
    const BoundParams bound = bind(tape, state.params, trainable);
    GraphContext ctx;
    ctx.params = &state.params;
    ctx.bound = &bound;
    ctx.dropout_rng = &state.rng;
    AdversarialTerms adv;
    try {
        adv = build_adversarial_terms(ctx, tape.constant(src_batch.features), *src_batch.labels,
                                      tape.constant(tgt_batch.features), pseudo, w);
    } catch (const ad::NumericError& e) {
        throw std::runtime_error("phase 2 at iteration " + std::to_string(state.iteration) + ": " + e.what());
    }
    result.jsa = adv.jsa.value().item();
    result.jta = adv.jta.value().item();
    result.total = adv.total.value().item();
    require_finite(result.jsa, "L_jsa", state.iteration);
    require_finite(result.jta, "L_jta", state.iteration);

    const ParamSet grads = collect_gradients(tape.backward(adv.total), bound, state.params, trainable);
    GroupOptimizer& opt = state.adversarial_state ? *state.adversarial_state : state.state(ParamGroup::Encoder);
    opt.update(state.params.encoder, grads.encoder, state.optimizer.learning_rate_at(state.iteration));
    result.updated = true;
    return result;
}

TermValues step(TrainState& state, const Dataset& src_batch, const Dataset& tgt_batch) {
    if (state.iteration >= state.total_iterations) throw std::logic_error("training budget exhausted");
    Phase1Result p1 = phase1(state, src_batch, tgt_batch);
    const Phase2Result p2 = phase2(state, src_batch, tgt_batch);
    ++state.iteration;
    TermValues out = p1.terms;
    out.jsa = p2.jsa;
    out.jta = p2.jta;
    out.adversarial = p2.total;
    return out;
}

namespace {

struct TermAccumulator {
    std::array<double, 10> sum{};
    std::array<std::size_t, 10> count{};

    static std::array<double, 10> unpack(const TermValues& t) {
        return {t.sc, t.svat, t.jsc, t.te, t.tvat, t.jtc, t.jsa, t.jta, t.total, t.adversarial};
    }
    void add(const TermValues& t) {
        const auto v = unpack(t);
        for (std::size_t i = 0; i < v.size(); ++i)
            if (!std::isnan(v[i])) {
                sum[i] += v[i];
                ++count[i];
            }
    }
    TermValues mean_and_reset() {
        std::array<double, 10> m{};
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = count[i] ? sum[i] / static_cast<double>(count[i]) : kNaN;
        sum = {};
        count = {};
        return {m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8], m[9]};
    }
};

void print_cell(std::ostream& out, double v) {
    out << ',';
    if (std::isnan(v)) return;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    out << buf;
}

}  // namespace

void write_history_header(std::ostream& out) {
    out << "iteration,L_sc,L_svat,L_jsc,L_te,L_tvat,L_jtc,L_jsa,L_jta,L,L_adv,"
           "source_acc,target_acc_class,target_acc_joint,hdiv\n";
}

void write_history_row(std::ostream& out, const MetricsRow& row) {
    out << row.iteration;
    const auto& t = row.mean_terms;
    for (double v : {t.sc, t.svat, t.jsc, t.te, t.tvat, t.jtc, t.jsa, t.jta, t.total, t.adversarial}) print_cell(out, v);
    for (double v : {row.source_accuracy, row.target_accuracy_class, row.target_accuracy_joint, row.hdiv})
        print_cell(out, v);
    out << '\n';
}

RunResult run(const TrainOptions& options, const Dataset& src, const Dataset& tgt, std::ostream* history_csv) {
    src.validate();
    tgt.validate();
    if (!src.labels) throw std::invalid_argument("source dataset must be labeled");
    if (src.dim() != tgt.dim()) throw std::invalid_argument("source and target feature dimensions differ");
    if (tgt.labels && tgt.num_classes() != src.num_classes())
        throw std::invalid_argument("source and target class counts differ");
    if (options.batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
    options.weights.validate();

    Arch arch = options.arch;
    arch.input_dim = src.dim();
    arch.num_classes = src.num_classes();

    RunResult result;
    result.initial = init_params(arch, options.seed);
    // Target labels never reach the training graph.
    const Dataset target_unlabeled = tgt.without_labels();

    TrainState state(result.initial, options.optimizer, options.weights, options.schedule,
                     std::max<std::size_t>(options.iterations, 1), options.seed ^ 0x5851f42d4c957f2dULL,
                     options.separate_adversarial_state);
    BatchStream stream(src.size(), tgt.size(), options.batch_size, options.seed + 1);

    if (history_csv) write_history_header(*history_csv);
    TermAccumulator acc;
    auto record = [&](std::size_t iteration) {
        MetricsRow row;
        row.iteration = iteration;
        row.mean_terms = acc.mean_and_reset();
        row.source_accuracy = evaluate(state.params, src, Predictor::Class);
        row.target_accuracy_class = tgt.labels ? evaluate(state.params, tgt, Predictor::Class) : kNaN;
        row.target_accuracy_joint = tgt.labels ? evaluate(state.params, tgt, Predictor::Joint) : kNaN;
        row.hdiv = options.hdiv_metrics ? theory::h_divergence_proxy(encode(state.params, src.features),
                                                             encode(state.params, tgt.features),
                                                             options.seed + 7919 * (iteration + 1))
                                        : kNaN;
        if (history_csv) {
            write_history_row(*history_csv, row);
            history_csv->flush();
        }
        result.history.push_back(row);
    };

    record(0);
    for (std::size_t it = 0; it < options.iterations; ++it) {
        auto [si, ti] = stream.next();
        const Dataset sb = src.subset(si);
        const Dataset tb = target_unlabeled.subset(ti);
        acc.add(step(state, sb, tb));
        const std::size_t done = it + 1;
        if (options.checkpoint_interval && done % options.checkpoint_interval == 0 && !options.checkpoint_dir.empty())
            save_params(state.params, options.checkpoint_dir / ("checkpoint-" + std::to_string(done) + ".bin"));
        if (done == options.iterations || (options.eval_interval && done % options.eval_interval == 0)) record(done);
    }
    result.params = state.params;
    return result;
}

}  // namespace rca
