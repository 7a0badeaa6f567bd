#include "rca/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rca {

namespace {

void require_one_hot(std::span<const double> y) {
    std::size_t ones = 0;
    for (double v : y) {
        if (v == 1.0)
            ++ones;
        else if (v != 0.0)
            throw std::invalid_argument("label is not one-hot");
    }
    if (ones != 1) throw std::invalid_argument("label is not one-hot");
}

ad::Var weighted(double weight, ad::Var term) { return term.tape()->scale(term, weight); }

ad::Var vat_term(const GraphContext& ctx, ad::Var x, ad::Var clean_logits, const LossWeights& w) {
    if (!ctx.vat_rng) throw std::logic_error("VAT term needs a random generator");
    ad::Tape& tape = *x.tape();
    const Tensor delta = vat_perturbation(*ctx.params, x.value(), w.eps_x, w.xi, *ctx.vat_rng);
    ad::Var perturbed = tape.add(x, tape.constant(delta));
    ad::Var z = encode(*ctx.bound, ctx.params->arch, perturbed, ctx.dropout_rng);
    ad::Var logits = head_logits(ctx.bound->class_head, z);
    return mean_cross_entropy(logits, tape.stop_gradient(tape.softmax(clean_logits)));
}

struct ValueGraph {
    ad::Tape tape;
    BoundParams bound;
    std::mt19937_64 rng;
    GraphContext ctx;

    ValueGraph(const ParamSet& params, std::uint64_t seed) : rng(seed) {
        bound = bind(tape, params, GroupMask::none());
        ctx.params = &params;
        ctx.bound = &bound;
        ctx.vat_rng = &rng;
        ctx.always_vat = true;
    }
};

}  // namespace

void LossWeights::validate() const {
    const double all[] = {lambda_t, lambda_te, lambda_svat, lambda_tvat, lambda_jsc, lambda_jtc, lambda_jsa, lambda_jta};
    for (double v : all)
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("loss weights must be finite and nonnegative");
    if (!(eps_x > 0.0) || !std::isfinite(eps_x)) throw std::invalid_argument("eps_x must be positive");
    if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("xi must be positive");
}

std::vector<double> joint_label(std::span<const double> y, Domain domain, bool flipped) {
    require_one_hot(y);
    const std::size_t k = y.size();
    std::vector<double> out(2 * k, 0.0);
    const bool first_half = (domain == Domain::Source) != flipped;
    std::copy(y.begin(), y.end(), out.begin() + static_cast<std::ptrdiff_t>(first_half ? 0 : k));
    return out;
}

Tensor joint_labels(const Tensor& y, Domain domain, bool flipped) {
    const std::size_t k = y.cols();
    Tensor out({y.rows(), 2 * k});
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = joint_label(y.row(r), domain, flipped);
        std::copy(row.begin(), row.end(), out.row(r).begin());
    }
    return out;
}

double cross_entropy(std::span<const double> p, std::span<const double> y) {
    if (p.size() != y.size())
        throw std::invalid_argument("cross_entropy: lengths " + std::to_string(p.size()) + " and " +
                                    std::to_string(y.size()) + " differ");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (y[i] != 0.0) total -= y[i] * std::log(std::max(p[i], ad::kLogFloor));
    return total;
}

double entropy(std::span<const double> p) { return cross_entropy(p, p); }

ad::Var mean_cross_entropy(ad::Var logits, const Tensor& targets) {
    return mean_cross_entropy(logits, logits.tape()->constant(targets));
}

ad::Var mean_cross_entropy(ad::Var logits, ad::Var target_probs) {
    ad::Tape& tape = *logits.tape();
    const double rows = static_cast<double>(logits.value().rows());
    ad::Var dot = tape.sum(tape.mul(target_probs, tape.log_softmax(logits)));
    return tape.scale(dot, -1.0 / rows);
}

ad::Var mean_entropy(ad::Var logits) { return mean_cross_entropy(logits, logits.tape()->softmax(logits)); }

Tensor vat_perturbation(const ParamSet& params, const Tensor& x, double eps_x, double xi, std::mt19937_64& rng,
                        std::vector<bool>* fallback_rows) {
    if (!(eps_x >= 0.0)) throw std::invalid_argument("eps_x must be nonnegative");
    if (!(xi > 0.0)) throw std::invalid_argument("xi must be positive");
    const std::size_t n = x.rows(), d = x.cols();

    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor dir({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        double norm = 0.0;
        while (norm == 0.0) {
            norm = 0.0;
            for (auto& v : dir.row(r)) {
                v = normal(rng);
                norm += v * v;
            }
        }
        norm = std::sqrt(norm);
        for (auto& v : dir.row(r)) v /= norm;
    }

    const Tensor clean = class_predict(params, encode(params, x)).probs;

    ad::Tape tape;
    BoundParams bound = bind(tape, params, GroupMask::none());
    Tensor probe = dir;
    for (auto& v : probe.data()) v *= xi;
    ad::Var delta = tape.input("delta", probe, true);
    ad::Var z = encode(bound, params.arch, tape.add(tape.constant(x), delta));
    ad::Var logits = head_logits(bound.class_head, z);
    // Summed over rows: each row's gradient then depends on that row alone.
    ad::Var loss = tape.scale(tape.sum(tape.mul(tape.constant(clean), tape.log_softmax(logits))), -1.0);
    const Tensor r = tape.backward(loss).wrt(delta);

    Tensor out({n, d});
    if (fallback_rows) fallback_rows->assign(n, false);
    for (std::size_t row = 0; row < n; ++row) {
        double norm = 0.0;
        for (double v : r.row(row)) norm += v * v;
        norm = std::sqrt(norm);
        auto dst = out.row(row);
        if (norm < 1e-30) {
            if (fallback_rows) (*fallback_rows)[row] = true;
            auto src = dir.row(row);
            for (std::size_t c = 0; c < d; ++c) dst[c] = eps_x * src[c];
        } else {
            auto src = r.row(row);
            for (std::size_t c = 0; c < d; ++c) dst[c] = eps_x * (src[c] / norm);
        }
    }
    return out;
}

Tensor vat_perturbation(const ParamSet& params, const Tensor& x, double eps_x, double xi, std::uint64_t seed,
                        std::vector<bool>* fallback_rows) {
    std::mt19937_64 rng(seed);
    return vat_perturbation(params, x, eps_x, xi, rng, fallback_rows);
}

double vat_loss(const ParamSet& params, const Tensor& x, double eps_x, double xi, std::uint64_t seed) {
    const Tensor delta = vat_perturbation(params, x, eps_x, xi, seed);
    Tensor moved = x;
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += delta[i];
    const Tensor clean = class_predict(params, encode(params, x)).probs;
    const Tensor shifted = class_predict(params, encode(params, moved)).probs;
    double total = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) total += cross_entropy(shifted.row(r), clean.row(r));
    return total / static_cast<double>(x.rows());
}

SourceTerms build_source_terms(const GraphContext& ctx, ad::Var x, const Tensor& y, const LossWeights& w) {
    ad::Tape& tape = *x.tape();
    const Arch& arch = ctx.params->arch;
    if (y.rows() != x.value().rows() || y.cols() != arch.num_classes)
        throw ad::ShapeError("source labels must be " + std::to_string(x.value().rows()) + "x" +
                             std::to_string(arch.num_classes));
    SourceTerms t;
    ad::Var z = encode(*ctx.bound, arch, x, ctx.dropout_rng);
    ad::Var logits = head_logits(ctx.bound->class_head, z);
    t.sc = mean_cross_entropy(logits, y);
    t.class_part = t.sc;
    if (w.lambda_svat > 0.0 || ctx.always_vat) {
        t.svat = vat_term(ctx, x, logits, w);
        t.class_part = tape.add(t.class_part, weighted(w.lambda_svat, *t.svat));
    }
    ad::Var zj = ctx.route_joint_terms ? tape.stop_gradient(z) : z;
    t.jsc = mean_cross_entropy(head_logits(ctx.bound->joint_head, zj), joint_labels(y, Domain::Source, false));
    t.joint_part = weighted(w.lambda_jsc, t.jsc);
    t.total = tape.add(t.class_part, t.joint_part);
    return t;
}

TargetTerms build_target_terms(const GraphContext& ctx, ad::Var x, const LossWeights& w) {
    ad::Tape& tape = *x.tape();
    const Arch& arch = ctx.params->arch;
    TargetTerms t;
    ad::Var z = encode(*ctx.bound, arch, x, ctx.dropout_rng);
    ad::Var logits = head_logits(ctx.bound->class_head, z);
    t.pseudo = pseudo_labels(logits.value());
    t.te = mean_entropy(logits);
    t.class_part = weighted(w.lambda_te, t.te);
    if (w.lambda_tvat > 0.0 || ctx.always_vat) {
        t.tvat = vat_term(ctx, x, logits, w);
        t.class_part = tape.add(t.class_part, weighted(w.lambda_tvat, *t.tvat));
    }
    ad::Var zj = ctx.route_joint_terms ? tape.stop_gradient(z) : z;
    t.jtc = mean_cross_entropy(head_logits(ctx.bound->joint_head, zj), joint_labels(t.pseudo, Domain::Target, false));
    t.joint_part = weighted(w.lambda_jtc, t.jtc);
    t.total = tape.add(t.class_part, t.joint_part);
    return t;
}

AdversarialTerms build_adversarial_terms(const GraphContext& ctx, ad::Var xs, const Tensor& ys, ad::Var xt,
                                         const Tensor& target_pseudo, const LossWeights& w) {
    ad::Tape& tape = *xs.tape();
    const Arch& arch = ctx.params->arch;
    if (ys.rows() != xs.value().rows() || ys.cols() != arch.num_classes)
        throw ad::ShapeError("source labels do not match the source batch");
    AdversarialTerms t;
    ad::Var js = head_logits(ctx.bound->joint_head, encode(*ctx.bound, arch, xs, ctx.dropout_rng));
    ad::Var jt = head_logits(ctx.bound->joint_head, encode(*ctx.bound, arch, xt, ctx.dropout_rng));
    t.jsa = mean_cross_entropy(js, joint_labels(ys, Domain::Source, true));
    t.jta = mean_cross_entropy(jt, joint_labels(target_pseudo, Domain::Target, true));
    t.total = tape.add(weighted(w.lambda_jsa, t.jsa), weighted(w.lambda_jta, t.jta));
    return t;
}

SourceLosses source_losses(const ParamSet& params, const Dataset& src, const LossWeights& w, std::uint64_t seed) {
    if (!src.labels) throw std::invalid_argument("source_losses needs a labeled batch");
    ValueGraph g(params, seed);
    auto t = build_source_terms(g.ctx, g.tape.constant(src.features), *src.labels, w);
    return {t.sc.value().item(), t.svat->value().item(), t.jsc.value().item(), t.total.value().item()};
}

TargetLosses target_losses(const ParamSet& params, const Dataset& tgt, const LossWeights& w, std::uint64_t seed) {
    ValueGraph g(params, seed);
    auto t = build_target_terms(g.ctx, g.tape.constant(tgt.features), w);
    return {t.te.value().item(), t.tvat->value().item(), t.jtc.value().item(), t.total.value().item()};
}

double adversarial_loss(const ParamSet& params, const Dataset& src, const Dataset& tgt, const LossWeights& w) {
    if (!src.labels) throw std::invalid_argument("adversarial_loss needs a labeled source batch");
    ValueGraph g(params, 0);
    const Tensor pseudo = pseudo_labels(class_predict(params, encode(params, tgt.features)).probs);
    auto t = build_adversarial_terms(g.ctx, g.tape.constant(src.features), *src.labels,
                                     g.tape.constant(tgt.features), pseudo, w);
    return t.total.value().item();
}

double total_loss(const ParamSet& params, const Dataset& src, const Dataset& tgt, const LossWeights& w,
                  std::uint64_t seed) {
    const auto s = source_losses(params, src, w, seed);
    const auto t = target_losses(params, tgt, w, seed + 1);
    return s.total + w.lambda_t * t.total;
}

}  // namespace rca
