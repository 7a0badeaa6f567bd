#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rca/autodiff.hpp"
#include "rca/data.hpp"
#include "rca/networks.hpp"

namespace rca {

/// Weights of every objective term plus the VAT radius and probe scale.
///
/// lambda_te scales the target entropy term inside L_t. It is 1 in the
/// method itself and exists so an ablation can drop entropy minimization
/// without touching lambda_t.
struct LossWeights {
    double lambda_t = 0.1;
    double lambda_te = 1.0;
    double lambda_svat = 0.0;
    double lambda_tvat = 10.0;
    double lambda_jsc = 1.0;
    double lambda_jtc = 10.0;
    double lambda_jsa = 1.0;
    double lambda_jta = 1.0;
    double eps_x = 1.0;
    double xi = 10.0;

    void validate() const;
    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Joint-label layout: unflipped source and flipped target put y in the
/// first K slots; flipped source and unflipped target put it in the last K.
std::vector<double> joint_label(std::span<const double> y, Domain domain, bool flipped);
Tensor joint_labels(const Tensor& y, Domain domain, bool flipped);

/// -<y, log p> with p clamped below at 1e-12.
double cross_entropy(std::span<const double> p, std::span<const double> y);
/// -<p, log p> with the same clamp, so 0 log 0 contributes 0.
double entropy(std::span<const double> p);

// Graph pieces -------------------------------------------------------------

/// Batch mean of -<target_row, log softmax(logits_row)>.
ad::Var mean_cross_entropy(ad::Var logits, const Tensor& targets);
ad::Var mean_cross_entropy(ad::Var logits, ad::Var target_probs);
/// Batch mean entropy of softmax(logits).
ad::Var mean_entropy(ad::Var logits);

/// Per-row VAT perturbation of the class predictor at x.
///
/// One power-iteration step: d ~ N(0, I) per row, normalised; r is the
/// gradient of CE(f(x), f(x + delta)) at delta = xi d with the clean
/// prediction held fixed; delta_x = eps_x r / |r|. Rows with |r| < 1e-30
/// fall back to eps_x d. `fallback_rows`, when given, receives a flag per row.
Tensor vat_perturbation(const ParamSet& params, const Tensor& x, double eps_x, double xi, std::mt19937_64& rng,
                        std::vector<bool>* fallback_rows = nullptr);
Tensor vat_perturbation(const ParamSet& params, const Tensor& x, double eps_x, double xi, std::uint64_t seed,
                        std::vector<bool>* fallback_rows = nullptr);

/// Mean CE(f_c(x), f_c(x + delta_x)).
double vat_loss(const ParamSet& params, const Tensor& x, double eps_x, double xi, std::uint64_t seed);

/// Shared state for building objective graphs on one tape.
struct GraphContext {
    const ParamSet* params = nullptr;
    const BoundParams* bound = nullptr;
    std::mt19937_64* vat_rng = nullptr;
    std::mt19937_64* dropout_rng = nullptr;
    // Feed the joint head stop_gradient(z) in L_jsc and L_jtc so those terms
    // reach h_j only.
    bool route_joint_terms = true;
    // Build VAT terms even when their weight is zero (for reporting).
    bool always_vat = false;
};

struct SourceTerms {
    ad::Var sc;
    std::optional<ad::Var> svat;
    ad::Var jsc;
    ad::Var class_part;  // L_sc + lambda_svat L_svat
    ad::Var joint_part;  // lambda_jsc L_jsc
    ad::Var total;       // L_s
};

struct TargetTerms {
    ad::Var te;
    std::optional<ad::Var> tvat;
    ad::Var jtc;
    ad::Var class_part;  // lambda_te L_te + lambda_tvat L_tvat
    ad::Var joint_part;  // lambda_jtc L_jtc
    ad::Var total;       // L_t
    Tensor pseudo;       // detached one-hot pseudo-labels
};

SourceTerms build_source_terms(const GraphContext& ctx, ad::Var x, const Tensor& y, const LossWeights& w);
TargetTerms build_target_terms(const GraphContext& ctx, ad::Var x, const LossWeights& w);

struct AdversarialTerms {
    ad::Var jsa;
    ad::Var jta;
    ad::Var total;  // lambda_jsa L_jsa + lambda_jta L_jta
};

/// Alignment terms: source joint targets flipped to [0, y], target pseudo
/// targets flipped to [y_hat, 0].
AdversarialTerms build_adversarial_terms(const GraphContext& ctx, ad::Var xs, const Tensor& ys, ad::Var xt,
                                         const Tensor& target_pseudo, const LossWeights& w);

// Value-level objectives ---------------------------------------------------

struct SourceLosses {
    double sc = 0, svat = 0, jsc = 0, total = 0;
};
struct TargetLosses {
    double te = 0, tvat = 0, jtc = 0, total = 0;
};

SourceLosses source_losses(const ParamSet& params, const Dataset& src, const LossWeights& w, std::uint64_t seed = 0);
TargetLosses target_losses(const ParamSet& params, const Dataset& tgt, const LossWeights& w, std::uint64_t seed = 0);
double adversarial_loss(const ParamSet& params, const Dataset& src, const Dataset& tgt, const LossWeights& w);
/// L = L_s + lambda_t L_t.
double total_loss(const ParamSet& params, const Dataset& src, const Dataset& tgt, const LossWeights& w,
                  std::uint64_t seed = 0);

}  // namespace rca
