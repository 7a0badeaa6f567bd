#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rca/data.hpp"
#include "rca/tensor.hpp"

namespace rca::theory {

/// Nonnegative entries summing to one.
class SimplexVec {
public:
    SimplexVec() = default;
    /// Throws std::invalid_argument unless the entries lie on the simplex within `tol`.
    explicit SimplexVec(std::vector<double> entries, double tol = 1e-12);

    const std::vector<double>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    double operator[](std::size_t i) const { return entries_[i]; }

private:
    std::vector<double> entries_;
};

/// Mass over (bin, class) for each domain; each domain's table sums to one.
struct DiscreteJoint {
    std::size_t bins = 0;
    std::size_t classes = 0;
    std::vector<double> source;  // bins x classes, row-major
    std::vector<double> target;

    DiscreteJoint() = default;
    DiscreteJoint(std::size_t bins, std::size_t classes);

    double& at(Domain d, std::size_t bin, std::size_t cls);
    double at(Domain d, std::size_t bin, std::size_t cls) const;
    double bin_mass(Domain d, std::size_t bin) const;
    double class_mass(Domain d, std::size_t cls) const;
    void validate(double tol = 1e-12) const;
};

// Lemma 1 ------------------------------------------------------------------

/// argmin over the simplex of -sum_i alpha_i log theta_i, i.e. alpha / sum(alpha).
SimplexVec lemma1_minimizer(std::span<const double> alpha);

/// Euclidean projection onto {theta : theta_i >= floor, sum theta = 1}.
std::vector<double> project_to_simplex(std::span<const double> v, double floor = 0.0);

struct IterativeResult {
    std::vector<double> solution;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Projected gradient descent with backtracking on -sum alpha log theta from a
/// random point of the simplex.
IterativeResult lemma1_projected_gradient(std::span<const double> alpha, std::uint64_t seed,
                                          std::size_t max_iterations = 200000);

// Lemma 2 ------------------------------------------------------------------

/// E_P[-log Q/(P+Q)] + E_Q[-log P/(P+Q)] with clamped logs; bins where both
/// masses vanish contribute nothing.
double lemma2_objective(std::span<const double> p, std::span<const double> q);

struct GridMinimum {
    std::vector<double> q;
    double value = 0;
};

/// Minimum over every 3-bin Q on the simplex grid with spacing `step`.
GridMinimum lemma2_grid_search(std::span<const double> p, double step = 0.02);

// Proposition 1 --------------------------------------------------------------

/// Per bin: h[i] = Ps(b, i) / (Ps(b) + Pt(b)), h[K + i] = Pt(b, i) / (Ps(b) + Pt(b)).
std::vector<SimplexVec> prop1_optimal_predictor(const DiscreteJoint& dj);

/// L_jsc + L_jtc of a per-bin 2K-way predictor under the joint masses.
double joint_classifier_objective(const DiscreteJoint& dj, const std::vector<std::vector<double>>& h);

struct TabularFit {
    std::vector<std::vector<double>> probs;  // bins x 2K
    std::size_t iterations = 0;
    double max_gradient = 0;
};

/// Gradient descent on the logits of a tabular softmax predictor minimising
/// L_jsc + L_jtc, run until the largest gradient entry drops below `tol`.
TabularFit prop1_gradient_descent(const DiscreteJoint& dj, double tol = 1e-12, std::size_t max_iterations = 1000000);

// Theorem 1 ----------------------------------------------------------------

/// L_jsa + L_jta evaluated at the Prop. 1 predictor for the same masses.
double encoder_objective(const DiscreteJoint& dj);

struct Theorem1Result {
    bool aligned = false;
    bool disjoint = false;
    double encoder_objective = 0;
};

Theorem1Result theorem1_check(const DiscreteJoint& dj, double tol = 1e-9);

/// Move `fraction` of the (domain, from_bin, cls) mass to (domain, to_bin, cls).
struct Perturbation {
    Domain domain = Domain::Source;
    std::size_t cls = 0;
    std::size_t from_bin = 0;
    std::size_t to_bin = 0;
    double fraction = 0;
};

DiscreteJoint apply_perturbation(const DiscreteJoint& dj, const Perturbation& p);

/// Every single-cell move with a fraction from `fractions`, over both domains.
std::vector<Perturbation> perturbation_grid(const DiscreteJoint& dj, std::span<const double> fractions);

/// Random instance where every class owns its own bins, both domains share the
/// class priors and the class-conditional bin distributions. Some bins may be
/// left empty.
DiscreteJoint random_aligned_disjoint(std::size_t bins, std::size_t classes, std::uint64_t seed);
/// Random instance with every entry strictly positive.
DiscreteJoint random_dense(std::size_t bins, std::size_t classes, std::uint64_t seed);

// Discretisation -------------------------------------------------------------

struct KMeans {
    Tensor centroids;                    // m x d
    std::vector<std::size_t> assignment; // per input row
};

/// Lloyd's algorithm from m distinct random rows; empty clusters keep their
/// previous centroid. m is capped at the number of rows.
KMeans kmeans(const Tensor& points, std::size_t m, std::size_t iterations, std::uint64_t seed);
std::size_t nearest_centroid(const Tensor& centroids, std::span<const double> point);

/// Empirical DiscreteJoint of labeled source and target features binned by a
/// k-means fit on the pooled features.
DiscreteJoint discretize(const Dataset& src, const Dataset& tgt, std::size_t m = 32, std::size_t iterations = 25,
                         std::uint64_t seed = 0);

// H-divergence proxy ---------------------------------------------------------

struct HDivOptions {
    std::vector<std::size_t> hidden{32, 32};
    std::size_t steps = 500;
    std::size_t batch_per_domain = 64;
    double learning_rate = 1e-3;
};

/// 2 (1 - 2 err) clamped to [0, 2], where err is the balanced holdout error of
/// a small MLP domain classifier trained on half of each domain.
double h_divergence_proxy(const Tensor& src_feats, const Tensor& tgt_feats, std::uint64_t seed,
                          const HDivOptions& options = {});

// Oracle suite -----------------------------------------------------------------

struct OracleRecord {
    std::string check;
    std::string inputs_digest;
    double value = 0;
    double tolerance = 0;
    bool passed = false;
};

/// Max |closed form - projected gradient| over `trials` random alpha, K <= 8.
OracleRecord lemma1_oracle(std::uint64_t seed, std::size_t trials = 100);
/// Worst |grid minimum - log 4| over random 3-bin P; fails if any grid
/// minimiser is further than one grid step from P.
OracleRecord lemma2_oracle(std::uint64_t seed, std::size_t trials = 20);
/// Max per-entry gap between gradient descent and the closed form.
OracleRecord prop1_oracle(std::uint64_t seed, std::size_t trials = 20);
/// Smallest objective increase over every perturbation of every instance;
/// passes when all increases are strictly positive.
OracleRecord theorem1_oracle(std::uint64_t seed, std::size_t instances = 10);

std::vector<OracleRecord> run_oracle_suite(std::uint64_t seed);

}  // namespace rca::theory
