#include "rca/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rca/autodiff.hpp"
#include "rca/digest.hpp"
#include "rca/losses.hpp"
#include "rca/networks.hpp"
#include "rca/optim.hpp"

namespace rca::theory {

namespace {

const double kLog4 = std::log(4.0);

double clamped_log(double x) { return std::log(std::max(x, ad::kLogFloor)); }

std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

void normalize(std::vector<double>& v) {
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (auto& x : v) x /= s;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Column index of the single 1 in a joint label.
std::size_t joint_slot(std::size_t cls, std::size_t classes, Domain d, bool flipped) {
    std::vector<double> y(classes, 0.0);
    y[cls] = 1.0;
    const auto j = joint_label(y, d, flipped);
    return static_cast<std::size_t>(std::find(j.begin(), j.end(), 1.0) - j.begin());
}

const std::vector<double>& table(const DiscreteJoint& dj, Domain d) {
    return d == Domain::Source ? dj.source : dj.target;
}

// Per-bin 2K-vector of target masses for L_jsc + L_jtc (or L_jsa + L_jta when flipped).
std::vector<double> joint_weights(const DiscreteJoint& dj, std::size_t b, bool flipped) {
    std::vector<double> w(2 * dj.classes, 0.0);
    for (Domain d : {Domain::Source, Domain::Target})
        for (std::size_t k = 0; k < dj.classes; ++k) w[joint_slot(k, dj.classes, d, flipped)] += dj.at(d, b, k);
    return w;
}

}  // namespace

SimplexVec::SimplexVec(std::vector<double> entries, double tol) : entries_(std::move(entries)) {
    if (entries_.empty()) throw std::invalid_argument("simplex vector must be non-empty");
    double s = 0;
    for (double x : entries_) {
        if (!(x >= -tol)) throw std::invalid_argument("simplex vector has a negative entry");
        s += x;
    }
    if (std::abs(s - 1.0) > tol) throw std::invalid_argument("simplex vector does not sum to 1");
}

DiscreteJoint::DiscreteJoint(std::size_t b, std::size_t k)
    : bins(b), classes(k), source(b * k, 0.0), target(b * k, 0.0) {}

double& DiscreteJoint::at(Domain d, std::size_t bin, std::size_t cls) {
    return (d == Domain::Source ? source : target).at(bin * classes + cls);
}

double DiscreteJoint::at(Domain d, std::size_t bin, std::size_t cls) const {
    return table(*this, d).at(bin * classes + cls);
}

double DiscreteJoint::bin_mass(Domain d, std::size_t bin) const {
    double s = 0;
    for (std::size_t k = 0; k < classes; ++k) s += at(d, bin, k);
    return s;
}

double DiscreteJoint::class_mass(Domain d, std::size_t cls) const {
    double s = 0;
    for (std::size_t b = 0; b < bins; ++b) s += at(d, b, cls);
    return s;
}

void DiscreteJoint::validate(double tol) const {
    if (bins == 0 || classes < 2) throw std::invalid_argument("DiscreteJoint needs at least one bin and two classes");
    for (Domain d : {Domain::Source, Domain::Target}) {
        const auto& t = table(*this, d);
        if (t.size() != bins * classes) throw std::invalid_argument("DiscreteJoint table has the wrong size");
        double s = 0;
        for (double x : t) {
            if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("DiscreteJoint mass must be >= 0");
            s += x;
        }
        if (std::abs(s - 1.0) > tol)
            throw std::invalid_argument(std::string(domain_name(d)) + " mass does not sum to 1");
    }
}

// Lemma 1 ------------------------------------------------------------------

SimplexVec lemma1_minimizer(std::span<const double> alpha) {
    if (alpha.empty()) throw std::invalid_argument("alpha must be non-empty");
    double s = 0;
    for (double a : alpha) {
        if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("alpha entries must be positive");
        s += a;
    }
    std::vector<double> theta(alpha.begin(), alpha.end());
    for (auto& t : theta) t /= s;
    return SimplexVec(std::move(theta), 1e-12);
}

std::vector<double> project_to_simplex(std::span<const double> v, double floor) {
    const std::size_t n = v.size();
    const double total = 1.0 - floor * static_cast<double>(n);
    if (n == 0 || total <= 0.0) throw std::invalid_argument("infeasible simplex projection");
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = v[i] - floor;
    std::vector<double> sorted = u;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0, tau = 0;
    for (std::size_t j = 0; j < n; ++j) {
        cumulative += sorted[j];
        const double t = (cumulative - total) / static_cast<double>(j + 1);
        if (sorted[j] - t > 0) tau = t;
    }
    for (auto& x : u) x = std::max(x - tau, 0.0) + floor;
    return u;
}

IterativeResult lemma1_projected_gradient(std::span<const double> alpha, std::uint64_t seed,
                                          std::size_t max_iterations) {
    lemma1_minimizer(alpha);  // validates
    const std::size_t n = alpha.size();
    const double floor = 1e-14;
    auto f = [&](const std::vector<double>& t) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s -= alpha[i] * std::log(t[i]);
        return s;
    };
    std::mt19937_64 rng(seed);
    std::vector<double> theta = uniform_vector(rng, n, 0.05, 1.0);
    normalize(theta);

    IterativeResult r;
    double step = 1e-2;
    std::vector<double> grad(n), trial(n);
    double fx = f(theta);
    for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
        for (std::size_t i = 0; i < n; ++i) grad[i] = -alpha[i] / theta[i];
        double change = 0;
        for (int tries = 0; tries < 200; ++tries) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = theta[i] - step * grad[i];
            trial = project_to_simplex(trial, floor);
            double lin = 0, sq = 0;
            change = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = trial[i] - theta[i];
                lin += grad[i] * d;
                sq += d * d;
                change = std::max(change, std::abs(d));
            }
            const double ft = f(trial);
            if (ft <= fx + lin + sq / (2 * step)) {
                fx = ft;
                break;
            }
            step *= 0.5;
        }
        theta.swap(trial);
        step *= 2.0;
        if (change < 1e-15) {
            r.converged = true;
            break;
        }
    }
    r.solution = std::move(theta);
    return r;
}

// Lemma 2 ------------------------------------------------------------------

double lemma2_objective(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("P and Q must have the same length");
    double v = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = p[i] + q[i];
        if (m <= 0.0) continue;
        if (p[i] > 0) v -= p[i] * clamped_log(q[i] / m);
        if (q[i] > 0) v -= q[i] * clamped_log(p[i] / m);
    }
    return v;
}

GridMinimum lemma2_grid_search(std::span<const double> p, double step) {
    if (p.size() != 3) throw std::invalid_argument("grid search is over 3-bin distributions");
    const auto n = static_cast<std::size_t>(std::llround(1.0 / step));
    GridMinimum best;
    best.value = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t j = 0; i + j <= n; ++j) {
            const std::vector<double> q{double(i) / double(n), double(j) / double(n), double(n - i - j) / double(n)};
            const double v = lemma2_objective(p, q);
            if (v < best.value) best = {q, v};
        }
    return best;
}

// Proposition 1 --------------------------------------------------------------

std::vector<SimplexVec> prop1_optimal_predictor(const DiscreteJoint& dj) {
    dj.validate();
    std::vector<SimplexVec> out;
    out.reserve(dj.bins);
    for (std::size_t b = 0; b < dj.bins; ++b) {
        const double m = dj.bin_mass(Domain::Source, b) + dj.bin_mass(Domain::Target, b);
        if (!(m > 0.0)) throw std::invalid_argument("bin " + std::to_string(b) + " carries no mass");
        std::vector<double> h = joint_weights(dj, b, false);
        for (auto& x : h) x /= m;
        out.emplace_back(std::move(h), 1e-12);
    }
    return out;
}

double joint_classifier_objective(const DiscreteJoint& dj, const std::vector<std::vector<double>>& h) {
    if (h.size() != dj.bins) throw std::invalid_argument("predictor table has the wrong number of bins");
    double v = 0;
    for (std::size_t b = 0; b < dj.bins; ++b) {
        const auto w = joint_weights(dj, b, false);
        for (std::size_t j = 0; j < w.size(); ++j)
            if (w[j] > 0) v -= w[j] * clamped_log(h[b].at(j));
    }
    return v;
}

TabularFit prop1_gradient_descent(const DiscreteJoint& dj, double tol, std::size_t max_iterations) {
    dj.validate();
    const std::size_t width = 2 * dj.classes;
    std::vector<std::vector<double>> w(dj.bins);
    std::vector<double> mass(dj.bins);
    double max_mass = 0;
    for (std::size_t b = 0; b < dj.bins; ++b) {
        w[b] = joint_weights(dj, b, false);
        mass[b] = std::accumulate(w[b].begin(), w[b].end(), 0.0);
        max_mass = std::max(max_mass, mass[b]);
    }
    // Hessian of each bin's block is bounded by its mass.
    const double lr = 1.0 / max_mass;

    std::vector<std::vector<double>> logits(dj.bins, std::vector<double>(width, 0.0));
    TabularFit fit;
    fit.probs.assign(dj.bins, std::vector<double>(width));
    auto softmax = [&](std::size_t b) {
        const auto& l = logits[b];
        const double mx = *std::max_element(l.begin(), l.end());
        double s = 0;
        for (std::size_t j = 0; j < width; ++j) s += (fit.probs[b][j] = std::exp(l[j] - mx));
        for (auto& p : fit.probs[b]) p /= s;
    };
    for (fit.iterations = 0; fit.iterations < max_iterations; ++fit.iterations) {
        fit.max_gradient = 0;
        for (std::size_t b = 0; b < dj.bins; ++b) {
            softmax(b);
            for (std::size_t j = 0; j < width; ++j) {
                const double g = mass[b] * fit.probs[b][j] - w[b][j];
                fit.max_gradient = std::max(fit.max_gradient, std::abs(g));
                logits[b][j] -= lr * g;
            }
        }
        if (fit.max_gradient < tol) break;
    }
    for (std::size_t b = 0; b < dj.bins; ++b) softmax(b);
    return fit;
}

// Theorem 1 ----------------------------------------------------------------

double encoder_objective(const DiscreteJoint& dj) {
    dj.validate();
    double v = 0;
    for (std::size_t b = 0; b < dj.bins; ++b) {
        const double m = dj.bin_mass(Domain::Source, b) + dj.bin_mass(Domain::Target, b);
        if (m <= 0.0) continue;
        const auto h = joint_weights(dj, b, false);  // times 1/m below
        const auto w = joint_weights(dj, b, true);
        for (std::size_t j = 0; j < w.size(); ++j)
            if (w[j] > 0) v -= w[j] * clamped_log(h[j] / m);
    }
    return v;
}

Theorem1Result theorem1_check(const DiscreteJoint& dj, double tol) {
    dj.validate();
    Theorem1Result r;
    r.aligned = true;
    for (std::size_t k = 0; k < dj.classes && r.aligned; ++k) {
        const double ms = dj.class_mass(Domain::Source, k), mt = dj.class_mass(Domain::Target, k);
        if (ms <= tol && mt <= tol) continue;
        if (ms <= tol || mt <= tol) {
            r.aligned = false;
            break;
        }
        for (std::size_t b = 0; b < dj.bins; ++b)
            if (std::abs(dj.at(Domain::Source, b, k) / ms - dj.at(Domain::Target, b, k) / mt) > tol) {
                r.aligned = false;
                break;
            }
    }
    r.disjoint = true;
    for (std::size_t b = 0; b < dj.bins && r.disjoint; ++b) {
        std::size_t present = 0;
        for (std::size_t k = 0; k < dj.classes; ++k)
            if (dj.at(Domain::Source, b, k) + dj.at(Domain::Target, b, k) > tol) ++present;
        r.disjoint = present <= 1;
    }
    r.encoder_objective = encoder_objective(dj);
    return r;
}

DiscreteJoint apply_perturbation(const DiscreteJoint& dj, const Perturbation& p) {
    if (p.from_bin >= dj.bins || p.to_bin >= dj.bins || p.cls >= dj.classes || p.from_bin == p.to_bin)
        throw std::invalid_argument("perturbation out of range");
    if (!(p.fraction > 0.0 && p.fraction <= 1.0)) throw std::invalid_argument("perturbation fraction must be in (0, 1]");
    DiscreteJoint out = dj;
    const double moved = p.fraction * out.at(p.domain, p.from_bin, p.cls);
    out.at(p.domain, p.from_bin, p.cls) -= moved;
    out.at(p.domain, p.to_bin, p.cls) += moved;
    return out;
}

std::vector<Perturbation> perturbation_grid(const DiscreteJoint& dj, std::span<const double> fractions) {
    std::vector<Perturbation> out;
    for (Domain d : {Domain::Source, Domain::Target})
        for (std::size_t k = 0; k < dj.classes; ++k)
            for (std::size_t from = 0; from < dj.bins; ++from) {
                if (!(dj.at(d, from, k) > 0.0)) continue;
                for (std::size_t to = 0; to < dj.bins; ++to) {
                    if (to == from) continue;
                    for (double f : fractions) out.push_back({d, k, from, to, f});
                }
            }
    return out;
}

DiscreteJoint random_aligned_disjoint(std::size_t bins, std::size_t classes, std::uint64_t seed) {
    if (classes < 2 || bins < classes) throw std::invalid_argument("need at least one bin per class");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(bins);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    // owner[b] = class of bin b, or `classes` for an empty bin
    std::vector<std::size_t> owner(bins, classes);
    for (std::size_t i = 0; i < bins; ++i)
        owner[order[i]] = i < classes ? i : uniform_index(rng, 0, classes);

    std::vector<double> prior = uniform_vector(rng, classes, 0.2, 1.0);
    normalize(prior);
    DiscreteJoint dj(bins, classes);
    for (std::size_t k = 0; k < classes; ++k) {
        std::vector<std::size_t> own;
        for (std::size_t b = 0; b < bins; ++b)
            if (owner[b] == k) own.push_back(b);
        std::vector<double> cond = uniform_vector(rng, own.size(), 0.2, 1.0);
        normalize(cond);
        for (std::size_t i = 0; i < own.size(); ++i)
            dj.at(Domain::Source, own[i], k) = dj.at(Domain::Target, own[i], k) = prior[k] * cond[i];
    }
    return dj;
}

DiscreteJoint random_dense(std::size_t bins, std::size_t classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    DiscreteJoint dj(bins, classes);
    dj.source = uniform_vector(rng, bins * classes, 0.2, 1.0);
    dj.target = uniform_vector(rng, bins * classes, 0.2, 1.0);
    normalize(dj.source);
    normalize(dj.target);
    return dj;
}

// Discretisation -------------------------------------------------------------

std::size_t nearest_centroid(const Tensor& centroids, std::span<const double> point) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const auto row = centroids.row(c);
        double d = 0;
        for (std::size_t j = 0; j < point.size(); ++j) d += (row[j] - point[j]) * (row[j] - point[j]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

KMeans kmeans(const Tensor& points, std::size_t m, std::size_t iterations, std::uint64_t seed) {
    const std::size_t n = points.rows(), d = points.cols();
    if (m == 0) throw std::invalid_argument("k-means needs at least one centroid");
    m = std::min(m, n);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(m);

    KMeans km;
    km.centroids = points.gather_rows(idx);
    km.assignment.assign(n, 0);
    auto assign = [&] {
        for (std::size_t r = 0; r < n; ++r) km.assignment[r] = nearest_centroid(km.centroids, points.row(r));
    };
    for (std::size_t it = 0; it < iterations; ++it) {
        assign();
        Tensor sums({m, d});
        std::vector<std::size_t> counts(m, 0);
        for (std::size_t r = 0; r < n; ++r) {
            const auto c = km.assignment[r];
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) sums(c, j) += points(r, j);
        }
        for (std::size_t c = 0; c < m; ++c)
            if (counts[c])
                for (std::size_t j = 0; j < d; ++j) km.centroids(c, j) = sums(c, j) / double(counts[c]);
    }
    assign();
    return km;
}

DiscreteJoint discretize(const Dataset& src, const Dataset& tgt, std::size_t m, std::size_t iterations,
                         std::uint64_t seed) {
    if (!src.labels || !tgt.labels) throw std::invalid_argument("discretize needs labels in both domains");
    if (src.dim() != tgt.dim()) throw std::invalid_argument("feature dimensions differ");
    const std::size_t ns = src.size(), nt = tgt.size(), d = src.dim();
    Tensor pooled({ns + nt, d});
    std::copy(src.features.data().begin(), src.features.data().end(), pooled.data().begin());
    std::copy(tgt.features.data().begin(), tgt.features.data().end(), pooled.data().begin() + ns * d);
    const KMeans km = kmeans(pooled, m, iterations, seed);

    const std::size_t k = std::max(src.num_classes(), tgt.num_classes());
    DiscreteJoint dj(km.centroids.rows(), k);
    const auto ys = src.class_indices(), yt = tgt.class_indices();
    for (std::size_t r = 0; r < ns; ++r) dj.at(Domain::Source, km.assignment[r], ys[r]) += 1.0 / double(ns);
    for (std::size_t r = 0; r < nt; ++r) dj.at(Domain::Target, km.assignment[ns + r], yt[r]) += 1.0 / double(nt);
    return dj;
}

// H-divergence proxy ---------------------------------------------------------

double h_divergence_proxy(const Tensor& src_feats, const Tensor& tgt_feats, std::uint64_t seed,
                          const HDivOptions& options) {
    const std::size_t ns = src_feats.rows(), nt = tgt_feats.rows(), d = src_feats.cols();
    if (ns < 4 || nt < 4) throw std::invalid_argument("H-divergence proxy needs at least 4 samples per domain");
    if (tgt_feats.cols() != d) throw std::invalid_argument("feature dimensions differ");

    // Standardise columns on the pooled data.
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (const Tensor* t : {&src_feats, &tgt_feats})
        for (std::size_t r = 0; r < t->rows(); ++r)
            for (std::size_t j = 0; j < d; ++j) mean[j] += (*t)(r, j);
    for (auto& m : mean) m /= double(ns + nt);
    for (const Tensor* t : {&src_feats, &tgt_feats})
        for (std::size_t r = 0; r < t->rows(); ++r)
            for (std::size_t j = 0; j < d; ++j) sd[j] += ((*t)(r, j) - mean[j]) * ((*t)(r, j) - mean[j]);
    for (auto& s : sd) {
        s = std::sqrt(s / double(ns + nt));
        if (s < 1e-12) s = 1.0;
    }
    auto scaled = [&](const Tensor& t) {
        Tensor out = t;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t j = 0; j < d; ++j) out(r, j) = (out(r, j) - mean[j]) / sd[j];
        return out;
    };
    const Tensor xs = scaled(src_feats), xt = scaled(tgt_feats);

    std::mt19937_64 rng(seed);
    auto split = [&](std::size_t n) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t half = n / 2;
        return std::pair{std::vector<std::size_t>(idx.begin(), idx.begin() + half),
                         std::vector<std::size_t>(idx.begin() + half, idx.end())};
    };
    const auto [src_train, src_hold] = split(ns);
    const auto [tgt_train, tgt_hold] = split(nt);

    Arch arch;
    arch.input_dim = d;
    arch.encoder_widths = options.hidden;
    arch.num_classes = 2;
    ParamSet params = init_params(arch, seed ^ 0xd1b54a32d192ed03ULL);
    OptimizerSpec opt;
    opt.kind = OptimizerKind::Adam;
    opt.learning_rate = options.learning_rate;
    opt.beta1 = 0.9;
    opt.weight_decay = 0.0;
    GroupOptimizer enc_opt(opt, params.encoder), head_opt(opt, params.class_head);

    const std::size_t b = options.batch_per_domain;
    std::vector<std::size_t> dom(2 * b);
    for (std::size_t i = 0; i < 2 * b; ++i) dom[i] = i < b ? 0 : 1;
    const Tensor y = one_hot(dom, 2);
    const GroupMask trainable{true, true, false};
    Tensor x({2 * b, d});
    for (std::size_t step = 0; step < options.steps; ++step) {
        for (std::size_t i = 0; i < 2 * b; ++i) {
            const bool source = i < b;
            const auto& pool = source ? src_train : tgt_train;
            const std::size_t row = pool[uniform_index(rng, 0, pool.size() - 1)];
            const auto from = (source ? xs : xt).row(row);
            std::copy(from.begin(), from.end(), x.row(i).begin());
        }
        ad::Tape tape;
        const BoundParams bound = bind(tape, params, trainable);
        const ad::Var logits = head_logits(bound.class_head, encode(bound, arch, tape.constant(x)));
        const ad::Var loss = mean_cross_entropy(logits, y);
        const ParamSet g = collect_gradients(tape.backward(loss), bound, params, trainable);
        enc_opt.update(params.encoder, g.encoder, opt.learning_rate);
        head_opt.update(params.class_head, g.class_head, opt.learning_rate);
    }

    auto error_rate = [&](const Tensor& feats, const std::vector<std::size_t>& rows, std::size_t label) {
        const Prediction p = class_predict(params, encode(params, feats.gather_rows(rows)));
        std::size_t wrong = 0;
        for (std::size_t r = 0; r < rows.size(); ++r)
            if (argmax(p.probs.row(r)) != label) ++wrong;
        return double(wrong) / double(rows.size());
    };
    const double err = 0.5 * (error_rate(xs, src_hold, 0) + error_rate(xt, tgt_hold, 1));
    return std::clamp(2.0 * (1.0 - 2.0 * err), 0.0, 2.0);
}

// Oracle suite -----------------------------------------------------------------

OracleRecord lemma1_oracle(std::uint64_t seed, std::size_t trials) {
    std::mt19937_64 rng(seed);
    Fnv1a digest;
    OracleRecord rec{"lemma1_projected_gradient", "", 0.0, 1e-6, true};
    for (std::size_t t = 0; t < trials; ++t) {
        const auto alpha = uniform_vector(rng, uniform_index(rng, 2, 8), 0.1, 10.0);
        digest.reals(alpha);
        const SimplexVec closed = lemma1_minimizer(alpha);
        const auto numeric = lemma1_projected_gradient(alpha, rng());
        if (!numeric.converged) rec.passed = false;
        for (std::size_t i = 0; i < alpha.size(); ++i)
            rec.value = std::max(rec.value, std::abs(closed[i] - numeric.solution[i]));
    }
    rec.inputs_digest = digest.hex();
    rec.passed = rec.passed && rec.value <= rec.tolerance;
    return rec;
}

OracleRecord lemma2_oracle(std::uint64_t seed, std::size_t trials) {
    const double step = 0.02;
    std::mt19937_64 rng(seed);
    Fnv1a digest;
    OracleRecord rec{"lemma2_grid_minimum", "", 0.0, 5e-3, true};
    for (std::size_t t = 0; t < trials; ++t) {
        // Entries at least 0.1 so the grid spacing is small against P.
        auto p = uniform_vector(rng, 3, 0.0, 1.0);
        normalize(p);
        for (auto& x : p) x = 0.1 + 0.7 * x;
        digest.reals(p);
        const GridMinimum g = lemma2_grid_search(p, step);
        double dist = 0;
        for (std::size_t i = 0; i < 3; ++i) dist = std::max(dist, std::abs(g.q[i] - p[i]));
        if (dist > step + 1e-12) rec.passed = false;
        rec.value = std::max(rec.value, std::abs(g.value - kLog4));
    }
    rec.inputs_digest = digest.hex();
    rec.passed = rec.passed && rec.value <= rec.tolerance;
    return rec;
}

OracleRecord prop1_oracle(std::uint64_t seed, std::size_t trials) {
    std::mt19937_64 rng(seed);
    Fnv1a digest;
    OracleRecord rec{"prop1_gradient_descent", "", 0.0, 1e-4, true};
    for (std::size_t t = 0; t < trials; ++t) {
        const DiscreteJoint dj = random_dense(uniform_index(rng, 2, 5), uniform_index(rng, 2, 3), rng());
        digest.reals(dj.source).reals(dj.target);
        const auto closed = prop1_optimal_predictor(dj);
        const TabularFit fit = prop1_gradient_descent(dj);
        for (std::size_t b = 0; b < dj.bins; ++b)
            for (std::size_t j = 0; j < closed[b].size(); ++j)
                rec.value = std::max(rec.value, std::abs(closed[b][j] - fit.probs[b][j]));
    }
    rec.inputs_digest = digest.hex();
    rec.passed = rec.value <= rec.tolerance;
    return rec;
}

OracleRecord theorem1_oracle(std::uint64_t seed, std::size_t instances) {
    std::mt19937_64 rng(seed);
    Fnv1a digest;
    OracleRecord rec{"theorem1_perturbation", "", std::numeric_limits<double>::infinity(), 0.0, true};
    std::vector<double> fractions;
    for (int i = 1; i <= 10; ++i) fractions.push_back(0.01 * i);
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t k = uniform_index(rng, 2, 3);
        const DiscreteJoint dj = random_aligned_disjoint(uniform_index(rng, std::max<std::size_t>(k, 3), 5), k, rng());
        digest.reals(dj.source).reals(dj.target);
        const Theorem1Result base = theorem1_check(dj);
        if (!base.aligned || !base.disjoint || std::abs(base.encoder_objective - 2 * std::log(2.0)) > 1e-12)
            rec.passed = false;
        const auto grid = perturbation_grid(dj, fractions);
        if (grid.size() < 50) rec.passed = false;
        for (const auto& p : grid)
            rec.value = std::min(rec.value, encoder_objective(apply_perturbation(dj, p)) - base.encoder_objective);
    }
    rec.inputs_digest = digest.hex();
    rec.passed = rec.passed && rec.value > 0.0;
    return rec;
}

std::vector<OracleRecord> run_oracle_suite(std::uint64_t seed) {
    return {lemma1_oracle(seed), lemma2_oracle(seed + 1), prop1_oracle(seed + 2), theorem1_oracle(seed + 3)};
}

}  // namespace rca::theory
