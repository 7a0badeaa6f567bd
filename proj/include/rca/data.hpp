#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rca/tensor.hpp"

namespace rca {

enum class Domain { Source, Target };

const char* domain_name(Domain d);

/// Feature matrix with optional one-hot labels.
struct Dataset {
    Tensor features;               // n x d
    std::optional<Tensor> labels;  // n x K, one-hot rows
    Domain domain = Domain::Source;
    std::string name;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    bool labeled() const { return labels.has_value(); }
    std::size_t num_classes() const;
    /// Class index per row; throws if unlabeled.
    std::vector<std::size_t> class_indices() const;
    Dataset subset(std::span<const std::size_t> rows) const;
    Dataset without_labels() const;
    void validate() const;
};

Tensor one_hot(std::span<const std::size_t> classes, std::size_t num_classes);

/// Synthetic covariate shift applied by apply_shift, in this order: per-axis
/// scale, rotation about the origin, translation, additive Gaussian noise,
/// then the label permutation (class c becomes permutation[c]).
struct ShiftSpec {
    double rotation = 0.0;             // radians, d = 2 only
    std::vector<double> translation;   // empty or length d
    std::vector<double> scale;         // empty or length d, nonzero entries
    std::vector<std::size_t> permutation;  // empty or a bijection of {0..K-1}
    double noise_std = 0.0;

    void validate(std::size_t dim, std::size_t num_classes) const;
};

/// Two interleaved half circles: class 0 on the upper unit half circle,
/// class 1 on the lower one shifted to (1, 0.5). Class 0 gets ceil(n/2) rows.
Dataset gen_moons(std::size_t n, double noise_std, std::uint64_t seed);

/// K isotropic Gaussian clusters whose means form a regular simplex with
/// pairwise distance `separation`; needs dim >= K - 1.
Dataset gen_blobs(std::size_t n, std::size_t num_classes, std::size_t dim, double separation,
                  std::uint64_t seed, double noise_std = 1.0);

Dataset apply_shift(const Dataset& ds, const ShiftSpec& spec, std::uint64_t seed);

/// Per-row zero mean and unit (population) variance; rows with variance
/// below 1e-12 become all zeros.
Dataset standardize(const Dataset& ds);

/// Median over rows of the distance to the nearest other row.
double median_nn_distance(const Tensor& features);

/// Index stream for the two-mini-batch rule: independent shuffles per
/// domain, a fresh shuffle every epoch, and each side cycles on its own.
/// Every batch holds distinct rows whenever the dataset is at least as large
/// as the batch.
class BatchStream {
public:
    BatchStream(std::size_t source_rows, std::size_t target_rows, std::size_t batch_size, std::uint64_t seed);

    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> next();

private:
    class Side {
    public:
        Side(std::size_t rows, std::mt19937_64 rng);
        std::vector<std::size_t> take(std::size_t count);

    private:
        void reshuffle(std::span<const std::size_t> pending);
        std::size_t rows_;
        std::mt19937_64 rng_;
        std::vector<std::size_t> order_;
        std::size_t cursor_ = 0;
    };

    std::size_t batch_size_;
    Side source_;
    Side target_;
};

/// Each row is d numbers, then the integer class index when `has_labels`.
Dataset load_csv(const std::filesystem::path& path, bool has_labels, std::size_t num_classes,
                 Domain domain = Domain::Source);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace rca
